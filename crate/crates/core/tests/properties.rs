//! Property checks for the numerical invariants of each module.

use looped_icl::attention::{attn_closed_form, default_params};
use looped_icl::gd_oracle::{gradient, loss, run_gd, RegressionProblem};
use looped_icl::looped_tf::{loop_step, run_loops, LoopConfig};
use looped_icl::spectral::{
    condition_number, least_squares, sym_eig_extremes, RealMatrix, RealVector,
};
use looped_icl::task::{
    assemble_prompt, make_task_seeded, sample_gaussian_matrix, sample_unit_sphere,
};
use looped_icl::verify::{
    check_bound, check_equivalence, compare_attention_paths, EQUIVALENCE_RTOL,
};
use looped_icl::{PromptState, RandomSource};
use proptest::prelude::*;

fn gaussian_vector(dim: usize, rng: &mut RandomSource) -> RealVector {
    RealVector::new((0..dim).map(|_| rng.standard_normal()).collect()).unwrap()
}

fn random_psd(d: usize, seed: u64) -> RealMatrix {
    let mut rng = RandomSource::new(seed);
    sample_gaussian_matrix(d + 3, d, &mut rng).unwrap().gram()
}

/// Eigenvalues of a symmetric 2x2 or 3x3 matrix from its characteristic polynomial.
fn char_poly_eigenvalues(a: &RealMatrix) -> Vec<f64> {
    let mut ev = match a.rows() {
        1 => vec![a[(0, 0)]],
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            vec![tr / 2.0 - disc, tr / 2.0 + disc]
        }
        3 => {
            // trigonometric solution of the depressed cubic
            let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
            let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
            let p2 = (a[(0, 0)] - q).powi(2)
                + (a[(1, 1)] - q).powi(2)
                + (a[(2, 2)] - q).powi(2)
                + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let mut b = a.clone();
            for i in 0..3 {
                b[(i, i)] -= q;
            }
            let b = b.scale(1.0 / p);
            let det_b = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
                - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
                + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
            let phi = (det_b / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            vec![e1, 3.0 * q - e1 - e3, e3]
        }
        _ => unreachable!(),
    };
    ev.sort_by(f64::total_cmp);
    ev
}

fn nalgebra_extremes(a: &RealMatrix) -> (f64, f64) {
    let m = nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let ev = nalgebra::SymmetricEigen::new(m).eigenvalues;
    (ev.min(), ev.max())
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rayleigh_quotient_is_sandwiched(d in 1usize..10, seed in any::<u64>()) {
        let a = random_psd(d, seed);
        let (lo, hi) = sym_eig_extremes(&a).unwrap();
        let mut rng = RandomSource::new(seed ^ 0xabcd);
        let v = sample_unit_sphere(d, &mut rng).unwrap();
        let rq = v.dot(&a.mul_vec(&v).unwrap()).unwrap();
        prop_assert!(lo - 1e-9 <= rq && rq <= hi + 1e-9);
    }

    #[test]
    fn kappa_is_scale_invariant(d in 1usize..6, extra in 1usize..20, seed in any::<u64>(), c in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64]) {
        let x = sample_gaussian_matrix(d + extra, d, &mut RandomSource::new(seed)).unwrap();
        let k1 = condition_number(&x).unwrap().condition_number;
        let k2 = condition_number(&x.scale(c)).unwrap().condition_number;
        prop_assert!(k1 >= 1.0);
        prop_assert!(rel_close(k1, k2, 1e-9), "{} vs {}", k1, k2);
    }

    #[test]
    fn extremes_match_characteristic_polynomial(d in 1usize..4, seed in any::<u64>()) {
        let a = random_psd(d, seed);
        let (lo, hi) = sym_eig_extremes(&a).unwrap();
        let ev = char_poly_eigenvalues(&a);
        prop_assert!(rel_close(lo, ev[0], 1e-9), "{} vs {}", lo, ev[0]);
        prop_assert!(rel_close(hi, ev[ev.len() - 1], 1e-9));
    }

    #[test]
    fn extremes_match_reference_eigensolver(d in 1usize..17, seed in any::<u64>()) {
        let a = random_psd(d, seed);
        let (lo, hi) = sym_eig_extremes(&a).unwrap();
        let (rlo, rhi) = nalgebra_extremes(&a);
        prop_assert!(rel_close(hi, rhi, 1e-9));
        // lambda_min carries absolute error ~eps * lambda_max
        prop_assert!((lo - rlo).abs() <= 1e-9 * rlo.abs().max(1e-3 * rhi));
    }

    #[test]
    fn attention_closed_form_is_linear(n in 1usize..12, d in 1usize..6, seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let x = sample_gaussian_matrix(n, d, &mut rng).unwrap();
        let y = gaussian_vector(n, &mut rng);
        let (q1, q2) = (gaussian_vector(d, &mut rng), gaussian_vector(d, &mut rng));
        let (a1, a2) = (rng.standard_normal(), rng.standard_normal());
        let joint = attn_closed_form(&x, &y, &q1.add(&q2).unwrap(), a1 + a2).unwrap();
        let split = attn_closed_form(&x, &y, &q1, a1).unwrap().add(&attn_closed_form(&x, &y, &q2, a2).unwrap()).unwrap();
        prop_assert!(joint.sub(&split).unwrap().norm_inf() <= 1e-12 * joint.norm_inf().max(1.0));
    }

    #[test]
    fn loop_never_touches_context(n in 2usize..20, d in 1usize..5, seed in any::<u64>(), steps in 1usize..15) {
        let mut rng = RandomSource::new(seed);
        let x = sample_gaussian_matrix(n, d, &mut rng).unwrap();
        let y = gaussian_vector(n, &mut rng);
        let q = gaussian_vector(d, &mut rng);
        let z0 = PromptState::from_blocks(&x, &y, &q, 0.5 + rng.uniform()).unwrap();
        let params = default_params(n, d);
        let eta = 0.01 / (1.0 + x.gram().as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let mut z = z0.clone();
        for _ in 0..steps {
            z = loop_step(&z, eta, &params).unwrap();
        }
        for i in 0..n {
            let before: Vec<u64> = z0.matrix().row(i).iter().map(|v| v.to_bits()).collect();
            let after: Vec<u64> = z.matrix().row(i).iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(before, after);
        }
        prop_assert_eq!(z.alpha().to_bits(), z0.alpha().to_bits());
    }

    #[test]
    fn prompt_round_trip(n in 2usize..20, d in 1usize..6, seed in any::<u64>()) {
        prop_assume!(n > d);
        let task = make_task_seeded(n, d, 1.0, seed).unwrap();
        let z = assemble_prompt(&task);
        prop_assert_eq!(&z.x_block(), task.x());
        prop_assert_eq!(&z.labels(), task.y());
        prop_assert_eq!(&z.query(), task.q0());
        prop_assert_eq!(task.y(), &task.x().mul_vec(task.theta_star()).unwrap());
    }
}

#[test]
fn least_squares_recovers_target() {
    for seed in 0..100u64 {
        let task =
            make_task_seeded(6 + (seed as usize % 40), 1 + (seed as usize % 5), 1.0, seed).unwrap();
        let theta = least_squares(task.x(), task.y()).unwrap();
        let err = theta.sub(task.theta_star()).unwrap().norm2();
        assert!(
            err <= 1e-8 * task.theta_star().norm2(),
            "seed {seed}: {err}"
        );
        let p = RegressionProblem::from_task(&task).unwrap();
        let resid =
            gradient(&p, &theta).unwrap().norm2() / task.x().tr_mul_vec(task.y()).unwrap().norm2();
        assert!(resid <= 1e-10);
    }
}

#[test]
fn gaussian_tasks_are_nonsingular() {
    for d in [1, 2, 4, 8] {
        let failures = (0..1000u64)
            .filter(|&seed| {
                condition_number(make_task_seeded(2 * d, d, 1.0, seed).unwrap().x()).is_err()
            })
            .count();
        assert!(failures <= 1, "d = {d}: {failures} singular draws");
    }
}

#[test]
fn mean_kappa_for_n128_d4() {
    let mean = (0..100u64)
        .map(|seed| {
            condition_number(make_task_seeded(128, 4, 1.0, seed).unwrap().x())
                .unwrap()
                .condition_number
        })
        .sum::<f64>()
        / 100.0;
    assert!((1.1..=2.2).contains(&mean), "mean kappa {mean}");
}

#[test]
fn attention_paths_agree_on_random_prompts() {
    let mut rng = RandomSource::new(314);
    for _ in 0..300 {
        let n = 1 + (rng.next_u64() % 32) as usize;
        let d = 1 + (rng.next_u64() % 8) as usize;
        let x = sample_gaussian_matrix(n, d, &mut rng).unwrap();
        let z = PromptState::from_blocks(
            &x,
            &gaussian_vector(n, &mut rng),
            &gaussian_vector(d, &mut rng),
            rng.standard_normal(),
        )
        .unwrap();
        let (gap, masked) = compare_attention_paths(&z).unwrap();
        assert!(gap <= 1e-12, "gap {gap}");
        assert_eq!(masked, 0);
    }
}

#[test]
fn finite_difference_gradient() {
    let h = 1e-6;
    for seed in 0..100u64 {
        let task =
            make_task_seeded(5 + (seed as usize % 20), 1 + (seed as usize % 4), 1.0, seed).unwrap();
        let p = RegressionProblem::from_task(&task).unwrap();
        let mut rng = RandomSource::new(seed + 1000);
        let theta = gaussian_vector(task.d(), &mut rng);
        let g = gradient(&p, &theta).unwrap();
        let fd: Vec<f64> = (0..task.d())
            .map(|k| {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[k] += h;
                minus[k] -= h;
                (loss(&p, &plus).unwrap() - loss(&p, &minus).unwrap()) / (2.0 * h)
            })
            .collect();
        let fd = RealVector::new(fd).unwrap();
        let rel = fd.sub(&g).unwrap().norm2() / g.norm2().max(1.0);
        assert!(rel <= 1e-5, "seed {seed}: relative error {rel}");
    }
}

#[test]
fn exponential_majorizes_geometric_decay() {
    for kappa in [1.01f64, 2.0, 10.0, 100.0] {
        for t in 1..=500 {
            let t = t as f64;
            assert!(
                (1.0 - 1.0 / kappa).powf(t) <= (-t / kappa).exp(),
                "kappa {kappa}, t {t}"
            );
        }
    }
}

#[test]
fn transformer_tracks_gd_under_mixed_schedules() {
    let mut rng = RandomSource::new(5);
    for seed in 0..50u64 {
        let task = make_task_seeded(12, 3, 0.3 + seed as f64 * 0.1, seed).unwrap();
        let l = RegressionProblem::from_task(&task).unwrap().smoothness();
        let steps: Vec<f64> = (0..60).map(|_| (0.05 + 1.85 * rng.uniform()) / l).collect();
        for cfg in [
            LoopConfig::explicit(steps.clone()),
            LoopConfig::constant(60, 0.7 / l),
            LoopConfig::inverse_smoothness(60),
        ] {
            assert!(
                check_equivalence(&task, &cfg, EQUIVALENCE_RTOL)
                    .unwrap()
                    .passed
            );
        }
    }
}

#[test]
fn nonzero_initial_query_is_tracked() {
    let task = make_task_seeded(20, 4, -1.5, 11)
        .unwrap()
        .with_q0(RealVector::new(vec![0.3, -0.2, 1.0, 0.5]).unwrap())
        .unwrap();
    assert!(
        check_equivalence(
            &task,
            &LoopConfig::inverse_smoothness(100),
            EQUIVALENCE_RTOL
        )
        .unwrap()
        .passed
    );
}

#[test]
fn parameter_error_is_monotone_at_inverse_smoothness() {
    for seed in 0..100u64 {
        let task = make_task_seeded(8 + (seed as usize % 60), 4, 1.0, seed).unwrap();
        let p = RegressionProblem::from_task(&task).unwrap();
        let traj = run_gd(
            &p,
            &RealVector::zeros(4),
            &LoopConfig::inverse_smoothness(150),
        )
        .unwrap();
        for w in traj.param_errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

#[test]
fn bound_dominance_every_step() {
    for seed in 0..100u64 {
        let task = make_task_seeded(
            6 + (seed as usize % 100),
            1 + (seed as usize % 5),
            1.0,
            seed,
        )
        .unwrap();
        let r = check_bound(&task, 200).unwrap();
        assert!(r.passed, "seed {seed}: min margin {}", r.min_margin);
    }
}

#[test]
fn trajectory_lengths() {
    let task = make_task_seeded(9, 2, 1.0, 1).unwrap();
    let traj = run_loops(&task, &LoopConfig::inverse_smoothness(17)).unwrap();
    assert_eq!(traj.q_states.len(), 18);
    assert_eq!(traj.per_step_errors.len(), 18);
    assert_eq!(&traj.q_states[0], task.q0());
}

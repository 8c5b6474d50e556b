//! Versioned JSON text formats for tasks and verification reports.
//!
//! Task files carry the fields `n`, `d`, `alpha`, `seed`, `X` (row-major), `y`,
//! `theta_star` and `q0`. Floats are written as the shortest decimal that parses
//! back to the same `f64`, so a file reproduces the task bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{RealMatrix, RealVector};
use crate::task::TaskInstance;

pub const TASK_FORMAT: &str = "looped-icl/task";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    format: String,
    version: u32,
    n: usize,
    d: usize,
    alpha: f64,
    seed: u64,
    #[serde(rename = "X")]
    x: Vec<f64>,
    y: Vec<f64>,
    theta_star: Vec<f64>,
    #[serde(default)]
    q0: Option<Vec<f64>>,
}

pub fn task_to_json(task: &TaskInstance) -> String {
    let file = TaskFile {
        format: TASK_FORMAT.to_string(),
        version: FORMAT_VERSION,
        n: task.n(),
        d: task.d(),
        alpha: task.alpha(),
        seed: task.seed(),
        x: task.x().as_slice().to_vec(),
        y: task.y().as_slice().to_vec(),
        theta_star: task.theta_star().as_slice().to_vec(),
        q0: Some(task.q0().as_slice().to_vec()),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("task file serializes");
    text.push('\n');
    text
}

pub fn task_from_json(text: &str) -> Result<TaskInstance> {
    let file: TaskFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if file.format != TASK_FORMAT {
        return Err(Error::Format(format!(
            "expected format {TASK_FORMAT:?}, found {:?}",
            file.format
        )));
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported task format version {}",
            file.version
        )));
    }
    let malformed = |e: Error| Error::Format(e.to_string());
    let x = RealMatrix::new(file.n, file.d, file.x).map_err(malformed)?;
    let y = RealVector::new(file.y).map_err(malformed)?;
    let theta_star = RealVector::new(file.theta_star).map_err(malformed)?;
    let task = TaskInstance::from_parts_with_labels(x, y, theta_star, file.alpha, file.seed)
        .map_err(malformed)?;
    match file.q0 {
        Some(q0) => task
            .with_q0(RealVector::new(q0).map_err(malformed)?)
            .map_err(malformed),
        None => Ok(task),
    }
}

/// Wraps a report as `{"format": "looped-icl/<kind>", "version": 1, "report": ...}`.
pub fn report_to_json<T: Serialize>(kind: &str, report: &T) -> String {
    let value = serde_json::json!({
        "format": format!("looped-icl/{kind}"),
        "version": FORMAT_VERSION,
        "report": report,
    });
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::looped_tf::LoopConfig;
    use crate::task::make_task_seeded;
    use crate::verify::{check_equivalence, EQUIVALENCE_RTOL};

    #[test]
    fn task_round_trip_is_bit_exact() {
        let task = make_task_seeded(8, 2, 1.0, 42).unwrap();
        let text = task_to_json(&task);
        assert!(text.contains("\"X\""));
        assert_eq!(task_from_json(&text).unwrap(), task);
        assert_eq!(task_to_json(&task_from_json(&text).unwrap()), text);
    }

    #[test]
    fn rejects_malformed_files() {
        let task = make_task_seeded(5, 2, 1.0, 1).unwrap();
        let text = task_to_json(&task);
        for bad in [
            "not json".to_string(),
            text.replace("looped-icl/task", "other"),
            text.replace("\"version\": 1", "\"version\": 9"),
            text.replace("\"n\": 5", "\"n\": 4"),
            text.replace("\"alpha\": 1.0", "\"alpha\": 0.0"),
        ] {
            assert!(
                matches!(task_from_json(&bad), Err(Error::Format(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn missing_q0_defaults_to_zero() {
        let task = make_task_seeded(5, 2, 1.0, 1).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&task_to_json(&task)).unwrap();
        value.as_object_mut().unwrap().remove("q0");
        assert_eq!(task_from_json(&value.to_string()).unwrap(), task);
    }

    #[test]
    fn report_envelope() {
        let task = make_task_seeded(6, 2, 1.0, 3).unwrap();
        let r =
            check_equivalence(&task, &LoopConfig::inverse_smoothness(4), EQUIVALENCE_RTOL).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&report_to_json("equivalence", &r)).unwrap();
        assert_eq!(value["format"], "looped-icl/equivalence");
        assert_eq!(value["report"]["instance_seed"], 3);
    }
}

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lotsizing::instance::InstanceError;
use lotsizing::scenario::ScenarioError;
use lotsizing::solver::SolverError;
use serde::Serialize;
use serde_json::{json, Value};

/// Argument list and tool version, embedded in every output.
pub fn command_record() -> Value {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    json!({
        "tool": "lotsize",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
    })
}

/// Writes `{command, <body fields>, timing}` as pretty JSON.
pub fn write_json(path: &Path, body: Value, timing: Value) -> Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert("command".into(), command_record());
    if let Value::Object(fields) = body {
        doc.extend(fields);
    } else {
        doc.insert("result".into(), body);
    }
    doc.insert("timing".into(), timing);
    write_text(path, &(serde_json::to_string_pretty(&Value::Object(doc))? + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    Ok(serde_json::to_value(value)?)
}

pub fn print_error(kind: &str, message: &str, hint: &str) {
    let record = json!({
        "error": {
            "kind": kind,
            "message": message,
            "hint": hint,
        },
        "command": command_record(),
    });
    eprintln!("{}", serde_json::to_string_pretty(&record).unwrap_or_else(|_| message.to_string()));
}

/// The error chain joined by `: `, skipping causes the previous message
/// already spells out.
pub fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if text.contains(&part) {
            continue;
        }
        if !text.is_empty() {
            text.push_str(": ");
        }
        text.push_str(&part);
    }
    text
}

/// Error category and remediation hint.
pub fn classify(err: &anyhow::Error) -> (&'static str, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<InstanceError>() {
            return match e {
                InstanceError::Io { .. } => ("missing_file", "check the --instance path"),
                InstanceError::Version { .. } => ("schema_mismatch", "regenerate the instance with this version"),
                InstanceError::Invalid(_) => ("invalid_instance", "fix the listed fields and retry"),
                _ => ("instance", "check the instance file against the documented schema"),
            };
        }
        if let Some(e) = cause.downcast_ref::<ScenarioError>() {
            return match e {
                ScenarioError::Io { .. } => ("missing_file", "check the --tree path or run `lotsize tree build`"),
                ScenarioError::Format { .. } => ("schema_mismatch", "rebuild the tree with `lotsize tree build`"),
                _ => ("scenario", "check --branching, --periods and --paths"),
            };
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            return match e {
                SolverError::External(_) | SolverError::Config(_) => {
                    ("solver_config", "set LOTSIZE_EXTERNAL_CMD or use --backend builtin")
                }
                SolverError::QuadraticUnsupported => ("solver_config", "use the linearized penalty or an external QP solver"),
                _ => ("solver", "inspect the model with --export-lp"),
            };
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            if e.kind() == std::io::ErrorKind::NotFound {
                return ("missing_file", "check the input paths");
            }
            return ("io", "check file permissions and free space");
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ("schema_mismatch", "the input file is not in the expected JSON layout");
        }
    }
    ("failed", "rerun with corrected inputs")
}

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version, command, seed and resolved configuration of a run.
pub struct Header {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
}

impl Header {
    pub fn new(command: &'static str, seed: Option<u64>, config: &impl Serialize) -> Self {
        Self {
            command,
            seed,
            config: serde_json::to_value(config).expect("configs serialize"),
        }
    }

    pub fn csv_lines(&self) -> String {
        let mut out = format!("# repcause {VERSION}\n# command: {}\n", self.command);
        if let Some(seed) = self.seed {
            out.push_str(&format!("# seed: {seed}\n"));
        }
        out.push_str(&format!("# config: {}\n", self.config));
        out
    }

    /// JSON document with the header fields next to `result`.
    pub fn wrap(&self, result: impl Serialize) -> String {
        let doc = json!({
            "repcause": VERSION,
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("results serialize");
        text.push('\n');
        text
    }
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(format!("writing standard output: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_is_commented() {
        let h = Header::new("rate", Some(4), &json!({"a": 1}));
        let text = h.csv_lines();
        assert!(text.lines().all(|l| l.starts_with("# ")));
        assert!(text.contains("# seed: 4\n"));
        assert!(text.contains(r#"# config: {"a":1}"#));
    }

    #[test]
    fn json_wrap_carries_header() {
        let h = Header::new("id", None, &json!({"k": 5}));
        let doc: Value = serde_json::from_str(&h.wrap(json!({"estimate": 2.0}))).unwrap();
        assert_eq!(doc["command"], "id");
        assert_eq!(doc["config"]["k"], 5);
        assert_eq!(doc["result"]["estimate"], 2.0);
        assert!(doc["seed"].is_null());
    }
}

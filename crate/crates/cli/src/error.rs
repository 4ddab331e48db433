use std::path::{Path, PathBuf};

use refcurve::{Error, ErrorClass};
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, source: std::io::Error },
    /// Argument problems: `(code, message)`.
    Usage(String, String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.class() == ErrorClass::Numerical => 3,
            _ => 2,
        }
    }

    /// Single-line JSON error record.
    pub fn to_json(&self) -> String {
        let value = match self {
            CliError::Core(e) => {
                let class = match e.class() {
                    ErrorClass::Input => "input",
                    ErrorClass::Numerical => "numerical",
                };
                json!({ "error": e.code(), "class": class, "message": e.to_string() })
            }
            CliError::Io { path, source } => json!({
                "error": "io",
                "class": "input",
                "message": format!("{}: {source}", path.display()),
            }),
            CliError::Usage(code, message) => {
                let text: Vec<&str> = message
                    .lines()
                    .map(str::trim)
                    .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                    .filter(|l| !l.is_empty())
                    .collect();
                let text = text.join(" ");
                json!({ "error": "usage", "kind": code, "class": "input", "message": text.trim_start_matches("error: ") })
            }
        };
        value.to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Core(Error::Domain("x".into())).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Divergence { cycle: 3, parameter: "M" }).exit_code(), 3);
        assert_eq!(CliError::Core(Error::SelectionFailed { failures: vec!["cell".into()] }).exit_code(), 3);
        assert_eq!(CliError::Usage("k".into(), "m".into()).exit_code(), 2);
    }

    #[test]
    fn json_is_one_line() {
        let e = CliError::Core(Error::Numerical { message: "singular\nsystem".into(), condition: 1e18 });
        let text = e.to_json();
        assert!(!text.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["class"], "numerical");
        assert_eq!(v["error"], "numerical_failure");
    }
}

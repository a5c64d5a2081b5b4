use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<fairmtl::Error> for Failure {
    fn from(err: fairmtl::Error) -> Self {
        if err.is_numeric() {
            Failure::numeric(err.to_string())
        } else {
            Failure::input(err.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::input(err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure::input(err.to_string())
    }
}

/// Byte offset of serde_json's 1-based line and column within `text`.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_failure(path: &Path, text: &str, err: &serde_json::Error) -> Failure {
    Failure::input(format!(
        "{}: JSON parse error at byte {}: {err}",
        path.display(),
        byte_offset(text, err.line(), err.column())
    ))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_failure(path, &text, &e))
}

/// Runs a library loader, re-describing JSON errors with their byte offset.
pub fn load_with<T>(path: &Path, load: impl FnOnce(&Path) -> fairmtl::Result<T>) -> CliResult<T> {
    if !path.exists() {
        return Err(Failure::input(format!("{}: no such file", path.display())));
    }
    load(path).map_err(|err| match err {
        fairmtl::Error::Json(json) => match fs::read_to_string(path) {
            Ok(text) => parse_failure(path, &text, &json),
            Err(_) => Failure::input(json.to_string()),
        },
        other => Failure::from(other).context(path),
    })
}

impl Failure {
    pub fn context(self, path: &Path) -> Self {
        Self {
            message: format!("{}: {}", path.display(), self.message),
            ..self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_count_bytes_across_lines() {
        let text = "{\n  \"a\": 1,\n  oops\n}";
        let err = serde_json::from_str::<serde_json::Value>(text).unwrap_err();
        let offset = byte_offset(text, err.line(), err.column());
        assert_eq!(&text[offset..offset + 1], "o");
    }

    #[test]
    fn numeric_errors_map_to_exit_three() {
        let f = Failure::from(fairmtl::Error::NonFinite("x".into()));
        assert_eq!(f.code, EXIT_NUMERIC);
        let f = Failure::from(fairmtl::Error::Empty("x".into()));
        assert_eq!(f.code, EXIT_INPUT);
    }
}

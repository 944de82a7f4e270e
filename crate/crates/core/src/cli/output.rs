//! CSV formatting and run manifests.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Significant digits of every number written to CSV.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` rounded to [`SIG_DIGITS`] significant digits in its shortest
/// decimal form.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", SIG_DIGITS - 1, x).parse().expect("float round trip");
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Quotes a field if it holds a comma, quote or newline.
pub fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// A CSV table held in memory until the run finishes.
#[derive(Debug, Default)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut t = Table::default();
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let line: Vec<String> = fields.into_iter().map(|f| quote(&f)).collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Provenance of one invocation.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command_line: String,
    pub model_sha256: String,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into());
        format!(
            "command_line = {}\nmodel_sha256 = {}\nseed = {}\nversion = {}\nwall_time_s = {:.3}\n",
            self.command_line, self.model_sha256, seed, self.version, self.wall_time_s
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes the table to `output` (stdout when `None`) and the manifest next
/// to it, or to stderr when the table went to stdout.
pub fn emit(
    table: &Table,
    output: Option<&Path>,
    mut manifest: RunManifest,
    started: Instant,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, table.as_str())?;
            manifest.wall_time_s = started.elapsed().as_secs_f64();
            std::fs::write(manifest_path(path), manifest.render())?;
        }
        None => {
            stdout.write_all(table.as_str().as_bytes())?;
            manifest.wall_time_s = started.elapsed().as_secs_f64();
            for line in manifest.render().lines() {
                writeln!(stderr, "# {line}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_twelve_digits() {
        assert_eq!(fmt_num(0.621_410_112_345_678_9), "0.621410112346");
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1000.0), "1000");
        assert_eq!(fmt_num(-2.5e-9), "-2.5e-9");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(0.0), "0");
    }

    #[test]
    fn fields_are_quoted() {
        let mut t = Table::new(&["a", "b"]);
        t.row(["1".to_string(), "x, y".to_string()]);
        assert_eq!(t.as_str(), "a,b\n1,\"x, y\"\n");
    }

    #[test]
    fn digest_is_hex() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

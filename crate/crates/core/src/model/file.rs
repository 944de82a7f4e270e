//! TOML model files.
//!
//! ```toml
//! source_probs = ["1/2", "1/2"]
//! observation_channel = [
//!     ["9/10", 0, "1/10"],
//!     [0, "9/10", "1/10"],
//! ]
//! distortion = [[0, 1], [1, 0]]
//!
//! [alphabets]
//! source = ["0", "1"]
//! observation = ["0", "1", "?"]
//! reproduction = ["0", "1"]
//! ```
//!
//! Matrices are row-major with rows indexed by the source symbol. Entries
//! may be integers, floats, or strings holding `"p/q"` or an exact decimal;
//! distortion entries may also be `"inf"`. The `[alphabets]` table is
//! optional and defaults to numbered symbols.

use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use super::{Alphabets, Channel, DistortionMatrix, Distribution, NoisySourceModel};
use crate::error::{Error, Result};
use crate::numerics::{ExtRational, Rational};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    source_probs: Spanned<Vec<Entry>>,
    observation_channel: Vec<Spanned<Vec<Entry>>>,
    distortion: Vec<Spanned<Vec<Entry>>>,
    alphabets: Option<AlphabetsFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphabetsFile {
    source: Vec<String>,
    observation: Vec<String>,
    reproduction: Vec<String>,
}

#[derive(Deserialize, Clone, Debug)]
#[serde(untagged)]
enum Entry {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Entry {
    fn to_ext(&self) -> std::result::Result<ExtRational, String> {
        match self {
            Entry::Int(i) => Ok(ExtRational::Finite(Rational::from_integer(*i as i128))),
            Entry::Float(f) if *f == f64::INFINITY => Ok(ExtRational::Infinite),
            Entry::Float(f) => Rational::from_f64(*f).map(ExtRational::Finite).map_err(|e| e.to_string()),
            Entry::Text(s) => s.parse::<ExtRational>().map_err(|e| e.to_string()),
        }
    }

    fn to_prob(&self) -> std::result::Result<Rational, String> {
        match self.to_ext()? {
            ExtRational::Finite(r) => Ok(r),
            ExtRational::Infinite => Err("probability cannot be infinite".into()),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Reads and validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<NoisySourceModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Parses a model from TOML text.
pub fn parse_model(text: &str) -> Result<NoisySourceModel> {
    let file: ModelFile = toml::from_str(text).map_err(|e| Error::Parse {
        field: "model".into(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;

    let mut problems = Vec::new();

    let parse_row =
        |field: &str, idx: Option<usize>, row: &Spanned<Vec<Entry>>, problems: &mut Vec<String>| -> Vec<Rational> {
            let line = line_of(text, row.span().start);
            let label = match idx {
                Some(i) => format!("{field} row {i} (line {line})"),
                None => format!("{field} (line {line})"),
            };
            let mut out = Vec::new();
            for (j, e) in row.get_ref().iter().enumerate() {
                match e.to_prob() {
                    Ok(r) if r.is_negative() => problems.push(format!("{label} entry {j} is negative")),
                    Ok(r) => out.push(r),
                    Err(msg) => problems.push(format!("{label} entry {j}: {msg}")),
                }
            }
            if out.len() == row.get_ref().len() {
                let sum = out.iter().fold(Rational::zero(), |a, b| a + *b);
                if (sum.to_f64() - 1.0).abs() > 1e-12 {
                    problems.push(format!("{label} sums to {}", sum.to_f64()));
                }
            }
            out
        };

    let source = parse_row("source_probs", None, &file.source_probs, &mut problems);
    let channel: Vec<Vec<Rational>> = file
        .observation_channel
        .iter()
        .enumerate()
        .map(|(i, r)| parse_row("observation_channel", Some(i), r, &mut problems))
        .collect();

    let mut distortion = Vec::new();
    for (i, row) in file.distortion.iter().enumerate() {
        let line = line_of(text, row.span().start);
        let mut out = Vec::new();
        for (j, e) in row.get_ref().iter().enumerate() {
            match e.to_ext() {
                Ok(v) => out.push(v),
                Err(msg) => problems.push(format!("distortion row {i} (line {line}) entry {j}: {msg}")),
            }
        }
        distortion.push(out);
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let to_f = |v: &[Rational]| v.iter().map(|r| r.to_f64()).collect::<Vec<_>>();
    let source = Distribution::new(to_f(&source)).or_else(|_| Distribution::from_weights(&to_f(&source)))?;
    let channel = Channel::new(channel.iter().map(|r| to_f(r)).collect())?;
    let distortion = DistortionMatrix::new(distortion)?;
    let alphabets = match file.alphabets {
        Some(a) => Alphabets { source: a.source, observation: a.observation, reproduction: a.reproduction },
        None => Alphabets::numbered(source.len(), channel.n_outputs(), distortion.n_cols()),
    };
    NoisySourceModel::new(source, channel, distortion, alphabets)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BES: &str = r#"
source_probs = ["1/2", "1/2"]
observation_channel = [
    ["9/10", 0, "1/10"],
    [0, 0.9, 0.1],
]
distortion = [[0, 1], [1, "inf"]]

[alphabets]
source = ["0", "1"]
observation = ["0", "1", "?"]
reproduction = ["0", "1"]
"#;

    #[test]
    fn parses_mixed_entries() {
        let m = parse_model(BES).unwrap();
        assert_eq!(m.observation.get(1, 1), 0.9);
        assert_eq!(m.distortion.exact(1, 1), ExtRational::Infinite);
        assert_eq!(m.alphabets.observation[2], "?");
    }

    #[test]
    fn bad_row_sum_names_row_and_line() {
        let text = BES.replace("[0, 0.9, 0.1]", "[0, 0.8, 0.1]");
        let err = parse_model(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Validation(_)));
        assert!(msg.contains("observation_channel row 1"), "{msg}");
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("0.9"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = parse_model("source_probs = [1\nobservation_channel = ").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(_), .. }), "{err:?}");
    }

    #[test]
    fn unparsable_entry_is_reported() {
        let text = BES.replace("\"1/10\"", "\"one tenth\"");
        let msg = parse_model(&text).unwrap_err().to_string();
        assert!(msg.contains("observation_channel row 0"), "{msg}");
    }

    #[test]
    fn alphabets_default_to_numbers() {
        let text = "source_probs = [1]\nobservation_channel = [[1]]\ndistortion = [[0, 1]]\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.alphabets.reproduction, vec!["0", "1"]);
    }
}

//! JSON problem files.
//!
//! ```text
//! # generated by ... seed=7
//! {"n": 3, "domains": [[-10, 10], ...], "constraints": [{"i": 0, "j": 1, "coeffs": [a, b, d, e, f, g]}, ...]}
//! ```
//!
//! Leading lines starting with `#` are header comments and are skipped by the
//! reader. Unknown fields are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BinaryConstraint, CdcopInstance, IntervalDomain, ModelError, QuadraticCoefficients};

#[derive(Debug, Error)]
pub enum ProblemFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed problem file: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("n = {n} but {domains} domains were given")]
    DomainCount { n: usize, domains: usize },
    #[error("constraint ({i}, {j}) is not quadratic and cannot be written to a problem file")]
    NotQuadratic { i: usize, j: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub n: usize,
    pub domains: Vec<IntervalDomain>,
    pub constraints: Vec<ConstraintDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub i: usize,
    pub j: usize,
    pub coeffs: [f64; 6],
}

impl ProblemDoc {
    pub fn from_instance(inst: &CdcopInstance) -> Result<Self, ProblemFileError> {
        let constraints = inst
            .constraints()
            .iter()
            .map(|c| {
                let q = c.function().as_quadratic().ok_or(ProblemFileError::NotQuadratic { i: c.i(), j: c.j() })?;
                Ok(ConstraintDoc { i: c.i(), j: c.j(), coeffs: q.to_array() })
            })
            .collect::<Result<_, ProblemFileError>>()?;
        Ok(Self { n: inst.n(), domains: inst.domains().to_vec(), constraints })
    }

    pub fn into_instance(self) -> Result<CdcopInstance, ProblemFileError> {
        if self.domains.len() != self.n {
            return Err(ProblemFileError::DomainCount { n: self.n, domains: self.domains.len() });
        }
        let constraints = self
            .constraints
            .into_iter()
            .map(|c| BinaryConstraint::quadratic(c.i, c.j, QuadraticCoefficients::from_array(c.coeffs)?))
            .collect::<Result<_, ModelError>>()?;
        Ok(CdcopInstance::new(self.domains, constraints)?)
    }
}

fn strip_header(text: &str) -> &str {
    let mut rest = text;
    loop {
        let trimmed = rest.trim_start();
        if trimmed.starts_with('#') {
            rest = trimmed.split_once('\n').map_or("", |(_, tail)| tail);
        } else {
            return trimmed;
        }
    }
}

pub fn parse_problem(text: &str) -> Result<CdcopInstance, ProblemFileError> {
    let doc: ProblemDoc = serde_json::from_str(strip_header(text))?;
    doc.into_instance()
}

/// Serializes an instance, prefixing each `header` line with `# `.
pub fn render_problem(inst: &CdcopInstance, header: &[String]) -> Result<String, ProblemFileError> {
    let doc = ProblemDoc::from_instance(inst)?;
    let mut out = String::new();
    for line in header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(&serde_json::to_string_pretty(&doc)?);
    out.push('\n');
    Ok(out)
}

pub fn read_problem(path: &Path) -> Result<CdcopInstance, ProblemFileError> {
    let text = fs::read_to_string(path).map_err(|source| ProblemFileError::Io { path: path.display().to_string(), source })?;
    parse_problem(&text)
}

pub fn write_problem(path: &Path, inst: &CdcopInstance, header: &[String]) -> Result<(), ProblemFileError> {
    let text = render_problem(inst, header)?;
    fs::write(path, text).map_err(|source| ProblemFileError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
# seed=3
{"n": 2, "domains": [[-10, 10], [0, 1]],
 "constraints": [{"i": 0, "j": 1, "coeffs": [1, 0, 1, 0, -1, 0]}]}
"#;

    #[test]
    fn parses_with_header_comment() {
        let inst = parse_problem(SMALL).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.domain(1).unwrap().ub(), 1.0);
        assert_eq!(inst.constraints()[0].function().eval(2.0, 3.0), 7.0);
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = r#"{"n": 2, "domains": [[-1, 1], [-1, 1]], "constraints": [], "extra": 1}"#;
        assert!(matches!(parse_problem(bad), Err(ProblemFileError::Syntax(_))));
        let bad = r#"{"n": 2, "domains": [[-1, 1], [-1, 1]], "constraints": [{"i": 0, "j": 1, "coeffs": [0,0,0,0,0,0], "w": 2}]}"#;
        assert!(matches!(parse_problem(bad), Err(ProblemFileError::Syntax(_))));
    }

    #[test]
    fn rejects_bad_content() {
        let wrong_n = r#"{"n": 3, "domains": [[-1, 1], [-1, 1]], "constraints": [{"i": 0, "j": 1, "coeffs": [0,0,0,0,0,0]}]}"#;
        assert!(matches!(parse_problem(wrong_n), Err(ProblemFileError::DomainCount { .. })));
        let degenerate = r#"{"n": 2, "domains": [[1, 1], [-1, 1]], "constraints": [{"i": 0, "j": 1, "coeffs": [0,0,0,0,0,0]}]}"#;
        assert!(parse_problem(degenerate).is_err());
        let disconnected = r#"{"n": 2, "domains": [[-1, 1], [-1, 1]], "constraints": []}"#;
        assert!(matches!(parse_problem(disconnected), Err(ProblemFileError::Model(ModelError::Disconnected { .. }))));
    }

    #[test]
    fn non_quadratic_instances_cannot_be_written() {
        let inst = crate::model::fixtures::four_agent_example();
        assert!(matches!(render_problem(&inst, &[]), Err(ProblemFileError::NotQuadratic { .. })));
    }
}

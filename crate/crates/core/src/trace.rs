//! Per-iteration anytime trace and its CSV form.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

/// State at the end of one iteration. Message counters are per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 1-based.
    pub iteration: u64,
    /// Wall-clock time since the solver started.
    pub elapsed_ms: f64,
    pub gbest_utility: f64,
    pub employed_requests: u64,
    pub onlooker_requests: u64,
    pub total_messages: u64,
}

pub const TRACE_HEADER: &str = "iteration,elapsed_ms,gbest_utility,employed_requests,onlooker_requests,total_messages";

/// First field in which two traces disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDivergence {
    /// 1-based iteration, or the shorter length + 1 when lengths differ.
    pub iteration: u64,
    pub field: &'static str,
    pub left: String,
    pub right: String,
}

impl fmt::Display for TraceDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "traces diverge at iteration {} in {}: {} vs {}", self.iteration, self.field, self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnytimeTrace {
    pub records: Vec<TraceRecord>,
}

impl AnytimeTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, rec: TraceRecord) {
        self.records.push(rec);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_utility(&self) -> Option<f64> {
        self.last().map(|r| r.gbest_utility)
    }

    pub fn gbest_column(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gbest_utility).collect()
    }

    /// `gbest_utility` never decreases, compared exactly.
    pub fn is_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].gbest_utility >= w[0].gbest_utility)
    }

    /// Compares every field except `elapsed_ms`, which is wall-clock time.
    /// Utilities are compared bit for bit.
    pub fn first_divergence(&self, other: &AnytimeTrace) -> Option<TraceDivergence> {
        for (a, b) in self.records.iter().zip(&other.records) {
            let fields: [(&'static str, String, String, bool); 5] = [
                ("iteration", a.iteration.to_string(), b.iteration.to_string(), a.iteration == b.iteration),
                (
                    "gbest_utility",
                    format!("{:?}", a.gbest_utility),
                    format!("{:?}", b.gbest_utility),
                    a.gbest_utility.to_bits() == b.gbest_utility.to_bits(),
                ),
                (
                    "employed_requests",
                    a.employed_requests.to_string(),
                    b.employed_requests.to_string(),
                    a.employed_requests == b.employed_requests,
                ),
                (
                    "onlooker_requests",
                    a.onlooker_requests.to_string(),
                    b.onlooker_requests.to_string(),
                    a.onlooker_requests == b.onlooker_requests,
                ),
                (
                    "total_messages",
                    a.total_messages.to_string(),
                    b.total_messages.to_string(),
                    a.total_messages == b.total_messages,
                ),
            ];
            if let Some((field, left, right, _)) = fields.into_iter().find(|f| !f.3) {
                return Some(TraceDivergence { iteration: a.iteration, field, left, right });
            }
        }
        if self.len() != other.len() {
            return Some(TraceDivergence {
                iteration: self.len().min(other.len()) as u64 + 1,
                field: "length",
                left: self.len().to_string(),
                right: other.len().to_string(),
            });
        }
        None
    }

    /// CSV with `#`-prefixed header comment lines.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            writeln!(out, "# {line}").unwrap();
        }
        writeln!(out, "{TRACE_HEADER}").unwrap();
        for r in &self.records {
            writeln!(
                out,
                "{},{:.3},{},{},{},{}",
                r.iteration, r.elapsed_ms, r.gbest_utility, r.employed_requests, r.onlooker_requests, r.total_messages
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path, header: &[String]) -> std::io::Result<()> {
        fs::write(path, self.to_csv(header))
    }

    /// Parses the output of [`AnytimeTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => return Err(format!("unexpected trace header {other:?}")),
        }
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(format!("trace row {}: expected 6 columns, got {}", k + 1, cols.len()));
            }
            let bad = |c: &str| format!("trace row {}: bad value '{c}'", k + 1);
            records.push(TraceRecord {
                iteration: cols[0].parse().map_err(|_| bad(cols[0]))?,
                elapsed_ms: cols[1].parse().map_err(|_| bad(cols[1]))?,
                gbest_utility: cols[2].parse().map_err(|_| bad(cols[2]))?,
                employed_requests: cols[3].parse().map_err(|_| bad(cols[3]))?,
                onlooker_requests: cols[4].parse().map_err(|_| bad(cols[4]))?,
                total_messages: cols[5].parse().map_err(|_| bad(cols[5]))?,
            });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iteration: u64, gbest: f64, elapsed_ms: f64) -> TraceRecord {
        TraceRecord { iteration, elapsed_ms, gbest_utility: gbest, employed_requests: 4, onlooker_requests: 8, total_messages: 100 }
    }

    #[test]
    fn divergence_ignores_elapsed_time() {
        let a = AnytimeTrace { records: vec![rec(1, 1.0, 0.1), rec(2, 2.0, 0.2)] };
        let b = AnytimeTrace { records: vec![rec(1, 1.0, 5.0), rec(2, 2.0, 9.0)] };
        assert_eq!(a.first_divergence(&b), None);
        let c = AnytimeTrace { records: vec![rec(1, 1.0, 0.1), rec(2, 2.5, 0.2)] };
        let d = a.first_divergence(&c).unwrap();
        assert_eq!((d.iteration, d.field), (2, "gbest_utility"));
        let short = AnytimeTrace { records: vec![rec(1, 1.0, 0.1)] };
        assert_eq!(a.first_divergence(&short).unwrap().field, "length");
    }

    #[test]
    fn csv_round_trip_keeps_utilities_exact() {
        let a = AnytimeTrace { records: vec![rec(1, -0.1 + 0.2, 1.0), rec(2, 1e300, 2.0)] };
        let text = a.to_csv(&["seed=1".to_string()]);
        assert!(text.starts_with("# seed=1\niteration,"));
        let b = AnytimeTrace::from_csv(&text).unwrap();
        assert_eq!(a.first_divergence(&b), None);
    }

    #[test]
    fn monotonicity_is_exact() {
        assert!(AnytimeTrace { records: vec![rec(1, 1.0, 0.0), rec(2, 1.0, 0.0)] }.is_monotone());
        assert!(!AnytimeTrace { records: vec![rec(1, 1.0, 0.0), rec(2, 1.0 - 1e-15, 0.0)] }.is_monotone());
    }
}

//! Machine-readable run reports.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::montecarlo::McEstimate;
use crate::verify::{InequalityReport, SignFinding, SweepSummary};

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Inequality(InequalityReport),
    Distribution { law: Value },
    Sign(SignFinding),
    Estimate(McEstimate),
    Sweep { name: String, summary: SweepSummary },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub checked: u64,
    pub held: u64,
    pub violated: u64,
    pub skipped: u64,
}

/// Everything but `wall_time_seconds` is a pure function of the inputs;
/// `output_digest` hashes that part.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub version: String,
    pub subcommand: String,
    pub input_digest: String,
    pub entries: Vec<Entry>,
    pub summary: Summary,
    pub output_digest: String,
    pub wall_time_seconds: f64,
}

#[derive(Serialize)]
struct Covered<'a> {
    version: &'a str,
    subcommand: &'a str,
    input_digest: &'a str,
    entries: &'a [Entry],
    summary: &'a Summary,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunReport {
    /// Builds a report; summary counts are tallied from `entries`, plus
    /// `skipped` instances that produced no entry.
    pub fn new(subcommand: &str, input_digest: String, entries: Vec<Entry>, skipped: u64, wall_time_seconds: f64) -> Self {
        let mut summary = Summary { skipped, ..Summary::default() };
        for e in &entries {
            match e {
                Entry::Inequality(r) => {
                    summary.checked += 1;
                    if r.holds {
                        summary.held += 1;
                    } else {
                        summary.violated += 1;
                    }
                }
                Entry::Sweep { summary: s, .. } => {
                    summary.checked += s.checked;
                    summary.held += s.held;
                    summary.violated += s.violated();
                    summary.skipped += s.skipped;
                }
                _ => {}
            }
        }
        let version = env!("CARGO_PKG_VERSION").to_string();
        let covered = Covered {
            version: &version,
            subcommand,
            input_digest: &input_digest,
            entries: &entries,
            summary: &summary,
        };
        let output_digest = sha256_hex(&serde_json::to_vec(&covered).expect("report serializes"));
        RunReport {
            version,
            subcommand: subcommand.to_string(),
            input_digest,
            entries,
            summary,
            output_digest,
            wall_time_seconds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.subcommand, self.version);
        for e in &self.entries {
            match e {
                Entry::Inequality(r) => {
                    let bindings: Vec<String> = r.instance.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    out += &format!(
                        "{} {} [{}] lhs={} rhs={} margin={}\n",
                        if r.holds { "HOLDS" } else { "VIOLATED" },
                        r.name,
                        bindings.join(" "),
                        r.lhs,
                        r.rhs,
                        r.margin
                    );
                }
                Entry::Distribution { law } => out += &format!("{law}\n"),
                Entry::Sign(f) => {
                    let bindings: Vec<String> = f.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let edges = f.graph.lines().filter(|l| !l.starts_with("vertices:")).collect::<Vec<_>>().join(", ");
                    out += &format!("{:?} cov={} [{}] edges: {}\n", f.sign, f.covariance, bindings.join(" "), edges);
                }
                Entry::Estimate(m) => {
                    out += &format!(
                        "estimate={} se={} samples={} seed={} model={}\n",
                        m.estimate, m.standard_error, m.samples, m.seed, m.model
                    );
                }
                Entry::Sweep { name, summary } => {
                    out += &format!(
                        "{name}: checked={} held={} violated={} skipped={}\n",
                        summary.checked,
                        summary.held,
                        summary.violated(),
                        summary.skipped
                    );
                }
            }
        }
        let s = &self.summary;
        out += &format!("checked={} held={} violated={} skipped={}\n", s.checked, s.held, s.violated, s.skipped);
        out
    }
}

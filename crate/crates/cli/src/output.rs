//! JSON and CSV result writers. JSON output is byte-deterministic for a
//! fixed seed apart from the wall-time fields.

use anyhow::Result;
use serde::Serialize;

use crate::runner::RequestRecord;

#[derive(Debug, Serialize)]
pub struct RunOutput {
    pub group: String,
    pub lattice: String,
    pub state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerance: f64,
    pub crosscheck: bool,
    pub results: Vec<RequestRecord>,
    pub all_passed: bool,
    /// Raw config text; together with the seed this reproduces the run.
    pub config_echo: String,
}

pub fn to_json(output: &RunOutput) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(output)?))
}

pub fn to_csv(output: &RunOutput) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "kind",
        "spec",
        "which",
        "mode",
        "protocol_re",
        "protocol_im",
        "oracle_re",
        "oracle_im",
        "abs_diff",
        "norm",
        "gate_count",
        "wall_ms",
        "passed",
    ])?;
    let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &output.results {
        w.write_record([
            r.id.clone(),
            r.kind.clone(),
            r.spec.clone(),
            r.which.clone().unwrap_or_default(),
            r.mode.clone(),
            r.protocol_re.to_string(),
            r.protocol_im.to_string(),
            opt_f(r.oracle_re),
            opt_f(r.oracle_im),
            opt_f(r.abs_diff),
            r.norm.to_string(),
            r.gate_count.to_string(),
            r.wall_ms.to_string(),
            r.passed.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

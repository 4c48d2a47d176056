use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};
use crate::pipeline::{write_json, ARTIFACTS, SCHEMA_VERSION};

/// Report sections and the artifact each is taken from.
pub const SECTIONS: [(&str, &str); 7] = [
    ("growth_envelope", "growth.json"),
    ("variance_trend", "variance.json"),
    ("beta_k", "beta.json"),
    ("ks_stability", "stability.json"),
    ("distribution", "dist.json"),
    ("model_comparison", "model_compare.json"),
    ("moment_fits", "moments.json"),
];

/// Gathers the artifacts in `dir` into one document. All artifacts must
/// exist and carry the same config hash.
pub fn assemble(dir: &Path) -> CliResult<Value> {
    let missing: Vec<String> = ARTIFACTS
        .iter()
        .filter(|name| !dir.join(name).is_file())
        .map(|s| s.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    let mut hash: Option<String> = None;
    let mut report = Map::new();
    report.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    for (section, file) in SECTIONS {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)?;
        let h = v
            .get("config_hash")
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::Data(format!("{file}: no config_hash")))?;
        match &hash {
            None => hash = Some(h.to_string()),
            Some(prev) if prev != h => {
                return Err(CliError::Data(format!("{file} was produced by a different configuration")));
            }
            _ => {}
        }
        if v.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
            return Err(CliError::Data(format!("{file}: unsupported schema version")));
        }
        let data = v
            .get("data")
            .cloned()
            .ok_or_else(|| CliError::Data(format!("{file}: no data")))?;
        report.insert(section.into(), data);
    }
    report.insert("config_hash".into(), Value::from(hash.unwrap()));
    Ok(Value::Object(report))
}

pub fn write_report(dir: &Path) -> CliResult<std::path::PathBuf> {
    let report = assemble(dir)?;
    let problems = validate(&report);
    if !problems.is_empty() {
        return Err(CliError::Data(format!("report failed validation: {}", problems.join("; "))));
    }
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    Ok(path)
}

enum Kind {
    Number,
    Object,
    Array,
    Str,
}

fn check(v: &Value, path: &str, kind: Kind, problems: &mut Vec<String>) {
    let node = path.split('.').try_fold(v, |node, key| node.get(key));
    let ok = match (node, kind) {
        (Some(n), Kind::Number) => n.is_number(),
        (Some(n), Kind::Object) => n.is_object(),
        (Some(n), Kind::Array) => n.is_array(),
        (Some(n), Kind::Str) => n.is_string(),
        (None, _) => false,
    };
    if !ok {
        problems.push(format!("{path} missing or of the wrong type"));
    }
}

/// Structural check of a report against schema version 1. Returns the list
/// of problems; empty means valid.
pub fn validate(report: &Value) -> Vec<String> {
    use Kind::*;
    let mut p = Vec::new();
    if report.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        p.push("schema_version must be 1".into());
    }
    let required = [
        ("config_hash", Str),
        ("growth_envelope.envelope.sup_ratio", Number),
        ("growth_envelope.envelope.exceedance_log_measure", Number),
        ("growth_envelope.threshold_ctilde", Number),
        ("growth_envelope.normalizer.checkpoints", Array),
        ("variance_trend.trend.points", Array),
        ("variance_trend.additivity_gap", Number),
        ("beta_k.beta.partial", Number),
        ("beta_k.beta.total", Number),
        ("beta_k.beta.verdict", Str),
        ("beta_k.variance_ratio", Number),
        ("ks_stability", Array),
        ("distribution.distribution", Object),
        ("distribution.ks_half_window", Number),
        ("model_comparison.comparison.ks", Number),
        ("model_comparison.comparison.model", Object),
        ("model_comparison.fourier", Array),
        ("moment_fits", Array),
    ];
    for (path, kind) in required {
        check(report, path, kind, &mut p);
    }
    if let Some(h) = report.get("config_hash").and_then(Value::as_str) {
        if h.len() != 64 || !h.chars().all(|c| c.is_ascii_hexdigit()) {
            p.push("config_hash must be 64 hex digits".into());
        }
    }
    if let Some(rows) = report.get("ks_stability").and_then(Value::as_array) {
        for (i, r) in rows.iter().enumerate() {
            if !r.get("ks_half").is_some_and(|v| v.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x))) {
                p.push(format!("ks_stability[{i}].ks_half must lie in [0, 1]"));
            }
        }
    }
    if let Some(m) = report
        .get("distribution")
        .and_then(|d| d.get("total_mass"))
        .and_then(Value::as_f64)
    {
        if (m - 1.0).abs() > 1e-12 {
            p.push(format!("distribution.total_mass = {m}"));
        }
    }
    p
}

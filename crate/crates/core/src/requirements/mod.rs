//! Service requirement profiles and compliance checks of simulated runs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Profiles shipped with the crate.
pub const BUILTIN_PROFILES: &str = include_str!("../../data/profiles.toml");

/// Inclusive `[min, max]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn min(&self) -> f64 {
        self.0
    }

    pub fn max(&self) -> f64 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceProfile {
    pub name: String,
    pub title: String,
    pub ul_rate_mbps: Range,
    pub dl_rate_mbps: Range,
    pub ul_latency_ms: Range,
    pub dl_latency_ms: Range,
    pub reliability: Range,
    pub h_accuracy_m: Range,
    pub v_accuracy_m: Range,
    pub cmd_latency_ms: Range,
    pub altitude_m: Range,
    pub speed_kmh: Range,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_speed_kmh: Option<f64>,
    #[serde(default)]
    pub informational: Vec<String>,
}

impl ServiceProfile {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            self.ul_rate_mbps,
            self.dl_rate_mbps,
            self.ul_latency_ms,
            self.dl_latency_ms,
            self.reliability,
            self.h_accuracy_m,
            self.v_accuracy_m,
            self.cmd_latency_ms,
            self.altitude_m,
            self.speed_kmh,
        ];
        if ranges.iter().any(|r| !(r.0.is_finite() && r.1.is_finite() && r.0 <= r.1)) {
            return Err(invalid(format!("profile {}: ranges must be finite with min <= max", self.name)));
        }
        let rel = self.reliability;
        if !(rel.0 > 0.0 && rel.1 < 1.0) {
            return Err(invalid(format!("profile {}: reliability must lie in (0, 1)", self.name)));
        }
        if self.h_accuracy_m.0 <= 0.0 || self.v_accuracy_m.0 <= 0.0 {
            return Err(invalid(format!("profile {}: accuracies must be positive", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    pub version: u32,
    #[serde(rename = "profile")]
    pub profiles: Vec<ServiceProfile>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PROFILES).expect("shipped profile file is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let set: ProfileSet = toml::from_str(text).map_err(|e| Error::Validation(format!("profile file: {e}")))?;
        for p in &set.profiles {
            p.validate()?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profiles serialize")
    }

    pub fn names(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&ServiceProfile> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownProfile {
                name: name.to_string(),
                available: self.names(),
            })
    }
}

/// Measurements of a run in the units the profiles use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplianceMetrics {
    /// Delivered over attempted packets.
    pub delivery_rate: f64,
    /// Trigger-to-execution latency per command.
    pub cmd_latency_ms: Vec<f64>,
    /// Per-slot horizontal and vertical tracking error magnitudes.
    pub h_error_m: Vec<f64>,
    pub v_error_m: Vec<f64>,
    pub max_speed_kmh: f64,
    pub min_altitude_m: f64,
    pub max_altitude_m: f64,
    pub ul_latency_ms: Option<Vec<f64>>,
    pub dl_latency_ms: Option<Vec<f64>>,
    /// Offered load, when declared by the scenario.
    pub offered_ul_mbps: Option<f64>,
    pub offered_dl_mbps: Option<f64>,
}

impl ComplianceMetrics {
    /// Zero error, zero loss, hovering at `altitude`.
    pub fn perfect(altitude: f64) -> Self {
        Self {
            delivery_rate: 1.0,
            cmd_latency_ms: vec![0.0],
            h_error_m: vec![0.0],
            v_error_m: vec![0.0],
            max_speed_kmh: 0.0,
            min_altitude_m: altitude,
            max_altitude_m: altitude,
            ul_latency_ms: None,
            dl_latency_ms: None,
            offered_ul_mbps: None,
            offered_dl_mbps: None,
        }
    }
}

/// Nearest-rank percentile; 0 for an empty sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldResult {
    pub field: String,
    pub measured: f64,
    pub required: String,
    /// `None` when the field is informational or not measured.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub profile: String,
    pub lenient: bool,
    pub pass: bool,
    pub fields: Vec<FieldResult>,
}

impl ComplianceReport {
    pub fn field(&self, name: &str) -> Option<&FieldResult> {
        self.fields.iter().find(|f| f.field == name)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.fields
            .iter()
            .filter(|f| f.pass == Some(false))
            .map(|f| f.field.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mode = if self.lenient { "lenient" } else { "strict" };
        let _ = writeln!(s, "profile {} ({mode}): {}", self.profile, verdict(Some(self.pass)));
        for f in &self.fields {
            let _ = writeln!(
                s,
                "  {:<16} {:<6} measured {:>12.6}  required {}",
                f.field,
                verdict(f.pass),
                f.measured,
                f.required
            );
        }
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

fn verdict(p: Option<bool>) -> &'static str {
    match p {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "info",
    }
}

/// Check a run against a profile.
///
/// Upper-bound fields use the range minimum unless `lenient`; lower-bound
/// fields use the maximum. Accuracy is judged at the 95th percentile and
/// latency at the 99th.
pub fn check_compliance(m: &ComplianceMetrics, p: &ServiceProfile, lenient: bool) -> ComplianceReport {
    let upper = |r: Range| if lenient { r.max() } else { r.min() };
    let lower = |r: Range| if lenient { r.min() } else { r.max() };
    let info = |name: &str| p.informational.iter().any(|f| f == name);
    let mut fields = Vec::new();
    let mut push = |field: &str, measured: f64, required: String, pass: Option<bool>| {
        let pass = if info(field) { None } else { pass };
        fields.push(FieldResult {
            field: field.to_string(),
            measured,
            required,
            pass,
        });
    };

    let rel = lower(p.reliability);
    push("reliability", m.delivery_rate, format!(">= {rel}"), Some(m.delivery_rate >= rel));

    let h = percentile(&m.h_error_m, 95.0);
    let hb = upper(p.h_accuracy_m);
    push("h_accuracy_m", h, format!("p95 <= {hb}"), Some(h <= hb));
    let v = percentile(&m.v_error_m, 95.0);
    let vb = upper(p.v_accuracy_m);
    push("v_accuracy_m", v, format!("p95 <= {vb}"), Some(v <= vb));

    let c = percentile(&m.cmd_latency_ms, 99.0);
    let cb = upper(p.cmd_latency_ms);
    push("cmd_latency_ms", c, format!("p99 <= {cb}"), Some(c <= cb));

    for (name, samples, range) in [
        ("ul_latency_ms", &m.ul_latency_ms, p.ul_latency_ms),
        ("dl_latency_ms", &m.dl_latency_ms, p.dl_latency_ms),
    ] {
        let b = upper(range);
        match samples {
            Some(s) => {
                let v = percentile(s, 99.0);
                push(name, v, format!("p99 <= {b}"), Some(v <= b));
            }
            None => push(name, f64::NAN, format!("p99 <= {b} (not measured)"), None),
        }
    }

    let alt = p.altitude_m;
    push(
        "altitude_m",
        m.max_altitude_m,
        format!("within [{}, {}]", alt.min(), alt.max()),
        Some(m.min_altitude_m >= alt.min() && m.max_altitude_m <= alt.max()),
    );
    let sb = upper(p.speed_kmh);
    push("speed_kmh", m.max_speed_kmh, format!("<= {sb}"), Some(m.max_speed_kmh <= sb));

    for (name, offered, range) in [
        ("ul_rate_mbps", m.offered_ul_mbps, p.ul_rate_mbps),
        ("dl_rate_mbps", m.offered_dl_mbps, p.dl_rate_mbps),
    ] {
        let b = lower(range);
        match offered {
            Some(o) => push(name, o, format!("offered >= {b}"), Some(o >= b)),
            None => push(name, f64::NAN, format!(">= {b} (no offered load)"), None),
        }
    }

    let pass = fields.iter().all(|f| f.pass != Some(false));
    ComplianceReport {
        profile: p.name.clone(),
        lenient,
        pass,
        fields,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_round_trips() {
        let set = ProfileSet::builtin();
        assert_eq!(set.profiles.len(), 4);
        let again = ProfileSet::parse(&set.to_toml()).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn table_values() {
        let set = ProfileSet::builtin();
        let swarm = set.get("swarm").unwrap();
        assert_eq!(swarm.reliability, Range(0.9999, 0.99999));
        assert_eq!(swarm.ul_latency_ms.max(), 10.0);
        assert_eq!(swarm.h_accuracy_m.max(), 0.1);
        assert_eq!(swarm.altitude_m, Range(30.0, 300.0));
        assert_eq!(swarm.speed_kmh.max(), 60.0);
        let em = set.get("emergency").unwrap();
        assert_eq!(em.h_accuracy_m.min(), 0.5);
        assert_eq!(em.speed_kmh.max(), 160.0);
        assert_eq!(em.cmd_latency_ms.max(), 40.0);
        assert!(matches!(set.get("nope"), Err(Error::UnknownProfile { .. })));
    }

    #[test]
    fn perfect_run_passes_everything() {
        let set = ProfileSet::builtin();
        for p in &set.profiles {
            for lenient in [false, true] {
                let r = check_compliance(&ComplianceMetrics::perfect(50.0), p, lenient);
                assert!(r.pass, "{}", r.to_text());
            }
        }
    }

    #[test]
    fn lossy_run_fails_swarm_reliability() {
        let set = ProfileSet::builtin();
        let mut m = ComplianceMetrics::perfect(50.0);
        m.delivery_rate = 0.999;
        let r = check_compliance(&m, set.get("swarm").unwrap(), false);
        assert_eq!(r.failed(), vec!["reliability"]);
    }

    #[test]
    fn accuracy_against_two_profiles() {
        let set = ProfileSet::builtin();
        let mut m = ComplianceMetrics::perfect(50.0);
        m.h_error_m = vec![0.3; 100];
        assert!(check_compliance(&m, set.get("emergency").unwrap(), false)
            .field("h_accuracy_m")
            .unwrap()
            .pass
            .unwrap());
        assert_eq!(check_compliance(&m, set.get("swarm").unwrap(), false).failed(), vec!["h_accuracy_m"]);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }
}

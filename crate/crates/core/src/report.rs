//! Machine-readable verification reports.
//!
//! A report is a flat list of named checks plus a summary. Serialization is
//! bit-for-bit reproducible: floats are always rendered with 17 significant
//! digits (enough to round-trip any f64), so re-running a suite with the same
//! seed yields byte-identical output.

use std::io;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One named check: what was measured, against which tolerance, and whether
/// it passed. Optional fields are omitted from the JSON when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    #[serde(
        default,
        with = "crate::model::complex_rect::opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub location: Option<Complex64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residue_rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rel_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs_digest: Option<String>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, tolerance: f64, pass: bool) -> Self {
        CheckRecord {
            name: name.into(),
            location: None,
            residue_rel: None,
            max_rel_err: None,
            samples: None,
            inputs_digest: None,
            tolerance,
            pass,
            note: None,
        }
    }

    pub fn with_location(mut self, at: Complex64) -> Self {
        self.location = Some(at);
        self
    }

    pub fn with_residue(mut self, residue_rel: f64) -> Self {
        self.residue_rel = Some(residue_rel);
        self
    }

    pub fn with_max_rel_err(mut self, err: f64) -> Self {
        self.max_rel_err = Some(err);
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = Some(samples);
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.inputs_digest = Some(digest.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub overall_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
    pub seed: u64,
    /// Set when the ambient tolerance override was in effect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance_override: Option<f64>,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>, seed: u64) -> Self {
        VerificationReport {
            suite: suite.into(),
            checks: Vec::new(),
            summary: Summary { total: 0, passed: 0, failed: 0, overall_pass: true },
            seed,
            tolerance_override: None,
        }
    }

    pub fn push(&mut self, check: CheckRecord) {
        self.summary.total += 1;
        if check.pass {
            self.summary.passed += 1;
        } else {
            self.summary.failed += 1;
        }
        self.summary.overall_pass = self.summary.failed == 0;
        self.checks.push(check);
    }

    /// Fold another report's checks into this one.
    pub fn absorb(&mut self, other: VerificationReport) {
        for check in other.checks {
            self.push(check);
        }
    }

    pub fn overall_pass(&self) -> bool {
        self.summary.overall_pass
    }

    /// Largest recorded relative residue, if any check carried one.
    pub fn max_residue(&self) -> Option<f64> {
        self.checks.iter().filter_map(|c| c.residue_rel).fold(None, |acc, r| {
            Some(acc.map_or(r, |a: f64| a.max(r)))
        })
    }

    /// Deterministic JSON: floats at 17 significant digits, keys in struct
    /// order, no whitespace dependence on the platform.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigs);
        self.serialize(&mut ser).expect("report serialization cannot fail");
        String::from_utf8(buf).expect("serializer emits UTF-8")
    }

    /// Human-readable rendering, one line per check.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("suite: {} (seed {})\n", self.suite, self.seed));
        if let Some(tol) = self.tolerance_override {
            out.push_str(&format!("tolerance override in effect: {tol:e}\n"));
        }
        for check in &self.checks {
            let verdict = if check.pass { "PASS" } else { "FAIL" };
            let mut detail = Vec::new();
            if let Some(err) = check.max_rel_err {
                detail.push(format!("max_rel_err={err:.3e}"));
            }
            if let Some(res) = check.residue_rel {
                detail.push(format!("residue_rel={res:.3e}"));
            }
            if let Some(at) = check.location {
                detail.push(format!("at={at}"));
            }
            if let Some(n) = check.samples {
                detail.push(format!("samples={n}"));
            }
            detail.push(format!("tol={:.1e}", check.tolerance));
            if let Some(note) = &check.note {
                detail.push(note.clone());
            }
            out.push_str(&format!("{verdict}  {}  [{}]\n", check.name, detail.join(", ")));
        }
        out.push_str(&format!(
            "{}: {} of {} checks passed\n",
            if self.summary.overall_pass { "PASS" } else { "FAIL" },
            self.summary.passed,
            self.summary.total
        ));
        out
    }
}

/// JSON formatter pinning every float to 17 significant digits.
struct SigFigs;

impl serde_json::ser::Formatter for SigFigs {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// 64-bit FNV-1a digest, hex-encoded; used to fingerprint check inputs.
pub fn fnv1a(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_tracks_pushes() {
        let mut report = VerificationReport::new("demo", 7);
        assert!(report.overall_pass());
        report.push(CheckRecord::new("a", 1e-9, true));
        report.push(CheckRecord::new("b", 1e-9, false).with_residue(0.5));
        report.push(CheckRecord::new("c", 1e-9, true));
        assert_eq!(report.summary.total, 3);
        assert_eq!(report.summary.passed, 2);
        assert_eq!(report.summary.failed, 1);
        assert!(!report.overall_pass());
        assert_eq!(report.max_residue(), Some(0.5));
    }

    #[test]
    fn json_is_deterministic_and_pins_float_digits() {
        let mut report = VerificationReport::new("demo", 0);
        report.push(
            CheckRecord::new("x", 1e-9, true)
                .with_max_rel_err(0.1)
                .with_location(Complex64::new(0.25, -1.0)),
        );
        let a = report.to_json();
        let b = report.to_json();
        assert_eq!(a, b);
        assert!(a.contains("1.0000000000000001e-1"), "17 significant digits: {a}");
        assert!(a.contains("2.5000000000000000e-1"));
        // Round-trips through a plain parser.
        let back: VerificationReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back.checks.len(), 1);
        assert_eq!(back.checks[0].location, Some(Complex64::new(0.25, -1.0)));
    }

    #[test]
    fn digest_matches_reference_vectors() {
        assert_eq!(fnv1a(b""), "cbf29ce484222325");
        assert_eq!(fnv1a(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a(b"foobar"), "85944171f73967e8");
    }
}

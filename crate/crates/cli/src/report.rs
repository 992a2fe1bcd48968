use std::time::Instant;

use serde::Serialize;

/// One verified property.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub command: String,
    pub check: String,
    /// `None` for qualitative checks (classification, expectations).
    pub max_residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl CheckRecord {
    /// Passes when `residual <= tolerance`.
    pub fn residual(
        command: &str,
        check: &str,
        residual: f64,
        tolerance: f64,
        samples: usize,
    ) -> Self {
        CheckRecord {
            command: command.into(),
            check: check.into(),
            max_residual: Some(residual),
            tolerance: Some(tolerance),
            pass: residual <= tolerance,
            samples,
            detail: None,
            wall_time_ms: None,
        }
    }

    pub fn condition(
        command: &str,
        check: &str,
        pass: bool,
        samples: usize,
        detail: impl Into<String>,
    ) -> Self {
        CheckRecord {
            command: command.into(),
            check: check.into(),
            max_residual: None,
            tolerance: None,
            pass,
            samples,
            detail: Some(detail.into()),
            wall_time_ms: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// Overrides the pass flag, for checks that expect a nonzero residual.
    pub fn expecting(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub puzzle: String,
    pub command: String,
    pub seed: u64,
    pub samples: usize,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
}

impl Report {
    pub fn new(
        puzzle: &str,
        command: &str,
        seed: u64,
        samples: usize,
        warnings: Vec<String>,
        checks: Vec<CheckRecord>,
    ) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Report {
            puzzle: puzzle.into(),
            command: command.into(),
            seed,
            samples,
            warnings,
            checks,
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only serializable data")
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// Stopwatch that only records when timing is enabled.
pub(crate) struct Timer(Option<Instant>);

impl Timer {
    pub(crate) fn start(enabled: bool) -> Self {
        Timer(enabled.then(Instant::now))
    }

    pub(crate) fn stamp(&self, records: &mut [CheckRecord]) {
        if let Some(t) = self.0 {
            let ms = t.elapsed().as_secs_f64() * 1e3;
            for r in records {
                r.wall_time_ms = Some(ms);
            }
        }
    }
}

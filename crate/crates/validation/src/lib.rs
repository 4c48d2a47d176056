//! Bookkeeping for the acceptance run: each check prints one verdict line
//! and the run fails if any check did.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// What a check found.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Checklist {
    verdicts: Vec<(u32, bool)>,
}

impl Checklist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one check. Errors and panics count as failures.
    pub fn run<F>(&mut self, id: u32, title: &str, check: F)
    where
        F: FnOnce() -> Result<Outcome, String>,
    {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(o)) => o,
            Ok(Err(e)) => Outcome::new(false, format!("error: {e}")),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Outcome::new(false, format!("panicked: {msg}"))
            }
        };
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {id:>2} {} {title}: {} [{secs:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        self.verdicts.push((id, outcome.pass));
    }

    pub fn failed(&self) -> Vec<u32> {
        self.verdicts.iter().filter(|v| !v.1).map(|v| v.0).collect()
    }

    /// Summary line and process status.
    pub fn finish(self) -> ExitCode {
        let failed = self.failed();
        let total = self.verdicts.len();
        if failed.is_empty() {
            println!("acceptance: {total}/{total} passed");
            ExitCode::SUCCESS
        } else {
            println!(
                "acceptance: {}/{total} passed, failed: {:?}",
                total - failed.len(),
                failed
            );
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_and_panics_fail() {
        let mut c = Checklist::new();
        c.run(1, "ok", || Ok(Outcome::new(true, "fine")));
        c.run(2, "err", || Err("broken".into()));
        c.run(3, "panic", || panic!("boom"));
        c.run(4, "no", || Ok(Outcome::new(false, "off")));
        assert_eq!(c.failed(), vec![2, 3, 4]);
    }
}

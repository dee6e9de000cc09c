//! Pass/fail bookkeeping for the acceptance run in `tests/acceptance.rs`.

use std::time::{Duration, Instant};

/// Result of one criterion: whether it held and the measured numbers.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Report {
    rows: Vec<(String, bool)>,
}

impl Report {
    /// Runs `f`, failing it when it errors or exceeds `budget`, and prints one line.
    pub fn check(&mut self, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
        let t = Instant::now();
        let res = f();
        let elapsed = t.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let (passed, detail) = match res {
            Ok(o) => (o.passed && !over, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit = budget.map(|b| format!(" (limit {:.0} s)", b.as_secs_f64())).unwrap_or_default();
        println!(
            "{} {name}: {detail}; {:.1} s{limit}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        self.rows.push((name.to_string(), passed));
        passed
    }

    pub fn failed(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect()
    }

    /// Prints the tally; true when every criterion passed.
    pub fn summarize(&self) -> bool {
        let failed = self.failed();
        println!(
            "acceptance: {} of {} criteria passed{}",
            self.rows.len() - failed.len(),
            self.rows.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        );
        failed.is_empty()
    }
}

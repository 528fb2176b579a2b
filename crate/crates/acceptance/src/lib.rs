//! Reporting for the acceptance suite.
//!
//! Each criterion runs once, is timed, and prints a single `PASS` or `FAIL`
//! line. A criterion passes only when its check succeeds and it finishes inside
//! its time budget.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
    /// Documented failure that does not fail the run.
    pub known: bool,
}

impl Outcome {
    pub fn line(&self) -> String {
        let mut s = format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail);
        match self.budget {
            Some(b) => write!(s, " [{:.2} s, budget {} s]", self.elapsed.as_secs_f64(), b.as_secs()).unwrap(),
            None => write!(s, " [{:.2} s]", self.elapsed.as_secs_f64()).unwrap(),
        }
        if self.known && !self.passed {
            s.push_str(" (known failure, see decisions ledger)");
        }
        s
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub outcomes: Vec<Outcome>,
    known: Vec<String>,
}

impl Report {
    /// `known` lists criteria whose failure is documented and expected.
    pub fn new(known: &[&str]) -> Self {
        Self { outcomes: Vec::new(), known: known.iter().map(|s| s.to_string()).collect() }
    }

    /// Runs `check`, which returns a detail line on success or the reason for
    /// failure, and prints the outcome line immediately.
    pub fn run(&mut self, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Result<String, String>) {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = budget.is_some_and(|b| elapsed > b);
        let (mut passed, mut detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if over && passed {
            passed = false;
            detail = format!("{detail}; over time budget");
        }
        let outcome = Outcome {
            name: name.to_string(),
            passed,
            detail,
            elapsed,
            budget,
            known: self.known.iter().any(|k| k == name),
        };
        println!("{}", outcome.line());
        self.outcomes.push(outcome);
    }

    /// Failures not listed as known.
    pub fn unexpected_failures(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.passed && !o.known).collect()
    }

    pub fn summary(&self) -> String {
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        let known = self.outcomes.iter().filter(|o| !o.passed && o.known).count();
        format!(
            "{passed} passed, {} failed ({known} known) of {} criteria",
            self.outcomes.len() - passed,
            self.outcomes.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_and_budget_are_reported() {
        let mut r = Report::new(&["b"]);
        r.run("a", None, || Ok("fine".into()));
        r.run("b", None, || Err("off by 0.0006".into()));
        r.run("c", Some(Duration::ZERO), || {
            std::thread::sleep(Duration::from_millis(2));
            Ok("slow".into())
        });
        assert!(r.outcomes[0].line().starts_with("PASS a: fine"));
        assert!(r.outcomes[1].line().contains("known failure"));
        assert!(!r.outcomes[2].passed);
        let unexpected: Vec<_> = r.unexpected_failures().iter().map(|o| o.name.clone()).collect();
        assert_eq!(unexpected, vec!["c"]);
        assert_eq!(r.summary(), "1 passed, 2 failed (1 known) of 3 criteria");
    }
}

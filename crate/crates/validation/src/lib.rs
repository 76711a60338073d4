//! Reporting helpers for the acceptance suite.

use std::time::Duration;

/// Collects one verdict line per criterion.
#[derive(Debug, Default)]
pub struct Verdicts {
    failed: Vec<String>,
    total: usize,
}

impl Verdicts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prints `PASS name: detail` or `FAIL name: detail` and records the outcome.
    pub fn record(&mut self, name: &str, pass: bool, detail: &str) {
        self.total += 1;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    pub fn failed(&self) -> &[String] {
        &self.failed
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

pub fn seconds(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

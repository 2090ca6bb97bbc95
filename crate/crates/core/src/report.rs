use std::fmt::Write as _;

use crate::io::fmt_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `value <= tolerance`
    AtMost,
    /// `value < tolerance`
    Below,
    /// `value >= tolerance`
    AtLeast,
    /// `value > tolerance`
    Above,
}

/// One named check: a measured value compared against a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

impl CheckRow {
    pub fn at_most(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::AtMost,
        }
    }

    pub fn below(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::Below,
        }
    }

    pub fn at_least(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::AtLeast,
        }
    }

    pub fn above(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            check: check.into(),
            value,
            tolerance,
            comparison: Comparison::Above,
        }
    }

    /// A failed check carrying no measurement, e.g. a solver error.
    pub fn failed(check: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            value: f64::NAN,
            tolerance: 0.0,
            comparison: Comparison::AtMost,
        }
    }

    pub fn pass(&self) -> bool {
        match self.comparison {
            Comparison::AtMost => self.value <= self.tolerance,
            Comparison::Below => self.value < self.tolerance,
            Comparison::AtLeast => self.value >= self.tolerance,
            Comparison::Above => self.value > self.tolerance,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub rows: Vec<CheckRow>,
}

impl VerificationReport {
    pub fn push(&mut self, row: CheckRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.rows.extend(other.rows);
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(CheckRow::pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass())
    }

    pub fn get(&self, check: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.check == check)
    }

    /// `check,value,tolerance,pass` with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,tolerance,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.check,
                fmt_sig(r.value),
                fmt_sig(r.tolerance),
                r.pass()
            );
        }
        out
    }
}

//! Pass/fail records with numeric margins.

use std::fmt::Write;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

#[derive(Clone, Debug, Serialize)]
pub struct Clause {
    pub description: String,
    pub passed: bool,
    /// Signed distance from the failure threshold; positive means passing.
    pub margin: f64,
    /// Evaluated sub-expressions, so each margin can be recomputed by hand.
    pub values: Vec<(String, f64)>,
}

impl Clause {
    pub fn new(description: impl Into<String>, passed: bool, margin: f64) -> Self {
        Clause { description: description.into(), passed, margin, values: Vec::new() }
    }

    /// Passes iff `margin > 0`.
    pub fn positive(description: impl Into<String>, margin: f64) -> Self {
        Self::new(description, margin > 0.0, margin)
    }

    /// Passes iff `|actual - expected| <= tol`; margin is `tol - |diff|`.
    pub fn close(description: impl Into<String>, actual: f64, expected: f64, tol: f64) -> Self {
        let diff = (actual - expected).abs();
        Self::new(description, diff <= tol, tol - diff).with("actual", actual).with("expected", expected)
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.values.push((name.into(), value));
        self
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub name: String,
    pub clauses: Vec<Clause>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>) -> Self {
        VerificationReport { name: name.into(), clauses: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, clause: Clause) -> &mut Self {
        self.clauses.push(clause);
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    /// Conjunction of all clause flags. A report without clauses fails.
    pub fn overall(&self) -> bool {
        !self.clauses.is_empty() && self.clauses.iter().all(|c| c.passed)
    }

    pub fn worst_margin(&self) -> f64 {
        self.clauses.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn clause(&self, needle: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.description.contains(needle))
    }

    /// One clause per line: report name, PASS/FAIL, margin, description.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let flag = |b: bool| if b { "PASS" } else { "FAIL" };
        writeln!(s, "{} {}", self.name, flag(self.overall())).unwrap();
        for c in &self.clauses {
            write!(s, "  {} {} margin={:e} {}", self.name, flag(c.passed), c.margin, c.description).unwrap();
            for (k, v) in &c.values {
                write!(s, " {k}={v:e}").unwrap();
            }
            s.push('\n');
        }
        for n in &self.notes {
            writeln!(s, "  note: {n}").unwrap();
        }
        s
    }
}

impl Serialize for VerificationReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("VerificationReport", 4)?;
        st.serialize_field("name", &self.name)?;
        st.serialize_field("overall", &self.overall())?;
        st.serialize_field("clauses", &self.clauses)?;
        st.serialize_field("notes", &self.notes)?;
        st.end()
    }
}

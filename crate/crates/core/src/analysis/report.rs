use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
    Above,
    Equal,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
            Relation::Equal => "==",
        }
    }
}

/// One pass/fail line: `observed <relation> bound` up to `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    fn build(
        name: impl Into<String>,
        observed: f64,
        bound: f64,
        tolerance: f64,
        relation: Relation,
    ) -> Self {
        let pass = match relation {
            Relation::AtMost => observed <= bound + tolerance,
            Relation::Below => observed < bound + tolerance,
            Relation::AtLeast => observed >= bound - tolerance,
            Relation::Above => observed > bound - tolerance,
            Relation::Equal => (observed - bound).abs() <= tolerance,
        };
        Self {
            name: name.into(),
            observed,
            bound,
            tolerance,
            relation,
            pass,
        }
    }

    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self::build(name, observed, bound, tolerance, Relation::AtMost)
    }

    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self::build(name, observed, bound, tolerance, Relation::AtLeast)
    }

    pub fn equal(name: impl Into<String>, observed: f64, bound: f64, tolerance: f64) -> Self {
        Self::build(name, observed, bound, tolerance, Relation::Equal)
    }

    /// Turns a non-strict inequality into a strict one.
    pub fn strict(self) -> Self {
        let relation = match self.relation {
            Relation::AtMost => Relation::Below,
            Relation::AtLeast => Relation::Above,
            r => r,
        };
        Self::build(
            self.name,
            self.observed,
            self.bound,
            self.tolerance,
            relation,
        )
    }

    /// A boolean condition reported as `1 == 1`.
    pub fn holds(name: impl Into<String>, condition: bool) -> Self {
        Self::build(
            name,
            f64::from(u8::from(condition)),
            1.0,
            0.0,
            Relation::Equal,
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: observed {} {} {} (tol {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.relation.symbol(),
            self.bound,
            self.tolerance
        )
    }
}

/// A titled group of checks with free-form notes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== {} ==", self.title)?;
        for n in &self.notes {
            writeln!(f, "  note: {n}")?;
        }
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        write!(f, "  => {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Writes every check of every report as `section,name,observed,bound,tolerance,relation,pass`.
pub fn write_checks_csv<W: Write>(out: W, reports: &[Report]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InsufficientData(format!("report csv: {e}"));
    w.write_record([
        "section",
        "name",
        "observed",
        "bound",
        "tolerance",
        "relation",
        "pass",
    ])
    .map_err(err)?;
    for r in reports {
        for c in &r.checks {
            w.write_record([
                r.title.clone(),
                c.name.clone(),
                c.observed.to_string(),
                c.bound.to_string(),
                c.tolerance.to_string(),
                c.relation.symbol().to_string(),
                c.pass.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::InsufficientData(format!("report io: {e}")))
}

//! Verdicts shared by the checkers and the command-line reports.

use std::fmt;

use serde_json::{json, Value};

use crate::series::{Coefficient, Witness};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Pass,
    WindowLimited,
    Fail,
    IllDefined,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::WindowLimited => "WINDOW-LIMITED",
            Verdict::Fail => "FAIL",
            Verdict::IllDefined => "ILL-DEFINED",
        }
    }

    /// Worst of two verdicts in the order PASS < WINDOW-LIMITED < FAIL < ILL-DEFINED.
    pub fn and(self, o: Verdict) -> Verdict {
        self.max(o)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of one check: verdict, a human-readable summary and an optional witness.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub detail: String,
    pub witness: Option<Value>,
}

impl Outcome {
    pub fn pass(detail: impl Into<String>) -> Self {
        Outcome { verdict: Verdict::Pass, detail: detail.into(), witness: None }
    }

    pub fn window_limited(detail: impl Into<String>) -> Self {
        Outcome { verdict: Verdict::WindowLimited, detail: detail.into(), witness: None }
    }

    pub fn fail(detail: impl Into<String>, witness: Value) -> Self {
        Outcome { verdict: Verdict::Fail, detail: detail.into(), witness: Some(witness) }
    }

    /// PASS when no witness was found, FAIL carrying the witness otherwise.
    pub fn from_witness<C: Coefficient>(w: Option<Witness<C>>, m: u32, what: &str) -> Self {
        match w {
            None => Outcome::pass(format!("{what}: equal on window")),
            Some(w) => Outcome::fail(format!("{what}: {}", w.describe()), w.to_json(m)),
        }
    }

    /// Maps ill-defined products to the ILL-DEFINED verdict and keeps other errors.
    pub fn from_error(e: Error) -> Result<Self, Error> {
        match e {
            Error::IllDefined { .. } => {
                Ok(Outcome { verdict: Verdict::IllDefined, detail: e.to_string(), witness: None })
            }
            other => Err(other),
        }
    }

    /// Combines two outcomes, keeping the first witness of the worse verdict.
    pub fn and(self, o: Outcome) -> Outcome {
        if o.verdict > self.verdict {
            o
        } else {
            self
        }
    }

    pub fn to_json(&self) -> Value {
        json!({"verdict": self.verdict.as_str(), "detail": self.detail, "witness": self.witness})
    }
}

//! Numerical values with error bars, and inequality reports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

impl Method {
    /// The less exact of two methods.
    pub fn weaker(self, other: Method) -> Method {
        use Method::*;
        match (self, other) {
            (MonteCarlo, _) | (_, MonteCarlo) => MonteCarlo,
            (Quadrature, _) | (_, Quadrature) => Quadrature,
            _ => ClosedForm,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// Scalar estimate: standard error for Monte Carlo, a bound for quadrature, 0 for closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub method: Method,
    /// Sample or node count.
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, abs_error: 0.0, method: Method::ClosedForm, n: 0 }
    }

    pub fn new(value: f64, abs_error: f64, method: Method, n: usize) -> Self {
        debug_assert!(abs_error >= 0.0);
        let abs_error = if method == Method::ClosedForm { 0.0 } else { abs_error.max(0.0) };
        Self { value, abs_error, method, n }
    }

    /// Apply `f` with first-order error propagation using `|f'|`.
    pub fn map(self, f: impl Fn(f64) -> f64, derivative_bound: f64) -> Self {
        Self { value: f(self.value), abs_error: derivative_bound.abs() * self.abs_error, ..self }
    }

    pub fn scale(self, c: f64) -> Self {
        Self { value: c * self.value, abs_error: c.abs() * self.abs_error, ..self }
    }

    pub fn shift(self, c: f64) -> Self {
        Self { value: self.value + c, ..self }
    }

    /// Difference with errors added (no independence assumed).
    pub fn minus(self, other: Estimate) -> Self {
        Self {
            value: self.value - other.value,
            abs_error: self.abs_error + other.abs_error,
            method: self.method.weaker(other.method),
            n: self.n.max(other.n),
        }
    }

    pub fn plus(self, other: Estimate) -> Self {
        Self {
            value: self.value + other.value,
            abs_error: self.abs_error + other.abs_error,
            method: self.method.weaker(other.method),
            n: self.n.max(other.n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub value: DMatrix<f64>,
    /// Entrywise error bound.
    pub abs_error: f64,
    pub method: Method,
    pub n: usize,
}

impl MatrixEstimate {
    pub fn exact(value: DMatrix<f64>) -> Self {
        Self { value, abs_error: 0.0, method: Method::ClosedForm, n: 0 }
    }

    pub fn trace(&self) -> Estimate {
        let d = self.value.nrows() as f64;
        Estimate::new(self.value.trace(), d * self.abs_error, self.method, self.n)
    }

    /// Bound on the spectral-norm error implied by the entrywise bound.
    pub fn spectral_error(&self) -> f64 {
        self.value.nrows() as f64 * self.abs_error
    }
}

impl Serialize for MatrixEstimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows: Vec<Vec<f64>> =
            (0..self.value.nrows()).map(|i| self.value.row(i).iter().copied().collect()).collect();
        let mut st = s.serialize_struct("MatrixEstimate", 4)?;
        st.serialize_field("value", &rows)?;
        st.serialize_field("abs_error", &self.abs_error)?;
        st.serialize_field("method", &self.method)?;
        st.serialize_field("n", &self.n)?;
        st.end()
    }
}

/// Which way an inequality points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// lhs ≤ rhs, slack = rhs − lhs
    LhsLeRhs,
    /// lhs ≥ rhs, slack = lhs − rhs
    LhsGeRhs,
}

/// Relative floating-point floor added to the combined error of every verdict.
pub const ROUND_OFF: f64 = 1e-12;

/// One instance of an inequality with both sides and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub direction: Direction,
    pub slack: f64,
    /// slack ≥ −(lhs.abs_error + rhs.abs_error + round-off floor)
    pub holds: bool,
    pub preconditions_met: bool,
    pub notes: String,
}

impl BoundReport {
    pub fn new(name: &str, lhs: Estimate, rhs: Estimate, direction: Direction) -> Self {
        let slack = match direction {
            Direction::LhsLeRhs => rhs.value - lhs.value,
            Direction::LhsGeRhs => lhs.value - rhs.value,
        };
        let floor = ROUND_OFF * (1.0 + lhs.value.abs().max(rhs.value.abs()));
        let holds = slack >= -(lhs.abs_error + rhs.abs_error + floor);
        Self { name: name.to_string(), lhs, rhs, direction, slack, holds, preconditions_met: true, notes: String::new() }
    }

    pub fn combined_error(&self) -> f64 {
        self.lhs.abs_error + self.rhs.abs_error
    }

    pub fn with_preconditions(mut self, met: bool) -> Self {
        self.preconditions_met = met;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if !self.notes.is_empty() {
            self.notes.push_str("; ");
        }
        self.notes.push_str(&note);
        self
    }

    /// A failed verdict only counts when the hypotheses of the inequality were satisfied.
    pub fn violated(&self) -> bool {
        self.preconditions_met && !self.holds
    }
}

/// Serialize a vector as a JSON array.
pub fn serialize_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v.iter() {
        seq.serialize_element(x)?;
    }
    seq.end()
}

/// Serialize a matrix as a JSON array of rows.
pub fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    serde::Serialize::serialize(&rows, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_has_zero_error() {
        let e = Estimate::new(1.0, 0.5, Method::ClosedForm, 0);
        assert_eq!(e.abs_error, 0.0);
    }

    #[test]
    fn verdict_uses_combined_error() {
        let lhs = Estimate::new(1.0, 0.05, Method::MonteCarlo, 100);
        let rhs = Estimate::new(0.96, 0.0, Method::ClosedForm, 0);
        let r = BoundReport::new("x", lhs, rhs, Direction::LhsLeRhs);
        assert!((r.slack + 0.04).abs() < 1e-15);
        assert!(r.holds);
        let r = BoundReport::new("x", Estimate::exact(1.0), rhs, Direction::LhsLeRhs);
        assert!(!r.holds);
        assert!(r.violated());
        assert!(!r.with_preconditions(false).violated());
    }
}

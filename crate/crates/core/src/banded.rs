//! Tridiagonal systems with optional corner entries, solved by the Thomas algorithm.

use crate::error::{Error, Result};

/// A square system whose rows have at most three entries.
///
/// Row `i` couples columns `i-1, i, i+1`; additionally the first row may
/// touch column 2 and the last row column `n-3`. Those corner entries are
/// removed by one elimination step each before factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSystem {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    first_extra: f64,
    last_extra: f64,
}

impl BandedSystem {
    /// Zero system of order `n >= 3`.
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Assembly(format!("system order must be at least 3, got {n}")));
        }
        Ok(Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            first_extra: 0.0,
            last_extra: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Set the tridiagonal part of row `i`; entries outside the matrix must be zero.
    pub fn set_row(&mut self, i: usize, lower: f64, diag: f64, upper: f64) {
        let n = self.len();
        debug_assert!(i > 0 || lower == 0.0);
        debug_assert!(i + 1 < n || upper == 0.0);
        self.lower[i] = lower;
        self.diag[i] = diag;
        self.upper[i] = upper;
    }

    /// Coefficient of column 2 in row 0.
    pub fn set_first_extra(&mut self, value: f64) {
        self.first_extra = value;
    }

    /// Coefficient of column `n-3` in row `n-1`.
    pub fn set_last_extra(&mut self, value: f64) {
        self.last_extra = value;
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y[0] += self.first_extra * x[2];
        y[n - 1] += self.last_extra * x[n - 3];
    }

    /// Eliminate the corner entries and factorise.
    ///
    /// Every row of the reduced tridiagonal matrix must be strictly
    /// diagonally dominant; otherwise an assembly error names the row.
    pub fn factor(&self) -> Result<ThomasFactor> {
        let n = self.len();
        let mut lower = self.lower.clone();
        let mut diag = self.diag.clone();
        let mut upper = self.upper.clone();
        let mut first_mult = 0.0;
        let mut last_mult = 0.0;
        if self.first_extra != 0.0 {
            if upper[1] == 0.0 {
                return Err(Error::Assembly(
                    "corner elimination in row 0 needs a nonzero pivot".into(),
                ));
            }
            first_mult = self.first_extra / upper[1];
            diag[0] -= first_mult * lower[1];
            upper[0] -= first_mult * diag[1];
        }
        if self.last_extra != 0.0 {
            if lower[n - 2] == 0.0 {
                return Err(Error::Assembly(format!(
                    "corner elimination in row {} needs a nonzero pivot",
                    n - 1
                )));
            }
            last_mult = self.last_extra / lower[n - 2];
            diag[n - 1] -= last_mult * upper[n - 2];
            lower[n - 1] -= last_mult * diag[n - 2];
        }
        for i in 0..n {
            let off = lower[i].abs() + upper[i].abs();
            if !(diag[i].abs() > off) || !diag[i].is_finite() || !off.is_finite() {
                return Err(Error::Assembly(format!(
                    "row {i} is not strictly diagonally dominant (|diag| = {:e}, off-diagonal sum = {:e})",
                    diag[i].abs(),
                    off
                )));
            }
        }
        // forward sweep on the matrix only; the right-hand side is swept per solve
        let mut inv_pivot = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut pivot = diag[0];
        inv_pivot[0] = 1.0 / pivot;
        sup[0] = upper[0] * inv_pivot[0];
        for i in 1..n {
            pivot = diag[i] - lower[i] * sup[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            sup[i] = upper[i] * inv_pivot[i];
        }
        Ok(ThomasFactor {
            lower,
            inv_pivot,
            sup,
            first_mult,
            last_mult,
        })
    }
}

/// Factorisation produced by [`BandedSystem::factor`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThomasFactor {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    sup: Vec<f64>,
    first_mult: f64,
    last_mult: f64,
}

impl ThomasFactor {
    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrite `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "right-hand side has the wrong length");
        rhs[0] -= self.first_mult * rhs[1];
        rhs[n - 1] -= self.last_mult * rhs[n - 2];
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.sup[i] * rhs[i + 1];
        }
    }
}

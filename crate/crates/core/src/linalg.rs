//! Cholesky factorization with a bounded diagonal jitter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Escalating diagonal jitter: none, then `1e-10`, `1e-9`, ... up to `max_factor`,
/// each relative to the mean diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub max_factor: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { max_factor: 1e-8 }
    }
}

impl JitterPolicy {
    pub fn new(max_factor: f64) -> Self {
        JitterPolicy { max_factor }
    }

    fn factors(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut f = 1e-10;
        while f <= self.max_factor * (1.0 + 1e-9) {
            out.push(f);
            f *= 10.0;
        }
        if out.len() == 1 && self.max_factor > 0.0 {
            out.push(self.max_factor);
        }
        out
    }
}

/// A successful factorization and the absolute jitter that was added.
pub struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b`, so that `bᵀ M⁻¹ b = |L⁻¹ b|²`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.chol
            .l_dirty()
            .solve_lower_triangular_mut(&mut x);
        x
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

fn mean_diagonal(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.diagonal().iter().sum::<f64>() / m.nrows() as f64
}

/// Factorizes `m`, escalating jitter per `policy`. On failure returns the largest
/// relative jitter that was tried.
pub fn cholesky_jittered(m: &DMatrix<f64>, policy: JitterPolicy) -> Result<Factor, f64> {
    let scale = mean_diagonal(m);
    let mut last = 0.0;
    if !m.iter().all(|x| x.is_finite()) {
        return Err(last);
    }
    for f in policy.factors() {
        last = f;
        let jitter = f * scale;
        if f > 0.0 && jitter <= 0.0 {
            break;
        }
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(Factor { chol, jitter });
        }
    }
    Err(last)
}

/// Copies the upper triangle onto the lower one.
pub fn symmetrize_from_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

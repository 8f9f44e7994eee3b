//! Covariances at arbitrary locations.
//!
//! A process value `Y_q(s)` is a linear functional `aᵀY + Σ_t γ_t E_t(s)` of the
//! grid values `Y` and of the innovations `E_t` at `s`. On-grid values are unit
//! vectors; off-grid values pick up quadrature weights from their parents.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::assembly::JointModel;
use crate::domain::Observations;
use crate::kernels::InteractionSpec;
use crate::{Error, Result};

/// A variable at a location.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub var: usize,
    pub loc: Vec<f64>,
}

impl Point {
    pub fn new(var: usize, loc: impl Into<Vec<f64>>) -> Self {
        Point {
            var,
            loc: loc.into(),
        }
    }
}

struct Functional<'a> {
    var: usize,
    loc: &'a [f64],
    coef: Vec<(usize, f64)>,
    innov: Vec<(usize, f64)>,
    /// Covariance of the innovation part with every grid value.
    g: Option<DVector<f64>>,
    /// `J a` when `a` has more than one entry.
    ja: Option<DVector<f64>>,
}

impl JointModel {
    fn expand(
        &self,
        q: usize,
        loc: &[f64],
        w: f64,
        coef: &mut BTreeMap<usize, f64>,
        innov: &mut BTreeMap<usize, f64>,
    ) {
        *innov.entry(q).or_default() += w;
        let n = self.n();
        let grid = self.grid();
        for e in &self.network().node(q).parents {
            match &e.interaction {
                InteractionSpec::Zero => {}
                InteractionSpec::Dirac { amplitude } => {
                    self.expand(e.parent, loc, w * amplitude, coef, innov)
                }
                spec => {
                    for (l, (v, eta)) in grid.vertices().zip(grid.weights()).enumerate() {
                        let b = spec.eval_unchecked(loc, v);
                        if b != 0.0 {
                            *coef.entry(e.parent * n + l).or_default() += w * b * eta;
                        }
                    }
                }
            }
        }
    }

    fn functional<'a>(&self, pt: &'a Point) -> Result<Functional<'a>> {
        if pt.var >= self.p() {
            return Err(Error::Validation(format!(
                "variable {} does not exist in a network of {}",
                pt.var + 1,
                self.p()
            )));
        }
        self.grid().check_location(&pt.loc)?;
        let n = self.n();
        if let Some(k) = self.vertex_of(&pt.loc) {
            return Ok(Functional {
                var: pt.var,
                loc: &pt.loc,
                coef: vec![(pt.var * n + k, 1.0)],
                innov: Vec::new(),
                g: None,
                ja: None,
            });
        }
        let mut coef = BTreeMap::new();
        let mut innov = BTreeMap::new();
        self.expand(pt.var, &pt.loc, 1.0, &mut coef, &mut innov);
        innov.retain(|_, g| *g != 0.0);
        let coef: Vec<(usize, f64)> = coef.into_iter().filter(|(_, a)| *a != 0.0).collect();
        let innov: Vec<(usize, f64)> = innov.into_iter().collect();
        let g = self.innovation_cov(&pt.loc, &innov);
        let ja = if coef.len() > 1 {
            let j = self.process_matrix();
            let mut v = DVector::zeros(j.nrows());
            for &(i, a) in &coef {
                v.axpy(a, &j.column(i), 1.0);
            }
            Some(v)
        } else {
            None
        };
        Ok(Functional {
            var: pt.var,
            loc: &pt.loc,
            coef,
            innov,
            g,
            ja,
        })
    }

    /// Covariance between `Σ_t γ_t E_t(loc)` and all grid values, propagated downstream.
    fn innovation_cov(&self, loc: &[f64], innov: &[(usize, f64)]) -> Option<DVector<f64>> {
        if innov.is_empty() {
            return None;
        }
        let n = self.n();
        let grid = self.grid();
        let net = self.network();
        let first = innov[0].0;
        let mut blocks: Vec<DVector<f64>> = vec![DVector::zeros(n); net.len()];
        for r in first..net.len() {
            let mut x = DVector::zeros(n);
            for (e, edge) in net.node(r).parents.iter().enumerate() {
                if edge.parent >= first {
                    x += self.interaction(r, e).mul_vec(&blocks[edge.parent]);
                }
            }
            if let Some(&(_, gamma)) = innov.iter().find(|(t, _)| *t == r) {
                let cov = &net.node(r).cov;
                for (k, v) in grid.vertices().enumerate() {
                    x[k] += gamma * cov.covariance(grid.distance(loc, v));
                }
            }
            blocks[r] = x;
        }
        let mut g = DVector::zeros(n * net.len());
        for (r, b) in blocks.iter().enumerate() {
            g.rows_mut(r * n, n).copy_from(b);
        }
        Some(g)
    }

    fn functional_cov(&self, f1: &Functional, f2: &Functional, nugget: bool) -> f64 {
        let j = self.process_matrix();
        let mut c = match (&f1.ja, &f2.ja) {
            (_, Some(ja2)) => f1.coef.iter().map(|&(i, a)| a * ja2[i]).sum(),
            (Some(ja1), None) => f2.coef.iter().map(|&(i, a)| a * ja1[i]).sum(),
            (None, None) => {
                let mut s = 0.0;
                for &(i, a) in &f1.coef {
                    for &(k, b) in &f2.coef {
                        s += a * b * j[(i, k)];
                    }
                }
                s
            }
        };
        if let Some(g2) = &f2.g {
            c += f1.coef.iter().map(|&(i, a)| a * g2[i]).sum::<f64>();
        }
        if let Some(g1) = &f1.g {
            c += f2.coef.iter().map(|&(i, a)| a * g1[i]).sum::<f64>();
        }
        if !f1.innov.is_empty() && !f2.innov.is_empty() {
            let d = self.grid().distance(f1.loc, f2.loc);
            for &(t, g1) in &f1.innov {
                if let Some(&(_, g2)) = f2.innov.iter().find(|(u, _)| *u == t) {
                    c += g1 * g2 * self.network().node(t).cov.covariance(d);
                }
            }
        }
        if nugget && f1.var == f2.var && f1.loc == f2.loc {
            c += self.network().node(f1.var).nugget;
        }
        c
    }

    /// Covariance matrix between two point sets. With `nugget`, coincident points of
    /// the same variable also pick up that node's nugget.
    pub fn covariance_between(
        &self,
        rows: &[Point],
        cols: &[Point],
        nugget: bool,
    ) -> Result<DMatrix<f64>> {
        let fr = rows
            .iter()
            .map(|p| self.functional(p))
            .collect::<Result<Vec<_>>>()?;
        let fc = cols
            .iter()
            .map(|p| self.functional(p))
            .collect::<Result<Vec<_>>>()?;
        let data: Vec<Vec<f64>> = fr
            .par_iter()
            .map(|a| fc.iter().map(|b| self.functional_cov(a, b, nugget)).collect())
            .collect();
        Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| data[i][j]))
    }

    /// Symmetric covariance matrix of one point set.
    pub fn covariance_of(&self, pts: &[Point], nugget: bool) -> Result<DMatrix<f64>> {
        let f = pts
            .iter()
            .map(|p| self.functional(p))
            .collect::<Result<Vec<_>>>()?;
        let upper: Vec<Vec<f64>> = (0..f.len())
            .into_par_iter()
            .map(|i| {
                (i..f.len())
                    .map(|j| self.functional_cov(&f[i], &f[j], nugget))
                    .collect()
            })
            .collect();
        let m = f.len();
        let mut c = DMatrix::zeros(m, m);
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                c[(i, i + off)] = v;
                c[(i + off, i)] = v;
            }
        }
        Ok(c)
    }
}

impl JointModel {
    /// Observation points of all variables, in variable order.
    pub fn observation_points(&self, obs: &[Observations]) -> Vec<Point> {
        obs.iter()
            .flat_map(|o| o.locations.iter().map(move |l| Point::new(o.variable, l.clone())))
            .collect()
    }

    /// Covariance of the observations: process, nugget and measurement error.
    pub fn observation_covariance(&self, obs: &[Observations]) -> Result<DMatrix<f64>> {
        let pts = self.observation_points(obs);
        let mut c = self.covariance_of(&pts, true)?;
        for (i, p) in pts.iter().enumerate() {
            c[(i, i)] += self.network().node(p.var).noise;
        }
        Ok(c)
    }

    /// Observed values minus the configured means.
    pub fn observation_residuals(&self, obs: &[Observations]) -> Result<DVector<f64>> {
        let net = self.network();
        let mut r = Vec::with_capacity(obs.iter().map(Observations::len).sum());
        for o in obs {
            if o.variable >= net.len() {
                return Err(Error::Validation(format!(
                    "observations for variable {} but the network has {} nodes",
                    o.variable + 1,
                    net.len()
                )));
            }
            for (i, (loc, z)) in o.locations.iter().zip(&o.values).enumerate() {
                r.push(z - net.mean_at(o.variable, loc, &o.covariates, i)?);
            }
        }
        Ok(DVector::from_vec(r))
    }
}

/// Process cross-covariance `C_qr(s, u)` at arbitrary locations (no nugget).
pub fn cross_cov_at(model: &JointModel, q: usize, r: usize, s: &[f64], u: &[f64]) -> Result<f64> {
    let m = model.covariance_between(&[Point::new(q, s)], &[Point::new(r, u)], false)?;
    Ok(m[(0, 0)])
}

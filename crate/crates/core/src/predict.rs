//! Simple cokriging, kriging and leave-one-out scoring.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::conditional::{JointModel, Point};
use crate::csvio::fmt_f64;
use crate::domain::Observations;
use crate::linalg::{cholesky_jittered, Factor, JitterPolicy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMethod {
    Cokriging,
    KrigingSingleVariable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub target_var: usize,
    pub targets: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub method: PredictionMethod,
}

impl PredictionResult {
    /// Columns `x[, y[, z]], mean, stderr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.targets.first().map_or(1, Vec::len);
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut header: Vec<&str> = ["x", "y", "z"][..dim].to_vec();
        header.extend(["mean", "stderr"]);
        w.write_record(&header)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        for ((loc, m), s) in self.targets.iter().zip(&self.mean).zip(&self.stderr) {
            let row: Vec<String> = loc.iter().chain([m, s]).map(|&v| fmt_f64(v)).collect();
            w.write_record(&row)
                .map_err(|e| Error::parse(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn conditioning(policy: JitterPolicy, what: &str) -> impl Fn(f64) -> Error + '_ {
    move |jitter| {
        Error::NumericalConditioning(format!(
            "{what} is singular even with relative jitter {jitter:e} (max {:e})",
            policy.max_factor
        ))
    }
}

fn predict_points(
    model: &JointModel,
    obs: &[Observations],
    targets: &[Vec<f64>],
    target_var: usize,
    target_covariates: &BTreeMap<String, Vec<f64>>,
    method: PredictionMethod,
) -> Result<PredictionResult> {
    let net = model.network();
    if target_var >= net.len() {
        return Err(Error::Validation(format!(
            "target variable {} does not exist in a network of {}",
            target_var + 1,
            net.len()
        )));
    }
    let tpts: Vec<Point> = targets.iter().map(|t| Point::new(target_var, t.clone())).collect();
    let mut mean = Vec::with_capacity(targets.len());
    let mut prior_var = Vec::with_capacity(targets.len());
    for (i, t) in tpts.iter().enumerate() {
        mean.push(net.mean_at(target_var, &t.loc, target_covariates, i)?);
        prior_var.push(model.covariance_of(std::slice::from_ref(t), false)?[(0, 0)]);
    }
    let opts = model.observation_points(obs);
    let mut var = prior_var;
    if !opts.is_empty() {
        let c = model.observation_covariance(obs)?;
        let r = model.observation_residuals(obs)?;
        let policy = model.jitter_policy();
        let f = cholesky_jittered(&c, policy).map_err(conditioning(policy, "cokriging system"))?;
        let cross = model.covariance_between(&opts, &tpts, false)?;
        let w = f.whiten(&cross);
        let v = f.whiten(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()));
        for j in 0..targets.len() {
            let col = w.column(j);
            mean[j] += col.dot(&v.column(0));
            var[j] -= col.norm_squared();
        }
    }
    Ok(PredictionResult {
        target_var,
        targets: targets.to_vec(),
        mean,
        stderr: var.into_iter().map(|v| v.max(0.0).sqrt()).collect(),
        method,
    })
}

/// Best linear predictor of `Y_target_var` at `targets` from observations of every
/// variable, with its standard error.
pub fn cokrige(
    model: &JointModel,
    obs: &[Observations],
    targets: &[Vec<f64>],
    target_var: usize,
) -> Result<PredictionResult> {
    cokrige_with_covariates(model, obs, targets, target_var, &BTreeMap::new())
}

/// As [`cokrige`], with user covariate columns aligned with `targets`.
pub fn cokrige_with_covariates(
    model: &JointModel,
    obs: &[Observations],
    targets: &[Vec<f64>],
    target_var: usize,
    target_covariates: &BTreeMap<String, Vec<f64>>,
) -> Result<PredictionResult> {
    predict_points(
        model,
        obs,
        targets,
        target_var,
        target_covariates,
        PredictionMethod::Cokriging,
    )
}

/// Predictor of `Y_q` at `targets` from observations of `q` alone.
pub fn krige(model: &JointModel, obs: &Observations, targets: &[Vec<f64>]) -> Result<PredictionResult> {
    predict_points(
        model,
        std::slice::from_ref(obs),
        targets,
        obs.variable,
        &BTreeMap::new(),
        PredictionMethod::KrigingSingleVariable,
    )
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Continuous ranked probability score of `N(mu, sigma²)` at `y`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    if sigma <= 0.0 {
        return (y - mu).abs();
    }
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt())
}

/// Held-out prediction of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScore {
    pub variable: usize,
    pub observed: f64,
    pub mean: f64,
    /// Predictive standard deviation of the observation (process, nugget and noise).
    pub sd: f64,
    pub crps: f64,
}

impl FoldScore {
    pub fn error(&self) -> f64 {
        self.observed - self.mean
    }
}

/// Per-variable leave-one-out summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScores {
    pub variable: usize,
    pub folds: usize,
    /// Mean absolute error.
    pub mae: f64,
    pub rmspe: f64,
    pub mcrps: f64,
    /// Fraction of held-out values inside `mean ± 1.96 sd`.
    pub coverage95: f64,
}

/// Aggregates fold scores per variable.
pub fn summarize(folds: &[FoldScore], nvars: usize) -> Vec<CvScores> {
    (0..nvars)
        .filter_map(|q| {
            let f: Vec<&FoldScore> = folds.iter().filter(|s| s.variable == q).collect();
            if f.is_empty() {
                return None;
            }
            let k = f.len() as f64;
            Some(CvScores {
                variable: q,
                folds: f.len(),
                mae: f.iter().map(|s| s.error().abs()).sum::<f64>() / k,
                rmspe: (f.iter().map(|s| s.error().powi(2)).sum::<f64>() / k).sqrt(),
                mcrps: f.iter().map(|s| s.crps).sum::<f64>() / k,
                coverage95: f
                    .iter()
                    .filter(|s| s.error().abs() <= 1.96 * s.sd)
                    .count() as f64
                    / k,
            })
        })
        .collect()
}

/// Writes `variable,MAE,RMSPE,MCRPS` with variables numbered from 1.
pub fn write_cv_csv(path: &Path, scores: &[CvScores]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    w.write_record(["variable", "MAE", "RMSPE", "MCRPS"])
        .map_err(|e| Error::parse(path, e.to_string()))?;
    for s in scores {
        w.write_record([
            (s.variable + 1).to_string(),
            fmt_f64(s.mae),
            fmt_f64(s.rmspe),
            fmt_f64(s.mcrps),
        ])
        .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn location_key(loc: &[f64]) -> Vec<u64> {
    loc.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Leave-one-location-out cross-validation with fixed parameters.
///
/// Each fold drops every observation at one location (all variables) and predicts
/// the dropped values from the rest. Folds are returned in order of first
/// appearance of their location.
pub fn loo_cv(model: &JointModel, obs: &[Observations]) -> Result<(Vec<CvScores>, Vec<FoldScore>)> {
    let pts = model.observation_points(obs);
    let m = pts.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out needs at least 2 observations, got {m}"
        )));
    }
    let values: Vec<f64> = obs.iter().flat_map(|o| o.values.iter().copied()).collect();
    let c = model.observation_covariance(obs)?;
    let r = model.observation_residuals(obs)?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, p) in pts.iter().enumerate() {
        let g = *index.entry(location_key(&p.loc)).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientData(
            "leave-one-out needs observations at two or more locations".into(),
        ));
    }
    let policy = model.jitter_policy();
    let folds: Vec<Vec<FoldScore>> = groups
        .par_iter()
        .map(|held| {
            let mut is_held = vec![false; m];
            for &h in held {
                is_held[h] = true;
            }
            let keep: Vec<usize> = (0..m).filter(|&i| !is_held[i]).collect();
            let sub = c.select_rows(&keep).select_columns(&keep);
            let f: Factor = cholesky_jittered(&sub, policy)
                .map_err(conditioning(policy, "leave-one-out system"))?;
            let cross = c.select_rows(&keep).select_columns(held);
            let w = f.whiten(&cross);
            let rk = DVector::from_iterator(keep.len(), keep.iter().map(|&i| r[i]));
            let v = f.whiten(&DMatrix::from_column_slice(rk.len(), 1, rk.as_slice()));
            Ok(held
                .iter()
                .enumerate()
                .map(|(j, &h)| {
                    let col = w.column(j);
                    let mean = values[h] - r[h] + col.dot(&v.column(0));
                    let sd = (c[(h, h)] - col.norm_squared()).max(0.0).sqrt();
                    FoldScore {
                        variable: pts[h].var,
                        observed: values[h],
                        mean,
                        sd,
                        crps: crps_gaussian(mean, sd, values[h]),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let folds: Vec<FoldScore> = folds.into_iter().flatten().collect();
    Ok((summarize(&folds, model.p()), folds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::{assemble_dag, Node, ProcessNetwork};
    use crate::domain::regular_grid;
    use crate::kernels::{InteractionSpec, MaternParams};
    use crate::quad::integrate;

    fn m(v: f64, k: f64, nu: f64) -> MaternParams {
        MaternParams::new(v, k, nu).unwrap()
    }

    fn model(spec: InteractionSpec, noise: f64) -> JointModel {
        let g = regular_grid(&[(-1.0, 1.0)], &[40]).unwrap();
        let net = ProcessNetwork::new(vec![
            Node::new("a", m(1.0, 5.0, 1.5)).with_noise(noise),
            Node::new("b", m(0.3, 8.0, 1.5)).with_parent(0, spec).with_noise(noise),
        ])
        .unwrap();
        assemble_dag(&g, &net).unwrap()
    }

    fn obs(var: usize, xs: &[f64], f: impl Fn(f64) -> f64) -> Observations {
        Observations::new(var, xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|&x| f(x)).collect())
            .unwrap()
    }

    #[test]
    fn crps_examples() {
        assert!((crps_gaussian(0.0, 1.0, 0.0) - 0.233_695_0).abs() < 1e-7);
        assert_eq!(crps_gaussian(5.0, 0.0, 5.0), 0.0);
        assert!((crps_gaussian(0.0, 2.0, 2.0) - 2.0 * crps_gaussian(0.0, 1.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn crps_matches_its_integral_definition() {
        for (mu, s, y) in [(0.0, 1.0, 0.3), (1.5, 0.4, -0.2), (-3.0, 2.5, 4.0)] {
            let cdf = |t: f64| std_normal_cdf((t - mu) / s);
            let lo = mu.min(y) - 12.0 * s;
            let hi = mu.max(y) + 12.0 * s;
            let left = integrate(|t| cdf(t).powi(2), lo, y, &[mu], 40);
            let right = integrate(|t| (1.0 - cdf(t)).powi(2), y, hi, &[mu], 40);
            assert!((left + right - crps_gaussian(mu, s, y)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_interaction_cokriging_equals_kriging() {
        let model = model(InteractionSpec::Zero, 0.1);
        let o1 = obs(0, &[0.05, 0.3, 0.62], |x| x.sin());
        let o2 = obs(1, &[-0.5, -0.21, 0.4], |x| x.cos());
        let targets: Vec<Vec<f64>> = [-0.8, -0.3, 0.113, 0.5].iter().map(|&x| vec![x]).collect();
        let ck = cokrige(&model, &[o1.clone(), o2], &targets, 0).unwrap();
        let kr = krige(&model, &o1, &targets).unwrap();
        for i in 0..4 {
            assert!((ck.mean[i] - kr.mean[i]).abs() < 1e-10);
            assert!((ck.stderr[i] - kr.stderr[i]).abs() < 1e-10);
        }
        assert_eq!(kr.method, PredictionMethod::KrigingSingleVariable);
    }

    #[test]
    fn noiseless_observation_is_interpolated() {
        let model = model(InteractionSpec::Dirac { amplitude: 0.5 }, 0.0);
        let o1 = obs(0, &[0.1, 0.37], |x| 2.0 * x);
        let o2 = obs(1, &[0.2], |_| 0.4);
        let p = cokrige(&model, &[o1, o2], &[vec![0.37]], 0).unwrap();
        assert!((p.mean[0] - 0.74).abs() < 1e-8);
        assert!(p.stderr[0] < 1e-6);
    }

    #[test]
    fn prior_without_data_and_far_from_data() {
        let model = model(InteractionSpec::Zero, 0.1);
        let empty = Observations::empty(0);
        let p = krige(&model, &empty, &[vec![0.2]]).unwrap();
        assert_eq!(p.mean[0], 0.0);
        assert!((p.stderr[0] - 1.0).abs() < 1e-15);
        let o = obs(0, &[-0.95], |_| 3.0);
        let far = krige(&model, &o, &[vec![0.95]]).unwrap();
        assert!(far.mean[0].abs() < 5e-3);
        assert!((far.stderr[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn duplicate_locations_with_noise_are_solvable() {
        let model = model(InteractionSpec::Zero, 0.2);
        let o = obs(0, &[0.3, 0.3, 0.3], |_| 1.0);
        let p = krige(&model, &o, &[vec![0.3]]).unwrap();
        assert!(p.mean[0] > 0.8 && p.mean[0] < 1.0);
    }

    #[test]
    fn more_data_never_increases_variance() {
        let model = model(
            InteractionSpec::ShiftedBisquare {
                amplitude: 2.0,
                aperture: 0.3,
                shift: vec![-0.2],
            },
            0.05,
        );
        let xs = [-0.9, -0.6, -0.33, -0.1, 0.15, 0.4, 0.71, 0.88];
        let targets: Vec<Vec<f64>> = (0..9).map(|i| vec![-1.0 + 0.25 * i as f64 + 0.01]).collect();
        let mut prev: Option<Vec<f64>> = None;
        for k in 1..=xs.len() {
            let o1 = obs(0, &xs[..k / 2], |x| x);
            let o2 = obs(1, &xs[..k], |x| -x);
            let p = cokrige(&model, &[o1, o2], &targets, 0).unwrap();
            if let Some(prev) = &prev {
                for (a, b) in p.stderr.iter().zip(prev) {
                    assert!(a * a <= b * b + 1e-9);
                }
            }
            prev = Some(p.stderr);
        }
    }

    #[test]
    fn cokriging_no_worse_than_kriging() {
        let model = model(InteractionSpec::Dirac { amplitude: 0.8 }, 0.05);
        let o1 = obs(0, &[0.1, 0.5], |x| x);
        let o2 = obs(1, &[-0.5, -0.2, 0.3], |x| x * x);
        let targets: Vec<Vec<f64>> = (0..10).map(|i| vec![-0.95 + 0.2 * i as f64]).collect();
        let ck = cokrige(&model, &[o1.clone(), o2], &targets, 0).unwrap();
        let kr = krige(&model, &o1, &targets).unwrap();
        for (a, b) in ck.stderr.iter().zip(&kr.stderr) {
            assert!(*a <= b + 1e-12);
        }
    }

    /// Conditional law of a block given the rest, from the precision matrix.
    #[test]
    fn loo_matches_precision_matrix_formula() {
        let model = model(
            InteractionSpec::ShiftedBisquare {
                amplitude: 2.0,
                aperture: 0.3,
                shift: vec![-0.2],
            },
            0.1,
        );
        let o1 = obs(0, &[-0.7, -0.2, 0.13, 0.5, 0.81], |x| (3.0 * x).sin());
        let o2 = obs(1, &[-0.7, -0.45, 0.13, 0.66], |x| x);
        let all = [o1, o2];
        let (_, folds) = loo_cv(&model, &all).unwrap();
        assert_eq!(folds.len(), 9);
        let c = model.observation_covariance(&all).unwrap();
        let q = c.clone().try_inverse().unwrap();
        let z: Vec<f64> = all.iter().flat_map(|o| o.values.clone()).collect();
        let groups: Vec<Vec<usize>> = vec![vec![0, 5], vec![1], vec![2, 7], vec![3], vec![4], vec![6], vec![8]];
        let mut k = 0;
        for held in groups {
            let qhh = q.select_rows(&held).select_columns(&held);
            let cov = qhh.clone().try_inverse().unwrap();
            let rest: Vec<usize> = (0..9).filter(|i| !held.contains(i)).collect();
            let qhr = q.select_rows(&held).select_columns(&rest);
            let zr = DVector::from_iterator(rest.len(), rest.iter().map(|&i| z[i]));
            let mean = -(&cov * (qhr * zr));
            for (j, &h) in held.iter().enumerate() {
                let f = folds.iter().find(|f| f.observed == z[h]).unwrap();
                assert!((f.mean - mean[j]).abs() < 1e-9);
                assert!((f.sd - cov[(j, j)].sqrt()).abs() < 1e-9);
                k += 1;
            }
        }
        assert_eq!(k, 9);
    }

    #[test]
    fn loo_needs_two_observations() {
        let model = model(InteractionSpec::Zero, 0.1);
        let o = obs(0, &[0.1], |_| 1.0);
        assert!(matches!(loo_cv(&model, &[o]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn noiseless_duplicate_gives_zero_error() {
        let model = model(InteractionSpec::Zero, 0.0);
        let o = Observations::new(0, vec![vec![0.2], vec![0.2], vec![0.6]], vec![1.0, 1.0, 0.5]).unwrap();
        // a duplicate at another location keeps the value predictable exactly
        let o2 = Observations::new(1, vec![vec![0.6]], vec![0.0]).unwrap();
        let (_, folds) = loo_cv(&model, &[o.clone(), o2]).unwrap();
        assert_eq!(folds.len(), 4);
        let p = krige(&model, &o.select(&[0, 2]), &[vec![0.2]]).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn table_three_arithmetic_from_fold_scores() {
        // fold scores constructed so that the three summaries are known
        let folds: Vec<FoldScore> = [(10.0, 2.0), (-30.0, 5.0), (50.0, 1.0)]
            .iter()
            .map(|&(e, s)| FoldScore {
                variable: 0,
                observed: e,
                mean: 0.0,
                sd: s,
                crps: crps_gaussian(0.0, s, e),
            })
            .collect();
        let s = summarize(&folds, 1)[0];
        assert!((s.mae - 30.0).abs() < 1e-12);
        assert!((s.rmspe - (3500.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}

//! Sampling from assembled models and the one-dimensional simulation study.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::conditional::{apply_mean, assemble_dag, JointModel, Node, ProcessNetwork};
use crate::csvio::fmt_f64;
use crate::domain::{regular_grid, Grid, Observations};
use crate::inference::{fit_mle, FitOptions, FitResult};
use crate::kernels::{InteractionSpec, MaternParams};
use crate::linalg::{cholesky_jittered, Factor};
use crate::predict::{cokrige, krige};
use crate::{Error, Result};

/// ChaCha8 generator for replicate `replicate` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn normals<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Draws `μ + Lξ`. A zero covariance returns `μ` unchanged.
pub fn sample_gaussian<R: Rng>(
    mean: &DVector<f64>,
    factor: Option<&Factor>,
    rng: &mut R,
) -> DVector<f64> {
    match factor {
        None => mean.clone(),
        Some(f) => mean + f.l() * normals(rng, mean.len()),
    }
}

/// Cholesky factor for sampling, or `None` for an all-zero matrix.
pub fn sampling_factor(c: &DMatrix<f64>, model: &JointModel) -> Result<Option<Factor>> {
    if c.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let policy = model.jitter_policy();
    cholesky_jittered(c, policy).map(Some).map_err(|jitter| Error::InvalidModel {
        context: "sampling covariance".into(),
        jitter,
    })
}

/// One joint draw of every node on the grid, nuggets included, split per node.
pub fn sample_joint(
    model: &JointModel,
    covariates: &BTreeMap<String, Vec<f64>>,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let f = sampling_factor(&model.matrix(), model)?;
    let mu = apply_mean(model, covariates)?;
    let y = sample_gaussian(&mu, f.as_ref(), &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(split(&y, model.n()))
}

fn split(y: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    y.as_slice().chunks(n).map(DVector::from_column_slice).collect()
}

/// Node-by-node sampler: `Y_q = Σ_r B_qr Y_r + E_q` with independent innovations.
pub struct SequentialSampler {
    model: JointModel,
    innovations: Vec<Factor>,
}

impl SequentialSampler {
    pub fn new(model: &JointModel) -> Result<Self> {
        let net = model.network();
        let innovations = (0..net.len())
            .map(|q| {
                let k = crate::conditional::kernel_matrix(model.grid(), &net.node(q).cov);
                cholesky_jittered(&k, model.jitter_policy()).map_err(|jitter| Error::InvalidModel {
                    context: format!("innovation covariance of node '{}'", net.node(q).name),
                    jitter,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SequentialSampler {
            model: model.clone(),
            innovations,
        })
    }

    /// One zero-mean draw per node, nuggets included.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<DVector<f64>> {
        let net = self.model.network();
        let n = self.model.n();
        let mut ys: Vec<DVector<f64>> = Vec::with_capacity(net.len());
        for (q, f) in self.innovations.iter().enumerate() {
            let mut y = f.l() * normals(rng, n);
            for (e, edge) in net.node(q).parents.iter().enumerate() {
                y += self.model.interaction(q, e).mul_vec(&ys[edge.parent]);
            }
            ys.push(y);
        }
        for (q, y) in ys.iter_mut().enumerate() {
            let tau = net.node(q).nugget;
            if tau > 0.0 {
                *y += normals(rng, n) * tau.sqrt();
            }
        }
        ys
    }
}

/// Bivariate simulation study: one variable partly observed, the other fully, both
/// with measurement error.
#[derive(Debug, Clone)]
pub struct SimStudyConfig {
    pub grid: Grid,
    pub c11: MaternParams,
    pub c2_1: MaternParams,
    pub interaction: InteractionSpec,
    pub noise: [f64; 2],
    /// Observed vertex indices per variable.
    pub observed: [Vec<usize>; 2],
    /// Vertices where the variable-1 predictors are scored.
    pub evaluation: Vec<usize>,
    pub seed: u64,
    pub replicates: usize,
    /// Options for refitting the misspecified model.
    pub fit: FitOptions,
}

impl SimStudyConfig {
    /// 200 cells on `[-1, 1]`, variable 1 observed on `[0, 1]`, scored on `[-1, 0]`.
    pub fn reference() -> Self {
        let grid = regular_grid(&[(-1.0, 1.0)], &[200]).expect("valid grid");
        let right: Vec<usize> = (0..grid.len()).filter(|&k| grid.vertex(k)[0] >= 0.0).collect();
        let left: Vec<usize> = (0..grid.len()).filter(|&k| grid.vertex(k)[0] < 0.0).collect();
        SimStudyConfig {
            c11: MaternParams::new(1.0, 25.0, 1.5).expect("valid"),
            c2_1: MaternParams::new(0.2, 75.0, 1.5).expect("valid"),
            interaction: InteractionSpec::ShiftedBisquare {
                amplitude: 5.0,
                aperture: 0.3,
                shift: vec![-0.3],
            },
            noise: [0.25, 0.25],
            observed: [right, (0..grid.len()).collect()],
            evaluation: left,
            grid,
            seed: 1,
            replicates: 50,
            fit: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.replicates == 0 {
            return Err(Error::Validation("replicate count must be at least 1".into()));
        }
        for idx in self.observed.iter().chain(std::iter::once(&self.evaluation)) {
            if let Some(&k) = idx.iter().find(|&&k| k >= n) {
                return Err(Error::Validation(format!(
                    "vertex index {} is outside the grid of {n} vertices",
                    k + 1
                )));
            }
        }
        if self.evaluation.is_empty() {
            return Err(Error::Validation("evaluation region is empty".into()));
        }
        for v in self.noise {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::ParameterDomain(format!("noise variance {v} is invalid")));
            }
        }
        self.truth()?.validate_dim(self.grid.dim())
    }

    /// Generating network, noise included.
    pub fn truth(&self) -> Result<ProcessNetwork> {
        ProcessNetwork::new(vec![
            Node::new("Y1", self.c11).with_noise(self.noise[0]),
            Node::new("Y2", self.c2_1)
                .with_noise(self.noise[1])
                .with_parent(0, self.interaction.clone()),
        ])
    }

    /// Truth with the interaction replaced by an unshifted bisquare of the same
    /// amplitude and aperture.
    pub fn misspecified(&self) -> Result<ProcessNetwork> {
        let (amplitude, aperture) = match &self.interaction {
            InteractionSpec::Bisquare { amplitude, aperture }
            | InteractionSpec::ShiftedBisquare { amplitude, aperture, .. } => (*amplitude, *aperture),
            InteractionSpec::Dirac { amplitude } => (*amplitude, 0.1),
            _ => (0.0, 0.1),
        };
        ProcessNetwork::new(vec![
            Node::new("Y1", self.c11).with_noise(self.noise[0]),
            Node::new("Y2", self.c2_1)
                .with_noise(self.noise[1])
                .with_parent(0, InteractionSpec::Bisquare { amplitude, aperture }),
        ])
    }
}

/// Everything produced for one replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub fields: Vec<DVector<f64>>,
    pub observations: Vec<Observations>,
    /// Variable-1 predictions at every vertex.
    pub cokriging: Vec<f64>,
    pub kriging: Vec<f64>,
    pub misspecified: Vec<f64>,
    pub refit: FitResult,
    pub rmse_cokriging: f64,
    pub rmse_kriging: f64,
    pub rmse_misspecified: f64,
}

#[derive(Debug, Clone)]
pub struct SimStudyResult {
    pub replicates: Vec<Replicate>,
}

impl SimStudyResult {
    pub fn mean_rmse(&self) -> [f64; 3] {
        let m = self.replicates.len() as f64;
        let mut out = [0.0; 3];
        for r in &self.replicates {
            out[0] += r.rmse_cokriging / m;
            out[1] += r.rmse_kriging / m;
            out[2] += r.rmse_misspecified / m;
        }
        out
    }

    /// Replicates where cokriging beats both kriging and the misspecified predictor.
    pub fn cokriging_wins(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.rmse_cokriging < r.rmse_kriging && r.rmse_cokriging < r.rmse_misspecified)
            .count()
    }

    /// Per-replicate scores: replicate, rmse_cokriging, rmse_kriging, rmse_misspecified,
    /// and the refitted amplitude and aperture.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let err = |e: csv::Error| Error::parse(path, e.to_string());
        w.write_record([
            "replicate",
            "rmse_cokriging",
            "rmse_kriging",
            "rmse_misspecified",
            "refit_amplitude",
            "refit_aperture",
        ])
        .map_err(err)?;
        for r in &self.replicates {
            w.write_record([
                (r.index + 1).to_string(),
                fmt_f64(r.rmse_cokriging),
                fmt_f64(r.rmse_kriging),
                fmt_f64(r.rmse_misspecified),
                fmt_f64(r.refit.estimate("Y2.Y1.amplitude").unwrap_or(f64::NAN)),
                fmt_f64(r.refit.estimate("Y2.Y1.aperture").unwrap_or(f64::NAN)),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl Replicate {
    /// Fields and predictions along the grid: x..., y1, y2, cokriging, kriging,
    /// misspecified.
    pub fn write_curves(&self, grid: &Grid, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let err = |e: csv::Error| Error::parse(path, e.to_string());
        let mut header: Vec<String> = ["x", "y", "z"][..grid.dim()].iter().map(|s| s.to_string()).collect();
        header.extend(["y1", "y2", "cokriging", "kriging", "misspecified"].map(String::from));
        w.write_record(&header).map_err(err)?;
        for k in 0..grid.len() {
            let mut row: Vec<String> = grid.vertex(k).iter().map(|&v| fmt_f64(v)).collect();
            for v in [
                self.fields[0][k],
                self.fields[1][k],
                self.cokriging[k],
                self.kriging[k],
                self.misspecified[k],
            ] {
                row.push(fmt_f64(v));
            }
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn rmse(pred: &[f64], truth: &DVector<f64>, idx: &[usize]) -> f64 {
    (idx.iter().map(|&k| (pred[k] - truth[k]).powi(2)).sum::<f64>() / idx.len() as f64).sqrt()
}

/// Simulates, observes and predicts for replicate `index`.
pub fn run_replicate(cfg: &SimStudyConfig, truth: &JointModel, index: usize) -> Result<Replicate> {
    let grid = &cfg.grid;
    let mut rng = replicate_rng(cfg.seed, index as u64);
    let f = sampling_factor(truth.process_matrix(), truth)?;
    let y = sample_gaussian(&DVector::zeros(2 * grid.len()), f.as_ref(), &mut rng);
    let fields = split(&y, grid.len());
    let observations = (0..2)
        .map(|q| {
            let idx = &cfg.observed[q];
            let locs = idx.iter().map(|&k| grid.vertex(k).to_vec()).collect();
            let sd = cfg.noise[q].sqrt();
            let vals = idx
                .iter()
                .map(|&k| fields[q][k] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Observations::new(q, locs, vals)
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<f64>> = grid.vertices().map(|v| v.to_vec()).collect();
    let cokriging = cokrige(truth, &observations, &targets, 0)?.mean;
    let kriging = krige(truth, &observations[0], &targets)?.mean;
    let wrong = cfg.misspecified()?;
    let free = ["Y2.Y1.amplitude", "Y2.Y1.aperture"].map(String::from);
    let opts = FitOptions {
        seed: cfg.fit.seed.wrapping_add(index as u64),
        ..cfg.fit
    };
    let refit = fit_mle(grid, &wrong, &free, &observations, &opts, "misspecified")?;
    let refitted = assemble_dag(grid, &refit.apply(&wrong)?)?;
    let misspecified = cokrige(&refitted, &observations, &targets, 0)?.mean;
    let idx = &cfg.evaluation;
    Ok(Replicate {
        index,
        rmse_cokriging: rmse(&cokriging, &fields[0], idx),
        rmse_kriging: rmse(&kriging, &fields[0], idx),
        rmse_misspecified: rmse(&misspecified, &fields[0], idx),
        fields,
        observations,
        cokriging,
        kriging,
        misspecified,
        refit,
    })
}

/// Runs every replicate; replicates are independent and run concurrently.
pub fn run_sim_study(cfg: &SimStudyConfig) -> Result<SimStudyResult> {
    cfg.validate()?;
    let truth = assemble_dag(&cfg.grid, &cfg.truth()?)?;
    let replicates = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(cfg, &truth, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimStudyResult { replicates })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> JointModel {
        let grid = regular_grid(&[(0.0, 1.0)], &[5]).unwrap();
        let net = ProcessNetwork::new(vec![
            Node::new("a", MaternParams::new(1.0, 3.0, 1.5).unwrap()),
            Node::new("b", MaternParams::new(0.5, 5.0, 0.5).unwrap())
                .with_nugget(0.1)
                .with_parent(0, InteractionSpec::Bisquare { amplitude: 2.0, aperture: 0.5 }),
        ])
        .unwrap();
        assemble_dag(&grid, &net).unwrap()
    }

    #[test]
    fn zero_covariance_returns_the_mean() {
        let m = small_model();
        let z = DMatrix::zeros(3, 3);
        let f = sampling_factor(&z, &m).unwrap();
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(sample_gaussian(&mu, f.as_ref(), &mut replicate_rng(3, 0)), mu);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let m = small_model();
        let a = sample_joint(&m, &BTreeMap::new(), 42).unwrap();
        let b = sample_joint(&m, &BTreeMap::new(), 42).unwrap();
        let c = sample_joint(&m, &BTreeMap::new(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn replicate_streams_differ() {
        let x: f64 = replicate_rng(1, 0).sample(StandardNormal);
        let y: f64 = replicate_rng(1, 1).sample(StandardNormal);
        let z: f64 = replicate_rng(1, 0).sample(StandardNormal);
        assert_ne!(x, y);
        assert_eq!(x, z);
    }

    #[test]
    fn monte_carlo_variance_matches_diagonal() {
        let m = small_model();
        let c = m.matrix();
        let f = sampling_factor(&c, &m).unwrap();
        let mut rng = replicate_rng(7, 0);
        let k = 7;
        let reps = 10_000;
        let mut s2 = 0.0;
        for _ in 0..reps {
            let y = sample_gaussian(&DVector::zeros(10), f.as_ref(), &mut rng);
            s2 += y[k] * y[k];
        }
        let v = s2 / reps as f64;
        assert!((v / c[(k, k)] - 1.0).abs() < 0.05, "{v} vs {}", c[(k, k)]);
    }

    #[test]
    fn sequential_and_joint_agree_in_variance() {
        let m = small_model();
        let s = SequentialSampler::new(&m).unwrap();
        let mut rng = replicate_rng(11, 0);
        let reps = 20_000;
        let c = m.matrix();
        let mut acc = DMatrix::<f64>::zeros(10, 10);
        for _ in 0..reps {
            let ys = s.sample(&mut rng);
            let y = DVector::from_iterator(10, ys.iter().flat_map(|v| v.iter().copied()));
            acc += &y * y.transpose();
        }
        acc /= reps as f64;
        for i in 0..10 {
            for j in 0..10 {
                let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / reps as f64).sqrt();
                assert!((acc[(i, j)] - c[(i, j)]).abs() < 5.0 * se, "{i} {j}");
            }
        }
    }

    #[test]
    fn reference_config_is_valid() {
        let cfg = SimStudyConfig::reference();
        cfg.validate().unwrap();
        assert_eq!(cfg.observed[0].len(), 100);
        assert_eq!(cfg.evaluation.len(), 100);
        let mut bad = cfg.clone();
        bad.evaluation.push(200);
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.replicates = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn noiseless_full_observation_interpolates() {
        let grid = regular_grid(&[(-1.0, 1.0)], &[30]).unwrap();
        let all: Vec<usize> = (0..30).collect();
        let cfg = SimStudyConfig {
            grid,
            noise: [0.0, 0.0],
            observed: [all.clone(), all.clone()],
            evaluation: all,
            replicates: 1,
            c11: MaternParams::new(1.0, 5.0, 1.5).unwrap(),
            c2_1: MaternParams::new(0.2, 10.0, 1.5).unwrap(),
            ..SimStudyConfig::reference()
        };
        let truth = assemble_dag(&cfg.grid, &cfg.truth().unwrap()).unwrap();
        let r = run_replicate(&cfg, &truth, 0).unwrap();
        assert!(r.rmse_cokriging < 1e-6, "{}", r.rmse_cokriging);
    }
}

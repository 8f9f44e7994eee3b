//! Gaussian likelihood, maximum-likelihood fitting and direction selection.

mod nelder_mead;
mod params;

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::conditional::{Node, ProcessNetwork};
use crate::csvio::{fmt_f64, parse_f64};
use crate::domain::{Grid, Observations};
use crate::kernels::InteractionSpec;
use crate::linalg::{cholesky_jittered, JitterPolicy};
use crate::{Error, Result};

pub use nelder_mead::{minimize, Minimum, SimplexOptions};
pub use params::{get_parameter, parameter_names, with_parameters, ParameterMap, SMOOTHNESS_RANGE};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian log-likelihood of `obs` under `net` on `grid`.
///
/// Errors on invalid inputs. A covariance that cannot be factored within the jitter
/// policy yields `-∞`.
pub fn try_loglik(
    grid: &Grid,
    net: &ProcessNetwork,
    obs: &[Observations],
    policy: JitterPolicy,
) -> Result<f64> {
    let model = crate::conditional::assemble_unchecked(grid, net, policy)?;
    let c = model.observation_covariance(obs)?;
    let r = model.observation_residuals(obs)?;
    let m = r.len();
    if m == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    match cholesky_jittered(&c, policy) {
        Ok(f) => {
            let w = f.whiten(&nalgebra::DMatrix::from_column_slice(m, 1, r.as_slice()));
            Ok(-0.5 * (m as f64 * LN_2PI + f.ln_det() + w.norm_squared()))
        }
        Err(jitter) => {
            log::debug!("observation covariance not positive definite (jitter up to {jitter:e})");
            Ok(f64::NEG_INFINITY)
        }
    }
}

/// Like [`try_loglik`], but every failure becomes `-∞`.
pub fn loglik(grid: &Grid, net: &ProcessNetwork, obs: &[Observations], policy: JitterPolicy) -> f64 {
    match try_loglik(grid, net, obs, policy) {
        Ok(v) if !v.is_nan() => v,
        Ok(_) => f64::NEG_INFINITY,
        Err(e) => {
            log::debug!("log-likelihood rejected: {e}");
            f64::NEG_INFINITY
        }
    }
}

pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Total number of starts: the initial values plus perturbed copies.
    pub starts: usize,
    /// Standard deviation of start perturbations on the optimizer scale.
    pub perturbation: f64,
    pub seed: u64,
    pub simplex: SimplexOptions,
    pub jitter: JitterPolicy,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 3,
            perturbation: 0.5,
            seed: 0,
            simplex: SimplexOptions::default(),
            jitter: JitterPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartTrace {
    pub loglik: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    /// Index into `starts` of the run that produced the estimate.
    pub best: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub starts: Vec<StartTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub label: String,
    /// Every parameter of the fitted model in natural units, fixed ones included.
    pub estimates: Vec<(String, f64)>,
    pub free: Vec<String>,
    pub loglik: f64,
    pub aic: f64,
    pub k: usize,
    pub trace: OptimizerTrace,
}

impl FitResult {
    /// Estimates from a run that stopped on its evaluation budget.
    pub fn provisional(&self) -> bool {
        !self.trace.converged
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// `net` with every estimate applied.
    pub fn apply(&self, net: &ProcessNetwork) -> Result<ProcessNetwork> {
        with_parameters(net, &self.estimates)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.trace;
        let _ = writeln!(s, "label = {}", self.label);
        let _ = writeln!(s, "loglik = {}", fmt_f64(self.loglik));
        let _ = writeln!(s, "aic = {}", fmt_f64(self.aic));
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "converged = {}", t.converged);
        let _ = writeln!(s, "provisional = {}", self.provisional());
        let _ = writeln!(s, "iterations = {}", t.iterations);
        let _ = writeln!(s, "evaluations = {}", t.evaluations);
        let _ = writeln!(s, "best_start = {}", t.best + 1);
        for (i, st) in t.starts.iter().enumerate() {
            let _ = writeln!(
                s,
                "start.{} = {} {} {} {}",
                i + 1,
                fmt_f64(st.loglik),
                st.evaluations,
                st.iterations,
                st.converged
            );
        }
        let _ = writeln!(s, "free = {}", self.free.join(","));
        for (n, v) in &self.estimates {
            let _ = writeln!(s, "param.{n} = {}", fmt_f64(*v));
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(path, format!("line {line}: {msg}"));
        let mut label = None;
        let mut loglik = None;
        let mut aic_v = None;
        let mut k = None;
        let mut converged = None;
        let mut iterations = 0;
        let mut evaluations = 0;
        let mut best = 0;
        let mut starts = Vec::new();
        let mut free = Vec::new();
        let mut estimates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| err(ln, "expected 'key = value'".into()))?;
            let num = |v: &str| parse_f64(v).map_err(|m| err(ln, m));
            let int = |v: &str| v.parse::<usize>().map_err(|e| err(ln, format!("{e}: '{v}'")));
            let boolean = |v: &str| v.parse::<bool>().map_err(|e| err(ln, format!("{e}: '{v}'")));
            match key {
                "label" => label = Some(value.to_string()),
                "loglik" => loglik = Some(num(value)?),
                "aic" => aic_v = Some(num(value)?),
                "k" => k = Some(int(value)?),
                "converged" => converged = Some(boolean(value)?),
                "provisional" => {
                    boolean(value)?;
                }
                "iterations" => iterations = int(value)?,
                "evaluations" => evaluations = int(value)?,
                "best_start" => best = int(value)?.saturating_sub(1),
                "free" => {
                    free = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                _ if key.starts_with("start.") => {
                    let f: Vec<&str> = value.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(err(ln, "start entries need 4 fields".into()));
                    }
                    starts.push(StartTrace {
                        loglik: num(f[0])?,
                        evaluations: int(f[1])?,
                        iterations: int(f[2])?,
                        converged: boolean(f[3])?,
                    });
                }
                _ if key.starts_with("param.") => {
                    estimates.push((key["param.".len()..].to_string(), num(value)?));
                }
                _ => return Err(err(ln, format!("unknown key '{key}'"))),
            }
        }
        let missing = |what: &str| Error::parse(path, format!("missing '{what}'"));
        let loglik = loglik.ok_or_else(|| missing("loglik"))?;
        let k = k.ok_or_else(|| missing("k"))?;
        let aic_v = aic_v.ok_or_else(|| missing("aic"))?;
        let expect = aic(loglik, k);
        if (aic_v - expect).abs() > 1e-9 * expect.abs().max(1.0) {
            return Err(Error::parse(
                path,
                format!("aic {aic_v} does not equal -2 loglik + 2k = {expect}"),
            ));
        }
        Ok(FitResult {
            label: label.unwrap_or_default(),
            estimates,
            free,
            loglik,
            aic: expect,
            k,
            trace: OptimizerTrace {
                best,
                iterations,
                evaluations,
                converged: converged.ok_or_else(|| missing("converged"))?,
                starts,
            },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FitResult::from_text(&text, path)
    }
}

/// Maximizes the log-likelihood over the `free` parameters of `net`, starting from
/// the values in `net`.
pub fn fit_mle(
    grid: &Grid,
    net: &ProcessNetwork,
    free: &[String],
    obs: &[Observations],
    opts: &FitOptions,
    label: &str,
) -> Result<FitResult> {
    net.validate_dim(grid.dim())?;
    let map = ParameterMap::new(net, free)?;
    let x0 = map.initial()?;
    let steps = map.steps(&x0);
    let starts = opts.starts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.perturbation.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut points = vec![x0.clone()];
    for _ in 1..starts {
        points.push(x0.iter().map(|x| x + noise.sample(&mut rng)).collect());
    }
    let runs: Vec<Minimum> = points
        .par_iter()
        .map(|p| {
            minimize(
                |x| match map.network(x) {
                    Ok(n) => -loglik(grid, &n, obs, opts.jitter),
                    Err(_) => f64::INFINITY,
                },
                p,
                &steps,
                opts.simplex,
            )
        })
        .collect();
    let trace: Vec<StartTrace> = runs
        .iter()
        .map(|m| StartTrace {
            loglik: -m.value,
            evaluations: m.evaluations,
            iterations: m.iterations,
            converged: m.converged,
        })
        .collect();
    let best = (0..runs.len())
        .filter(|&i| runs[i].value.is_finite())
        .min_by(|&a, &b| runs[a].value.total_cmp(&runs[b].value));
    let Some(best) = best else {
        return Err(Error::OptimizationFailure {
            starts,
            message: format!(
                "log-likelihood was not finite anywhere explored ({} evaluations)",
                trace.iter().map(|t| t.evaluations).sum::<usize>()
            ),
        });
    };
    let fitted = map.network(&runs[best].x)?;
    let ll = -runs[best].value;
    let k = free.len();
    Ok(FitResult {
        label: label.to_string(),
        estimates: parameter_names(&fitted)
            .into_iter()
            .map(|n| {
                let v = get_parameter(&fitted, &n).expect("listed parameter exists");
                (n, v)
            })
            .collect(),
        free: free.to_vec(),
        loglik: ll,
        aic: aic(ll, k),
        k,
        trace: OptimizerTrace {
            best,
            iterations: runs[best].iterations,
            evaluations: runs.iter().map(|m| m.evaluations).sum(),
            converged: runs[best].converged,
            starts: trace,
        },
    })
}

/// One conditioning order to be fitted.
#[derive(Debug, Clone)]
pub struct Direction {
    pub label: String,
    pub network: ProcessNetwork,
    pub free: Vec<String>,
    /// `order[q]` is the observed variable modeled by node `q`.
    pub order: Vec<usize>,
}

impl Direction {
    /// The network as given, labelled by its edges.
    pub fn forward(net: &ProcessNetwork, free: &[String]) -> Self {
        Direction {
            label: edge_label(net),
            network: net.clone(),
            free: free.to_vec(),
            order: (0..net.len()).collect(),
        }
    }
}

fn edge_label(net: &ProcessNetwork) -> String {
    let edges: Vec<String> = net
        .nodes()
        .iter()
        .flat_map(|n| {
            n.parents
                .iter()
                .map(move |e| format!("{}->{}", net.node(e.parent).name, n.name))
        })
        .collect();
    if edges.is_empty() {
        net.nodes().iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(",")
    } else {
        edges.join(",")
    }
}

/// Swaps the roles of a two-node network.
///
/// Covariance parameters and the interaction stay with their role (root, child), so
/// both directions start from the same numbers; shifts are negated. Nugget, noise and
/// mean stay with their variable.
pub fn reverse_bivariate(net: &ProcessNetwork) -> Result<ProcessNetwork> {
    if net.len() != 2 || net.node(1).parents.len() != 1 || !net.node(0).parents.is_empty() {
        return Err(Error::Validation(
            "direction reversal needs a two-node network with one edge".into(),
        ));
    }
    let (a, b) = (net.node(0), net.node(1));
    let interaction = match &b.parents[0].interaction {
        InteractionSpec::ShiftedBisquare {
            amplitude,
            aperture,
            shift,
        } => InteractionSpec::ShiftedBisquare {
            amplitude: *amplitude,
            aperture: *aperture,
            shift: shift.iter().map(|d| -d).collect(),
        },
        other => other.clone(),
    };
    let root = Node {
        name: b.name.clone(),
        cov: a.cov,
        parents: Vec::new(),
        mean: b.mean.clone(),
        nugget: b.nugget,
        noise: b.noise,
    };
    let child = Node {
        name: a.name.clone(),
        cov: b.cov,
        parents: Vec::new(),
        mean: a.mean.clone(),
        nugget: a.nugget,
        noise: a.noise,
    }
    .with_parent(0, interaction);
    ProcessNetwork::new(vec![root, child])
}

/// Both conditioning orders of a two-node network, with `free` renamed to match.
pub fn bivariate_directions(net: &ProcessNetwork, free: &[String]) -> Result<Vec<Direction>> {
    let rev = reverse_bivariate(net)?;
    let (a, b) = (&net.node(0).name, &net.node(1).name);
    let renamed = free
        .iter()
        .map(|n| {
            let parts: Vec<&str> = n.split('.').collect();
            match parts.as_slice() {
                [c, p, s] if c == b && p == a => format!("{a}.{b}.{s}"),
                _ => n.clone(),
            }
        })
        .collect::<Vec<_>>();
    Ok(vec![
        Direction::forward(net, free),
        Direction {
            label: edge_label(&rev),
            network: rev,
            free: renamed,
            order: vec![1, 0],
        },
    ])
}

/// Observations relabelled so that node `q` sees variable `order[q]`.
pub fn reorder_observations(obs: &[Observations], order: &[usize]) -> Result<Vec<Observations>> {
    order
        .iter()
        .enumerate()
        .map(|(q, &v)| {
            let mut o = obs
                .iter()
                .find(|o| o.variable == v)
                .cloned()
                .unwrap_or_else(|| Observations::empty(v));
            o.variable = q;
            Ok(o)
        })
        .collect()
}

/// Fits every direction with the same options and ranks them by AIC, then by fewer
/// parameters, then by label.
pub fn compare_directions(
    grid: &Grid,
    directions: &[Direction],
    obs: &[Observations],
    opts: &FitOptions,
) -> Result<Vec<FitResult>> {
    let mut out = Vec::with_capacity(directions.len());
    for d in directions {
        if d.order.len() != d.network.len() {
            return Err(Error::Validation(format!(
                "direction '{}' orders {} variables for {} nodes",
                d.label,
                d.order.len(),
                d.network.len()
            )));
        }
        let o = reorder_observations(obs, &d.order)?;
        out.push(fit_mle(grid, &d.network, &d.free, &o, opts, &d.label)?);
    }
    out.sort_by(|a, b| {
        a.aic
            .total_cmp(&b.aic)
            .then(a.k.cmp(&b.k))
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::regular_grid;
    use crate::kernels::MaternParams;

    fn unit_net() -> ProcessNetwork {
        ProcessNetwork::new(vec![Node::new("Y1", MaternParams::new(1.0, 1.0, 0.5).unwrap())]).unwrap()
    }

    #[test]
    fn single_observation_loglik() {
        let grid = regular_grid(&[(0.0, 1.0)], &[4]).unwrap();
        let obs = vec![Observations::new(0, vec![vec![0.3]], vec![0.0]).unwrap()];
        let ll = try_loglik(&grid, &unit_net(), &obs, JitterPolicy::default()).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-15);
    }

    #[test]
    fn independent_observations_add() {
        let grid = regular_grid(&[(0.0, 10.0)], &[4]).unwrap();
        let net = ProcessNetwork::new(vec![
            Node::new("Y1", MaternParams::new(2.0, 50.0, 0.5).unwrap()),
        ])
        .unwrap();
        let obs = vec![Observations::new(0, vec![vec![1.0], vec![9.0]], vec![0.7, -1.1]).unwrap()];
        let ll = try_loglik(&grid, &net, &obs, JitterPolicy::default()).unwrap();
        let uni = |z: f64| -0.5 * (LN_2PI + 2f64.ln() + z * z / 2.0);
        assert!((ll - uni(0.7) - uni(-1.1)).abs() < 1e-12);
    }

    #[test]
    fn aic_reproduces_reference_rows() {
        let rows = [
            (8, -1276.77, 2569.54),
            (9, -1269.92, 2557.84),
            (10, -1264.90, 2549.80),
            (12, -1258.21, 2540.43),
            (8, -1265.76, 2547.52),
            (10, -1260.87, 2541.75),
            (11, -1265.53, 2553.06),
        ];
        for (k, ll, expected) in rows {
            assert!((aic(ll, k) - expected).abs() <= 0.02 + 1e-9, "{k} {ll}");
        }
    }

    #[test]
    fn variance_only_fit() {
        let grid = regular_grid(&[(0.0, 1.0)], &[3]).unwrap();
        let locs: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 100.0]).collect();
        let z = vec![1.2, -0.4, 2.0, -1.6, 0.3];
        let grid = Grid::new(1, vec![0.0, 200.0, 400.0], vec![1.0; 3], grid.metric()).unwrap();
        let obs = vec![Observations::new(0, locs, z.clone()).unwrap()];
        let net = ProcessNetwork::new(vec![
            Node::new("Y1", MaternParams::new(0.3, 50.0, 0.5).unwrap()),
        ])
        .unwrap();
        let fit = fit_mle(&grid, &net, &["Y1.variance".into()], &obs, &FitOptions::default(), "m").unwrap();
        let mle = z.iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert!(fit.trace.converged);
        assert!((fit.estimate("Y1.variance").unwrap() - mle).abs() < 1e-5 * mle);
        assert_eq!(fit.k, 1);
        assert_eq!(fit.aic, aic(fit.loglik, 1));
        assert_eq!(fit.estimates.len(), 5);
    }

    #[test]
    fn fit_result_text_round_trip() {
        let fit = FitResult {
            label: "Y1->Y2".into(),
            estimates: vec![("Y1.variance".into(), 1.0 / 3.0), ("Y2.Y1.amplitude".into(), -14.3)],
            free: vec!["Y2.Y1.amplitude".into()],
            loglik: -1258.21,
            aic: aic(-1258.21, 1),
            k: 1,
            trace: OptimizerTrace {
                best: 1,
                iterations: 40,
                evaluations: 170,
                converged: false,
                starts: vec![
                    StartTrace { loglik: -1300.0, evaluations: 80, iterations: 20, converged: true },
                    StartTrace { loglik: -1258.21, evaluations: 90, iterations: 40, converged: false },
                ],
            },
        };
        let back = FitResult::from_text(&fit.to_text(), Path::new("fit.txt")).unwrap();
        assert_eq!(back, fit);
        assert!(back.provisional());
        let bad = fit.to_text().replace("aic = ", "aic = 1");
        assert!(FitResult::from_text(&bad, Path::new("fit.txt")).is_err());
    }

    #[test]
    fn reversal_keeps_roles_and_variables() {
        let net = ProcessNetwork::new(vec![
            Node::new("Y1", MaternParams::new(1.0, 2.0, 1.5).unwrap()).with_noise(0.1),
            Node::new("Y2", MaternParams::new(0.5, 3.0, 1.5).unwrap())
                .with_noise(0.2)
                .with_parent(
                    0,
                    InteractionSpec::ShiftedBisquare { amplitude: 5.0, aperture: 0.3, shift: vec![-0.3] },
                ),
        ])
        .unwrap();
        let free = vec!["Y1.variance".to_string(), "Y2.Y1.amplitude".to_string()];
        let dirs = bivariate_directions(&net, &free).unwrap();
        let rev = &dirs[1];
        assert_eq!(rev.label, "Y2->Y1");
        assert_eq!(rev.network.node(0).name, "Y2");
        assert_eq!(rev.network.node(0).cov, net.node(0).cov);
        assert_eq!(rev.network.node(0).noise, 0.2);
        assert_eq!(rev.free, ["Y1.variance", "Y1.Y2.amplitude"]);
        assert_eq!(get_parameter(&rev.network, "Y1.Y2.shift1").unwrap(), 0.3);
        let twice = reverse_bivariate(&rev.network).unwrap();
        assert_eq!(twice, net);
    }

    #[test]
    fn single_direction_report() {
        let grid = regular_grid(&[(0.0, 1.0)], &[4]).unwrap();
        let obs = vec![Observations::new(0, vec![vec![0.125], vec![0.625]], vec![0.5, 0.1]).unwrap()];
        let net = unit_net();
        let d = Direction::forward(&net, &["Y1.variance".into()]);
        let report = compare_directions(&grid, &[d], &obs, &FitOptions::default()).unwrap();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].label, "Y1");
    }

    #[test]
    fn fit_is_deterministic() {
        let grid = regular_grid(&[(0.0, 1.0)], &[6]).unwrap();
        let obs = vec![Observations::new(
            0,
            grid.vertices().map(|v| v.to_vec()).collect(),
            vec![0.3, 0.5, 0.2, -0.4, -0.9, -0.2],
        )
        .unwrap()];
        let free = vec!["Y1.variance".to_string(), "Y1.scale".to_string()];
        let o = FitOptions { seed: 9, ..Default::default() };
        let a = fit_mle(&grid, &unit_net(), &free, &obs, &o, "a").unwrap();
        let b = fit_mle(&grid, &unit_net(), &free, &obs, &o, "a").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.starts.len(), 3);
    }
}

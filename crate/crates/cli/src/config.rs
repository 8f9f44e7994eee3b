//! TOML model configuration.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use condcov::conditional::{Node, ProcessNetwork};
use condcov::domain::{load_mesh, read_numeric_csv, regular_grid, Grid, Metric};
use condcov::inference::{FitOptions, SimplexOptions};
use condcov::kernels::{InteractionKind, InteractionSpec, InteractionTable, MaternParams};
use condcov::linalg::JitterPolicy;
use condcov::spectral::{SpectralCandidate, DEFAULT_SAMPLES};
use condcov::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    jitter_max: Option<f64>,
    grid: RawGrid,
    #[serde(rename = "node")]
    nodes: Vec<RawNode>,
    fit: Option<RawFit>,
    simulate: Option<RawSimulate>,
    predict: Option<RawPredict>,
    spectral: Option<RawSpectral>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    bounds: Option<Vec<[f64; 2]>>,
    counts: Option<Vec<usize>>,
    mesh: Option<String>,
    metric: Option<String>,
    radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatern {
    variance: f64,
    scale: f64,
    smoothness: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    variance: f64,
    scale: f64,
    smoothness: f64,
    #[serde(default)]
    nugget: f64,
    #[serde(default)]
    noise: f64,
    mean: Option<RawMean>,
    #[serde(default, rename = "parent")]
    parents: Vec<RawParent>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMean {
    covariates: Vec<String>,
    coefficients: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParent {
    name: String,
    kind: String,
    amplitude: Option<f64>,
    aperture: Option<f64>,
    shift: Option<Vec<f64>>,
    table: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFit {
    #[serde(default)]
    free: Vec<String>,
    starts: Option<usize>,
    perturbation: Option<f64>,
    seed: Option<u64>,
    tolerance: Option<f64>,
    max_evaluations: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    replicates: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    study: bool,
    #[serde(default)]
    observe: Vec<RawRegion>,
    evaluate: Option<RawRegion>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredict {
    targets: Option<String>,
    target_var: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCandidate {
    kind: String,
    variance: Option<f64>,
    scale: Option<f64>,
    smoothness: Option<f64>,
    table: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectral {
    wmax: Option<f64>,
    samples: Option<usize>,
    marginal1: Option<RawMatern>,
    marginal2: Option<RawMatern>,
    candidate: RawCandidate,
}

/// Axis-aligned box; a missing bound is unbounded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Region {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Region {
    pub fn contains(&self, loc: &[f64]) -> bool {
        let above = self.lower.as_ref().is_none_or(|l| l.iter().zip(loc).all(|(a, x)| x >= a));
        let below = self.upper.as_ref().is_none_or(|u| u.iter().zip(loc).all(|(b, x)| x <= b));
        above && below
    }

    /// Indices of the grid vertices inside the box.
    pub fn select(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.len()).filter(|&k| self.contains(grid.vertex(k))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub free: Vec<String>,
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSettings {
    pub replicates: usize,
    pub seed: u64,
    /// Run the bivariate predictor comparison as well as sampling.
    pub study: bool,
    /// Observed region per variable; variables without one are observed everywhere.
    pub observe: Vec<Region>,
    /// Scoring region; defaults to where variable 1 is unobserved.
    pub evaluate: Option<Region>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictSettings {
    pub targets: Option<PathBuf>,
    /// Zero-based.
    pub target_var: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSettings {
    pub wmax: f64,
    pub samples: usize,
    pub marginal1: MaternParams,
    pub marginal2: MaternParams,
    pub candidate: SpectralCandidate,
}

/// A validated model configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path: PathBuf,
    pub grid: Grid,
    pub network: ProcessNetwork,
    pub jitter: JitterPolicy,
    pub fit: FitSettings,
    pub simulate: SimulateSettings,
    pub predict: PredictSettings,
    pub spectral: Option<SpectralSettings>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path)
}

/// Parses `text`; relative file references resolve against the directory of `path`.
pub fn parse_config_str(text: &str, path: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let grid = build_grid(&raw.grid, &resolve)?;
    let network = build_network(&raw.nodes, &resolve)?;
    network.validate_dim(grid.dim())?;
    let jitter = match raw.jitter_max {
        Some(j) if !(j.is_finite() && j >= 0.0) => {
            return Err(Error::Config(format!("jitter_max must be nonnegative, got {j}")))
        }
        Some(j) => JitterPolicy::new(j),
        None => JitterPolicy::default(),
    };

    let defaults = FitOptions::default();
    let fit = match raw.fit {
        None => FitSettings {
            free: Vec::new(),
            options: FitOptions { jitter, ..defaults },
        },
        Some(f) => FitSettings {
            free: f.free,
            options: FitOptions {
                starts: f.starts.unwrap_or(defaults.starts),
                perturbation: f.perturbation.unwrap_or(defaults.perturbation),
                seed: f.seed.unwrap_or(defaults.seed),
                simplex: SimplexOptions {
                    tolerance: f.tolerance.unwrap_or(defaults.simplex.tolerance),
                    max_evaluations: f.max_evaluations.unwrap_or(defaults.simplex.max_evaluations),
                },
                jitter,
            },
        },
    };
    if fit.options.starts == 0 {
        return Err(Error::Config("fit.starts must be at least 1".into()));
    }

    let region = |r: RawRegion| -> Result<Region> {
        for b in [&r.lower, &r.upper].into_iter().flatten() {
            if b.len() != grid.dim() {
                return Err(Error::Config(format!(
                    "region bound has {} coordinates but locations have {}",
                    b.len(),
                    grid.dim()
                )));
            }
        }
        Ok(Region {
            lower: r.lower,
            upper: r.upper,
        })
    };
    let simulate = match raw.simulate {
        None => SimulateSettings {
            replicates: 1,
            seed: 0,
            study: false,
            observe: Vec::new(),
            evaluate: None,
        },
        Some(s) => {
            if s.observe.len() > network.len() {
                return Err(Error::Config(format!(
                    "{} observation regions for {} nodes",
                    s.observe.len(),
                    network.len()
                )));
            }
            SimulateSettings {
                replicates: s.replicates.unwrap_or(1),
                seed: s.seed.unwrap_or(0),
                study: s.study,
                observe: s.observe.into_iter().map(region).collect::<Result<_>>()?,
                evaluate: s.evaluate.map(region).transpose()?,
            }
        }
    };
    if simulate.study && network.len() != 2 {
        return Err(Error::Config("the simulation study needs a two-node network".into()));
    }

    let predict = match raw.predict {
        None => PredictSettings {
            targets: None,
            target_var: 0,
        },
        Some(p) => PredictSettings {
            targets: p.targets.as_deref().map(resolve),
            target_var: one_based(p.target_var.unwrap_or(1), network.len())?,
        },
    };

    let spectral = raw
        .spectral
        .map(|s| -> Result<SpectralSettings> {
            let marginal = |m: Option<RawMatern>, q: usize| -> Result<MaternParams> {
                match m {
                    Some(m) => MaternParams::new(m.variance, m.scale, m.smoothness),
                    None if q < network.len() && network.node(q).parents.is_empty() => {
                        Ok(network.node(q).cov)
                    }
                    None => Err(Error::Config(format!(
                        "spectral.marginal{} is required unless node {} is a root",
                        q + 1,
                        q + 1
                    ))),
                }
            };
            let c = s.candidate;
            let kind = c.kind.trim().to_ascii_lowercase();
            let candidate = match kind.as_str() {
                "zero" => SpectralCandidate::Zero,
                "matern" => SpectralCandidate::Matern(MaternParams::new(
                    required(c.variance, "spectral.candidate.variance")?,
                    required(c.scale, "spectral.candidate.scale")?,
                    required(c.smoothness, "spectral.candidate.smoothness")?,
                )?),
                "tabulated" => {
                    let p = resolve(&required(c.table, "spectral.candidate.table")?);
                    let (header, rows) = read_numeric_csv(&p)?;
                    if header.len() != 2 {
                        return Err(Error::parse(&p, "expected columns `w, value`"));
                    }
                    SpectralCandidate::Tabulated {
                        w: rows.iter().map(|r| r[0]).collect(),
                        values: rows.iter().map(|r| r[1]).collect(),
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown spectral candidate kind '{other}'; expected one of: zero, matern, tabulated"
                    )))
                }
            };
            let marginal1 = marginal(s.marginal1, 0)?;
            Ok(SpectralSettings {
                wmax: s.wmax.unwrap_or(1e3 * marginal1.scale),
                samples: s.samples.unwrap_or(DEFAULT_SAMPLES),
                marginal1,
                marginal2: marginal(s.marginal2, 1)?,
                candidate,
            })
        })
        .transpose()?;

    Ok(RunConfig {
        path: path.to_path_buf(),
        grid,
        network,
        jitter,
        fit,
        simulate,
        predict,
        spectral,
    })
}

/// Zero-based index of a 1-based variable number.
pub fn one_based(v: usize, nvars: usize) -> Result<usize> {
    if v == 0 || v > nvars {
        return Err(Error::Validation(format!(
            "variable {v} is not in 1..={nvars}"
        )));
    }
    Ok(v - 1)
}

fn required<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("'{what}' is required")))
}

fn build_grid(g: &RawGrid, resolve: &dyn Fn(&str) -> PathBuf) -> Result<Grid> {
    let metric = match g.metric.as_deref().map(|m| m.trim().to_ascii_lowercase()) {
        None => Metric::Euclidean,
        Some(m) if m == "euclidean" => Metric::Euclidean,
        Some(m) if m == "chordal" => Metric::Chordal {
            radius: required(g.radius, "grid.radius")?,
        },
        Some(m) => {
            return Err(Error::Config(format!(
                "unknown metric '{m}'; expected one of: euclidean, chordal"
            )))
        }
    };
    if g.radius.is_some() && metric == Metric::Euclidean {
        return Err(Error::Config("grid.radius only applies to the chordal metric".into()));
    }
    match (&g.mesh, &g.bounds, &g.counts) {
        (Some(mesh), None, None) => load_mesh(&resolve(mesh), metric),
        (None, Some(bounds), Some(counts)) => {
            let b: Vec<(f64, f64)> = bounds.iter().map(|[a, b]| (*a, *b)).collect();
            regular_grid(&b, counts)?.with_metric(metric)
        }
        _ => Err(Error::Config(
            "grid needs either `mesh` or both `bounds` and `counts`".into(),
        )),
    }
}

fn build_interaction(p: &RawParent, resolve: &dyn Fn(&str) -> PathBuf) -> Result<InteractionSpec> {
    let kind: InteractionKind = p.kind.parse()?;
    let what = |f: &str| format!("parent '{}' ({kind}): {f}", p.name);
    let unused = |present: bool, f: &str| -> Result<()> {
        if present {
            Err(Error::Config(format!("{} is not used by this kind", what(f))))
        } else {
            Ok(())
        }
    };
    let need = |v: Option<f64>, f: &str| required(v, &what(f));
    unused(p.table.is_some() && kind != InteractionKind::Tabulated, "table")?;
    unused(p.shift.is_some() && kind != InteractionKind::ShiftedBisquare, "shift")?;
    unused(
        p.aperture.is_some()
            && !matches!(kind, InteractionKind::Bisquare | InteractionKind::ShiftedBisquare),
        "aperture",
    )?;
    unused(
        p.amplitude.is_some() && matches!(kind, InteractionKind::Zero | InteractionKind::Tabulated),
        "amplitude",
    )?;
    Ok(match kind {
        InteractionKind::Zero => InteractionSpec::Zero,
        InteractionKind::Dirac => InteractionSpec::Dirac {
            amplitude: need(p.amplitude, "amplitude")?,
        },
        InteractionKind::Bisquare => InteractionSpec::Bisquare {
            amplitude: need(p.amplitude, "amplitude")?,
            aperture: need(p.aperture, "aperture")?,
        },
        InteractionKind::ShiftedBisquare => InteractionSpec::ShiftedBisquare {
            amplitude: need(p.amplitude, "amplitude")?,
            aperture: need(p.aperture, "aperture")?,
            shift: required(p.shift.clone(), &what("shift"))?,
        },
        InteractionKind::Tabulated => InteractionSpec::Tabulated(InteractionTable::from_csv(
            &resolve(&required(p.table.clone(), &what("table"))?),
        )?),
    })
}

fn build_network(raw: &[RawNode], resolve: &dyn Fn(&str) -> PathBuf) -> Result<ProcessNetwork> {
    if raw.is_empty() {
        return Err(Error::Config("at least one [[node]] is required".into()));
    }
    let mut index = HashMap::new();
    for (i, n) in raw.iter().enumerate() {
        if index.insert(n.name.as_str(), i).is_some() {
            return Err(Error::Config(format!("node '{}' is declared twice", n.name)));
        }
    }
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(raw.len());
    for n in raw {
        let mut ps = Vec::new();
        for p in &n.parents {
            let &j = index.get(p.name.as_str()).ok_or_else(|| {
                Error::Config(format!("node '{}' names unknown parent '{}'", n.name, p.name))
            })?;
            ps.push(j);
        }
        parents.push(ps);
    }
    let order = topological_order(raw, &parents)?;
    let mut position = vec![0; raw.len()];
    for (pos, &i) in order.iter().enumerate() {
        position[i] = pos;
    }
    let mut nodes = Vec::with_capacity(raw.len());
    for &i in &order {
        let r = &raw[i];
        let mut node = Node::new(r.name.clone(), MaternParams::new(r.variance, r.scale, r.smoothness).map_err(|e| {
            Error::Config(format!("node '{}': {e}", r.name))
        })?)
        .with_nugget(r.nugget)
        .with_noise(r.noise);
        if let Some(m) = &r.mean {
            node = node.with_mean(m.covariates.clone(), m.coefficients.clone());
        }
        for (p, &j) in r.parents.iter().zip(&parents[i]) {
            node = node.with_parent(position[j], build_interaction(p, resolve)?);
        }
        nodes.push(node);
    }
    ProcessNetwork::new(nodes)
}

/// Parents-first order, keeping declaration order among ready nodes.
fn topological_order(raw: &[RawNode], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = raw.len();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&i| !placed[i] && parents[i].iter().all(|&p| placed[p]));
        match next {
            Some(i) => {
                placed[i] = true;
                order.push(i);
            }
            None => {
                let cycle = find_cycle(parents, &placed);
                let names: Vec<&str> = cycle.iter().map(|&i| raw[i].name.as_str()).collect();
                return Err(Error::Validation(format!(
                    "network not acyclic: {}",
                    names.join(" -> ")
                )));
            }
        }
    }
    Ok(order)
}

/// A parent-to-child cycle among unplaced nodes, first node repeated at the end.
fn find_cycle(parents: &[Vec<usize>], placed: &[bool]) -> Vec<usize> {
    let start = (0..parents.len()).find(|&i| !placed[i]).expect("an unplaced node");
    // walking to an unplaced parent always succeeds, so the walk must revisit a node
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let p = *parents[cur]
            .iter()
            .find(|&&p| !placed[p])
            .expect("unplaced node has an unplaced parent");
        if let Some(pos) = path.iter().position(|&v| v == p) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            cycle.push(p);
            cycle.reverse();
            return cycle;
        }
        path.push(p);
        cur = p;
    }
}

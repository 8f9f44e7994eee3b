//! Command-line workflows over the `condcov` library.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use condcov::conditional::{assemble_dag_with, JointModel, ProcessNetwork};
use condcov::csvio::fmt_f64;
use condcov::domain::{load_observations, read_numeric_csv, write_observations, Observations};
use condcov::inference::{bivariate_directions, compare_directions, fit_mle, Direction, FitResult};
use condcov::linalg::JitterPolicy;
use condcov::predict::{cokrige_with_covariates, loo_cv, write_cv_csv};
use condcov::sim::{replicate_rng, run_sim_study, sample_gaussian, sampling_factor, SimStudyConfig};
use condcov::spectral::check_cross_validity;
use condcov::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

pub use config::{parse_config, parse_config_str, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "condcov", version, about = "Multivariate spatial models built by conditioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample fields (and optionally run the predictor comparison study).
    Simulate(Common),
    /// Maximum-likelihood fit of the free parameters.
    Fit(Common),
    /// Cokriging predictions of one variable.
    Predict(Common),
    /// Leave-one-out cross-validation scores.
    Cv(Common),
    /// Spectral validity of a candidate cross-covariance.
    SpectralCheck(Common),
    /// Fit every conditioning order and rank them by AIC.
    CompareDirections(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model configuration (TOML). `compare-directions` accepts one per order.
    #[arg(long, required = true)]
    pub config: Vec<PathBuf>,
    /// Observations CSV: variable, x[, y[, z]], value[, covariates...].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// 1-based variable to predict.
    #[arg(long)]
    pub target_var: Option<usize>,
    /// Largest diagonal jitter as a multiple of the mean diagonal.
    #[arg(long)]
    pub jitter_max: Option<f64>,
    /// Fitted parameters to apply before predicting.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

/// 0 success, 1 validation or input problems, 2 numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::SpectralCheck(a) => spectral_check(a),
        Command::CompareDirections(a) => compare(a),
    }
}

fn load(args: &Common, path: &Path) -> Result<RunConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(j) = args.jitter_max {
        if !(j.is_finite() && j >= 0.0) {
            return Err(Error::Validation(format!("--jitter-max must be nonnegative, got {j}")));
        }
        cfg.jitter = JitterPolicy::new(j);
        cfg.fit.options.jitter = cfg.jitter;
    }
    if let Some(s) = args.seed {
        cfg.simulate.seed = s;
        cfg.fit.options.seed = s;
    }
    if let Some(r) = args.replicates {
        cfg.simulate.replicates = r;
    }
    if let Some(t) = args.target_var {
        cfg.predict.target_var = config::one_based(t, cfg.network.len())?;
    }
    if let Some(p) = &args.params {
        cfg.network = FitResult::read(p)?.apply(&cfg.network)?;
    }
    Ok(cfg)
}

fn single(args: &Common) -> Result<RunConfig> {
    match args.config.as_slice() {
        [one] => load(args, one),
        _ => Err(Error::Validation("this command takes exactly one --config".into())),
    }
}

fn data(args: &Common, nvars: usize) -> Result<Vec<Observations>> {
    let path = args
        .data
        .as_ref()
        .ok_or_else(|| Error::Validation("--data is required".into()))?;
    if !path.exists() {
        return Err(Error::Validation(format!("data file {} does not exist", path.display())));
    }
    load_observations(path, nvars)
}

fn out_dir(args: &Common) -> Result<&Path> {
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    Ok(&args.out)
}

fn model(cfg: &RunConfig) -> Result<JointModel> {
    assemble_dag_with(&cfg.grid, &cfg.network, cfg.jitter)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path, e.to_string())
}

fn simulate(args: &Common) -> Result<()> {
    let cfg = single(args)?;
    let out = out_dir(args)?;
    let s = &cfg.simulate;
    if s.replicates == 0 {
        return Err(Error::Validation("replicate count must be at least 1".into()));
    }
    let m = model(&cfg)?;
    let net = &cfg.network;
    let n = cfg.grid.len();
    let f = sampling_factor(&m.matrix(), &m)?;
    let mu = condcov::conditional::apply_mean(&m, &BTreeMap::new())?;
    let observed: Vec<Vec<usize>> = (0..net.len())
        .map(|q| match s.observe.get(q) {
            Some(r) => r.select(&cfg.grid),
            None => (0..n).collect(),
        })
        .collect();

    let path = out.join("fields.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let coords = &["x", "y", "z"][..cfg.grid.dim()];
    let mut header = vec!["replicate".to_string()];
    header.extend(coords.iter().map(|c| c.to_string()));
    header.extend(net.nodes().iter().map(|n| n.name.clone()));
    w.write_record(&header).map_err(csv_err(&path))?;
    for r in 0..s.replicates {
        let mut rng = replicate_rng(s.seed, r as u64);
        let y = sample_gaussian(&mu, f.as_ref(), &mut rng);
        for k in 0..n {
            let mut row = vec![(r + 1).to_string()];
            row.extend(cfg.grid.vertex(k).iter().map(|&v| fmt_f64(v)));
            row.extend((0..net.len()).map(|q| fmt_f64(y[q * n + k])));
            w.write_record(&row).map_err(csv_err(&path))?;
        }
        let obs = (0..net.len())
            .map(|q| {
                let sd = net.node(q).noise.sqrt();
                let locs = observed[q].iter().map(|&k| cfg.grid.vertex(k).to_vec()).collect();
                let vals = observed[q]
                    .iter()
                    .map(|&k| y[q * n + k] + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Observations::new(q, locs, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        write_observations(&out.join(format!("observations_{}.csv", r + 1)), &obs)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("wrote {} replicate(s) of {} nodes on {n} vertices", s.replicates, net.len());

    if s.study {
        let node1 = net.node(1);
        let evaluation = match &s.evaluate {
            Some(r) => r.select(&cfg.grid),
            None => (0..n).filter(|k| !observed[0].contains(k)).collect(),
        };
        let study = SimStudyConfig {
            grid: cfg.grid.clone(),
            c11: net.node(0).cov,
            c2_1: node1.cov,
            interaction: node1.parents[0].interaction.clone(),
            noise: [net.node(0).noise, node1.noise],
            observed: [observed[0].clone(), observed[1].clone()],
            evaluation,
            seed: s.seed,
            replicates: s.replicates,
            fit: cfg.fit.options,
        };
        let res = run_sim_study(&study)?;
        res.write_csv(&out.join("sim_scores.csv"))?;
        res.replicates[0].write_curves(&cfg.grid, &out.join("curves.csv"))?;
        let [co, kr, mis] = res.mean_rmse();
        println!("mean RMSE  cokriging {co:.6}  kriging {kr:.6}  misspecified {mis:.6}");
        println!(
            "cokriging best in {}/{} replicates",
            res.cokriging_wins(),
            res.replicates.len()
        );
    }
    Ok(())
}

fn fit(args: &Common) -> Result<()> {
    let cfg = single(args)?;
    if cfg.fit.free.is_empty() {
        return Err(Error::Validation("no free parameters: set fit.free in the config".into()));
    }
    let obs = data(args, cfg.network.len())?;
    let out = out_dir(args)?;
    let label = cfg.path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let res = fit_mle(&cfg.grid, &cfg.network, &cfg.fit.free, &obs, &cfg.fit.options, label)?;
    res.write(&out.join("fit.txt"))?;
    print_fit(&res);
    Ok(())
}

fn print_fit(res: &FitResult) {
    println!(
        "{}: loglik {:.4}  k {}  AIC {:.4}{}",
        res.label,
        res.loglik,
        res.k,
        res.aic,
        if res.provisional() { "  (provisional: evaluation budget reached)" } else { "" }
    );
    for name in &res.free {
        if let Some(v) = res.estimate(name) {
            println!("  {name} = {v:.6e}");
        }
    }
}

/// Target locations with any covariate columns, or the grid vertices.
fn targets(cfg: &RunConfig) -> Result<(Vec<Vec<f64>>, BTreeMap<String, Vec<f64>>)> {
    let dim = cfg.grid.dim();
    match &cfg.predict.targets {
        None => Ok((cfg.grid.vertices().map(|v| v.to_vec()).collect(), BTreeMap::new())),
        Some(path) => {
            let (header, rows) = read_numeric_csv(path)?;
            if header.len() < dim {
                return Err(Error::parse(path, format!("expected {dim} coordinate columns")));
            }
            let locs: Vec<Vec<f64>> = rows.iter().map(|r| r[..dim].to_vec()).collect();
            for l in &locs {
                cfg.grid.check_location(l)?;
            }
            let cov = header[dim..]
                .iter()
                .enumerate()
                .map(|(j, h)| (h.clone(), rows.iter().map(|r| r[dim + j]).collect()))
                .collect();
            Ok((locs, cov))
        }
    }
}

fn predict(args: &Common) -> Result<()> {
    let cfg = single(args)?;
    let obs = data(args, cfg.network.len())?;
    let out = out_dir(args)?;
    let m = model(&cfg)?;
    let (locs, cov) = targets(&cfg)?;
    let q = cfg.predict.target_var;
    let res = cokrige_with_covariates(&m, &obs, &locs, q, &cov)?;
    res.write_csv(&out.join("predictions.csv"))?;
    println!(
        "predicted {} at {} locations from {} observations",
        cfg.network.node(q).name,
        locs.len(),
        obs.iter().map(Observations::len).sum::<usize>()
    );
    Ok(())
}

fn cv(args: &Common) -> Result<()> {
    let cfg = single(args)?;
    let obs = data(args, cfg.network.len())?;
    let out = out_dir(args)?;
    let m = model(&cfg)?;
    let (scores, folds) = loo_cv(&m, &obs)?;
    write_cv_csv(&out.join("cv.csv"), &scores)?;
    let path = out.join("cv_folds.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["variable", "observed", "mean", "sd", "crps"])
        .map_err(csv_err(&path))?;
    for f in &folds {
        w.write_record([
            (f.variable + 1).to_string(),
            fmt_f64(f.observed),
            fmt_f64(f.mean),
            fmt_f64(f.sd),
            fmt_f64(f.crps),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("variable  folds  MAE  RMSPE  MCRPS  coverage95");
    for s in &scores {
        println!(
            "{}  {}  {:.6}  {:.6}  {:.6}  {:.4}",
            cfg.network.node(s.variable).name,
            s.folds,
            s.mae,
            s.rmspe,
            s.mcrps,
            s.coverage95
        );
    }
    Ok(())
}

fn spectral_check(args: &Common) -> Result<()> {
    let cfg = single(args)?;
    let s = cfg
        .spectral
        .as_ref()
        .ok_or_else(|| Error::Validation("the config has no [spectral] section".into()))?;
    let out = out_dir(args)?;
    let report = check_cross_validity(&s.marginal1, &s.marginal2, &s.candidate, s.wmax, s.samples)?;
    report.write_csv(&out.join("spectral.csv"))?;
    println!("{}", report.verdict());
    Ok(())
}

fn compare(args: &Common) -> Result<()> {
    let configs = args
        .config
        .iter()
        .map(|p| load(args, p))
        .collect::<Result<Vec<_>>>()?;
    let first = &configs[0];
    let obs = data(args, first.network.len())?;
    let out = out_dir(args)?;
    let directions = if configs.len() == 1 {
        if first.fit.free.is_empty() {
            return Err(Error::Validation("no free parameters: set fit.free in the config".into()));
        }
        bivariate_directions(&first.network, &first.fit.free)?
    } else {
        configs
            .iter()
            .map(|c| direction_against(&first.network, c))
            .collect::<Result<Vec<_>>>()?
    };
    let ranking = compare_directions(&first.grid, &directions, &obs, &first.fit.options)?;
    let path = out.join("ranking.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["rank", "direction", "k", "loglik", "aic", "converged"])
        .map_err(csv_err(&path))?;
    for (i, r) in ranking.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.label.clone(),
            r.k.to_string(),
            fmt_f64(r.loglik),
            fmt_f64(r.aic),
            r.trace.converged.to_string(),
        ])
        .map_err(csv_err(&path))?;
        r.write(&out.join(format!("fit_{}.txt", i + 1)))?;
        print!("{}. ", i + 1);
        print_fit(r);
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Direction for `cfg`, with nodes matched to the variables of `reference` by name.
fn direction_against(reference: &ProcessNetwork, cfg: &RunConfig) -> Result<Direction> {
    if cfg.network.len() != reference.len() {
        return Err(Error::Validation(format!(
            "'{}' has {} nodes, expected {}",
            cfg.path.display(),
            cfg.network.len(),
            reference.len()
        )));
    }
    if cfg.fit.free.is_empty() {
        return Err(Error::Validation(format!(
            "no free parameters in '{}'",
            cfg.path.display()
        )));
    }
    let order = cfg
        .network
        .nodes()
        .iter()
        .map(|n| {
            reference.index_of(&n.name).ok_or_else(|| {
                Error::Validation(format!(
                    "node '{}' of '{}' is not in the first config",
                    n.name,
                    cfg.path.display()
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut d = Direction::forward(&cfg.network, &cfg.fit.free);
    d.order = order;
    Ok(d)
}

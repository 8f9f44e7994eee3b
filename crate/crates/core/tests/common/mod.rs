#![allow(dead_code)]

use condcov::conditional::{Node, ProcessNetwork};
use condcov::domain::{regular_grid, Grid};
use condcov::kernels::{InteractionSpec, MaternParams};
use rand::Rng;

/// Random valid model: p nodes on n cells of [0, 1] (or an n1 x n2 grid on the unit
/// square when `dim` is 2).
///
/// Ranges: variance [0.1, 3], scale [1, 20], smoothness [0.3, 2.5], nugget 0 or
/// [0, 0.1], amplitude [-3, 3], aperture [0.05, 0.8], shift [-0.4, 0.4]. Each earlier
/// node is a parent with probability 0.6; kinds are uniform over zero, dirac,
/// bisquare and shifted bisquare.
pub fn random_model<R: Rng>(rng: &mut R, p: usize, n: usize, dim: usize) -> (Grid, ProcessNetwork) {
    let grid = if dim == 1 {
        regular_grid(&[(0.0, 1.0)], &[n]).unwrap()
    } else {
        let side = (n as f64).sqrt().floor().max(2.0) as usize;
        regular_grid(&[(0.0, 1.0), (0.0, 1.0)], &[side, n / side]).unwrap()
    };
    let mut nodes = Vec::with_capacity(p);
    for q in 0..p {
        let cov = MaternParams::new(
            rng.random_range(0.1..3.0),
            rng.random_range(1.0..20.0),
            rng.random_range(0.3..2.5),
        )
        .unwrap();
        let mut node = Node::new(format!("Y{}", q + 1), cov);
        if rng.random_bool(0.5) {
            node = node.with_nugget(rng.random_range(0.0..0.1));
        }
        for r in 0..q {
            if !rng.random_bool(0.6) {
                continue;
            }
            let amplitude = rng.random_range(-3.0..3.0);
            let aperture = rng.random_range(0.05..0.8);
            let spec = match rng.random_range(0..4) {
                0 => InteractionSpec::Zero,
                1 => InteractionSpec::Dirac { amplitude },
                2 => InteractionSpec::Bisquare { amplitude, aperture },
                _ => InteractionSpec::ShiftedBisquare {
                    amplitude,
                    aperture,
                    shift: (0..grid.dim()).map(|_| rng.random_range(-0.4..0.4)).collect(),
                },
            };
            node = node.with_parent(r, spec);
        }
        nodes.push(node);
    }
    (grid, ProcessNetwork::new(nodes).unwrap())
}

/// Stored per-fold pressure scores: variable (1-based), observed, mean, sd, crps.
pub fn pressure_folds() -> Vec<condcov::predict::FoldScore> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pressure_folds.csv");
    let (header, rows) = condcov::domain::read_numeric_csv(&path).unwrap();
    assert_eq!(header, ["variable", "observed", "mean", "sd", "crps"]);
    rows.iter()
        .map(|r| condcov::predict::FoldScore {
            variable: r[0] as usize - 1,
            observed: r[1],
            mean: r[2],
            sd: r[3],
            crps: r[4],
        })
        .collect()
}

/// Reference model comparison rows: (model, k, log-likelihood, AIC).
pub const AIC_ROWS: [(&str, usize, f64, f64); 7] = [
    ("Model 1", 8, -1276.77, 2569.54),
    ("Model 2", 9, -1269.92, 2557.84),
    ("Model 3", 10, -1264.90, 2549.80),
    ("Model 4", 12, -1258.21, 2540.43),
    ("Parsimonious Matern", 8, -1265.76, 2547.52),
    ("Shifted parsimonious Matern", 10, -1260.87, 2541.75),
    ("Full Matern", 11, -1265.53, 2553.06),
];

/// Reference pressure summary for Model 4: MAE, RMSPE, MCRPS.
pub const PRESSURE_ROW: [f64; 3] = [66.07, 114.7, 51.73];

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

use condcov::conditional::{assemble_dag, Node, ProcessNetwork};
use condcov::domain::{regular_grid, Grid, Observations};
use condcov::inference::{fit_mle, FitOptions};
use condcov::kernels::{InteractionSpec, MaternParams};
use condcov::sim::{replicate_rng, sample_gaussian, sampling_factor};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

fn observe_all(grid: &Grid, net: &ProcessNetwork, seed: u64, rep: u64) -> Vec<Observations> {
    let model = assemble_dag(grid, net).unwrap();
    let n = grid.len();
    let mut rng = replicate_rng(seed, rep);
    let f = sampling_factor(model.process_matrix(), &model).unwrap();
    let y = sample_gaussian(&DVector::zeros(n * net.len()), f.as_ref(), &mut rng);
    let locs: Vec<Vec<f64>> = grid.vertices().map(|v| v.to_vec()).collect();
    (0..net.len())
        .map(|q| {
            let sd = net.node(q).noise.sqrt();
            let vals = (0..n)
                .map(|k| y[q * n + k] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Observations::new(q, locs.clone(), vals).unwrap()
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[test]
fn variance_estimate_from_400_values() {
    let grid = regular_grid(&[(-1.0, 1.0)], &[400]).unwrap();
    let truth = ProcessNetwork::new(vec![Node::new("Y1", MaternParams::new(1.0, 25.0, 1.5).unwrap())]).unwrap();
    let obs = observe_all(&grid, &truth, 17, 0);
    let start = ProcessNetwork::new(vec![Node::new("Y1", MaternParams::new(0.5, 25.0, 1.5).unwrap())]).unwrap();
    let fit = fit_mle(&grid, &start, &["Y1.variance".into()], &obs, &FitOptions::default(), "variance").unwrap();
    let v = fit.estimate("Y1.variance").unwrap();
    assert!((0.7..=1.4).contains(&v), "{v}");
    assert!(fit.trace.converged);
}

#[test]
fn absent_interaction_has_no_amplitude_estimate() {
    let grid = regular_grid(&[(-1.0, 1.0)], &[40]).unwrap();
    let net = ProcessNetwork::new(vec![
        Node::new("Y1", MaternParams::new(1.0, 5.0, 1.5).unwrap()).with_noise(0.1),
        Node::new("Y2", MaternParams::new(0.5, 5.0, 1.5).unwrap())
            .with_noise(0.1)
            .with_parent(0, InteractionSpec::Zero),
    ])
    .unwrap();
    let obs = observe_all(&grid, &net, 3, 0);
    let free = vec!["Y1.variance".to_string(), "Y2.variance".to_string()];
    let fit = fit_mle(&grid, &net, &free, &obs, &FitOptions::default(), "Model 1").unwrap();
    assert!(fit.estimate("Y2.Y1.amplitude").is_none());
    assert!(fit.estimates.iter().all(|(n, _)| !n.contains("amplitude")));
    let bad = vec!["Y2.Y1.amplitude".to_string()];
    assert!(fit_mle(&grid, &net, &bad, &obs, &FitOptions::default(), "Model 1").is_err());
}

#[test]
fn interaction_parameters_recovered_over_ten_replicates() {
    let grid = regular_grid(&[(-1.0, 1.0)], &[200]).unwrap();
    let edge = |amplitude, aperture, shift| InteractionSpec::ShiftedBisquare {
        amplitude,
        aperture,
        shift: vec![shift],
    };
    let net = |spec| {
        ProcessNetwork::new(vec![
            Node::new("Y1", MaternParams::new(1.0, 25.0, 1.5).unwrap()).with_noise(0.25),
            Node::new("Y2", MaternParams::new(0.2, 75.0, 1.5).unwrap())
                .with_noise(0.25)
                .with_parent(0, spec),
        ])
        .unwrap()
    };
    let truth = net(edge(5.0, 0.3, -0.3));
    let start = net(edge(2.0, 0.2, 0.0));
    let free: Vec<String> = ["amplitude", "aperture", "shift1"].iter().map(|s| format!("Y2.Y1.{s}")).collect();
    let mut errs = [Vec::new(), Vec::new(), Vec::new()];
    for rep in 0..10 {
        let obs = observe_all(&grid, &truth, 2024, rep);
        let opts = FitOptions { seed: rep, ..Default::default() };
        let fit = fit_mle(&grid, &start, &free, &obs, &opts, "recovery").unwrap();
        for (i, (name, t)) in free.iter().zip([5.0, 0.3, -0.3]).enumerate() {
            errs[i].push(((fit.estimate(name).unwrap() - t) / t).abs());
        }
    }
    for (name, e) in free.iter().zip(errs) {
        let m = median(e);
        assert!(m < 0.25, "{name}: median relative error {m}");
    }
}

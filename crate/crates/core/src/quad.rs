//! Composite Gauss-Legendre quadrature.

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Integrates `f` over `[a, b]` split at `breaks` into panels, each further cut into
/// `sub` equal pieces with a 20-point rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], sub: usize) -> f64 {
    let (x, w) = gauss_legendre(20);
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(|p, q| p.total_cmp(q));
    edges.extend(inner);
    edges.push(b);
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let h = (pair[1] - pair[0]) / sub as f64;
        for s in 0..sub {
            let lo = pair[0] + s as f64 * h;
            let mid = lo + 0.5 * h;
            total += 0.5 * h * x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum::<f64>();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
        let (_, w1) = gauss_legendre(1);
        assert!((w1[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_integral_with_kink() {
        let v = integrate(|t: f64| (t - 0.3).abs(), 0.0, 1.0, &[0.3], 2);
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
        let e = integrate(|t: f64| (-t).exp(), 0.0, 40.0, &[], 20);
        assert!((e - (1.0 - (-40.0f64).exp())).abs() < 1e-13);
    }
}

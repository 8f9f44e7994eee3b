//! Univariate Matérn covariances and interaction functions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::special::ln_bessel_k;
use crate::{Error, Result};

/// Isotropic Matérn covariance: variance, inverse-range scale and smoothness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub variance: f64,
    pub scale: f64,
    pub smoothness: f64,
}

impl MaternParams {
    pub fn new(variance: f64, scale: f64, smoothness: f64) -> Result<Self> {
        let p = MaternParams {
            variance,
            scale,
            smoothness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("variance", self.variance),
            ("scale", self.scale),
            ("smoothness", self.smoothness),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::ParameterDomain(format!(
                    "matern {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Covariance at distance `d`. Parameters are assumed validated.
    pub fn covariance(&self, d: f64) -> f64 {
        if d == 0.0 {
            return self.variance;
        }
        let x = self.scale * d;
        let nu = self.smoothness;
        // closed forms for the common half-integer orders
        if nu == 0.5 {
            return self.variance * (-x).exp();
        }
        if nu == 1.5 {
            return self.variance * (1.0 + x) * (-x).exp();
        }
        if nu == 2.5 {
            return self.variance * (1.0 + x + x * x / 3.0) * (-x).exp();
        }
        let ln_c = self.variance.ln() + (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu)
            + nu * x.ln()
            + ln_bessel_k(nu, x);
        ln_c.exp()
    }
}

/// Matérn covariance `σ²/(2^{ν-1}Γ(ν)) (κd)^ν K_ν(κd)`, exactly `σ²` at `d = 0`.
pub fn matern_cov(p: &MaternParams, d: f64) -> Result<f64> {
    p.validate()?;
    if !d.is_finite() || d < 0.0 {
        return Err(Error::ParameterDomain(format!(
            "distance must be finite and nonnegative, got {d}"
        )));
    }
    Ok(p.covariance(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InteractionKind {
    Zero,
    Dirac,
    Bisquare,
    ShiftedBisquare,
    Tabulated,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 5] = [
        InteractionKind::Zero,
        InteractionKind::Dirac,
        InteractionKind::Bisquare,
        InteractionKind::ShiftedBisquare,
        InteractionKind::Tabulated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InteractionKind::Zero => "zero",
            InteractionKind::Dirac => "dirac",
            InteractionKind::Bisquare => "bisquare",
            InteractionKind::ShiftedBisquare => "shifted-bisquare",
            InteractionKind::Tabulated => "tabulated",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        InteractionKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = InteractionKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown interaction kind '{s}'; expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Interaction function `b(s, v)` linking a parent process at `v` to a child at `s`.
///
/// The bisquare kinds depend on the displacement `h = v - s` only.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionSpec {
    Zero,
    Dirac {
        amplitude: f64,
    },
    Bisquare {
        amplitude: f64,
        aperture: f64,
    },
    ShiftedBisquare {
        amplitude: f64,
        aperture: f64,
        shift: Vec<f64>,
    },
    Tabulated(InteractionTable),
}

impl InteractionSpec {
    pub fn kind(&self) -> InteractionKind {
        match self {
            InteractionSpec::Zero => InteractionKind::Zero,
            InteractionSpec::Dirac { .. } => InteractionKind::Dirac,
            InteractionSpec::Bisquare { .. } => InteractionKind::Bisquare,
            InteractionSpec::ShiftedBisquare { .. } => InteractionKind::ShiftedBisquare,
            InteractionSpec::Tabulated(_) => InteractionKind::Tabulated,
        }
    }

    pub fn amplitude(&self) -> Option<f64> {
        match self {
            InteractionSpec::Dirac { amplitude }
            | InteractionSpec::Bisquare { amplitude, .. }
            | InteractionSpec::ShiftedBisquare { amplitude, .. } => Some(*amplitude),
            _ => None,
        }
    }

    /// Checks finiteness and that location-dependent pieces match dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterDomain(format!(
                    "interaction {name} must be finite, got {v}"
                )))
            }
        };
        let aperture_ok = |r: f64| {
            if r.is_finite() && r > 0.0 {
                Ok(())
            } else {
                Err(Error::ParameterDomain(format!(
                    "interaction aperture must be positive, got {r}"
                )))
            }
        };
        match self {
            InteractionSpec::Zero => Ok(()),
            InteractionSpec::Dirac { amplitude } => finite("amplitude", *amplitude),
            InteractionSpec::Bisquare {
                amplitude,
                aperture,
            } => {
                finite("amplitude", *amplitude)?;
                aperture_ok(*aperture)
            }
            InteractionSpec::ShiftedBisquare {
                amplitude,
                aperture,
                shift,
            } => {
                finite("amplitude", *amplitude)?;
                aperture_ok(*aperture)?;
                if shift.len() != dim {
                    return Err(Error::ParameterDomain(format!(
                        "shift has {} components but locations have dimension {dim}",
                        shift.len()
                    )));
                }
                shift.iter().try_for_each(|&d| finite("shift", d))
            }
            InteractionSpec::Tabulated(t) => {
                if t.dim() != dim {
                    return Err(Error::ParameterDomain(format!(
                        "tabulated interaction has dimension {} but locations have dimension {dim}",
                        t.dim()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Pointwise value `b(s, v)`. Dirac interactions have no pointwise value.
    pub fn eval(&self, s: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            InteractionSpec::Dirac { .. } => Err(Error::UnsupportedPointwiseEvaluation),
            _ => Ok(self.eval_unchecked(s, v)),
        }
    }

    /// Like [`eval`](Self::eval) but returns 0 for Dirac instead of failing.
    pub(crate) fn eval_unchecked(&self, s: &[f64], v: &[f64]) -> f64 {
        match self {
            InteractionSpec::Zero | InteractionSpec::Dirac { .. } => 0.0,
            InteractionSpec::Bisquare {
                amplitude,
                aperture,
            } => {
                let dist2: f64 = s.iter().zip(v).map(|(a, b)| (b - a) * (b - a)).sum();
                bisquare(*amplitude, *aperture, dist2)
            }
            InteractionSpec::ShiftedBisquare {
                amplitude,
                aperture,
                shift,
            } => {
                let dist2: f64 = s
                    .iter()
                    .zip(v)
                    .zip(shift)
                    .map(|((a, b), d)| {
                        let h = b - a - d;
                        h * h
                    })
                    .sum();
                bisquare(*amplitude, *aperture, dist2)
            }
            InteractionSpec::Tabulated(t) => t.interpolate(s, v),
        }
    }
}

fn bisquare(amplitude: f64, aperture: f64, dist2: f64) -> f64 {
    let t2 = dist2 / (aperture * aperture);
    if t2 >= 1.0 {
        0.0
    } else {
        let w = 1.0 - t2;
        amplitude * w * w
    }
}

/// Free-function form of [`InteractionSpec::eval`].
pub fn interaction_eval(spec: &InteractionSpec, s: &[f64], v: &[f64]) -> Result<f64> {
    spec.eval(s, v)
}

/// Interaction values on a rectilinear grid over `(s, v)`, interpolated
/// multilinearly (bilinear for 1-D locations) and zero outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    /// One sorted axis per coordinate: the `s` coordinates followed by the `v` coordinates.
    axes: Vec<Vec<f64>>,
    /// Row-major over `axes`, last axis fastest.
    values: Vec<f64>,
}

impl InteractionTable {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() % 2 != 0 {
            return Err(Error::Validation(
                "interaction table needs an even, nonzero number of axes".into(),
            ));
        }
        for axis in &axes {
            if axis.len() < 2 {
                return Err(Error::Validation(
                    "every interaction table axis needs at least two knots".into(),
                ));
            }
            if axis.windows(2).any(|w| !(w[0] < w[1])) || axis.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(
                    "interaction table axes must be finite and strictly increasing".into(),
                ));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::Validation(format!(
                "interaction table has {} values, axes imply {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "interaction table values must be finite".into(),
            ));
        }
        Ok(InteractionTable { axes, values })
    }

    /// Spatial dimension of `s` (and of `v`).
    pub fn dim(&self) -> usize {
        self.axes.len() / 2
    }

    pub fn interpolate(&self, s: &[f64], v: &[f64]) -> f64 {
        let naxes = self.axes.len();
        let mut lower = Vec::with_capacity(naxes);
        let mut frac = Vec::with_capacity(naxes);
        for (axis, &x) in self.axes.iter().zip(s.iter().chain(v)) {
            let (first, last) = (axis[0], axis[axis.len() - 1]);
            if !(x >= first && x <= last) {
                return 0.0;
            }
            let i = match axis.partition_point(|&k| k <= x) {
                0 => 0,
                p if p >= axis.len() => axis.len() - 2,
                p => p - 1,
            };
            lower.push(i);
            frac.push((x - axis[i]) / (axis[i + 1] - axis[i]));
        }
        let mut total = 0.0;
        for corner in 0..(1usize << naxes) {
            let mut weight = 1.0;
            let mut offset = 0;
            for (a, axis) in self.axes.iter().enumerate() {
                let upper = (corner >> a) & 1 == 1;
                weight *= if upper { frac[a] } else { 1.0 - frac[a] };
                offset = offset * axis.len() + lower[a] + usize::from(upper);
            }
            if weight != 0.0 {
                total += weight * self.values[offset];
            }
        }
        total
    }

    /// Loads a table from CSV with header `s_coords..., v_coords..., value`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        let ncols = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .len();
        if ncols < 3 || (ncols - 1) % 2 != 0 {
            return Err(Error::parse(
                path,
                format!("expected 2d coordinate columns plus value, found {ncols} columns"),
            ));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| {
                        Error::parse(path, format!("row {}: '{f}': {e}", line + 2))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != ncols {
                return Err(Error::parse(path, format!("row {} has wrong width", line + 2)));
            }
            rows.push(row);
        }
        let naxes = ncols - 1;
        let mut axes: Vec<Vec<f64>> = (0..naxes)
            .map(|a| {
                let mut axis: Vec<f64> = rows.iter().map(|r| r[a]).collect();
                axis.sort_by(f64::total_cmp);
                axis.dedup();
                axis
            })
            .collect();
        axes.iter_mut().for_each(|a| a.shrink_to_fit());
        let expected: usize = axes.iter().map(Vec::len).product();
        if expected != rows.len() {
            return Err(Error::parse(
                path,
                format!(
                    "{} rows do not form a complete rectilinear table ({expected} expected)",
                    rows.len()
                ),
            ));
        }
        let mut values = vec![f64::NAN; expected];
        for row in &rows {
            let mut offset = 0;
            for (a, axis) in axes.iter().enumerate() {
                let i = axis
                    .binary_search_by(|k| k.total_cmp(&row[a]))
                    .expect("knot collected from the same rows");
                offset = offset * axis.len() + i;
            }
            if !values[offset].is_nan() {
                return Err(Error::parse(path, "duplicate table entry"));
            }
            values[offset] = row[naxes];
        }
        InteractionTable::new(axes, values).map_err(|e| Error::parse(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn p(v: f64, k: f64, nu: f64) -> MaternParams {
        MaternParams::new(v, k, nu).unwrap()
    }

    #[test]
    fn variance_at_zero_lag() {
        assert_eq!(matern_cov(&p(1.0, 25.0, 1.5), 0.0).unwrap(), 1.0);
        assert_eq!(matern_cov(&p(3.0, 0.7, 0.83), 0.0).unwrap(), 3.0);
    }

    #[test]
    fn exponential_special_case() {
        let c = matern_cov(&p(1.0, 1.0, 0.5), 1.0).unwrap();
        assert!((c - (-1.0f64).exp()).abs() < 1e-15);
        assert!((c - 0.367_879_4).abs() < 1e-7);
    }

    #[test]
    fn generic_path_agrees_with_closed_forms() {
        for &nu in &[0.5, 1.5, 2.5] {
            let exact = p(1.3, 4.0, nu);
            let nudged = p(1.3, 4.0, nu + 1e-12);
            for &d in &[0.001, 0.05, 0.3, 1.0, 3.0] {
                let a = exact.covariance(d);
                let b = nudged.covariance(d);
                assert!(((a - b) / a).abs() < 1e-9, "nu={nu} d={d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reference_value_generic_order() {
        // 2·2^{-0.84}/Γ(1.84)·(1.2)^{1.84}·K_{1.84}(1.2), from an independent implementation
        let c = p(2.0, 3.0, 1.84).covariance(0.4);
        assert!((c - 1.453_807_502_583_501_8).abs() < 1e-12);
        let c = p(1.0, 25.0, 0.56).covariance(0.02);
        assert!((c - 0.646_695_003_798_416_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            MaternParams::new(0.0, 1.0, 1.0),
            Err(Error::ParameterDomain(_))
        ));
        assert!(MaternParams::new(1.0, f64::NAN, 1.0).is_err());
        assert!(MaternParams::new(1.0, 1.0, -2.0).is_err());
        let bad = MaternParams {
            variance: 1.0,
            scale: f64::INFINITY,
            smoothness: 1.0,
        };
        assert!(matern_cov(&bad, 1.0).is_err());
        assert!(matern_cov(&p(1.0, 1.0, 1.0), -0.1).is_err());
    }

    #[test]
    fn monotone_for_low_smoothness() {
        for &nu in &[0.3, 0.5, 1.0, 1.2, 1.5] {
            let m = p(1.0, 7.0, nu);
            let mut prev = m.covariance(0.0);
            for i in 1..=1000 {
                let c = m.covariance(i as f64 * 1e-3);
                assert!(c <= prev + 1e-15, "nu={nu}, i={i}");
                prev = c;
            }
        }
    }

    #[test]
    fn decays_to_zero() {
        for &(k, nu) in &[(25.0, 1.5), (0.01, 0.6), (3.0, 4.5), (1.0, 0.07)] {
            let m = p(2.0, k, nu);
            assert!(m.covariance(1e3 / k) < 1e-6 * 2.0);
        }
    }

    #[test]
    fn shifted_bisquare_peaks_at_shift() {
        let b = InteractionSpec::ShiftedBisquare {
            amplitude: 5.0,
            aperture: 0.3,
            shift: vec![-0.3],
        };
        assert_eq!(b.eval(&[0.4], &[0.1]).unwrap(), 5.0);
        assert_eq!(b.eval(&[0.4], &[0.4]).unwrap(), 0.0);
        assert!(b.eval(&[0.4], &[0.2]).unwrap() > 0.0);
    }

    #[test]
    fn bisquare_support_and_zero() {
        let b = InteractionSpec::Bisquare {
            amplitude: 2.0,
            aperture: 1.0,
        };
        assert_eq!(b.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(b.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(InteractionSpec::Zero.eval(&[3.0], &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn dirac_has_no_pointwise_value() {
        let d = InteractionSpec::Dirac { amplitude: -14.3 };
        assert!(matches!(
            interaction_eval(&d, &[0.0], &[0.0]),
            Err(Error::UnsupportedPointwiseEvaluation)
        ));
    }

    #[test]
    fn bisquare_quadrature_matches_analytic_integral() {
        // ∫ A{1-(t/r)²}² dt over [-r, r] = 16Ar/15
        let (a, r) = (5.0, 0.3);
        let b = InteractionSpec::Bisquare {
            amplitude: a,
            aperture: r,
        };
        let cells = 20;
        let eta = r / cells as f64;
        let lo = -1.0;
        let n = (2.0 / eta).round() as usize;
        let sum: f64 = (0..n)
            .map(|k| {
                let w = lo + (k as f64 + 0.5) * eta;
                eta * b.eval(&[0.0], &[w]).unwrap().abs()
            })
            .sum();
        let exact = 16.0 * a * r / 15.0;
        assert!((sum - exact).abs() / exact < 0.01);
    }

    #[test]
    fn kind_names_parse_with_suggestions() {
        assert_eq!(
            "shifted-bisquare".parse::<InteractionKind>().unwrap(),
            InteractionKind::ShiftedBisquare
        );
        assert_eq!(
            "Shifted_Bisquare".parse::<InteractionKind>().unwrap(),
            InteractionKind::ShiftedBisquare
        );
        let err = "gaussian".parse::<InteractionKind>().unwrap_err().to_string();
        assert!(err.contains("zero, dirac, bisquare, shifted-bisquare, tabulated"));
    }

    #[test]
    fn table_is_bilinear_in_one_dimension() {
        let t = InteractionTable::new(
            vec![vec![0.0, 1.0], vec![0.0, 2.0]],
            vec![1.0, 3.0, 5.0, 7.0],
        )
        .unwrap();
        assert_eq!(t.interpolate(&[0.0], &[0.0]), 1.0);
        assert_eq!(t.interpolate(&[1.0], &[2.0]), 7.0);
        // f(s, v) = 1 + 4s + v is reproduced exactly
        assert!((t.interpolate(&[0.25], &[0.5]) - (1.0 + 1.0 + 0.5)).abs() < 1e-15);
        assert_eq!(t.interpolate(&[1.5], &[0.5]), 0.0);
        assert_eq!(t.interpolate(&[0.5], &[-0.1]), 0.0);
    }

    #[test]
    fn table_loads_from_csv() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "s,v,value").unwrap();
        for (s, v, val) in [(1.0, 0.0, 5.0), (0.0, 0.0, 1.0), (0.0, 2.0, 3.0), (1.0, 2.0, 7.0)] {
            writeln!(f, "{s},{v},{val}").unwrap();
        }
        let t = InteractionTable::from_csv(f.path()).unwrap();
        assert_eq!(t.dim(), 1);
        assert!((t.interpolate(&[0.25], &[0.5]) - 2.5).abs() < 1e-15);

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "s,v,value\n0,0,1\n1,0,2\n0,1,3").unwrap();
        assert!(matches!(
            InteractionTable::from_csv(g.path()),
            Err(Error::Parse { .. })
        ));
    }
}

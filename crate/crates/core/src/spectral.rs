//! Frequency-domain validity checks for cross-covariances in the plane.
//!
//! Spectral densities use the convention `C(h) = ∫ e^{iωh} Γ(ω) dω`, so a density
//! integrates to the variance. Under it, `C12 = b_o * C11` has density
//! `(2π)² b̂_o Γ11`. The candidate `B_o` below is the transfer function
//! `(2π)² b̂_o`; a Matérn-form `B_o` corresponds to a time-domain interaction
//! equal to that Matérn covariance divided by `4π²`.

use std::f64::consts::PI;
use std::path::Path;

use crate::csvio::fmt_f64;
use crate::kernels::MaternParams;
use crate::quad::integrate;
use crate::{Error, Result};

pub const DEFAULT_SAMPLES: usize = 4096;

/// Relative margin below which a sample counts as violating the envelope.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

fn ln_density(p: &MaternParams, w: f64) -> f64 {
    let k2 = p.scale * p.scale;
    p.variance.ln() + p.smoothness.ln() + p.smoothness * k2.ln()
        - PI.ln()
        - (p.smoothness + 1.0) * (k2 + w * w).ln()
}

/// Radial Matérn spectral density on the plane,
/// `σ² Γ(ν+1) κ^{2ν} / (π Γ(ν)) (κ² + w²)^{-ν-1}`.
pub fn matern_spectral_density(p: &MaternParams, w: f64) -> f64 {
    ln_density(p, w).exp()
}

/// Radial transfer function `B_o(‖ω‖)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralCandidate {
    Zero,
    /// Matérn-form transfer function with these parameters.
    Matern(MaternParams),
    /// Values at increasing radial frequencies, linear in between and held
    /// constant beyond either end.
    Tabulated { w: Vec<f64>, values: Vec<f64> },
}

impl SpectralCandidate {
    fn value(&self, w: f64) -> f64 {
        match self {
            SpectralCandidate::Zero => 0.0,
            SpectralCandidate::Matern(p) => matern_spectral_density(p, w),
            SpectralCandidate::Tabulated { w: ws, values } => {
                if w <= ws[0] {
                    return values[0];
                }
                if w >= ws[ws.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = ws.partition_point(|&x| x <= w) - 1;
                let t = (w - ws[i]) / (ws[i + 1] - ws[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
        }
    }

    /// `ln(B_o(ω) B_o(-ω))`.
    fn ln_squared(&self, w: f64) -> f64 {
        match self {
            SpectralCandidate::Matern(p) => 2.0 * ln_density(p, w),
            _ => {
                let v = self.value(w);
                (v * v).ln()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpectralCandidate::Zero => Ok(()),
            SpectralCandidate::Matern(p) => p.validate(),
            SpectralCandidate::Tabulated { w, values } => {
                if w.len() < 2 || w.len() != values.len() {
                    return Err(Error::Validation(
                        "tabulated candidate needs at least two (w, value) pairs".into(),
                    ));
                }
                if w.windows(2).any(|p| p[1] <= p[0]) || w[0] < 0.0 {
                    return Err(Error::Validation(
                        "tabulated frequencies must be nonnegative and increasing".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("tabulated values must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub frequencies: Vec<f64>,
    /// `Γ22/Γ11`.
    pub envelope: Vec<f64>,
    /// `B_o(ω) B_o(-ω)`.
    pub candidate: Vec<f64>,
    /// `(envelope - candidate) / envelope`.
    pub margin: Vec<f64>,
    pub valid: bool,
    pub worst_margin: f64,
    pub worst_frequency: f64,
    /// Whether `∫ Γ22` is finite, which bounds `∫ (Γ22 - B_o² Γ11)`.
    pub integrable: bool,
}

impl SpectralReport {
    pub fn verdict(&self) -> String {
        format!(
            "{}: worst relative margin {} at w = {}",
            if self.valid { "valid" } else { "invalid" },
            fmt_f64(self.worst_margin),
            fmt_f64(self.worst_frequency)
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        w.write_record(["w", "envelope", "candidate", "margin"])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        for i in 0..self.frequencies.len() {
            w.write_record([
                fmt_f64(self.frequencies[i]),
                fmt_f64(self.envelope[i]),
                fmt_f64(self.candidate[i]),
                fmt_f64(self.margin[i]),
            ])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Samples `B_o(ω)B_o(-ω) ≤ Γ22(ω)/Γ11(ω)` at `w = 0` and at `nsamples`
/// log-spaced radii on `[wmax·10⁻⁶, wmax]`.
pub fn check_cross_validity(
    c11: &MaternParams,
    c22: &MaternParams,
    bo: &SpectralCandidate,
    wmax: f64,
    nsamples: usize,
) -> Result<SpectralReport> {
    c11.validate()?;
    c22.validate()?;
    bo.validate()?;
    if nsamples < 2 {
        return Err(Error::Validation("need at least two frequency samples".into()));
    }
    if !(wmax.is_finite() && wmax > 0.0) {
        return Err(Error::Validation(format!("wmax must be positive, got {wmax}")));
    }
    let lo = (wmax * 1e-6).ln();
    let hi = wmax.ln();
    let mut frequencies = vec![0.0];
    frequencies.extend(
        (0..nsamples).map(|i| (lo + (hi - lo) * i as f64 / (nsamples - 1) as f64).exp()),
    );
    let mut envelope = Vec::with_capacity(frequencies.len());
    let mut candidate = Vec::with_capacity(frequencies.len());
    let mut margin = Vec::with_capacity(frequencies.len());
    let mut worst = (f64::INFINITY, 0.0);
    for &w in &frequencies {
        let ln_env = ln_density(c22, w) - ln_density(c11, w);
        let ln_cand = bo.ln_squared(w);
        let m = -(ln_cand - ln_env).exp_m1();
        envelope.push(ln_env.exp());
        candidate.push(ln_cand.exp());
        margin.push(m);
        if m < worst.0 {
            worst = (m, w);
        }
    }
    Ok(SpectralReport {
        frequencies,
        envelope,
        candidate,
        margin,
        valid: worst.0 >= -MARGIN_TOLERANCE,
        worst_margin: worst.0,
        worst_frequency: worst.1,
        integrable: c22.smoothness > 0.0,
    })
}

/// Largest admissible Matérn transfer function sharing the marginals' scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsimoniousBounds {
    pub nu_b_min: f64,
    /// Bound on `σ²_b` at `ν_b = nu_b_min`.
    pub sig2_b_max: f64,
    /// Cross smoothness `ν_b + ν11 + 1` at `nu_b_min`, equal to `(ν11 + ν22)/2`.
    pub nu12: f64,
    /// Cross variance at the bound, `2σ11σ22√(ν11ν22)/(ν11 + ν22)`.
    pub sig2_12_max: f64,
}

/// Bounds for marginal variances `var11`, `var22`, smoothnesses `nu11`, `nu22` and
/// common scale `kappa`. Requires `nu22 > nu11 + 2`.
pub fn parsimonious_bounds(
    nu11: f64,
    nu22: f64,
    var11: f64,
    var22: f64,
    kappa: f64,
) -> Result<ParsimoniousBounds> {
    for (name, v) in [
        ("nu11", nu11),
        ("nu22", nu22),
        ("var11", var11),
        ("var22", var22),
        ("kappa", kappa),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::ParameterDomain(format!("{name} must be positive, got {v}")));
        }
    }
    let gap = nu22 - nu11 - 2.0;
    if gap <= 0.0 {
        return Err(Error::OutOfRegime(format!(
            "the variance bound needs nu22 > nu11 + 2 (got nu11 = {nu11}, nu22 = {nu22}); \
             below that its denominator nu22 - nu11 - 2 is not positive"
        )));
    }
    let nu_b_min = gap / 2.0;
    let (s11, s22) = (var11.sqrt(), var22.sqrt());
    let sig2_b_max = 2.0 * PI * (s22 / s11) / gap * kappa.powf(nu22 - nu11 - 2.0 * nu_b_min)
        * (nu22 / nu11).sqrt();
    let nu12 = nu_b_min + nu11 + 1.0;
    let sig2_12_max = cross_variance(nu_b_min, nu11, kappa, sig2_b_max, var11);
    Ok(ParsimoniousBounds {
        nu_b_min,
        sig2_b_max,
        nu12,
        sig2_12_max,
    })
}

/// Variance of the Matérn cross-covariance induced by a Matérn transfer function,
/// `σ²_b σ²_11 ν_b ν11 / (π κ² (ν_b + ν11 + 1))`.
pub fn cross_variance(nu_b: f64, nu11: f64, kappa: f64, sig2_b: f64, var11: f64) -> f64 {
    sig2_b * var11 * nu_b * nu11 / (PI * kappa * kappa * (nu_b + nu11 + 1.0))
}

/// Time-domain interaction `b_o` whose transfer function is the Matérn form `bo`.
pub fn interaction_from_transfer(bo: &MaternParams) -> MaternParams {
    MaternParams {
        variance: bo.variance / (4.0 * PI * PI),
        ..*bo
    }
}

/// `C12(h) = ∫ b_o(v) C11(h - v) dv` over the plane, by polar quadrature, with
/// `b_o` the time-domain counterpart of the Matérn transfer function `bo`.
pub fn induced_cross_covariance(c11: &MaternParams, bo: &MaternParams, lag: f64) -> f64 {
    let b = interaction_from_transfer(bo);
    let h = lag.abs();
    let reach = h + 60.0 / c11.scale.min(b.scale);
    let ring = |rho: f64| {
        let inner = integrate(
            |theta: f64| {
                let d2 = h * h + rho * rho - 2.0 * h * rho * theta.cos();
                c11.covariance(d2.max(0.0).sqrt())
            },
            0.0,
            PI,
            &[],
            6,
        );
        2.0 * rho * b.covariance(rho) * inner
    };
    integrate(ring, 0.0, reach, &[h], 40)
}

/// Radial inverse transform at lag zero, `2π ∫ w f(w) dw`.
pub fn radial_integral<F: Fn(f64) -> f64>(f: F, scale: f64) -> f64 {
    // w = scale·t/(1 - t) maps [0, 1) onto [0, ∞)
    integrate(
        |t: f64| {
            let w = scale * t / (1.0 - t);
            let dw = scale / ((1.0 - t) * (1.0 - t));
            2.0 * PI * w * f(w) * dw
        },
        0.0,
        1.0,
        &[0.5, 0.9, 0.99],
        20,
    )
}

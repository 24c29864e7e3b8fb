//! Closed-form first-passage laws used as baselines and oracles.

use statrs::function::erf::erfc;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticError {
    #[error("source distance {distance_um} um must exceed the receiver radius {radius_um} um")]
    Geometry { distance_um: f64, radius_um: f64 },
}

/// First-passage density (1/s) of 1-D drift–diffusion to a plane at `distance_um`:
/// `d / sqrt(4 π D t³) · exp(-(d - v t)² / (4 D t))`.
pub fn analytic_1d_first_passage(distance_um: f64, velocity_um_s: f64, diffusion_um2_s: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (d, v, dd) = (distance_um, velocity_um_s, diffusion_um2_s);
    d / (4.0 * PI * dd * t * t * t).sqrt() * (-(d - v * t).powi(2) / (4.0 * dd * t)).exp()
}

/// Cumulative first-passage probability by time `t` (inverse-Gaussian CDF for v > 0,
/// Lévy for v = 0). The exponentially large factor `exp(v d / D)` is folded into a
/// scaled complementary error function.
pub fn analytic_1d_first_passage_cdf(distance_um: f64, velocity_um_s: f64, diffusion_um2_s: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let (d, v, dd) = (distance_um, velocity_um_s, diffusion_um2_s);
    let s = (4.0 * dd * t).sqrt();
    let first = 0.5 * erfc((d - v * t) / s);
    let second = 0.5 * (-(v * t - d).powi(2) / (4.0 * dd * t)).exp() * erfcx((v * t + d) / s);
    (first + second).min(1.0)
}

/// Scaled complementary error function `exp(x²) erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 3.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction, evaluated from the tail.
    let mut f = x;
    for k in (1..=80).rev() {
        f = x + (k as f64 / 2.0) / f;
    }
    1.0 / (PI.sqrt() * f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereHitting {
    /// Hitting-rate density (1/s).
    pub density: f64,
    /// Fraction absorbed by time `t`.
    pub cumulative: f64,
}

/// Hitting law of an absorbing sphere of radius `a` by a point source at distance
/// `d` in unbounded 3-D space without drift.
pub fn analytic_free_space_absorbing_sphere(
    distance_um: f64,
    receiver_radius_um: f64,
    diffusion_um2_s: f64,
    t: f64,
) -> Result<SphereHitting, AnalyticError> {
    let (d, a, dd) = (distance_um, receiver_radius_um, diffusion_um2_s);
    if !(d > a && a > 0.0) {
        return Err(AnalyticError::Geometry {
            distance_um: d,
            radius_um: a,
        });
    }
    if t <= 0.0 {
        return Ok(SphereHitting {
            density: 0.0,
            cumulative: 0.0,
        });
    }
    let gap = d - a;
    let density = (a / d) * gap / (4.0 * PI * dd * t * t * t).sqrt() * (-gap * gap / (4.0 * dd * t)).exp();
    let cumulative = (a / d) * erfc(gap / (4.0 * dd * t).sqrt());
    Ok(SphereHitting { density, cumulative })
}

/// Two-sided Kolmogorov–Smirnov distance between sorted samples and a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

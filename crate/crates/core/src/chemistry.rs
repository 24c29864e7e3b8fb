//! First-order degradation of messenger molecules.

use crate::rng::RngStream;

/// Survival over one step of length `dt` under first-order decay at `rate_per_s`.
/// A zero rate never consumes randomness, so chemistry-free runs are unaffected.
#[inline]
pub fn survives(rate_per_s: f64, dt: f64, rng: &mut RngStream) -> bool {
    if rate_per_s <= 0.0 {
        return true;
    }
    rng.uniform() < survival_probability(rate_per_s, dt)
}

#[inline]
pub fn survival_probability(rate_per_s: f64, dt: f64) -> f64 {
    (-rate_per_s * dt).exp()
}

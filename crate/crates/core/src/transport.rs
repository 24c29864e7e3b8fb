//! Particle motion: diffusion plus axial drift, and the dimensionless numbers that
//! classify the duct's flow regime.

use serde::Serialize;

use crate::rng::RngStream;
use crate::scenario::{FlowKind, FlowProfile, MoleculeSpecies, VesselGeometry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("radial position {radial_um} um lies outside [0, {radius_um}]")]
    RadialOutOfRange { radial_um: f64, radius_um: f64 },
    #[error("diffusion coefficient must be positive, got {0}")]
    NonPositiveDiffusion(f64),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("Peclet number is zero: the dispersion factor is undefined for pure diffusion")]
    ZeroPeclet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FlowRegime {
    PoiseuilleDominated,
    UniformDispersive,
    PureDiffusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DimensionlessReport {
    pub peclet: f64,
    /// `None` when the regime is pure diffusion.
    pub dispersion_factor: Option<f64>,
    pub regime: FlowRegime,
}

/// Axial velocity at radial distance `radial_um` from the axis.
pub fn velocity_at(flow: &FlowProfile, geometry: &VesselGeometry, radial_um: f64) -> Result<f64, TransportError> {
    if !(0.0..=geometry.radius_um).contains(&radial_um) {
        return Err(TransportError::RadialOutOfRange {
            radial_um,
            radius_um: geometry.radius_um,
        });
    }
    Ok(velocity_unchecked(flow, geometry.radius_um, radial_um * radial_um))
}

/// Velocity from the squared radial distance, clamped to the duct.
#[inline]
pub(crate) fn velocity_unchecked(flow: &FlowProfile, radius_um: f64, radial_sq: f64) -> f64 {
    match flow.kind {
        FlowKind::None => 0.0,
        FlowKind::Uniform => flow.mean_velocity_um_s,
        FlowKind::Poiseuille => {
            let rel = (radial_sq / (radius_um * radius_um)).min(1.0);
            2.0 * flow.mean_velocity_um_s * (1.0 - rel)
        }
    }
}

/// A tentative displacement over one time step, before any boundary handling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
}

impl Segment {
    pub fn new(start: [f64; 3], end: [f64; 3]) -> Self {
        Self { start, end }
    }

    /// Point at fraction `s` along the segment.
    pub fn at(&self, s: f64) -> [f64; 3] {
        [
            self.start[0] + s * (self.end[0] - self.start[0]),
            self.start[1] + s * (self.end[1] - self.start[1]),
            self.start[2] + s * (self.end[2] - self.start[2]),
        ]
    }

    pub fn displacement(&self) -> [f64; 3] {
        [
            self.end[0] - self.start[0],
            self.end[1] - self.start[1],
            self.end[2] - self.start[2],
        ]
    }
}

/// Euler–Maruyama step: drift evaluated at the start position plus independent
/// `N(0, 2 D dt)` increments on every axis.
#[inline]
pub fn brownian_step(
    start: [f64; 3],
    species: &MoleculeSpecies,
    flow: &FlowProfile,
    geometry: &VesselGeometry,
    dt: f64,
    rng: &mut RngStream,
) -> Segment {
    let sigma = (2.0 * species.diffusion_um2_s * dt).sqrt();
    let r2 = start[1] * start[1] + start[2] * start[2];
    let drift = velocity_unchecked(flow, geometry.radius_um, r2) * dt;
    let (gx, gy, gz) = (rng.normal(), rng.normal(), rng.normal());
    step_from_variates(start, drift, sigma, [gx, gy, gz])
}

/// Deterministic core of [`brownian_step`] for given standard-normal variates.
#[inline]
pub fn step_from_variates(start: [f64; 3], axial_drift: f64, sigma: f64, g: [f64; 3]) -> Segment {
    Segment {
        start,
        end: [
            start[0] + axial_drift + sigma * g[0],
            start[1] + sigma * g[1],
            start[2] + sigma * g[2],
        ],
    }
}

/// Péclet number `R v / D`.
pub fn peclet(radius_um: f64, velocity_um_s: f64, diffusion_um2_s: f64) -> Result<f64, TransportError> {
    if diffusion_um2_s.is_nan() || diffusion_um2_s <= 0.0 {
        return Err(TransportError::NonPositiveDiffusion(diffusion_um2_s));
    }
    if radius_um.is_nan() || radius_um <= 0.0 {
        return Err(TransportError::NonPositiveRadius(radius_um));
    }
    Ok(radius_um * velocity_um_s / diffusion_um2_s)
}

/// Dispersion factor `L / (Pe R)`.
pub fn dispersion_factor(length_um: f64, peclet: f64, radius_um: f64) -> Result<f64, TransportError> {
    if peclet.is_nan() || peclet <= 0.0 {
        return Err(TransportError::ZeroPeclet);
    }
    if radius_um.is_nan() || radius_um <= 0.0 {
        return Err(TransportError::NonPositiveRadius(radius_um));
    }
    Ok(length_um / (peclet * radius_um))
}

/// Flow regime from Pe and αd: αd < 1 means the radial profile dominates.
pub fn classify_flow_regime(
    geometry: &VesselGeometry,
    flow: &FlowProfile,
    species: &MoleculeSpecies,
) -> Result<DimensionlessReport, TransportError> {
    let v = match flow.kind {
        FlowKind::None => 0.0,
        _ => flow.mean_velocity_um_s,
    };
    let pe = peclet(geometry.radius_um, v, species.diffusion_um2_s)?;
    if pe == 0.0 {
        return Ok(DimensionlessReport {
            peclet: 0.0,
            dispersion_factor: None,
            regime: FlowRegime::PureDiffusion,
        });
    }
    let alpha = dispersion_factor(geometry.length_um, pe, geometry.radius_um)?;
    let regime = if alpha < 1.0 {
        FlowRegime::PoiseuilleDominated
    } else {
        FlowRegime::UniformDispersive
    };
    Ok(DimensionlessReport {
        peclet: pe,
        dispersion_factor: Some(alpha),
        regime,
    })
}

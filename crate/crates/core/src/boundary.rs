//! Boundary handling for one tentative step: absorbing receivers, periodic valve
//! planes, the radial wall (reflective or leaky) and the end caps.
//!
//! Resolution order inside a step is fixed:
//! 1. absorption on the raw segment,
//! 2. valve planes,
//! 3. radial wall,
//! 4. end caps,
//! 5. absorption again on the resolved segment if anything was reflected,
//! 6. Brownian-bridge crossing test against the receivers for the resolved segment.
//!
//! Event times are linear interpolations along the segment, reported as a fraction
//! of the step.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::scenario::{EndCapPolicy, ReceiverSpec, VesselGeometry};
use crate::transport::Segment;

const MAX_REFLECTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallKind {
    Reflective,
    Permeable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallModel {
    pub kind: WallKind,
    /// Probability that a wall contact removes the molecule.
    pub leak_probability: f64,
}

impl WallModel {
    pub fn reflective() -> Self {
        Self {
            kind: WallKind::Reflective,
            leak_probability: 0.0,
        }
    }

    pub fn permeable(leak_probability: f64) -> Self {
        Self {
            kind: WallKind::Permeable,
            leak_probability,
        }
    }

    /// Per-contact leak probability for a wall of permeability `kappa_um_s` (μm/s),
    /// `p = κ sqrt(π Δt / D)`. Valid while the result is small.
    pub fn leak_probability_from_permeability(kappa_um_s: f64, dt: f64, diffusion_um2_s: f64) -> f64 {
        (kappa_um_s * (std::f64::consts::PI * dt / diffusion_um2_s).sqrt()).min(1.0)
    }
}

/// A planar gate across the duct that opens and closes periodically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValveSpec {
    pub axial_um: f64,
    pub period_s: f64,
    pub open_fraction: f64,
    pub phase_s: f64,
}

impl ValveSpec {
    pub fn always_open(axial_um: f64) -> Self {
        Self {
            axial_um,
            period_s: 1.0,
            open_fraction: 1.0,
            phase_s: 0.0,
        }
    }

    pub fn always_closed(axial_um: f64) -> Self {
        Self {
            axial_um,
            period_s: 1.0,
            open_fraction: 0.0,
            phase_s: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValveState {
    Open,
    Closed,
}

pub fn valve_state(valve: &ValveSpec, t: f64) -> ValveState {
    let cycle = (t + valve.phase_s) / valve.period_s;
    if cycle - cycle.floor() < valve.open_fraction {
        ValveState::Open
    } else {
        ValveState::Closed
    }
}

/// Absorbing sphere in Cartesian coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    pub fn from_receiver(receiver: &ReceiverSpec, duct_radius_um: f64) -> Self {
        Self {
            center: receiver.center(duct_radius_um),
            radius: receiver.radius_um,
        }
    }

    fn dist_sq(&self, p: [f64; 3]) -> f64 {
        let d = sub(p, self.center);
        dot(d, d)
    }

    /// Fraction along `seg` where it first touches the sphere.
    pub fn hit_fraction(&self, seg: &Segment) -> Option<f64> {
        let r2 = self.radius * self.radius;
        let rel = sub(seg.start, self.center);
        let c = dot(rel, rel) - r2;
        if c <= 0.0 {
            return Some(0.0);
        }
        let d = seg.displacement();
        let a = dot(d, d);
        if a == 0.0 {
            return None;
        }
        let b = 2.0 * dot(d, rel);
        if b >= 0.0 {
            // Moving away from the center.
            return None;
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        // Stable form of the smaller root.
        let q = -0.5 * (b - disc.sqrt());
        let s = c / q;
        (0.0..=1.0).contains(&s).then_some(s)
    }
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Earliest receiver crossed by the straight segment: `(receiver index, fraction)`.
pub fn check_absorption(seg: &Segment, receivers: &[Sphere]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in receivers.iter().enumerate() {
        if let Some(f) = s.hit_fraction(seg) {
            if best.is_none_or(|(_, b)| f < b) {
                best = Some((i, f));
            }
        }
    }
    best
}

/// Probability that the Brownian bridge between the segment end points touched a
/// sphere the straight segment missed, using the tangent-plane approximation
/// `exp(-d0 d1 / (D dt))` with `d0`, `d1` the end points' distances to the surface.
/// One uniform is drawn per receiver whose probability is not negligible.
pub fn bridge_crossing(
    seg: &Segment,
    receivers: &[Sphere],
    diffusion_um2_s: f64,
    dt: f64,
    rng: &mut RngStream,
) -> Option<(usize, f64)> {
    const NEGLIGIBLE_EXPONENT: f64 = 30.0;
    let scale = diffusion_um2_s * dt;
    for (i, s) in receivers.iter().enumerate() {
        let d0 = s.dist_sq(seg.start).sqrt() - s.radius;
        let d1 = s.dist_sq(seg.end).sqrt() - s.radius;
        if d0 <= 0.0 || d1 <= 0.0 {
            continue;
        }
        let exponent = d0 * d1 / scale;
        if exponent > NEGLIGIBLE_EXPONENT {
            continue;
        }
        if rng.uniform() < (-exponent).exp() {
            let d = seg.displacement();
            let len2 = dot(d, d);
            let f = if len2 > 0.0 {
                (-dot(sub(seg.start, s.center), d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return Some((i, f));
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WallOutcome {
    /// End point inside the duct, untouched.
    Inside,
    Reflected([f64; 3]),
    Leaked { fraction: f64 },
}

/// Handle an end point beyond the radial wall: leak with the wall's probability at
/// the contact point, otherwise mirror the radial coordinate `r' -> 2R - r'`.
pub fn resolve_wall(seg: &Segment, geometry: &VesselGeometry, wall: &WallModel, rng: &mut RngStream) -> WallOutcome {
    let radius = geometry.radius_um;
    let r2 = seg.end[1] * seg.end[1] + seg.end[2] * seg.end[2];
    if r2 <= radius * radius {
        return WallOutcome::Inside;
    }
    if wall.kind == WallKind::Permeable && rng.bernoulli(wall.leak_probability) {
        return WallOutcome::Leaked {
            fraction: wall_contact_fraction(seg, radius),
        };
    }
    WallOutcome::Reflected(reflect_radially(seg.end, radius))
}

fn reflect_radially(mut p: [f64; 3], radius: f64) -> [f64; 3] {
    for _ in 0..MAX_REFLECTIONS {
        let r = (p[1] * p[1] + p[2] * p[2]).sqrt();
        if r <= radius {
            return p;
        }
        let scale = (2.0 * radius - r) / r;
        p[1] *= scale;
        p[2] *= scale;
    }
    let r = (p[1] * p[1] + p[2] * p[2]).sqrt();
    if r > radius {
        p[1] *= radius / r;
        p[2] *= radius / r;
    }
    p
}

/// Fraction at which the lateral projection of `seg` leaves the disc of `radius`.
fn wall_contact_fraction(seg: &Segment, radius: f64) -> f64 {
    let (y0, z0) = (seg.start[1], seg.start[2]);
    let (dy, dz) = (seg.end[1] - y0, seg.end[2] - z0);
    let a = dy * dy + dz * dz;
    let b = 2.0 * (y0 * dy + z0 * dz);
    let c = y0 * y0 + z0 * z0 - radius * radius;
    if c >= 0.0 || a == 0.0 {
        return 0.0;
    }
    let disc = (b * b - 4.0 * a * c).max(0.0);
    ((-b + disc.sqrt()) / (2.0 * a)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValveOutcome {
    Pass,
    Reflected([f64; 3]),
}

/// Mirror the end point about the first closed valve plane the segment crosses.
/// `valves` must be sorted by axial position; the step spans `[t0, t0 + dt]`.
pub fn resolve_valves(seg: &Segment, valves: &[ValveSpec], t0: f64, dt: f64) -> ValveOutcome {
    if valves.is_empty() {
        return ValveOutcome::Pass;
    }
    let mut end = seg.end;
    let x0 = seg.start[0];
    let mut reflected = false;
    for _ in 0..MAX_REFLECTIONS {
        let dx = end[0] - x0;
        let closed = closed_crossing(x0, dx, valves, t0, dt);
        match closed {
            Some(xv) => {
                end[0] = 2.0 * xv - end[0];
                reflected = true;
            }
            None => break,
        }
    }
    if reflected {
        ValveOutcome::Reflected(end)
    } else {
        ValveOutcome::Pass
    }
}

fn closed_crossing(x0: f64, dx: f64, valves: &[ValveSpec], t0: f64, dt: f64) -> Option<f64> {
    let x1 = x0 + dx;
    let crossed = |v: &&ValveSpec| (x0 - v.axial_um) * (x1 - v.axial_um) < 0.0;
    let closed_at = |v: &ValveSpec| {
        let f = (v.axial_um - x0) / dx;
        valve_state(v, t0 + f * dt) == ValveState::Closed
    };
    if dx > 0.0 {
        valves.iter().filter(crossed).find(|v| closed_at(v)).map(|v| v.axial_um)
    } else {
        valves.iter().rev().filter(crossed).find(|v| closed_at(v)).map(|v| v.axial_um)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EndCapOutcome {
    Pass,
    Reflected([f64; 3]),
    Exited { fraction: f64 },
}

pub fn resolve_end_caps(seg: &Segment, geometry: &VesselGeometry) -> EndCapOutcome {
    let l = geometry.length_um;
    let (x0, x1) = (seg.start[0], seg.end[0]);
    if (0.0..=l).contains(&x1) {
        return EndCapOutcome::Pass;
    }
    let absorb_near = geometry.end_cap_policy == EndCapPolicy::AbsorbBoth;
    let absorb_far = geometry.end_cap_policy != EndCapPolicy::ReflectBoth;
    let crossing = |plane: f64| ((plane - x0) / (x1 - x0)).clamp(0.0, 1.0);
    if x1 > l && absorb_far {
        return EndCapOutcome::Exited { fraction: crossing(l) };
    }
    if x1 < 0.0 && absorb_near {
        return EndCapOutcome::Exited { fraction: crossing(0.0) };
    }
    let mut end = seg.end;
    for _ in 0..MAX_REFLECTIONS {
        if end[0] < 0.0 {
            end[0] = -end[0];
        } else if end[0] > l {
            end[0] = 2.0 * l - end[0];
        } else {
            break;
        }
    }
    end[0] = end[0].clamp(0.0, l);
    EndCapOutcome::Reflected(end)
}

/// Outcome of a fully resolved step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Moved([f64; 3]),
    Absorbed { receiver: usize, fraction: f64 },
    Leaked { fraction: f64 },
    Exited { fraction: f64 },
}

/// The boundaries of one duct, prepared for repeated step resolution.
#[derive(Clone, Debug)]
pub struct DuctBoundaries {
    pub geometry: VesselGeometry,
    pub wall: WallModel,
    valves: Vec<ValveSpec>,
    pub receivers: Vec<Sphere>,
}

impl DuctBoundaries {
    pub fn new(geometry: &VesselGeometry, wall: &WallModel, valves: &[ValveSpec], receivers: &[ReceiverSpec]) -> Self {
        let mut valves = valves.to_vec();
        valves.sort_by(|a, b| a.axial_um.total_cmp(&b.axial_um));
        Self {
            geometry: geometry.clone(),
            wall: wall.clone(),
            valves,
            receivers: receivers
                .iter()
                .map(|r| Sphere::from_receiver(r, geometry.radius_um))
                .collect(),
        }
    }

    pub fn valves(&self) -> &[ValveSpec] {
        &self.valves
    }

    /// Resolve one step that starts at time `t0`.
    pub fn resolve_step(&self, raw: Segment, t0: f64, dt: f64, diffusion_um2_s: f64, rng: &mut RngStream) -> StepOutcome {
        if let Some((receiver, fraction)) = check_absorption(&raw, &self.receivers) {
            return StepOutcome::Absorbed { receiver, fraction };
        }
        let mut seg = raw;
        let mut reflected = false;

        if let ValveOutcome::Reflected(end) = resolve_valves(&seg, &self.valves, t0, dt) {
            seg.end = end;
            reflected = true;
        }
        match resolve_wall(&seg, &self.geometry, &self.wall, rng) {
            WallOutcome::Inside => {}
            WallOutcome::Reflected(end) => {
                seg.end = end;
                reflected = true;
            }
            WallOutcome::Leaked { fraction } => return StepOutcome::Leaked { fraction },
        }
        match resolve_end_caps(&seg, &self.geometry) {
            EndCapOutcome::Pass => {}
            EndCapOutcome::Reflected(end) => {
                seg.end = end;
                reflected = true;
            }
            EndCapOutcome::Exited { fraction } => return StepOutcome::Exited { fraction },
        }
        if reflected {
            if let Some((receiver, fraction)) = check_absorption(&seg, &self.receivers) {
                return StepOutcome::Absorbed { receiver, fraction };
            }
        }
        if let Some((receiver, fraction)) = bridge_crossing(&seg, &self.receivers, diffusion_um2_s, dt, rng) {
            return StepOutcome::Absorbed { receiver, fraction };
        }
        debug_assert!(self.contains(seg.end), "escaped the duct: {:?}", seg.end);
        StepOutcome::Moved(seg.end)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let r = self.geometry.radius_um;
        p[1] * p[1] + p[2] * p[2] <= r * r * (1.0 + 1e-12) && (0.0..=self.geometry.length_um).contains(&p[0])
    }
}

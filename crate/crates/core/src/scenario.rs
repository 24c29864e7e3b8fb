//! Scenario records and the shared domain types every other module consumes.
//!
//! Units are fixed crate-wide: lengths in μm, times in s, diffusion in μm²/s and
//! velocities in μm/s. Scenario files are TOML whose keys mirror the struct fields;
//! a velocity may also be given as `mean_velocity_cm_s` and is converted on parse.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

use crate::boundary::{ValveSpec, WallKind, WallModel};

/// Offset of the emission point from the wall along the inward normal.
pub const EMISSION_INSET_UM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndCapPolicy {
    ReflectBoth,
    AbsorbFarEnd,
    AbsorbBoth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselGeometry {
    pub radius_um: f64,
    pub length_um: f64,
    pub end_cap_policy: EndCapPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowKind {
    None,
    Uniform,
    Poiseuille,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFlow")]
pub struct FlowProfile {
    pub kind: FlowKind,
    pub mean_velocity_um_s: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    kind: FlowKind,
    mean_velocity_um_s: Option<f64>,
    mean_velocity_cm_s: Option<f64>,
}

impl TryFrom<RawFlow> for FlowProfile {
    type Error = String;

    fn try_from(raw: RawFlow) -> Result<Self, Self::Error> {
        let mean_velocity_um_s = match (raw.mean_velocity_um_s, raw.mean_velocity_cm_s) {
            (Some(_), Some(_)) => {
                return Err("give the flow velocity in one unit only".to_string())
            }
            (Some(v), None) => v,
            (None, Some(v)) => v * 1.0e4,
            (None, None) => 0.0,
        };
        Ok(FlowProfile {
            kind: raw.kind,
            mean_velocity_um_s,
        })
    }
}

impl FlowProfile {
    pub fn none() -> Self {
        Self {
            kind: FlowKind::None,
            mean_velocity_um_s: 0.0,
        }
    }

    pub fn uniform(v: f64) -> Self {
        Self {
            kind: FlowKind::Uniform,
            mean_velocity_um_s: v,
        }
    }

    pub fn poiseuille(v: f64) -> Self {
        Self {
            kind: FlowKind::Poiseuille,
            mean_velocity_um_s: v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpecies {
    pub species_id: u32,
    pub diffusion_um2_s: f64,
    /// Omitted in a scenario file, degradation is off.
    #[serde(default)]
    pub degradation_rate_per_s: f64,
}

/// A point on the duct surface, given by its axial position and angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub axial_um: f64,
    pub angle_rad: f64,
}

impl SurfacePoint {
    pub fn new(axial_um: f64, angle_rad: f64) -> Self {
        Self {
            axial_um,
            angle_rad,
        }
    }

    /// Cartesian point at radial distance `radial_um` under this surface point.
    pub fn at_radius(&self, radial_um: f64) -> [f64; 3] {
        [
            self.axial_um,
            radial_um * self.angle_rad.cos(),
            radial_um * self.angle_rad.sin(),
        ]
    }
}

/// Absorbing sphere whose center sits on the duct surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub center_axial_um: f64,
    pub wall_anchor_angle_rad: f64,
    pub radius_um: f64,
}

impl ReceiverSpec {
    pub fn center(&self, duct_radius_um: f64) -> [f64; 3] {
        SurfacePoint::new(self.center_axial_um, self.wall_anchor_angle_rad).at_radius(duct_radius_um)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParticleState {
    Alive,
    Absorbed { receiver: usize, time_s: f64 },
    Leaked { time_s: f64 },
    Degraded { time_s: f64 },
    ExitedEnd { time_s: f64 },
}

impl ParticleState {
    pub fn is_alive(&self) -> bool {
        matches!(self, ParticleState::Alive)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    /// `[axial, lateral_y, lateral_z]` in μm.
    pub position: [f64; 3],
    pub species_id: u32,
    state: ParticleState,
}

impl Particle {
    pub fn new(position: [f64; 3], species_id: u32) -> Self {
        Self {
            position,
            species_id,
            state: ParticleState::Alive,
        }
    }

    pub fn state(&self) -> ParticleState {
        self.state
    }

    /// Move a living particle into a terminal state. Terminal states are absorbing.
    pub fn terminate(&mut self, state: ParticleState) {
        assert!(self.state.is_alive(), "particle already terminated: {:?}", self.state);
        assert!(!state.is_alive());
        self.state = state;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub geometry: VesselGeometry,
    pub flow: FlowProfile,
    pub wall: WallModel,
    #[serde(default)]
    pub valves: Vec<ValveSpec>,
    pub species: Vec<MoleculeSpecies>,
    pub tx_position: SurfacePoint,
    /// Additional transmitters, used by the MIMO experiments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_transmitters: Vec<SurfacePoint>,
    pub receivers: Vec<ReceiverSpec>,
    pub molecules_per_emission: u64,
    pub time_step_s: f64,
    pub end_time_s: f64,
    pub seed: u64,
    /// CIR bin width; ten time steps when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cir_bin_width_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    InvalidGeometry,
    InvalidFlow,
    InvalidWall,
    InvalidValve,
    InvalidSpecies,
    InvalidTiming,
    StepTooCoarse,
    BadPlacement,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: String,
    pub message: String,
}

/// Every invariant a scenario violates.
#[derive(Clone, Debug, PartialEq, Serialize, thiserror::Error)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario:")?;
        for v in &self.violations {
            write!(f, " [{:?} at {}: {}]", v.kind, v.path, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioParseError {
    #[error("malformed scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn check(&mut self, ok: bool, kind: ViolationKind, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                kind,
                path: path.into(),
                message: message.into(),
            });
        }
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Accept the scenario unchanged when every invariant holds.
pub fn validate_scenario(scenario: SimulationScenario) -> Result<SimulationScenario, ValidationReport> {
    scenario.validate()?;
    Ok(scenario)
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<(), ValidationReport> {
        use ViolationKind::*;
        let mut c = Checker {
            violations: Vec::new(),
        };
        let g = &self.geometry;
        c.check(positive(g.radius_um), InvalidGeometry, "geometry.radius_um", "must be > 0");
        c.check(positive(g.length_um), InvalidGeometry, "geometry.length_um", "must be > 0");

        let f = &self.flow;
        c.check(
            f.mean_velocity_um_s.is_finite() && f.mean_velocity_um_s >= 0.0,
            InvalidFlow,
            "flow.mean_velocity_um_s",
            "must be >= 0",
        );
        c.check(
            f.kind != FlowKind::None || f.mean_velocity_um_s == 0.0,
            InvalidFlow,
            "flow.mean_velocity_um_s",
            "must be 0 when flow kind is None",
        );

        let w = &self.wall;
        c.check(probability(w.leak_probability), InvalidWall, "wall.leak_probability", "must lie in [0, 1]");
        c.check(
            w.kind != WallKind::Reflective || w.leak_probability == 0.0,
            InvalidWall,
            "wall.leak_probability",
            "must be 0 for a reflective wall",
        );

        for (i, v) in self.valves.iter().enumerate() {
            let p = format!("valves[{i}]");
            c.check(
                v.axial_um > 0.0 && v.axial_um < g.length_um,
                InvalidValve,
                format!("{p}.axial_um"),
                "must lie strictly inside the duct",
            );
            c.check(positive(v.period_s), InvalidValve, format!("{p}.period_s"), "must be > 0");
            c.check(probability(v.open_fraction), InvalidValve, format!("{p}.open_fraction"), "must lie in [0, 1]");
            c.check(v.phase_s.is_finite(), InvalidValve, format!("{p}.phase_s"), "must be finite");
        }

        c.check(!self.species.is_empty(), InvalidSpecies, "species", "at least one species is required");
        for (i, s) in self.species.iter().enumerate() {
            let p = format!("species[{i}]");
            c.check(positive(s.diffusion_um2_s), InvalidSpecies, format!("{p}.diffusion_um2_s"), "must be > 0");
            c.check(
                s.degradation_rate_per_s.is_finite() && s.degradation_rate_per_s >= 0.0,
                InvalidSpecies,
                format!("{p}.degradation_rate_per_s"),
                "must be >= 0",
            );
            let dup = self.species[..i].iter().any(|o| o.species_id == s.species_id);
            c.check(!dup, InvalidSpecies, format!("{p}.species_id"), "species ids must be distinct");
        }

        c.check(positive(self.time_step_s), InvalidTiming, "time_step_s", "must be > 0");
        c.check(
            self.end_time_s.is_finite() && self.end_time_s >= self.time_step_s,
            InvalidTiming,
            "end_time_s",
            "must be >= time_step_s",
        );
        if let Some(bw) = self.cir_bin_width_s {
            let ratio = bw / self.time_step_s;
            c.check(
                positive(bw) && (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0,
                InvalidTiming,
                "cir_bin_width_s",
                "must be a positive whole multiple of time_step_s",
            );
        }

        let transmitters = std::iter::once(("tx_position".to_string(), &self.tx_position)).chain(
            self.extra_transmitters
                .iter()
                .enumerate()
                .map(|(i, t)| (format!("extra_transmitters[{i}]"), t)),
        );
        for (path, tx) in transmitters {
            c.check(
                tx.axial_um >= 0.0 && tx.axial_um <= g.length_um,
                BadPlacement,
                format!("{path}.axial_um"),
                "transmitter must lie on the duct surface",
            );
            c.check(tx.angle_rad.is_finite(), BadPlacement, format!("{path}.angle_rad"), "must be finite");
        }

        for (i, r) in self.receivers.iter().enumerate() {
            let p = format!("receivers[{i}]");
            c.check(positive(r.radius_um), InvalidGeometry, format!("{p}.radius_um"), "must be > 0");
            c.check(
                r.radius_um < g.radius_um,
                InvalidGeometry,
                format!("{p}.radius_um"),
                "must be smaller than the duct radius",
            );
            c.check(
                g.length_um > 2.0 * r.radius_um,
                InvalidGeometry,
                "geometry.length_um",
                format!("must exceed twice the radius of receiver {i}"),
            );
            c.check(
                r.center_axial_um >= 0.0 && r.center_axial_um <= g.length_um,
                BadPlacement,
                format!("{p}.center_axial_um"),
                "receiver center must lie on the duct surface",
            );
            c.check(
                r.wall_anchor_angle_rad.is_finite(),
                BadPlacement,
                format!("{p}.wall_anchor_angle_rad"),
                "must be finite",
            );
        }

        if positive(self.time_step_s) {
            if let Some(a_min) = self.receivers.iter().map(|r| r.radius_um).reduce(f64::min) {
                for (i, s) in self.species.iter().enumerate() {
                    let step = (2.0 * s.diffusion_um2_s * self.time_step_s).sqrt();
                    c.check(
                        step <= a_min / 4.0,
                        StepTooCoarse,
                        "time_step_s",
                        format!(
                            "diffusive step {step:.3} um of species[{i}] exceeds a quarter of the smallest receiver radius ({:.3} um)",
                            a_min / 4.0
                        ),
                    );
                }
            }
        }

        if c.violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport {
                violations: c.violations,
            })
        }
    }

    pub fn bin_width_s(&self) -> f64 {
        self.cir_bin_width_s.unwrap_or(10.0 * self.time_step_s)
    }

    pub fn species_index(&self, species_id: u32) -> Option<usize> {
        self.species.iter().position(|s| s.species_id == species_id)
    }

    /// All transmitters: the primary one first.
    pub fn transmitters(&self) -> Vec<SurfacePoint> {
        std::iter::once(self.tx_position)
            .chain(self.extra_transmitters.iter().copied())
            .collect()
    }

    /// Canonical TOML text of the scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Parse without validating.
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Parse and validate.
    pub fn parse(text: &str) -> Result<Self, ScenarioParseError> {
        let s = Self::from_toml(text)?;
        s.validate()?;
        Ok(s)
    }

    /// SHA-256 of the canonical TOML text, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Shipped scenario presets. Only `vein` carries measured parameters; the other two
/// are illustrative points inside the qualitative vessel ranges.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 3] = ["vein", "capillary", "artery-distal"];

    pub fn by_name(name: &str) -> Option<SimulationScenario> {
        match name {
            "vein" => Some(vein()),
            "capillary" => Some(capillary()),
            "artery-distal" => Some(artery_distal()),
            _ => None,
        }
    }

    /// Vein duct: D = 670 μm²/s, v = 0.5 cm/s, L = 2000 μm, R = 30 μm, a = 5 μm.
    /// Transmitter at the upstream end and receiver at the downstream end, both on
    /// the same wall line.
    pub fn vein() -> SimulationScenario {
        SimulationScenario {
            geometry: VesselGeometry {
                radius_um: 30.0,
                length_um: 2000.0,
                end_cap_policy: EndCapPolicy::ReflectBoth,
            },
            flow: FlowProfile::uniform(5000.0),
            wall: WallModel::reflective(),
            valves: Vec::new(),
            species: vec![MoleculeSpecies {
                species_id: 0,
                diffusion_um2_s: 670.0,
                degradation_rate_per_s: 0.0,
            }],
            tx_position: SurfacePoint::new(0.0, 0.0),
            extra_transmitters: Vec::new(),
            receivers: vec![ReceiverSpec {
                center_axial_um: 1995.0,
                wall_anchor_angle_rad: 0.0,
                radius_um: 5.0,
            }],
            molecules_per_emission: 100_000,
            time_step_s: 1e-3,
            end_time_s: 10.0,
            seed: 1,
            cir_bin_width_s: None,
        }
    }

    /// Illustrative capillary: narrow, slow, leaky.
    pub fn capillary() -> SimulationScenario {
        SimulationScenario {
            geometry: VesselGeometry {
                radius_um: 5.0,
                length_um: 500.0,
                end_cap_policy: EndCapPolicy::AbsorbFarEnd,
            },
            flow: FlowProfile::poiseuille(1000.0),
            wall: WallModel::permeable(0.01),
            valves: Vec::new(),
            species: vec![MoleculeSpecies {
                species_id: 0,
                diffusion_um2_s: 670.0,
                degradation_rate_per_s: 0.0,
            }],
            tx_position: SurfacePoint::new(0.0, 0.0),
            extra_transmitters: Vec::new(),
            receivers: vec![ReceiverSpec {
                center_axial_um: 495.0,
                wall_anchor_angle_rad: 0.0,
                radius_um: 2.0,
            }],
            molecules_per_emission: 10_000,
            time_step_s: 1e-4,
            end_time_s: 2.0,
            seed: 1,
            cir_bin_width_s: None,
        }
    }

    /// Illustrative distal artery: wide, fast, reflective.
    pub fn artery_distal() -> SimulationScenario {
        SimulationScenario {
            geometry: VesselGeometry {
                radius_um: 200.0,
                length_um: 5000.0,
                end_cap_policy: EndCapPolicy::AbsorbFarEnd,
            },
            flow: FlowProfile::uniform(20_000.0),
            wall: WallModel::reflective(),
            valves: Vec::new(),
            species: vec![MoleculeSpecies {
                species_id: 0,
                diffusion_um2_s: 670.0,
                degradation_rate_per_s: 0.0,
            }],
            tx_position: SurfacePoint::new(0.0, 0.0),
            extra_transmitters: Vec::new(),
            receivers: vec![ReceiverSpec {
                center_axial_um: 4990.0,
                wall_anchor_angle_rad: 0.0,
                radius_um: 10.0,
            }],
            molecules_per_emission: 10_000,
            time_step_s: 1e-3,
            end_time_s: 2.0,
            seed: 1,
            cir_bin_width_s: None,
        }
    }
}

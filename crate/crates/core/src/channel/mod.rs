//! The Monte Carlo engine and the channel impulse response it produces.
//!
//! Each particle owns the stream `(scenario seed, particle index)` and is stepped
//! to its fate on its own, so output bits do not depend on the number of worker
//! threads or on the order particles are visited.

pub mod analytic;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

use crate::boundary::{bridge_crossing, check_absorption, DuctBoundaries, Sphere, StepOutcome};
use crate::chemistry::survives;
use crate::rng::{self, derive_stream, RngStream};
use crate::scenario::{ParticleState, SimulationScenario, SurfacePoint, ValidationReport, EMISSION_INSET_UM};
use crate::transport::brownian_step;

pub use analytic::{
    analytic_1d_first_passage, analytic_1d_first_passage_cdf, analytic_free_space_absorbing_sphere, ks_statistic,
    AnalyticError, SphereHitting,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
    #[error("species {0} is not defined in the scenario")]
    UnknownSpecies(u32),
    #[error("release time {0} s lies outside the simulated horizon")]
    ReleaseOutsideHorizon(f64),
    #[error("the channel impulse response holds no arrivals")]
    EmptyCir,
    #[error("receiver {0} does not exist")]
    NoSuchReceiver(usize),
}

/// A batch of molecules emitted together.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Release {
    pub tx: SurfacePoint,
    pub time_s: f64,
    pub count: u64,
    pub species_id: u32,
}

/// Histogram of absorption times, one row of bins per receiver.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelImpulseResponse {
    pub bin_width_s: f64,
    /// `counts[receiver][bin]`.
    pub counts: Vec<Vec<u64>>,
    pub emitted: u64,
    pub scenario_hash: String,
}

/// Terminal fate of every emitted molecule.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MassLedger {
    pub emitted: u64,
    pub absorbed: Vec<u64>,
    pub leaked: u64,
    pub degraded: u64,
    pub exited: u64,
    pub alive_at_end: u64,
}

impl MassLedger {
    pub fn accounted(&self) -> u64 {
        self.absorbed.iter().sum::<u64>() + self.leaked + self.degraded + self.exited + self.alive_at_end
    }

    pub fn is_balanced(&self) -> bool {
        self.emitted == self.accounted()
    }

    pub fn from_fates(fates: &[ParticleState], receivers: usize) -> Self {
        let mut ledger = MassLedger {
            emitted: fates.len() as u64,
            absorbed: vec![0; receivers],
            ..Default::default()
        };
        for f in fates {
            match *f {
                ParticleState::Alive => ledger.alive_at_end += 1,
                ParticleState::Absorbed { receiver, .. } => ledger.absorbed[receiver] += 1,
                ParticleState::Leaked { .. } => ledger.leaked += 1,
                ParticleState::Degraded { .. } => ledger.degraded += 1,
                ParticleState::ExitedEnd { .. } => ledger.exited += 1,
            }
        }
        ledger
    }

    /// Single-line `key=value` record.
    pub fn to_record(&self) -> String {
        let absorbed: Vec<String> = self.absorbed.iter().map(u64::to_string).collect();
        format!(
            "emitted={} absorbed=[{}] leaked={} degraded={} exited={} alive_at_end={}",
            self.emitted,
            absorbed.join(","),
            self.leaked,
            self.degraded,
            self.exited,
            self.alive_at_end
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CirStatistics {
    pub peak_amplitude: u64,
    pub peak_time_s: f64,
    pub first_arrival_s: f64,
    pub tail_fraction: f64,
    pub tau_s: f64,
}

impl ChannelImpulseResponse {
    pub fn empty(bin_width_s: f64, receivers: usize, bins: usize, scenario_hash: String) -> Self {
        Self {
            bin_width_s,
            counts: vec![vec![0; bins]; receivers],
            emitted: 0,
            scenario_hash,
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn total(&self, receiver: usize) -> u64 {
        self.counts[receiver].iter().sum()
    }

    /// Per-bin arrival probabilities for one receiver.
    pub fn probabilities(&self, receiver: usize) -> Vec<f64> {
        let n = self.emitted.max(1) as f64;
        self.counts[receiver].iter().map(|&c| c as f64 / n).collect()
    }

    /// Delimited text: comment header, column header, one row per bin.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# scenario_digest={}", self.scenario_hash).unwrap();
        writeln!(out, "# bin_width_s={}", self.bin_width_s).unwrap();
        writeln!(out, "# emitted={}", self.emitted).unwrap();
        out.push_str("bin_start_s");
        for r in 0..self.counts.len() {
            write!(out, ",rx{r}").unwrap();
        }
        out.push('\n');
        for b in 0..self.bins() {
            write!(out, "{:.9}", b as f64 * self.bin_width_s).unwrap();
            for row in &self.counts {
                write!(out, ",{}", row[b]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Parse the text written by [`Self::to_delimited`].
    pub fn from_delimited(text: &str) -> Result<Self, String> {
        let mut hash = None;
        let mut bin_width = None;
        let mut emitted = None;
        let mut counts: Vec<Vec<u64>> = Vec::new();
        let mut columns = None;
        for line in text.lines() {
            if let Some(meta) = line.strip_prefix("# ") {
                let (k, v) = meta.split_once('=').ok_or_else(|| format!("bad header line: {line}"))?;
                match k {
                    "scenario_digest" => hash = Some(v.to_string()),
                    "bin_width_s" => bin_width = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
                    "emitted" => emitted = Some(v.parse::<u64>().map_err(|e| e.to_string())?),
                    _ => return Err(format!("unknown header key {k}")),
                }
            } else if line.starts_with("bin_start_s") {
                let n = line.split(',').count() - 1;
                counts = vec![Vec::new(); n];
                columns = Some(n);
            } else {
                let n = columns.ok_or("data row before column header")?;
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != n + 1 {
                    return Err(format!("row has {} fields, expected {}", fields.len(), n + 1));
                }
                fields[0].parse::<f64>().map_err(|e| e.to_string())?;
                for (r, f) in fields[1..].iter().enumerate() {
                    counts[r].push(f.parse::<u64>().map_err(|e| e.to_string())?);
                }
            }
        }
        Ok(Self {
            bin_width_s: bin_width.ok_or("missing bin_width_s")?,
            counts,
            emitted: emitted.ok_or("missing emitted")?,
            scenario_hash: hash.ok_or("missing scenario_digest")?,
        })
    }
}

/// Peak, first arrival and the fraction of arrivals in bins starting at or after `tau_s`.
pub fn cir_statistics(cir: &ChannelImpulseResponse, receiver: usize, tau_s: f64) -> Result<CirStatistics, ChannelError> {
    let row = cir.counts.get(receiver).ok_or(ChannelError::NoSuchReceiver(receiver))?;
    let total: u64 = row.iter().sum();
    if total == 0 {
        return Err(ChannelError::EmptyCir);
    }
    let (mut peak_bin, mut peak) = (0, 0);
    for (i, &c) in row.iter().enumerate() {
        if c > peak {
            peak = c;
            peak_bin = i;
        }
    }
    let first = row.iter().position(|&c| c > 0).expect("non-empty");
    let bw = cir.bin_width_s;
    let tail: u64 = row
        .iter()
        .enumerate()
        .filter(|(i, _)| *i as f64 * bw >= tau_s - 1e-12 * bw)
        .map(|(_, &c)| c)
        .sum();
    Ok(CirStatistics {
        peak_amplitude: peak,
        peak_time_s: peak_bin as f64 * bw,
        first_arrival_s: first as f64 * bw,
        tail_fraction: tail as f64 / total as f64,
        tau_s,
    })
}

/// Number of whole steps in `[0, end]`.
fn steps_in(end_s: f64, dt: f64) -> u64 {
    (end_s / dt - 1e-9).ceil().max(0.0) as u64
}

fn bins_in(end_s: f64, bw: f64) -> usize {
    (end_s / bw - 1e-9).ceil().max(1.0) as usize
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// Map `f` over `0..n` on `workers` threads (0 = all cores), preserving index order.
pub(crate) fn par_map<T: Send>(n: u64, workers: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    thread_pool(workers).install(|| (0..n).into_par_iter().map(f).collect())
}

/// Run every particle of `releases` through the duct and return their fates in
/// release order.
pub fn run_particles(
    scenario: &SimulationScenario,
    releases: &[Release],
    workers: usize,
) -> Result<Vec<ParticleState>, ChannelError> {
    scenario.validate()?;
    let dt = scenario.time_step_s;
    let n_steps = steps_in(scenario.end_time_s, dt);
    let boundaries = DuctBoundaries::new(&scenario.geometry, &scenario.wall, &scenario.valves, &scenario.receivers);
    let radius = scenario.geometry.radius_um;

    struct Prepared {
        first_index: u64,
        start: [f64; 3],
        first_step: u64,
        species: usize,
    }
    let mut prepared = Vec::with_capacity(releases.len());
    let mut total = 0u64;
    for r in releases {
        let species = scenario
            .species_index(r.species_id)
            .ok_or(ChannelError::UnknownSpecies(r.species_id))?;
        if r.time_s < 0.0 || r.time_s > scenario.end_time_s {
            return Err(ChannelError::ReleaseOutsideHorizon(r.time_s));
        }
        prepared.push(Prepared {
            first_index: total,
            start: r.tx.at_radius(radius - EMISSION_INSET_UM.min(radius / 2.0)),
            first_step: (r.time_s / dt).round() as u64,
            species,
        });
        total += r.count;
    }

    let fate = |index: u64| -> ParticleState {
        let release = &prepared[prepared.partition_point(|p| p.first_index <= index) - 1];
        let species = &scenario.species[release.species];
        let mut rng = derive_stream(scenario.seed, rng::stream_id(rng::domain::PARTICLE, index));
        let mut pos = release.start;
        for k in release.first_step..n_steps {
            let t0 = k as f64 * dt;
            let seg = brownian_step(pos, species, &scenario.flow, &scenario.geometry, dt, &mut rng);
            match boundaries.resolve_step(seg, t0, dt, species.diffusion_um2_s, &mut rng) {
                StepOutcome::Moved(p) => pos = p,
                StepOutcome::Absorbed { receiver, fraction } => {
                    return ParticleState::Absorbed {
                        receiver,
                        time_s: t0 + fraction * dt,
                    }
                }
                StepOutcome::Leaked { fraction } => {
                    return ParticleState::Leaked {
                        time_s: t0 + fraction * dt,
                    }
                }
                StepOutcome::Exited { fraction } => {
                    return ParticleState::ExitedEnd {
                        time_s: t0 + fraction * dt,
                    }
                }
            }
            if !survives(species.degradation_rate_per_s, dt, &mut rng) {
                return ParticleState::Degraded { time_s: t0 + 0.5 * dt };
            }
        }
        ParticleState::Alive
    };
    Ok(par_map(total, workers, fate))
}

/// Bin absorption times per receiver over `[0, end_s)`.
pub fn bin_absorptions(fates: &[ParticleState], receivers: usize, bin_width_s: f64, end_s: f64) -> Vec<Vec<u64>> {
    let bins = bins_in(end_s, bin_width_s);
    let mut counts = vec![vec![0u64; bins]; receivers];
    for f in fates {
        if let ParticleState::Absorbed { receiver, time_s } = *f {
            let b = ((time_s / bin_width_s).floor() as usize).min(bins - 1);
            counts[receiver][b] += 1;
        }
    }
    counts
}

/// Impulse response of the scenario: `molecules_per_emission` molecules of the first
/// species released at t = 0 from the transmitter.
pub fn simulate_cir(
    scenario: &SimulationScenario,
    workers: usize,
) -> Result<(ChannelImpulseResponse, MassLedger), ChannelError> {
    simulate_cir_from(scenario, scenario.tx_position, scenario.species.first().map_or(0, |s| s.species_id), workers)
}

/// Impulse response for a chosen transmitter and species.
pub fn simulate_cir_from(
    scenario: &SimulationScenario,
    tx: SurfacePoint,
    species_id: u32,
    workers: usize,
) -> Result<(ChannelImpulseResponse, MassLedger), ChannelError> {
    let release = Release {
        tx,
        time_s: 0.0,
        count: scenario.molecules_per_emission,
        species_id,
    };
    let fates = run_particles(scenario, &[release], workers)?;
    let receivers = scenario.receivers.len();
    let bw = scenario.bin_width_s();
    let cir = ChannelImpulseResponse {
        bin_width_s: bw,
        counts: bin_absorptions(&fates, receivers, bw, scenario.end_time_s),
        emitted: fates.len() as u64,
        scenario_hash: scenario.digest(),
    };
    Ok((cir, MassLedger::from_fates(&fates, receivers)))
}

/// Unbounded 3-D medium with an optional uniform drift along +x.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeSpaceSetup {
    pub tx: [f64; 3],
    pub receiver: Sphere,
    pub diffusion_um2_s: f64,
    pub drift_um_s: f64,
    pub molecules: u64,
    pub time_step_s: f64,
    pub end_time_s: f64,
    pub bin_width_s: f64,
    pub seed: u64,
}

impl FreeSpaceSetup {
    /// Source on the +x side of nothing: receiver centered `distance_um` downstream.
    pub fn on_axis(distance_um: f64, receiver_radius_um: f64, diffusion_um2_s: f64, molecules: u64) -> Self {
        Self {
            tx: [0.0; 3],
            receiver: Sphere {
                center: [distance_um, 0.0, 0.0],
                radius: receiver_radius_um,
            },
            diffusion_um2_s,
            drift_um_s: 0.0,
            molecules,
            time_step_s: 1e-3,
            end_time_s: 10.0,
            bin_width_s: 1e-2,
            seed: 1,
        }
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

/// Fates of the free-space particles, in particle order.
pub fn run_free_space(setup: &FreeSpaceSetup, workers: usize) -> Vec<ParticleState> {
    let dt = setup.time_step_s;
    let n_steps = steps_in(setup.end_time_s, dt);
    let sigma = (2.0 * setup.diffusion_um2_s * dt).sqrt();
    let drift = setup.drift_um_s * dt;
    let spheres = [setup.receiver];
    let fate = |index: u64| -> ParticleState {
        let mut rng: RngStream = derive_stream(setup.seed, rng::stream_id(rng::domain::FREE_SPACE, index));
        let mut pos = setup.tx;
        for k in 0..n_steps {
            let t0 = k as f64 * dt;
            let seg = crate::transport::step_from_variates(pos, drift, sigma, [rng.normal(), rng.normal(), rng.normal()]);
            let hit = check_absorption(&seg, &spheres)
                .or_else(|| bridge_crossing(&seg, &spheres, setup.diffusion_um2_s, dt, &mut rng));
            if let Some((receiver, fraction)) = hit {
                return ParticleState::Absorbed {
                    receiver,
                    time_s: t0 + fraction * dt,
                };
            }
            pos = seg.end;
        }
        ParticleState::Alive
    };
    par_map(setup.molecules, workers, fate)
}

/// Free-space counterpart of [`simulate_cir`]: same stepping, no walls, valves or caps.
pub fn simulate_free_space_cir(setup: &FreeSpaceSetup, workers: usize) -> (ChannelImpulseResponse, MassLedger) {
    let fates = run_free_space(setup, workers);
    let cir = ChannelImpulseResponse {
        bin_width_s: setup.bin_width_s,
        counts: bin_absorptions(&fates, 1, setup.bin_width_s, setup.end_time_s),
        emitted: fates.len() as u64,
        scenario_hash: setup.digest(),
    };
    (cir, MassLedger::from_fates(&fates, 1))
}

/// Sorted absorption times at one receiver.
pub fn arrival_times(fates: &[ParticleState], receiver: usize) -> Vec<f64> {
    let mut t: Vec<f64> = fates
        .iter()
        .filter_map(|f| match *f {
            ParticleState::Absorbed { receiver: r, time_s } if r == receiver => Some(time_s),
            _ => None,
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t
}

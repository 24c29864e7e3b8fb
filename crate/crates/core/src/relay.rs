//! Decode-and-forward relay chains.
//!
//! Each relay fully detects its incoming frame and re-emits the decisions with
//! fresh molecules. Hops are simulated independently: molecules never carry over
//! from one segment into the next.

use rand::RngCore;
use serde::Serialize;

use crate::channel::{simulate_cir, ChannelError};
use crate::comms::{
    detect, evaluate_ber, midpoint_threshold, modulate, synthesize_received, Bit, ChannelBank, CommsError,
    DetectionConfig, ModulationScheme, SynthesisMode,
};
use crate::rng::{self, derive_stream};
use crate::scenario::SimulationScenario;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelayError {
    #[error("a relay chain needs at least one hop")]
    NoHops,
    #[error("no source bits to send")]
    EmptyInput,
    #[error("processing delay must be finite and non-negative")]
    NegativeDelay,
    #[error("{hops} hops need at least {} valves, found {valves}", .hops - 1)]
    TooManyHops { hops: usize, valves: usize },
    #[error(transparent)]
    Comms(#[from] CommsError),
}

impl From<ChannelError> for RelayError {
    fn from(e: ChannelError) -> Self {
        Self::Comms(e.into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HopChannel {
    /// Simulated segment. Its impulse response supplies detector taps and, in
    /// semi-analytic mode, the reception statistics.
    Scenario(Box<SimulationScenario>),
    /// Precomputed per-bin arrival probabilities.
    Bank(ChannelBank),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hop {
    pub channel: HopChannel,
    pub detection: DetectionConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayChain {
    pub hops: Vec<Hop>,
    pub processing_delay_s: f64,
    pub scheme: ModulationScheme,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelayMode {
    /// Binomial reception from each hop's impulse response.
    #[default]
    SemiAnalytic,
    /// Particle simulation of every frame on scenario hops.
    FullParticle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HopReport {
    pub start_s: f64,
    pub ber: f64,
    pub bit_errors: usize,
    pub emitted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelayReport {
    pub bits: usize,
    pub hops: Vec<HopReport>,
    pub end_to_end_ber: f64,
    pub end_to_end_errors: usize,
    pub total_emitted: u64,
    #[serde(skip)]
    pub delivered: Vec<Bit>,
}

/// A chain with its channel estimates computed once, reusable across seeds.
pub struct RelayRunner {
    chain: RelayChain,
    estimates: Vec<ChannelBank>,
    mode: RelayMode,
    workers: usize,
}

impl RelayRunner {
    pub fn new(chain: RelayChain, mode: RelayMode, workers: usize) -> Result<Self, RelayError> {
        if chain.hops.is_empty() {
            return Err(RelayError::NoHops);
        }
        if !(chain.processing_delay_s >= 0.0 && chain.processing_delay_s.is_finite()) {
            return Err(RelayError::NegativeDelay);
        }
        chain.scheme.validate()?;
        let estimates = chain
            .hops
            .iter()
            .map(|hop| estimate(&hop.channel, workers))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            chain,
            estimates,
            mode,
            workers,
        })
    }

    pub fn estimates(&self) -> &[ChannelBank] {
        &self.estimates
    }

    /// Send `bits` through every hop. All randomness derives from `seed`.
    pub fn run(&self, bits: &[Bit], seed: u64) -> Result<RelayReport, RelayError> {
        if bits.is_empty() {
            return Err(RelayError::EmptyInput);
        }
        let scheme = &self.chain.scheme;
        let species = scheme.species_ids();
        let slot = scheme.slot_duration_s();
        let mut current = bits.to_vec();
        let mut hops = Vec::with_capacity(self.chain.hops.len());
        let mut start_s = 0.0;
        for (k, (hop, bank)) in self.chain.hops.iter().zip(&self.estimates).enumerate() {
            let mut rng = derive_stream(seed, rng::stream_id(rng::domain::RELAY, k as u64));
            // Hop timelines are local: a hop starts once the previous frame has been
            // received and processed, which only shifts the reported start time.
            let schedule = modulate(&current, scheme)?;
            let frame = match (&hop.channel, self.mode) {
                (HopChannel::Scenario(s), RelayMode::FullParticle) => {
                    let mut run = (**s).clone();
                    run.seed = rng.next_u64();
                    let mode = SynthesisMode::FullParticle {
                        scenario: &run,
                        workers: self.workers,
                    };
                    synthesize_received(std::slice::from_ref(&schedule), mode, &species, &mut rng)?
                }
                _ => synthesize_received(std::slice::from_ref(&schedule), SynthesisMode::SemiAnalytic(bank), &species, &mut rng)?,
            };
            let taps = bank.slot_taps(0, 0, slot)?;
            let mut decided = detect(&frame, scheme, &hop.detection, &taps, None, 0)?;
            decided.truncate(current.len());
            let errors = current.iter().zip(&decided).filter(|(a, b)| a != b).count();
            hops.push(HopReport {
                start_s,
                ber: evaluate_ber(&current, &decided)?,
                bit_errors: errors,
                emitted: schedule.emitted(),
            });
            start_s += schedule.duration_s() + self.chain.processing_delay_s;
            current = decided;
        }
        let end_to_end_errors = bits.iter().zip(&current).filter(|(a, b)| a != b).count();
        Ok(RelayReport {
            bits: bits.len(),
            end_to_end_ber: evaluate_ber(bits, &current)?,
            end_to_end_errors,
            total_emitted: hops.iter().map(|h| h.emitted).sum(),
            hops,
            delivered: current,
        })
    }
}

fn estimate(channel: &HopChannel, workers: usize) -> Result<ChannelBank, RelayError> {
    Ok(match channel {
        HopChannel::Bank(b) => b.clone(),
        HopChannel::Scenario(s) => ChannelBank::from_cir(&simulate_cir(s, workers)?.0),
    })
}

/// Run `chain` once. For repeated runs over many seeds use [`RelayRunner`].
pub fn simulate_relay_chain(
    chain: &RelayChain,
    bits: &[Bit],
    seed: u64,
    mode: RelayMode,
    workers: usize,
) -> Result<RelayReport, RelayError> {
    RelayRunner::new(chain.clone(), mode, workers)?.run(bits, seed)
}

/// Gap between a valve plane and a relay transmitter placed just downstream of it.
pub const RELAY_TX_OFFSET_UM: f64 = 1.0;

/// Hop scenarios whose boundaries sit on valves. Hop `k` keeps the full duct and
/// its valves, moves the transmitter just downstream of boundary valve `k−1` and
/// the receiver just upstream of boundary valve `k`. The first transmitter and
/// the last receiver keep their original positions. With fewer hops than
/// inter-valve segments the boundary valves are spread evenly.
pub fn valve_aligned_hops(scenario: &SimulationScenario, hops: usize) -> Result<Vec<SimulationScenario>, RelayError> {
    if hops == 0 {
        return Err(RelayError::NoHops);
    }
    let mut valves = scenario.valves.clone();
    valves.sort_by(|a, b| a.axial_um.total_cmp(&b.axial_um));
    let v = valves.len();
    if hops > v + 1 {
        return Err(RelayError::TooManyHops { hops, valves: v });
    }
    let boundaries: Vec<f64> = (1..hops).map(|k| valves[k * (v + 1) / hops - 1].axial_um).collect();
    let receiver = scenario.receivers.first().cloned();
    let mut out = Vec::with_capacity(hops);
    for k in 0..hops {
        let mut s = scenario.clone();
        if k > 0 {
            s.tx_position.axial_um = boundaries[k - 1] + RELAY_TX_OFFSET_UM;
        }
        if let (true, Some(rx)) = (k + 1 < hops, &receiver) {
            s.receivers = vec![crate::scenario::ReceiverSpec {
                center_axial_um: boundaries[k] - rx.radius_um,
                ..rx.clone()
            }];
        }
        out.push(s);
    }
    Ok(out)
}

/// Which detector each hop of a placed chain uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DetectorKind {
    Fixed,
    Adaptive { isi_memory: usize },
}

/// Valve-aligned relay chain with thresholds calibrated per hop: halfway between
/// silence and the expected first-slot count of the largest emission.
pub fn valve_aligned_placement(
    scenario: &SimulationScenario,
    hops: usize,
    scheme: &ModulationScheme,
    detector: DetectorKind,
    processing_delay_s: f64,
    workers: usize,
) -> Result<RelayChain, RelayError> {
    let scenarios = valve_aligned_hops(scenario, hops)?;
    let mut out = Vec::with_capacity(hops);
    for s in scenarios {
        let channel = HopChannel::Scenario(Box::new(s));
        let taps = estimate(&channel, workers)?.slot_taps(0, 0, scheme.slot_duration_s())?;
        let threshold = midpoint_threshold(scheme, taps.first().copied().unwrap_or(0.0));
        let detection = match detector {
            DetectorKind::Fixed => DetectionConfig::Fixed { threshold },
            DetectorKind::Adaptive { isi_memory } => DetectionConfig::Adaptive {
                base_threshold: threshold,
                isi_memory,
                ili_enabled: false,
            },
        };
        out.push(Hop { channel, detection });
    }
    Ok(RelayChain {
        hops: out,
        processing_delay_s,
        scheme: scheme.clone(),
    })
}

//! Link layer over a simulated channel: modulation, reception, detection and
//! bit-error accounting.
//!
//! Time is divided into slots. CSK and MoSK use one slot per symbol; PPM uses
//! `slots_per_symbol` slots. A [`ReceivedFrame`] holds molecule counts per
//! receiver, species and slot.

pub mod coding;
pub mod ita2;
pub mod mimo;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::{bin_absorptions, par_map, run_particles, ChannelError, ChannelImpulseResponse, Release};
use crate::rng::{self, RngStream};
use crate::scenario::{ParticleState, SimulationScenario};

pub use coding::{decode_constrained, decode_constrained_lenient, encode_constrained};
pub use ita2::{ita2_decode, ita2_encode};
pub use mimo::{simulate_mimo, MimoLink};

pub type Bit = bool;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommsError {
    #[error("invalid modulation scheme: {0}")]
    BadSchemeArity(String),
    #[error("slot duration {slot_s} s is not a whole number of {bin_s} s bins")]
    BinMismatch { slot_s: f64, bin_s: f64 },
    #[error("inter-link interference cancellation needs a cross-link channel")]
    MissingCrossCir,
    #[error("invalid codeword at bit offset {offset}")]
    InvalidCodeword { offset: usize },
    #[error("character {0:?} is outside the ITA2 alphabet")]
    UnsupportedCharacter(char),
    #[error("ITA2 code {0} exceeds five bits")]
    InvalidIta2Code(u8),
    #[error("bit sequences differ in length: {tx} vs {rx}")]
    LengthMismatch { tx: usize, rx: usize },
    #[error("species {0} is absent from the frame or channel")]
    MissingSpecies(u32),
    #[error("transmitter {tx} or receiver {rx} is not part of the channel")]
    NoSuchLink { tx: usize, rx: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidDetector(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Level `k` emits `molecules_per_level[k]` molecules.
    Csk { molecules_per_level: Vec<u64> },
    /// Symbol `m` emits `molecules` in slot `m` of the symbol.
    Ppm { slots_per_symbol: usize, molecules: u64 },
    /// Symbol `m` emits `molecules` of species `species_ids[m]`.
    Mosk { species_ids: Vec<u32>, molecules: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub kind: SchemeKind,
    pub symbol_duration_s: f64,
    /// Species carried by CSK and PPM emissions.
    pub species_id: u32,
}

impl ModulationScheme {
    /// On-off keying: bit 1 emits `molecules`, bit 0 emits nothing.
    pub fn bcsk(molecules: u64, symbol_duration_s: f64) -> Self {
        Self {
            kind: SchemeKind::Csk {
                molecules_per_level: vec![0, molecules],
            },
            symbol_duration_s,
            species_id: 0,
        }
    }

    pub fn ppm(slots_per_symbol: usize, molecules: u64, symbol_duration_s: f64) -> Self {
        Self {
            kind: SchemeKind::Ppm {
                slots_per_symbol,
                molecules,
            },
            symbol_duration_s,
            species_id: 0,
        }
    }

    pub fn mosk(species_ids: Vec<u32>, molecules: u64, symbol_duration_s: f64) -> Self {
        Self {
            kind: SchemeKind::Mosk { species_ids, molecules },
            symbol_duration_s,
            species_id: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CommsError> {
        let bad = |m: &str| Err(CommsError::BadSchemeArity(m.to_string()));
        if !(self.symbol_duration_s > 0.0 && self.symbol_duration_s.is_finite()) {
            return bad("symbol duration must be positive");
        }
        let arity = self.arity();
        if arity < 2 || !arity.is_power_of_two() {
            return bad("alphabet size must be a power of two, at least 2");
        }
        match &self.kind {
            SchemeKind::Csk { molecules_per_level } => {
                if molecules_per_level.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("CSK molecule counts must increase strictly with level");
                }
            }
            SchemeKind::Ppm { .. } => {}
            SchemeKind::Mosk { species_ids, .. } => {
                let mut ids = species_ids.clone();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() != species_ids.len() {
                    return bad("MoSK species must be distinct");
                }
            }
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        match &self.kind {
            SchemeKind::Csk { molecules_per_level } => molecules_per_level.len(),
            SchemeKind::Ppm { slots_per_symbol, .. } => *slots_per_symbol,
            SchemeKind::Mosk { species_ids, .. } => species_ids.len(),
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.arity().trailing_zeros() as usize
    }

    pub fn slots_per_symbol(&self) -> usize {
        match &self.kind {
            SchemeKind::Ppm { slots_per_symbol, .. } => *slots_per_symbol,
            _ => 1,
        }
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.symbol_duration_s / self.slots_per_symbol() as f64
    }

    /// Species a receiver must observe, in frame order.
    pub fn species_ids(&self) -> Vec<u32> {
        match &self.kind {
            SchemeKind::Mosk { species_ids, .. } => species_ids.clone(),
            _ => vec![self.species_id],
        }
    }

    /// Molecules emitted for `symbol`.
    pub fn emission_size(&self, symbol: usize) -> u64 {
        match &self.kind {
            SchemeKind::Csk { molecules_per_level } => molecules_per_level[symbol],
            SchemeKind::Ppm { molecules, .. } | SchemeKind::Mosk { molecules, .. } => *molecules,
        }
    }

    /// Largest single emission.
    pub fn peak_emission(&self) -> u64 {
        (0..self.arity()).map(|s| self.emission_size(s)).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmissionEvent {
    pub time_s: f64,
    pub molecules: u64,
    pub species_id: u32,
}

/// Emissions of one transmitter over a frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TxSchedule {
    /// Non-empty emissions in time order.
    pub events: Vec<EmissionEvent>,
    pub symbols: Vec<usize>,
    /// Zero bits appended to fill the last symbol.
    pub padded_bits: usize,
    pub slot_duration_s: f64,
    pub slots: usize,
}

impl TxSchedule {
    pub fn emitted(&self) -> u64 {
        self.events.iter().map(|e| e.molecules).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.slots as f64 * self.slot_duration_s
    }

    /// Molecules emitted per `[species][slot]`, species in `species_ids` order.
    pub fn emissions_per_slot(&self, species_ids: &[u32]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.slots]; species_ids.len()];
        for e in &self.events {
            if let Some(sp) = species_ids.iter().position(|&s| s == e.species_id) {
                let slot = (e.time_s / self.slot_duration_s).round() as usize;
                if slot < self.slots {
                    out[sp][slot] += e.molecules as f64;
                }
            }
        }
        out
    }
}

/// Map `bits` onto emissions, most significant bit first within each symbol.
/// A trailing partial symbol is completed with zero bits.
pub fn modulate(bits: &[Bit], scheme: &ModulationScheme) -> Result<TxSchedule, CommsError> {
    scheme.validate()?;
    let k = scheme.bits_per_symbol();
    let padded_bits = (k - bits.len() % k) % k;
    let symbols: Vec<usize> = bits
        .iter()
        .copied()
        .chain(std::iter::repeat_n(false, padded_bits))
        .collect::<Vec<_>>()
        .chunks(k)
        .map(|c| c.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b)))
        .collect();
    let t = scheme.symbol_duration_s;
    let mut events = Vec::with_capacity(symbols.len());
    for (i, &m) in symbols.iter().enumerate() {
        let start = i as f64 * t;
        let (time_s, species_id) = match &scheme.kind {
            SchemeKind::Csk { .. } => (start, scheme.species_id),
            SchemeKind::Ppm { slots_per_symbol, .. } => (start + m as f64 * t / *slots_per_symbol as f64, scheme.species_id),
            SchemeKind::Mosk { species_ids, .. } => (start, species_ids[m]),
        };
        let molecules = scheme.emission_size(m);
        if molecules > 0 {
            events.push(EmissionEvent {
                time_s,
                molecules,
                species_id,
            });
        }
    }
    Ok(TxSchedule {
        events,
        slots: symbols.len() * scheme.slots_per_symbol(),
        symbols,
        padded_bits,
        slot_duration_s: scheme.slot_duration_s(),
    })
}

/// Symbol values back to bits, most significant first.
pub fn symbols_to_bits(symbols: &[usize], bits_per_symbol: usize) -> Vec<Bit> {
    symbols
        .iter()
        .flat_map(|&s| (0..bits_per_symbol).rev().map(move |i| (s >> i) & 1 == 1))
        .collect()
}

/// Molecule counts per receiver, species and slot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReceivedFrame {
    pub slot_duration_s: f64,
    pub species_ids: Vec<u32>,
    /// `counts[receiver][species][slot]`.
    pub counts: Vec<Vec<Vec<u64>>>,
}

impl ReceivedFrame {
    pub fn zeros(receivers: usize, species_ids: &[u32], slots: usize, slot_duration_s: f64) -> Self {
        Self {
            slot_duration_s,
            species_ids: species_ids.to_vec(),
            counts: vec![vec![vec![0; slots]; species_ids.len()]; receivers],
        }
    }

    pub fn slots(&self) -> usize {
        self.counts.first().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    fn species_index(&self, species_id: u32) -> Result<usize, CommsError> {
        self.species_ids
            .iter()
            .position(|&s| s == species_id)
            .ok_or(CommsError::MissingSpecies(species_id))
    }
}

/// Arrival probabilities per bin for every transmitter–receiver pair. Every
/// species is assumed to share the pair's response.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelBank {
    pub bin_width_s: f64,
    /// `taps[tx][rx][bin]`: probability that one emitted molecule arrives in the bin.
    pub taps: Vec<Vec<Vec<f64>>>,
}

impl ChannelBank {
    /// One transmitter seen by every receiver of `cir`.
    pub fn from_cir(cir: &ChannelImpulseResponse) -> Self {
        Self {
            bin_width_s: cir.bin_width_s,
            taps: vec![(0..cir.counts.len()).map(|r| trim(cir.probabilities(r))).collect()],
        }
    }

    /// Single link with explicit per-bin probabilities.
    pub fn single(bin_width_s: f64, taps: Vec<f64>) -> Self {
        Self {
            bin_width_s,
            taps: vec![vec![taps]],
        }
    }

    /// All molecules arrive in the first bin.
    pub fn zero_isi(bin_width_s: f64) -> Self {
        Self::single(bin_width_s, vec![1.0])
    }

    /// Synthetic channel with heavy inter-symbol interference: half of the emitted
    /// molecules arrive, 40 % of those after the first slot.
    pub fn high_isi(slot_duration_s: f64) -> Self {
        Self::single(slot_duration_s, vec![0.30, 0.10, 0.06, 0.04])
    }

    pub fn transmitters(&self) -> usize {
        self.taps.len()
    }

    pub fn receivers(&self) -> usize {
        self.taps.first().map_or(0, Vec::len)
    }

    fn link(&self, tx: usize, rx: usize) -> Result<&[f64], CommsError> {
        self.taps
            .get(tx)
            .and_then(|row| row.get(rx))
            .map(Vec::as_slice)
            .ok_or(CommsError::NoSuchLink { tx, rx })
    }

    fn bins_per_slot(&self, slot_s: f64) -> Result<usize, CommsError> {
        let ratio = slot_s / self.bin_width_s;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-6 * k {
            return Err(CommsError::BinMismatch {
                slot_s,
                bin_s: self.bin_width_s,
            });
        }
        Ok(k as usize)
    }

    /// Arrival probability per slot after an emission at a slot start.
    pub fn slot_taps(&self, tx: usize, rx: usize, slot_s: f64) -> Result<Vec<f64>, CommsError> {
        let per = self.bins_per_slot(slot_s)?;
        Ok(self.link(tx, rx)?.chunks(per).map(|c| c.iter().sum()).collect())
    }
}

fn trim(mut taps: Vec<f64>) -> Vec<f64> {
    while taps.last() == Some(&0.0) {
        taps.pop();
    }
    taps
}

/// How received counts are produced.
#[derive(Clone, Copy, Debug)]
pub enum SynthesisMode<'a> {
    /// Independent binomial draws per emission and bin from a precomputed channel.
    SemiAnalytic(&'a ChannelBank),
    /// Particle simulation of the whole frame; transmitter `i` of the scenario sends
    /// schedule `i`.
    FullParticle {
        scenario: &'a SimulationScenario,
        workers: usize,
    },
}

/// Counts at every receiver over the frame spanned by `schedules`, which are
/// indexed by transmitter. Arrivals after the last slot are dropped.
pub fn synthesize_received(
    schedules: &[TxSchedule],
    mode: SynthesisMode<'_>,
    species_ids: &[u32],
    rng: &mut RngStream,
) -> Result<ReceivedFrame, CommsError> {
    let slot_s = schedules.first().map_or(1.0, |s| s.slot_duration_s);
    let slots = schedules.iter().map(|s| s.slots).max().unwrap_or(0);
    match mode {
        SynthesisMode::SemiAnalytic(bank) => synthesize_semi_analytic(schedules, bank, species_ids, slot_s, slots, rng),
        SynthesisMode::FullParticle { scenario, workers } => {
            synthesize_particles(schedules, scenario, workers, species_ids, slot_s, slots)
        }
    }
}

fn synthesize_semi_analytic(
    schedules: &[TxSchedule],
    bank: &ChannelBank,
    species_ids: &[u32],
    slot_s: f64,
    slots: usize,
    rng: &mut RngStream,
) -> Result<ReceivedFrame, CommsError> {
    let per = bank.bins_per_slot(slot_s)?;
    let receivers = bank.receivers();
    let mut frame = ReceivedFrame::zeros(receivers, species_ids, slots, slot_s);
    let frame_bins = slots * per;
    for (tx, schedule) in schedules.iter().enumerate() {
        for e in &schedule.events {
            let sp = frame.species_index(e.species_id)?;
            let offset = (e.time_s / bank.bin_width_s).round() as usize;
            for rx in 0..receivers {
                let taps = bank.link(tx, rx)?;
                for (b, &p) in taps.iter().enumerate() {
                    let bin = offset + b;
                    if bin >= frame_bins {
                        break;
                    }
                    if p <= 0.0 {
                        continue;
                    }
                    let arrivals = if p >= 1.0 {
                        e.molecules
                    } else {
                        Binomial::new(e.molecules, p).expect("probability in (0, 1)").sample(rng)
                    };
                    frame.counts[rx][sp][bin / per] += arrivals;
                }
            }
        }
    }
    Ok(frame)
}

fn synthesize_particles(
    schedules: &[TxSchedule],
    scenario: &SimulationScenario,
    workers: usize,
    species_ids: &[u32],
    slot_s: f64,
    slots: usize,
) -> Result<ReceivedFrame, CommsError> {
    let transmitters = scenario.transmitters();
    if schedules.len() > transmitters.len() {
        return Err(CommsError::NoSuchLink {
            tx: schedules.len() - 1,
            rx: 0,
        });
    }
    let mut run = scenario.clone();
    run.end_time_s = (slots as f64 * slot_s).max(scenario.time_step_s);
    let mut releases = Vec::new();
    let mut species_of_release = Vec::new();
    let mut frame = ReceivedFrame::zeros(scenario.receivers.len(), species_ids, slots, slot_s);
    for (tx, schedule) in schedules.iter().enumerate() {
        for e in &schedule.events {
            species_of_release.push(frame.species_index(e.species_id)?);
            releases.push(Release {
                tx: transmitters[tx],
                time_s: e.time_s,
                count: e.molecules,
                species_id: e.species_id,
            });
        }
    }
    let fates = run_particles(&run, &releases, workers)?;
    let mut start = 0usize;
    for (release, &sp) in releases.iter().zip(&species_of_release) {
        let end = start + release.count as usize;
        let binned = bin_absorptions(&fates[start..end], scenario.receivers.len(), slot_s, run.end_time_s);
        for (rx, row) in binned.iter().enumerate() {
            for (slot, &c) in row.iter().enumerate().take(slots) {
                frame.counts[rx][sp][slot] += c;
            }
        }
        start = end;
    }
    debug_assert_eq!(start, fates.len());
    debug_assert!(fates.iter().all(|f| !matches!(f, ParticleState::Absorbed { time_s, .. } if *time_s < 0.0)));
    Ok(frame)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DetectionConfig {
    Fixed {
        threshold: u64,
    },
    /// Threshold raised by the interference expected from earlier decisions.
    Adaptive {
        base_threshold: u64,
        isi_memory: usize,
        ili_enabled: bool,
    },
}

impl DetectionConfig {
    pub fn base_threshold(&self) -> u64 {
        match *self {
            Self::Fixed { threshold } => threshold,
            Self::Adaptive { base_threshold, .. } => base_threshold,
        }
    }
}

/// Threshold halfway between silence and the expected first-slot count of the
/// largest emission.
pub fn midpoint_threshold(scheme: &ModulationScheme, first_slot_tap: f64) -> u64 {
    (0.5 * scheme.peak_emission() as f64 * first_slot_tap).round().max(1.0) as u64
}

/// Interference from the co-channel transmitter of a MIMO link.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossLink {
    /// Arrival probability per slot from the other transmitter at this receiver.
    pub taps: Vec<f64>,
    /// Estimated emissions of the other transmitter.
    pub co_channel: TxSchedule,
}

/// Adaptive threshold for slot `i`: `base + Σ_{j=1..m} n̂_{i−j}·ĥ(j)`, where
/// `prior` holds the estimated emission sizes of slots `0..i`.
pub fn adaptive_threshold(base: f64, isi_memory: usize, prior: &[f64], own_taps: &[f64]) -> f64 {
    let i = prior.len();
    base + (1..=isi_memory.min(i))
        .map(|j| prior[i - j] * own_taps.get(j).copied().unwrap_or(0.0))
        .sum::<f64>()
}

/// Threshold detection with a fixed threshold. BCSK: bit 1 iff count ≥ threshold.
/// M-ary CSK: level = number of thresholds `k·threshold` (k = 1..M−1) reached.
/// PPM and MoSK: largest count, lowest index on ties.
pub fn detect_fixed(frame: &ReceivedFrame, scheme: &ModulationScheme, threshold: u64, rx: usize) -> Result<Vec<Bit>, CommsError> {
    detect_with(frame, scheme, rx, threshold as f64, |_, _, _| 0.0)
}

/// Adaptive detection: slot `i` is compared against
/// `base + Σ_{j=1..m} n̂_{i−j}·ĥ(j) + Σ_{j=1..m} m̂_{i−j}·ĝ(j)`, the last sum only
/// with `ili_enabled`. `n̂` are this link's decided emission sizes, `m̂` the
/// co-channel's estimated emissions.
pub fn detect_adaptive(
    frame: &ReceivedFrame,
    scheme: &ModulationScheme,
    config: &DetectionConfig,
    own_taps: &[f64],
    cross: Option<&CrossLink>,
    rx: usize,
) -> Result<Vec<Bit>, CommsError> {
    let DetectionConfig::Adaptive {
        base_threshold,
        isi_memory,
        ili_enabled,
    } = *config
    else {
        return detect_with(frame, scheme, rx, config.base_threshold() as f64, |_, _, _| 0.0);
    };
    let co = match (ili_enabled, cross) {
        (true, None) => return Err(CommsError::MissingCrossCir),
        (true, Some(c)) => Some((c.co_channel.emissions_per_slot(&frame.species_ids), c.taps.as_slice())),
        (false, _) => None,
    };
    detect_with(frame, scheme, rx, base_threshold as f64, |slot, sp, est| {
        let mut interference = adaptive_threshold(0.0, isi_memory, &est[sp][..slot], own_taps);
        if let Some((co_est, g)) = &co {
            interference += (1..=isi_memory.min(slot))
                .map(|j| co_est[sp].get(slot - j).copied().unwrap_or(0.0) * g.get(j).copied().unwrap_or(0.0))
                .sum::<f64>();
        }
        interference
    })
}

/// Dispatch on the detector configuration.
pub fn detect(
    frame: &ReceivedFrame,
    scheme: &ModulationScheme,
    config: &DetectionConfig,
    own_taps: &[f64],
    cross: Option<&CrossLink>,
    rx: usize,
) -> Result<Vec<Bit>, CommsError> {
    match config {
        DetectionConfig::Fixed { threshold } => detect_fixed(frame, scheme, *threshold, rx),
        DetectionConfig::Adaptive { .. } => detect_adaptive(frame, scheme, config, own_taps, cross, rx),
    }
}

/// Symbol-by-symbol decisions. `interference(slot, species, estimates)` returns
/// the expected interfering count, where `estimates[species][slot]` holds the
/// emission sizes implied by the decisions taken so far.
fn detect_with(
    frame: &ReceivedFrame,
    scheme: &ModulationScheme,
    rx: usize,
    base: f64,
    interference: impl Fn(usize, usize, &[Vec<f64>]) -> f64,
) -> Result<Vec<Bit>, CommsError> {
    scheme.validate()?;
    if frame.slot_duration_s > 0.0 && (frame.slot_duration_s - scheme.slot_duration_s()).abs() > 1e-9 * scheme.slot_duration_s() {
        return Err(CommsError::BinMismatch {
            slot_s: scheme.slot_duration_s(),
            bin_s: frame.slot_duration_s,
        });
    }
    let counts = frame.counts.get(rx).ok_or(CommsError::NoSuchLink { tx: 0, rx })?;
    let slots = frame.slots();
    let per = scheme.slots_per_symbol();
    let n_symbols = slots / per;
    let mut est = vec![vec![0.0; slots]; frame.species_ids.len()];
    let mut symbols = Vec::with_capacity(n_symbols);
    let argmax = |scores: &[f64]| {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        best
    };
    for s in 0..n_symbols {
        let symbol = match &scheme.kind {
            SchemeKind::Csk { molecules_per_level } => {
                let sp = frame.species_index(scheme.species_id)?;
                let c = counts[sp][s] as f64;
                let isi = interference(s, sp, &est);
                let level = (1..molecules_per_level.len())
                    .take_while(|&k| c >= k as f64 * base + isi)
                    .count();
                est[sp][s] = molecules_per_level[level] as f64;
                level
            }
            SchemeKind::Ppm { molecules, .. } => {
                let sp = frame.species_index(scheme.species_id)?;
                let mut scores = Vec::with_capacity(per);
                for m in 0..per {
                    let slot = s * per + m;
                    scores.push(counts[sp][slot] as f64 - interference(slot, sp, &est));
                }
                let m = argmax(&scores);
                est[sp][s * per + m] = *molecules as f64;
                m
            }
            SchemeKind::Mosk { species_ids, molecules } => {
                let mut scores = Vec::with_capacity(species_ids.len());
                let mut indices = Vec::with_capacity(species_ids.len());
                for &id in species_ids {
                    let sp = frame.species_index(id)?;
                    scores.push(counts[sp][s] as f64 - interference(s, sp, &est));
                    indices.push(sp);
                }
                let m = argmax(&scores);
                est[indices[m]][s] = *molecules as f64;
                m
            }
        };
        symbols.push(symbol);
    }
    Ok(symbols_to_bits(&symbols, scheme.bits_per_symbol()))
}

/// Fraction of positions at which the sequences differ; 0 for empty input.
pub fn evaluate_ber(tx: &[Bit], rx: &[Bit]) -> Result<f64, CommsError> {
    if tx.len() != rx.len() {
        return Err(CommsError::LengthMismatch {
            tx: tx.len(),
            rx: rx.len(),
        });
    }
    if tx.is_empty() {
        return Ok(0.0);
    }
    Ok(bit_errors(tx, rx) as f64 / tx.len() as f64)
}

fn bit_errors(tx: &[Bit], rx: &[Bit]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| a != b).count()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineCoding {
    #[default]
    None,
    Constrained,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkSetup {
    pub scheme: ModulationScheme,
    pub detection: DetectionConfig,
    pub coding: LineCoding,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkOutcome {
    pub data_bits: usize,
    pub channel_bits: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub emitted: u64,
    #[serde(skip)]
    pub decoded: Vec<Bit>,
}

/// Send `bits` over one link (transmitter 0 to receiver 0): optional line coding,
/// modulation, reception, detection with taps from `estimate`, decoding.
pub fn run_link(
    bits: &[Bit],
    setup: &LinkSetup,
    mode: SynthesisMode<'_>,
    estimate: &ChannelBank,
    rng: &mut RngStream,
) -> Result<LinkOutcome, CommsError> {
    let channel_bits = match setup.coding {
        LineCoding::None => bits.to_vec(),
        LineCoding::Constrained => encode_constrained(bits),
    };
    let schedule = modulate(&channel_bits, &setup.scheme)?;
    let frame = synthesize_received(std::slice::from_ref(&schedule), mode, &setup.scheme.species_ids(), rng)?;
    let taps = estimate.slot_taps(0, 0, setup.scheme.slot_duration_s())?;
    let mut detected = detect(&frame, &setup.scheme, &setup.detection, &taps, None, 0)?;
    detected.truncate(channel_bits.len());
    let mut decoded = match setup.coding {
        LineCoding::None => detected,
        LineCoding::Constrained => decode_constrained_lenient(&detected),
    };
    decoded.truncate(bits.len());
    let errors = bit_errors(bits, &decoded);
    Ok(LinkOutcome {
        data_bits: bits.len(),
        channel_bits: channel_bits.len(),
        bit_errors: errors,
        ber: evaluate_ber(bits, &decoded)?,
        emitted: schedule.emitted(),
        decoded,
    })
}

/// Channel used by [`ber_over_seeds`].
#[derive(Clone, Copy, Debug)]
pub enum LinkChannel<'a> {
    SemiAnalytic(&'a ChannelBank),
    /// Particle simulation per seed; `estimate` supplies the detector taps.
    FullParticle {
        scenario: &'a SimulationScenario,
        estimate: &'a ChannelBank,
    },
}

/// One link run per seed with `n_bits` random source bits. Bits and reception
/// noise come from per-seed streams, so results do not depend on `workers`.
/// Semi-analytic runs spread seeds over the workers; particle runs spread each
/// seed's molecules instead.
pub fn ber_over_seeds(
    n_bits: usize,
    seeds: &[u64],
    setup: &LinkSetup,
    channel: LinkChannel<'_>,
    workers: usize,
) -> Result<Vec<LinkOutcome>, CommsError> {
    let one = |seed: u64, inner_workers: usize| {
        let bits = random_bits(n_bits, &mut RngStream::new(seed, rng::stream_id(rng::domain::BITS, 0)));
        let mut noise = RngStream::new(seed, rng::stream_id(rng::domain::SYNTHESIS, 0));
        match channel {
            LinkChannel::SemiAnalytic(bank) => run_link(&bits, setup, SynthesisMode::SemiAnalytic(bank), bank, &mut noise),
            LinkChannel::FullParticle { scenario, estimate } => {
                let mut run = scenario.clone();
                run.seed = seed;
                let mode = SynthesisMode::FullParticle {
                    scenario: &run,
                    workers: inner_workers,
                };
                run_link(&bits, setup, mode, estimate, &mut noise)
            }
        }
    };
    match channel {
        LinkChannel::SemiAnalytic(_) => par_map(seeds.len() as u64, workers, |i| one(seeds[i as usize], 1))
            .into_iter()
            .collect(),
        LinkChannel::FullParticle { .. } => seeds.iter().map(|&s| one(s, workers)).collect(),
    }
}

/// Uniformly random bits from `rng`.
pub fn random_bits(n: usize, rng: &mut RngStream) -> Vec<Bit> {
    (0..n).map(|_| rng.uniform() < 0.5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn bits(s: &str) -> Vec<Bit> {
        s.chars().map(|c| c == '1').collect()
    }

    fn times(s: &TxSchedule) -> Vec<(f64, u64)> {
        s.events.iter().map(|e| (e.time_s, e.molecules)).collect()
    }

    #[test]
    fn bcsk_emissions() {
        let s = modulate(&bits("101"), &ModulationScheme::bcsk(1000, 1.0)).unwrap();
        assert_eq!(times(&s), vec![(0.0, 1000), (2.0, 1000)]);
        assert_eq!(s.slots, 3);
    }

    #[test]
    fn ppm_slot_time() {
        let s = modulate(&bits("10"), &ModulationScheme::ppm(4, 50, 1.0)).unwrap();
        assert_eq!(times(&s), vec![(0.5, 50)]);
        assert_eq!(s.slots, 4);
    }

    #[test]
    fn mosk_species() {
        let s = modulate(&bits("01"), &ModulationScheme::mosk(vec![7, 9, 11, 13], 10, 1.0)).unwrap();
        assert_eq!(s.events, vec![EmissionEvent { time_s: 0.0, molecules: 10, species_id: 9 }]);
        assert_eq!(s.symbols, vec![1]);
        let s = modulate(&bits("1"), &ModulationScheme::mosk(vec![7, 9], 10, 1.0)).unwrap();
        assert_eq!(s.events, vec![EmissionEvent { time_s: 0.0, molecules: 10, species_id: 9 }]);
    }

    #[test]
    fn padding_and_bad_schemes() {
        let s = modulate(&bits("1"), &ModulationScheme::ppm(4, 1, 1.0)).unwrap();
        assert_eq!((s.padded_bits, s.symbols.clone()), (1, vec![2]));
        let mut bad = ModulationScheme::bcsk(10, 1.0);
        bad.kind = SchemeKind::Csk { molecules_per_level: vec![0, 10, 5] };
        assert!(matches!(modulate(&bits("1"), &bad), Err(CommsError::BadSchemeArity(_))));
        bad.kind = SchemeKind::Csk { molecules_per_level: vec![10, 10] };
        assert!(modulate(&bits("1"), &bad).is_err());
        assert!(modulate(&bits("1"), &ModulationScheme::ppm(1, 1, 1.0)).is_err());
        assert!(modulate(&bits("1"), &ModulationScheme::mosk(vec![1, 1], 1, 1.0)).is_err());
        assert!(modulate(&bits("1"), &ModulationScheme::bcsk(1, 0.0)).is_err());
    }

    #[test]
    fn modulation_is_injective() {
        let schemes = [
            ModulationScheme::bcsk(100, 1.0),
            ModulationScheme {
                kind: SchemeKind::Csk { molecules_per_level: vec![0, 10, 20, 30] },
                symbol_duration_s: 1.0,
                species_id: 0,
            },
            ModulationScheme::ppm(4, 10, 1.0),
            ModulationScheme::mosk(vec![0, 1], 10, 1.0),
        ];
        for scheme in &schemes {
            let mut seen = std::collections::HashSet::new();
            for v in 0u32..256 {
                let b: Vec<Bit> = (0..8).rev().map(|i| (v >> i) & 1 == 1).collect();
                let s = modulate(&b, scheme).unwrap();
                let key: Vec<(u64, u64, u32)> = s.events.iter().map(|e| (e.time_s.to_bits(), e.molecules, e.species_id)).collect();
                assert!(seen.insert(key), "{scheme:?} collides at {v}");
            }
        }
    }

    #[test]
    fn degenerate_cir_passes_everything_through() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let s = modulate(&bits("1"), &scheme).unwrap();
        let bank = ChannelBank::zero_isi(1.0);
        let frame = synthesize_received(&[s], SynthesisMode::SemiAnalytic(&bank), &[0], &mut derive_stream(1, 0)).unwrap();
        assert_eq!(frame.counts, vec![vec![vec![1000]]]);
    }

    #[test]
    fn isi_superposition_is_additive() {
        let scheme = ModulationScheme::bcsk(10, 1.0);
        let s = modulate(&bits("110"), &scheme).unwrap();
        let bank = ChannelBank::single(0.5, vec![1.0, 0.0, 1.0]);
        let frame = synthesize_received(&[s], SynthesisMode::SemiAnalytic(&bank), &[0], &mut derive_stream(1, 0)).unwrap();
        // Slot 1: second half of emission 0 plus first half of emission 1.
        assert_eq!(frame.counts[0][0], vec![10, 20, 10]);
    }

    #[test]
    fn bin_mismatch() {
        let s = modulate(&bits("1"), &ModulationScheme::bcsk(10, 1.0)).unwrap();
        let bank = ChannelBank::zero_isi(0.3);
        let r = synthesize_received(&[s], SynthesisMode::SemiAnalytic(&bank), &[0], &mut derive_stream(1, 0));
        assert!(matches!(r, Err(CommsError::BinMismatch { .. })));
    }

    #[test]
    fn semi_analytic_mean_matches_binomial_mean() {
        let scheme = ModulationScheme::bcsk(200, 1.0);
        let s = modulate(&bits("1101"), &scheme).unwrap();
        let taps = vec![0.2, 0.1, 0.05];
        let bank = ChannelBank::single(1.0, taps.clone());
        let draws = 10_000;
        let mut rng = derive_stream(5, 0);
        let mut sum = [0.0f64; 4];
        for _ in 0..draws {
            let f = synthesize_received(std::slice::from_ref(&s), SynthesisMode::SemiAnalytic(&bank), &[0], &mut rng).unwrap();
            for (acc, &c) in sum.iter_mut().zip(&f.counts[0][0]) {
                *acc += c as f64;
            }
        }
        let emits = [200.0, 200.0, 0.0, 200.0];
        for slot in 0..4 {
            let (mut mean, mut var) = (0.0, 0.0);
            for j in 0..=slot.min(2) {
                mean += emits[slot - j] * taps[j];
                var += emits[slot - j] * taps[j] * (1.0 - taps[j]);
            }
            let got = sum[slot] / draws as f64;
            let sigma = (var / draws as f64).sqrt();
            assert!((got - mean).abs() <= 3.0 * sigma, "slot {slot}: {got} vs {mean}");
        }
    }

    #[test]
    fn fixed_threshold_rules() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let frame = ReceivedFrame { slot_duration_s: 1.0, species_ids: vec![0], counts: vec![vec![vec![1200, 30, 600]]] };
        assert_eq!(detect_fixed(&frame, &scheme, 600, 0).unwrap(), bits("101"));
    }

    #[test]
    fn ppm_argmax_ties_to_earliest() {
        let scheme = ModulationScheme::ppm(4, 10, 1.0);
        let frame = ReceivedFrame { slot_duration_s: 0.25, species_ids: vec![0], counts: vec![vec![vec![5, 5, 9, 2, 3, 3, 1, 0]]] };
        assert_eq!(detect_fixed(&frame, &scheme, 0, 0).unwrap(), bits("1000"));
    }

    #[test]
    fn mosk_argmax() {
        let scheme = ModulationScheme::mosk(vec![4, 8], 10, 1.0);
        let frame = ReceivedFrame { slot_duration_s: 1.0, species_ids: vec![8, 4], counts: vec![vec![vec![9, 1], vec![3, 3]]] };
        assert_eq!(detect_fixed(&frame, &scheme, 0, 0).unwrap(), bits("10"));
    }

    #[test]
    fn multilevel_csk_thresholds() {
        let scheme = ModulationScheme { kind: SchemeKind::Csk { molecules_per_level: vec![0, 100, 200, 300] }, symbol_duration_s: 1.0, species_id: 0 };
        let frame = ReceivedFrame { slot_duration_s: 1.0, species_ids: vec![0], counts: vec![vec![vec![10, 60, 120, 500]]] };
        assert_eq!(detect_fixed(&frame, &scheme, 50, 0).unwrap(), bits("00011011"));
    }

    #[test]
    fn adaptive_threshold_formula() {
        let h = [0.6, 0.3, 0.1];
        assert_eq!(adaptive_threshold(50.0, 2, &[0.0, 0.0], &h), 50.0);
        let theta = adaptive_threshold(50.0, 2, &[1000.0, 0.0], &h);
        assert!((theta - 150.0).abs() < 1e-9);
        assert!((adaptive_threshold(50.0, 1, &[1000.0, 0.0], &h) - 50.0).abs() < 1e-9);
    }

    #[test]
    fn adaptive_without_priors_equals_fixed() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let frame = ReceivedFrame { slot_duration_s: 1.0, species_ids: vec![0], counts: vec![vec![vec![10, 20, 30, 599]]] };
        let config = DetectionConfig::Adaptive { base_threshold: 600, isi_memory: 3, ili_enabled: false };
        let a = detect_adaptive(&frame, &scheme, &config, &[0.6, 0.3, 0.1], None, 0).unwrap();
        assert_eq!(a, detect_fixed(&frame, &scheme, 600, 0).unwrap());
        assert_eq!(a, bits("0000"));
    }

    #[test]
    fn adaptive_raises_threshold_after_a_one() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        // Slot 1 holds only the tail of slot 0's emission.
        let frame = ReceivedFrame { slot_duration_s: 1.0, species_ids: vec![0], counts: vec![vec![vec![600, 320, 100]]] };
        let config = DetectionConfig::Adaptive { base_threshold: 300, isi_memory: 2, ili_enabled: false };
        assert_eq!(detect_fixed(&frame, &scheme, 300, 0).unwrap(), bits("110"));
        assert_eq!(detect_adaptive(&frame, &scheme, &config, &[0.6, 0.3, 0.1], None, 0).unwrap(), bits("100"));
    }

    #[test]
    fn ili_needs_cross_link() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let frame = ReceivedFrame::zeros(1, &[0], 2, 1.0);
        let config = DetectionConfig::Adaptive { base_threshold: 300, isi_memory: 1, ili_enabled: true };
        assert_eq!(detect_adaptive(&frame, &scheme, &config, &[0.6], None, 0), Err(CommsError::MissingCrossCir));
    }

    #[test]
    fn ber_definition() {
        let a = bits("10110");
        assert_eq!(evaluate_ber(&a, &a).unwrap(), 0.0);
        let c: Vec<Bit> = a.iter().map(|b| !b).collect();
        assert_eq!(evaluate_ber(&a, &c).unwrap(), 1.0);
        let mut x = vec![false; 1000];
        let y = x.clone();
        x[17] = true;
        assert_eq!(evaluate_ber(&x, &y).unwrap(), 0.001);
        assert_eq!(evaluate_ber(&a, &a[..3]), Err(CommsError::LengthMismatch { tx: 5, rx: 3 }));
        assert_eq!(evaluate_ber(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn zero_isi_link_is_error_free() {
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let bank = ChannelBank::zero_isi(1.0);
        for coding in [LineCoding::None, LineCoding::Constrained] {
            let setup = LinkSetup { scheme: scheme.clone(), detection: DetectionConfig::Fixed { threshold: 500 }, coding };
            let mut rng = derive_stream(3, 0);
            let b = random_bits(999, &mut rng);
            let out = run_link(&b, &setup, SynthesisMode::SemiAnalytic(&bank), &bank, &mut rng).unwrap();
            assert_eq!((out.bit_errors, out.ber), (0, 0.0));
            assert_eq!(out.decoded, b);
            let expected_channel = if coding == LineCoding::Constrained { 2 * 1000 } else { 999 };
            assert_eq!(out.channel_bits, expected_channel);
        }
    }
}

//! Two transmitters and two receivers sharing one duct.
//!
//! Each link is separated angularly: transmitter `i` and receiver `i` sit on the
//! same wall line. The cross responses measure inter-link interference.

use std::f64::consts::PI;

use serde::Serialize;

use super::{
    detect, modulate, Bit, ChannelBank, CommsError, CrossLink, DetectionConfig, ModulationScheme,
    ReceivedFrame,
};
use crate::channel::{simulate_cir_from, ChannelImpulseResponse, MassLedger};
use crate::scenario::{ReceiverSpec, SimulationScenario, SurfacePoint};

/// `h[tx][rx]`: response at receiver `rx` to an impulse from transmitter `tx`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MimoLink {
    pub h: [[ChannelImpulseResponse; 2]; 2],
    pub ledgers: [MassLedger; 2],
}

impl MimoLink {
    pub fn bank(&self) -> ChannelBank {
        let rows = self.h.iter().map(|row| {
            row.iter()
                .map(|cir| ChannelBank::from_cir(cir).taps.remove(0).remove(0))
                .collect()
        });
        ChannelBank {
            bin_width_s: self.h[0][0].bin_width_s,
            taps: rows.collect(),
        }
    }

    pub fn totals(&self) -> [[u64; 2]; 2] {
        [
            [self.h[0][0].total(0), self.h[0][1].total(0)],
            [self.h[1][0].total(0), self.h[1][1].total(0)],
        ]
    }
}

/// Mirror the scenario's transmitter and first receiver across the duct axis,
/// giving a symmetric 2×2 layout.
pub fn two_by_two(base: &SimulationScenario) -> SimulationScenario {
    let mut s = base.clone();
    let tx = base.tx_position;
    s.extra_transmitters = vec![SurfacePoint::new(tx.axial_um, tx.angle_rad + PI)];
    let rx = base.receivers[0].clone();
    s.receivers = vec![
        ReceiverSpec {
            wall_anchor_angle_rad: rx.wall_anchor_angle_rad + PI,
            ..rx.clone()
        },
    ];
    s.receivers.insert(0, rx);
    s
}

/// One particle run per transmitter, with both receivers present in each run, so
/// a run yields that transmitter's row of the matrix. Transmitter `i` emits
/// `molecules[i]` molecules of the first species.
pub fn simulate_mimo(scenario: &SimulationScenario, molecules: [u64; 2], workers: usize) -> Result<MimoLink, CommsError> {
    let transmitters = scenario.transmitters();
    if transmitters.len() != 2 || scenario.receivers.len() != 2 {
        return Err(CommsError::NoSuchLink {
            tx: transmitters.len(),
            rx: scenario.receivers.len(),
        });
    }
    let species = scenario.species.first().map_or(0, |s| s.species_id);
    let mut rows = Vec::with_capacity(2);
    let mut ledgers = Vec::with_capacity(2);
    for (i, &tx) in transmitters.iter().enumerate() {
        let mut run = scenario.clone();
        run.molecules_per_emission = molecules[i];
        run.seed = scenario.seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (cir, ledger) = simulate_cir_from(&run, tx, species, workers)?;
        let split = |rx: usize| ChannelImpulseResponse {
            bin_width_s: cir.bin_width_s,
            counts: vec![cir.counts[rx].clone()],
            emitted: cir.emitted,
            scenario_hash: cir.scenario_hash.clone(),
        };
        rows.push([split(0), split(1)]);
        ledgers.push(ledger);
    }
    let [r0, r1]: [[ChannelImpulseResponse; 2]; 2] = rows.try_into().expect("two rows");
    let [l0, l1]: [MassLedger; 2] = ledgers.try_into().expect("two ledgers");
    Ok(MimoLink {
        h: [r0, r1],
        ledgers: [l0, l1],
    })
}

/// Detect both links of a 2×2 frame. With ILI enabled, each link is first
/// detected against its own ISI only; those decisions then serve as the
/// co-channel estimate for the second pass.
pub fn detect_mimo(
    frame: &ReceivedFrame,
    scheme: &ModulationScheme,
    config: &DetectionConfig,
    bank: &ChannelBank,
) -> Result<[Vec<Bit>; 2], CommsError> {
    let slot = scheme.slot_duration_s();
    let own = [bank.slot_taps(0, 0, slot)?, bank.slot_taps(1, 1, slot)?];
    let first_pass = match *config {
        DetectionConfig::Adaptive {
            base_threshold,
            isi_memory,
            ili_enabled: true,
        } => DetectionConfig::Adaptive {
            base_threshold,
            isi_memory,
            ili_enabled: false,
        },
        _ => return Ok([
            detect(frame, scheme, config, &own[0], None, 0)?,
            detect(frame, scheme, config, &own[1], None, 1)?,
        ]),
    };
    let tentative = [
        detect(frame, scheme, &first_pass, &own[0], None, 0)?,
        detect(frame, scheme, &first_pass, &own[1], None, 1)?,
    ];
    let mut out: [Vec<Bit>; 2] = Default::default();
    for rx in 0..2 {
        let cross = CrossLink {
            taps: bank.slot_taps(1 - rx, rx, slot)?,
            co_channel: modulate(&tentative[1 - rx], scheme)?,
        };
        out[rx] = detect(frame, scheme, config, &own[rx], Some(&cross), rx)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{synthesize_received, SynthesisMode};
    use crate::rng::derive_stream;
    use crate::scenario::presets;

    fn small_link() -> SimulationScenario {
        let mut s = two_by_two(&presets::vein());
        s.molecules_per_emission = 500;
        s.end_time_s = 1.0;
        s
    }

    #[test]
    fn layout_is_mirrored() {
        let s = small_link();
        assert_eq!(s.transmitters().len(), 2);
        assert!((s.transmitters()[1].angle_rad - PI).abs() < 1e-12);
        assert!((s.receivers[1].wall_anchor_angle_rad - PI).abs() < 1e-12);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn silent_transmitter_has_zero_row() {
        let link = simulate_mimo(&small_link(), [500, 0], 1).unwrap();
        assert_eq!(link.totals()[1], [0, 0]);
        assert!(link.totals()[0][0] > 0);
        assert!(link.ledgers.iter().all(MassLedger::is_balanced));
    }

    #[test]
    fn needs_two_by_two() {
        assert!(simulate_mimo(&presets::vein(), [1, 1], 1).is_err());
    }

    #[test]
    fn late_crosstalk_is_cancelled() {
        // The other link's molecules arrive one slot late and strongly.
        let bank = ChannelBank {
            bin_width_s: 1.0,
            taps: vec![vec![vec![0.5, 0.05], vec![0.0, 0.35]], vec![vec![0.0, 0.35], vec![0.5, 0.05]]],
        };
        let scheme = ModulationScheme::bcsk(1000, 1.0);
        let a = vec![true, false, true, false, false, true, false];
        let b = vec![false, true, false, false, true, false, false];
        let frame = synthesize_received(
            &[modulate(&a, &scheme).unwrap(), modulate(&b, &scheme).unwrap()],
            SynthesisMode::SemiAnalytic(&bank),
            &[0],
            &mut derive_stream(2, 0),
        )
        .unwrap();
        let fixed = detect_mimo(&frame, &scheme, &DetectionConfig::Fixed { threshold: 250 }, &bank).unwrap();
        assert_ne!(fixed, [a.clone(), b.clone()]);
        let isi_only = DetectionConfig::Adaptive { base_threshold: 250, isi_memory: 1, ili_enabled: false };
        assert_ne!(detect_mimo(&frame, &scheme, &isi_only, &bank).unwrap(), [a.clone(), b.clone()]);
        let with_ili = DetectionConfig::Adaptive { base_threshold: 250, isi_memory: 1, ili_enabled: true };
        assert_eq!(detect_mimo(&frame, &scheme, &with_ili, &bank).unwrap(), [a, b]);
    }
}

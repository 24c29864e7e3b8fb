//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any fails.

use std::time::Instant;

use vesselcomm::boundary::{ValveSpec, WallModel};
use vesselcomm::channel::{
    analytic_1d_first_passage_cdf, analytic_free_space_absorbing_sphere, cir_statistics, ks_statistic, run_particles,
    simulate_cir, simulate_free_space_cir, ChannelImpulseResponse, FreeSpaceSetup, MassLedger, Release,
};
use vesselcomm::comms::coding::{decode_constrained, encode_constrained};
use vesselcomm::comms::ita2::{bits_to_codes, codes_to_bits, supported_alphabet};
use vesselcomm::comms::{
    ber_over_seeds, ita2_decode, ita2_encode, random_bits, run_link, ChannelBank, DetectionConfig, LineCoding,
    LinkChannel, LinkSetup, ModulationScheme, SchemeKind, SynthesisMode,
};
use vesselcomm::relay::{Hop, HopChannel, RelayChain, RelayMode, RelayRunner};
use vesselcomm::rng::{derive_stream, domain, stream_id};
use vesselcomm::scenario::{presets, EndCapPolicy, FlowProfile, ParticleState, SimulationScenario, SurfacePoint};
use vesselcomm::transport::{classify_flow_regime, FlowRegime};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn vein(molecules: u64, end_s: f64, seed: u64) -> SimulationScenario {
    let mut s = presets::vein();
    s.molecules_per_emission = molecules;
    s.end_time_s = end_s;
    s.seed = seed;
    s
}

fn cir(s: &SimulationScenario) -> (ChannelImpulseResponse, MassLedger) {
    simulate_cir(s, 0).expect("scenario runs")
}

/// Peak, then statistics with the tail cut at twice the peak time.
fn stats(c: &ChannelImpulseResponse) -> Option<vesselcomm::CirStatistics> {
    let peak = cir_statistics(c, 0, f64::INFINITY).ok()?;
    cir_statistics(c, 0, 2.0 * peak.peak_time_s).ok()
}

fn dimensionless() -> Verdict {
    let s = presets::vein();
    let r = classify_flow_regime(&s.geometry, &s.flow, &s.species[0]).unwrap();
    let alpha = r.dispersion_factor.unwrap_or(f64::NAN);
    verdict(
        (r.peclet - 223.88).abs() <= 0.01 && (alpha - 0.2978).abs() <= 0.001 && r.regime == FlowRegime::PoiseuilleDominated,
        format!("Pe {:.3}, alpha_d {alpha:.4}, {:?}", r.peclet, r.regime),
    )
}

fn one_dimensional_oracle() -> Verdict {
    let mut s = vein(100_000, 10.0, 11);
    s.geometry.length_um = 2100.0;
    s.geometry.end_cap_policy = EndCapPolicy::AbsorbFarEnd;
    s.receivers.clear();
    s.tx_position = SurfacePoint::new(100.0, 0.0);
    let release = Release {
        tx: s.tx_position,
        time_s: 0.0,
        count: s.molecules_per_emission,
        species_id: 0,
    };
    let fates = run_particles(&s, &[release], 0).unwrap();
    let mut times: Vec<f64> = fates
        .iter()
        .filter_map(|f| match *f {
            ParticleState::ExitedEnd { time_s } => Some(time_s),
            _ => None,
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let ks = ks_statistic(&times, |t| analytic_1d_first_passage_cdf(2000.0, 5000.0, 670.0, t));
    verdict(ks < 0.02, format!("KS {ks:.4} over {} passages", times.len()))
}

fn free_space_oracle() -> Verdict {
    let mut setup = FreeSpaceSetup::on_axis(20.0, 5.0, 670.0, 100_000);
    setup.seed = 12;
    let (c, _) = simulate_free_space_cir(&setup, 0);
    let simulated = c.total(0) as f64 / setup.molecules as f64;
    let analytic = analytic_free_space_absorbing_sphere(20.0, 5.0, 670.0, 10.0).unwrap().cumulative;
    verdict(
        (simulated - analytic).abs() <= 0.015,
        format!("absorbed fraction {simulated:.4}, analytic {analytic:.4}"),
    )
}

fn duct_versus_free_space() -> Verdict {
    let (mut peak_wins, mut tail_wins) = (0, 0);
    let (mut uniform_first, mut poiseuille_first) = (Vec::new(), Vec::new());
    for seed in 1..=5 {
        let s = vein(20_000, 3.0, seed);
        let (duct, _) = cir(&s);
        let mut p = s.clone();
        p.flow = FlowProfile::poiseuille(5000.0);
        let (pois, _) = cir(&p);
        let r = s.geometry.radius_um - 0.1;
        let mut f = FreeSpaceSetup::on_axis(s.receivers[0].center_axial_um, 5.0, 670.0, 20_000);
        f.drift_um_s = 5000.0;
        f.end_time_s = 3.0;
        f.seed = seed;
        f.tx = [0.0, r, 0.0];
        f.receiver.center = [s.receivers[0].center_axial_um, r, 0.0];
        let (free, _) = simulate_free_space_cir(&f, 0);
        let (sd, sf) = (stats(&duct).unwrap(), stats(&free).unwrap());
        peak_wins += usize::from(sd.peak_amplitude > sf.peak_amplitude);
        tail_wins += usize::from(sd.tail_fraction > sf.tail_fraction);
        uniform_first.push(sd.first_arrival_s);
        poiseuille_first.push(stats(&pois).unwrap().first_arrival_s);
    }
    let (u, p) = (median(uniform_first), median(poiseuille_first));
    verdict(
        peak_wins >= 4 && tail_wins >= 4 && p < u,
        format!("duct peak higher in {peak_wins}/5, tail heavier in {tail_wins}/5; first arrival Poiseuille {p:.3} s vs uniform {u:.3} s"),
    )
}

fn leak_sweep() -> Verdict {
    let mut results = Vec::new();
    for leak in [0.0, 0.05, 0.2, 0.5] {
        let mut s = vein(10_000, 2.0, 1);
        s.wall = WallModel::permeable(leak);
        let (c, _) = cir(&s);
        results.push(cir_statistics(&c, 0, f64::INFINITY).ok());
    }
    let peaks: Vec<u64> = results.iter().map(|r| r.map_or(0, |s| s.peak_amplitude)).collect();
    let monotone = peaks.windows(2).all(|w| w[1] <= w[0]);
    let (base, at) = (results[0].unwrap(), results[2]);
    let (shift, drop) = at.map_or((0.0, 1.0), |a| {
        (
            (a.peak_time_s - base.peak_time_s).abs() / base.peak_time_s,
            (base.peak_amplitude as f64 - a.peak_amplitude as f64) / base.peak_amplitude as f64,
        )
    });
    verdict(
        monotone && shift < drop,
        format!("peaks {peaks:?}; at leak 0.2 peak-time shift {shift:.3} vs amplitude drop {drop:.3}"),
    )
}

fn valves() -> Verdict {
    let s = vein(10_000, 2.0, 1);
    let mut closed = s.clone();
    closed.valves.push(ValveSpec::always_closed(1000.0));
    let (_, closed_ledger) = cir(&closed);
    let closed_absorbed: u64 = closed_ledger.absorbed.iter().sum();

    let (plain_cir, plain_ledger) = cir(&s);
    let mut open = s.clone();
    open.valves.push(ValveSpec::always_open(1000.0));
    let (open_cir, open_ledger) = cir(&open);
    let identical = open_cir.counts == plain_cir.counts && open_ledger == plain_ledger;

    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in 1..=5 {
        let base = vein(10_000, 2.0, seed);
        let mut gated = base.clone();
        gated.valves.push(ValveSpec {
            axial_um: 1000.0,
            period_s: 1.0,
            open_fraction: 0.5,
            phase_s: 0.5,
        });
        without.push(cir(&base).0.total(0) as f64);
        with.push(cir(&gated).0.total(0) as f64);
    }
    let (w, wo) = (median(with), median(without));
    verdict(
        closed_absorbed == 0 && identical && w < wo,
        format!("closed valve absorbs {closed_absorbed}; duty-1 identical: {identical}; duty-0.5 median {w} vs {wo}"),
    )
}

fn degradation() -> Verdict {
    let base = vein(10_000, 2.0, 1);
    let mut tau = None;
    let mut tails = Vec::new();
    let mut zero_rate = None;
    for k in [0.0, 1.0, 5.0] {
        let mut s = base.clone();
        s.species[0].degradation_rate_per_s = k;
        let (c, l) = cir(&s);
        let t = *tau.get_or_insert_with(|| 2.0 * cir_statistics(&c, 0, f64::INFINITY).unwrap().peak_time_s);
        tails.push(cir_statistics(&c, 0, t).unwrap().tail_fraction);
        if k == 0.0 {
            zero_rate = Some((c, l));
        }
    }
    let text = base.to_toml().replace("degradation_rate_per_s = 0.0\n", "");
    let disabled = SimulationScenario::parse(&text).unwrap();
    let (dc, dl) = cir(&disabled);
    let (zc, zl) = zero_rate.unwrap();
    let identical = dc.counts == zc.counts && dl == zl;
    verdict(
        tails.windows(2).all(|w| w[1] <= w[0]) && identical,
        format!("tails {tails:.4?}; k=0 identical to chemistry-free: {identical}"),
    )
}

fn ledger_scenarios() -> Vec<(String, SimulationScenario)> {
    let mut out = Vec::new();
    for (wall_name, wall) in [("reflective", WallModel::reflective()), ("permeable", WallModel::permeable(0.05))] {
        for (valve_name, valve) in [("no valve", None), ("valve", Some(ValveSpec { axial_um: 1000.0, period_s: 0.4, open_fraction: 0.5, phase_s: 0.1 }))] {
            for (flow_name, flow) in [
                ("still", FlowProfile::none()),
                ("uniform", FlowProfile::uniform(5000.0)),
                ("poiseuille", FlowProfile::poiseuille(5000.0)),
            ] {
                let mut s = vein(2_000, 1.0, 21);
                s.wall = wall.clone();
                s.valves = valve.clone().into_iter().collect();
                s.flow = flow;
                s.geometry.end_cap_policy = EndCapPolicy::AbsorbFarEnd;
                s.species[0].degradation_rate_per_s = 0.5;
                out.push((format!("{wall_name}/{valve_name}/{flow_name}"), s));
            }
        }
    }
    out
}

fn ledger_identity() -> Verdict {
    let scenarios = ledger_scenarios();
    let unbalanced: Vec<String> = scenarios
        .iter()
        .filter(|(_, s)| {
            let l = cir(s).1;
            let sum = l.absorbed.iter().sum::<u64>() + l.leaked + l.degraded + l.exited + l.alive_at_end;
            sum != l.emitted || l.emitted != s.molecules_per_emission
        })
        .map(|(n, _)| n.clone())
        .collect();
    verdict(
        unbalanced.is_empty(),
        format!("{} scenarios, unbalanced: {unbalanced:?}", scenarios.len()),
    )
}

fn comms_properties() -> Verdict {
    let mut rng = derive_stream(31, stream_id(domain::BITS, 0));
    let mut code_ok = true;
    for _ in 0..10_000 {
        let n = (rng.uniform() * 64.0) as usize;
        let bits = random_bits(n, &mut rng);
        let code = encode_constrained(&bits);
        code_ok &= !code.windows(2).any(|w| w[0] && w[1]);
        code_ok &= decode_constrained(&code).is_ok_and(|d| d[..n] == bits[..] && d[n..].iter().all(|b| !b));
    }

    let alphabet: String = supported_alphabet().into_iter().collect();
    let ita2_ok = ["HELLO WORLD", "RYRY 1234?", alphabet.as_str(), ""].iter().all(|m| {
        let codes = ita2_encode(m).unwrap();
        ita2_decode(&bits_to_codes(&codes_to_bits(&codes))).unwrap() == *m
    });

    let bank = ChannelBank::zero_isi(1.0);
    let setup = LinkSetup {
        scheme: ModulationScheme::bcsk(100, 1.0),
        detection: DetectionConfig::Fixed { threshold: 50 },
        coding: LineCoding::None,
    };
    let zero_isi = ber_over_seeds(2_000, &(0..5).collect::<Vec<_>>(), &setup, LinkChannel::SemiAnalytic(&bank), 0)
        .unwrap()
        .iter()
        .all(|o| o.bit_errors == 0);

    let heavy = ChannelBank::high_isi(1.0);
    let high_isi = |detection: DetectionConfig| {
        let setup = LinkSetup {
            scheme: ModulationScheme::bcsk(100, 1.0),
            detection,
            coding: LineCoding::None,
        };
        let seeds: Vec<u64> = (0..20).collect();
        let out = ber_over_seeds(10_000, &seeds, &setup, LinkChannel::SemiAnalytic(&heavy), 0).unwrap();
        out.iter().map(|o| o.ber).sum::<f64>() / out.len() as f64
    };
    let fixed = high_isi(DetectionConfig::Fixed { threshold: 15 });
    let adaptive = high_isi(DetectionConfig::Adaptive {
        base_threshold: 15,
        isi_memory: 3,
        ili_enabled: false,
    });
    verdict(
        code_ok && ita2_ok && zero_isi && adaptive <= fixed,
        format!("constrained code {code_ok}; ITA2 round trip {ita2_ok}; zero-ISI error-free {zero_isi}; high-ISI BER fixed {fixed:.4} adaptive {adaptive:.4}"),
    )
}

fn relay_composition() -> Verdict {
    let scheme = ModulationScheme {
        kind: SchemeKind::Csk {
            molecules_per_level: vec![20, 40],
        },
        symbol_duration_s: 1.0,
        species_id: 0,
    };
    let hop = Hop {
        channel: HopChannel::Bank(ChannelBank::single(1.0, vec![0.5])),
        detection: DetectionConfig::Fixed { threshold: 15 },
    };
    let runner = RelayRunner::new(
        RelayChain {
            hops: vec![hop.clone(), hop],
            processing_delay_s: 0.0,
            scheme: scheme.clone(),
        },
        RelayMode::SemiAnalytic,
        0,
    )
    .unwrap();
    let (seeds, n) = (20u64, 10_000usize);
    let (mut p, mut e2e) = (0.0, 0.0);
    for seed in 0..seeds {
        let bits = random_bits(n, &mut derive_stream(seed, stream_id(domain::BITS, 0)));
        let r = runner.run(&bits, seed).unwrap();
        p += (r.hops[0].ber + r.hops[1].ber) / 2.0 / seeds as f64;
        e2e += r.end_to_end_ber / seeds as f64;
    }
    let predicted = 2.0 * p * (1.0 - p);
    let total = (seeds as usize * n) as f64;
    let sigma_e2e = (predicted * (1.0 - predicted) / total).sqrt();
    let sigma_p = (p * (1.0 - p) / (2.0 * total)).sqrt();
    let sigma = (sigma_e2e.powi(2) + (2.0 * (1.0 - 2.0 * p) * sigma_p).powi(2)).sqrt();
    let composes = (e2e - predicted).abs() <= 3.0 * sigma;

    let perfect = Hop {
        channel: HopChannel::Bank(ChannelBank::zero_isi(1.0)),
        detection: DetectionConfig::Fixed { threshold: 10 },
    };
    let clean = RelayRunner::new(
        RelayChain {
            hops: vec![perfect.clone(), perfect.clone(), perfect],
            processing_delay_s: 0.1,
            scheme: ModulationScheme::bcsk(20, 1.0),
        },
        RelayMode::SemiAnalytic,
        0,
    )
    .unwrap();
    let bits = random_bits(5_000, &mut derive_stream(99, stream_id(domain::BITS, 0)));
    let identity = clean.run(&bits, 99).unwrap().delivered == bits;
    verdict(
        composes && identity,
        format!("hop p {p:.4}, end-to-end {e2e:.4}, predicted {predicted:.4} (3 sigma {:.4}); perfect chain identity {identity}", 3.0 * sigma),
    )
}

fn determinism() -> Verdict {
    let mut s = vein(20_000, 2.0, 5);
    s.wall = WallModel::permeable(0.02);
    s.species[0].degradation_rate_per_s = 0.5;
    let (c1, l1) = simulate_cir(&s, 1).unwrap();
    let (c8, l8) = simulate_cir(&s, 8).unwrap();
    let cir_same = c1.to_delimited() == c8.to_delimited() && l1.to_record() == l8.to_record();

    let bank = ChannelBank::from_cir(&c1);
    let setup = LinkSetup {
        scheme: ModulationScheme::bcsk(2_000, 0.5),
        detection: DetectionConfig::Adaptive {
            base_threshold: 20,
            isi_memory: 3,
            ili_enabled: false,
        },
        coding: LineCoding::Constrained,
    };
    let seeds: Vec<u64> = (0..6).collect();
    let semi = |w| ber_over_seeds(500, &seeds, &setup, LinkChannel::SemiAnalytic(&bank), w).unwrap();
    let mut small = s.clone();
    small.molecules_per_emission = 2_000;
    let full = |w| {
        ber_over_seeds(
            40,
            &seeds[..2],
            &setup,
            LinkChannel::FullParticle {
                scenario: &small,
                estimate: &bank,
            },
            w,
        )
        .unwrap()
    };
    let record = |v: Vec<vesselcomm::comms::LinkOutcome>| {
        v.iter().map(|o| format!("{},{},{},{}", o.data_bits, o.channel_bits, o.bit_errors, o.ber)).collect::<Vec<_>>()
    };
    let ber_same = record(semi(1)) == record(semi(8)) && record(full(1)) == record(full(8));

    let bits = random_bits(64, &mut derive_stream(3, stream_id(domain::BITS, 0)));
    let mut r1 = derive_stream(3, stream_id(domain::SYNTHESIS, 0));
    let mut r8 = r1.clone();
    let a = run_link(&bits, &setup, SynthesisMode::FullParticle { scenario: &small, workers: 1 }, &bank, &mut r1).unwrap();
    let b = run_link(&bits, &setup, SynthesisMode::FullParticle { scenario: &small, workers: 8 }, &bank, &mut r8).unwrap();
    let link_same = a.decoded == b.decoded && a.emitted == b.emitted;
    verdict(
        cir_same && ber_same && link_same,
        format!("CIR and ledger identical {cir_same}; BER identical {ber_same}; decoded frames identical {link_same}"),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("dimensionless numbers of the vein duct", dimensionless),
        ("1-D first-passage oracle", one_dimensional_oracle),
        ("3-D absorbing-sphere oracle", free_space_oracle),
        ("duct versus free space, Poiseuille versus uniform", duct_versus_free_space),
        ("leaky wall lowers the peak", leak_sweep),
        ("valves gate the channel", valves),
        ("degradation shortens the tail", degradation),
        ("mass ledger identity", ledger_identity),
        ("communication properties", comms_properties),
        ("relay error composition", relay_composition),
        ("determinism under parallelism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if filter.as_ref().is_some_and(|f| f != &id.to_string()) {
            continue;
        }
        let started = Instant::now();
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

use std::fs;

use serde::Serialize;
use vesselcomm::channel::{cir_statistics, simulate_cir, ChannelImpulseResponse, MassLedger};
use vesselcomm::comms::ita2::{bits_to_codes, codes_to_bits};
use vesselcomm::comms::mimo::two_by_two;
use vesselcomm::comms::{
    ber_over_seeds, ita2_decode, ita2_encode, midpoint_threshold, random_bits, run_link, simulate_mimo, ChannelBank,
    DetectionConfig, LineCoding, LinkChannel, LinkOutcome, LinkSetup, ModulationScheme, SynthesisMode,
};
use vesselcomm::relay::{valve_aligned_placement, DetectorKind, RelayMode, RelayReport, RelayRunner};
use vesselcomm::rng::{derive_stream, domain, stream_id};
use vesselcomm::scenario::presets;
use vesselcomm::transport::classify_flow_regime;
use vesselcomm::SimulationScenario;

use crate::error::CliError;
use crate::output::{emit, OutputDir};
use crate::{
    sweep, BerOpts, ChannelArg, CodingArg, DetectorArg, LinkOpts, ModeArg, RunOpts, ScenarioSource, SchemeArg, SweepTarget,
};

pub fn load(source: &ScenarioSource) -> Result<SimulationScenario, CliError> {
    if let Some(name) = &source.preset {
        return presets::by_name(name).ok_or_else(|| CliError::UnknownPreset(name.clone()));
    }
    let path = source.scenario.as_ref().expect("clap requires a scenario or preset");
    if !path.exists() {
        return Err(CliError::FileNotFound(path.clone()));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let scenario = SimulationScenario::from_toml(&text).map_err(|e| CliError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn prepared(source: &ScenarioSource, run: &RunOpts) -> Result<SimulationScenario, CliError> {
    let mut s = load(source)?;
    apply_overrides(&mut s, run);
    s.validate()?;
    Ok(s)
}

fn apply_overrides(s: &mut SimulationScenario, run: &RunOpts) {
    if let Some(seed) = run.seed {
        s.seed = seed;
    }
    if let Some(n) = run.molecules {
        s.molecules_per_emission = n;
    }
    if let Some(t) = run.end_time_s {
        s.end_time_s = t;
    }
}

#[derive(Serialize)]
struct CirSummary {
    scenario_digest: String,
    seed: u64,
    emitted: u64,
    absorbed: u64,
    ledger_balanced: bool,
    peak_amplitude: Option<u64>,
    peak_time_s: Option<f64>,
    first_arrival_s: Option<f64>,
    tail_fraction: Option<f64>,
    tau_s: Option<f64>,
}

#[derive(Serialize)]
struct LedgerRecord<'a> {
    #[serde(flatten)]
    ledger: &'a MassLedger,
    accounted: u64,
    balanced: bool,
}

fn summarize(s: &SimulationScenario, cir: &ChannelImpulseResponse, ledger: &MassLedger, tau_s: Option<f64>) -> CirSummary {
    let first = cir_statistics(cir, 0, f64::INFINITY).ok();
    let tau = tau_s.or(first.map(|st| 2.0 * st.peak_time_s));
    let stats = tau.and_then(|t| cir_statistics(cir, 0, t).ok());
    CirSummary {
        scenario_digest: s.digest(),
        seed: s.seed,
        emitted: ledger.emitted,
        absorbed: ledger.absorbed.iter().sum(),
        ledger_balanced: ledger.is_balanced(),
        peak_amplitude: stats.map(|st| st.peak_amplitude),
        peak_time_s: stats.map(|st| st.peak_time_s),
        first_arrival_s: stats.map(|st| st.first_arrival_s),
        tail_fraction: stats.map(|st| st.tail_fraction),
        tau_s: stats.map(|st| st.tau_s),
    }
}

fn write_cir(out: &mut OutputDir, cir: &ChannelImpulseResponse, ledger: &MassLedger) -> Result<(), CliError> {
    out.write("cir.csv", &cir.to_delimited())?;
    out.write_json(
        "ledger.json",
        &LedgerRecord {
            ledger,
            accounted: ledger.accounted(),
            balanced: ledger.is_balanced(),
        },
    )
}

pub fn cir(source: &ScenarioSource, run: &RunOpts) -> Result<(), CliError> {
    let s = prepared(source, run)?;
    let mut out = OutputDir::create(&run.out)?;
    let (cir, ledger) = simulate_cir(&s, run.workers)?;
    write_cir(&mut out, &cir, &ledger)?;
    out.finish("cir", &s, run.workers)?;
    emit(&summarize(&s, &cir, &ledger, None));
    Ok(())
}

pub fn regime(source: &ScenarioSource) -> Result<(), CliError> {
    let s = load(source)?;
    let species = s
        .species
        .first()
        .ok_or_else(|| CliError::InvalidArgument("scenario defines no species".into()))?;
    let report = classify_flow_regime(&s.geometry, &s.flow, species).map_err(|e| CliError::Simulation(e.to_string()))?;
    emit(&report);
    Ok(())
}

struct PreparedLink {
    setup: LinkSetup,
    bank: ChannelBank,
    full_particle: bool,
}

fn build_scheme(s: &SimulationScenario, link: &LinkOpts) -> Result<ModulationScheme, CliError> {
    let molecules = link.molecules_per_symbol.unwrap_or(s.molecules_per_emission);
    let species = s.species.first().map_or(0, |sp| sp.species_id);
    let mut scheme = match link.scheme {
        SchemeArg::Bcsk => ModulationScheme::bcsk(molecules, link.symbol_s),
        SchemeArg::Ppm => ModulationScheme::ppm(link.ppm_slots, molecules, link.symbol_s),
        SchemeArg::Mosk => {
            let n = s.species.len();
            if n < 2 {
                return Err(CliError::InvalidArgument("MoSK needs at least two species in the scenario".into()));
            }
            let arity = 1usize << (usize::BITS - 1 - n.leading_zeros());
            ModulationScheme::mosk(s.species[..arity].iter().map(|sp| sp.species_id).collect(), molecules, link.symbol_s)
        }
    };
    scheme.species_id = species;
    scheme.validate()?;
    Ok(scheme)
}

fn prepare_link(s: &SimulationScenario, link: &LinkOpts, workers: usize) -> Result<PreparedLink, CliError> {
    let scheme = build_scheme(s, link)?;
    let slot = scheme.slot_duration_s();
    let bank = match link.channel {
        ChannelArg::Scenario => ChannelBank::from_cir(&simulate_cir(s, workers)?.0),
        ChannelArg::ZeroIsi => ChannelBank::zero_isi(slot),
        ChannelArg::HighIsi => ChannelBank::high_isi(slot),
    };
    let full_particle = link.mode == ModeArg::FullParticle;
    if full_particle && link.channel != ChannelArg::Scenario {
        return Err(CliError::InvalidArgument("full-particle mode needs the scenario channel".into()));
    }
    let taps = bank.slot_taps(0, 0, slot)?;
    let threshold = link
        .threshold
        .unwrap_or_else(|| midpoint_threshold(&scheme, taps.first().copied().unwrap_or(0.0)));
    let detection = match link.detector {
        DetectorArg::Fixed => DetectionConfig::Fixed { threshold },
        DetectorArg::Adaptive => DetectionConfig::Adaptive {
            base_threshold: threshold,
            isi_memory: link.isi_memory,
            ili_enabled: false,
        },
    };
    let coding = match link.coding {
        CodingArg::None => LineCoding::None,
        CodingArg::Constrained => LineCoding::Constrained,
    };
    Ok(PreparedLink {
        setup: LinkSetup {
            scheme,
            detection,
            coding,
        },
        bank,
        full_particle,
    })
}

#[derive(Serialize)]
struct BerSummary {
    scenario_digest: String,
    seeds: usize,
    data_bits_per_seed: usize,
    channel_bits_per_seed: usize,
    code_rate: f64,
    mean_ber: f64,
    std_error: f64,
    detection: DetectionConfig,
}

fn ber_table(s: &SimulationScenario, link: &LinkOpts, ber: &BerOpts, workers: usize) -> Result<(String, BerSummary), CliError> {
    let p = prepare_link(s, link, workers)?;
    let seeds: Vec<u64> = (0..ber.seeds).map(|i| s.seed.wrapping_add(i)).collect();
    let channel = if p.full_particle {
        LinkChannel::FullParticle {
            scenario: s,
            estimate: &p.bank,
        }
    } else {
        LinkChannel::SemiAnalytic(&p.bank)
    };
    let outcomes = ber_over_seeds(ber.bits, &seeds, &p.setup, channel, workers)?;
    let mut csv = String::from("seed,data_bits,channel_bits,bit_errors,ber\n");
    for (seed, o) in seeds.iter().zip(&outcomes) {
        csv.push_str(&format!("{seed},{},{},{},{}\n", o.data_bits, o.channel_bits, o.bit_errors, o.ber));
    }
    let n = outcomes.len().max(1) as f64;
    let mean = outcomes.iter().map(|o| o.ber).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.ber - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_error = (var / n).sqrt();
    let first = outcomes.first();
    let (data_bits, channel_bits) = first.map_or((ber.bits, 0), |o| (o.data_bits, o.channel_bits));
    csv.push_str(&format!("mean,{data_bits},{channel_bits},,{mean}\n"));
    csv.push_str(&format!("std_error,,,,{std_error}\n"));
    Ok((
        csv,
        BerSummary {
            scenario_digest: s.digest(),
            seeds: outcomes.len(),
            data_bits_per_seed: data_bits,
            channel_bits_per_seed: channel_bits,
            code_rate: if channel_bits == 0 { 1.0 } else { data_bits as f64 / channel_bits as f64 },
            mean_ber: mean,
            std_error,
            detection: p.setup.detection,
        },
    ))
}

pub fn ber(source: &ScenarioSource, run: &RunOpts, link: &LinkOpts, opts: &BerOpts) -> Result<(), CliError> {
    let s = prepared(source, run)?;
    let mut out = OutputDir::create(&run.out)?;
    let (csv, summary) = ber_table(&s, link, opts, run.workers)?;
    out.write("ber.csv", &csv)?;
    out.write_json("ber_summary.json", &summary)?;
    out.finish("ber", &s, run.workers)?;
    emit(&summary);
    Ok(())
}

#[derive(Serialize)]
struct SweepBlock<T: Serialize> {
    param: String,
    value: f64,
    dir: String,
    #[serde(flatten)]
    result: T,
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    source: &ScenarioSource,
    param: &str,
    values: &str,
    then: SweepTarget,
    run: &RunOpts,
    link: &LinkOpts,
    ber_opts: &BerOpts,
) -> Result<(), CliError> {
    let base = prepared(source, run)?;
    let tree: toml::Value = toml::from_str(&base.to_toml()).expect("canonical scenario parses");
    let segments = sweep::resolve(&tree, param)?;
    let path = segments.join(".");
    let values: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| CliError::InvalidArgument(format!("not a number: {v:?}"))))
        .collect::<Result<_, _>>()?;
    let mut out = OutputDir::create(&run.out)?;
    let mut rows = match then {
        SweepTarget::Cir => String::from("value,absorbed,peak_amplitude,peak_time_s,tail_fraction,tau_s,dir\n"),
        SweepTarget::Regime => String::from("value,peclet,dispersion_factor,regime\n"),
        SweepTarget::Ber => String::from("value,mean_ber,std_error,dir\n"),
    };
    let mut tau_ref = None;
    for (i, &value) in values.iter().enumerate() {
        let text = toml::to_string(&sweep::with_value(&tree, &segments, value)?).expect("tree serializes");
        let scenario = SimulationScenario::parse(&text).map_err(|e| match e {
            vesselcomm::scenario::ScenarioParseError::Invalid(r) => CliError::from(r),
            other => CliError::InvalidArgument(format!("{path}={value}: {other}")),
        })?;
        let dir = format!("{i:03}");
        let sub = run.out.join(&dir);
        match then {
            SweepTarget::Cir => {
                let mut sub_out = OutputDir::create(&sub)?;
                let (cir, ledger) = simulate_cir(&scenario, run.workers)?;
                write_cir(&mut sub_out, &cir, &ledger)?;
                sub_out.finish("cir", &scenario, run.workers)?;
                if tau_ref.is_none() {
                    tau_ref = cir_statistics(&cir, 0, f64::INFINITY).ok().map(|st| 2.0 * st.peak_time_s);
                }
                let summary = summarize(&scenario, &cir, &ledger, tau_ref);
                let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
                rows.push_str(&format!(
                    "{value},{},{},{},{},{},{dir}\n",
                    summary.absorbed,
                    summary.peak_amplitude.map_or(String::new(), |x| x.to_string()),
                    opt(summary.peak_time_s),
                    opt(summary.tail_fraction),
                    opt(summary.tau_s)
                ));
                emit(&SweepBlock {
                    param: path.clone(),
                    value,
                    dir: dir.clone(),
                    result: summary,
                });
            }
            SweepTarget::Regime => {
                let report = classify_flow_regime(&scenario.geometry, &scenario.flow, &scenario.species[0])
                    .map_err(|e| CliError::Simulation(e.to_string()))?;
                rows.push_str(&format!(
                    "{value},{},{},{:?}\n",
                    report.peclet,
                    report.dispersion_factor.map_or(String::new(), |x| x.to_string()),
                    report.regime
                ));
                emit(&SweepBlock {
                    param: path.clone(),
                    value,
                    dir: String::new(),
                    result: report,
                });
            }
            SweepTarget::Ber => {
                let mut sub_out = OutputDir::create(&sub)?;
                let (csv, summary) = ber_table(&scenario, link, ber_opts, run.workers)?;
                sub_out.write("ber.csv", &csv)?;
                sub_out.finish("ber", &scenario, run.workers)?;
                rows.push_str(&format!("{value},{},{},{dir}\n", summary.mean_ber, summary.std_error));
                emit(&SweepBlock {
                    param: path.clone(),
                    value,
                    dir: dir.clone(),
                    result: summary,
                });
            }
        }
    }
    out.write("sweep.csv", &rows)?;
    out.finish("sweep", &base, run.workers)
}

#[derive(Serialize)]
struct TextRun {
    seed: u64,
    sent: String,
    received: String,
    bits_compared: usize,
    channel_bits: usize,
    bit_errors: usize,
    ber: f64,
}

pub fn text(source: &ScenarioSource, message: &str, seeds: u64, run: &RunOpts, link: &LinkOpts) -> Result<(), CliError> {
    let s = prepared(source, run)?;
    let codes = ita2_encode(message)?;
    let bits = codes_to_bits(&codes);
    let p = prepare_link(&s, link, run.workers)?;
    let mut out = OutputDir::create(&run.out)?;
    let mut runs = Vec::new();
    for i in 0..seeds {
        let seed = s.seed.wrapping_add(i);
        let mut noise = derive_stream(seed, stream_id(domain::SYNTHESIS, 0));
        let outcome: LinkOutcome = if p.full_particle {
            let mut sc = s.clone();
            sc.seed = seed;
            let mode = SynthesisMode::FullParticle {
                scenario: &sc,
                workers: run.workers,
            };
            run_link(&bits, &p.setup, mode, &p.bank, &mut noise)?
        } else {
            run_link(&bits, &p.setup, SynthesisMode::SemiAnalytic(&p.bank), &p.bank, &mut noise)?
        };
        let received = ita2_decode(&bits_to_codes(&outcome.decoded))?;
        let record = TextRun {
            seed,
            sent: message.to_string(),
            received,
            bits_compared: outcome.data_bits,
            channel_bits: outcome.channel_bits,
            bit_errors: outcome.bit_errors,
            ber: outcome.ber,
        };
        emit(&record);
        runs.push(record);
    }
    out.write_json("text.json", &runs)?;
    out.finish("text", &s, run.workers)
}

#[derive(Serialize)]
struct RelaySummary {
    hops: usize,
    processing_delay_s: f64,
    mode: RelayMode,
    mean_end_to_end_ber: f64,
    mean_hop_ber: Vec<f64>,
    runs: Vec<SeededRelay>,
}

#[derive(Serialize)]
struct SeededRelay {
    seed: u64,
    #[serde(flatten)]
    report: RelayReport,
}

pub fn relay(
    source: &ScenarioSource,
    hops: usize,
    processing_delay_s: f64,
    run: &RunOpts,
    link: &LinkOpts,
    opts: &BerOpts,
) -> Result<(), CliError> {
    let s = prepared(source, run)?;
    if link.channel != ChannelArg::Scenario {
        return Err(CliError::InvalidArgument("relay hops are built from the scenario channel".into()));
    }
    let scheme = build_scheme(&s, link)?;
    let detector = match link.detector {
        DetectorArg::Fixed => DetectorKind::Fixed,
        DetectorArg::Adaptive => DetectorKind::Adaptive {
            isi_memory: link.isi_memory,
        },
    };
    let mut chain = valve_aligned_placement(&s, hops, &scheme, detector, processing_delay_s, run.workers)?;
    if let Some(t) = link.threshold {
        for hop in &mut chain.hops {
            hop.detection = match hop.detection {
                DetectionConfig::Fixed { .. } => DetectionConfig::Fixed { threshold: t },
                DetectionConfig::Adaptive {
                    isi_memory,
                    ili_enabled,
                    ..
                } => DetectionConfig::Adaptive {
                    base_threshold: t,
                    isi_memory,
                    ili_enabled,
                },
            };
        }
    }
    let mode = match link.mode {
        ModeArg::SemiAnalytic => RelayMode::SemiAnalytic,
        ModeArg::FullParticle => RelayMode::FullParticle,
    };
    let runner = RelayRunner::new(chain, mode, run.workers)?;
    let mut runs = Vec::new();
    for i in 0..opts.seeds {
        let seed = s.seed.wrapping_add(i);
        let bits = random_bits(opts.bits, &mut derive_stream(seed, stream_id(domain::BITS, 0)));
        runs.push(SeededRelay {
            seed,
            report: runner.run(&bits, seed)?,
        });
    }
    let n = runs.len().max(1) as f64;
    let summary = RelaySummary {
        hops,
        processing_delay_s,
        mode,
        mean_end_to_end_ber: runs.iter().map(|r| r.report.end_to_end_ber).sum::<f64>() / n,
        mean_hop_ber: (0..hops)
            .map(|h| runs.iter().map(|r| r.report.hops[h].ber).sum::<f64>() / n)
            .collect(),
        runs,
    };
    let mut out = OutputDir::create(&run.out)?;
    out.write_json("relay.json", &summary)?;
    out.finish("relay", &s, run.workers)?;
    emit(&serde_json::json!({
        "hops": summary.hops,
        "mean_end_to_end_ber": summary.mean_end_to_end_ber,
        "mean_hop_ber": summary.mean_hop_ber,
    }));
    Ok(())
}

pub fn mimo(source: &ScenarioSource, run: &RunOpts) -> Result<(), CliError> {
    let mut s = prepared(source, run)?;
    if s.transmitters().len() == 1 && s.receivers.len() == 1 {
        s = two_by_two(&s);
    }
    s.validate()?;
    let n = s.molecules_per_emission;
    let link = simulate_mimo(&s, [n, n], run.workers)?;
    let mut out = OutputDir::create(&run.out)?;
    for tx in 0..2 {
        for rx in 0..2 {
            out.write(&format!("h_tx{tx}_rx{rx}.csv"), &link.h[tx][rx].to_delimited())?;
        }
    }
    let record = serde_json::json!({
        "totals": link.totals(),
        "ledgers": link.ledgers,
        "balanced": link.ledgers.iter().all(MassLedger::is_balanced),
    });
    out.write_json("mimo.json", &record)?;
    out.finish("mimo", &s, run.workers)?;
    emit(&record);
    Ok(())
}

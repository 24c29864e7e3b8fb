//! `vesselcomm` command-line front end.

mod commands;
mod error;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "vesselcomm", version, about = "Molecular communication in blood-vessel ducts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the channel impulse response and mass ledger.
    Cir {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        run: RunOpts,
    },
    /// Péclet number, dispersion factor and flow regime.
    Regime {
        #[command(flatten)]
        source: ScenarioSource,
    },
    /// Bit error rate over several seeds.
    Ber {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        link: LinkOpts,
        #[command(flatten)]
        ber: BerOpts,
    },
    /// Re-run a command for each value of one scenario parameter.
    Sweep {
        #[command(flatten)]
        source: ScenarioSource,
        /// Dotted path or unique leaf name of a numeric scenario field.
        #[arg(long)]
        param: String,
        /// Comma-separated values; an empty list runs nothing.
        #[arg(long, default_value = "")]
        values: String,
        /// Command run per value.
        #[arg(long, value_enum, default_value_t = SweepTarget::Cir)]
        then: SweepTarget,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        link: LinkOpts,
        #[command(flatten)]
        ber: BerOpts,
    },
    /// Send a text message as ITA2 over the link.
    Text {
        #[command(flatten)]
        source: ScenarioSource,
        #[arg(long)]
        message: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        link: LinkOpts,
    },
    /// Decode-and-forward relay chain with hop boundaries on valves.
    Relay {
        #[command(flatten)]
        source: ScenarioSource,
        #[arg(long, default_value_t = 1)]
        hops: usize,
        #[arg(long, default_value_t = 0.0)]
        processing_delay_s: f64,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        link: LinkOpts,
        #[command(flatten)]
        ber: BerOpts,
    },
    /// Impulse responses of a 2×2 link sharing the duct.
    Mimo {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Args, Clone, Debug)]
pub struct ScenarioSource {
    /// Scenario TOML file.
    #[arg(required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: vein, capillary or artery-distal.
    #[arg(long, conflicts_with = "scenario")]
    pub preset: Option<String>,
}

#[derive(Args, Clone, Debug)]
pub struct RunOpts {
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override molecules per emission.
    #[arg(long)]
    pub molecules: Option<u64>,
    /// Override the simulated horizon in seconds.
    #[arg(long)]
    pub end_time_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bcsk,
    Ppm,
    Mosk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodingArg {
    None,
    Constrained,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    /// Impulse response simulated from the scenario.
    Scenario,
    /// Every molecule arrives within its own slot.
    ZeroIsi,
    /// Synthetic channel with a heavy tail.
    HighIsi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    SemiAnalytic,
    FullParticle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepTarget {
    Cir,
    Regime,
    Ber,
}

#[derive(Args, Clone, Debug)]
pub struct LinkOpts {
    #[arg(long, value_enum, default_value_t = SchemeArg::Bcsk)]
    pub scheme: SchemeArg,
    /// Slots per PPM symbol.
    #[arg(long, default_value_t = 4)]
    pub ppm_slots: usize,
    /// Molecules per emission; defaults to the scenario's value.
    #[arg(long)]
    pub molecules_per_symbol: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub symbol_s: f64,
    #[arg(long, value_enum, default_value_t = DetectorArg::Fixed)]
    pub detector: DetectorArg,
    /// Detection threshold; defaults to half the expected first-slot count.
    #[arg(long)]
    pub threshold: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub isi_memory: usize,
    #[arg(long, value_enum, default_value_t = CodingArg::None)]
    pub coding: CodingArg,
    #[arg(long, value_enum, default_value_t = ChannelArg::Scenario)]
    pub channel: ChannelArg,
    #[arg(long, value_enum, default_value_t = ModeArg::SemiAnalytic)]
    pub mode: ModeArg,
}

#[derive(Args, Clone, Debug)]
pub struct BerOpts {
    /// Source bits per seed.
    #[arg(long, default_value_t = 1000)]
    pub bits: usize,
    /// Number of consecutive seeds, starting at the scenario seed.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cir { source, run } => commands::cir(&source, &run),
        Command::Regime { source } => commands::regime(&source),
        Command::Ber { source, run, link, ber } => commands::ber(&source, &run, &link, &ber),
        Command::Sweep {
            source,
            param,
            values,
            then,
            run,
            link,
            ber,
        } => commands::sweep(&source, &param, &values, then, &run, &link, &ber),
        Command::Text {
            source,
            message,
            seeds,
            run,
            link,
        } => commands::text(&source, &message, seeds, &run, &link),
        Command::Relay {
            source,
            hops,
            processing_delay_s,
            run,
            link,
            ber,
        } => commands::relay(&source, hops, processing_delay_s, &run, &link, &ber),
        Command::Mimo { source, run } => commands::mimo(&source, &run),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};

use parashard_core::config::{load_config, ConfigSet, Mode, ParallelConfig, TpFlavor};
use parashard_core::planner::{self, PlanOptions, RankKey};
use parashard_core::report::{self, Format};
use parashard_core::verify::{self, FormulaSet};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_EMPTY: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "parashard", version, about = "Cost model and parallelization planner for transformer and Mamba-2 training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cost breakdown of one parallel configuration.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Degrees as dp,pp,tp,cp.
        #[arg(long)]
        parallel: String,
    },
    /// Evaluate and rank every factorization of the cluster.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = RankBy::Mfu)]
        rank_by: RankBy,
        /// Minimum throughput in tokens/s.
        #[arg(long)]
        slo_throughput: Option<f64>,
        /// Maximum time to first token in seconds.
        #[arg(long)]
        slo_ttft: Option<f64>,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Rank agreement against an embedded measurement table.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Reference table id (llama7b, llama1b, mamba7b, mamba1b); defaults
        /// to the config file stem.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Check the formulas against the brute-force oracles.
    Verify,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Keep tensor-parallel groups inside one node.
    #[arg(long)]
    strict_tp_intra_node: bool,
    #[arg(long)]
    include_embeddings: bool,
    /// Fraction of communication hidden behind compute, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    overlap_eff: f64,
    #[arg(long, value_enum)]
    tp_flavor: Option<FlavorArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Training,
    Prefill,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RankBy {
    Mfu,
    Throughput,
    StepTime,
    Memory,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Plain,
    Tpsp,
    Tpup,
}

impl Common {
    fn load(&self) -> Result<(ConfigSet, PlanOptions, Format), String> {
        let set = load_config(&self.config).map_err(|e| e.to_string())?;
        if !(0.0..=1.0).contains(&self.overlap_eff) {
            return Err(format!("--overlap-eff must lie in [0, 1], got {}", self.overlap_eff));
        }
        let opts = PlanOptions {
            mode: self.mode.map(|m| match m {
                ModeArg::Training => Mode::Training,
                ModeArg::Prefill => Mode::Prefill,
            }),
            overlap_eff: self.overlap_eff,
            include_embeddings: self.include_embeddings,
            tp_flavor: self.tp_flavor.map(|f| match f {
                FlavorArg::Plain => TpFlavor::Plain,
                FlavorArg::Tpsp => TpFlavor::Tpsp,
                FlavorArg::Tpup => TpFlavor::Tpup,
            }),
            strict_tp_intra_node: self.strict_tp_intra_node,
            ..PlanOptions::default()
        };
        let format = match self.format {
            FormatArg::Table => Format::Table,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
        debug!("loaded {} ({} layers)", set.model.name, set.model.layers);
        Ok((set, opts, format))
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    eprintln!("usage: parashard <analyze|plan|compare|verify> --config <path> [options]; see --help");
    ExitCode::from(EXIT_USAGE)
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Analyze { common, parallel } => {
            let (set, opts, format) = match common.load() {
                Ok(x) => x,
                Err(e) => return usage(e),
            };
            let cfg = match ParallelConfig::parse_tuple(&parallel) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            let r = match planner::analyze(&set, cfg, &opts) {
                Ok(r) => r,
                Err(e) => return usage(e),
            };
            match report::render_analysis(&set, &r, format) {
                Ok(text) => print!("{text}"),
                Err(e) => return usage(e),
            }
            if r.feasible {
                ExitCode::SUCCESS
            } else {
                eprintln!("infeasible: {}", r.reason);
                ExitCode::from(EXIT_INFEASIBLE)
            }
        }
        Command::Plan {
            common,
            rank_by,
            slo_throughput,
            slo_ttft,
            top,
        } => {
            let (mut set, opts, format) = match common.load() {
                Ok(x) => x,
                Err(e) => return usage(e),
            };
            if slo_throughput.is_some() {
                set.slo.min_throughput = slo_throughput;
            }
            if slo_ttft.is_some() {
                set.slo.max_ttft = slo_ttft;
            }
            if let Err(e) = set.slo.validate() {
                return usage(e);
            }
            let key = match rank_by {
                RankBy::Mfu => RankKey::Mfu,
                RankBy::Throughput => RankKey::Throughput,
                RankBy::StepTime => RankKey::StepTime,
                RankBy::Memory => RankKey::Memory,
            };
            let ranked = match planner::plan(&set, &opts, key) {
                Ok(p) => p,
                Err(e) => return usage(e),
            };
            info!(
                "{} feasible, {} infeasible",
                ranked.feasible.len(),
                ranked.infeasible.len()
            );
            match report::render_plan(&ranked, top, format) {
                Ok(text) => print!("{text}"),
                Err(e) => return usage(e),
            }
            if ranked.feasible.is_empty() {
                eprintln!("no feasible configuration");
                ExitCode::from(EXIT_EMPTY)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Compare { common, reference } => {
            let (set, opts, format) = match common.load() {
                Ok(x) => x,
                Err(e) => return usage(e),
            };
            let id = reference.unwrap_or_else(|| {
                common
                    .config
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let cmp = match report::compare(&set, &opts, &id) {
                Ok(c) => c,
                Err(e) => return usage(e),
            };
            match report::render_comparison(&cmp, format) {
                Ok(text) => print!("{text}"),
                Err(e) => return usage(e),
            }
            ExitCode::SUCCESS
        }
        Command::Verify => {
            let result = verify::run(&FormulaSet::default());
            print!("{}", result.render());
            if result.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PARASHARD_LOG", "warn")).init();
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}

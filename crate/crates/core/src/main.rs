use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use betis::harness::{self, OutputOptions, Preset, ScenarioConfig};
use betis::Exec;

#[derive(Parser)]
#[command(name = "betis", version, about = "Epidemic simulation and app-based infection-state filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate ground truth and export the observation stream.
    Simulate(Common),
    /// Filter an exported observation stream (replay mode).
    Filter {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate` (one seed).
        #[arg(long)]
        input: PathBuf,
    },
    /// Simulate, filter and score end to end.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also export the observation stream of each seed.
        #[arg(long)]
        export_stream: bool,
    },
    /// Run a named experiment family.
    Suite {
        /// One of fig1, fig2, fig3, fig1_limits, fig2_limits, fig3_limits.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Flat TOML scenario file; missing keys take the reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Population preset: desk (N=2000) or paper (N=10000).
    #[arg(long)]
    preset: Option<Preset>,
    /// Write per-user beliefs for every step.
    #[arg(long)]
    dump_beliefs: bool,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => harness::load_config(path, self.preset)
                .with_context(|| format!("loading {}", path.display()))?,
            None => ScenarioConfig::defaults(self.preset.unwrap_or_default()),
        };
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }

    fn exec(&self) -> Exec {
        if self.threads > 0 && !betis::exec::init_thread_pool(self.threads) {
            log::warn!("could not configure a pool with {} threads", self.threads);
        }
        if self.threads == 1 {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }

    fn output(&self, export_stream: bool) -> OutputOptions {
        OutputOptions {
            dump_beliefs: self.dump_beliefs,
            export_stream,
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            let dirs = harness::simulate_and_export(&cfg, common.exec())?;
            for dir in dirs {
                println!("{}", dir.display());
            }
        }
        Command::Filter { common, input } => {
            let cfg = common.load()?;
            let record = harness::replay(&cfg, &input, common.exec(), common.output(false))
                .with_context(|| format!("replaying {}", input.display()))?;
            println!("{}", serde_json::to_string_pretty(&record.summary())?);
        }
        Command::Run { common, export_stream } => {
            let cfg = common.load()?;
            let summary = harness::run_and_write(&cfg, common.exec(), common.output(export_stream))?;
            print_summary(&summary);
        }
        Command::Suite { name, common } => {
            if !harness::SUITE_NAMES.contains(&name.as_str()) {
                bail!("unknown suite `{name}`; expected one of {}", harness::SUITE_NAMES.join(", "));
            }
            let base = common.load()?;
            let exec = common.exec();
            let mut all = Vec::new();
            for cfg in harness::scenario_suite(&name, &base)? {
                log::info!("running {}", cfg.name);
                let summary = harness::run_and_write(&cfg, exec, common.output(false))?;
                print_summary(&summary);
                all.push(summary);
            }
            harness::io::write_summary(&base.output_dir.join(&name).join(harness::io::SUMMARY_FILE), &all)?;
        }
    }
    Ok(())
}

fn print_summary(summary: &harness::ScenarioSummary) {
    let fmt = |d: Option<harness::scenario::Dispersion>| {
        d.map_or_else(|| "n/a".to_string(), |d| format!("{:.3} ± {:.3}", d.mean, d.std))
    };
    println!(
        "{} [{}]: |Î-I| {} | |Îa-Ia| {} | TP fraction {} | overestimate I {} Ia {}",
        summary.name,
        summary.config_hash,
        fmt(summary.mean_abs_error_i),
        fmt(summary.mean_abs_error_ia),
        fmt(summary.tp_fraction_i),
        fmt(summary.overestimate_fraction_i),
        fmt(summary.overestimate_fraction_ia),
    );
}

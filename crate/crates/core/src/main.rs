use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use goldilocks::harness::{
    baseline_config, emit_report, normalized_compare, read_csv, run_experiment_to, run_with_source, summarize,
    ExperimentConfig, MetricsWriter, Mode, RemoteTeacher, RunContext,
};
use goldilocks::protocol::{serve, Client, ServerConfig};
use goldilocks::students::write_dataset;

/// Difficulty-aware curriculum for group-relative policy optimization on
/// synthetic students. Log level comes from GOLDILOCKS_LOG (default: warn).
#[derive(Parser, Debug)]
#[command(name = "goldilocks", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the training or validation set as JSON lines.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Which split to write.
        #[arg(long, value_enum, default_value_t = Split::Training)]
        split: Split,
    },
    /// Run one arm in-process and write its metrics CSV.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Arm to run.
        #[arg(long, value_enum, default_value_t = ArmArg::Goldilocks)]
        mode: ArmArg,
        /// Metrics CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Host the teacher on a TCP address.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        /// Address to bind, e.g. 127.0.0.1:7878 (port 0 picks a free one).
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Stop after this many clients have sent shutdown.
        #[arg(long, default_value_t = 1)]
        clients: usize,
        /// Write the final teacher checkpoint here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a student against a running teacher server.
    Client {
        #[command(flatten)]
        config: ConfigArgs,
        /// Server address.
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// Metrics CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        /// Write every frame sent and received to this file.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run both arms and align them at compute-normalized steps.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for goldilocks.csv, baseline.csv, aligned.csv and summary.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Final curriculum steps averaged in the summary.
        #[arg(long, default_value_t = 500)]
        window: usize,
    },
    /// Render CSVs and plots from two existing metrics files.
    Report {
        /// Curriculum arm metrics CSV.
        #[arg(long)]
        goldilocks: PathBuf,
        /// Baseline arm metrics CSV.
        #[arg(long)]
        baseline: PathBuf,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// EMA smoothing factor.
        #[arg(long, default_value_t = 0.9)]
        alpha: f64,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set teacher.epsilon=0.1 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Base seed for dataset, student, teacher and selection streams.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let mut cfg = ExperimentConfig::from_toml_str(&text, &[])?;
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        Ok(ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &self.overrides)?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Training,
    Validation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArmArg {
    Goldilocks,
    Baseline,
}

impl From<ArmArg> for Mode {
    fn from(a: ArmArg) -> Mode {
        match a {
            ArmArg::Goldilocks => Mode::Goldilocks,
            ArmArg::Baseline => Mode::Baseline,
        }
    }
}

/// Files created by a command; removed unless the command completes.
struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn track(&mut self, p: &Path) -> PathBuf {
        self.0.push(p.to_path_buf());
        p.to_path_buf()
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GOLDILOCKS_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut outputs = Outputs(Vec::new());
    let result = dispatch(cli.command, &mut outputs);
    if result.is_err() {
        for p in &outputs.0 {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn dispatch(cmd: Command, outputs: &mut Outputs) -> Result<()> {
    match cmd {
        Command::GenData { config, out, split } => {
            let cfg = config.load()?;
            let qs = match split {
                Split::Training => cfg.dataset.training()?,
                Split::Validation => cfg.dataset.validation()?,
            };
            write_dataset(&outputs.track(&out), &qs)?;
            println!("wrote {} questions to {}", qs.len(), out.display());
        }
        Command::Run { config, mode, out } => {
            let cfg = config.load()?;
            let mut sink = MetricsWriter::create(&outputs.track(&out))?;
            let run = run_experiment_to(&cfg, mode.into(), Some(&mut sink))?;
            println!("{:?}: {} steps written to {}", run.mode, run.records.len(), out.display());
        }
        Command::Serve { config, bind, clients, checkpoint } => {
            let cfg = config.load()?;
            let ctx = RunContext::new(&cfg)?;
            let handle = serve(ctx.teacher_service()?, bind.as_str(), ServerConfig { expected_clients: clients })?;
            println!("listening on {}", handle.local_addr());
            let summary = handle.wait()?;
            for s in &summary.sessions {
                println!(
                    "session {}: served {}, feedback {}, pending {:?}",
                    s.id, s.samples_served, s.feedback_received, s.pending
                );
            }
            if let Some(p) = checkpoint {
                summary.teacher.model.save(&outputs.track(&p))?;
            }
        }
        Command::Client { config, connect, out, timeout, transcript } => {
            let cfg = config.load()?;
            if !(timeout > 0.0) {
                bail!("--timeout must be positive");
            }
            let ctx = RunContext::new(&cfg)?;
            let mut client = Client::connect(connect.as_str(), Duration::from_secs_f64(timeout))?;
            if transcript.is_some() {
                client.record_transcript();
            }
            let mut student = ctx.student()?;
            let mut sink = MetricsWriter::create(&outputs.track(&out))?;
            let mut source = RemoteTeacher::new(client);
            let records = run_with_source(&ctx, &mut student, &mut source, Some(&mut sink))?;
            source.client.shutdown()?;
            if let Some(p) = transcript {
                let mut text = source.client.transcript().join("\n");
                text.push('\n');
                fs::write(outputs.track(&p), text)?;
            }
            println!("{} steps written to {}", records.len(), out.display());
        }
        Command::Compare { config, out_dir, window } => {
            let cfg = config.load()?;
            fs::create_dir_all(&out_dir)?;
            let g_path = outputs.track(&out_dir.join("goldilocks.csv"));
            let b_path = outputs.track(&out_dir.join("baseline.csv"));
            let gold = run_experiment_to(&cfg, Mode::Goldilocks, Some(&mut MetricsWriter::create(&g_path)?))?;
            let base =
                run_experiment_to(&baseline_config(&cfg), Mode::Baseline, Some(&mut MetricsWriter::create(&b_path)?))?;
            let aligned = normalized_compare(&gold.records, &base.records, cfg.compute_ratio)?;
            let summary = summarize(&gold.records, &base.records, &aligned, cfg.ema_alpha, window, 5)?;
            let mut w = csv::Writer::from_path(outputs.track(&out_dir.join("aligned.csv")))?;
            for row in &aligned {
                w.serialize(row)?;
            }
            w.flush()?;
            fs::write(
                outputs.track(&out_dir.join("summary.json")),
                serde_json::to_string_pretty(&summary)? + "\n",
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Report { goldilocks, baseline, out_dir, alpha } => {
            let g = read_csv(&goldilocks)?;
            let b = read_csv(&baseline)?;
            let files = emit_report(&g, &b, &out_dir, alpha)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    info!("done");
    Ok(())
}

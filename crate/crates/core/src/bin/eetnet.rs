//! Command-line front end. Every subcommand is a pipeline stage; flags
//! override the matching config keys.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eetnet::evaluation::EvalMode;
use eetnet::network::Head;
use eetnet::pipeline::{preset_list, Command, Pipeline, PipelineConfig};
use eetnet::Result;

#[derive(Parser)]
#[command(name = "eetnet", version, about = "Event-camera eye tracking pipeline")]
struct Cli {
    /// Pipeline config (TOML). Defaults are used when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// No progress lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// out_dir
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// data.events_dir
    #[arg(long, global = true)]
    events_dir: Option<PathBuf>,
    /// data.frames_per_user
    #[arg(long, global = true)]
    frames_per_user: Option<usize>,
    /// framing.window_us
    #[arg(long, global = true)]
    window_us: Option<u64>,
    /// framing.min_events
    #[arg(long, global = true)]
    min_events: Option<u32>,
    /// augment.enabled
    #[arg(long, global = true)]
    augment: Option<bool>,
    /// model.head (regression or classification)
    #[arg(long, global = true)]
    head: Option<String>,
    /// model.fc1
    #[arg(long, global = true)]
    fc1: Option<usize>,
    /// train.epochs
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// train.batch
    #[arg(long, global = true)]
    batch: Option<usize>,
    /// train.lr
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// deploy.preset
    #[arg(long, global = true)]
    preset: Option<String>,
    /// deploy.profile (built-in name or file path)
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize event streams and label tracks for every user.
    Synth,
    /// Accumulate frames and crop them to each user's ROI.
    Frame,
    /// Expand the training users eightfold with flips and shifts.
    Augment,
    /// Train the float network.
    Train,
    /// Quantization-aware fine-tuning for each configured preset.
    Qat,
    /// Lower QAT checkpoints to integer models.
    Quantize,
    /// Evaluate on the test users.
    Eval {
        /// float, float-fakequant or integer
        #[arg(long)]
        mode: Option<String>,
    },
    /// Plan activation memory for the deployment preset.
    Plan,
    /// Write the model description for the deployment preset.
    Export,
    /// Estimate latency and energy (a model, not a measurement).
    Estimate {
        /// Estimate a network with no layers: input load only.
        #[arg(long)]
        input_only: bool,
    },
    /// Run every stage in order.
    All,
    /// List preset names.
    Presets,
    /// Print the resolved config.
    Config,
}

fn resolve(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out_dir {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = &o.events_dir {
        cfg.data.events_dir = Some(v.clone());
    }
    if let Some(v) = o.frames_per_user {
        cfg.data.frames_per_user = v;
    }
    if let Some(v) = o.window_us {
        cfg.framing.window_us = v;
    }
    if let Some(v) = o.min_events {
        cfg.framing.min_events = v;
    }
    if let Some(v) = o.augment {
        cfg.augment.enabled = v;
    }
    if let Some(v) = &o.head {
        cfg.model.head = match v.as_str() {
            "regression" => Head::Regression,
            "classification" => Head::Classification,
            other => return Err(eetnet::Error::Config(format!("unknown head `{other}`"))),
        };
    }
    if let Some(v) = o.fc1 {
        cfg.model.fc1 = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = o.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = o.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = &o.preset {
        cfg.deploy.preset = v.clone();
    }
    if let Some(v) = &o.profile {
        cfg.deploy.profile = v.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    let command = match &cli.command {
        Cmd::Presets => {
            for name in preset_list(&cfg)? {
                println!("{name}");
            }
            return Ok(());
        }
        Cmd::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Cmd::Synth => Command::Synth,
        Cmd::Frame => Command::Frame,
        Cmd::Augment => Command::Augment,
        Cmd::Train => Command::Train,
        Cmd::Qat => Command::Qat,
        Cmd::Quantize => Command::Quantize,
        Cmd::Eval { .. } => Command::Eval,
        Cmd::Plan => Command::Plan,
        Cmd::Export => Command::Export,
        Cmd::Estimate { .. } => Command::Estimate,
        Cmd::All => Command::All,
    };
    let mut pipeline = Pipeline::new(cfg);
    pipeline.quiet = cli.quiet;
    if let Cmd::Eval { mode: Some(m) } = &cli.command {
        pipeline.eval_mode = Some(EvalMode::parse(m)?);
    }
    if let Cmd::Estimate { input_only } = cli.command {
        pipeline.estimate_input_only = input_only;
    }
    for path in pipeline.run(command)? {
        if !cli.quiet {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            eprintln!("error[{}]: {e}", class.as_str());
            ExitCode::from(class.exit_code() as u8)
        }
    }
}

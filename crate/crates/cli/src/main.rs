use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "nightcap", version, about = "Sleep-mask signal analysis")]
struct Cli {
    /// Overrides scenario seeds and seeds training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum HrModeArg {
    Full,
    NoPcaBest,
    NoPcaPressed,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Spindle,
    Kcomplex,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Zncc,
    Coherence,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic recording bundle with ground truth.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pack a recording bundle into a framed .pmk stream.
    Encode {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a .pmk stream into a bundle plus loss_report.json.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pulse rate from the three pressure patches.
    Hr {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: HrModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Breathing rate from the multiplexed patch channels.
    Resp {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seated baseline levels from an unloaded recording.
    Calibrate {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sleeping posture per 10 s block.
    Posture {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gross body movements.
    Movement {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Window features for one micro-event kind.
    Features {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Labels; defaults to events.csv in the bundle when present.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "EEG_L")]
        channel: String,
    },
    /// Balance and fit a forest on labelled features.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = nightcap::microevent::DEFAULT_TREES)]
        trees: usize,
        #[arg(long, default_value_t = nightcap::microevent::DEFAULT_K)]
        smote_k: usize,
        #[arg(long)]
        no_smote: bool,
    },
    /// Detect micro-events with a trained model.
    Detect {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "EEG_L")]
        channel: String,
    },
    /// Signal agreement against a reference recording, per 30 s epoch.
    Quality {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long, default_value = "EEG_L")]
        channel: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa between two hypnograms.
    Kappa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Confusion matrix and per-stage scores.
    Scores {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    match commands::run(cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

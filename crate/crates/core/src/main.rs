use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use earlock::commands::{
    cmd_calibrate, cmd_enroll, cmd_evaluate, cmd_features, cmd_generate, cmd_identify, cmd_verify, EvaluateOptions,
};
use earlock::config::RunConfig;
use earlock::evaluation::DEFAULT_TOP;
use earlock::pipeline::{Metric, Rule};
use earlock::synth::SynthConfig;
use earlock::Result;

#[derive(Parser)]
#[command(name = "earlock", version, about = "Ear identification from color-segmented slice regions")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Scoring {
    #[arg(long, default_value = "concat")]
    rule: Rule,
    #[arg(long, default_value = "euclid")]
    metric: Metric,
    /// Whole-image SIFT without color segmentation.
    #[arg(long)]
    no_segmentation: bool,
}

impl Scoring {
    fn rule(&self) -> Rule {
        if self.no_segmentation {
            Rule::Whole
        } else {
            self.rule
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Synthetic dataset parameters (TOML); flags below override it.
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        first_subject: Option<usize>,
    },
    /// Enrolls the reference image of every subject.
    Enroll {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        dump_slices: Option<PathBuf>,
    },
    /// Ranks the gallery for one probe image.
    Identify {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP)]
        top: usize,
        #[command(flatten)]
        scoring: Scoring,
    },
    /// Accepts or rejects a claimed identity; exits with 1 on reject.
    Verify {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        claim: String,
        #[arg(long)]
        store: PathBuf,
        #[command(flatten)]
        scoring: Scoring,
    },
    /// Scores every probe against the gallery and writes CSV reports.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        no_segmentation: bool,
    },
    /// Suggests psi and phi from a disjoint calibration dataset.
    Calibrate {
        #[arg(long)]
        dataset: PathBuf,
        /// Gallery to check disjointness against.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Prints whole-image SIFT features.
    Features {
        #[arg(long)]
        image: PathBuf,
    },
}

fn init_threads() {
    let Some(n) = std::env::var("EARLOCK_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) else {
        return;
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
        log::warn!("cannot size thread pool: {e}");
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Generate {
            out,
            synth,
            subjects,
            first_subject,
        } => {
            let mut cfg = match synth {
                Some(path) => SynthConfig::load(path)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            cfg.subjects = subjects.unwrap_or(cfg.subjects);
            cfg.first_subject = first_subject.unwrap_or(cfg.first_subject);
            let ids = cmd_generate(&out, &cfg)?;
            println!("wrote {} subjects to {}", ids.len(), out.display());
        }
        Command::Enroll {
            dataset,
            store,
            dump_slices,
        } => {
            let s = cmd_enroll(&dataset, &store, &config, dump_slices.as_deref())?;
            println!("enrolled {} subjects into {}", s.enrolled.len(), s.store.display());
        }
        Command::Identify {
            probe,
            store,
            top,
            scoring,
        } => {
            let ranking = cmd_identify(&probe, &store, &config, scoring.rule(), scoring.metric, top)?;
            println!("rank,probe_id,gallery_id,rule,metric,score");
            for (i, r) in ranking.iter().enumerate() {
                println!("{},{},{},{},{},{}", i + 1, r.probe_id, r.gallery_id, r.rule, r.metric, r.score);
            }
        }
        Command::Verify {
            probe,
            claim,
            store,
            scoring,
        } => {
            let v = cmd_verify(&probe, &claim, &store, &config, scoring.rule(), scoring.metric)?;
            println!("{} score={}", if v.accept { "accept" } else { "reject" }, v.score);
            if !v.accept {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Evaluate {
            dataset,
            store,
            out,
            plots,
            no_segmentation,
        } => {
            let options = EvaluateOptions { plots, no_segmentation };
            let summary = cmd_evaluate(&dataset, &store, &config, &out, options)?;
            print!("{}", earlock::evaluation::report_csv(&summary.report));
        }
        Command::Calibrate { dataset, store } => {
            let c = cmd_calibrate(&dataset, store.as_deref(), &config)?;
            println!(
                "# {} genuine, {} impostor pairs; equal error {:.4} (concat), {:.4} (fused)",
                c.genuine, c.impostor, c.psi.eer, c.phi.eer
            );
            println!("psi = {}", c.psi.threshold);
            println!("phi = {}", c.phi.threshold);
        }
        Command::Features { image } => print!("{}", cmd_features(&image, &config)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_threads();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

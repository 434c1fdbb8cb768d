use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use safe_cli::commands::{self, CliError, SelectConfig, SynthSource};
use safe_core::selection::Strategy;
use safe_core::RunConfig;

#[derive(Parser)]
#[command(name = "safe", version, about = "Root-cause clustering of DNN failures and unsafe-set selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Cluster,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    ThreeBlob,
}

#[derive(Subcommand)]
enum Command {
    /// Write a feature CSV from a directory of PGM images or an existing CSV.
    Extract {
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA, then DBSCAN with elbow eps and silhouette-tuned min_pts.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 256)]
        target_dim: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Inclusive min_pts range, LO..HI.
        #[arg(long, default_value = "3..20", value_parser = commands::parse_sweep)]
        sweep: safe_core::MinPtsSweep,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Variance reduction, explanatory clusters, coverage and reports.
    Analyze {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        rr_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the unsafe set from an improvement set and write a retraining manifest.
    Select {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        improvement: PathBuf,
        #[arg(long)]
        test_size: usize,
        #[arg(long)]
        test_acc: f64,
        #[arg(long, default_value_t = 0.3)]
        sf: f64,
        #[arg(long)]
        train_ids: Option<PathBuf>,
        #[arg(long)]
        balance_target: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "cluster")]
        strategy: StrategyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise A12 and Mann-Whitney U over accuracy lists.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with planted clusters.
    Synth {
        #[arg(long, value_enum, conflicts_with = "spec")]
        preset: Option<Preset>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Extract { images, features, out } => {
            let x = commands::extract(images.as_deref(), features.as_deref(), &out)?;
            eprintln!("wrote {} x {} features to {}", x.rows(), x.cols(), out.display());
        }
        Command::Cluster {
            features,
            target_dim,
            k,
            sweep,
            seed,
            out,
        } => {
            let config = RunConfig {
                target_dim,
                k_neighbors: k,
                minpts_sweep: sweep,
                seed,
                ..RunConfig::default()
            };
            let r = commands::cluster(&features, &config, &out)?;
            eprintln!(
                "{} clusters, {} noise points (eps {:.4}, min_pts {})",
                r.cluster_count, r.noise_count, r.epsilon, r.min_pts
            );
        }
        Command::Analyze {
            clusters,
            params,
            spec,
            rr_threshold,
            out,
        } => {
            let s = commands::analyze(&clusters, &params, &spec, rr_threshold, &out)?;
            eprintln!(
                "{}/{} explanatory, coverage {}/{}, inspection ratio {:.2}%",
                s.explanatory_count, s.cluster_count, s.coverage_count, s.coverage_total, s.inspection_ratio
            );
        }
        Command::Select {
            clusters,
            improvement,
            test_size,
            test_acc,
            sf,
            train_ids,
            balance_target,
            seed,
            strategy,
            out,
        } => {
            let cfg = SelectConfig {
                test_size,
                test_acc,
                sf,
                balance_target,
                seed,
                strategy: match strategy {
                    StrategyArg::Cluster => Strategy::Cluster,
                    StrategyArg::Random => Strategy::Random,
                },
            };
            let o = commands::select(&clusters, &improvement, train_ids.as_deref(), &cfg, &out)?;
            eprintln!(
                "budget {}, selected {}, manifest weight {}",
                o.budget,
                o.selected.len(),
                o.manifest.total_weight()
            );
        }
        Command::Compare { runs, out } => {
            let report = commands::compare(&runs, out.as_deref())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))?
            );
        }
        Command::Synth {
            preset,
            spec,
            dim,
            points,
            noise,
            seed,
            out,
        } => {
            let source = match (preset, &spec) {
                (_, Some(p)) => SynthSource::Spec(p),
                (Some(Preset::ThreeBlob), None) => SynthSource::ThreeBlob {
                    dim,
                    points,
                    noise_fraction: noise,
                },
                (None, None) => return Err(CliError::Usage("give --preset or --spec".into())),
            };
            let s = commands::synth(source, seed, &out)?;
            eprintln!("wrote synthetic dataset (seed {}) to {}", s.seed, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

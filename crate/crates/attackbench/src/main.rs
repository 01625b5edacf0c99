//! Command-line front end. Every subcommand is a thin wrapper over the
//! library: `train-zoo` builds models, `run` produces one record file,
//! `rank`/`merge` maintain a record store with its derived leaderboard, and
//! `curves` exports robustness curves as CSV.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use attackbench::attack::{preset, AttackConfig, Mode};
use attackbench::diffnet::io::{load_model, save_model};
use attackbench::diffnet::train::{accuracy, train, Architecture, TrainParams};
use attackbench::harness::dataset::{
    generate_synthetic, load_dataset, save_dataset, SyntheticKind,
};
use attackbench::harness::leaderboard::{
    build_leaderboard, merge_record, scan_records, write_leaderboard, Leaderboard,
    LEADERBOARD_FILE,
};
use attackbench::harness::record::{read_record, write_record};
use attackbench::harness::{benchmark_record, residual_warning};
use attackbench::metrics::{ensemble_best, epsilon_zero, robustness_curve, DistanceTable, Norm};
use attackbench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "attackbench",
    about = "Benchmark gradient-based adversarial attacks under a query budget",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a small zoo of models (plain and adversarially trained).
    TrainZoo {
        /// Dataset CSV path, or "blobs"/"moons" to synthesize one.
        #[arg(long, default_value = "blobs")]
        dataset: String,
        /// Directory for model files and the zoo manifest.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attack preset used to harden the adversarially trained model.
        #[arg(long, default_value = "FGSM")]
        adv_preset: String,
        /// Perturbation size for fixed-budget presets during training.
        #[arg(long, default_value_t = 0.1)]
        adv_epsilon: f64,
        /// Sample count for synthetic datasets.
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// Feature count for synthetic datasets (moons requires 2).
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
    },
    /// Benchmark one attack against one model and write a record file.
    Run {
        /// Attack preset name, or path to an attack config JSON file.
        #[arg(long)]
        attack: String,
        /// Model file produced by train-zoo.
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV file.
        #[arg(long)]
        dataset: PathBuf,
        /// Threat norm (0, 1, 2, inf); overrides the config's norm.
        #[arg(long)]
        norm: Option<String>,
        /// Query budget per sample (forward plus backward passes).
        #[arg(long, default_value_t = 2000)]
        budget: usize,
        /// Where to write the record JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every record in a directory and print the rankings.
    Rank {
        #[arg(long)]
        records_dir: PathBuf,
        /// Leaderboard output path (default: <records-dir>/leaderboard.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export robustness curves for one model and norm as CSV files.
    Curves {
        #[arg(long)]
        records_dir: PathBuf,
        /// Model id as stored in the records.
        #[arg(long)]
        model: String,
        /// Threat norm (0, 1, 2, inf).
        #[arg(long)]
        norm: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Add a record file to a store and refresh its leaderboard.
    Merge {
        /// Store directory (created if missing).
        #[arg(long)]
        store: PathBuf,
        /// Record JSON file to merge.
        #[arg(long)]
        record: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_)
        | Error::Format(_)
        | Error::Dimension(_)
        | Error::Init(_)
        | Error::Degenerate(_) => 3,
        Error::Io(_) => 4,
    }
}

fn configure_threads() -> Result<()> {
    match std::env::var("ATTACKBENCH_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "ATTACKBENCH_THREADS must be a positive integer, got {v:?}"
                ))
            })?;
            if n == 0 {
                return Err(Error::Config("ATTACKBENCH_THREADS must be at least 1".into()));
            }
            // A failure here means a pool already exists, which is fine.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(Error::Config(format!("ATTACKBENCH_THREADS: {e}"))),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::TrainZoo {
            dataset,
            out_dir,
            seed,
            adv_preset,
            adv_epsilon,
            samples,
            dim,
            epochs,
        } => cmd_train_zoo(
            &dataset,
            &out_dir,
            seed,
            &adv_preset,
            adv_epsilon,
            samples,
            dim,
            epochs,
        ),
        Command::Run {
            attack,
            model,
            dataset,
            norm,
            budget,
            out,
        } => cmd_run(&attack, &model, &dataset, norm.as_deref(), budget, &out),
        Command::Rank { records_dir, out } => cmd_rank(&records_dir, out.as_deref()),
        Command::Curves {
            records_dir,
            model,
            norm,
            out_dir,
        } => cmd_curves(&records_dir, &model, &norm, &out_dir),
        Command::Merge { store, record } => cmd_merge(&store, &record),
    }
}

#[derive(Serialize)]
struct ZooDataset {
    source: String,
    file: Option<String>,
    samples: usize,
    dim: usize,
    classes: usize,
}

#[derive(Serialize)]
struct ZooModel {
    id: String,
    file: String,
    hidden: Vec<usize>,
    adversarial: Option<String>,
    train_accuracy: f64,
}

#[derive(Serialize)]
struct ZooManifest {
    schema_version: u32,
    seed: u64,
    dataset: ZooDataset,
    models: Vec<ZooModel>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_zoo(
    dataset: &str,
    out_dir: &Path,
    seed: u64,
    adv_preset: &str,
    adv_epsilon: f64,
    samples: usize,
    dim: usize,
    epochs: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let (data, dataset_meta) = match dataset.parse::<SyntheticKind>() {
        Ok(kind) => {
            let data = generate_synthetic(kind, samples, dim, seed)?;
            let file = "dataset.csv";
            save_dataset(&out_dir.join(file), &data)?;
            let meta = ZooDataset {
                source: dataset.to_string(),
                file: Some(file.to_string()),
                samples: data.len(),
                dim: data.dim(),
                classes: data.num_classes(),
            };
            (data, meta)
        }
        Err(_) => {
            let data = load_dataset(Path::new(dataset))?;
            let meta = ZooDataset {
                source: dataset.to_string(),
                file: None,
                samples: data.len(),
                dim: data.dim(),
                classes: data.num_classes(),
            };
            (data, meta)
        }
    };

    let mut adv_cfg = preset(adv_preset)?;
    if adv_cfg.mode == Mode::FixedBudget {
        adv_cfg.epsilon = Some(adv_epsilon);
    }
    // Training-time attacks only need to roughen the decision boundary;
    // capping the steps keeps hardening affordable.
    adv_cfg.steps = adv_cfg.steps.min(10);

    let arch = Architecture {
        hidden: vec![16, 16],
    };
    let hp = TrainParams {
        epochs,
        ..TrainParams::default()
    };

    let mut models = Vec::new();
    for (id, adversarial, model_seed) in [
        ("plain", None, seed),
        ("adv", Some(&adv_cfg), seed.wrapping_add(1)),
    ] {
        let id = if adversarial.is_some() {
            format!("adv-{}", sanitize(&adv_preset.to_ascii_lowercase()))
        } else {
            id.to_string()
        };
        let model = train(&data, &arch, &hp, adversarial, model_seed)?;
        let acc = accuracy(&model, &data)?;
        let file = format!("{id}.abnet");
        save_model(&model, &out_dir.join(&file))?;
        println!("trained {id}: accuracy {acc:.4}, saved to {}", out_dir.join(&file).display());
        models.push(ZooModel {
            id,
            file,
            hidden: arch.hidden.clone(),
            adversarial: adversarial.map(|_| adv_preset.to_string()),
            train_accuracy: acc,
        });
    }

    let manifest = ZooManifest {
        schema_version: 1,
        seed,
        dataset: dataset_meta,
        models,
    };
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    std::fs::write(out_dir.join("zoo.json"), body)?;
    println!("wrote manifest {}", out_dir.join("zoo.json").display());
    Ok(())
}

fn resolve_attack(spec: &str) -> Result<(String, AttackConfig)> {
    let path = Path::new(spec);
    if path.is_file() {
        let body = std::fs::read_to_string(path)?;
        let cfg: AttackConfig = serde_json::from_str(&body)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        Ok((id, cfg))
    } else {
        preset(spec).map(|cfg| (spec.to_string(), cfg))
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string()
}

fn cmd_run(
    attack: &str,
    model_path: &Path,
    dataset: &Path,
    norm: Option<&str>,
    budget: usize,
    out: &Path,
) -> Result<()> {
    let (attack_id, mut cfg) = resolve_attack(attack)?;
    if let Some(text) = norm {
        cfg.p = Norm::parse(text)?;
    }
    let model = load_model(model_path)?;
    let data = load_dataset(dataset)?;
    let record = benchmark_record(&attack_id, &file_stem(model_path), &cfg, &model, &data, budget)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_record(out, &record)?;

    let total = record.records.len();
    let found = record
        .records
        .values()
        .filter(|r| r.distance.is_some())
        .count();
    let errored = record
        .records
        .values()
        .filter(|r| r.error.is_some())
        .count();
    println!(
        "{attack_id} vs {}: adversarial on {found}/{total} samples \
         (mean forwards {:.1}, mean backwards {:.1})",
        record.model,
        record.mean_forwards(),
        record.mean_backwards(),
    );
    if errored > 0 {
        eprintln!("warning: {errored} samples hit component errors; see the error fields in the record");
    }
    if let Some(msg) = residual_warning(&record) {
        eprintln!("warning: {msg}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_rank(records_dir: &Path, out: Option<&Path>) -> Result<()> {
    let records = scan_records(records_dir)?;
    if records.is_empty() {
        return Err(Error::Data(format!(
            "no record files found in {}",
            records_dir.display()
        )));
    }
    let records: Vec<_> = records.into_iter().map(|(_, r)| r).collect();
    let board = build_leaderboard(&records)?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| records_dir.join(LEADERBOARD_FILE));
    write_leaderboard(&out_path, &board)?;
    print_rankings(&board);
    println!("wrote {}", out_path.display());
    Ok(())
}

fn print_rankings(board: &Leaderboard) {
    for ranking in &board.rankings {
        println!("norm {}:", ranking.norm);
        println!(
            "  {:<16} {:>8} {:>12} {:>12} {:>14}",
            "attack", "GO", "mean #F", "mean #B", "mean time [s]"
        );
        for e in &ranking.entries {
            println!(
                "  {:<16} {:>8.4} {:>12.1} {:>12.1} {:>14.6}",
                e.attack, e.go, e.mean_forwards, e.mean_backwards, e.mean_time_s
            );
        }
    }
}

fn write_curve(path: &Path, table: &DistanceTable, eps0: f64) -> Result<()> {
    let curve = robustness_curve(table, eps0)?;
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["epsilon", "robust_accuracy"])?;
    for point in curve {
        writer.write_record([point.epsilon.to_string(), point.robust_accuracy.to_string()])?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

fn cmd_curves(records_dir: &Path, model: &str, norm: &str, out_dir: &Path) -> Result<()> {
    let norm = Norm::parse(norm)?;
    let records = scan_records(records_dir)?;
    let matching: Vec<_> = records
        .into_iter()
        .map(|(_, r)| r)
        .filter(|r| r.model == model && r.norm == norm)
        .collect();
    if matching.is_empty() {
        return Err(Error::Data(format!(
            "no records for model {model:?} under norm {norm} in {}",
            records_dir.display()
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let tables: Vec<DistanceTable> = matching
        .iter()
        .map(|r| r.distance_table())
        .collect::<Result<_>>()?;
    let refs: Vec<&DistanceTable> = tables.iter().collect();
    let ensemble = ensemble_best(&refs)?;
    let eps0 = epsilon_zero(&ensemble)?;
    for (record, table) in matching.iter().zip(&tables) {
        let path = out_dir.join(format!("{}.csv", sanitize(&record.attack)));
        write_curve(&path, table, eps0)?;
        println!("wrote {}", path.display());
    }
    let ensemble_path = out_dir.join("ensemble.csv");
    write_curve(&ensemble_path, &ensemble, eps0)?;
    println!("wrote {}", ensemble_path.display());
    Ok(())
}

fn cmd_merge(store: &Path, record_path: &Path) -> Result<()> {
    let record = read_record(record_path)?;
    let board = merge_record(store, &record)?;
    println!(
        "merged {:?} ({}, norm {}) into {}; leaderboard now covers {} group(s)",
        record.attack,
        record.model,
        record.norm,
        store.display(),
        board.groups.len()
    );
    Ok(())
}

fn sanitize(part: &str) -> String {
    part.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

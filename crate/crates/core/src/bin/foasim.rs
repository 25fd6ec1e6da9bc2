use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use foasim::dataio::config::Config;
use foasim::dataio::ir_archive::generate_archive;
use foasim::dataio::manifest::{read_acoustic_labels, read_noise_dir};
use foasim::dataio::{read_corpus, Manifest};
use foasim::geometry::Rt60Band;
use foasim::pipeline::{self, JobPlan, Resources};
use foasim::{verify, Error, Result};

/// First-order Ambisonics training data generation.
#[derive(Parser)]
#[command(name = "foasim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an archive of simulated rooms and FOA impulse responses.
    GenIrs {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        rt60_min: f64,
        #[arg(long, default_value_t = 1.2)]
        rt60_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spatialise a mono corpus (and mix, when a noise directory is given).
    Spatialise {
        /// JSON Lines listing or a directory of mono WAVs.
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        acoustic_labels: Option<PathBuf>,
        #[arg(long)]
        p_r: Option<f64>,
        #[arg(long)]
        p_m: Option<f64>,
        #[arg(long)]
        p_n: Option<f64>,
        /// IR archive directory; selects the archive IR source.
        #[arg(long)]
        ir_archive: Option<PathBuf>,
    },
    /// Apply the mixing stage to a spatialised dataset.
    Mix {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild label files from a manifest's provenance.
    Labelgen {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        acoustic_labels: Option<PathBuf>,
    },
    /// Check a dataset against its manifest, or run the numerical self-tests.
    Verify {
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarise a manifest.
    Stats { manifest: PathBuf },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    noise_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn resources(config: &Config, noise_dir: Option<&Path>, acoustic: Option<&Path>) -> Result<Resources> {
    let mut res = Resources::from_config(config)?;
    if let Some(dir) = noise_dir {
        res.noise = read_noise_dir(dir)?;
    }
    if let Some(path) = acoustic {
        res.acoustic = Some(read_acoustic_labels(path)?);
    }
    Ok(res)
}

fn run(command: Command) -> Result<(Value, bool)> {
    match command {
        Command::GenIrs {
            count,
            rt60_min,
            rt60_max,
            seed,
            out,
        } => {
            let mut cfg = Config::default().ir;
            cfg.rt60_band = Rt60Band {
                min_s: rt60_min,
                max_s: rt60_max,
            };
            let records = generate_archive(&out, count, seed, &cfg)?;
            Ok((json!({"command": "gen-irs", "count": records.len(), "seed": seed, "out": out}), true))
        }
        Command::Spatialise {
            corpus,
            common,
            seed,
            acoustic_labels,
            p_r,
            p_m,
            p_n,
            ir_archive,
        } => {
            let mut config = load_config(common.config.as_deref())?;
            if let Some(s) = seed {
                config.seed = s;
            }
            for (slot, value) in [(&mut config.augment.p_r, p_r), (&mut config.augment.p_m, p_m), (&mut config.augment.p_n, p_n)] {
                if let Some(v) = value {
                    *slot = v;
                }
            }
            if let Some(dir) = ir_archive {
                config.ir.source = foasim::dataio::config::IrSourceKind::Archive;
                config.ir.archive_dir = Some(dir);
            }
            config.validate()?;
            let res = resources(&config, common.noise_dir.as_deref(), acoustic_labels.as_deref())?;
            let plan = JobPlan::new(read_corpus(&corpus)?, config, common.workers)?;
            let summary = pipeline::run(&plan, &res, &common.out)?;
            Ok((serde_json::to_value(summary).expect("summary serialises"), true))
        }
        Command::Mix { manifest, common } => {
            let config = match common.config.as_deref() {
                Some(p) => Config::load(p)?,
                None => Manifest::read(&manifest)?.header.config,
            };
            let mut config = config;
            if config.augment.p_m == 0.0 {
                config.augment.p_m = Config::default().augment.p_m;
            }
            let res = resources(&config, common.noise_dir.as_deref(), None)?;
            let summary = pipeline::run_mix(&manifest, &config, &res, &common.out, common.workers)?;
            Ok((serde_json::to_value(summary).expect("summary serialises"), true))
        }
        Command::Labelgen {
            manifest,
            out,
            acoustic_labels,
        } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).to_path_buf());
            let acoustic = acoustic_labels.as_deref().map(read_acoustic_labels).transpose()?;
            let written = pipeline::labelgen(&manifest, &out, acoustic.as_ref())?;
            Ok((json!({"command": "labelgen", "written": written, "out": out}), true))
        }
        Command::Verify { manifest, seed } => {
            let checks = match &manifest {
                Some(m) => verify::check_dataset(m),
                None => verify::self_tests(seed),
            };
            for c in &checks {
                log::info!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let passed = checks.iter().all(|c| c.passed);
            Ok((json!({"command": "verify", "passed": passed, "checks": checks}), passed))
        }
        Command::Stats { manifest } => Ok((stats(&Manifest::read(&manifest)?), true)),
    }
}

fn stats(m: &Manifest) -> Value {
    let mut branches: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mixes: BTreeMap<String, usize> = BTreeMap::new();
    let mut samples = 0usize;
    for item in m.items.iter().filter(|i| i.is_ok()) {
        if let Some(p) = &item.spatialisation {
            *branches.entry(p.branch()).or_default() += 1;
        }
        let kind = item
            .mixing
            .as_ref()
            .map(|r| serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
            .unwrap_or_else(|| "none".into());
        *mixes.entry(kind).or_default() += 1;
        samples += item.num_samples.unwrap_or(0);
    }
    json!({
        "stage": m.header.stage,
        "master_seed": m.header.master_seed,
        "items": m.items.len(),
        "failed": m.items.iter().filter(|i| !i.is_ok()).count(),
        "branches": branches,
        "mixing": mixes,
        "audio_seconds": samples as f64 / foasim::SAMPLE_RATE_HZ as f64,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((summary, ok)) => {
            println!("{summary}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", json!({"error": error_kind(&e), "message": e.to_string()}));
            ExitCode::from(2)
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    e.kind()
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hullrom::pipeline::{
    singular_values_csv, write_file, write_optimization, Pipeline, PipelineConfig, SensitivityAxis, SnapshotDatabase,
};
use hullrom::rom::test_error;

/// Surrogate-based hull shape optimization.
#[derive(Parser, Debug)]
#[command(name = "hullrom", version, about)]
struct Cli {
    /// Configuration file (`key=value` lines). Defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw the parameter samples and write `samples.csv`.
    Sample,
    /// Run the full-order chain for every sample and save the database.
    BuildDb,
    /// Train the surrogate and report its test error.
    Train,
    /// Evaluate the surrogate objective at one parameter vector.
    Evaluate {
        #[arg(long, num_args = 1..=6, allow_negative_numbers = true, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
    },
    /// Test error against mode count or training-sample count.
    Sensitivity {
        #[arg(long, value_parser = parse_axis)]
        axis: SensitivityAxis,
    },
    /// Run the GA study on the surrogate and validate the optimum.
    Optimize {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Full-order resistance at one parameter vector against the baseline.
    Validate {
        #[arg(long, num_args = 1..=6, allow_negative_numbers = true, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
    },
    /// Build everything from scratch and write every report file.
    Report,
}

fn parse_axis(s: &str) -> Result<SensitivityAxis, String> {
    s.parse()
}

fn check_mu(mu: &[f64]) -> Result<()> {
    if mu.len() != 6 {
        bail!("--mu takes 6 values, got {}", mu.len());
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    Ok(config)
}

fn load_db(p: &Pipeline, out: &Path) -> Result<SnapshotDatabase> {
    let dir = out.join("db");
    if !dir.join("manifest.txt").is_file() {
        bail!("no database at {}; run `hullrom build-db` first", dir.display());
    }
    Ok(p.load_database(&dir)?)
}

fn mu_line(mu: &[f64]) -> String {
    mu.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = load_config(&cli)?;
    let out = config.output.clone();
    let p = Pipeline::new(config)?;

    match cli.command {
        Command::Sample => {
            let samples = p.sample_parameters();
            let mut csv = String::from("mu0,mu1,mu2,mu3,mu4,mu5\n");
            for mu in &samples {
                csv.push_str(&mu_line(mu));
                csv.push('\n');
            }
            write_file(&out.join("samples.csv"), &csv)?;
            println!("wrote {} samples to {}", samples.len(), out.join("samples.csv").display());
        }
        Command::BuildDb => {
            let outcome = p.build_database()?;
            for (k, msg) in &outcome.failures {
                eprintln!("sample {k} skipped: {msg}");
            }
            let dir = out.join("db");
            outcome.database.save(&dir)?;
            println!("saved {} samples to {}", outcome.database.len(), dir.display());
        }
        Command::Train => {
            let db = load_db(&p, &out)?;
            let set = p.training_set(&db)?;
            let rom = p.train(&set)?;
            let ratios = rom.basis().spectrum_ratios().map_err(hullrom::rom::RomError::from)?;
            write_file(&out.join("singular_values.csv"), &singular_values_csv(&ratios))?;
            println!("kind={}", rom.kind());
            println!("modes={}", rom.n_modes());
            println!("train={} test={}", set.train_indices().len(), set.test_indices().len());
            if !set.test_indices().is_empty() {
                println!("mean_rel_error={:?}", test_error(&rom, &set)?);
            }
        }
        Command::Evaluate { mu } => {
            check_mu(&mu)?;
            let db = load_db(&p, &out)?;
            let rom = p.train(&p.training_set(&db)?)?;
            let objective = p.objective(&rom)?;
            let e = objective.evaluate(&mu)?;
            let base = objective.penalized(&vec![0.0; mu.len()])?;
            println!("mu={}", mu_line(&mu));
            println!("resistance={}", e.fitness);
            println!("baseline_resistance={base}");
            println!("volume_ratio={:?}", e.volume_ratio);
            let pred = rom.evaluate(&mu)?;
            let mut csv = String::from("face,value,variance\n");
            for (i, v) in pred.field.iter().enumerate() {
                let var = pred.variance.as_ref().map_or(String::new(), |s| format!("{:?}", s[i]));
                csv.push_str(&format!("{i},{v:?},{var}\n"));
            }
            write_file(&out.join("field.csv"), &csv)?;
        }
        Command::Sensitivity { axis } => {
            let db = load_db(&p, &out)?;
            let table = p.sensitivity(&p.training_set(&db)?, axis)?;
            let name = match axis {
                SensitivityAxis::Modes => "sensitivity_modes.csv",
                SensitivityAxis::Snapshots => "sensitivity_snapshots.csv",
            };
            write_file(&out.join(name), &table.to_csv())?;
            print!("{}", table.to_csv());
        }
        Command::Optimize { runs } => {
            let mut db = load_db(&p, &out)?;
            let runs = runs.unwrap_or(p.config().runs);
            let report = p.run_optimization(&mut db, runs, Some(&out.join("db")))?;
            write_optimization(&out, &report)?;
            print!("{}", report.runs_csv());
            println!("optimum={}", mu_line(&report.optimum));
            println!("rom_delta_pct={:?}", report.rom_delta_pct);
            println!("validated_delta_pct={:?}", report.validation.delta_pct);
            println!("volume_ratio={:?}", report.validation.volume_ratio);
        }
        Command::Validate { mu } => {
            check_mu(&mu)?;
            let (v, _) = p.validate_mu(&mu)?;
            println!("mu={}", mu_line(&mu));
            println!("baseline_resistance={:?}", v.baseline_resistance);
            println!("resistance={:?}", v.resistance);
            println!("delta_pct={:?}", v.delta_pct);
            println!("volume_ratio={:?}", v.volume_ratio);
            if v.volume_ratio < p.config().volume_floor {
                println!("infeasible: volume below {} of the baseline", p.config().volume_floor);
            }
        }
        Command::Report => {
            let report = p.full_report(&out)?;
            println!("reports written to {}", out.display());
            println!("rom_delta_pct={:?}", report.rom_delta_pct);
            println!("validated_delta_pct={:?}", report.validation.delta_pct);
        }
    }
    Ok(())
}

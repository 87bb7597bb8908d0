//! End-to-end orchestration: sampling, snapshot database, training,
//! optimization, full-order validation and report files.
//!
//! Seeds fan out from the master seed `s`: sample `k` runs the FOM with
//! `s + k`, GA run `r` uses `s + 1_000_000 + r`, the train/test split uses
//! `s + 2_000_000` and validation runs use `s + 3_000_000`.

pub mod config;
pub mod database;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{MeshSource, PipelineConfig};
pub use database::{Manifest, SampleRecord, SnapshotDatabase};

use crate::dmd::{fit_dmd, project_field, Complex64, DmdError, DmdModel, DmdRank};
use crate::ffd::{FfdError, FfdLattice, ParameterBinding};
use crate::ga::{evolve, history_csv, Fitness, GaError, GenerationStats};
use crate::mesh::primitives::synthetic_hull;
use crate::mesh::{load_mesh, MeshError, MeshFormat, SurfaceMesh};
use crate::objective::{resistance_integral, ObjectiveConfig, ObjectiveError, ShapeObjective, ShapeSpace};
use crate::rom::{sensitivity_modes, sensitivity_snapshots, test_error, train_rom, ErrorTable, RegressorKind, RomError, RomModel, TrainingSet};
use crate::synthfom::{simulate, FomError, SnapshotSeries};

pub const GA_SEED_OFFSET: u64 = 1_000_000;
pub const SPLIT_SEED_OFFSET: u64 = 2_000_000;
pub const VALIDATION_SEED_OFFSET: u64 = 3_000_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("database: {0}")]
    Database(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ffd(#[from] FfdError),
    #[error(transparent)]
    Fom(#[from] FomError),
    #[error(transparent)]
    Dmd(#[from] DmdError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error("{failed} of {total} samples failed; database is invalid")]
    TooManyFailures { failed: usize, total: usize },
}

type Result<T> = std::result::Result<T, PipelineError>;

/// `count` uniform draws over the box, with near-duplicates (within 1e-12
/// in every coordinate) dropped.
pub fn sample_parameters(count: usize, bounds: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut dropped = 0;
    for _ in 0..count {
        let mu: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { (lo + (hi - lo) * rng.random::<f64>()).clamp(lo, hi) })
            .collect();
        if out.iter().any(|m| m.iter().zip(&mu).all(|(a, b)| (a - b).abs() <= 1e-12)) {
            dropped += 1;
        } else {
            out.push(mu);
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} duplicate parameter samples dropped");
    }
    out
}

/// One full-order run and its regime extraction.
#[derive(Debug, Clone)]
pub struct FomRun {
    pub mesh: SurfaceMesh,
    pub series: SnapshotSeries,
    pub dmd: DmdModel,
    /// Regime field on `mesh`.
    pub regime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub mu: Vec<f64>,
    pub baseline_resistance: f64,
    pub resistance: f64,
    pub delta_pct: f64,
    pub volume_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub best: Fitness,
    pub genome: Vec<f64>,
    pub volume_ratio: f64,
    pub evaluations: usize,
    #[serde(skip)]
    pub history: Vec<GenerationStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnrichmentRound {
    pub round: usize,
    pub mu: Vec<f64>,
    pub samples_after: usize,
    pub rom_resistance_after: Fitness,
    pub validated_resistance: f64,
    pub test_error_after: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationReport {
    pub config_sha256: String,
    pub seed: u64,
    pub rom_kind: String,
    pub rom_modes: usize,
    pub rom_test_error: f64,
    pub baseline_rom_resistance: f64,
    pub runs: Vec<RunSummary>,
    pub best_run: usize,
    pub optimum: Vec<f64>,
    pub rom_resistance: f64,
    pub rom_delta_pct: f64,
    pub validation: Validation,
    pub fom_calls_during_search: usize,
    pub enrichment: Vec<EnrichmentRound>,
}

impl OptimizationReport {
    pub const RUNS_HEADER: &'static str = "run,best_resistance_pct,volume_pct";

    /// Best fitness and volume of each run as percentage changes from the
    /// undeformed hull.
    pub fn runs_csv(&self) -> String {
        let mut s = format!("{}\n", Self::RUNS_HEADER);
        for r in &self.runs {
            let pct = match r.best {
                Fitness::Feasible(v) => format!("{:?}", 100.0 * (v / self.baseline_rom_resistance - 1.0)),
                Fitness::Infeasible => "inf".into(),
            };
            s.push_str(&format!("{},{},{:?}\n", r.run, pct, 100.0 * (r.volume_ratio - 1.0)));
        }
        s
    }
}

pub fn eigenvalues_csv(eigenvalues: &[Complex64]) -> String {
    let mut s = String::from("re,im\n");
    for l in eigenvalues {
        s.push_str(&format!("{:?},{:?}\n", l.re, l.im));
    }
    s
}

pub fn singular_values_csv(ratios: &[f64]) -> String {
    let mut s = String::from("mode,sigma_ratio\n");
    for (i, r) in ratios.iter().enumerate() {
        s.push_str(&format!("{},{:?}\n", i + 1, r));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityAxis {
    Modes,
    Snapshots,
}

impl std::str::FromStr for SensitivityAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "modes" => Ok(Self::Modes),
            "snapshots" => Ok(Self::Snapshots),
            other => Err(format!("unknown sensitivity axis `{other}`")),
        }
    }
}

/// Result of [`Pipeline::build_database`].
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub database: SnapshotDatabase,
    /// Sample index and error message of each skipped sample.
    pub failures: Vec<(usize, String)>,
}

pub struct Pipeline {
    config: PipelineConfig,
    space: ShapeSpace,
    baseline_volume: f64,
    mesh_label: String,
    fom_calls: AtomicUsize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let (base, mesh_label) = match &config.mesh {
            MeshSource::Synthetic(p) => (synthetic_hull(p)?, "synthetic".to_string()),
            MeshSource::File(path) => (load_mesh(path, MeshFormat::from_path(path))?, path.display().to_string()),
        };
        base.ensure_closed()?;
        let mut lattice = FfdLattice::new(config.lattice_origin, config.lattice_extent, config.lattice_degrees)?;
        lattice.fix_boundary_layers(config.fixed_layers);
        if let Some(m) = config.symmetry_layer {
            if m > config.lattice_degrees[1] {
                return Err(PipelineError::Config(format!("symmetry layer {m} outside the lattice")));
            }
            lattice.fix_layer(1, m);
        }
        let binding = ParameterBinding::layered(&lattice)?;
        if binding.parameter_count() != 6 {
            return Err(PipelineError::Config(format!(
                "lattice gives {} parameters; the pipeline expects 6",
                binding.parameter_count()
            )));
        }
        let space = ShapeSpace {
            base,
            lattice,
            binding,
            bounds: config.bounds,
            waterline_z: config.waterline_z,
        };
        let baseline_volume = space.baseline_volume()?;
        if !(baseline_volume > 0.0) {
            return Err(PipelineError::Config("reference hull has no immersed volume".into()));
        }
        Ok(Self {
            config,
            space,
            baseline_volume,
            mesh_label,
            fom_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn space(&self) -> &ShapeSpace {
        &self.space
    }

    pub fn baseline_volume(&self) -> f64 {
        self.baseline_volume
    }

    /// Full-order simulations run so far.
    pub fn fom_calls(&self) -> usize {
        self.fom_calls.load(Ordering::SeqCst)
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.config.bounds; self.space.dimension()]
    }

    pub fn sample_parameters(&self) -> Vec<Vec<f64>> {
        sample_parameters(self.config.samples, &self.bounds(), self.config.seed)
    }

    /// Deform, simulate, fit DMD and extract the regime field.
    pub fn run_fom(&self, mu: &[f64], fom_seed: u64) -> Result<FomRun> {
        self.fom_calls.fetch_add(1, Ordering::SeqCst);
        let mesh = self.space.deform(mu)?;
        let fom = crate::synthfom::FomConfig {
            seed: fom_seed,
            ..self.config.fom.clone()
        };
        let series = simulate(&mesh, self.config.waterline_z, &self.config.field, &fom)?;
        let dmd = fit_dmd(&series, DmdRank::Fixed(self.config.dmd_rank))?;
        let regime = dmd.regime_state(self.config.dmd_epsilon)?.as_slice().to_vec();
        Ok(FomRun {
            mesh,
            series,
            dmd,
            regime,
        })
    }

    /// Regime field of a run carried back to the reference mesh.
    pub fn reference_field(&self, run: &FomRun) -> Vec<f64> {
        project_field(&run.regime, &run.mesh, &self.space.base)
    }

    fn manifest(&self, samples: usize) -> Manifest {
        Manifest {
            version: database::FORMAT_VERSION,
            samples,
            faces: self.space.base.face_count(),
            seed: self.config.seed,
            config_sha256: self.config.database_hash(),
            mesh: self.mesh_label.clone(),
            t0: self.config.fom.t0,
            dt: self.config.fom.dt,
            snapshots: self.config.fom.snapshot_count,
        }
    }

    /// Runs every sampled parameter vector through the full-order chain.
    /// Failed samples are skipped; more than 10% failures is an error.
    pub fn build_database(&self) -> Result<BuildOutcome> {
        let mus = self.sample_parameters();
        self.build_database_from(&mus)
    }

    pub fn build_database_from(&self, mus: &[Vec<f64>]) -> Result<BuildOutcome> {
        let results: Vec<Result<SampleRecord>> = mus
            .par_iter()
            .enumerate()
            .map(|(k, mu)| {
                let run = self.run_fom(mu, self.config.seed.wrapping_add(k as u64))?;
                Ok(SampleRecord {
                    mu: mu.clone(),
                    field: self.reference_field(&run),
                })
            })
            .collect();
        let mut records = Vec::with_capacity(mus.len());
        let mut failures = Vec::new();
        for (k, r) in results.into_iter().enumerate() {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    log::warn!("sample {k} failed: {e}");
                    failures.push((k, e.to_string()));
                }
            }
        }
        if failures.len() * 10 > mus.len() {
            return Err(PipelineError::TooManyFailures {
                failed: failures.len(),
                total: mus.len(),
            });
        }
        Ok(BuildOutcome {
            database: SnapshotDatabase {
                manifest: self.manifest(records.len()),
                records,
            },
            failures,
        })
    }

    /// Loads a database and checks it against the current configuration.
    pub fn load_database(&self, dir: &Path) -> Result<SnapshotDatabase> {
        let db = SnapshotDatabase::load(dir)?;
        db.check_hash(&self.config.database_hash())?;
        if db.manifest.faces != self.space.base.face_count() {
            return Err(PipelineError::Database(format!(
                "database fields have {} faces, reference mesh has {}",
                db.manifest.faces,
                self.space.base.face_count()
            )));
        }
        Ok(db)
    }

    /// Seeded split over the originally sampled records; records appended
    /// later by enrichment always train.
    pub fn training_set(&self, db: &SnapshotDatabase) -> Result<TrainingSet> {
        if db.is_empty() {
            return Err(PipelineError::Database("database is empty".into()));
        }
        let inputs: Vec<Vec<f64>> = db.records.iter().map(|r| r.mu.clone()).collect();
        let cols: Vec<DVector<f64>> = db.records.iter().map(|r| DVector::from_column_slice(&r.field)).collect();
        let outputs = DMatrix::from_columns(&cols);
        let original = db.len().min(self.config.samples).max(1);
        let mut order: Vec<usize> = (0..original).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(SPLIT_SEED_OFFSET)));
        }
        let cut = ((self.config.train_fraction * original as f64).round() as usize).clamp(1, original);
        let test = order.split_off(cut);
        order.extend(original..db.len());
        Ok(TrainingSet::new(inputs, outputs, order, test)?.with_bounds(self.bounds()))
    }

    pub fn train(&self, set: &TrainingSet) -> Result<RomModel> {
        let available = set.train_indices().len();
        let modes = self.config.rom_modes.min(available);
        if modes < self.config.rom_modes {
            log::warn!("only {available} training samples; using {modes} POD modes");
        }
        Ok(train_rom(set, modes, self.config.rom_kind)?)
    }

    pub fn objective_config(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            volume_fraction_floor: self.config.volume_floor,
            baseline_volume: self.baseline_volume,
            waterline_z: self.config.waterline_z,
        }
    }

    pub fn objective<'a>(&'a self, rom: &'a RomModel) -> Result<ShapeObjective<'a, RomModel>> {
        Ok(ShapeObjective::new(&self.space, rom, self.objective_config())?)
    }

    /// Resistance of a full-order run, integrated on its own mesh.
    pub fn fom_resistance(&self, run: &FomRun) -> Result<f64> {
        Ok(resistance_integral(&run.regime, &run.mesh, self.config.waterline_z)?)
    }

    /// Full-order resistance at `mu` against the undeformed hull, with the
    /// same FOM seed for both.
    pub fn validate_mu(&self, mu: &[f64]) -> Result<(Validation, FomRun)> {
        let seed = self.config.seed.wrapping_add(VALIDATION_SEED_OFFSET);
        let zero = vec![0.0; mu.len()];
        let base = self.run_fom(&zero, seed)?;
        let run = self.run_fom(mu, seed)?;
        let baseline_resistance = self.fom_resistance(&base)?;
        let resistance = self.fom_resistance(&run)?;
        let volume_ratio = crate::mesh::immersed_volume(&run.mesh, self.config.waterline_z)? / self.baseline_volume;
        Ok((
            Validation {
                mu: mu.to_vec(),
                baseline_resistance,
                resistance,
                delta_pct: 100.0 * (resistance / baseline_resistance - 1.0),
                volume_ratio,
            },
            run,
        ))
    }

    /// DMD spectrum of the undeformed hull's run with the master seed.
    pub fn baseline_eigenvalues(&self) -> Result<Vec<Complex64>> {
        let run = self.run_fom(&vec![0.0; self.space.dimension()], self.config.seed)?;
        Ok(run.dmd.eigenvalues().to_vec())
    }

    pub fn sensitivity(&self, set: &TrainingSet, axis: SensitivityAxis) -> Result<ErrorTable> {
        let n_train = set.train_indices().len();
        Ok(match axis {
            SensitivityAxis::Modes => {
                let counts: Vec<usize> = self.config.sensitivity_modes.iter().copied().filter(|&c| c <= n_train).collect();
                sensitivity_modes(set, &counts, &RegressorKind::ALL)?
            }
            SensitivityAxis::Snapshots => {
                let counts: Vec<usize> = self.config.sensitivity_snapshots.iter().copied().filter(|&c| c <= n_train).collect();
                let mut kinds = vec![RegressorKind::Gpr, RegressorKind::Rbf];
                if counts.iter().all(|&c| c > set.input_dim()) {
                    kinds.insert(1, RegressorKind::Linear);
                }
                sensitivity_snapshots(set, &counts, &kinds, self.config.rom_modes)?
            }
        })
    }

    fn search(&self, rom: &RomModel, run: usize, seed: u64) -> Result<RunSummary> {
        let objective = self.objective(rom)?;
        let result = evolve(&self.config.ga_config(seed), |mu: &[f64]| objective.penalized(mu))?;
        let volume_ratio = self.space.immersed_volume(&result.best.genome)? / self.baseline_volume;
        Ok(RunSummary {
            run,
            seed,
            best: result.best_fitness(),
            genome: result.best.genome.clone(),
            volume_ratio,
            evaluations: result.evaluations,
            history: result.history,
        })
    }

    /// Trains the ROM, runs `runs` seeded GA searches on it, validates the
    /// best optimum with the full-order chain and optionally enriches the
    /// database (written to `db_dir` when given).
    pub fn run_optimization(&self, db: &mut SnapshotDatabase, runs: usize, db_dir: Option<&Path>) -> Result<OptimizationReport> {
        if runs == 0 {
            return Err(PipelineError::Config("at least one optimization run is required".into()));
        }
        let set = self.training_set(db)?;
        let mut rom = self.train(&set)?;
        let rom_test_error = if set.test_indices().is_empty() { f64::NAN } else { test_error(&rom, &set)? };
        let zero = vec![0.0; self.space.dimension()];
        let baseline_rom_resistance = match self.objective(&rom)?.penalized(&zero)? {
            Fitness::Feasible(v) => v,
            Fitness::Infeasible => return Err(PipelineError::Config("undeformed hull is infeasible".into())),
        };

        let before = self.fom_calls();
        let mut summaries = Vec::with_capacity(runs);
        for r in 0..runs {
            let seed = self.config.seed.wrapping_add(GA_SEED_OFFSET + r as u64);
            let s = self.search(&rom, r, seed)?;
            log::info!("run {r}: best {} volume ratio {:?}", s.best, s.volume_ratio);
            summaries.push(s);
        }
        let fom_calls_during_search = self.fom_calls() - before;

        let best_run = (0..runs).min_by_key(|&r| summaries[r].best).unwrap_or(0);
        let rom_resistance = match summaries[best_run].best {
            Fitness::Feasible(v) => v,
            Fitness::Infeasible => {
                log::warn!("no feasible optimum found; reporting the undeformed hull");
                baseline_rom_resistance
            }
        };
        let optimum = if summaries[best_run].best.is_feasible() {
            summaries[best_run].genome.clone()
        } else {
            zero.clone()
        };
        let (validation, _) = self.validate_mu(&optimum)?;

        let mut enrichment = Vec::new();
        let mut current = optimum.clone();
        for round in 0..self.config.enrichment_rounds {
            let k = db.len();
            let run = self.run_fom(&current, self.config.seed.wrapping_add(k as u64))?;
            let validated_resistance = self.fom_resistance(&run)?;
            db.append(
                SampleRecord {
                    mu: current.clone(),
                    field: self.reference_field(&run),
                },
                db_dir,
            )?;
            let set = self.training_set(db)?;
            rom = self.train(&set)?;
            let test_error_after = if set.test_indices().is_empty() { f64::NAN } else { test_error(&rom, &set)? };
            let rom_resistance_after = self.objective(&rom)?.penalized(&current)?;
            enrichment.push(EnrichmentRound {
                round,
                mu: current.clone(),
                samples_after: db.len(),
                rom_resistance_after,
                validated_resistance,
                test_error_after,
            });
            if round + 1 < self.config.enrichment_rounds {
                let seed = self.config.seed.wrapping_add(GA_SEED_OFFSET + (runs + round) as u64);
                let s = self.search(&rom, runs + round, seed)?;
                if s.best.is_feasible() {
                    current = s.genome;
                }
            }
        }

        Ok(OptimizationReport {
            config_sha256: self.config.database_hash(),
            seed: self.config.seed,
            rom_kind: self.config.rom_kind.to_string(),
            rom_modes: rom.n_modes(),
            rom_test_error,
            baseline_rom_resistance,
            runs: summaries,
            best_run,
            optimum,
            rom_resistance,
            rom_delta_pct: 100.0 * (rom_resistance / baseline_rom_resistance - 1.0),
            validation,
            fom_calls_during_search,
            enrichment,
        })
    }

    /// Everything: database, spectra, sensitivities, optimization study and
    /// their report files under `out`.
    pub fn full_report(&self, out: &Path) -> Result<OptimizationReport> {
        let db_dir = out.join("db");
        let mut db = self.build_database()?.database;
        db.save(&db_dir)?;
        let set = self.training_set(&db)?;
        let rom = self.train(&set)?;
        write_file(&out.join("eigenvalues.csv"), &eigenvalues_csv(&self.baseline_eigenvalues()?))?;
        write_file(&out.join("singular_values.csv"), &singular_values_csv(&rom.basis().spectrum_ratios().map_err(RomError::from)?))?;
        for (axis, name) in [(SensitivityAxis::Modes, "sensitivity_modes.csv"), (SensitivityAxis::Snapshots, "sensitivity_snapshots.csv")] {
            write_file(&out.join(name), &self.sensitivity(&set, axis)?.to_csv())?;
        }
        let report = self.run_optimization(&mut db, self.config.runs, Some(&db_dir))?;
        write_optimization(out, &report)?;
        Ok(report)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

/// `optimum_runs.csv`, one `ga_history_run_<r>.csv` per run and
/// `report.json`.
pub fn write_optimization(out: &Path, report: &OptimizationReport) -> Result<()> {
    write_file(&out.join("optimum_runs.csv"), &report.runs_csv())?;
    for r in &report.runs {
        write_file(&out.join(format!("ga_history_run_{}.csv", r.run)), &history_csv(&r.history))?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| PipelineError::Io(e.to_string()))?;
    write_file(&out.join("report.json"), &(json + "\n"))
}

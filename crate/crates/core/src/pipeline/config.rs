//! `key=value` pipeline configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use sha2::{Digest, Sha256};

use crate::ga::GaConfig;
use crate::mesh::primitives::HullParams;
use crate::rom::RegressorKind;
use crate::synthfom::{FomConfig, NoiseLevel, RegimeFieldParams};

use super::PipelineError;

/// Where the reference hull comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Synthetic(HullParams),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh: MeshSource,
    pub waterline_z: f64,
    pub lattice_origin: Point3<f64>,
    pub lattice_extent: Vector3<f64>,
    pub lattice_degrees: [usize; 3],
    /// Control-point layers held fixed at each face of the lattice box.
    pub fixed_layers: usize,
    /// y-layer held fixed as the symmetry plane.
    pub symmetry_layer: Option<usize>,
    pub bounds: (f64, f64),
    pub samples: usize,
    pub train_fraction: f64,
    pub fom: FomConfig,
    pub field: RegimeFieldParams,
    pub dmd_rank: usize,
    pub dmd_epsilon: f64,
    pub rom_modes: usize,
    pub rom_kind: RegressorKind,
    pub volume_floor: f64,
    pub ga_initial_population: usize,
    pub ga_population: usize,
    pub ga_generations: usize,
    pub ga_crossover_prob: f64,
    pub ga_mutation_prob: f64,
    pub ga_mutation_sigma: f64,
    pub ga_gene_mutation_prob: f64,
    pub ga_tournament_size: usize,
    pub runs: usize,
    pub enrichment_rounds: usize,
    pub sensitivity_modes: Vec<usize>,
    pub sensitivity_snapshots: Vec<usize>,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSource::Synthetic(HullParams::default()),
            waterline_z: 0.0,
            lattice_origin: Point3::new(-0.1, -0.4, -0.35),
            lattice_extent: Vector3::new(1.6, 0.8, 0.6),
            lattice_degrees: [6, 6, 4],
            fixed_layers: 2,
            symmetry_layer: Some(3),
            bounds: (-0.08, 0.08),
            samples: 100,
            train_fraction: 0.8,
            fom: FomConfig::default(),
            field: RegimeFieldParams::default(),
            dmd_rank: 5,
            dmd_epsilon: crate::dmd::DEFAULT_REGIME_EPSILON,
            rom_modes: 20,
            rom_kind: RegressorKind::Gpr,
            volume_floor: 0.999,
            ga_initial_population: 200,
            ga_population: 30,
            ga_generations: 15,
            ga_crossover_prob: 0.8,
            ga_mutation_prob: 0.2,
            ga_mutation_sigma: 0.1,
            ga_gene_mutation_prob: 0.5,
            ga_tournament_size: 3,
            runs: 15,
            enrichment_rounds: 1,
            sensitivity_modes: vec![1, 2, 5, 10, 20, 40, 60, 80],
            sensitivity_snapshots: vec![10, 20, 40, 60, 80],
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|e| format!("{key}: {e}"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, String> {
    v.parse::<usize>().map_err(|e| format!("{key}: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{key}: {e}")))
        .collect()
}

fn parse_triple(key: &str, v: &str) -> Result<[f64; 3], String> {
    let l: Vec<f64> = parse_list(key, v)?;
    l.try_into().map_err(|_| format!("{key}: expected three comma-separated values"))
}

fn join<T: std::fmt::Debug>(items: &[T]) -> String {
    items.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Parses `key=value` lines; `#` starts a comment. Unknown keys are
    /// errors. Relative mesh paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key=value", n + 1)))?;
            c.set(key.trim(), value.trim(), base_dir)
                .map_err(|m| PipelineError::Config(format!("line {}: {m}", n + 1)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str, base_dir: &Path) -> Result<(), String> {
        match key {
            "mesh" => {
                self.mesh = if v == "synthetic" {
                    MeshSource::Synthetic(HullParams::default())
                } else {
                    MeshSource::File(base_dir.join(v))
                }
            }
            "waterline" => self.waterline_z = parse_f64(key, v)?,
            "lattice_origin" => self.lattice_origin = Point3::from(parse_triple(key, v)?),
            "lattice_extent" => self.lattice_extent = Vector3::from(parse_triple(key, v)?),
            "lattice_degrees" => {
                let l: Vec<usize> = parse_list(key, v)?;
                self.lattice_degrees = l.try_into().map_err(|_| format!("{key}: expected three degrees"))?;
            }
            "fixed_layers" => self.fixed_layers = parse_usize(key, v)?,
            "symmetry_layer" => self.symmetry_layer = if v == "none" { None } else { Some(parse_usize(key, v)?) },
            "bounds" => {
                let l: Vec<f64> = parse_list(key, v)?;
                let [lo, hi]: [f64; 2] = l.try_into().map_err(|_| format!("{key}: expected lo,hi"))?;
                self.bounds = (lo, hi);
            }
            "samples" => self.samples = parse_usize(key, v)?,
            "train_fraction" => self.train_fraction = parse_f64(key, v)?,
            "fom_snapshots" => self.fom.snapshot_count = parse_usize(key, v)?,
            "fom_t0" => self.fom.t0 = parse_f64(key, v)?,
            "fom_dt" => self.fom.dt = parse_f64(key, v)?,
            "fom_damped_decay" => self.fom.damped_decay = parse_f64(key, v)?,
            "fom_damped_amplitude" => self.fom.damped_amplitude = parse_f64(key, v)?,
            "fom_oscillation_angle" => self.fom.oscillation_angle = parse_f64(key, v)?,
            "fom_oscillation_amplitude" => self.fom.oscillation_amplitude = parse_f64(key, v)?,
            "fom_oscillation_phase" => self.fom.oscillation_phase = parse_f64(key, v)?,
            "fom_noise" => self.fom.noise = NoiseLevel::RelativeToRegimeMax(parse_f64(key, v)?),
            "field_stagnation" => self.field.stagnation = parse_f64(key, v)?,
            "field_friction" => self.field.friction = parse_f64(key, v)?,
            "dmd_rank" => self.dmd_rank = parse_usize(key, v)?,
            "dmd_epsilon" => self.dmd_epsilon = parse_f64(key, v)?,
            "rom_modes" => self.rom_modes = parse_usize(key, v)?,
            "rom_kind" => self.rom_kind = v.parse()?,
            "volume_floor" => self.volume_floor = parse_f64(key, v)?,
            "ga_initial_population" => self.ga_initial_population = parse_usize(key, v)?,
            "ga_population" => self.ga_population = parse_usize(key, v)?,
            "ga_generations" => self.ga_generations = parse_usize(key, v)?,
            "ga_crossover_prob" => self.ga_crossover_prob = parse_f64(key, v)?,
            "ga_mutation_prob" => self.ga_mutation_prob = parse_f64(key, v)?,
            "ga_mutation_sigma" => self.ga_mutation_sigma = parse_f64(key, v)?,
            "ga_gene_mutation_prob" => self.ga_gene_mutation_prob = parse_f64(key, v)?,
            "ga_tournament_size" => self.ga_tournament_size = parse_usize(key, v)?,
            "runs" => self.runs = parse_usize(key, v)?,
            "enrichment_rounds" => self.enrichment_rounds = parse_usize(key, v)?,
            "sensitivity_modes" => self.sensitivity_modes = parse_list(key, v)?,
            "sensitivity_snapshots" => self.sensitivity_snapshots = parse_list(key, v)?,
            "seed" => self.seed = v.parse().map_err(|e| format!("{key}: {e}"))?,
            "output" => self.output = base_dir.join(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let MeshSource::File(p) = &self.mesh {
            if !p.is_file() {
                return bad(format!("mesh file {} does not exist", p.display()));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.bounds.0 <= self.bounds.1) {
            return bad(format!("bounds [{}, {}] are reversed", self.bounds.0, self.bounds.1));
        }
        if !(self.volume_floor > 0.0 && self.volume_floor <= 1.0) {
            return bad(format!("volume_floor {} outside (0, 1]", self.volume_floor));
        }
        if !(self.dmd_epsilon > 0.0) {
            return bad("dmd_epsilon must be positive".into());
        }
        if self.dmd_rank == 0 || self.rom_modes == 0 {
            return bad("dmd_rank and rom_modes must be positive".into());
        }
        self.fom.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.ga_config(0).validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn ga_config(&self, seed: u64) -> GaConfig {
        GaConfig {
            initial_population: self.ga_initial_population,
            population: self.ga_population,
            generations: self.ga_generations,
            crossover_prob: self.ga_crossover_prob,
            mutation_prob: self.ga_mutation_prob,
            mutation_sigma: self.ga_mutation_sigma,
            gene_mutation_prob: self.ga_gene_mutation_prob,
            tournament_size: self.ga_tournament_size,
            bounds: vec![self.bounds; 6],
            seed,
        }
    }

    /// Settings that determine the snapshot database, one `key=value` per
    /// line in a fixed order.
    pub fn database_canonical(&self) -> String {
        let mut s = String::new();
        let mesh = match &self.mesh {
            MeshSource::Synthetic(p) => format!("synthetic:{p:?}"),
            MeshSource::File(p) => format!("file:{}", p.display()),
        };
        let noise = match self.fom.noise {
            NoiseLevel::Absolute(v) => format!("abs:{v:?}"),
            NoiseLevel::RelativeToRegimeMax(v) => format!("rel:{v:?}"),
        };
        let o = self.lattice_origin;
        let e = self.lattice_extent;
        let lines = [
            ("mesh", mesh),
            ("waterline", format!("{:?}", self.waterline_z)),
            ("lattice_origin", join(&[o.x, o.y, o.z])),
            ("lattice_extent", join(&[e.x, e.y, e.z])),
            ("lattice_degrees", join(&self.lattice_degrees)),
            ("fixed_layers", self.fixed_layers.to_string()),
            ("symmetry_layer", format!("{:?}", self.symmetry_layer)),
            ("bounds", join(&[self.bounds.0, self.bounds.1])),
            ("samples", self.samples.to_string()),
            ("fom_snapshots", self.fom.snapshot_count.to_string()),
            ("fom_t0", format!("{:?}", self.fom.t0)),
            ("fom_dt", format!("{:?}", self.fom.dt)),
            ("fom_damped_decay", format!("{:?}", self.fom.damped_decay)),
            ("fom_damped_amplitude", format!("{:?}", self.fom.damped_amplitude)),
            ("fom_oscillation_angle", format!("{:?}", self.fom.oscillation_angle)),
            ("fom_oscillation_amplitude", format!("{:?}", self.fom.oscillation_amplitude)),
            ("fom_oscillation_phase", format!("{:?}", self.fom.oscillation_phase)),
            ("fom_noise", noise),
            ("field_stagnation", format!("{:?}", self.field.stagnation)),
            ("field_friction", format!("{:?}", self.field.friction)),
            ("dmd_rank", self.dmd_rank.to_string()),
            ("dmd_epsilon", format!("{:?}", self.dmd_epsilon)),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Hex SHA-256 of [`Self::database_canonical`].
    pub fn database_hash(&self) -> String {
        hex::encode(Sha256::digest(self.database_canonical().as_bytes()))
    }
}

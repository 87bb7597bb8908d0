//! On-disk snapshot database.
//!
//! A directory holding `manifest.txt` and one `sample_<idx>.bin` per record.
//! Sample files are `ROMD`, then little-endian u32 version, mu length and
//! field length, then the mu and field values as little-endian f64.

use std::fs;
use std::path::Path;

use super::PipelineError;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"ROMD";

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub samples: usize,
    pub faces: usize,
    pub seed: u64,
    pub config_sha256: String,
    /// Description of the reference mesh.
    pub mesh: String,
    pub t0: f64,
    pub dt: f64,
    pub snapshots: usize,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        format!(
            "version={}\nsamples={}\nfaces={}\nseed={}\nconfig_sha256={}\nmesh={}\nt0={:?}\ndt={:?}\nsnapshots={}\n",
            self.version, self.samples, self.faces, self.seed, self.config_sha256, self.mesh, self.t0, self.dt, self.snapshots
        )
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let bad = |m: String| PipelineError::Database(format!("manifest: {m}"));
        let mut version = None;
        let mut samples = None;
        let mut faces = None;
        let mut seed = None;
        let mut hash = None;
        let mut mesh = String::new();
        let mut t0 = 0.0;
        let mut dt = 0.0;
        let mut snapshots = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            let num = |what: &str| bad(format!("bad {what} `{v}`"));
            match k {
                "version" => version = Some(v.parse::<u32>().map_err(|_| num(k))?),
                "samples" => samples = Some(v.parse::<usize>().map_err(|_| num(k))?),
                "faces" => faces = Some(v.parse::<usize>().map_err(|_| num(k))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| num(k))?),
                "config_sha256" => hash = Some(v.to_string()),
                "mesh" => mesh = v.to_string(),
                "t0" => t0 = v.parse().map_err(|_| num(k))?,
                "dt" => dt = v.parse().map_err(|_| num(k))?,
                "snapshots" => snapshots = v.parse().map_err(|_| num(k))?,
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        let version = version.ok_or_else(|| bad("missing version".into()))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        Ok(Self {
            version,
            samples: samples.ok_or_else(|| bad("missing samples".into()))?,
            faces: faces.ok_or_else(|| bad("missing faces".into()))?,
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            config_sha256: hash.ok_or_else(|| bad("missing config_sha256".into()))?,
            mesh,
            t0,
            dt,
            snapshots,
        })
    }
}

/// One parameter vector and its regime field on the reference mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub mu: Vec<f64>,
    pub field: Vec<f64>,
}

impl SampleRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * (self.mu.len() + self.field.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.mu.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.field.len() as u32).to_le_bytes());
        for v in self.mu.iter().chain(&self.field) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PipelineError> {
        let bad = |m: &str| PipelineError::Database(format!("sample file: {m}"));
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing ROMD header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if word(4) != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let (mu_len, field_len) = (word(8) as usize, word(12) as usize);
        if bytes.len() != 16 + 8 * (mu_len + field_len) {
            return Err(bad("length does not match header"));
        }
        let values: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            mu: values[..mu_len].to_vec(),
            field: values[mu_len..].to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDatabase {
    pub manifest: Manifest,
    pub records: Vec<SampleRecord>,
}

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn sample_path(dir: &Path, idx: usize) -> std::path::PathBuf {
    dir.join(format!("sample_{idx}.bin"))
}

impl SnapshotDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks the manifest count and that every record has the same shape.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.manifest.samples != self.records.len() {
            return Err(PipelineError::Database(format!(
                "manifest lists {} samples, {} present",
                self.manifest.samples,
                self.records.len()
            )));
        }
        let mu_len = self.records.first().map(|r| r.mu.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.field.len() != self.manifest.faces {
                return Err(PipelineError::Database(format!(
                    "sample {i} has {} field values, expected {}",
                    r.field.len(),
                    self.manifest.faces
                )));
            }
            if Some(r.mu.len()) != mu_len {
                return Err(PipelineError::Database(format!("sample {i} has a different parameter length")));
            }
        }
        Ok(())
    }

    /// Fails unless the database was built with a configuration of this hash.
    pub fn check_hash(&self, expected: &str) -> Result<(), PipelineError> {
        if self.manifest.config_sha256 != expected {
            return Err(PipelineError::Database(format!(
                "database built with config {} but current config hashes to {expected}",
                self.manifest.config_sha256
            )));
        }
        Ok(())
    }

    /// Writes the manifest and every sample file, replacing older contents
    /// of the same names.
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (i, r) in self.records.iter().enumerate() {
            let p = sample_path(dir, i);
            fs::write(&p, r.to_bytes()).map_err(|e| io(&p, e))?;
        }
        let p = dir.join("manifest.txt");
        fs::write(&p, self.manifest.to_text()).map_err(|e| io(&p, e))
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let p = dir.join("manifest.txt");
        let manifest = Manifest::parse(&fs::read_to_string(&p).map_err(|e| io(&p, e))?)?;
        let records = (0..manifest.samples)
            .map(|i| {
                let p = sample_path(dir, i);
                SampleRecord::from_bytes(&fs::read(&p).map_err(|e| io(&p, e))?)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let db = Self { manifest, records };
        db.validate()?;
        Ok(db)
    }

    /// Adds a record in memory and, when `dir` is given, on disk.
    pub fn append(&mut self, record: SampleRecord, dir: Option<&Path>) -> Result<(), PipelineError> {
        if record.field.len() != self.manifest.faces {
            return Err(PipelineError::Database(format!(
                "appended field has {} values, expected {}",
                record.field.len(),
                self.manifest.faces
            )));
        }
        if let Some(dir) = dir {
            let p = sample_path(dir, self.records.len());
            fs::write(&p, record.to_bytes()).map_err(|e| io(&p, e))?;
        }
        self.records.push(record);
        self.manifest.samples = self.records.len();
        if let Some(dir) = dir {
            let p = dir.join("manifest.txt");
            fs::write(&p, self.manifest.to_text()).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

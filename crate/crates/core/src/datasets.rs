//! Replica-ensemble archives.
//!
//! An archive is a directory with three files:
//!
//! * `meta.json`: parameter space, shape, output grid and generator provenance;
//! * `lambdas.csv`: one row per parameter point, with a header of input names;
//! * `values.bin`: a 16-byte magic header followed by little-endian `f64`
//!   values in `(n, m, x)` order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::joint_pce::ParameterSpace;

pub const MAGIC: &[u8; 16] = b"SPCE-ENS\0v1\0\0\0\0\0";
pub const META_FILE: &str = "meta.json";
pub const LAMBDAS_FILE: &str = "lambdas.csv";
pub const VALUES_FILE: &str = "values.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    /// A small vector of quantities of interest per replica.
    Vector,
    /// A discretized field over `grid`.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMeta {
    pub schema_version: u32,
    pub model: String,
    pub param_space: ParameterSpace,
    pub output_kind: OutputKind,
    /// Field coordinates; empty for vector outputs.
    #[serde(default)]
    pub grid: Vec<f64>,
    pub n: usize,
    pub m: usize,
    /// Output width per replica (`d` or the grid length).
    pub width: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub rng: Option<String>,
    #[serde(default)]
    pub model_params: serde_json::Value,
}

/// `N` parameter points × `M` replicas × `width` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub meta: EnsembleMeta,
    pub lambdas: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Ensemble {
    pub fn new(meta: EnsembleMeta, lambdas: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        meta.param_space.validate()?;
        check_dim("parameter points", meta.n, lambdas.len())?;
        for l in &lambdas {
            check_dim("parameter point width", meta.param_space.dim(), l.len())?;
        }
        check_dim("ensemble values", meta.n * meta.m * meta.width, values.len())?;
        if meta.output_kind == OutputKind::Field {
            check_dim("field grid", meta.width, meta.grid.len())?;
            if meta.grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidInput("field grid must be strictly increasing".into()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (n, m, x) = unflatten(pos, meta.m, meta.width);
            return Err(Error::InvalidInput(format!("non-finite value at (n={n}, m={m}, x={x})")));
        }
        Ok(Self { meta, lambdas, values })
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn m(&self) -> usize {
        self.meta.m
    }

    pub fn width(&self) -> usize {
        self.meta.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn replica(&self, n: usize, m: usize) -> &[f64] {
        let w = self.width();
        let start = (n * self.m() + m) * w;
        &self.values[start..start + w]
    }

    /// The `M × width` replicas of parameter point `n`.
    pub fn replicas(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.m()).map(|m| self.replica(n, m).to_vec()).collect()
    }

    pub fn replica_sets(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n()).map(|n| self.replicas(n)).collect()
    }

    /// Sub-ensemble with the given parameter points, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(idx.len() * self.m() * self.width());
        let mut lambdas = Vec::with_capacity(idx.len());
        for &n in idx {
            if n >= self.n() {
                return Err(Error::InvalidInput(format!("parameter index {n} out of range")));
            }
            let block = self.m() * self.width();
            values.extend_from_slice(&self.values[n * block..(n + 1) * block]);
            lambdas.push(self.lambdas[n].clone());
        }
        let meta = EnsembleMeta {
            n: idx.len(),
            ..self.meta.clone()
        };
        Self::new(meta, lambdas, values)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("serializable");
        fs::write(dir.join(META_FILE), meta)?;

        let mut w = csv::Writer::from_path(dir.join(LAMBDAS_FILE)).map_err(csv_err)?;
        w.write_record(&self.meta.param_space.names).map_err(csv_err)?;
        for l in &self.lambdas {
            w.write_record(l.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;

        let mut bytes = Vec::with_capacity(16 + 8 * self.values.len());
        bytes.extend_from_slice(MAGIC);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(dir.join(VALUES_FILE))?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_text = fs::read_to_string(dir.join(META_FILE))?;
        let meta: EnsembleMeta =
            serde_json::from_str(&meta_text).map_err(|e| Error::Corrupt(format!("{META_FILE}: {e}")))?;

        let mut rdr = csv::Reader::from_path(dir.join(LAMBDAS_FILE)).map_err(csv_err)?;
        let mut lambdas = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Corrupt(format!("{LAMBDAS_FILE}: {e}")))?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::Corrupt(format!("{LAMBDAS_FILE} row {}: cannot parse '{s}'", row + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            lambdas.push(vals);
        }

        let bytes = fs::read(dir.join(VALUES_FILE))?;
        if bytes.len() < 16 || &bytes[..16] != MAGIC {
            return Err(Error::Corrupt(format!("{VALUES_FILE}: bad magic header")));
        }
        let expected = 16 + 8 * meta.n * meta.m * meta.width;
        if bytes.len() != expected {
            return Err(Error::Corrupt(format!(
                "{VALUES_FILE}: expected {expected} bytes for shape ({}, {}, {}), found {}",
                meta.n,
                meta.m,
                meta.width,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (n, m, x) = unflatten(pos, meta.m, meta.width);
            return Err(Error::Corrupt(format!("{VALUES_FILE}: non-finite value at (n={n}, m={m}, x={x})")));
        }
        Self::new(meta, lambdas, values).map_err(|e| match e {
            Error::Io(e) => Error::Io(e),
            other => Error::Corrupt(other.to_string()),
        })
    }
}

fn unflatten(pos: usize, m: usize, width: usize) -> (usize, usize, usize) {
    (pos / (m * width), (pos / width) % m, pos % width)
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Corrupt(e.to_string())
    }
}

/// Splits by parameter point with a seeded shuffle. Replicas stay with their λ.
pub fn split_train_test(ens: &Ensemble, fraction: f64, seed: u64) -> Result<(Ensemble, Ensemble)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidInput(format!("split fraction must lie in (0,1), got {fraction}")));
    }
    let n = ens.n();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} of {n} parameter points leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at(n_train);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    Ok((ens.select(&a)?, ens.select(&b)?))
}

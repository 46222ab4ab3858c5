//! Surrogate files: a joint PCE for vector outputs or a KLPC for fields,
//! told apart by the `kind` field.

use std::path::Path;

use spce_core::joint_pce::JointPce;
use spce_core::klpc::KlpcSurrogate;
use spce_core::Error;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Joint(JointPce),
    Klpc(KlpcSurrogate),
}

impl Surrogate {
    pub fn joint(&self) -> &JointPce {
        match self {
            Surrogate::Joint(j) => j,
            Surrogate::Klpc(k) => k.joint(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Surrogate::Joint(_) => "joint_pce",
            Surrogate::Klpc(_) => "klpc",
        }
    }

    /// Output width of one realization.
    pub fn width(&self) -> usize {
        match self {
            Surrogate::Joint(j) => j.n_outputs(),
            Surrogate::Klpc(k) => k.grid_len(),
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            Surrogate::Joint(j) => j.to_json(),
            Surrogate::Klpc(k) => k.to_json(),
        }
    }

    pub fn from_json(s: &str) -> spce_core::Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| Error::Corrupt(e.to_string()))?;
        match v.get("kind").and_then(|k| k.as_str()) {
            Some("joint_pce") => Ok(Surrogate::Joint(JointPce::from_json(s)?)),
            Some("klpc") => Ok(Surrogate::Klpc(KlpcSurrogate::from_json(s)?)),
            Some(other) => Err(Error::Corrupt(format!("unknown surrogate kind '{other}'"))),
            None => Err(Error::Corrupt("surrogate file has no 'kind' field".into())),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&s).map_err(|e| match e {
            Error::Corrupt(msg) => Error::Corrupt(format!("{}: {msg}", path.display())).into(),
            other => other.into(),
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut s = self.to_json();
        s.push('\n');
        std::fs::write(path, s).map_err(|e| CliError::io(path, e))
    }
}

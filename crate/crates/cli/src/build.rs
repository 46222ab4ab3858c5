use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use spce_core::datasets::{Ensemble, OutputKind};
use spce_core::joint_pce::{build_joint_pce, BuildDiagnostics, JointConfig};
use spce_core::kle::Truncation;
use spce_core::klpc::{build_klpc, KlpcConfig};

use crate::surrogate::Surrogate;
use crate::{sibling, write_json, CliResult, Common, GermArg, REPORT_SCHEMA_VERSION};

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Ensemble directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Surrogate file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Build report; defaults to the surrogate path with a `.report.json` suffix.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Unexplained-variance budget for the KLE truncation (field data).
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Fixed number of KL modes; overrides --eps.
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub stoch_order: usize,
    #[arg(long, default_value_t = 2)]
    pub max_param_order: usize,
    /// Stochastic germ.
    #[arg(long, value_enum, default_value_t = GermArg::Normal)]
    pub germ: GermArg,
    #[arg(long, default_value_t = spce_core::rosenblatt::DEFAULT_BANDWIDTH_FACTOR)]
    pub bandwidth_factor: f64,
    /// Stochastic training points per parameter point (default 4 × basis size).
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl BuildArgs {
    pub fn joint_config(&self) -> JointConfig {
        JointConfig {
            stoch_order: self.stoch_order,
            stoch_germ: self.germ.into(),
            max_param_order: self.max_param_order,
            bandwidth_factor: self.bandwidth_factor,
            n_train: self.n_train,
            ridge: self.ridge,
            seed: self.seed,
        }
    }

    pub fn truncation(&self) -> Truncation {
        match self.modes {
            Some(n) => Truncation::Modes(n),
            None => Truncation::ExplainedVariance(self.eps),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct KleSummary {
    pub n_modes: usize,
    pub explained_fraction: f64,
    pub retained_eigenvalues: Vec<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Serialize)]
pub struct Timings {
    pub total_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct BuildReport {
    pub schema_version: u32,
    pub kind: &'static str,
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub width: usize,
    pub config: JointConfig,
    /// Selected parametric order per stochastic term and output.
    pub per_s_orders: Vec<Vec<usize>>,
    pub max_selected_order: usize,
    pub n_terms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kle: Option<KleSummary>,
    pub diagnostics: BuildDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Builds the surrogate matching the ensemble's output kind.
pub fn build_surrogate(ens: &Ensemble, cfg: &JointConfig, truncation: Truncation) -> CliResult<(Surrogate, BuildDiagnostics)> {
    Ok(match ens.meta.output_kind {
        OutputKind::Vector => {
            let jb = build_joint_pce(&ens.meta.param_space, &ens.lambdas, &ens.replica_sets(), cfg)?;
            (Surrogate::Joint(jb.pce), jb.diagnostics)
        }
        OutputKind::Field => {
            let kb = build_klpc(ens, &KlpcConfig { truncation, joint: cfg.clone() })?;
            (Surrogate::Klpc(kb.surrogate), kb.diagnostics)
        }
    })
}

pub fn default_report_path(out: &Path) -> PathBuf {
    sibling(out, "report.json")
}

pub fn run(a: &BuildArgs, common: &Common) -> CliResult<()> {
    let start = Instant::now();
    let ens = Ensemble::read(&a.data)?;
    let cfg = a.joint_config();
    let (sur, diagnostics) = build_surrogate(&ens, &cfg, a.truncation())?;
    sur.save(&a.out)?;
    let joint = sur.joint();
    let kle = match &sur {
        Surrogate::Klpc(k) => Some(KleSummary {
            n_modes: k.kle().n_modes(),
            explained_fraction: k.kle().explained_fraction,
            retained_eigenvalues: k.kle().retained_eigenvalues().to_vec(),
            degenerate: k.kle().degenerate,
        }),
        Surrogate::Joint(_) => None,
    };
    let report = BuildReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: sur.kind(),
        model: ens.meta.model.clone(),
        n: ens.n(),
        m: ens.m(),
        width: ens.width(),
        config: cfg,
        per_s_orders: joint.per_s_orders().to_vec(),
        max_selected_order: joint.per_s_orders().iter().flatten().copied().max().unwrap_or(0),
        n_terms: joint.basis().len(),
        kle,
        diagnostics,
        timings: (!common.no_timings).then(|| Timings {
            total_ms: start.elapsed().as_secs_f64() * 1e3,
        }),
    };
    let path = a.report.clone().unwrap_or_else(|| default_report_path(&a.out));
    write_json(&path, &report)?;
    eprintln!("wrote {} surrogate to {} and report to {}", sur.kind(), a.out.display(), path.display());
    Ok(())
}

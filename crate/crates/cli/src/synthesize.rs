use std::path::PathBuf;

use clap::{Args, ValueEnum};
use spce_core::synthetic::{bimodal_ensemble, midpoint_design, FieldModel, LinearModel};

use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    /// Scalar two-component mixture on λ ∈ [0, 1].
    Bimodal,
    /// Logistic curve with correlated multiplicative noise on a grid.
    Field,
    /// Exact linear model with shared noise draws.
    Linear,
}

impl Model {
    fn default_shape(self) -> (usize, usize) {
        match self {
            Model::Bimodal => (20, 500),
            Model::Field => (40, 50),
            Model::Linear => (20, 50),
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Parameter points (defaults: bimodal 20, field 40, linear 20).
    #[arg(long)]
    pub n: Option<usize>,
    /// Replicas per parameter point (defaults: bimodal 500, field 50, linear 50).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Field grid points.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Field model without noise.
    #[arg(long)]
    pub noise_free: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &SynthesizeArgs) -> CliResult<()> {
    let (dn, dm) = a.model.default_shape();
    let (n, m) = (a.n.unwrap_or(dn), a.m.unwrap_or(dm));
    let ens = match a.model {
        Model::Bimodal => bimodal_ensemble(&midpoint_design(n), m, a.seed)?,
        Model::Field => {
            let model = FieldModel {
                n_grid: a.grid,
                ..if a.noise_free { FieldModel::noise_free() } else { FieldModel::default() }
            };
            let space = FieldModel::param_space();
            let lambdas = FieldModel::design(&space, n, a.seed);
            model.ensemble(&space, &lambdas, m, a.seed)?
        }
        Model::Linear => {
            let model = LinearModel::default();
            let space = model.param_space();
            model.ensemble(&FieldModel::design(&space, n, a.seed), m, a.seed)?
        }
    };
    ens.write(&a.out)?;
    eprintln!(
        "wrote {} x {} x {} ensemble to {}",
        ens.n(),
        ens.m(),
        ens.width(),
        a.out.display()
    );
    Ok(())
}

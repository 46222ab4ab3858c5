use serde::Serialize;
use spce_core::basis::GermKind;
use spce_core::joint_pce::{build_joint_pce, JointConfig, JointPce};
use spce_core::klpc::{build_klpc, KlpcConfig, KlpcSurrogate};
use spce_core::metrics::{smoothed_density, wasserstein1};
use spce_core::synthetic::{
    bimodal_ensemble, bimodal_param_space, bimodal_pdf, bimodal_sample, midpoint_design, stream_rng, FieldModel,
};
use spce_core::Result;

const Y_GRID: (f64, f64, usize) = (-8.0, 7.0, 301);
const SMOOTHING: f64 = 0.2;

fn y_grid() -> Vec<f64> {
    let (a, b, n) = Y_GRID;
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Serialize)]
pub struct Density {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub surrogate: Vec<f64>,
    pub analytic: Vec<f64>,
    pub w1: f64,
}

/// Bimodal benchmark surrogate built from `n_points` midpoint λ values.
pub struct BimodalDemo {
    pce: JointPce,
}

impl BimodalDemo {
    pub fn build(n_points: usize, replicas: usize, order: usize, seed: u64) -> Result<Self> {
        let ens = bimodal_ensemble(&midpoint_design(n_points), replicas, seed)?;
        let cfg = JointConfig {
            stoch_order: order,
            stoch_germ: GermKind::Uniform,
            max_param_order: 4,
            seed,
            ..JointConfig::default()
        };
        let pce = build_joint_pce(&bimodal_param_space(), &ens.lambdas, &ens.replica_sets(), &cfg)?.pce;
        Ok(Self { pce })
    }

    pub fn n_terms(&self) -> usize {
        self.pce.basis().len()
    }

    pub fn density(&self, lambda: f64, samples: usize, seed: u64) -> Result<Density> {
        let draws: Vec<f64> = self
            .pce
            .generate(&[lambda], samples, &mut stream_rng(seed, 0))?
            .into_iter()
            .map(|r| r[0])
            .collect();
        let grid = y_grid();
        let truth = bimodal_sample(lambda, samples, seed.wrapping_add(1));
        Ok(Density {
            lambda,
            surrogate: smoothed_density(&draws, &grid, SMOOTHING),
            analytic: grid.iter().map(|&y| bimodal_pdf(lambda, y)).collect(),
            w1: wasserstein1(&truth, &draws)?,
            grid,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct FieldSummary {
    pub grid: Vec<f64>,
    pub inputs: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub n_modes: usize,
    pub explained_fraction: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `[input][grid point]`.
    pub main_effects: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    pub residual: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Conditional {
    pub lambda: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub noise_free: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
}

/// KL-compressed surrogate of the synthetic logistic field.
pub struct FieldDemo {
    klpc: KlpcSurrogate,
    model: FieldModel,
}

impl FieldDemo {
    pub fn build(n_points: usize, replicas: usize, eps: f64, seed: u64) -> Result<Self> {
        let model = FieldModel::default();
        let space = FieldModel::param_space();
        let lambdas = FieldModel::design(&space, n_points, seed);
        let ens = model.ensemble(&space, &lambdas, replicas, seed)?;
        let cfg = KlpcConfig {
            truncation: spce_core::kle::Truncation::ExplainedVariance(eps),
            joint: JointConfig { seed, ..JointConfig::default() },
        };
        let klpc = build_klpc(&ens, &cfg)?.surrogate;
        Ok(Self { klpc, model })
    }

    pub fn summary(&self) -> FieldSummary {
        let kle = self.klpc.kle();
        let (mean, var) = self.klpc.moments();
        let sobol = self.klpc.sobol();
        let d = self.klpc.joint().n_param();
        FieldSummary {
            grid: kle.grid.clone(),
            inputs: self.klpc.joint().param_space().names.clone(),
            eigenvalues: kle.eigenvalues.clone(),
            n_modes: kle.n_modes(),
            explained_fraction: kle.explained_fraction,
            mean,
            sd: var.iter().map(|v| v.max(0.0).sqrt()).collect(),
            main_effects: (0..d).map(|i| sobol.iter().map(|r| r.main_effects[i]).collect()).collect(),
            noise: sobol.iter().map(|r| r.noise_group).collect(),
            residual: sobol.iter().map(|r| r.interaction_residual).collect(),
        }
    }

    pub fn conditional(&self, lambda: &[f64], n_draws: usize, seed: u64) -> Result<Conditional> {
        let xi = self.klpc.joint().param_space().to_germ(lambda)?;
        let (mean, var) = self.klpc.conditional_moments(&xi)?;
        Ok(Conditional {
            lambda: lambda.to_vec(),
            mean,
            sd: var.iter().map(|v| v.max(0.0).sqrt()).collect(),
            noise_free: self.model.curve(lambda),
            draws: self.klpc.generate_at(lambda, n_draws, &mut stream_rng(seed, 0))?,
        })
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.klpc.joint().param_space();
        (s.lower.clone(), s.upper.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bimodal_density_tracks_the_analytic_pdf() {
        let demo = BimodalDemo::build(20, 300, 8, 1).unwrap();
        let d = demo.density(0.5, 5000, 3).unwrap();
        let h = d.grid[1] - d.grid[0];
        let mass: f64 = d.surrogate.iter().sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-2, "mass {mass}");
        assert!(d.w1 < 0.3, "w1 {}", d.w1);
    }

    #[test]
    fn field_summary_is_consistent() {
        let demo = FieldDemo::build(20, 20, 0.01, 2).unwrap();
        let s = demo.summary();
        assert_eq!(s.mean.len(), s.grid.len());
        assert_eq!(s.main_effects.len(), 3);
        for x in 0..s.grid.len() {
            let total: f64 = s.main_effects.iter().map(|m| m[x]).sum::<f64>() + s.noise[x] + s.residual[x];
            assert!((total - 1.0).abs() < 1e-10);
        }
        let c = demo.conditional(&[1.0, 10.0, 0.5], 4, 0).unwrap();
        assert_eq!(c.draws.len(), 4);
        assert!(demo.conditional(&[9.0, 10.0, 0.5], 1, 0).is_err());
    }
}

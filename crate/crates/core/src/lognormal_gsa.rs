//! Sensitivity analysis under log-normal rate uncertainty: sample Gaussian
//! log-rates, push them through a Uniform-germ KLPC surrogate, and rebuild a
//! Hermite-germ KLPC on the generated fields.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::GermKind;
use crate::datasets::{Ensemble, EnsembleMeta, OutputKind};
use crate::error::{check_dim, Error, Result};
use crate::expansion::SobolReport;
use crate::joint_pce::RNG_NAME;
use crate::klpc::{build_klpc, KlpcConfig, KlpcSurrogate};
use crate::par::par_map;
use crate::synthetic::stream_rng;

/// Largest tolerated share of out-of-range samples.
pub const MAX_OUT_OF_RANGE_FRACTION: f64 = 0.5;

/// Redraw budget per sample under [`OutOfRangePolicy::RejectAndRedraw`].
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRangePolicy {
    #[default]
    ClampAndCount,
    RejectAndRedraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalSpec {
    /// Nominal log-rates `μ_i`.
    pub nominal: Vec<f64>,
    /// Scale factors `r_i > 1`.
    pub r: Vec<f64>,
    /// Confidence multiplier.
    pub z: f64,
    /// Sample count `N′` entering the spread formula.
    pub n_prime: usize,
    pub n_samples: usize,
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: OutOfRangePolicy,
}

/// `σ = √N′ · ln r / z`.
pub fn derive_sigma(r: f64, z: f64, n_prime: usize) -> Result<f64> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!("scale factor must exceed 1, got {r}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidInput(format!("confidence multiplier must be positive, got {z}")));
    }
    if n_prime == 0 {
        return Err(Error::InvalidInput("sample count N' must be at least 1".into()));
    }
    Ok((n_prime as f64).sqrt() * r.ln() / z)
}

impl LognormalSpec {
    pub fn sigma(&self) -> Result<Vec<f64>> {
        check_dim("scale factors", self.nominal.len(), self.r.len())?;
        self.r.iter().map(|&r| derive_sigma(r, self.z, self.n_prime)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nominal.is_empty() {
            return Err(Error::InvalidInput("log-normal spec has no inputs".into()));
        }
        if let Some(bad) = self.nominal.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("nominal log-rate must be finite, got {bad}")));
        }
        self.sigma()?;
        if self.n_samples < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 samples, got {}", self.n_samples)));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 replicas per sample, got {}", self.replicas)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub sigma: Vec<f64>,
    pub n_samples: usize,
    pub replicas: usize,
    pub policy: OutOfRangePolicy,
    /// Samples with at least one coordinate outside the box (before handling).
    pub out_of_range_samples: usize,
    /// Individual coordinates outside the box.
    pub out_of_range_coordinates: usize,
    /// Draws discarded under the reject policy.
    pub rejected_draws: usize,
}

struct Draw {
    theta: Vec<f64>,
    xi: Vec<f64>,
    clamped_coords: usize,
    rejected: usize,
}

fn draw_one<R: Rng>(rng: &mut R, mu: &[f64], sigma: &[f64], lower: &[f64], upper: &[f64], policy: OutOfRangePolicy) -> Result<Draw> {
    let mut rejected = 0;
    loop {
        let theta: Vec<f64> = (0..mu.len())
            .map(|i| {
                let nu: f64 = rng.sample(StandardNormal);
                mu[i] + nu * sigma[i]
            })
            .collect();
        let mut xi: Vec<f64> = (0..mu.len())
            .map(|i| 2.0 * (theta[i] - lower[i]) / (upper[i] - lower[i]) - 1.0)
            .collect();
        let out = xi.iter().filter(|v| v.abs() > 1.0).count();
        match policy {
            OutOfRangePolicy::ClampAndCount => {
                for v in &mut xi {
                    *v = v.clamp(-1.0, 1.0);
                }
                return Ok(Draw { theta, xi, clamped_coords: out, rejected });
            }
            OutOfRangePolicy::RejectAndRedraw if out == 0 => {
                return Ok(Draw { theta, xi, clamped_coords: 0, rejected });
            }
            OutOfRangePolicy::RejectAndRedraw => {
                rejected += 1;
                if rejected > MAX_REDRAWS {
                    return Err(Error::Domain(format!("no in-range draw after {MAX_REDRAWS} attempts")));
                }
            }
        }
    }
}

/// Fields `g(θ, ω) = f(ξ(θ), ζ)` at log-normal rate samples, as an ensemble
/// whose parameter space carries a Normal germ centred on the nominal values.
pub fn resample(surrogate: &KlpcSurrogate, spec: &LognormalSpec) -> Result<(Ensemble, ResampleReport)> {
    spec.validate()?;
    let joint = surrogate.joint();
    let ps = joint.param_space();
    if ps.germ != GermKind::Uniform {
        return Err(Error::InvalidInput("resampling needs a Uniform-germ surrogate".into()));
    }
    check_dim("log-normal spec inputs", ps.dim(), spec.nominal.len())?;
    for i in 0..ps.dim() {
        if !(spec.nominal[i] > ps.lower[i] && spec.nominal[i] < ps.upper[i]) {
            return Err(Error::Domain(format!(
                "nominal value {} of '{}' lies outside the surrogate box [{}, {}]",
                spec.nominal[i], ps.names[i], ps.lower[i], ps.upper[i]
            )));
        }
    }
    let sigma = spec.sigma()?;
    let nz = joint.n_stoch();
    let germ = joint.stoch_germ();
    let idx: Vec<usize> = (0..spec.n_samples).collect();
    let results = par_map(&idx, |i, _| -> Result<(Draw, Vec<f64>)> {
        let mut rng = stream_rng(spec.seed, i as u64);
        let d = draw_one(&mut rng, &spec.nominal, &sigma, &ps.lower, &ps.upper, spec.policy)?;
        let mut block = Vec::with_capacity(spec.replicas * surrogate.grid_len());
        for _ in 0..spec.replicas {
            let zeta: Vec<f64> = (0..nz).map(|_| germ.sample(&mut rng)).collect();
            block.extend(surrogate.generate(&d.xi, &zeta)?);
        }
        Ok((d, block))
    });
    let mut report = ResampleReport {
        sigma: sigma.clone(),
        n_samples: spec.n_samples,
        replicas: spec.replicas,
        policy: spec.policy,
        out_of_range_samples: 0,
        out_of_range_coordinates: 0,
        rejected_draws: 0,
    };
    let mut lambdas = Vec::with_capacity(spec.n_samples);
    let mut values = Vec::with_capacity(spec.n_samples * spec.replicas * surrogate.grid_len());
    for r in results {
        let (d, block) = r?;
        report.out_of_range_samples += usize::from(d.clamped_coords > 0);
        report.out_of_range_coordinates += d.clamped_coords;
        report.rejected_draws += d.rejected;
        lambdas.push(d.theta);
        values.extend(block);
    }
    let (bad, total) = match spec.policy {
        OutOfRangePolicy::ClampAndCount => (report.out_of_range_samples, spec.n_samples),
        OutOfRangePolicy::RejectAndRedraw => (report.rejected_draws, spec.n_samples + report.rejected_draws),
    };
    if bad as f64 > MAX_OUT_OF_RANGE_FRACTION * total as f64 {
        return Err(Error::Domain(format!(
            "{bad} of {total} log-normal draws fall outside the surrogate box; the spread is too wide for this surrogate"
        )));
    }
    let meta = EnsembleMeta {
        schema_version: 1,
        model: "lognormal_resample".into(),
        param_space: ps.with_normal_germ(spec.nominal.clone(), sigma)?,
        output_kind: OutputKind::Field,
        grid: surrogate.grid().to_vec(),
        n: spec.n_samples,
        m: spec.replicas,
        width: surrogate.grid_len(),
        seed: Some(spec.seed),
        rng: Some(RNG_NAME.into()),
        model_params: serde_json::to_value(spec).expect("serializable"),
    };
    Ok((Ensemble::new(meta, lambdas, values)?, report))
}

/// Resamples under `spec` and fits a KLPC whose parametric and stochastic
/// germs are both standard normal.
pub fn resample_and_rebuild(surrogate: &KlpcSurrogate, spec: &LognormalSpec, cfg: &KlpcConfig) -> Result<(KlpcSurrogate, ResampleReport)> {
    let (ens, report) = resample(surrogate, spec)?;
    let mut cfg = cfg.clone();
    cfg.joint.stoch_germ = GermKind::Normal;
    let rebuilt = build_klpc(&ens, &cfg)?.surrogate;
    Ok((rebuilt, report))
}

pub fn sobol_from_rebuilt(surrogate: &KlpcSurrogate, x: usize) -> Result<SobolReport> {
    surrogate.pointwise_sobol(x)
}

//! Synthetic stochastic models with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::{Ensemble, EnsembleMeta, OutputKind};
use crate::error::{check_dim, Error, Result};
use crate::joint_pce::{training_uniforms, ParameterSpace, RNG_NAME};
use crate::normal;
use crate::par::par_map;

/// Generator for parameter point `n` of an ensemble seeded with `seed`.
pub fn stream_rng(seed: u64, n: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng
}

/// Component means of the bimodal benchmark, on the `1.25 y` scale.
pub fn bimodal_centers(lambda: f64) -> (f64, f64) {
    let s = (std::f64::consts::PI * lambda).sin();
    let base = 5.0 * s * s;
    (base + 5.0 * lambda - 2.5, base - 5.0 * lambda + 2.5)
}

/// `p(y|λ) = 0.5 φ(1.25y − c₁) + 0.75 φ(1.25y − c₂)`.
pub fn bimodal_pdf(lambda: f64, y: f64) -> f64 {
    let (c1, c2) = bimodal_centers(lambda);
    0.5 * normal::pdf(1.25 * y - c1) + 0.75 * normal::pdf(1.25 * y - c2)
}

pub fn bimodal_cdf(lambda: f64, y: f64) -> f64 {
    let (c1, c2) = bimodal_centers(lambda);
    0.4 * normal::cdf(1.25 * y - c1) + 0.6 * normal::cdf(1.25 * y - c2)
}

pub fn bimodal_mean(lambda: f64) -> f64 {
    let (c1, c2) = bimodal_centers(lambda);
    (0.4 * c1 + 0.6 * c2) / 1.25
}

fn bimodal_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> (usize, f64) {
    let (c1, c2) = bimodal_centers(lambda);
    let k = if rng.random::<f64>() < 0.4 { 0 } else { 1 };
    let c = if k == 0 { c1 } else { c2 };
    let e: f64 = rng.sample(StandardNormal);
    (k, (c + e) / 1.25)
}

pub fn bimodal_sample_rng<R: Rng + ?Sized>(lambda: f64, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| bimodal_draw(lambda, rng).1).collect()
}

pub fn bimodal_sample(lambda: f64, count: usize, seed: u64) -> Vec<f64> {
    bimodal_sample_rng(lambda, count, &mut stream_rng(seed, 0))
}

/// Midpoints of `n` equal cells of `[0, 1]`.
pub fn midpoint_design(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

pub fn bimodal_param_space() -> ParameterSpace {
    ParameterSpace::new(vec!["lambda".into()], vec![0.0], vec![1.0]).expect("valid box")
}

/// `M` replicas at each λ, one random stream per parameter point.
pub fn bimodal_ensemble(lambdas: &[f64], m: usize, seed: u64) -> Result<Ensemble> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Domain(format!("bimodal model needs λ in [0,1], got {l}")));
    }
    let blocks = par_map(lambdas, |n, &l| bimodal_sample_rng(l, m, &mut stream_rng(seed, n as u64)));
    let meta = EnsembleMeta {
        schema_version: 1,
        model: "bimodal".into(),
        param_space: bimodal_param_space(),
        output_kind: OutputKind::Vector,
        grid: Vec::new(),
        n: lambdas.len(),
        m,
        width: 1,
        seed: Some(seed),
        rng: Some(RNG_NAME.into()),
        model_params: serde_json::json!({"weights": [0.4, 0.6], "scale": 1.25}),
    };
    Ensemble::new(meta, lambdas.iter().map(|&l| vec![l]).collect(), blocks.concat())
}

/// Logistic growth curve `λ₁ / (1 + exp(−λ₂ (t − λ₃)))` with multiplicative
/// log-normal AR(1) noise and optional additive Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub n_grid: usize,
    /// Standard deviation of the log-noise.
    pub noise_sd: f64,
    /// Lag-one correlation of the log-noise along the grid.
    pub rho: f64,
    pub additive_sd: f64,
}

impl Default for FieldModel {
    fn default() -> Self {
        Self {
            n_grid: 64,
            noise_sd: 0.1,
            rho: 0.9,
            additive_sd: 0.0,
        }
    }
}

impl FieldModel {
    pub fn noise_free() -> Self {
        Self {
            noise_sd: 0.0,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.n_grid;
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    /// Default inputs: amplitude, rate and midpoint. The box is stored in
    /// the nominal ± ln r form so the log-normal workflow can consume it.
    pub fn param_space() -> ParameterSpace {
        let half: [f64; 3] = [0.5, 5.0, 0.2];
        ParameterSpace::from_log_rates(
            vec!["amplitude".into(), "rate".into(), "midpoint".into()],
            vec![1.0, 10.0, 0.5],
            half.iter().map(|h| h.exp()).collect(),
        )
        .expect("valid box")
    }

    pub fn mean_curve(lambda: &[f64], t: f64) -> f64 {
        lambda[0] / (1.0 + (-lambda[1] * (t - lambda[2])).exp())
    }

    /// Noise-free curve on the grid.
    pub fn curve(&self, lambda: &[f64]) -> Vec<f64> {
        self.grid().iter().map(|&t| Self::mean_curve(lambda, t)).collect()
    }

    /// Replicas `g(λ; t) · exp(σ ε_t − σ²/2) + additive noise`, where `ε` is
    /// a stationary unit-variance AR(1) sequence.
    pub fn sample_rng<R: Rng + ?Sized>(&self, lambda: &[f64], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let g = self.curve(lambda);
        let innov = (1.0 - self.rho * self.rho).sqrt();
        (0..count)
            .map(|_| {
                let mut eps: f64 = rng.sample(StandardNormal);
                g.iter()
                    .enumerate()
                    .map(|(i, &gi)| {
                        if i > 0 {
                            eps = self.rho * eps + innov * rng.sample::<f64, _>(StandardNormal);
                        }
                        let mut v = gi * (self.noise_sd * eps - 0.5 * self.noise_sd * self.noise_sd).exp();
                        if self.additive_sd > 0.0 {
                            v += self.additive_sd * rng.sample::<f64, _>(StandardNormal);
                        }
                        v
                    })
                    .collect()
            })
            .collect()
    }

    pub fn sample(&self, lambda: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
        self.sample_rng(lambda, count, &mut stream_rng(seed, 0))
    }

    /// Seeded Latin-hypercube design of `n` points in `space`.
    pub fn design(space: &ParameterSpace, n: usize, seed: u64) -> Vec<Vec<f64>> {
        training_uniforms(n, space.dim(), seed)
            .into_iter()
            .map(|u| {
                u.iter()
                    .enumerate()
                    .map(|(i, &v)| space.lower[i] + v * (space.upper[i] - space.lower[i]))
                    .collect()
            })
            .collect()
    }

    pub fn ensemble(&self, space: &ParameterSpace, lambdas: &[Vec<f64>], m: usize, seed: u64) -> Result<Ensemble> {
        for l in lambdas {
            check_dim("field model inputs", 3, l.len())?;
        }
        let blocks = par_map(lambdas, |n, l| self.sample_rng(l, m, &mut stream_rng(seed, n as u64)).concat());
        let meta = EnsembleMeta {
            schema_version: 1,
            model: "field".into(),
            param_space: space.clone(),
            output_kind: OutputKind::Field,
            grid: self.grid(),
            n: lambdas.len(),
            m,
            width: self.n_grid,
            seed: Some(seed),
            rng: Some(RNG_NAME.into()),
            model_params: serde_json::to_value(self).expect("serializable"),
        };
        Ensemble::new(meta, lambdas.to_vec(), blocks.concat())
    }
}

/// `y = intercept + slopes·λ + noise_sd·ε` where every parameter point reuses
/// the same noise draws, so replica sets at different λ are exact shifts of
/// each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub noise_sd: f64,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self {
            intercept: 1.0,
            slopes: vec![2.0, -0.5],
            noise_sd: 0.3,
        }
    }
}

impl LinearModel {
    pub fn param_space(&self) -> ParameterSpace {
        let d = self.slopes.len();
        ParameterSpace::new((0..d).map(|i| format!("x{}", i + 1)).collect(), vec![0.0; d], vec![1.0; d])
            .expect("valid box")
    }

    pub fn ensemble(&self, lambdas: &[Vec<f64>], m: usize, seed: u64) -> Result<Ensemble> {
        let mut rng = stream_rng(seed, 0);
        let noise: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut values = Vec::with_capacity(lambdas.len() * m);
        for l in lambdas {
            check_dim("linear model inputs", self.slopes.len(), l.len())?;
            let mean = self.intercept + self.slopes.iter().zip(l).map(|(a, x)| a * x).sum::<f64>();
            values.extend(noise.iter().map(|e| mean + self.noise_sd * e));
        }
        let meta = EnsembleMeta {
            schema_version: 1,
            model: "linear".into(),
            param_space: self.param_space(),
            output_kind: OutputKind::Vector,
            grid: Vec::new(),
            n: lambdas.len(),
            m,
            width: 1,
            seed: Some(seed),
            rng: Some(RNG_NAME.into()),
            model_params: serde_json::to_value(self).expect("serializable"),
        };
        Ensemble::new(meta, lambdas.to_vec(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{count_modes, higher_mode_side, ks_against_cdf, mean_sd, Side};

    fn pdf_grid(lambda: f64) -> Vec<f64> {
        (0..=3000).map(|i| -8.0 + 0.005 * i as f64).map(|y| bimodal_pdf(lambda, y)).collect()
    }

    #[test]
    fn centers_and_shape() {
        let (c1, c2) = bimodal_centers(0.5);
        assert!((c1 - 5.0).abs() < 1e-12 && (c2 - 5.0).abs() < 1e-12);
        let v = pdf_grid(0.5);
        let imax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert!((-8.0 + 0.005 * imax as f64 - 4.0).abs() < 1e-9);

        assert_eq!(bimodal_centers(0.0), (-2.5, 2.5));
        assert_eq!(higher_mode_side(&pdf_grid(0.0), 0.005), Some(Side::Right));
        assert_eq!(higher_mode_side(&pdf_grid(0.85), 0.005), Some(Side::Left));
    }

    #[test]
    fn normalized() {
        for lambda in [0.0, 0.25, 0.5, 0.85, 1.0] {
            // Composite Simpson on [-12, 14].
            let (a, b, n) = (-12.0, 14.0, 20_000);
            let h = (b - a) / n as f64;
            let s: f64 = (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * bimodal_pdf(lambda, a + h * i as f64)
                })
                .sum::<f64>()
                * h
                / 3.0;
            assert!((s - 1.0).abs() < 1e-8, "λ={lambda}: {s}");
        }
    }

    #[test]
    fn mode_counts() {
        assert_eq!(count_modes(&pdf_grid(0.01), 0.005), 2);
        assert_eq!(count_modes(&pdf_grid(0.25), 0.005), 2);
        assert_eq!(count_modes(&pdf_grid(0.5), 0.005), 1);
        assert_eq!(count_modes(&pdf_grid(0.85), 0.005), 2);
    }

    #[test]
    fn sampling_statistics() {
        let s = bimodal_sample(0.5, 10_000, 1);
        assert!((mean_sd(&s).0 - 4.0).abs() < 0.1);

        let mut rng = stream_rng(2, 0);
        let n = 20_000;
        let first = (0..n).filter(|_| bimodal_draw(0.3, &mut rng).0 == 0).count();
        assert!((first as f64 / n as f64 - 0.4).abs() < 0.02);

        for lambda in [0.1, 0.7] {
            let s = bimodal_sample(lambda, 5000, 3);
            let ks = ks_against_cdf(&s, |y| bimodal_cdf(lambda, y)).unwrap();
            assert!(ks <= 1.63 / (5000f64).sqrt(), "λ={lambda}: {ks}");
        }
    }

    #[test]
    fn analytic_mean_matches_monte_carlo() {
        for lambda in [0.05, 0.3, 0.9] {
            let s = bimodal_sample(lambda, 100_000, 4);
            let (m, sd) = mean_sd(&s);
            assert!((m - bimodal_mean(lambda)).abs() < 4.0 * sd / (1e5f64).sqrt());
        }
    }

    #[test]
    fn cdf_is_integral_of_pdf() {
        let (a, n) = (-12.0, 40_000);
        let y = 1.3;
        let h = (y - a) / n as f64;
        let trap: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * bimodal_pdf(0.4, a + h * i as f64)
            })
            .sum::<f64>()
            * h;
        assert!((trap - bimodal_cdf(0.4, y)).abs() < 1e-8);
    }

    #[test]
    fn ensembles_are_reproducible() {
        let a = bimodal_ensemble(&midpoint_design(4), 10, 7).unwrap();
        let b = bimodal_ensemble(&midpoint_design(4), 10, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.replica(0, 0), a.replica(1, 0));
        assert!(bimodal_ensemble(&[1.5], 2, 0).is_err());
    }

    #[test]
    fn field_noise_free_replicas_identical() {
        let f = FieldModel::noise_free();
        let r = f.sample(&[1.0, 10.0, 0.5], 5, 0);
        assert!(r.iter().all(|x| x == &r[0]));
        assert_eq!(r[0], f.curve(&[1.0, 10.0, 0.5]));
        assert_eq!(f.grid().len(), 64);
    }

    #[test]
    fn field_noise_statistics() {
        let f = FieldModel::default();
        let lambda = [1.2, 8.0, 0.4];
        let count = 4000;
        let r = f.sample(&lambda, count, 5);
        let g = f.curve(&lambda);
        for x in [0, 20, 40, 63] {
            let col: Vec<f64> = r.iter().map(|v| v[x]).collect();
            let (m, sd) = mean_sd(&col);
            assert!((m - g[x]).abs() < 4.0 * sd / (count as f64).sqrt(), "x={x}");
            let logs: Vec<f64> = col.iter().map(|v| v.ln()).collect();
            let (_, lsd) = mean_sd(&logs);
            assert!((lsd - 0.1).abs() < 0.01, "x={x}: {lsd}");
        }
        // Lag-one correlation of the log-noise.
        let a: Vec<f64> = r.iter().map(|v| (v[10] / g[10]).ln()).collect();
        let b: Vec<f64> = r.iter().map(|v| (v[11] / g[11]).ln()).collect();
        let (ma, sa) = mean_sd(&a);
        let (mb, sb) = mean_sd(&b);
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (count - 1) as f64;
        assert!((cov / (sa * sb) - 0.9).abs() < 0.02);
    }

    #[test]
    fn field_space_and_design() {
        let ps = FieldModel::param_space();
        assert!((ps.lower[1] - 5.0).abs() < 1e-12 && (ps.upper[1] - 15.0).abs() < 1e-12);
        let d = FieldModel::design(&ps, 10, 1);
        assert!(d.iter().all(|l| ps.contains(l)));
        let e = FieldModel::default().ensemble(&ps, &d, 3, 2).unwrap();
        assert_eq!((e.n(), e.m(), e.width()), (10, 3, 64));
    }

    #[test]
    fn linear_model_uses_common_noise() {
        let lm = LinearModel::default();
        let e = lm.ensemble(&[vec![0.0, 0.0], vec![1.0, 1.0]], 4, 3).unwrap();
        for m in 0..4 {
            let d = e.replica(1, m)[0] - e.replica(0, m)[0];
            assert!((d - 1.5).abs() < 1e-12);
        }
    }
}

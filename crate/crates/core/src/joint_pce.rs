//! Joint stochastic–parametric polynomial chaos.
//!
//! At every training parameter point λ the replica distribution is pulled
//! back to a germ `ζ` through a kernel-density Rosenblatt map and fitted with
//! a *stochastic* PCE `y ≈ Σ_s z_s(λ) Ψ_s(ζ)`. Each coefficient map `z_s(λ)`
//! is then fitted with a Legendre (or Hermite) *parametric* PCE in the
//! rescaled inputs `ξ`, and the two layers are flattened into one series
//! `Σ_j c_j Ψ_j(ξ, ζ)`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{eval_univariate_all, graded_cmp, total_degree_count, BasisSet, GermKind, MultiIndex};
use crate::error::{check_dim, Error, Result};
use crate::expansion::sobol_partition;
pub use crate::expansion::{PcExpansion, SobolReport};
use crate::normal;
use crate::par::par_map;
use crate::regression::{least_squares_fit, select_order_by_evidence};
use crate::rosenblatt::{RosenblattMap, DEFAULT_BANDWIDTH_FACTOR};

pub const SCHEMA_VERSION: u32 = 1;
pub const RNG_NAME: &str = "ChaCha20 (rand_chacha 0.9)";

/// Germ values this close outside `[-1, 1]` are treated as rounding noise.
const BOX_SLACK: f64 = 1e-12;

fn default_germ() -> GermKind {
    GermKind::Uniform
}

/// Independent inputs and their map to the parametric germ.
///
/// With a uniform germ, `λ_i = (b_i + a_i)/2 + (b_i − a_i)/2 · ξ_i`. With a
/// normal germ, `λ_i = nominal_i + std_dev_i · ξ_i` and the box is only
/// informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_factors: Option<Vec<f64>>,
    #[serde(default = "default_germ")]
    pub germ: GermKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_dev: Option<Vec<f64>>,
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let ps = Self {
            names,
            lower,
            upper,
            nominal: None,
            scale_factors: None,
            germ: GermKind::Uniform,
            std_dev: None,
        };
        ps.validate()?;
        Ok(ps)
    }

    /// Box `[nominal − ln r, nominal + ln r]` around nominal log-rates.
    pub fn from_log_rates(names: Vec<String>, nominal: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        check_dim("scale factors", nominal.len(), r.len())?;
        if let Some(bad) = r.iter().find(|&&v| !(v > 1.0)) {
            return Err(Error::InvalidInput(format!("scale factor must exceed 1, got {bad}")));
        }
        let lower = nominal.iter().zip(&r).map(|(m, r)| m - r.ln()).collect();
        let upper = nominal.iter().zip(&r).map(|(m, r)| m + r.ln()).collect();
        let ps = Self {
            names,
            lower,
            upper,
            nominal: Some(nominal),
            scale_factors: Some(r),
            germ: GermKind::Uniform,
            std_dev: None,
        };
        ps.validate()?;
        Ok(ps)
    }

    /// Same box and names, but inputs are Gaussian `N(mean_i, std_dev_i²)`.
    /// Scale factors are dropped when `mean` moves off the box centre.
    pub fn with_normal_germ(&self, mean: Vec<f64>, std_dev: Vec<f64>) -> Result<Self> {
        let scale_factors = match &self.nominal {
            Some(nom) if *nom == mean => self.scale_factors.clone(),
            _ => None,
        };
        let ps = Self {
            nominal: Some(mean),
            scale_factors,
            std_dev: Some(std_dev),
            germ: GermKind::Normal,
            ..self.clone()
        };
        ps.validate()?;
        Ok(ps)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.names.len();
        if d == 0 {
            return Err(Error::InvalidInput("parameter space has no inputs".into()));
        }
        check_dim("lower bounds", d, self.lower.len())?;
        check_dim("upper bounds", d, self.upper.len())?;
        for i in 0..d {
            let (a, b) = (self.lower[i], self.upper[i]);
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidInput(format!(
                    "input '{}' needs finite bounds with lower < upper, got [{a}, {b}]",
                    self.names[i]
                )));
            }
        }
        if let Some(nom) = &self.nominal {
            check_dim("nominal values", d, nom.len())?;
            if let Some(r) = &self.scale_factors {
                check_dim("scale factors", d, r.len())?;
                for i in 0..d {
                    let lr = r[i].ln();
                    let tol = 1e-9 * (nom[i].abs() + lr.abs() + 1.0);
                    if (self.lower[i] - (nom[i] - lr)).abs() > tol || (self.upper[i] - (nom[i] + lr)).abs() > tol {
                        return Err(Error::InvalidInput(format!(
                            "bounds of '{}' disagree with nominal ± ln r",
                            self.names[i]
                        )));
                    }
                }
            }
        } else if self.scale_factors.is_some() {
            return Err(Error::InvalidInput("scale factors need nominal values".into()));
        }
        if self.germ == GermKind::Normal {
            let (Some(nom), Some(sd)) = (&self.nominal, &self.std_dev) else {
                return Err(Error::InvalidInput("a normal parametric germ needs nominal and std_dev".into()));
            };
            check_dim("nominal values", d, nom.len())?;
            check_dim("standard deviations", d, sd.len())?;
            if let Some(bad) = sd.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidInput(format!("standard deviation must be positive, got {bad}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn contains(&self, lambda: &[f64]) -> bool {
        lambda.len() == self.dim()
            && lambda
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&l, (&a, &b))| l >= a && l <= b)
    }

    /// Maps λ to the germ. Points outside the box are a domain error for a
    /// uniform germ.
    pub fn to_germ(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        check_dim("parameter point", self.dim(), lambda.len())?;
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameter point has non-finite values".into()));
        }
        match self.germ {
            GermKind::Uniform => (0..self.dim())
                .map(|i| {
                    let (a, b) = (self.lower[i], self.upper[i]);
                    let xi = (2.0 * lambda[i] - (a + b)) / (b - a);
                    if xi.abs() > 1.0 + BOX_SLACK {
                        Err(Error::Domain(format!(
                            "{} = {} outside [{a}, {b}]",
                            self.names[i], lambda[i]
                        )))
                    } else {
                        Ok(xi.clamp(-1.0, 1.0))
                    }
                })
                .collect(),
            GermKind::Normal => {
                let nom = self.nominal.as_ref().expect("validated");
                let sd = self.std_dev.as_ref().expect("validated");
                Ok((0..self.dim()).map(|i| (lambda[i] - nom[i]) / sd[i]).collect())
            }
        }
    }

    pub fn from_germ(&self, xi: &[f64]) -> Vec<f64> {
        match self.germ {
            GermKind::Uniform => (0..self.dim())
                .map(|i| {
                    let (a, b) = (self.lower[i], self.upper[i]);
                    0.5 * (a + b) + 0.5 * (b - a) * xi[i]
                })
                .collect(),
            GermKind::Normal => {
                let nom = self.nominal.as_ref().expect("validated");
                let sd = self.std_dev.as_ref().expect("validated");
                (0..self.dim()).map(|i| nom[i] + sd[i] * xi[i]).collect()
            }
        }
    }
}

/// Stochastic PCE of the replica distribution at one parameter point.
#[derive(Debug, Clone)]
pub struct StochasticPce {
    pub basis: BasisSet,
    pub order: usize,
    /// `S × d`.
    pub z: DMatrix<f64>,
    pub n_train: usize,
    pub residual_rrmse: Vec<f64>,
}

impl StochasticPce {
    pub fn eval(&self, zeta: &[f64]) -> Result<Vec<f64>> {
        let psi = self.basis.eval(zeta)?;
        Ok((0..self.z.ncols())
            .map(|o| psi.iter().enumerate().map(|(s, p)| self.z[(s, o)] * p).sum())
            .collect())
    }
}

/// Uniform training points for the stochastic regression: midpoints of an
/// equiprobable grid in one dimension, a seeded Latin hypercube otherwise.
pub fn training_uniforms(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 1 {
        return (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..dim {
        perm.shuffle(&mut rng);
        for (i, p) in pts.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[k] = ((perm[i] as f64 + u) / n as f64).clamp(1e-12, 1.0 - 1e-12);
        }
    }
    pts
}

fn uniform_to_germ(kind: GermKind, u: f64) -> f64 {
    match kind {
        GermKind::Uniform => 2.0 * u - 1.0,
        GermKind::Normal => normal::ppf(u),
    }
}

/// Fits `y ≈ Σ_s z_s Ψ_s(ζ)` to one parameter point's replicas (`M × d`).
pub fn fit_stochastic_pce(
    replicas: &[Vec<f64>],
    germ: GermKind,
    order: usize,
    bandwidth_factor: f64,
    n_train: Option<usize>,
    seed: u64,
    ridge: f64,
) -> Result<StochasticPce> {
    let map = RosenblattMap::fit(replicas, bandwidth_factor)?;
    let d = map.dim();
    let basis = BasisSet::total_degree(vec![germ; d], order)?;
    let n_train = n_train.unwrap_or(4 * basis.len());
    let us = training_uniforms(n_train, d, seed);
    let mut zetas = Vec::with_capacity(n_train);
    let mut ys = DMatrix::zeros(n_train, d);
    for (i, u) in us.iter().enumerate() {
        let y = map.inverse(u)?;
        for (k, v) in y.iter().enumerate() {
            ys[(i, k)] = *v;
        }
        zetas.push(u.iter().map(|&v| uniform_to_germ(germ, v)).collect::<Vec<_>>());
    }
    let design = basis.design_matrix(&zetas)?;
    let fit = least_squares_fit(&design, &ys, ridge)?;
    Ok(StochasticPce {
        basis,
        order,
        z: fit.coefficients,
        n_train,
        residual_rrmse: fit.residual_rrmse,
    })
}

/// Largest total-degree order not exceeding `max_order` whose basis has at
/// most `n` terms.
fn feasible_order(dim: usize, max_order: usize, n: usize) -> usize {
    (0..=max_order)
        .take_while(|&o| total_degree_count(dim, o).is_some_and(|c| c <= n))
        .last()
        .unwrap_or(0)
}

/// Evidence-selected parametric PCE of one coefficient map, returned as a
/// single-output expansion over the parametric germ.
pub fn fit_parametric_coeff_pce(
    param_space: &ParameterSpace,
    lambdas: &[Vec<f64>],
    targets: &[f64],
    max_order: usize,
    ridge: f64,
) -> Result<PcExpansion> {
    check_dim("parameter points/targets", lambdas.len(), targets.len())?;
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("parametric fit needs at least one point".into()));
    }
    let xi: Vec<Vec<f64>> = lambdas.iter().map(|l| param_space.to_germ(l)).collect::<Result<_>>()?;
    fit_parametric_germ(param_space.germ, param_space.dim(), &xi, targets, max_order, ridge)
}

fn fit_parametric_germ(
    germ: GermKind,
    dim: usize,
    xi: &[Vec<f64>],
    targets: &[f64],
    max_order: usize,
    ridge: f64,
) -> Result<PcExpansion> {
    let kinds = vec![germ; dim];
    let cap = if ridge > 0.0 { max_order } else { feasible_order(dim, max_order, xi.len()) };
    let order = select_order_by_evidence(xi, targets, &kinds, cap)?;
    let basis = BasisSet::total_degree(kinds, order)?;
    let design = basis.design_matrix(xi)?;
    let fit = least_squares_fit(&design, &DMatrix::from_column_slice(targets.len(), 1, targets), ridge)?;
    PcExpansion::new(basis, fit.coefficients)
}

/// Provenance of a fitted surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub bandwidth_factor: f64,
    pub n_train: usize,
    pub max_param_order: usize,
    pub ridge: f64,
    pub seeds: Vec<u64>,
    /// How the stochastic training germ points were placed.
    pub training_design: String,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub stoch_order: usize,
    pub stoch_germ: GermKind,
    pub max_param_order: usize,
    pub bandwidth_factor: f64,
    /// Stochastic training points per parameter point; `None` means 4·S.
    pub n_train: Option<usize>,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            stoch_order: 1,
            stoch_germ: GermKind::Normal,
            max_param_order: 2,
            bandwidth_factor: DEFAULT_BANDWIDTH_FACTOR,
            n_train: None,
            ridge: 0.0,
            seed: 0,
        }
    }
}

/// Joint expansion `Σ_j c_j Ψ_j(ξ, ζ)` over `d̃` parametric and `d_ζ`
/// stochastic germ dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPce {
    param_space: ParameterSpace,
    n_stoch: usize,
    stoch_order: usize,
    stoch_germ: GermKind,
    expansion: PcExpansion,
    /// `S × d`.
    per_s_orders: Vec<Vec<usize>>,
    provenance: Provenance,
    stoch_basis: BasisSet,
    /// Position of each joint term's stochastic part in `stoch_basis`.
    term_s: Vec<usize>,
}

/// Everything produced by [`build_joint_pce`].
#[derive(Debug, Clone)]
pub struct JointBuild {
    pub pce: JointPce,
    pub stochastic: Vec<StochasticPce>,
    /// `S × d` single-output parametric fits of the coefficient maps.
    pub parametric: Vec<Vec<PcExpansion>>,
    pub diagnostics: BuildDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    /// In-sample relative residual of each stochastic fit, averaged over outputs.
    pub stochastic_rrmse: Vec<f64>,
    /// `S × d` in-sample relative residual of the parametric fits.
    pub parametric_rrmse: Vec<Vec<f64>>,
}

/// Runs the full two-layer construction on `N` parameter points with `M × d`
/// replicas each.
pub fn build_joint_pce(
    param_space: &ParameterSpace,
    lambdas: &[Vec<f64>],
    replicas: &[Vec<Vec<f64>>],
    cfg: &JointConfig,
) -> Result<JointBuild> {
    param_space.validate()?;
    check_dim("parameter points/replica sets", lambdas.len(), replicas.len())?;
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("no parameter points".into()));
    }
    let xi: Vec<Vec<f64>> = lambdas.iter().map(|l| param_space.to_germ(l)).collect::<Result<_>>()?;

    let stochastic: Vec<StochasticPce> = par_map(replicas, |_, reps| {
        fit_stochastic_pce(
            reps,
            cfg.stoch_germ,
            cfg.stoch_order,
            cfg.bandwidth_factor,
            cfg.n_train,
            cfg.seed,
            cfg.ridge,
        )
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let d = stochastic[0].z.ncols();
    let s_len = stochastic[0].basis.len();
    for st in &stochastic {
        check_dim("replica output dimension", d, st.z.ncols())?;
    }

    let jobs: Vec<(usize, usize)> = (0..s_len).flat_map(|s| (0..d).map(move |o| (s, o))).collect();
    let fits: Vec<PcExpansion> = par_map(&jobs, |_, &(s, o)| {
        let targets: Vec<f64> = stochastic.iter().map(|st| st.z[(s, o)]).collect();
        fit_parametric_germ(param_space.germ, param_space.dim(), &xi, &targets, cfg.max_param_order, cfg.ridge)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut parametric: Vec<Vec<PcExpansion>> = vec![Vec::with_capacity(d); s_len];
    for ((s, _), f) in jobs.iter().zip(fits) {
        parametric[*s].push(f);
    }

    let parametric_rrmse = parametric
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter()
                .enumerate()
                .map(|(o, f)| {
                    let t: Vec<f64> = stochastic.iter().map(|st| st.z[(s, o)]).collect();
                    let p: Vec<f64> = xi.iter().map(|x| f.eval(x).map(|v| v[0])).collect::<Result<_>>()?;
                    Ok(crate::metrics::rrmse(&t, &p).unwrap_or(0.0))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = BuildDiagnostics {
        stochastic_rrmse: stochastic
            .iter()
            .map(|st| st.residual_rrmse.iter().sum::<f64>() / d as f64)
            .collect(),
        parametric_rrmse,
    };

    let provenance = Provenance {
        bandwidth_factor: cfg.bandwidth_factor,
        n_train: stochastic[0].n_train,
        max_param_order: cfg.max_param_order,
        ridge: cfg.ridge,
        seeds: vec![cfg.seed],
        training_design: if d == 1 {
            "quantile-midpoint grid".into()
        } else {
            "latin hypercube, shared across parameter points".into()
        },
        rng: RNG_NAME.into(),
    };
    let pce = assemble_joint(
        param_space,
        &stochastic[0].basis,
        cfg.stoch_order,
        &parametric,
        provenance,
    )?;
    Ok(JointBuild {
        pce,
        stochastic,
        parametric,
        diagnostics,
    })
}

/// Flattens parametric fits `a_{sp}` (indexed `[s][output]`) into a joint
/// expansion over the concatenated germ `(ξ, ζ)`.
pub fn assemble_joint(
    param_space: &ParameterSpace,
    stoch_basis: &BasisSet,
    stoch_order: usize,
    parametric: &[Vec<PcExpansion>],
    provenance: Provenance,
) -> Result<JointPce> {
    check_dim("stochastic terms", stoch_basis.len(), parametric.len())?;
    let d = parametric[0].len();
    if d == 0 {
        return Err(Error::InvalidInput("no outputs to assemble".into()));
    }
    let n_param = param_space.dim();
    let stoch_germ = stoch_basis.germ_kinds()[0];
    if stoch_basis.germ_kinds().iter().any(|&g| g != stoch_germ) {
        return Err(Error::InvalidInput("stochastic dimensions must share one germ kind".into()));
    }
    let mut all = BTreeSet::new();
    for (s, row) in parametric.iter().enumerate() {
        check_dim("outputs per stochastic term", d, row.len())?;
        let sidx = &stoch_basis.indices()[s];
        for f in row {
            check_dim("parametric germ dimension", n_param, f.basis().dim())?;
            if f.basis().germ_kinds().iter().any(|&g| g != param_space.germ) {
                return Err(Error::InvalidInput("parametric fit germ disagrees with parameter space".into()));
            }
            for p in f.basis().indices() {
                all.insert(p.concat(sidx).0);
            }
        }
    }
    let mut indices: Vec<MultiIndex> = all.into_iter().map(MultiIndex).collect();
    indices.sort_by(graded_cmp);
    let lookup: std::collections::HashMap<&MultiIndex, usize> =
        indices.iter().enumerate().map(|(j, m)| (m, j)).collect();

    let mut coeffs = DMatrix::zeros(indices.len(), d);
    let mut per_s_orders = vec![vec![0; d]; stoch_basis.len()];
    for (s, row) in parametric.iter().enumerate() {
        let sidx = &stoch_basis.indices()[s];
        for (o, f) in row.iter().enumerate() {
            per_s_orders[s][o] = f.basis().indices().iter().map(|m| m.total_degree()).max().unwrap_or(0);
            for (p, c) in f.basis().indices().iter().zip(f.coefficients().column(0).iter()) {
                let j = lookup[&p.concat(sidx)];
                // Distinct (p, s) pairs never collide.
                debug_assert_eq!(coeffs[(j, o)], 0.0);
                coeffs[(j, o)] = *c;
            }
        }
    }
    let mut kinds = vec![param_space.germ; n_param];
    kinds.extend(stoch_basis.germ_kinds());
    let basis = BasisSet::new(kinds, indices)?;
    let expansion = PcExpansion::new(basis, coeffs)?;
    JointPce::from_parts(
        param_space.clone(),
        stoch_basis.dim(),
        stoch_order,
        expansion,
        per_s_orders,
        provenance,
    )
}

impl JointPce {
    pub fn from_parts(
        param_space: ParameterSpace,
        n_stoch: usize,
        stoch_order: usize,
        expansion: PcExpansion,
        per_s_orders: Vec<Vec<usize>>,
        provenance: Provenance,
    ) -> Result<Self> {
        param_space.validate()?;
        let n_param = param_space.dim();
        let basis = expansion.basis();
        check_dim("joint germ dimension", n_param + n_stoch, basis.dim())?;
        if n_stoch == 0 {
            return Err(Error::InvalidInput("joint PCE needs a stochastic dimension".into()));
        }
        if basis.germ_kinds()[..n_param].iter().any(|&g| g != param_space.germ) {
            return Err(Error::InvalidInput("parametric germ kinds disagree with parameter space".into()));
        }
        let stoch_germ = basis.germ_kinds()[n_param];
        if basis.germ_kinds()[n_param..].iter().any(|&g| g != stoch_germ) {
            return Err(Error::InvalidInput("stochastic dimensions must share one germ kind".into()));
        }
        let stoch_basis = BasisSet::total_degree(vec![stoch_germ; n_stoch], stoch_order)?;
        let term_s = basis
            .indices()
            .iter()
            .map(|m| {
                let sidx = MultiIndex(m.0[n_param..].to_vec());
                stoch_basis.position(&sidx).ok_or_else(|| {
                    Error::InvalidInput(format!("stochastic part of {m} exceeds order {stoch_order}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_dim("per-s order rows", stoch_basis.len(), per_s_orders.len())?;
        for row in &per_s_orders {
            check_dim("per-s order columns", expansion.n_outputs(), row.len())?;
        }
        Ok(Self {
            param_space,
            n_stoch,
            stoch_order,
            stoch_germ,
            expansion,
            per_s_orders,
            provenance,
            stoch_basis,
            term_s,
        })
    }

    pub fn param_space(&self) -> &ParameterSpace {
        &self.param_space
    }

    pub fn n_param(&self) -> usize {
        self.param_space.dim()
    }

    pub fn n_stoch(&self) -> usize {
        self.n_stoch
    }

    pub fn stoch_order(&self) -> usize {
        self.stoch_order
    }

    pub fn stoch_germ(&self) -> GermKind {
        self.stoch_germ
    }

    pub fn stoch_basis(&self) -> &BasisSet {
        &self.stoch_basis
    }

    pub fn n_outputs(&self) -> usize {
        self.expansion.n_outputs()
    }

    pub fn expansion(&self) -> &PcExpansion {
        &self.expansion
    }

    pub fn basis(&self) -> &BasisSet {
        self.expansion.basis()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        self.expansion.coefficients()
    }

    pub fn per_s_orders(&self) -> &[Vec<usize>] {
        &self.per_s_orders
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Configuration that reproduces this build on new data.
    pub fn config(&self) -> JointConfig {
        let p = &self.provenance;
        JointConfig {
            stoch_order: self.stoch_order,
            stoch_germ: self.stoch_germ,
            max_param_order: p.max_param_order,
            bandwidth_factor: p.bandwidth_factor,
            n_train: Some(p.n_train),
            ridge: p.ridge,
            seed: p.seeds.first().copied().unwrap_or(0),
        }
    }

    fn check_param_germ(&self, xi: &[f64]) -> Result<()> {
        check_dim("parametric germ point", self.n_param(), xi.len())?;
        for (i, &x) in xi.iter().enumerate() {
            if !self.param_space.germ.contains(x) {
                return Err(Error::Domain(format!(
                    "parametric germ {} = {x} outside the surrogate's support",
                    self.param_space.names[i]
                )));
            }
        }
        Ok(())
    }

    fn check_stoch_germ(&self, zeta: &[f64]) -> Result<()> {
        check_dim("stochastic germ point", self.n_stoch, zeta.len())?;
        if let Some(z) = zeta.iter().find(|&&z| !self.stoch_germ.contains(z)) {
            return Err(Error::Domain(format!("stochastic germ value {z} outside support")));
        }
        Ok(())
    }

    /// `Σ_j c_j Ψ_j(ξ, ζ)`.
    pub fn sample(&self, xi: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        self.check_param_germ(xi)?;
        self.check_stoch_germ(zeta)?;
        let mut point = xi.to_vec();
        point.extend_from_slice(zeta);
        self.expansion.eval(&point)
    }

    /// Evaluates at a physical parameter point.
    pub fn sample_at(&self, lambda: &[f64], zeta: &[f64]) -> Result<Vec<f64>> {
        let xi = self.param_space.to_germ(lambda)?;
        self.sample(&xi, zeta)
    }

    /// Draws `count` realizations at `λ`.
    pub fn generate<R: Rng + ?Sized>(&self, lambda: &[f64], count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let xi = self.param_space.to_germ(lambda)?;
        self.check_param_germ(&xi)?;
        let mut point = xi.clone();
        point.resize(self.n_param() + self.n_stoch, 0.0);
        (0..count)
            .map(|_| {
                for z in &mut point[self.n_param()..] {
                    *z = self.stoch_germ.sample(rng);
                }
                self.expansion.eval(&point)
            })
            .collect()
    }

    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        (self.expansion.mean(), self.expansion.variance())
    }

    /// Stochastic coefficients `z_s(ξ) = Σ_p a_{sp} Ψ_p(ξ)` (`S × d`).
    pub fn conditional_coefficients(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        self.check_param_germ(xi)?;
        let n_param = self.n_param();
        let basis = self.basis();
        let maxd: Vec<usize> = (0..n_param)
            .map(|k| basis.indices().iter().map(|m| m.0[k]).max().unwrap_or(0))
            .collect();
        let tables: Vec<Vec<f64>> = (0..n_param)
            .map(|k| {
                let mut t = vec![0.0; maxd[k] + 1];
                eval_univariate_all(self.param_space.germ, xi[k], &mut t);
                t
            })
            .collect();
        let c = self.coefficients();
        let mut z = DMatrix::zeros(self.stoch_basis.len(), self.n_outputs());
        for (j, m) in basis.indices().iter().enumerate() {
            let psi: f64 = (0..n_param).map(|k| tables[k][m.0[k]]).product();
            let s = self.term_s[j];
            for o in 0..self.n_outputs() {
                z[(s, o)] += c[(j, o)] * psi;
            }
        }
        Ok(z)
    }

    /// Mean and variance over the stochastic germ at fixed `ξ`.
    pub fn conditional_moments(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.conditional_coefficients(xi)?;
        let norms = self.stoch_basis.norms_sq();
        let mean = z.row(0).iter().copied().collect();
        let var = (0..self.n_outputs())
            .map(|o| (1..z.nrows()).map(|s| z[(s, o)].powi(2) * norms[s]).sum())
            .collect();
        Ok((mean, var))
    }

    /// One Sobol report per output.
    pub fn sobol(&self) -> Vec<SobolReport> {
        (0..self.n_outputs())
            .map(|o| {
                let col: Vec<f64> = self.coefficients().column(o).iter().copied().collect();
                sobol_partition(self.basis(), &col, self.n_param()).expect("consistent shapes")
            })
            .collect()
    }

    pub fn to_file(&self) -> JointPceFile {
        let c = self.coefficients();
        let mut coefficients = Vec::with_capacity(c.len());
        for j in 0..c.nrows() {
            coefficients.extend(c.row(j).iter());
        }
        JointPceFile {
            schema_version: SCHEMA_VERSION,
            kind: "joint_pce".into(),
            param_space: self.param_space.clone(),
            n_stoch: self.n_stoch,
            stoch_order: self.stoch_order,
            n_outputs: self.n_outputs(),
            germ_kinds: self.basis().germ_kinds().to_vec(),
            multi_indices: self.basis().indices().iter().map(|m| m.0.clone()).collect(),
            coefficients,
            per_s_orders: self.per_s_orders.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_file(f: JointPceFile) -> Result<Self> {
        let corrupt = |e: Error| Error::Corrupt(e.to_string());
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Corrupt(format!("unsupported schema version {}", f.schema_version)));
        }
        let indices = f.multi_indices.into_iter().map(MultiIndex).collect();
        let basis = BasisSet::new(f.germ_kinds, indices).map_err(corrupt)?;
        if f.n_outputs == 0 || f.coefficients.len() != basis.len() * f.n_outputs {
            return Err(Error::Corrupt(format!(
                "expected {} x {} coefficients, found {}",
                basis.len(),
                f.n_outputs,
                f.coefficients.len()
            )));
        }
        let coeffs = DMatrix::from_row_slice(basis.len(), f.n_outputs, &f.coefficients);
        let expansion = PcExpansion::new(basis, coeffs).map_err(corrupt)?;
        Self::from_parts(f.param_space, f.n_stoch, f.stoch_order, expansion, f.per_s_orders, f.provenance)
            .map_err(corrupt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: JointPceFile = serde_json::from_str(s).map_err(|e| Error::Corrupt(e.to_string()))?;
        if f.kind != "joint_pce" {
            return Err(Error::Corrupt(format!("expected a joint_pce document, found '{}'", f.kind)));
        }
        Self::from_file(f)
    }
}

/// On-disk form of a [`JointPce`]. Coefficients are row-major (term, output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPceFile {
    pub schema_version: u32,
    pub kind: String,
    pub param_space: ParameterSpace,
    pub n_stoch: usize,
    pub stoch_order: usize,
    pub n_outputs: usize,
    pub germ_kinds: Vec<GermKind>,
    pub multi_indices: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
    pub per_s_orders: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use spce_core::datasets::{split_train_test, Ensemble};
use spce_core::joint_pce::fit_stochastic_pce;
use spce_core::kle::FieldEnsemble;
use spce_core::metrics::{mean_sd, moment_parity, rrmse, wasserstein1, MomentParity};
use spce_core::synthetic::{bimodal_sample, stream_rng};

use crate::build::build_surrogate;
use crate::surrogate::Surrogate;
use crate::{csv_err, csv_writer, sibling, write_json, CliError, CliResult, REPORT_SCHEMA_VERSION};

/// Held-out points of the bimodal benchmark.
pub const BIMODAL_HOLDOUT: [f64; 4] = [0.01, 0.25, 0.5, 0.85];
const BIMODAL_HOLDOUT_SAMPLES: usize = 20_000;

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Surrogate under test; its settings are reused for the rebuild.
    #[arg(long)]
    pub surrogate: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Seed of the train/test split over parameter points.
    #[arg(long, default_value_t = 0)]
    pub holdout_seed: u64,
    /// Training share of the parameter points.
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    /// Seed of the surrogate draws compared against held-out replicas.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report; a CSV with the same stem is written alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldParity {
    pub mean_rrmse: f64,
    pub sd_rrmse: f64,
}

/// One surrogate checked against the held-out parameter points. Latent
/// outputs are the replica vectors themselves, or KL mode scores for fields.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    /// One entry per latent output.
    pub moment_parity: Vec<MomentParity>,
    /// `[s][output]` rRMSE of predicted stochastic coefficients against
    /// coefficients fitted directly to the held-out replicas; `null` where
    /// the reference is identically zero.
    pub coefficient_rrmse: Vec<Vec<Option<f64>>>,
    pub max_coefficient_rrmse: f64,
    /// `[test point][output]`.
    pub w1: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_parity: Option<FieldParity>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoldoutW1 {
    pub lambda: f64,
    pub w1_rebuilt: f64,
    pub w1_surrogate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub kind: &'static str,
    pub model: String,
    pub fraction: f64,
    pub holdout_seed: u64,
    pub n_train: usize,
    pub test_lambdas: Vec<Vec<f64>>,
    /// Surrogate refitted on the training split with the same settings.
    pub rebuilt: ModelCheck,
    /// Surrogate read from disk.
    pub surrogate: ModelCheck,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bimodal_holdout: Option<Vec<HoldoutW1>>,
}

/// Splits `N·M` rows into `N` blocks of `M`.
fn group_rows(rows: Vec<Vec<f64>>, m: usize) -> Vec<Vec<Vec<f64>>> {
    rows.chunks(m.max(1)).map(|c| c.to_vec()).collect()
}

fn latent_replicas(sur: &Surrogate, ens: &Ensemble) -> CliResult<Vec<Vec<Vec<f64>>>> {
    Ok(match sur {
        Surrogate::Joint(_) => ens.replica_sets(),
        Surrogate::Klpc(k) => {
            let eta = k.kle().project(&FieldEnsemble::from_ensemble(ens))?;
            let rows = (0..eta.nrows()).map(|r| eta.row(r).iter().copied().collect()).collect();
            group_rows(rows, ens.m())
        }
    })
}

fn column(rows: &[Vec<f64>], o: usize) -> Vec<f64> {
    rows.iter().map(|r| r[o]).collect()
}

pub fn check_model(sur: &Surrogate, test: &Ensemble, seed: u64) -> CliResult<ModelCheck> {
    let joint = sur.joint();
    let cfg = joint.config();
    let truth = latent_replicas(sur, test)?;
    let d = joint.n_outputs();
    let s_len = joint.stoch_basis().len();

    let mut ref_z = Vec::with_capacity(test.n());
    let mut pred_z = Vec::with_capacity(test.n());
    let mut generated = Vec::with_capacity(test.n());
    for (i, (reps, lambda)) in truth.iter().zip(&test.lambdas).enumerate() {
        let st = fit_stochastic_pce(reps, cfg.stoch_germ, cfg.stoch_order, cfg.bandwidth_factor, cfg.n_train, cfg.seed, cfg.ridge)?;
        ref_z.push(st.z);
        pred_z.push(joint.conditional_coefficients(&joint.param_space().to_germ(lambda)?)?);
        generated.push(joint.generate(lambda, test.m(), &mut stream_rng(seed, i as u64))?);
    }

    let mut coefficient_rrmse = vec![vec![None; d]; s_len];
    let mut max_coefficient_rrmse: f64 = 0.0;
    for (s, row) in coefficient_rrmse.iter_mut().enumerate() {
        for (o, cell) in row.iter_mut().enumerate() {
            let t: Vec<f64> = ref_z.iter().map(|z| z[(s, o)]).collect();
            let p: Vec<f64> = pred_z.iter().map(|z| z[(s, o)]).collect();
            *cell = rrmse(&t, &p).ok();
            if let Some(v) = *cell {
                max_coefficient_rrmse = max_coefficient_rrmse.max(v);
            }
        }
    }

    let mut parity = Vec::with_capacity(d);
    for o in 0..d {
        let t: Vec<Vec<f64>> = truth.iter().map(|r| column(r, o)).collect();
        let g: Vec<Vec<f64>> = generated.iter().map(|r| column(r, o)).collect();
        parity.push(moment_parity(&t, &g)?);
    }
    let w1 = truth
        .iter()
        .zip(&generated)
        .map(|(t, g)| (0..d).map(|o| wasserstein1(&column(t, o), &column(g, o))).collect())
        .collect::<spce_core::Result<_>>()?;

    let field_parity = match sur {
        Surrogate::Joint(_) => None,
        Surrogate::Klpc(k) => {
            let (mut tm, mut gm, mut ts, mut gs) = (vec![], vec![], vec![], vec![]);
            for (i, g) in generated.iter().enumerate() {
                let fields: Vec<Vec<f64>> = g.iter().map(|e| k.kle().reconstruct_one(e)).collect::<spce_core::Result<_>>()?;
                let reps = test.replicas(i);
                for x in 0..k.grid_len() {
                    let (a, b) = mean_sd(&column(&reps, x));
                    let (c, e) = mean_sd(&column(&fields, x));
                    tm.push(a);
                    ts.push(b);
                    gm.push(c);
                    gs.push(e);
                }
            }
            Some(FieldParity {
                mean_rrmse: rrmse(&tm, &gm).unwrap_or(f64::NAN),
                sd_rrmse: rrmse(&ts, &gs).unwrap_or(f64::NAN),
            })
        }
    };

    Ok(ModelCheck {
        moment_parity: parity,
        coefficient_rrmse,
        max_coefficient_rrmse,
        w1,
        field_parity,
    })
}

fn holdout_w1(sur: &Surrogate, lambda: f64, truth: &[f64], stream: u64, seed: u64) -> CliResult<f64> {
    let draws = sur.joint().generate(&[lambda], truth.len(), &mut stream_rng(seed, stream))?;
    Ok(wasserstein1(truth, &column(&draws, 0))?)
}

pub fn validate(sur: &Surrogate, ens: &Ensemble, fraction: f64, holdout_seed: u64, seed: u64) -> CliResult<ValidationReport> {
    let (train, test) = split_train_test(ens, fraction, holdout_seed)?;
    let cfg = sur.joint().config();
    let truncation = match sur {
        Surrogate::Klpc(k) => k.kle().truncation,
        Surrogate::Joint(_) => spce_core::kle::Truncation::ExplainedVariance(spce_core::klpc::DEFAULT_EPS),
    };
    let (rebuilt, _) = build_surrogate(&train, &cfg, truncation)?;

    let bimodal_holdout = if ens.meta.model == "bimodal" && matches!(sur, Surrogate::Joint(_)) {
        let mut rows = Vec::with_capacity(BIMODAL_HOLDOUT.len());
        for (i, &l) in BIMODAL_HOLDOUT.iter().enumerate() {
            let truth = bimodal_sample(l, BIMODAL_HOLDOUT_SAMPLES, seed.wrapping_add(i as u64));
            rows.push(HoldoutW1 {
                lambda: l,
                w1_rebuilt: holdout_w1(&rebuilt, l, &truth, i as u64, seed)?,
                w1_surrogate: holdout_w1(sur, l, &truth, i as u64, seed)?,
            });
        }
        Some(rows)
    } else {
        None
    };

    Ok(ValidationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: sur.kind(),
        model: ens.meta.model.clone(),
        fraction,
        holdout_seed,
        n_train: train.n(),
        test_lambdas: test.lambdas.clone(),
        rebuilt: check_model(&rebuilt, &test, seed)?,
        surrogate: check_model(sur, &test, seed)?,
        bimodal_holdout,
    })
}

fn write_parity_csv(path: &Path, r: &ValidationReport) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["test_point", "output", "truth_mean", "rebuilt_mean", "truth_sd", "rebuilt_sd", "w1"])
        .map_err(csv_err(path))?;
    for (o, p) in r.rebuilt.moment_parity.iter().enumerate() {
        for i in 0..p.means.len() {
            w.write_record([
                i.to_string(),
                o.to_string(),
                p.means[i].0.to_string(),
                p.means[i].1.to_string(),
                p.sds[i].0.to_string(),
                p.sds[i].1.to_string(),
                r.rebuilt.w1[i][o].to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(a: &ValidateArgs) -> CliResult<()> {
    let sur = Surrogate::load(&a.surrogate)?;
    let ens = Ensemble::read(&a.data)?;
    let report = validate(&sur, &ens, a.fraction, a.holdout_seed, a.seed)?;
    write_json(&a.out, &report)?;
    write_parity_csv(&sibling(&a.out, "csv"), &report)?;
    eprintln!(
        "max coefficient rRMSE: rebuilt {:.3e}, surrogate {:.3e}",
        report.rebuilt.max_coefficient_rrmse, report.surrogate.max_coefficient_rrmse
    );
    Ok(())
}

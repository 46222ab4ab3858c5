use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use spce_core::klpc::{KlpcConfig, KlpcSurrogate};
use spce_core::lognormal_gsa::{resample_and_rebuild, LognormalSpec, ResampleReport};
use spce_core::normal;
use spce_core::Error;

use crate::surrogate::Surrogate;
use crate::{csv_err, csv_writer, sibling, write_json, CliError, CliResult, REPORT_SCHEMA_VERSION};

#[derive(Debug, Args)]
pub struct GsaArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    /// Log-normal rate spec; resamples and rebuilds with a Normal parametric germ.
    #[arg(long)]
    pub lognormal: Option<PathBuf>,
    /// JSON report; a CSV with the same stem is written alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolRow {
    /// Grid coordinate, or output index for vector surrogates.
    pub x: f64,
    pub mean: f64,
    pub sd: f64,
    pub main_effects: Vec<f64>,
    pub noise_group: f64,
    pub interaction_residual: f64,
    pub degenerate: bool,
}

#[derive(Debug, Serialize)]
pub struct LognormalSection {
    pub spec: LognormalSpec,
    pub resample: ResampleReport,
    /// `2 (1 − Φ(z/√N′)) · n_samples · d`.
    pub expected_out_of_range_coordinates: f64,
    pub rows: Vec<SobolRow>,
}

#[derive(Debug, Serialize)]
pub struct GsaReport {
    pub schema_version: u32,
    pub kind: &'static str,
    pub inputs: Vec<String>,
    pub rows: Vec<SobolRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lognormal: Option<LognormalSection>,
}

pub fn sobol_rows(sur: &Surrogate) -> Vec<SobolRow> {
    match sur {
        Surrogate::Joint(j) => {
            let (mean, var) = j.moments();
            j.sobol()
                .into_iter()
                .enumerate()
                .map(|(k, r)| row(k as f64, mean[k], var[k], r))
                .collect()
        }
        Surrogate::Klpc(k) => klpc_rows(k),
    }
}

fn klpc_rows(k: &KlpcSurrogate) -> Vec<SobolRow> {
    let (mean, var) = k.moments();
    k.sobol()
        .into_iter()
        .enumerate()
        .map(|(x, r)| row(k.grid()[x], mean[x], var[x], r))
        .collect()
}

fn row(x: f64, mean: f64, var: f64, r: spce_core::expansion::SobolReport) -> SobolRow {
    SobolRow {
        x,
        mean,
        sd: var.max(0.0).sqrt(),
        main_effects: r.main_effects,
        noise_group: r.noise_group,
        interaction_residual: r.interaction_residual,
        degenerate: r.degenerate,
    }
}

pub fn lognormal_section(k: &KlpcSurrogate, spec: LognormalSpec) -> CliResult<LognormalSection> {
    let cfg = KlpcConfig {
        truncation: k.kle().truncation,
        joint: k.joint().config(),
    };
    let (rebuilt, resample) = resample_and_rebuild(k, &spec, &cfg)?;
    let tail = 2.0 * (1.0 - normal::cdf(spec.z / (spec.n_prime as f64).sqrt()));
    Ok(LognormalSection {
        expected_out_of_range_coordinates: tail * (spec.n_samples * spec.nominal.len()) as f64,
        rows: klpc_rows(&rebuilt),
        spec,
        resample,
    })
}

fn write_rows_csv(path: &Path, inputs: &[String], rows: &[SobolRow]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["x".to_string(), "mean".into(), "sd".into()];
    header.extend(inputs.iter().map(|n| format!("S_{n}")));
    header.extend(["noise".to_string(), "residual".into()]);
    w.write_record(&header).map_err(csv_err(path))?;
    for r in rows {
        let mut rec = vec![r.x.to_string(), r.mean.to_string(), r.sd.to_string()];
        rec.extend(r.main_effects.iter().map(|v| v.to_string()));
        rec.extend([r.noise_group.to_string(), r.interaction_residual.to_string()]);
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(a: &GsaArgs) -> CliResult<()> {
    let sur = Surrogate::load(&a.surrogate)?;
    let inputs = sur.joint().param_space().names.clone();
    let lognormal = match &a.lognormal {
        None => None,
        Some(p) => {
            let Surrogate::Klpc(k) = &sur else {
                return Err(Error::InvalidInput("--lognormal needs a field (klpc) surrogate".into()).into());
            };
            let s = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let spec: LognormalSpec =
                serde_json::from_str(&s).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Some(lognormal_section(k, spec)?)
        }
    };
    let report = GsaReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: sur.kind(),
        rows: sobol_rows(&sur),
        inputs,
        lognormal,
    };
    write_json(&a.out, &report)?;
    write_rows_csv(&sibling(&a.out, "csv"), &report.inputs, &report.rows)?;
    if let Some(l) = &report.lognormal {
        write_rows_csv(&sibling(&a.out, "lognormal.csv"), &report.inputs, &l.rows)?;
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use clap::Args;
use spce_core::basis::GermKind;
use spce_core::synthetic::stream_rng;
use spce_core::Error;

use crate::surrogate::Surrogate;
use crate::{csv_err, csv_writer, CliError, CliResult};

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    /// CSV of parameter points with a header row, one column per input.
    #[arg(long)]
    pub lambda: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn read_lambdas(path: &Path, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        if row.len() != dim {
            return Err(CliError::Usage(format!(
                "{}: row {} has {} values, the surrogate takes {dim}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// `replicas` draws per row; row `i` uses random stream `i` of `seed`.
pub fn draw(sur: &Surrogate, lambdas: &[Vec<f64>], replicas: usize, seed: u64) -> CliResult<Vec<Vec<Vec<f64>>>> {
    let joint = sur.joint();
    let ps = joint.param_space();
    for (i, l) in lambdas.iter().enumerate() {
        if ps.germ == GermKind::Uniform && !ps.contains(l) {
            return Err(Error::Domain(format!(
                "row {}: {l:?} lies outside the surrogate box (lower {:?}, upper {:?})",
                i + 1,
                ps.lower,
                ps.upper
            ))
            .into());
        }
    }
    lambdas
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut rng = stream_rng(seed, i as u64);
            Ok(match sur {
                Surrogate::Joint(j) => j.generate(l, replicas, &mut rng)?,
                Surrogate::Klpc(k) => k.generate_at(l, replicas, &mut rng)?,
            })
        })
        .collect()
}

pub fn run(a: &SampleArgs) -> CliResult<()> {
    let sur = Surrogate::load(&a.surrogate)?;
    let lambdas = read_lambdas(&a.lambda, sur.joint().n_param())?;
    let draws = draw(&sur, &lambdas, a.replicas, a.seed)?;
    let mut w = csv_writer(&a.out)?;
    let mut header = vec!["row".to_string(), "replica".to_string()];
    header.extend((0..sur.width()).map(|k| format!("y{k}")));
    w.write_record(&header).map_err(csv_err(&a.out))?;
    for (i, block) in draws.iter().enumerate() {
        for (r, y) in block.iter().enumerate() {
            let mut rec = vec![i.to_string(), r.to_string()];
            rec.extend(y.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err(&a.out))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&a.out, e))?;
    Ok(())
}

//! Error metrics and distribution distances used by validation.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `sqrt(Σ(t−p)² / Σt²)`.
pub fn rrmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_dim("rrmse lengths", truth.len(), pred.len())?;
    let den: f64 = truth.iter().map(|t| t * t).sum();
    if den == 0.0 {
        return Err(Error::InvalidInput("rrmse undefined for all-zero truth".into()));
    }
    let num: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((num / den).sqrt())
}

fn sorted(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("empty sample set".into()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidInput("sample set contains NaN".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Empirical Wasserstein-1 distance between two sample sets.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    let sa = sorted(a)?;
    let sb = sorted(b)?;
    if sa.len() == sb.len() {
        return Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / sa.len() as f64);
    }
    // ∫ |F_a − F_b| dx over the merged support.
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = sa[0].min(sb[0]);
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let next = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < sa.len() && sa[i] <= next {
            i += 1;
        }
        while j < sb.len() && sb[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let sa = sorted(a)?;
    let sb = sorted(b)?;
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_against_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let s = sorted(samples)?;
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentParity {
    /// `(truth, surrogate)` per parameter point.
    pub means: Vec<(f64, f64)>,
    pub sds: Vec<(f64, f64)>,
    pub mean_rrmse: f64,
    pub sd_rrmse: f64,
}

/// Compares per-λ sample means and standard deviations of two ensembles.
/// Both inputs hold one replica vector per parameter point.
pub fn moment_parity(truth: &[Vec<f64>], surrogate: &[Vec<f64>]) -> Result<MomentParity> {
    check_dim("number of parameter points", truth.len(), surrogate.len())?;
    if truth.is_empty() {
        return Err(Error::InvalidInput("moment parity needs at least one parameter point".into()));
    }
    let mut means = Vec::with_capacity(truth.len());
    let mut sds = Vec::with_capacity(truth.len());
    for (n, (t, s)) in truth.iter().zip(surrogate).enumerate() {
        if t.is_empty() || s.is_empty() {
            return Err(Error::InvalidInput(format!("parameter point {n} has no replicas")));
        }
        let (mt, st) = mean_sd(t);
        let (ms, ss) = mean_sd(s);
        means.push((mt, ms));
        sds.push((st, ss));
    }
    let agg = |pairs: &[(f64, f64)]| -> f64 {
        let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        match rrmse(&t, &s) {
            Ok(v) => v,
            Err(_) if t == s => 0.0,
            Err(_) => f64::INFINITY,
        }
    };
    Ok(MomentParity {
        mean_rrmse: agg(&means),
        sd_rrmse: agg(&sds),
        means,
        sds,
    })
}

/// Gaussian-kernel density of `samples` evaluated on `grid`.
pub fn smoothed_density(samples: &[f64], grid: &[f64], width: f64) -> Vec<f64> {
    let norm = 1.0 / (samples.len() as f64 * width * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / width;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

/// Interior local maxima of `values` with their topographic prominence.
pub fn peaks_with_prominence(values: &[f64]) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // Walk across a plateau.
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                let peak = (i + j) / 2;
                let h = values[peak];
                let mut left_min = h;
                for k in (0..i).rev() {
                    if values[k] > h {
                        break;
                    }
                    left_min = left_min.min(values[k]);
                }
                let mut right_min = h;
                for &v in &values[j + 1..] {
                    if v > h {
                        break;
                    }
                    right_min = right_min.min(v);
                }
                out.push((peak, h - left_min.max(right_min)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Peaks whose prominence is at least `min_rel_prominence` times the
/// maximum value.
pub fn significant_peaks(values: &[f64], min_rel_prominence: f64) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peaks_with_prominence(values)
        .into_iter()
        .filter(|&(_, p)| p >= min_rel_prominence * max)
        .map(|(i, _)| i)
        .collect()
}

pub fn count_modes(values: &[f64], min_rel_prominence: f64) -> usize {
    significant_peaks(values, min_rel_prominence).len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// For a multimodal curve, whether the highest significant peak lies to the
/// right or left of the runner-up. `None` when fewer than two peaks qualify.
pub fn higher_mode_side(values: &[f64], min_rel_prominence: f64) -> Option<Side> {
    let mut peaks = significant_peaks(values, min_rel_prominence);
    if peaks.len() < 2 {
        return None;
    }
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    Some(if peaks[0] > peaks[1] { Side::Right } else { Side::Left })
}

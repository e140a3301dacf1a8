//! Residual error and consistency index across the family `D_α = D·[[1, 1], [0, α]]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{consistency_report, ComputationPath};
use crate::dynamics::{format_f64, SnapshotData};
use crate::edmd::{self, FitOptions};
use crate::error::{Error, Result};
use crate::observables::{alpha_transform, Dictionary};

pub const DEFAULT_ALPHA_MIN: f64 = 0.01;
pub const DEFAULT_ALPHA_MAX: f64 = 100.0;
pub const DEFAULT_ALPHA_COUNT: usize = 100;

/// `count` log-spaced points from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) || count == 0 {
        return Err(Error::domain("log grid needs 0 < min <= max and count >= 1"));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|i| match i {
            0 => min,
            i if i == count - 1 => max,
            i => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "E_rel")]
    pub e_rel: f64,
    #[serde(rename = "sqrt_Ic")]
    pub sqrt_ic: f64,
    /// Spectrum of `K_F` as `[re, im]` pairs, ordered by descending modulus.
    pub eigenvalues: Vec<[f64; 2]>,
    /// Set when the fit failed at this α; the numeric fields are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    pub fn e(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.e).collect()
    }

    pub fn e_rel(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.e_rel).collect()
    }

    pub fn sqrt_ic(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sqrt_ic).collect()
    }

    fn ok_points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_none())
    }

    /// `max E_rel / min E_rel` over the successful points.
    pub fn e_rel_ratio(&self) -> f64 {
        let (lo, hi) = self
            .ok_points()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.e_rel), hi.max(p.e_rel)));
        hi / lo
    }

    /// `max |√I_C(α) − mean|` over the successful points.
    pub fn sqrt_ic_spread(&self) -> f64 {
        let vals: Vec<f64> = self.ok_points().map(|p| p.sqrt_ic).collect();
        if vals.is_empty() {
            return f64::NAN;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    }

    pub fn failed(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    /// `alpha,E,E_rel,sqrt_Ic`; failed rows carry NaN.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,E,E_rel,sqrt_Ic\n");
        for p in &self.points {
            let row = [p.alpha, p.e, p.e_rel, p.sqrt_ic].map(format_f64).join(",");
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

fn sweep_point(base: &Dictionary, data: &SnapshotData, alpha: f64, opts: FitOptions) -> SweepPoint {
    let run = || -> Result<SweepPoint> {
        let dict = base.transform(&alpha_transform(alpha)?)?;
        let model = edmd::fit_forward_backward(&dict, &data.x, &data.y, opts)?;
        let residual = edmd::residual_error(&model)?;
        let report = consistency_report(&model, ComputationPath::Orthonormalized)?;
        let eigenvalues = edmd::edmd_eigenpairs(&model)
            .values()
            .iter()
            .map(|z: &Complex64| [z.re, z.im])
            .collect();
        Ok(SweepPoint {
            alpha,
            e: residual.absolute,
            e_rel: residual.relative,
            sqrt_ic: report.sqrt_index,
            eigenvalues,
            error: None,
        })
    };
    run().unwrap_or_else(|e| SweepPoint {
        alpha,
        e: f64::NAN,
        e_rel: f64::NAN,
        sqrt_ic: f64::NAN,
        eigenvalues: Vec::new(),
        error: Some(e.to_string()),
    })
}

/// Fits every `D_α` on the same data. Points run in parallel on the current
/// rayon pool and come back in grid order.
pub fn alpha_sweep(base: &Dictionary, data: &SnapshotData, alphas: &[f64], opts: FitOptions) -> Result<SweepResult> {
    if base.len() != 2 {
        return Err(Error::domain(format!(
            "the alpha family needs a two-function dictionary, got {}",
            base.len()
        )));
    }
    let points = alphas
        .par_iter()
        .map(|&alpha| sweep_point(base, data, alpha, opts))
        .collect();
    Ok(SweepResult { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::example1_dataset;
    use crate::observables::cubic_example_dictionary;

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = log_grid(0.01, 100.0, 5).unwrap();
        assert_eq!(g[0], 0.01);
        assert_eq!(g[4], 100.0);
        assert!((g[2] - 1.0).abs() < 1e-12);
        assert!((g[1] / g[0] - 10.0).abs() < 1e-9);
        assert_eq!(log_grid(1.0, 1.0, 1).unwrap(), vec![1.0]);
        assert!(log_grid(0.0, 1.0, 3).is_err());
        assert!(log_grid(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn residual_varies_while_index_is_constant() {
        let data = example1_dataset(7);
        let grid = log_grid(DEFAULT_ALPHA_MIN, DEFAULT_ALPHA_MAX, 25).unwrap();
        let r = alpha_sweep(&cubic_example_dictionary(), &data, &grid, FitOptions::default()).unwrap();
        assert_eq!(r.failed(), 0);
        assert!(r.e_rel_ratio() >= 10.0);
        assert!(r.sqrt_ic_spread() <= 1e-8);
        let e_rel = r.e_rel();
        let argmin = (0..e_rel.len()).min_by(|&i, &j| e_rel[i].total_cmp(&e_rel[j])).unwrap();
        assert_eq!(argmin, 0);
        let e = r.e();
        assert!(e.iter().copied().fold(f64::INFINITY, f64::min) < 0.1 * e.iter().copied().fold(0.0, f64::max));
        // spectrum of K_F does not depend on α
        for p in &r.points[1..] {
            for (a, b) in p.eigenvalues.iter().zip(&r.points[0].eigenvalues) {
                assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn csv_layout() {
        let data = example1_dataset(1);
        let r = alpha_sweep(&cubic_example_dictionary(), &data, &[1.0], FitOptions::default()).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("alpha,E,E_rel,sqrt_Ic"));
        assert_eq!(lines.next().unwrap().split(',').count(), 4);
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn failed_points_are_flagged_not_fatal() {
        let data = example1_dataset(1);
        // columns x and x + α(x³ − x²) coincide at α = 0: rejected as a transform
        let r = alpha_sweep(&cubic_example_dictionary(), &data, &[1.0, 0.0, 2.0], FitOptions::default()).unwrap();
        assert_eq!(r.failed(), 1);
        assert!(r.points[1].e.is_nan() && r.points[1].error.is_some());
        assert!(r.points[2].error.is_none());
    }

    #[test]
    fn rejects_wrong_dictionary_size() {
        let d = Dictionary::monomials(1, &[vec![1]]).unwrap();
        assert!(alpha_sweep(&d, &example1_dataset(1), &[1.0], FitOptions::default()).is_err());
    }
}

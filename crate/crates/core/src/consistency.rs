//! Consistency matrix `M_C = I − K_F K_B`, the consistency index, and the
//! worst-case prediction error over the dictionary span.
//!
//! The default path never forms `N × N` matrices: with orthonormal bases
//! `Q_X`, `Q_Y` of the ranges of `D(X)`, `D(Y)` and `G = Q_Xᵀ Q_Y`, the
//! consistency matrix in `Q_X` coordinates is the symmetric PSD matrix
//! `I − G Gᵀ`, so `I_C = 1 − σ_min(G)²`. The singular values of `G` are the
//! cosines of the principal angles between the two ranges.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::edmd::{self, EdmdModel, FitOptions};
use crate::error::{DataSide, Error, Result};
use crate::linalg::{self, ThinSvd};
use crate::observables::{BasisTransform, DataMatrix, Dictionary};

/// Largest `N` for which `projection_difference_sprad` forms `N × N` matrices.
pub const DEFAULT_PROJECTION_GUARD: usize = 2000;

/// Pass threshold of [`verify_basis_invariance`].
pub const BASIS_INVARIANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComputationPath {
    /// Symmetric form `I − G Gᵀ` from orthonormal bases.
    #[default]
    Orthonormalized,
    /// Spectrum of `I − K_F K_B` as defined.
    Direct,
}

impl std::fmt::Display for ComputationPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComputationPath::Orthonormalized => "orthonormalized",
            ComputationPath::Direct => "direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngleData {
    /// `G = Q_Xᵀ Q_Y`
    pub cross_gram: DMatrix<f64>,
    /// Cosines of the principal angles, descending.
    pub singular_values: Vec<f64>,
}

impl PrincipalAngleData {
    fn from_bases(qx: &DMatrix<f64>, qy: &DMatrix<f64>) -> Self {
        let cross_gram = qx.transpose() * qy;
        let singular_values = ThinSvd::new(&cross_gram).singular_values.iter().copied().collect();
        PrincipalAngleData {
            cross_gram,
            singular_values,
        }
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    /// Principal angles in radians, ascending.
    pub fn angles(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s.clamp(-1.0, 1.0).acos()).collect()
    }

    /// `I − G Gᵀ`
    pub fn symmetric_consistency(&self) -> DMatrix<f64> {
        let n = self.cross_gram.nrows();
        DMatrix::identity(n, n) - &self.cross_gram * self.cross_gram.transpose()
    }
}

/// `M_C = I − K_F K_B`.
///
/// With full column rank the product collapses to
/// `V_x Σ_x⁻¹ (I − GGᵀ) Σ_x V_xᵀ`, which is what gets evaluated: subtracting
/// the explicit product from `I` loses roughly `cond(D(X))²·ε`, the factored
/// form only `cond(D(X))·ε`.
pub fn consistency_matrix(model: &EdmdModel) -> DMatrix<f64> {
    let (sx, sy) = (model.svd_x(), model.svd_y());
    let inner = PrincipalAngleData::from_bases(&sx.u, &sy.u).symmetric_consistency();
    let right = DMatrix::from_diagonal(&sx.singular_values) * &sx.v_t;
    sx.coefficient_map() * inner * right
}

fn symmetric_index(angles: &PrincipalAngleData) -> (f64, Vec<f64>) {
    let (raw, _) = linalg::symmetric_eigen_desc(&angles.symmetric_consistency());
    let index = raw.first().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    (index, raw)
}

/// Consistency index from the two data matrices, via orthonormal bases.
pub fn consistency_index(dx: &DataMatrix, dy: &DataMatrix, opts: FitOptions) -> Result<(f64, PrincipalAngleData)> {
    let model = EdmdModel::fit(dx.clone(), dy.clone(), opts)?;
    Ok(model_index(&model))
}

fn model_index(model: &EdmdModel) -> (f64, PrincipalAngleData) {
    let angles = PrincipalAngleData::from_bases(&model.svd_x().u, &model.svd_y().u);
    let (index, _) = symmetric_index(&angles);
    (index, angles)
}

/// `sprad(P_Y − P_X)` from explicitly formed `N × N` orthogonal projectors.
pub fn projection_difference_sprad(dx: &DataMatrix, dy: &DataMatrix, guard: usize, opts: FitOptions) -> Result<f64> {
    if dx.matrix().shape() != dy.matrix().shape() {
        return Err(Error::domain("data matrices differ in shape"));
    }
    let n = dx.samples();
    if n > guard {
        return Err(Error::TooLarge { n, guard });
    }
    for (m, side) in [(dx, DataSide::X), (dy, DataSide::Y)] {
        let report = edmd::check_full_rank(m, opts.rank_tol);
        if !report.full_column_rank {
            return Err(Error::RankDeficient { side, report });
        }
    }
    let diff = linalg::range_projector(dy.matrix()) - linalg::range_projector(dx.matrix());
    Ok(diff.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Relative RMS one-step prediction error of `f = D(·)v_f` over the snapshots:
/// `‖D(Y)v − D(X)K_F v‖ / ‖D(Y)v‖`.
pub fn rrmse(model: &EdmdModel, v_f: &[Complex64]) -> Result<f64> {
    if v_f.len() != model.dim() {
        return Err(Error::domain(format!(
            "coefficient vector has length {}, dictionary has {} functions",
            v_f.len(),
            model.dim()
        )));
    }
    let v = DVector::from_column_slice(v_f);
    let dy = linalg::to_complex(model.dy().matrix());
    let truth = &dy * &v;
    let norm = truth.norm();
    let threshold = 1e-14 * model.dy().matrix().norm() * v.norm();
    if norm <= threshold {
        return Err(Error::DegenerateFunction { norm, threshold });
    }
    let predicted = linalg::to_complex(model.dx().matrix()) * (linalg::to_complex(model.kf()) * &v);
    Ok((truth - predicted).norm() / norm)
}

pub fn rrmse_real(model: &EdmdModel, v_f: &[f64]) -> Result<f64> {
    let v: Vec<Complex64> = v_f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    rrmse(model, &v)
}

/// A function in the dictionary span attaining the largest RRMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// Unit-norm coefficients; first non-negligible entry non-negative.
    pub v: Vec<f64>,
    pub rrmse: f64,
}

/// Builds `g*(·) = D(·)v*` with `D(Y)v* = Q_Y c`, where `c` is the right
/// singular vector of `G` for `σ_min(G)`. Its RRMSE is `√I_C`.
pub fn worst_case_function(model: &EdmdModel) -> Result<WorstCase> {
    let angles = PrincipalAngleData::from_bases(&model.svd_x().u, &model.svd_y().u);
    worst_case_from(model, &angles)
}

fn worst_case_from(model: &EdmdModel, angles: &PrincipalAngleData) -> Result<WorstCase> {
    let g_svd = ThinSvd::new(&angles.cross_gram);
    let last = g_svd.singular_values.len() - 1;
    let c = g_svd.v_t.row(last).transpose();
    let mut v = model.svd_y().coefficient_map() * c;
    v /= v.norm();
    let scale = v.amax();
    if let Some(first) = v.iter().copied().find(|e| e.abs() > 1e-12 * scale) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    let v: Vec<f64> = v.iter().copied().collect();
    let rrmse = rrmse_real(model, &v)?;
    Ok(WorstCase { v, rrmse })
}

/// `√(mean |v_i|²)`, the `L₂` norm under the empirical measure on the samples.
pub fn empirical_l2_norm(values: &[Complex64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("empirical norm of an empty sample"));
    }
    let sum: f64 = values.iter().map(|z| z.norm_sqr()).sum();
    Ok((sum / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    /// `I − K_F K_B` in the dictionary's own basis.
    pub consistency_matrix: DMatrix<f64>,
    pub index: f64,
    pub sqrt_index: f64,
    /// Clamped to `[0, 1]`, descending.
    pub eigenvalues: Vec<f64>,
    /// Before clamping.
    pub raw_eigenvalues: Vec<f64>,
    pub worst_case: WorstCase,
    pub principal_angles: PrincipalAngleData,
    pub path: ComputationPath,
}

impl ConsistencyReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            ic: self.index,
            sqrt_ic: self.sqrt_index,
            eigenvalues: self.eigenvalues.clone(),
            raw_eigenvalues: self.raw_eigenvalues.clone(),
            worst_case_v: self.worst_case.v.clone(),
            worst_case_rrmse: self.worst_case.rrmse,
            principal_cosines: self.principal_angles.singular_values.clone(),
            path: self.path,
        }
    }
}

/// Serialized form of a [`ConsistencyReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportJson {
    #[serde(rename = "Ic")]
    pub ic: f64,
    #[serde(rename = "sqrtIc")]
    pub sqrt_ic: f64,
    pub eigenvalues: Vec<f64>,
    pub raw_eigenvalues: Vec<f64>,
    pub worst_case_v: Vec<f64>,
    pub worst_case_rrmse: f64,
    pub principal_cosines: Vec<f64>,
    pub path: ComputationPath,
}

pub fn consistency_report(model: &EdmdModel, path: ComputationPath) -> Result<ConsistencyReport> {
    let mc = consistency_matrix(model);
    let angles = PrincipalAngleData::from_bases(&model.svd_x().u, &model.svd_y().u);
    let (index, raw) = match path {
        ComputationPath::Orthonormalized => symmetric_index(&angles),
        ComputationPath::Direct => {
            // Literal definition, kept independent of the factored matrix.
            let n = model.dim();
            let ev = linalg::eigenvalues(&(DMatrix::identity(n, n) - model.kf() * model.kb()));
            let sprad = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut raw: Vec<f64> = ev.iter().map(|z| z.re).collect();
            raw.sort_by(|a, b| b.total_cmp(a));
            (sprad.clamp(0.0, 1.0), raw)
        }
    };
    let eigenvalues = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let worst_case = worst_case_from(model, &angles)?;
    Ok(ConsistencyReport {
        consistency_matrix: mc,
        index,
        sqrt_index: index.sqrt(),
        eigenvalues,
        raw_eigenvalues: raw,
        worst_case,
        principal_angles: angles,
        path,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// `‖M_C(D·R) − R⁻¹ M_C(D) R‖_F / max(1, ‖M_C(D)‖_F)`
    pub similarity_defect: f64,
    /// Hausdorff distance between the two spectra in the complex plane.
    pub spectrum_distance: f64,
    pub passed: bool,
}

/// Checks that `M_C(D·R) = R⁻¹ M_C(D) R` and that the spectra coincide.
pub fn verify_basis_invariance(
    dict: &Dictionary,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r: &BasisTransform,
    opts: FitOptions,
) -> Result<InvarianceReport> {
    let base = edmd::fit_forward_backward(dict, x, y, opts)?;
    let transformed = edmd::fit_forward_backward(&dict.transform(r)?, x, y, opts)?;
    let mc = consistency_matrix(&base);
    let mc_t = consistency_matrix(&transformed);
    let similar = r.inverse() * &mc * r.matrix();
    let similarity_defect = (&mc_t - similar).norm() / mc.norm().max(1.0);
    let spectrum_distance = hausdorff(&linalg::eigenvalues(&mc), &linalg::eigenvalues(&mc_t));
    Ok(InvarianceReport {
        similarity_defect,
        spectrum_distance,
        passed: similarity_defect <= BASIS_INVARIANCE_TOL && spectrum_distance <= BASIS_INVARIANCE_TOL,
    })
}

fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let directed = |p: &[Complex64], q: &[Complex64]| {
        p.iter()
            .map(|z| q.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

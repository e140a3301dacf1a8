//! Forward and backward EDMD fits.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DataSide, Error, Result};
use crate::linalg::{self, ThinSvd};
use crate::observables::{matrix_from_rows, rows_of, DataMatrix, Dictionary};

/// Eigenvector matrices with a condition number above this are flagged.
pub const DEFECTIVE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Absolute singular value threshold for the numerical rank. `None`
    /// selects `max(N, N_d)·ε·σ_max`.
    pub rank_tol: Option<f64>,
}

/// Numerical rank diagnostics of a data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub numerical_rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub rank_tolerance: f64,
    pub full_column_rank: bool,
}

impl RankReport {
    fn from_svd(svd: &ThinSvd, rows: usize, cols: usize, rank_tol: Option<f64>) -> Self {
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let tol = rank_tol
            .unwrap_or_else(|| linalg::default_rank_tolerance(rows, cols, svd.sigma_max()));
        let numerical_rank = singular_values.iter().filter(|&&s| s > tol).count();
        RankReport {
            numerical_rank,
            singular_values,
            rank_tolerance: tol,
            full_column_rank: numerical_rank == cols,
        }
    }
}

/// Numerical rank of `m` from its singular values. Never fails.
pub fn check_full_rank(m: &DataMatrix, rank_tol: Option<f64>) -> RankReport {
    let (rows, cols) = m.matrix().shape();
    if rows == 0 || cols == 0 {
        return RankReport {
            numerical_rank: 0,
            singular_values: Vec::new(),
            rank_tolerance: rank_tol.unwrap_or(0.0),
            full_column_rank: cols == 0,
        };
    }
    RankReport::from_svd(&ThinSvd::new(m.matrix()), rows, cols, rank_tol)
}

fn factor(m: &DataMatrix, side: DataSide, rank_tol: Option<f64>) -> Result<(ThinSvd, RankReport)> {
    let (rows, cols) = m.matrix().shape();
    if cols == 0 {
        return Err(Error::domain("data matrix has no columns"));
    }
    if rows == 0 {
        return Err(Error::domain("data matrix has no rows"));
    }
    let svd = ThinSvd::new(m.matrix());
    let report = RankReport::from_svd(&svd, rows, cols, rank_tol);
    if !report.full_column_rank {
        return Err(Error::RankDeficient { side, report });
    }
    Ok((svd, report))
}

fn check_same_shape(dx: &DataMatrix, dy: &DataMatrix) -> Result<()> {
    if dx.matrix().shape() != dy.matrix().shape() {
        return Err(Error::domain(format!(
            "data matrices differ in shape: {:?} vs {:?}",
            dx.matrix().shape(),
            dy.matrix().shape()
        )));
    }
    Ok(())
}

/// `K = D(X)^† D(Y)`, the minimizer of `‖D(Y) − D(X)K‖_F`.
pub fn edmd_solve(dx: &DataMatrix, dy: &DataMatrix, opts: FitOptions) -> Result<DMatrix<f64>> {
    check_same_shape(dx, dy)?;
    let (svd, _) = factor(dx, DataSide::X, opts.rank_tol)?;
    Ok(svd.solve(dy.matrix()))
}

/// Forward and backward EDMD matrices on one snapshot set, with the
/// factorizations of both data matrices.
#[derive(Debug, Clone)]
pub struct EdmdModel {
    kf: DMatrix<f64>,
    kb: DMatrix<f64>,
    dx: DataMatrix,
    dy: DataMatrix,
    rank_x: RankReport,
    rank_y: RankReport,
    svd_x: ThinSvd,
    svd_y: ThinSvd,
    dictionary: Option<Dictionary>,
}

impl EdmdModel {
    /// Fits `K_F = D(X)^† D(Y)` and `K_B = D(Y)^† D(X)`.
    pub fn fit(dx: DataMatrix, dy: DataMatrix, opts: FitOptions) -> Result<Self> {
        check_same_shape(&dx, &dy)?;
        let (svd_x, rank_x) = factor(&dx, DataSide::X, opts.rank_tol)?;
        let (svd_y, rank_y) = factor(&dy, DataSide::Y, opts.rank_tol)?;
        let kf = svd_x.solve(dy.matrix());
        let kb = svd_y.solve(dx.matrix());
        Ok(EdmdModel {
            kf,
            kb,
            dx,
            dy,
            rank_x,
            rank_y,
            svd_x,
            svd_y,
            dictionary: None,
        })
    }

    pub fn kf(&self) -> &DMatrix<f64> {
        &self.kf
    }

    pub fn kb(&self) -> &DMatrix<f64> {
        &self.kb
    }

    pub fn dx(&self) -> &DataMatrix {
        &self.dx
    }

    pub fn dy(&self) -> &DataMatrix {
        &self.dy
    }

    pub fn rank_x(&self) -> &RankReport {
        &self.rank_x
    }

    pub fn rank_y(&self) -> &RankReport {
        &self.rank_y
    }

    pub(crate) fn svd_x(&self) -> &ThinSvd {
        &self.svd_x
    }

    pub(crate) fn svd_y(&self) -> &ThinSvd {
        &self.svd_y
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        self.dictionary.as_ref()
    }

    /// Number of dictionary functions.
    pub fn dim(&self) -> usize {
        self.kf.nrows()
    }

    pub fn samples(&self) -> usize {
        self.dx.samples()
    }

    pub fn export(&self) -> ModelExport {
        ModelExport {
            kf: rows_of(&self.kf),
            kb: rows_of(&self.kb),
            nd: self.dim(),
            rank: RankPair {
                x: self.rank_x.clone(),
                y: self.rank_y.clone(),
            },
        }
    }
}

/// Evaluates `dict` on both state matrices and fits forward and backward.
pub fn fit_forward_backward(
    dict: &Dictionary,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    opts: FitOptions,
) -> Result<EdmdModel> {
    if x.shape() != y.shape() {
        return Err(Error::domain(format!(
            "state matrices differ in shape: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let dx = dict.evaluate(x)?;
    let dy = dict.evaluate(y)?;
    let mut model = EdmdModel::fit(dx, dy, opts)?;
    model.dictionary = Some(dict.clone());
    Ok(model)
}

/// The EDMD predictor `D(·)·K_F·v_f` of `𝒦f` for `f = D(·)·v_f`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub coefficients: DVector<Complex64>,
    pub dictionary: Option<Dictionary>,
}

impl Predictor {
    /// Predictions at the rows of an evaluated data matrix.
    pub fn evaluate_rows(&self, d: &DataMatrix) -> Result<DVector<Complex64>> {
        if d.functions() != self.coefficients.len() {
            return Err(Error::domain(format!(
                "data matrix has {} columns, predictor has {} coefficients",
                d.functions(),
                self.coefficients.len()
            )));
        }
        Ok(linalg::to_complex(d.matrix()) * &self.coefficients)
    }

    /// Prediction at a single state; needs the dictionary the model was fit with.
    pub fn evaluate(&self, x: &[f64]) -> Result<Complex64> {
        let dict = self
            .dictionary
            .as_ref()
            .ok_or_else(|| Error::domain("predictor has no dictionary attached"))?;
        let row = dict.evaluate_state(x)?;
        Ok(row
            .iter()
            .zip(self.coefficients.iter())
            .map(|(d, c)| c * *d)
            .sum())
    }
}

pub fn predict(model: &EdmdModel, v_f: &[Complex64]) -> Result<Predictor> {
    if v_f.len() != model.dim() {
        return Err(Error::domain(format!(
            "coefficient vector has length {}, dictionary has {} functions",
            v_f.len(),
            model.dim()
        )));
    }
    let v = DVector::from_column_slice(v_f);
    Ok(Predictor {
        coefficients: linalg::to_complex(model.kf()) * v,
        dictionary: model.dictionary.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualError {
    /// `‖D(Y) − D(X)K_F‖_F`
    #[serde(rename = "E")]
    pub absolute: f64,
    /// `E / ‖D(Y)‖_F`
    #[serde(rename = "E_rel")]
    pub relative: f64,
}

pub fn residual_error(model: &EdmdModel) -> Result<ResidualError> {
    let dy = model.dy.matrix();
    let norm_y = dy.norm();
    if norm_y == 0.0 {
        return Err(Error::DegenerateData("‖D(Y)‖_F = 0".into()));
    }
    let absolute = (dy - model.dx.matrix() * &model.kf).norm();
    Ok(ResidualError {
        absolute,
        relative: absolute / norm_y,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: Complex64,
    /// Unit norm; the largest-magnitude entry is real and positive.
    pub vector: DVector<Complex64>,
}

#[derive(Debug, Clone)]
pub struct Eigenpairs {
    /// Sorted by descending `|λ|`, then descending real part, then
    /// descending imaginary part.
    pub pairs: Vec<Eigenpair>,
    /// 2-norm condition number of the eigenvector matrix.
    pub vector_condition: f64,
    pub defective: bool,
}

impl Eigenpairs {
    pub fn values(&self) -> Vec<Complex64> {
        self.pairs.iter().map(|p| p.value).collect()
    }
}

/// Descending modulus, then descending real part, then descending imaginary part.
pub fn eigen_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

pub fn edmd_eigenpairs(model: &EdmdModel) -> Eigenpairs {
    eigenpairs_of(model.kf())
}

/// Eigendecomposition of a general real square matrix.
pub fn eigenpairs_of(k: &DMatrix<f64>) -> Eigenpairs {
    let n = k.nrows();
    let mut values = linalg::eigenvalues(k);
    values.sort_by(eigen_order);
    let scale = k.norm().max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-8 * scale;
    let kc = linalg::to_complex(k);

    let mut pairs = Vec::with_capacity(n);
    let mut i = 0;
    while i < values.len() {
        // a cluster of (numerically) repeated eigenvalues shares one null space
        let mut j = i + 1;
        while j < values.len() && (values[j] - values[i]).norm() <= cluster_tol {
            j += 1;
        }
        let m = j - i;
        let mean: Complex64 = values[i..j].iter().sum::<Complex64>() / m as f64;
        let shifted = &kc - DMatrix::<Complex64>::identity(n, n) * mean;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("v_t requested");
        // geometric multiplicity; a missing eigenvector repeats the last one so
        // the eigenvector matrix comes out singular
        let null_dim = svd
            .singular_values
            .iter()
            .filter(|&&s| s <= cluster_tol)
            .count()
            .clamp(1, m);
        for (slot, value) in values[i..j].iter().enumerate() {
            let row = n - 1 - slot.min(null_dim - 1);
            let v = DVector::from_iterator(n, v_t.row(row).iter().map(|z| z.conj()));
            pairs.push(Eigenpair {
                value: *value,
                vector: normalize_phase(v),
            });
        }
        i = j;
    }

    let vmat = DMatrix::from_fn(n, n, |r, c| pairs[c].vector[r]);
    let s = vmat.singular_values();
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    let vector_condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Eigenpairs {
        pairs,
        vector_condition,
        defective: vector_condition.is_nan() || vector_condition > DEFECTIVE_CONDITION,
    }
}

fn normalize_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let pivot = v
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, z)| if z.norm() > best.1 * (1.0 + 1e-12) { (i, z.norm()) } else { best })
        .0;
    let phase = v[pivot] / v[pivot].norm();
    v.apply(|z| *z /= phase * norm);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPair {
    pub x: RankReport,
    pub y: RankReport,
}

/// JSON form of a fitted model; matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    #[serde(rename = "Kf")]
    pub kf: Vec<Vec<f64>>,
    #[serde(rename = "Kb")]
    pub kb: Vec<Vec<f64>>,
    #[serde(rename = "Nd")]
    pub nd: usize,
    pub rank: RankPair,
}

impl ModelExport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model export is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let export: ModelExport = serde_json::from_str(text)?;
        let (kf, kb) = (export.kf_matrix()?, export.kb_matrix()?);
        if kf.shape() != (export.nd, export.nd) || kb.shape() != (export.nd, export.nd) {
            return Err(Error::domain(format!(
                "Kf/Kb must be {0}x{0}",
                export.nd
            )));
        }
        Ok(export)
    }

    pub fn kf_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.kf, "Kf")
    }

    pub fn kb_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.kb, "Kb")
    }
}

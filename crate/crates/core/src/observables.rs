//! Dictionaries of scalar observables and linear changes of basis.
//!
//! A [`Dictionary`] is a base family of observables (monomials or arbitrary
//! closures) together with an optional coefficient matrix `C`, so that the
//! dictionary row at a state `x` is `B(x)·C`. Basis transforms are composed
//! into `C` as exact matrix products, which keeps every dictionary derived
//! from the same base linearly related to it.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Transforms whose reciprocal condition number falls below this are rejected.
pub const MIN_TRANSFORM_RCOND: f64 = 1e-12;

pub type ObservableFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Observable {
    /// `∏ x_k^{e_k}`
    Monomial(Vec<u32>),
    Closure(ObservableFn),
}

impl Observable {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::Monomial(exps) => x
                .iter()
                .zip(exps)
                .map(|(xi, &e)| xi.powi(e as i32))
                .product(),
            Observable::Closure(f) => f(x),
        }
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Monomial(e) => f.debug_tuple("Monomial").field(e).finish(),
            Observable::Closure(_) => f.write_str("Closure(..)"),
        }
    }
}

/// Evaluated dictionary: row `i` holds `D(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        DataMatrix(values)
    }

    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Self {
        DataMatrix(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.0.nrows()
    }

    /// Number of dictionary functions `N_d`.
    pub fn functions(&self) -> usize {
        self.0.ncols()
    }
}

impl From<DMatrix<f64>> for DataMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        DataMatrix(m)
    }
}

/// An invertible `N_d × N_d` change of basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTransform {
    matrix: DMatrix<f64>,
    rcond: f64,
}

impl BasisTransform {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::domain(format!(
                "basis transform must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let rcond = linalg::reciprocal_condition(&matrix);
        if rcond.is_nan() || rcond < MIN_TRANSFORM_RCOND {
            return Err(Error::InvalidTransform {
                rcond,
                threshold: MIN_TRANSFORM_RCOND,
            });
        }
        Ok(BasisTransform { matrix, rcond })
    }

    pub fn identity(n: usize) -> Self {
        BasisTransform {
            matrix: DMatrix::identity(n, n),
            rcond: 1.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn reciprocal_condition(&self) -> f64 {
        self.rcond
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.matrix
            .clone()
            .try_inverse()
            .expect("transform checked invertible at construction")
    }

    /// The transform `self · other`.
    pub fn then(&self, other: &BasisTransform) -> Result<BasisTransform> {
        BasisTransform::new(&self.matrix * &other.matrix)
    }
}

/// An ordered family of `N_d` scalar observables on `Rⁿ`.
#[derive(Clone)]
pub struct Dictionary {
    n: usize,
    base: Arc<[Observable]>,
    coefficients: Option<DMatrix<f64>>,
    labels: Vec<String>,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dictionary")
            .field("n", &self.n)
            .field("base", &self.base)
            .field("coefficients", &self.coefficients)
            .field("labels", &self.labels)
            .finish()
    }
}

impl Dictionary {
    /// Dictionary whose functions are exactly `observables`.
    pub fn new(n: usize, observables: Vec<Observable>, labels: Option<Vec<String>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("state dimension must be at least 1"));
        }
        if observables.is_empty() {
            return Err(Error::domain("a dictionary needs at least one function"));
        }
        for obs in &observables {
            if let Observable::Monomial(e) = obs {
                if e.len() != n {
                    return Err(Error::domain(format!(
                        "monomial exponent {:?} has length {}, expected {}",
                        e,
                        e.len(),
                        n
                    )));
                }
            }
        }
        let labels = match labels {
            Some(l) if l.len() != observables.len() => {
                return Err(Error::domain(format!(
                    "{} labels for {} functions",
                    l.len(),
                    observables.len()
                )))
            }
            Some(l) => l,
            None => observables
                .iter()
                .enumerate()
                .map(|(i, o)| match o {
                    Observable::Monomial(e) => monomial_label(e),
                    Observable::Closure(_) => format!("d{}", i + 1),
                })
                .collect(),
        };
        Ok(Dictionary {
            n,
            base: observables.into(),
            coefficients: None,
            labels,
        })
    }

    /// Dictionary of user-supplied closures.
    pub fn from_fns<F>(n: usize, fns: Vec<F>) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let obs = fns
            .into_iter()
            .map(|f| Observable::Closure(Arc::new(f)))
            .collect();
        Dictionary::new(n, obs, None)
    }

    /// Monomials `∏ x_k^{e_k}` in the given order.
    pub fn monomials(n: usize, exponents: &[Vec<u32>]) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::domain("empty exponent list"));
        }
        let obs = exponents.iter().cloned().map(Observable::Monomial).collect();
        Dictionary::new(n, obs, None)
    }

    /// Replaces the functions by linear combinations of the current ones:
    /// the new dictionary is `D(·)·C` for an `N_d × N_d'` coefficient matrix
    /// of full column rank.
    pub fn combine(&self, coefficients: DMatrix<f64>) -> Result<Self> {
        if coefficients.nrows() != self.len() || coefficients.ncols() == 0 {
            return Err(Error::domain(format!(
                "combination matrix must have {} rows and at least one column, got {}x{}",
                self.len(),
                coefficients.nrows(),
                coefficients.ncols()
            )));
        }
        let rcond = linalg::reciprocal_condition(&coefficients);
        if coefficients.ncols() > coefficients.nrows() || rcond.is_nan() || rcond < MIN_TRANSFORM_RCOND {
            return Err(Error::domain(
                "combination matrix must have full column rank",
            ));
        }
        Ok(self.with_coefficients(coefficients))
    }

    /// The dictionary `D̃(·) = D(·)·R`.
    pub fn transform(&self, r: &BasisTransform) -> Result<Self> {
        if r.dim() != self.len() {
            return Err(Error::domain(format!(
                "transform is {}x{} but the dictionary has {} functions",
                r.dim(),
                r.dim(),
                self.len()
            )));
        }
        Ok(self.with_coefficients(r.matrix().clone()))
    }

    fn with_coefficients(&self, c: DMatrix<f64>) -> Self {
        let coefficients = match &self.coefficients {
            Some(existing) => existing * c,
            None => c,
        };
        let labels = (1..=coefficients.ncols()).map(|j| format!("g{j}")).collect();
        Dictionary {
            n: self.n,
            base: Arc::clone(&self.base),
            coefficients: Some(coefficients),
            labels,
        }
    }

    /// Number of functions `N_d`.
    pub fn len(&self) -> usize {
        match &self.coefficients {
            Some(c) => c.ncols(),
            None => self.base.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base(&self) -> &[Observable] {
        &self.base
    }

    /// Coefficients against the base family, `None` when the dictionary is
    /// the base family itself.
    pub fn coefficients(&self) -> Option<&DMatrix<f64>> {
        self.coefficients.as_ref()
    }

    /// `D(X)`: row `i` is `D(x_i)` for the `i`-th row `x_i` of `states`.
    pub fn evaluate(&self, states: &DMatrix<f64>) -> Result<DataMatrix> {
        if states.ncols() != self.n {
            return Err(Error::domain(format!(
                "states have {} columns, dictionary expects {}",
                states.ncols(),
                self.n
            )));
        }
        let rows = states.nrows();
        let mut base = DMatrix::zeros(rows, self.base.len());
        let mut x = vec![0.0; self.n];
        for i in 0..rows {
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = states[(i, k)];
            }
            for (j, obs) in self.base.iter().enumerate() {
                let v = obs.eval(&x);
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                base[(i, j)] = v;
            }
        }
        let values = match &self.coefficients {
            None => base,
            Some(c) => {
                let v = base * c;
                if let Some(pos) = v.iter().position(|e| !e.is_finite()) {
                    // column-major storage
                    return Err(Error::NonFinite {
                        row: pos % rows,
                        col: pos / rows,
                    });
                }
                v
            }
        };
        Ok(DataMatrix(values))
    }

    /// `D(x)` for a single state.
    pub fn evaluate_state(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.evaluate(&m)?.0.iter().copied().collect())
    }

    /// JSON description, available when the base family is all monomials.
    pub fn to_spec(&self) -> Option<DictionarySpec> {
        let monomials = self
            .base
            .iter()
            .map(|o| match o {
                Observable::Monomial(e) => Some(e.clone()),
                Observable::Closure(_) => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(DictionarySpec {
            n: self.n,
            monomials,
            combine: self.coefficients.as_ref().map(rows_of),
            transform: None,
            labels: None,
        })
    }

    pub fn from_spec(spec: &DictionarySpec) -> Result<Self> {
        let mut dict = Dictionary::monomials(spec.n, &spec.monomials)?;
        if let Some(c) = &spec.combine {
            dict = dict.combine(matrix_from_rows(c, "combine")?)?;
        }
        if let Some(t) = &spec.transform {
            dict = dict.transform(&BasisTransform::new(matrix_from_rows(t, "transform")?)?)?;
        }
        if let Some(labels) = &spec.labels {
            if labels.len() != dict.len() {
                return Err(Error::domain(format!(
                    "{} labels for {} functions",
                    labels.len(),
                    dict.len()
                )));
            }
            dict.labels = labels.clone();
        }
        Ok(dict)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: DictionarySpec = serde_json::from_str(&text)?;
        Dictionary::from_spec(&spec)
    }
}

fn monomial_label(exps: &[u32]) -> String {
    if exps.len() == 1 {
        return match exps[0] {
            0 => "1".to_string(),
            1 => "x".to_string(),
            e => format!("x^{e}"),
        };
    }
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(k, &e)| {
            if e == 1 {
                format!("x{}", k + 1)
            } else {
                format!("x{}^{}", k + 1, e)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// JSON form of a monomial-based dictionary.
///
/// `combine` (optional, `#monomials × N_d`, full column rank) forms
/// polynomial dictionary functions from the monomials; `transform`
/// (optional, `N_d × N_d`, invertible) is then applied as a change of basis.
/// Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    pub n: usize,
    pub monomials: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combine: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::domain(format!("{what}: empty matrix")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::domain(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// `[x, x³ − x²]` on the real line.
pub fn cubic_example_dictionary() -> Dictionary {
    Dictionary::monomials(1, &[vec![1], vec![2], vec![3]])
        .and_then(|d| d.combine(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, -1.0, 0.0, 1.0])))
        .expect("valid by construction")
}

/// `[[1, 1], [0, α]]`, mapping `[x, x³ − x²]` to `[x, x + α(x³ − x²)]`.
pub fn alpha_transform(alpha: f64) -> Result<BasisTransform> {
    BasisTransform::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, alpha]))
}

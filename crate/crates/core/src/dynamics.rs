//! Discrete-time systems, snapshot generation and the snapshot CSV format.
//!
//! CSV layout: `#`-prefixed `key: value` metadata lines, a header
//! `x1,…,xn,y1,…,yn`, then one snapshot pair per row with every value
//! written to 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

pub type StateMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Name recorded in metadata for the initial-condition generator.
pub const RNG_NAME: &str = "chacha20";

/// A deterministic map `x⁺ = T(x)` on `Rⁿ`.
#[derive(Clone)]
pub struct DynamicalSystem {
    name: String,
    n: usize,
    map: StateMap,
}

impl std::fmt::Debug for DynamicalSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicalSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .finish_non_exhaustive()
    }
}

impl DynamicalSystem {
    pub fn new<F>(name: impl Into<String>, n: usize, map: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        DynamicalSystem {
            name: name.into(),
            n,
            map: Arc::new(map),
        }
    }

    /// `x⁺ = 0.5x` on the real line.
    pub fn linear_halving() -> Self {
        DynamicalSystem::new("linear05", 1, |x| vec![0.5 * x[0]])
    }

    pub fn identity(n: usize) -> Self {
        DynamicalSystem::new("identity", n, |x| x.to_vec())
    }

    /// `x⁺ = Σ_k c_k x^k` on the real line.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("polynomial needs finite coefficients"));
        }
        Ok(DynamicalSystem::new("custom-poly", 1, move |x| {
            // Horner
            vec![coefficients.iter().rev().fold(0.0, |acc, c| acc * x[0] + c)]
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn step(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }
}

/// Paired states with `y_i = T(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl SnapshotData {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::domain(format!(
                "X is {:?} but Y is {:?}",
                x.shape(),
                y.shape()
            )));
        }
        Ok(SnapshotData {
            x,
            y,
            metadata: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    /// The first `count` rows.
    pub fn head(&self, count: usize) -> SnapshotData {
        let count = count.min(self.len());
        SnapshotData {
            x: self.x.rows(0, count).into_owned(),
            y: self.y.rows(0, count).into_owned(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let mut out = String::new();
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.len() {
            let fields: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.y.row(i).iter())
                .map(|v| format_f64(*v))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        for line in text.lines() {
            if let Some(rest) = line.trim_start().strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
        }

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_error)?.clone();
        let header_line = text
            .lines()
            .position(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
            .map_or(1, |i| i + 1);
        if header.is_empty() || header.iter().all(str::is_empty) {
            return Err(Error::Parse {
                line: header_line,
                message: "no data rows".into(),
            });
        }
        let n = parse_header(&header, header_line)?;

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 * n {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} fields, found {}", 2 * n, record.len()),
                });
            }
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("field {} is not a number: {field:?}", i + 1),
                })?;
                if i < n {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        if xs.is_empty() {
            return Err(Error::Parse {
                line: header_line,
                message: "no data rows".into(),
            });
        }
        let rows = xs.len() / n;
        Ok(SnapshotData {
            x: DMatrix::from_row_slice(rows, n, &xs),
            y: DMatrix::from_row_slice(rows, n, &ys),
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SnapshotData::from_csv(&text)
    }
}

/// 17 significant digits; parses back to the same double.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_header(header: &csv::StringRecord, line: usize) -> Result<usize> {
    let xs = header.iter().filter(|h| h.starts_with('x')).count();
    let ys = header.iter().filter(|h| h.starts_with('y')).count();
    if xs == 0 || xs != ys || xs + ys != header.len() {
        return Err(Error::Parse {
            line,
            message: format!("header must be x1..xn,y1..yn; found {xs} x and {ys} y columns"),
        });
    }
    let n = xs;
    for (i, h) in header.iter().enumerate() {
        let expected = if i < n { format!("x{}", i + 1) } else { format!("y{}", i - n + 1) };
        if h != expected {
            return Err(Error::Parse {
                line,
                message: format!("header column {} is {h:?}, expected {expected:?}", i + 1),
            });
        }
    }
    Ok(n)
}

/// Rolls each initial state forward `steps` times; trajectory `j` contributes
/// rows `j·steps .. (j+1)·steps` as consecutive pairs `(x_k, x_{k+1})`.
pub fn simulate_snapshots(sys: &DynamicalSystem, initials: &[Vec<f64>], steps: usize) -> Result<SnapshotData> {
    if steps == 0 {
        return Err(Error::domain("steps per trajectory must be at least 1"));
    }
    if initials.is_empty() {
        return Err(Error::domain("at least one initial state is required"));
    }
    let n = sys.state_dim();
    let rows = initials.len() * steps;
    let mut x = DMatrix::zeros(rows, n);
    let mut y = DMatrix::zeros(rows, n);
    for (j, x0) in initials.iter().enumerate() {
        if x0.len() != n {
            return Err(Error::domain(format!(
                "initial state {j} has dimension {}, system has {n}",
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation { trajectory: j, step: 0 });
        }
        let mut current = x0.clone();
        for k in 0..steps {
            let next = sys.step(&current);
            if next.len() != n || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation { trajectory: j, step: k + 1 });
            }
            let row = j * steps + k;
            for c in 0..n {
                x[(row, c)] = current[c];
                y[(row, c)] = next[c];
            }
            current = next;
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("system".to_string(), sys.name().to_string());
    metadata.insert("steps".to_string(), steps.to_string());
    metadata.insert("trajectories".to_string(), initials.len().to_string());
    Ok(SnapshotData { x, y, metadata })
}

/// `count` states uniform on the box `[low, high)`, reproducible from `seed`.
pub fn sample_uniform_initials(low: &[f64], high: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if low.is_empty() || low.len() != high.len() {
        return Err(Error::domain("box bounds must be non-empty and of equal dimension"));
    }
    if low.iter().zip(high).any(|(l, h)| !l.is_finite() || !h.is_finite() || l >= h) {
        return Err(Error::domain("box requires finite low < high in every coordinate"));
    }
    if count == 0 {
        return Err(Error::domain("count must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| low.iter().zip(high).map(|(&l, &h)| rng.random_range(l..h)).collect())
        .collect())
}

/// Trajectories and steps of the reference dataset: 500 × 2 = 1000 pairs.
pub const EXAMPLE_TRAJECTORIES: usize = 500;
pub const EXAMPLE_STEPS: usize = 2;

/// `x⁺ = 0.5x` with initial conditions uniform on `[−2, 2]`, 500 trajectories
/// of two steps each.
pub fn example1_dataset(seed: u64) -> SnapshotData {
    generate(
        &DynamicalSystem::linear_halving(),
        &[-2.0],
        &[2.0],
        EXAMPLE_TRAJECTORIES,
        EXAMPLE_STEPS,
        seed,
    )
    .expect("reference parameters are valid")
}

/// Samples initial states and simulates, recording the run in metadata.
pub fn generate(
    sys: &DynamicalSystem,
    low: &[f64],
    high: &[f64],
    trajectories: usize,
    steps: usize,
    seed: u64,
) -> Result<SnapshotData> {
    if low.len() != sys.state_dim() {
        return Err(Error::domain("sampling box dimension differs from the system's"));
    }
    let initials = sample_uniform_initials(low, high, trajectories, seed)?;
    let mut data = simulate_snapshots(sys, &initials, steps)?;
    let fmt_vec = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    data.metadata.insert("seed".into(), seed.to_string());
    data.metadata.insert("rng".into(), RNG_NAME.into());
    data.metadata.insert("low".into(), fmt_vec(low));
    data.metadata.insert("high".into(), fmt_vec(high));
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn halving_one_and_two_steps() {
        let sys = DynamicalSystem::linear_halving();
        let d = simulate_snapshots(&sys, &[vec![2.0]], 1).unwrap();
        assert_eq!(d.x.as_slice(), &[2.0]);
        assert_eq!(d.y.as_slice(), &[1.0]);
        let d = simulate_snapshots(&sys, &[vec![2.0]], 2).unwrap();
        assert_eq!(d.x.as_slice(), &[2.0, 1.0]);
        assert_eq!(d.y.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn identity_map_repeats_states() {
        let d = simulate_snapshots(&DynamicalSystem::identity(2), &[vec![1.0, -3.0], vec![0.5, 2.0]], 3).unwrap();
        assert_eq!(d.x, d.y);
        assert_eq!(d.len(), 6);
    }

    #[test]
    fn blow_up_is_reported() {
        let sys = DynamicalSystem::polynomial(vec![0.0, 0.0, 1e200]).unwrap();
        match simulate_snapshots(&sys, &[vec![1.0], vec![10.0]], 3) {
            Err(Error::Simulation { trajectory: 0, step: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn simulate_preconditions() {
        let sys = DynamicalSystem::linear_halving();
        assert!(simulate_snapshots(&sys, &[vec![1.0]], 0).is_err());
        assert!(simulate_snapshots(&sys, &[], 1).is_err());
        assert!(simulate_snapshots(&sys, &[vec![1.0, 2.0]], 1).is_err());
    }

    #[test]
    fn polynomial_map_uses_horner() {
        let sys = DynamicalSystem::polynomial(vec![1.0, 0.0, -2.0]).unwrap();
        assert_eq!(sys.step(&[3.0]), vec![-17.0]);
        assert!(DynamicalSystem::polynomial(vec![]).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_uniform_initials(&[-1.0, 0.0], &[1.0, 5.0], 3, 42).unwrap();
        let b = sample_uniform_initials(&[-1.0, 0.0], &[1.0, 5.0], 3, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_uniform_initials(&[-1.0, 0.0], &[1.0, 5.0], 3, 43).unwrap());
    }

    #[test]
    fn sampling_statistics() {
        let s = sample_uniform_initials(&[-2.0], &[2.0], 10_000, 1).unwrap();
        let vals: Vec<f64> = s.iter().map(|v| v[0]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 0.1);
        assert!(vals.iter().all(|&v| (-2.0..=2.0).contains(&v)));
    }

    #[test]
    fn sampling_rejects_bad_boxes() {
        assert!(sample_uniform_initials(&[1.0], &[1.0], 1, 0).is_err());
        assert!(sample_uniform_initials(&[2.0], &[1.0], 1, 0).is_err());
        assert!(sample_uniform_initials(&[0.0], &[1.0], 0, 0).is_err());
        assert!(sample_uniform_initials(&[0.0], &[1.0, 2.0], 1, 0).is_err());
    }

    #[test]
    fn reference_dataset_shape_and_pairing() {
        let d = example1_dataset(7);
        assert_eq!((d.len(), d.state_dim()), (1000, 1));
        for i in 0..d.len() {
            assert_eq!(d.y[(i, 0)], 0.5 * d.x[(i, 0)]);
            let bound = if i % 2 == 0 { 2.0 } else { 1.0 };
            assert!(d.x[(i, 0)].abs() <= bound);
        }
        assert_eq!(d.metadata["seed"], "7");
        assert_eq!(d.metadata["system"], "linear05");
        assert_eq!(d, example1_dataset(7));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = example1_dataset(3);
        let back = SnapshotData::from_csv(&d.to_csv()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        let d = example1_dataset(9);
        d.save(&path).unwrap();
        assert_eq!(SnapshotData::load(&path).unwrap(), d);
        assert!(matches!(SnapshotData::load(dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn csv_errors() {
        match SnapshotData::from_csv("") {
            Err(Error::Parse { message, .. }) => assert_eq!(message, "no data rows"),
            other => panic!("unexpected {other:?}"),
        }
        match SnapshotData::from_csv("# system: x\nx1,y1\n") {
            Err(Error::Parse { message, .. }) => assert_eq!(message, "no data rows"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(SnapshotData::from_csv("x1,x2,y1\n1,2,3\n"), Err(Error::Parse { line: 1, .. })));
        match SnapshotData::from_csv("# a: b\nx1,y1\n1,2\n3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        match SnapshotData::from_csv("x1,y1\n1,abc\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn multi_step_rows_chain(seed in any::<u64>(), trajectories in 1usize..6, steps in 1usize..6) {
            let sys = DynamicalSystem::polynomial(vec![0.1, 0.7, -0.2]).unwrap();
            let d = generate(&sys, &[-1.0], &[1.0], trajectories, steps, seed).unwrap();
            prop_assert_eq!(d.len(), trajectories * steps);
            for j in 0..trajectories {
                for k in 1..steps {
                    prop_assert_eq!(d.x[(j * steps + k, 0)], d.y[(j * steps + k - 1, 0)]);
                }
            }
            for i in 0..d.len() {
                prop_assert_eq!(d.y[(i, 0)], sys.step(&[d.x[(i, 0)]])[0]);
            }
            prop_assert_eq!(SnapshotData::from_csv(&d.to_csv()).unwrap(), d);
        }
    }
}

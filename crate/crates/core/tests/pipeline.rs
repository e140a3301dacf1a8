use koopman_core::observables::{alpha_transform, cubic_example_dictionary};
use koopman_core::{
    alpha_sweep, consistency_report, edmd_eigenpairs, example1_dataset, fit_forward_backward, log_grid, predict,
    residual_error, rrmse, worst_case_function, ComputationPath, Dictionary, DynamicalSystem, FitOptions,
    SnapshotData,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn reference_dataset_end_to_end() {
    let data = example1_dataset(3);
    assert_eq!(data.len(), 1000);

    let linear = Dictionary::monomials(1, &[vec![1]]).unwrap();
    let model = fit_forward_backward(&linear, &data.x, &data.y, FitOptions::default()).unwrap();
    assert!((model.kf()[(0, 0)] - 0.5).abs() < 1e-14);
    let pairs = edmd_eigenpairs(&model);
    assert!((pairs.values()[0].re - 0.5).abs() < 1e-14);
    let p = predict(&model, &[Complex64::new(1.0, 0.0)]).unwrap();
    assert!((p.evaluate(&[0.8]).unwrap().re - 0.4).abs() < 1e-14);

    let cubic = cubic_example_dictionary();
    let model = fit_forward_backward(&cubic, &data.x, &data.y, FitOptions::default()).unwrap();
    let report = consistency_report(&model, ComputationPath::Orthonormalized).unwrap();
    assert!(report.index > 1e-3 && report.index < 1.0);
    let direct = consistency_report(&model, ComputationPath::Direct).unwrap();
    assert!((direct.index - report.index).abs() < 1e-10);
    let wc = worst_case_function(&model).unwrap();
    assert!((wc.rrmse - report.sqrt_index).abs() < 1e-10);
    let v: Vec<Complex64> = wc.v.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    assert!((rrmse(&model, &v).unwrap() - wc.rrmse).abs() < 1e-12);
}

#[test]
fn dictionary_file_drives_the_same_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    std::fs::write(&path, r#"{"n":1,"monomials":[[1],[2],[3]],"combine":[[1,0],[0,-1],[0,1]],"transform":[[1,1],[0,3]]}"#)
        .unwrap();
    let loaded = Dictionary::load(&path).unwrap();
    let built = cubic_example_dictionary().transform(&alpha_transform(3.0).unwrap()).unwrap();
    let x = DMatrix::from_column_slice(4, 1, &[-1.5, 0.2, 0.7, 1.9]);
    assert_eq!(loaded.evaluate(&x).unwrap(), built.evaluate(&x).unwrap());
}

#[test]
fn snapshot_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let sys = DynamicalSystem::polynomial(vec![0.1, 0.6, -0.2]).unwrap();
    let data = koopman_core::dynamics::generate(&sys, &[-1.0], &[1.0], 7, 3, 99).unwrap();
    data.save(&path).unwrap();
    let back = SnapshotData::load(&path).unwrap();
    assert_eq!(back.x, data.x);
    assert_eq!(back.y, data.y);
    assert_eq!(back.metadata, data.metadata);
}

#[test]
fn sweep_reports_basis_sensitivity() {
    let data = example1_dataset(0);
    let result = alpha_sweep(&cubic_example_dictionary(), &data, &log_grid(0.01, 100.0, 9).unwrap(), FitOptions::default())
        .unwrap();
    assert_eq!(result.failed(), 0);
    assert!(result.e_rel_ratio() > 10.0);
    assert!(result.sqrt_ic_spread() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// E changes with α while the index stays put.
    #[test]
    fn index_ignores_alpha(alpha in 1e-2f64..1e2, seed in 0u64..1000) {
        let data = example1_dataset(seed).head(200);
        let base = fit_forward_backward(&cubic_example_dictionary(), &data.x, &data.y, FitOptions::default()).unwrap();
        let dict = cubic_example_dictionary().transform(&alpha_transform(alpha).unwrap()).unwrap();
        let scaled = fit_forward_backward(&dict, &data.x, &data.y, FitOptions::default()).unwrap();
        let a = consistency_report(&base, ComputationPath::Orthonormalized).unwrap().index;
        let b = consistency_report(&scaled, ComputationPath::Orthonormalized).unwrap().index;
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(residual_error(&scaled).unwrap().absolute.is_finite());
    }
}

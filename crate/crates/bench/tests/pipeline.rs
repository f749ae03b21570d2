use std::io::Write;

use noisy_coreset::coreset::RadiusRule;
use noisy_coreset::{Algorithm, NoiseFamily, PointSource};
use noisy_coreset_bench::data::{demo_blobs, load_csv, standardize, subsample, Schema};
use noisy_coreset_bench::emit::{emit_to_vec, read_csv_rows, Format};
use noisy_coreset_bench::experiment::{
    run_beta_sweep, run_grid, ExperimentConfig, ExperimentRow, NoiseKind, SweepConfig,
};
use noisy_coreset_bench::BenchError;

fn write_temp(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn csv_with_schema_drops_missing_rows_and_standardizes() {
    let csv = write_temp("age,job,hours,flag\n20,a,40,1\n30,b,?,1\n40,c,50,1\n60,d,30,1\n,e,20,1\n");
    let schema = Schema::parse("age continuous\njob categorical\nhours continuous\n# comment\nflag numeric\n").unwrap();
    let (data, report) = load_csv(csv.path(), Some(&schema)).unwrap();
    assert_eq!(report.rows_read, 5);
    assert_eq!(report.rows_dropped, 2);
    assert_eq!(report.columns, ["age", "hours", "flag"]);
    assert_eq!(report.constant_columns, ["flag"]);
    assert_eq!((data.n(), data.dim()), (3, 3));
    for j in 0..2 {
        let col: Vec<f64> = (0..3).map(|i| data.point(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / 3.0;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
    assert!((0..3).all(|i| data.point(i)[2] == 0.0));
}

#[test]
fn csv_without_schema_uses_every_column() {
    let csv = write_temp("x,y\n1,2\n3,5\n");
    let (data, report) = load_csv(csv.path(), None).unwrap();
    assert_eq!(data.dim(), 2);
    assert_eq!(report.rows_dropped, 0);
}

#[test]
fn bad_inputs_map_to_data_errors() {
    let csv = write_temp("x,y\n1,2\n");
    let schema = Schema::parse("z continuous").unwrap();
    let err = load_csv(csv.path(), Some(&schema)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(Schema::parse("x weird").is_err());
    let missing = load_csv(std::path::Path::new("/nonexistent/file.csv"), None).unwrap_err();
    assert_eq!(missing.exit_code(), 2);
}

#[test]
fn standardize_reports_constant_columns() {
    let mut coords = vec![1.0, 5.0, 3.0, 5.0];
    assert_eq!(standardize(&mut coords, 2), vec![1]);
    assert_eq!(coords, vec![-1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn subsample_is_seeded_and_bounded() {
    let data = demo_blobs(500, 3, 4, 5.0, 1).unwrap();
    let a = subsample(&data, 100, 9).unwrap();
    let b = subsample(&data, 100, 9).unwrap();
    assert_eq!(a.coords(), b.coords());
    assert_eq!(a.n(), 100);
    assert!(matches!(subsample(&data, 501, 0), Err(BenchError::Config(_))));
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        eps: vec![0.2, 0.3],
        levels: vec![0.0, 0.25],
        trials: 3,
        ..ExperimentConfig::reference(4, 5)
    }
}

#[test]
fn grid_rows_come_in_grid_order_and_are_deterministic() {
    let data = demo_blobs(3000, 4, 4, 8.0, 2).unwrap();
    let config = small_config();
    let rows = run_grid(&data, &config).unwrap();
    assert_eq!(rows.len(), 8);
    let keys: Vec<(String, f64, f64)> = rows.iter().map(|r| (r.algorithm.clone(), r.eps, r.level)).collect();
    assert_eq!(keys[0], ("CN".to_string(), 0.2, 0.0));
    assert_eq!(keys[1], ("CN".to_string(), 0.2, 0.25));
    assert_eq!(keys[4], ("CN_alpha".to_string(), 0.2, 0.0));
    assert_eq!(rows, run_grid(&data, &config).unwrap());
    for r in &rows {
        assert_eq!(r.trials, 3);
        assert!(r.r_tilde >= 1.0 - 1e-9 && r.u >= 1.0);
        assert!((r.kappa - r.r_tilde / r.u).abs() < 1e-12);
    }
}

#[test]
fn cn_alpha_has_larger_kappa_on_blobs() {
    let data = demo_blobs(4000, 6, 4, 8.0, 3).unwrap();
    let config = small_config();
    let rows = run_grid(&data, &config).unwrap();
    for &e in &config.eps {
        for &l in &config.levels {
            let find = |alg: Algorithm| {
                rows.iter()
                    .find(|r| r.algorithm == alg.name() && r.eps == e && r.level == l)
                    .unwrap()
            };
            assert!(
                find(Algorithm::CnAlpha).kappa > find(Algorithm::Cn).kappa,
                "eps {e} level {l}"
            );
        }
    }
}

#[test]
fn every_noise_model_runs() {
    let data = demo_blobs(2000, 3, 3, 8.0, 4).unwrap();
    for (noise, family) in [
        (NoiseKind::ModelI, NoiseFamily::Laplace),
        (NoiseKind::ModelII, NoiseFamily::Uniform),
        (NoiseKind::Correlated, NoiseFamily::Gaussian),
    ] {
        let config = ExperimentConfig {
            noise,
            family,
            trials: 2,
            eps: vec![0.3],
            levels: vec![0.05],
            radius: RadiusRule::Theoretical { alpha: 2.0 },
            ..ExperimentConfig::reference(3, 1)
        };
        let rows = run_grid(&data, &config).unwrap();
        assert!(
            rows.iter().all(|r| r.error.is_none() && r.kappa.is_finite()),
            "{noise:?}"
        );
    }
}

#[test]
fn invalid_config_is_rejected() {
    let data = demo_blobs(100, 2, 2, 5.0, 0).unwrap();
    let bad = ExperimentConfig {
        eps: vec![1.5],
        ..ExperimentConfig::reference(2, 0)
    };
    assert!(matches!(run_grid(&data, &bad), Err(BenchError::Config(_))));
    let bad = ExperimentConfig {
        levels: vec![2.0],
        ..ExperimentConfig::reference(2, 0)
    };
    assert!(run_grid(&data, &bad).is_err());
}

#[test]
fn csv_round_trip_keeps_full_precision() {
    let rows = vec![ExperimentRow {
        algorithm: "CN".into(),
        eps: 0.1,
        level: 0.01,
        size: 9486.0,
        r_tilde: 1.193_456_789_012_345,
        u: 2.0 / 3.0,
        kappa: 1.790_185_183_518_517_5,
        trials: 10,
        seed: 42,
        error: None,
    }];
    let bytes = emit_to_vec(&rows, Format::Csv).unwrap();
    let header = String::from_utf8(bytes.clone()).unwrap();
    assert!(header.starts_with("algorithm,eps,level,size,r_tilde,u,kappa,trials,seed,error\n"));
    let back: Vec<ExperimentRow> = read_csv_rows(&bytes).unwrap();
    assert_eq!(back, rows);
    let md = String::from_utf8(emit_to_vec(&rows, Format::Markdown).unwrap()).unwrap();
    assert!(md.contains("| CN | 0.100 | 0.010 | 9486.0 | 1.193 | 0.667 | 1.790 | 10 | 42 |  |"));
    let jsonl = String::from_utf8(emit_to_vec(&rows, Format::JsonLines).unwrap()).unwrap();
    assert_eq!(jsonl.lines().count(), 1);
    assert!(emit_to_vec::<ExperimentRow>(&[], Format::Csv).is_err());
    assert!("xml".parse::<Format>().is_err());
}

#[test]
fn sweep_emits_requested_betas() {
    let config = SweepConfig {
        n: 400,
        beta_lo: 2.0,
        beta_hi: 3.0,
        step: 0.5,
        candidates: 50,
        ..SweepConfig::reference(0)
    };
    let points = run_beta_sweep(&config).unwrap();
    let betas: Vec<f64> = points.iter().map(|p| p.beta).collect();
    assert_eq!(betas, [2.0, 2.5, 3.0]);
    assert!(points.iter().all(|p| p.err_hat >= 0.0 && p.err1_hat >= 0.0));
    let csv = String::from_utf8(emit_to_vec(&points, Format::Csv).unwrap()).unwrap();
    assert!(csv.starts_with("beta,err_hat,err1_hat\n"));
    assert_eq!(SweepConfig::reference(0).betas().unwrap().len(), 21);
}

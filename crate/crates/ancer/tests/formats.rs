//! File formats under real traffic: artifacts written by one pipeline stage
//! must drive the next stage to identical results after a disk round trip.

use std::path::Path;

use ancer::certify::{certify_dataset, CertifyConfig};
use ancer::harness::{acr, certified_accuracy_curve, generate_radial_dataset, superset_stats};
use ancer::nn::{load_model, save_model, train_classifier, Classifier, Dataset, TrainConfig};
use ancer::report::{gmm_sidecar_path, read_theta_csv, write_theta_csv, CertificationReport};
use ancer::smoothing::{GmmComponent, SmoothingSpec};
use ancer::Error;

fn toy_model_and_data() -> (Classifier, Dataset) {
    let data = generate_radial_dataset(24, 0.05, 3).unwrap();
    let cfg = TrainConfig {
        lr: 0.1,
        epochs: 25,
        batch: 8,
        seed: 5,
    };
    let (model, _) = train_classifier(&data, &[2, 8, 2], &cfg).unwrap();
    (model, data)
}

fn tiny_certify_cfg() -> CertifyConfig {
    CertifyConfig {
        n0: 20,
        n: 400,
        alpha: 0.05,
        seed: 9,
    }
}

/// Wall-clock timings differ between runs; everything else must not.
fn mask_times(report: &CertificationReport) -> CertificationReport {
    let mut masked = report.clone();
    for row in &mut masked.rows {
        row.time_ms = 0.0;
    }
    masked
}

fn certify_gaussian(model: &Classifier, data: &Dataset) -> CertificationReport {
    let spec = SmoothingSpec::gaussian(vec![0.4, 0.4]).unwrap();
    let specs = vec![spec; data.len()];
    certify_dataset(model, data, &specs, &tiny_certify_cfg()).unwrap()
}

#[test]
fn reloaded_model_certifies_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    let (model, data) = toy_model_and_data();
    save_model(&model, &path).unwrap();
    let reloaded = load_model(&path).unwrap();

    let original = certify_gaussian(&model, &data);
    let from_disk = certify_gaussian(&reloaded, &data);
    assert_eq!(mask_times(&original), mask_times(&from_disk));
    assert!(
        original.rows.iter().any(|r| !r.abstain()),
        "fixture produced no certificates at all"
    );
}

#[test]
fn report_survives_disk_and_feeds_metrics_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("report.csv");
    let p2 = dir.path().join("rewrite.csv");
    let (model, data) = toy_model_and_data();
    let report = certify_gaussian(&model, &data);

    report.write_csv(&p1).unwrap();
    let back = CertificationReport::read_csv(&p1).unwrap();
    // timings are truncated to 3 decimals on disk; everything else is exact
    assert_eq!(mask_times(&report), mask_times(&back));
    back.write_csv(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

    let radii = [0.0, 0.25, 0.5, 1.0];
    assert_eq!(
        certified_accuracy_curve(&report, &radii, false).unwrap(),
        certified_accuracy_curve(&back, &radii, false).unwrap()
    );
    assert_eq!(acr(&report, true).unwrap(), acr(&back, true).unwrap());

    // every region covers itself, so a report against its own round trip
    // must come back fully superset
    let stats = superset_stats(&back, &report).unwrap();
    assert_eq!(stats.rows, data.len());
    assert_eq!(stats.radius_pct, 100.0);
    assert_eq!(stats.region_pct, 100.0);
    assert_eq!(stats.region_undetermined, 0);
}

#[test]
fn mixed_kind_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.csv");
    let (model, data) = toy_model_and_data();
    let specs: Vec<SmoothingSpec> = (0..data.len())
        .map(|i| {
            if i % 2 == 0 {
                SmoothingSpec::gaussian(vec![0.3, 0.5]).unwrap()
            } else {
                SmoothingSpec::uniform(vec![0.8, 1.2]).unwrap()
            }
        })
        .collect();
    let report = certify_dataset(&model, &data, &specs, &tiny_certify_cfg()).unwrap();

    report.write_csv(&path).unwrap();
    let back = CertificationReport::read_csv(&path).unwrap();
    assert_eq!(mask_times(&report), mask_times(&back));
    assert_eq!(back.specs, specs);
    assert!(!gmm_sidecar_path(&path).exists());
}

#[test]
fn gmm_report_round_trips_and_requires_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gmm.csv");
    let (model, data) = toy_model_and_data();
    let spec = SmoothingSpec::gmm(vec![
        GmmComponent {
            weight: 0.25,
            theta: vec![0.3, 0.3],
        },
        GmmComponent {
            weight: 0.75,
            theta: vec![0.5, 0.4],
        },
    ])
    .unwrap();
    let specs = vec![spec; data.len()];
    let report = certify_dataset(&model, &data, &specs, &tiny_certify_cfg()).unwrap();

    report.write_csv(&path).unwrap();
    let sidecar = gmm_sidecar_path(&path);
    assert!(sidecar.exists());
    let back = CertificationReport::read_csv(&path).unwrap();
    assert_eq!(mask_times(&report), mask_times(&back));

    std::fs::remove_file(&sidecar).unwrap();
    let err = CertificationReport::read_csv(&path).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
}

#[test]
fn theta_file_preserves_certification_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("thetas.csv");
    let (model, data) = toy_model_and_data();
    let specs: Vec<SmoothingSpec> = (0..data.len())
        .map(|i| {
            let t = 0.3 + 0.01 * i as f64;
            SmoothingSpec::gaussian(vec![t, 1.5 * t]).unwrap()
        })
        .collect();
    write_theta_csv(&path, &specs).unwrap();
    let back = read_theta_csv(&path).unwrap();
    assert_eq!(back, specs);

    let cfg = tiny_certify_cfg();
    let a = certify_dataset(&model, &data, &specs, &cfg).unwrap();
    let b = certify_dataset(&model, &data, &back, &cfg).unwrap();
    assert_eq!(mask_times(&a), mask_times(&b));
}

#[test]
fn dataset_csv_written_by_one_run_loads_in_the_next() {
    let dir = tempfile::tempdir().unwrap();
    let path: &Path = &dir.path().join("data.csv");
    let data = generate_radial_dataset(40, 0.1, 17).unwrap();
    ancer::harness::write_csv(path, &data).unwrap();
    let back = ancer::harness::load_csv(path).unwrap();
    assert_eq!(back.inputs, data.inputs);
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.dim, 2);
    assert_eq!(back.num_classes, 2);
}

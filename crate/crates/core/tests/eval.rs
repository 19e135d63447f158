use zp3_core::eval::{evaluate, EvalOptions, Region, PSNR_CAP};
use zp3_core::synth::{toy_scene, ToyParams};

#[test]
fn ground_truth_scores_perfectly() {
    let params = ToyParams { clusters: 3, per_cluster: 16, width: 32, height: 32, focal: 40.0, ..ToyParams::default() };
    let scene = toy_scene(&params, (0.0, 90.0), 3).unwrap();
    let report = evaluate(&scene.cloud, &scene.ground_truth, scene.observed_range, &EvalOptions::default()).unwrap();
    assert_eq!(report.rows.len(), scene.ground_truth.len());
    for row in &report.rows {
        assert_eq!(row.psnr, PSNR_CAP, "{}", row.view_id);
        assert!((row.ssim - 1.0).abs() < 1e-12, "{}", row.view_id);
    }
    assert!(report.visible.count > 0 && report.invisible.count > 0);
    assert_eq!(report.visible.count + report.invisible.count, report.total.count);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + report.rows.len() + 3);
}

#[test]
fn empty_cloud_scores_poorly_everywhere() {
    let params = ToyParams { clusters: 3, per_cluster: 16, width: 32, height: 32, focal: 40.0, ..ToyParams::default() };
    let scene = toy_scene(&params, (0.0, 90.0), 3).unwrap();
    let empty = zp3_core::GaussianCloud::default();
    let report = evaluate(&empty, &scene.ground_truth, scene.observed_range, &EvalOptions::default()).unwrap();
    assert!(report.total.psnr < 20.0);
    assert!(report.rows.iter().all(|r| matches!(r.region, Region::Visible | Region::Invisible)));
}

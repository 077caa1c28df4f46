use sbpm_core::metrics::{similarity_filter, DistanceMetric};
use sbpm_core::tabular::{gen_gauss, gen_gauss_grid};
use sbpm_workbench::swiss::{ce3_targeted_run, Probing, SimilarityGrid, TargetedConfig};

#[test]
fn grid_filter_agrees_with_the_core_filter() {
    for (dim, tau) in [(2, 0.05), (2, 0.3), (3, 0.2), (5, 0.5)] {
        let train = gen_gauss(dim, 1000, dim as u64);
        let synth = gen_gauss(dim, 5000, 100 + dim as u64);
        let grid = SimilarityGrid::new(&train, tau).unwrap();
        let kept = similarity_filter(&train, &synth, tau, DistanceMetric::Euclidean).unwrap();
        let mine: Vec<_> = synth.records().iter().filter(|r| !grid.removes(r)).cloned().collect();
        assert_eq!(mine, kept.records(), "dim {dim}, tau {tau}");
    }
}

#[test]
fn grid_filter_handles_points_on_the_threshold() {
    // grid data puts many pairs at distances that are exact multiples of the step
    let train = gen_gauss_grid(2, 500, 0.1, 1);
    let synth = gen_gauss_grid(2, 3000, 0.1, 2);
    for tau in [0.1, 0.2] {
        let grid = SimilarityGrid::new(&train, tau).unwrap();
        let kept = similarity_filter(&train, &synth, tau, DistanceMetric::Euclidean).unwrap();
        let mine: Vec<_> = synth.records().iter().filter(|r| !grid.removes(r)).cloned().collect();
        assert_eq!(mine, kept.records());
    }
}

#[test]
fn far_away_points_survive() {
    let train = gen_gauss(2, 100, 0);
    let grid = SimilarityGrid::new(&train, 0.1).unwrap();
    assert!(!grid.removes(&[50.0, -50.0]));
    assert!(grid.removes(&train.records()[3]));
}

#[test]
fn conditional_probes_find_a_target_in_25_dimensions() {
    let cfg = TargetedConfig::new(25, Probing::Conditional);
    let o = ce3_targeted_run(&cfg, 0).unwrap();
    assert_eq!(o.probes, 25 * 100);
    assert!(o.detected, "{o:?}");
}

#[test]
fn unconditioned_samples_find_a_target_in_2_dimensions() {
    let cfg = TargetedConfig::new(2, Probing::Unconditioned);
    let o = ce3_targeted_run(&cfg, 0).unwrap();
    assert!(o.detected, "{o:?}");
    assert!(ce3_targeted_run(&TargetedConfig::new(6, Probing::Unconditioned), 0).is_err());
}

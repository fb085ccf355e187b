use dualqed::config::ModelConfig;
use dualqed::hilbert::MatterKind;
use dualqed::spectrum::compare_formulations;
use dualqed::Boundary;

fn single_plaquette() -> ModelConfig {
    ModelConfig::new(2, 1, Boundary::Open)
}

#[test]
fn pure_gauge_single_plaquette_is_exact_at_matched_cutoffs() {
    let mut cfg = single_plaquette();
    cfg.g2 = 0.8;
    let r = compare_formulations(&cfg, 4, &[(1, 4), (2, 8), (3, 12)], 1e-12, 0).unwrap();
    for e in &r.entries {
        assert!(e.max_difference < 1e-12, "{:?}", e.differences);
    }
    assert!(r.passed);
}

#[test]
fn matter_only_limit_gives_identical_spectra() {
    let mut cfg = single_plaquette();
    cfg.matter = MatterKind::StaggeredFermion;
    cfg.t = 0.0;
    cfg.m = 0.7;
    let r = compare_formulations(&cfg, 6, &[(2, 8)], 1e-12, 0).unwrap();
    assert!(r.entries[0].max_difference < 1e-12);
}

#[test]
fn full_model_gap_shrinks_with_cutoff() {
    let mut cfg = single_plaquette();
    cfg.matter = MatterKind::StaggeredFermion;
    cfg.t = 1.0;
    cfg.m = 0.5;
    let r = compare_formulations(&cfg, 3, &[(2, 2), (4, 4), (6, 6), (8, 8)], 1e-4, 0).unwrap();
    assert!(r.non_increasing);
    assert!(r.variational);
    // the θ/M cutoff 4Λ reproduces the link cutoff Λ
    let r = compare_formulations(&cfg, 3, &[(2, 8), (3, 12)], 1e-12, 0).unwrap();
    assert!(
        r.passed,
        "{:?}",
        r.entries.iter().map(|e| e.max_difference).collect::<Vec<_>>()
    );
}

#[test]
fn reports_are_deterministic() {
    let mut cfg = single_plaquette();
    cfg.matter = MatterKind::StaggeredFermion;
    cfg.t = 1.0;
    cfg.m = 0.5;
    let a = compare_formulations(&cfg, 3, &[(1, 2), (2, 4)], 1e-4, 5).unwrap();
    let b = compare_formulations(&cfg, 3, &[(1, 2), (2, 4)], 1e-4, 5).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn periodic_comparison_uses_sum_m_sector() {
    let mut cfg = ModelConfig::new(2, 2, Boundary::Periodic);
    cfg.cutoffs.global = 1;
    let r = compare_formulations(&cfg, 2, &[(1, 2)], 1.0, 0).unwrap();
    assert!(r.entries[0].dual.sector.iter().any(|s| s == "sum_m=0"));
    assert!(r.entries[0].original.eigenvalues.len() == 2);
}

//! End-to-end exercises of the library pipeline: synthetic records through
//! CSV, geometric label reconstruction, partitioning, learning, scoring,
//! annotation import, refinement validation, and the shipped starter
//! structures — with byte-level determinism checks along the way.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use scenesift_core::annotations::import_annotations;
use scenesift_core::bn::{
    build_structure, BnModel, Cbt, CbtRow, NodeSpec, ParentConfig, ZeroCountPolicy,
};
use scenesift_core::dataset::{
    derive_fn_dataset, ingest, read_instances, split, write_instances, write_raw_records, Dataset,
    MatchConfig, FN_ATTRIBUTE, FN_NO, FN_YES,
};
use scenesift_core::hypothesis::{score_scenes, AnalysisConfig, RunReport};
use scenesift_core::learning::{learn_cbts, LearnConfig};
use scenesift_core::refinement::{
    apply_refinement, validate, Proposition, RefinementOp, ValidationConfig,
};
use scenesift_core::synthgen::{generate, truth_sidecar, GeneratorConfig};

fn root_row(probs: Vec<f64>) -> BTreeMap<ParentConfig, CbtRow> {
    let mut rows = BTreeMap::new();
    rows.insert(ParentConfig::empty(), CbtRow::from_probs(probs));
    rows
}

/// Scene-level weather drives per-object clutter; misses are a root cause.
fn truth_model() -> BnModel {
    let structure = build_structure(
        vec![
            NodeSpec::new("W", ["calm", "storm"]).unwrap(),
            NodeSpec::new("C", ["sparse", "dense"]).unwrap(),
            NodeSpec::new(FN_ATTRIBUTE, [FN_NO, FN_YES]).unwrap(),
        ],
        vec![("W".into(), "C".into())],
    )
    .unwrap();
    let mut c_rows = BTreeMap::new();
    c_rows.insert(
        ParentConfig::from_pairs([("W", "calm")]),
        CbtRow::from_probs(vec![0.85, 0.15]),
    );
    c_rows.insert(
        ParentConfig::from_pairs([("W", "storm")]),
        CbtRow::from_probs(vec![0.25, 0.75]),
    );
    BnModel::new(
        structure,
        vec![
            Cbt {
                child: "W".into(),
                parent_names: vec![],
                rows: root_row(vec![0.9, 0.1]),
            },
            Cbt {
                child: "C".into(),
                parent_names: vec!["W".into()],
                rows: c_rows,
            },
            Cbt {
                child: FN_ATTRIBUTE.into(),
                parent_names: vec![],
                rows: root_row(vec![0.88, 0.12]),
            },
        ],
        ZeroCountPolicy::Uniform,
    )
    .unwrap()
}

fn generator(scenes: usize, seed: u64) -> GeneratorConfig {
    let mut cfg = GeneratorConfig::new(truth_model(), scenes, (3, 6), seed);
    cfg.scene_level_nodes = vec!["W".into()];
    cfg.instance_level_nodes = vec!["C".into(), FN_ATTRIBUTE.into()];
    cfg.fn_emission = true;
    cfg
}

/// Runs records -> CSV -> ingest -> label derivation -> split -> learn ->
/// score and returns the serialized report.
fn run_chain(dir: &Path, scenes: usize, gen_seed: u64, split_seed: u64) -> (RunReport, String) {
    let records = generate(&generator(scenes, gen_seed)).unwrap();
    let raw_path = dir.join("raw.csv");
    let mut buf = Vec::new();
    write_raw_records(&records, &mut buf).unwrap();
    fs::write(&raw_path, &buf).unwrap();

    let ingested = ingest(fs::File::open(&raw_path).unwrap()).unwrap();
    let (data, stats) = derive_fn_dataset(&ingested, &MatchConfig::default()).unwrap();
    assert_eq!(stats.gt_total, stats.gt_in_range);
    assert_eq!(stats.matched + stats.false_negatives, stats.gt_total);

    let (train, test) = split(&data, 0.8, split_seed).unwrap();
    let model = learn_cbts(&truth_model().structure, &train, &LearnConfig::default()).unwrap();
    let cfg = AnalysisConfig {
        alpha: 0.05,
        target_nodes: vec!["C".into(), FN_ATTRIBUTE.into()],
    };
    let report = score_scenes(&model, &train, &test, &cfg, Some(split_seed)).unwrap();
    let json = serde_json::to_string_pretty(&report).unwrap();
    (report, json)
}

#[test]
fn full_chain_produces_consistent_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (report, _) = run_chain(dir.path(), 200, 11, 0);

    assert_eq!(report.scene_reports.len(), 40);
    assert_eq!(report.rss, report.scene_reports.iter().filter(|s| s.relevant).count());
    assert!((report.rss_fraction - report.rss as f64 / 40.0).abs() < 1e-12);
    for scene in &report.scene_reports {
        // One entry per (instance, target) pair, two targets.
        assert_eq!(scene.n_total, scene.details.len());
        assert_eq!(scene.n_total % 2, 0);
        let by_hand: f64 = scene.details.iter().map(|d| d.n_alpha).sum();
        assert!((scene.n_significant - by_hand).abs() < 1e-9);
        assert_eq!(scene.relevant, scene.n_significant > 0.05 * scene.n_total as f64);
        for d in &scene.details {
            assert!((0.0..=1.0).contains(&d.cbl));
            assert!(0.0 <= d.p_min && d.p_min < d.p_max && d.p_max <= 1.0);
            assert!((0.0..=1.0).contains(&d.n_alpha));
        }
    }
    assert_eq!(report.split_seed, Some(0));
    assert_eq!(report.target_nodes, ["C", FN_ATTRIBUTE]);
}

#[test]
fn full_chain_is_byte_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (_, json_a) = run_chain(dir_a.path(), 120, 5, 2);
    let (_, json_b) = run_chain(dir_b.path(), 120, 5, 2);
    assert_eq!(json_a, json_b);

    let (_, json_c) = run_chain(dir_a.path(), 120, 6, 2);
    assert_ne!(json_a, json_c);
}

#[test]
fn instance_table_round_trip_is_lossless() {
    let records = generate(&generator(60, 3)).unwrap();
    let ingested = scenesift_core::dataset::ingest_records(records);
    let (data, _) = derive_fn_dataset(&ingested, &MatchConfig::default()).unwrap();

    let mut buf = Vec::new();
    write_instances(&data, &mut buf).unwrap();
    let back = read_instances(buf.as_slice()).unwrap();
    assert_eq!(back, data);

    // A second pass through the text form changes nothing.
    let mut buf2 = Vec::new();
    write_instances(&back, &mut buf2).unwrap();
    assert_eq!(buf, buf2);
}

#[test]
fn hidden_column_restored_by_sidecar_supports_learning() {
    let mut cfg = generator(80, 17);
    cfg.hidden_nodes = vec!["W".into()];
    cfg.noise_std = 0.0;

    let sidecar = truth_sidecar(&cfg, "W").unwrap();
    let records = generate(&cfg).unwrap();
    let ingested = scenesift_core::dataset::ingest_records(records);
    let (blinded, _) = derive_fn_dataset(&ingested, &MatchConfig::default()).unwrap();
    assert!(blinded.instances().all(|i| !i.attributes.contains_key("W")));

    let restored = import_annotations(&blinded, &sidecar).unwrap();
    assert!(restored.instances().all(|i| i.attributes.contains_key("W")));

    // The restored column participates in learning like any other.
    let model =
        learn_cbts(&truth_model().structure, &restored, &LearnConfig::default()).unwrap();
    let w_cbt = &model.cbts["W"];
    let support: u64 = w_cbt.rows.values().map(|r| r.support).sum();
    assert_eq!(support as usize, restored.total_instances());
    let c_cbt = &model.cbts["C"];
    assert_eq!(c_cbt.parent_names, ["W"]);
    assert!(c_cbt.rows.len() >= 2);
}

#[test]
fn validation_iterations_are_internally_consistent() {
    let records = generate(&generator(150, 23)).unwrap();
    let ingested = scenesift_core::dataset::ingest_records(records);
    let (data, _) = derive_fn_dataset(&ingested, &MatchConfig::default()).unwrap();
    let (train, test) = split(&data, 0.8, 1).unwrap();

    let before = build_structure(
        vec![
            NodeSpec::new("W", ["calm", "storm"]).unwrap(),
            NodeSpec::new("C", ["sparse", "dense"]).unwrap(),
            NodeSpec::new(FN_ATTRIBUTE, [FN_NO, FN_YES]).unwrap(),
        ],
        vec![],
    )
    .unwrap();
    let after = apply_refinement(
        &before,
        &RefinementOp::AddConfounder {
            new_node: NodeSpec::new("Zone", ["inner", "outer"]).unwrap(),
            targets: ["C".into(), FN_ATTRIBUTE.into()],
        },
    );
    // The new column is absent from the data, so validation must fail
    // cleanly rather than score garbage.
    assert!(validate(
        &before,
        &after.unwrap(),
        &train,
        &test,
        &ValidationConfig::default(),
        "C",
    )
    .is_err());

    // A data-supported edit: wire the observed weather into clutter.
    let after = apply_refinement(
        &before,
        &RefinementOp::RemoveCause {
            target: "C".into(),
            removed_parent: "W".into(),
        },
    );
    assert!(after.is_err(), "no such edge in the empty structure");

    let wired = build_structure(
        vec![
            NodeSpec::new("W", ["calm", "storm"]).unwrap(),
            NodeSpec::new("C", ["sparse", "dense"]).unwrap(),
            NodeSpec::new(FN_ATTRIBUTE, [FN_NO, FN_YES]).unwrap(),
        ],
        vec![("W".into(), "C".into())],
    )
    .unwrap();
    let cfg = ValidationConfig {
        seeds: vec![0, 1, 2, 3, 4],
        ..ValidationConfig::default()
    };
    let report = validate(&before, &wired, &train, &test, &cfg, "C").unwrap();

    assert_eq!(report.iterations.len(), 5);
    for it in &report.iterations {
        let denom = if it.rss_initial > 0 { it.rss_initial as f64 } else { 1.0 };
        let want = 100.0 * (it.rss_after as f64 - it.rss_initial as f64) / denom;
        assert!((it.relative_change - want).abs() < 1e-12);
        match it.rss_initial.cmp(&it.rss_after) {
            std::cmp::Ordering::Greater => {
                assert_eq!(it.proposition, Proposition::Valid);
                assert!(!it.tie);
            }
            std::cmp::Ordering::Less => {
                assert_eq!(it.proposition, Proposition::Invalid);
                assert!(!it.tie);
            }
            std::cmp::Ordering::Equal => {
                assert_eq!(it.proposition, Proposition::Invalid);
                assert!(it.tie);
            }
        }
    }
    // Headline values are the medians of the per-iteration values.
    let mut initials: Vec<f64> = report.iterations.iter().map(|i| i.rss_initial as f64).collect();
    initials.sort_by(f64::total_cmp);
    assert_eq!(report.rss_initial, initials[2]);
    let mut changes: Vec<f64> = report.iterations.iter().map(|i| i.relative_change).collect();
    changes.sort_by(f64::total_cmp);
    assert_eq!(report.median_relative_change, changes[2]);

    // Identical runs serialize identically.
    let again = validate(&before, &wired, &train, &test, &cfg, "C").unwrap();
    assert_eq!(
        serde_json::to_string(&report).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn shipped_structures_load_and_differ_by_one_confounder() {
    let models = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models");
    let initial = BnModel::load(models.join("lidar_initial.model")).unwrap();
    let refined = BnModel::load(models.join("lidar_refined.model")).unwrap();

    // Both ship without tables: they are structure templates to learn into.
    assert!(initial.cbts.is_empty());
    assert!(refined.cbts.is_empty());
    assert_eq!(initial.structure.nodes().len(), 7);
    assert_eq!(refined.structure.nodes().len(), 8);
    assert_eq!(
        initial.structure.parents(FN_ATTRIBUTE).unwrap(),
        ["Reflection", "Truncation", "Occlusion"]
    );

    // The refined file is exactly the initial structure plus a traffic
    // density variable feeding the miss label and the occlusion level.
    let derived = apply_refinement(
        &initial.structure,
        &RefinementOp::AddConfounder {
            new_node: NodeSpec::new(
                "TrafficDensity",
                ["low", "medium", "high", "very_high"],
            )
            .unwrap(),
            targets: [FN_ATTRIBUTE.into(), "Occlusion".into()],
        },
    )
    .unwrap();
    assert_eq!(&derived, &refined.structure);
    assert_ne!(initial.fingerprint(), refined.fingerprint());
}

#[test]
fn scoring_rejects_mismatched_partitions_and_empty_corpora() {
    let records = generate(&generator(40, 29)).unwrap();
    let ingested = scenesift_core::dataset::ingest_records(records);
    let (data, _) = derive_fn_dataset(&ingested, &MatchConfig::default()).unwrap();
    let (train, _) = split(&data, 0.8, 0).unwrap();
    let model = learn_cbts(&truth_model().structure, &train, &LearnConfig::default()).unwrap();
    let cfg = AnalysisConfig {
        alpha: 0.05,
        target_nodes: vec!["C".into()],
    };
    // Same scenes on both sides.
    assert!(score_scenes(&model, &train, &train, &cfg, None).is_err());
    // Empty training corpus.
    let empty = Dataset::default();
    assert!(score_scenes(&model, &empty, &data, &cfg, None).is_err());
}

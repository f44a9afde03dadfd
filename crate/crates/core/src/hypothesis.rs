//! Rare-scene screening: conditional belief levels, empirical p-value
//! ranges against a training corpus, per-instance significance, and
//! scene-level relevance scoring.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bn::{BnModel, ParentConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// The conditional belief level realized by one instance at one node: the
/// probability the model assigns to the instance's state of that node given
/// the instance's parent values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CblAssignment {
    pub scene_id: String,
    /// Index of the instance within its scene.
    pub instance_index: usize,
    pub node: String,
    /// Always in `[0, 1]`.
    pub cbl: f64,
}

/// Empirical p-value range of one observed level against a training corpus.
///
/// The lower end counts strictly smaller training levels; the upper end
/// additionally counts exact ties plus the observation itself, both over
/// corpus size + 1. Construction guarantees `0 <= p_min < p_max <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueRange {
    pub p_min: f64,
    pub p_max: f64,
}

/// Scoring options: the significance level and which nodes are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub target_nodes: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            target_nodes: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!("alpha must lie in (0, 1), got {}", self.alpha),
            });
        }
        if self.target_nodes.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "target_nodes must name at least one node".into(),
            });
        }
        Ok(())
    }
}

/// Computes the level every instance realizes at every target node, in
/// scene order, instance order, then target order. One assignment is emitted
/// per (instance, target) pair.
pub fn assign_cbls(
    model: &BnModel,
    data: &Dataset,
    targets: &[String],
) -> Result<Vec<CblAssignment>> {
    let mut assignments = Vec::with_capacity(data.total_instances() * targets.len());
    for scene in &data.scenes {
        for (instance_index, instance) in scene.instances.iter().enumerate() {
            for node in targets {
                let value = instance.attributes.get(node).ok_or_else(|| {
                    Error::MissingAttribute {
                        scene_id: instance.scene_id.clone(),
                        attribute: node.clone(),
                    }
                })?;
                let mut config = ParentConfig::empty();
                for parent in model.structure.parents(node)? {
                    let pv = instance.attributes.get(parent).ok_or_else(|| {
                        Error::MissingAttribute {
                            scene_id: instance.scene_id.clone(),
                            attribute: parent.clone(),
                        }
                    })?;
                    config.insert(parent.clone(), pv.clone());
                }
                let cbl = model.conditional_prob(node, value, &config)?;
                assignments.push(CblAssignment {
                    scene_id: scene.scene_id.clone(),
                    instance_index,
                    node: node.clone(),
                    cbl,
                });
            }
        }
    }
    Ok(assignments)
}

/// The sorted training levels of one node, ready for rank queries.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCorpus {
    pub node: String,
    /// Ascending; ties preserved.
    values: Vec<f64>,
}

impl NodeCorpus {
    pub fn new(node: impl Into<String>, mut values: Vec<f64>) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        NodeCorpus {
            node: node.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-node training corpora: every training instance contributes one level
/// per target node, and corpora are never pooled across nodes.
#[derive(Debug, Clone, Default)]
pub struct TrainCorpus {
    corpora: std::collections::BTreeMap<String, NodeCorpus>,
}

impl TrainCorpus {
    pub fn build(model: &BnModel, train: &Dataset, targets: &[String]) -> Result<Self> {
        let assignments = assign_cbls(model, train, targets)?;
        let mut per_node: std::collections::BTreeMap<String, Vec<f64>> = targets
            .iter()
            .map(|t| (t.clone(), Vec::new()))
            .collect();
        for a in assignments {
            per_node.get_mut(&a.node).unwrap().push(a.cbl);
        }
        Ok(TrainCorpus {
            corpora: per_node
                .into_iter()
                .map(|(node, values)| (node.clone(), NodeCorpus::new(node, values)))
                .collect(),
        })
    }

    pub fn for_node(&self, node: &str) -> Result<&NodeCorpus> {
        self.corpora
            .get(node)
            .ok_or_else(|| Error::EmptyTrainCorpus { node: node.into() })
    }
}

/// Empirical p-value range of `test_cbl` against a node's training corpus.
///
/// With `m` training levels, `lower` of them strictly below the observation
/// and `equal` exactly tied with it (exact floating-point equality):
/// `p_min = lower / (m + 1)` and `p_max = (lower + equal + 1) / (m + 1)`.
/// Rank lookups are binary searches over the sorted corpus.
pub fn pvalue_range(test_cbl: f64, corpus: &NodeCorpus) -> Result<PValueRange> {
    if corpus.is_empty() {
        return Err(Error::EmptyTrainCorpus {
            node: corpus.node.clone(),
        });
    }
    let values = corpus.values();
    let lower = values.partition_point(|&v| v < test_cbl);
    let upto = values.partition_point(|&v| v <= test_cbl);
    let equal = upto - lower;
    let denom = (values.len() + 1) as f64;
    Ok(PValueRange {
        p_min: lower as f64 / denom,
        p_max: (lower + equal + 1) as f64 / denom,
    })
}

/// Fraction of the significance level covered by a p-value range:
/// 0 when the whole range lies above `alpha`, 1 when it lies strictly below,
/// and the linear interpolation `(alpha - p_min) / (p_max - p_min)` when the
/// range straddles it. Boundary equality falls to the interpolation branch.
pub fn significance(range: &PValueRange, alpha: f64) -> f64 {
    if range.p_min > alpha {
        0.0
    } else if range.p_max < alpha {
        1.0
    } else {
        (alpha - range.p_min) / (range.p_max - range.p_min)
    }
}

/// One scored (instance, node) pair of a scene report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDetail {
    pub instance_index: usize,
    pub node: String,
    pub cbl: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_alpha: f64,
}

/// Scored summary of one test scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene_id: String,
    /// Number of scored (instance, target) pairs.
    pub n_total: usize,
    /// Total significance mass over the scene's pairs.
    pub n_significant: f64,
    /// True when `n_significant` strictly exceeds `alpha * n_total`.
    pub relevant: bool,
    pub details: Vec<AssignmentDetail>,
}

/// Full scoring output over a test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scene_reports: Vec<SceneReport>,
    /// Count of relevant scenes.
    pub rss: usize,
    /// `rss` over the number of test scenes (0 when there are none).
    pub rss_fraction: f64,
    pub alpha: f64,
    pub target_nodes: Vec<String>,
    pub model_fingerprint: String,
    /// Seed of the split that produced the train/test partition, when known.
    pub split_seed: Option<u64>,
}

/// Sums values in ascending order so the result depends only on the multiset,
/// never on instance order.
fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Scores every test scene against training corpora built from `train`.
///
/// The model must have been learned on `train`; the two partitions must be
/// scene-disjoint. Each test instance contributes one significance value per
/// target node; a scene is relevant when its significance total strictly
/// exceeds `alpha` times its pair count.
pub fn score_scenes(
    model: &BnModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &AnalysisConfig,
    split_seed: Option<u64>,
) -> Result<RunReport> {
    cfg.validate()?;
    let mut targets: Vec<String> = Vec::new();
    for node in &cfg.target_nodes {
        if !model.structure.contains(node) {
            return Err(Error::UnknownNode { name: node.clone() });
        }
        if !targets.contains(node) {
            targets.push(node.clone());
        }
    }
    let train_ids: BTreeSet<&str> = train.scenes.iter().map(|s| s.scene_id.as_str()).collect();
    if let Some(shared) = test
        .scenes
        .iter()
        .find(|s| train_ids.contains(s.scene_id.as_str()))
    {
        return Err(Error::InvalidConfig {
            reason: format!(
                "scene '{}' appears in both train and test partitions",
                shared.scene_id
            ),
        });
    }

    let corpus = TrainCorpus::build(model, train, &targets)?;
    let mut scene_reports = Vec::with_capacity(test.scenes.len());
    for scene in &test.scenes {
        let mut details =
            Vec::with_capacity(scene.instances.len() * targets.len());
        for (instance_index, instance) in scene.instances.iter().enumerate() {
            for node in &targets {
                let value = instance.attributes.get(node).ok_or_else(|| {
                    Error::MissingAttribute {
                        scene_id: instance.scene_id.clone(),
                        attribute: node.clone(),
                    }
                })?;
                let mut config = ParentConfig::empty();
                for parent in model.structure.parents(node)? {
                    let pv = instance.attributes.get(parent).ok_or_else(|| {
                        Error::MissingAttribute {
                            scene_id: instance.scene_id.clone(),
                            attribute: parent.clone(),
                        }
                    })?;
                    config.insert(parent.clone(), pv.clone());
                }
                let cbl = model.conditional_prob(node, value, &config)?;
                let range = pvalue_range(cbl, corpus.for_node(node)?)?;
                details.push(AssignmentDetail {
                    instance_index,
                    node: node.clone(),
                    cbl,
                    p_min: range.p_min,
                    p_max: range.p_max,
                    n_alpha: significance(&range, cfg.alpha),
                });
            }
        }
        let n_total = details.len();
        let mut sig_values: Vec<f64> = details.iter().map(|d| d.n_alpha).collect();
        let n_significant = order_free_sum(&mut sig_values);
        let relevant = n_significant > cfg.alpha * n_total as f64;
        scene_reports.push(SceneReport {
            scene_id: scene.scene_id.clone(),
            n_total,
            n_significant,
            relevant,
            details,
        });
    }
    let rss = scene_reports.iter().filter(|s| s.relevant).count();
    let rss_fraction = if scene_reports.is_empty() {
        0.0
    } else {
        rss as f64 / scene_reports.len() as f64
    };
    Ok(RunReport {
        scene_reports,
        rss,
        rss_fraction,
        alpha: cfg.alpha,
        target_nodes: targets,
        model_fingerprint: model.fingerprint(),
        split_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::{build_structure, BnModel, Cbt, CbtRow, NodeSpec, ZeroCountPolicy};
    use crate::dataset::ObjectInstance;
    use std::collections::BTreeMap;

    fn corpus(values: &[f64]) -> NodeCorpus {
        NodeCorpus::new("X", values.to_vec())
    }

    /// Independent linear-scan computation of the p-value range.
    fn naive_pvalue(test: f64, values: &[f64]) -> (f64, f64) {
        let lower = values.iter().filter(|&&v| v < test).count();
        let equal = values.iter().filter(|&&v| v == test).count();
        let denom = (values.len() + 1) as f64;
        (
            lower as f64 / denom,
            (lower + equal + 1) as f64 / denom,
        )
    }

    #[test]
    fn pvalue_worked_examples() {
        // Corpus {0.1, 0.2, 0.2, 0.5}: a tied value, a value below all, and
        // a value above all.
        let c = corpus(&[0.1, 0.2, 0.2, 0.5]);
        let tied = pvalue_range(0.2, &c).unwrap();
        assert_eq!((tied.p_min, tied.p_max), (0.2, 0.8));
        let below = pvalue_range(0.05, &c).unwrap();
        assert_eq!((below.p_min, below.p_max), (0.0, 0.2));
        let above = pvalue_range(0.9, &c).unwrap();
        assert_eq!((above.p_min, above.p_max), (0.8, 1.0));
    }

    #[test]
    fn pvalue_matches_naive_scan() {
        let values = [0.0, 0.0, 0.125, 0.125, 0.125, 0.5, 0.75, 1.0, 1.0];
        let c = corpus(&values);
        for test in [0.0, 0.05, 0.125, 0.3, 0.5, 0.6, 0.75, 0.9, 1.0] {
            let fast = pvalue_range(test, &c).unwrap();
            let (p_min, p_max) = naive_pvalue(test, &values);
            assert_eq!(fast.p_min, p_min, "p_min for {test}");
            assert_eq!(fast.p_max, p_max, "p_max for {test}");
        }
    }

    #[test]
    fn pvalue_range_is_always_nonempty_and_bounded() {
        let c = corpus(&[0.3; 50]);
        for test in [0.0, 0.3, 1.0] {
            let r = pvalue_range(test, &c).unwrap();
            assert!(0.0 <= r.p_min && r.p_min < r.p_max && r.p_max <= 1.0);
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let c = corpus(&[]);
        assert!(matches!(
            pvalue_range(0.5, &c),
            Err(Error::EmptyTrainCorpus { .. })
        ));
    }

    #[test]
    fn significance_worked_examples() {
        let alpha = 0.05;
        // Entirely above the level.
        assert_eq!(
            significance(&PValueRange { p_min: 0.06, p_max: 0.10 }, alpha),
            0.0
        );
        // Entirely below the level.
        assert_eq!(
            significance(&PValueRange { p_min: 0.01, p_max: 0.04 }, alpha),
            1.0
        );
        // Straddling: linear interpolation (up to float rounding of the
        // decimal literals).
        let s = significance(&PValueRange { p_min: 0.04, p_max: 0.06 }, alpha);
        assert!((s - 0.5).abs() < 1e-12, "interpolated {s}");
    }

    #[test]
    fn significance_boundary_equality_interpolates() {
        // p_min == alpha is not "above", so the interpolation branch runs
        // and yields 0; p_max == alpha likewise yields 1.
        let at_min = PValueRange { p_min: 0.05, p_max: 0.10 };
        assert_eq!(significance(&at_min, 0.05), 0.0);
        let at_max = PValueRange { p_min: 0.01, p_max: 0.05 };
        assert_eq!(significance(&at_max, 0.05), 1.0);
    }

    #[test]
    fn significance_is_monotone_in_alpha() {
        let range = PValueRange { p_min: 0.2, p_max: 0.4 };
        let mut last = -1.0;
        for i in 1..100 {
            let alpha = i as f64 / 100.0;
            let s = significance(&range, alpha);
            assert!((0.0..=1.0).contains(&s));
            assert!(s >= last);
            last = s;
        }
    }

    fn instance(scene: &str, attrs: &[(&str, &str)]) -> ObjectInstance {
        ObjectInstance {
            scene_id: scene.into(),
            attributes: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Root-only model with an authored distribution over {lo, hi}.
    fn root_model(p_lo: f64) -> BnModel {
        let structure = build_structure(
            vec![NodeSpec::new("X", ["lo", "hi"]).unwrap()],
            vec![],
        )
        .unwrap();
        let mut rows = BTreeMap::new();
        rows.insert(
            crate::bn::ParentConfig::empty(),
            CbtRow::from_probs(vec![p_lo, 1.0 - p_lo]),
        );
        BnModel::new(
            structure,
            vec![Cbt {
                child: "X".into(),
                parent_names: vec![],
                rows,
            }],
            ZeroCountPolicy::Uniform,
        )
        .unwrap()
    }

    fn xs(scene: &str, states: &[&str]) -> Vec<ObjectInstance> {
        states
            .iter()
            .map(|s| instance(scene, &[("X", s)]))
            .collect()
    }

    #[test]
    fn assign_cbls_reads_model_levels() {
        let model = root_model(0.2);
        let data = Dataset::from_instances(xs("s0", &["lo", "hi"]));
        let assignments = assign_cbls(&model, &data, &["X".to_string()]).unwrap();
        assert_eq!(assignments.len(), 2);
        assert_eq!(assignments[0].cbl, 0.2);
        assert_eq!(assignments[1].cbl, 0.8);
        assert_eq!(assignments[1].instance_index, 1);
    }

    #[test]
    fn scoring_flags_rank_rare_scenes() {
        let model = root_model(0.1);
        // Train: mostly hi (level 0.9), a few lo (level 0.1).
        let mut train_instances = Vec::new();
        for i in 0..19 {
            train_instances.extend(xs(&format!("t{i:02}"), &["hi", "hi", "hi", "hi"]));
        }
        train_instances.extend(xs("t19", &["lo", "hi", "hi", "hi"]));
        let train = Dataset::from_instances(train_instances);
        // One ordinary test scene, one packed with the rare state.
        let mut test_instances = xs("u_common", &["hi", "hi", "hi", "hi"]);
        test_instances.extend(xs("u_rare", &["lo", "lo", "lo", "hi"]));
        let test = Dataset::from_instances(test_instances);
        let cfg = AnalysisConfig {
            alpha: 0.05,
            target_nodes: vec!["X".into()],
        };
        let report = score_scenes(&model, &train, &test, &cfg, Some(3)).unwrap();
        assert_eq!(report.rss, 1);
        assert_eq!(report.rss_fraction, 0.5);
        let by_id: BTreeMap<&str, &SceneReport> = report
            .scene_reports
            .iter()
            .map(|s| (s.scene_id.as_str(), s))
            .collect();
        assert!(by_id["u_rare"].relevant);
        assert!(!by_id["u_common"].relevant);
        assert_eq!(report.split_seed, Some(3));
        assert_eq!(by_id["u_rare"].n_total, 4);
    }

    #[test]
    fn relevance_inequality_is_strict() {
        // A corpus with a single distinct level gives every test instance a
        // full-width range [0, 1] and significance exactly alpha, so the
        // scene total equals alpha * n exactly and must NOT be relevant.
        let model = root_model(0.25);
        let train = Dataset::from_instances(xs("t0", &["lo", "lo", "lo", "lo"]));
        let test = Dataset::from_instances(xs("u0", &["lo", "lo", "lo", "lo"]));
        let cfg = AnalysisConfig {
            alpha: 0.5,
            target_nodes: vec!["X".into()],
        };
        let report = score_scenes(&model, &train, &test, &cfg, None).unwrap();
        let scene = &report.scene_reports[0];
        assert_eq!(scene.n_significant, 0.5 * scene.n_total as f64);
        assert!(!scene.relevant);
        assert_eq!(report.rss, 0);
    }

    #[test]
    fn scoring_rejects_overlapping_partitions() {
        let model = root_model(0.5);
        let data = Dataset::from_instances(xs("s0", &["lo"]));
        let cfg = AnalysisConfig {
            alpha: 0.05,
            target_nodes: vec!["X".into()],
        };
        assert!(matches!(
            score_scenes(&model, &data, &data, &cfg, None),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn scoring_validates_config_and_targets() {
        let model = root_model(0.5);
        let train = Dataset::from_instances(xs("t0", &["lo"]));
        let test = Dataset::from_instances(xs("u0", &["hi"]));
        let bad_alpha = AnalysisConfig {
            alpha: 0.0,
            target_nodes: vec!["X".into()],
        };
        assert!(score_scenes(&model, &train, &test, &bad_alpha, None).is_err());
        let no_targets = AnalysisConfig {
            alpha: 0.05,
            target_nodes: vec![],
        };
        assert!(score_scenes(&model, &train, &test, &no_targets, None).is_err());
        let unknown = AnalysisConfig {
            alpha: 0.05,
            target_nodes: vec!["Zzz".into()],
        };
        assert!(matches!(
            score_scenes(&model, &train, &test, &unknown, None),
            Err(Error::UnknownNode { .. })
        ));
    }

    #[test]
    fn scene_totals_ignore_instance_order() {
        let model = root_model(0.1);
        let mut train_instances = Vec::new();
        for i in 0..10 {
            train_instances.extend(xs(&format!("t{i:02}"), &["hi", "hi", "lo", "hi"]));
        }
        let train = Dataset::from_instances(train_instances);
        let forward = Dataset::from_instances(xs("u0", &["lo", "hi", "lo", "hi", "hi"]));
        let backward = Dataset::from_instances(xs("u0", &["hi", "hi", "lo", "hi", "lo"]));
        let cfg = AnalysisConfig {
            alpha: 0.2,
            target_nodes: vec!["X".into()],
        };
        let a = score_scenes(&model, &train, &forward, &cfg, None).unwrap();
        let b = score_scenes(&model, &train, &backward, &cfg, None).unwrap();
        assert_eq!(
            a.scene_reports[0].n_significant.to_bits(),
            b.scene_reports[0].n_significant.to_bits()
        );
        assert_eq!(a.rss, b.rss);
    }
}

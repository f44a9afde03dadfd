//! Structural refinement operations and their data-driven validation:
//! apply a proposed edit to a network structure, relearn both variants on
//! resampled partitions, and accept the edit only when it lowers the count
//! of flagged scenes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bn::{BnStructure, NodeSpec};
use crate::dataset::{split, Dataset};
use crate::error::{Error, Result};
use crate::hypothesis::{score_scenes, AnalysisConfig};
use crate::learning::{learn_cbts, LearnConfig};

/// A proposed structural edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefinementOp {
    /// Introduce a new variable as a direct cause of an existing node.
    AddDirectCause { new_node: NodeSpec, target: String },
    /// Introduce a new variable as a shared cause of two existing nodes.
    AddConfounder {
        new_node: NodeSpec,
        targets: [String; 2],
    },
    /// Drop an existing cause edge.
    RemoveCause {
        target: String,
        removed_parent: String,
    },
}

/// Returns a copy of `structure` with the edit applied; the input is left
/// untouched. Fails when the edit names unknown nodes, re-declares an
/// existing one, or removes an edge that is not there.
pub fn apply_refinement(structure: &BnStructure, op: &RefinementOp) -> Result<BnStructure> {
    let mut refined = structure.clone();
    match op {
        RefinementOp::AddDirectCause { new_node, target } => {
            if !refined.contains(target) {
                return Err(Error::UnknownNode {
                    name: target.clone(),
                });
            }
            refined.add_node(new_node.clone())?;
            refined.add_edge(&new_node.name, target)?;
        }
        RefinementOp::AddConfounder { new_node, targets } => {
            if targets[0] == targets[1] {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "confounder targets must be distinct, both are '{}'",
                        targets[0]
                    ),
                });
            }
            for target in targets {
                if !refined.contains(target) {
                    return Err(Error::UnknownNode {
                        name: target.clone(),
                    });
                }
            }
            refined.add_node(new_node.clone())?;
            for target in targets {
                refined.add_edge(&new_node.name, target)?;
            }
        }
        RefinementOp::RemoveCause {
            target,
            removed_parent,
        } => {
            refined.remove_edge(removed_parent, target)?;
        }
    }
    Ok(refined)
}

/// Verdict on a proposed refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposition {
    Valid,
    Invalid,
}

/// Options for refinement validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub alpha: f64,
    pub learn: LearnConfig,
    /// Fraction of the pooled scenes assigned to training on each resplit.
    pub train_fraction: f64,
    /// Resplit seeds. When empty the provided train/test partition is used
    /// as-is for a single iteration.
    pub seeds: Vec<u64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            alpha: 0.05,
            learn: LearnConfig::default(),
            train_fraction: 0.8,
            seeds: (0..10).collect(),
        }
    }
}

/// Outcome of one learn/score round on one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutcome {
    /// Resplit seed, or `None` when the caller's partition was used directly.
    pub seed: Option<u64>,
    pub rss_initial: usize,
    pub rss_after: usize,
    /// Percent change of the flagged-scene count, relative to the initial
    /// count (relative to 1 when the initial count is zero).
    pub relative_change: f64,
    pub proposition: Proposition,
    /// True when the two counts were exactly equal.
    pub tie: bool,
}

/// Aggregated validation verdict. Headline numbers are medians over the
/// iterations; the verdict compares the median counts the same way a single
/// iteration compares its pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Node whose levels were scored.
    pub node: String,
    pub rss_initial: f64,
    pub rss_after: f64,
    pub relative_rss_change: f64,
    pub proposition: Proposition,
    pub tie: bool,
    pub mean_relative_change: f64,
    pub median_relative_change: f64,
    pub iterations: Vec<IterationOutcome>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn relative_change(initial: f64, after: f64) -> f64 {
    let denom = if initial > 0.0 { initial } else { 1.0 };
    100.0 * (after - initial) / denom
}

fn judge(initial: f64, after: f64) -> (Proposition, bool) {
    if initial > after {
        (Proposition::Valid, false)
    } else if initial < after {
        (Proposition::Invalid, false)
    } else {
        (Proposition::Invalid, true)
    }
}

/// Validates a refinement by comparing flagged-scene counts before and after.
///
/// Both structures are relearned from scratch on each training partition and
/// scored on the matching test partition at `eval_node`. With resplit seeds
/// the train and test scenes are pooled and repartitioned per seed; the
/// refinement is accepted when the count drops, rejected when it rises, and
/// rejected with the tie marker when it is unchanged.
pub fn validate(
    before: &BnStructure,
    after: &BnStructure,
    train: &Dataset,
    test: &Dataset,
    cfg: &ValidationConfig,
    eval_node: &str,
) -> Result<ValidationReport> {
    for (label, structure) in [("initial", before), ("refined", after)] {
        if !structure.contains(eval_node) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "evaluation node '{eval_node}' is missing from the {label} structure"
                ),
            });
        }
    }

    let partitions: Vec<(Option<u64>, Dataset, Dataset)> = if cfg.seeds.is_empty() {
        vec![(None, train.clone(), test.clone())]
    } else {
        let train_ids: BTreeSet<&str> =
            train.scenes.iter().map(|s| s.scene_id.as_str()).collect();
        if let Some(shared) = test
            .scenes
            .iter()
            .find(|s| train_ids.contains(s.scene_id.as_str()))
        {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "scene '{}' appears in both partitions, cannot pool for resplitting",
                    shared.scene_id
                ),
            });
        }
        let pooled = Dataset::from_instances(
            train
                .instances()
                .chain(test.instances())
                .cloned()
                .collect::<Vec<_>>(),
        );
        let mut parts = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let (tr, te) = split(&pooled, cfg.train_fraction, seed)?;
            parts.push((Some(seed), tr, te));
        }
        parts
    };

    let analysis = AnalysisConfig {
        alpha: cfg.alpha,
        target_nodes: vec![eval_node.to_string()],
    };
    let mut iterations = Vec::with_capacity(partitions.len());
    for (seed, tr, te) in &partitions {
        let initial_model = learn_cbts(before, tr, &cfg.learn)?;
        let refined_model = learn_cbts(after, tr, &cfg.learn)?;
        let initial_run = score_scenes(&initial_model, tr, te, &analysis, *seed)?;
        let refined_run = score_scenes(&refined_model, tr, te, &analysis, *seed)?;
        let (proposition, tie) = judge(initial_run.rss as f64, refined_run.rss as f64);
        iterations.push(IterationOutcome {
            seed: *seed,
            rss_initial: initial_run.rss,
            rss_after: refined_run.rss,
            relative_change: relative_change(initial_run.rss as f64, refined_run.rss as f64),
            proposition,
            tie,
        });
    }

    let initials: Vec<f64> = iterations.iter().map(|i| i.rss_initial as f64).collect();
    let afters: Vec<f64> = iterations.iter().map(|i| i.rss_after as f64).collect();
    let changes: Vec<f64> = iterations.iter().map(|i| i.relative_change).collect();
    let rss_initial = median(&initials);
    let rss_after = median(&afters);
    let (proposition, tie) = judge(rss_initial, rss_after);
    Ok(ValidationReport {
        node: eval_node.to_string(),
        rss_initial,
        rss_after,
        relative_rss_change: relative_change(rss_initial, rss_after),
        proposition,
        tie,
        mean_relative_change: changes.iter().sum::<f64>() / changes.len() as f64,
        median_relative_change: median(&changes),
        iterations,
    })
}

/// Outcome of the two-sided confounder check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderReport {
    pub new_node: String,
    /// Validation of the new variable as a direct cause of the child.
    pub child_report: ValidationReport,
    /// Validation of the new variable as a direct cause of the parent.
    pub parent_report: ValidationReport,
    /// True when both validations accept, pointing at a shared hidden cause.
    pub indicated: bool,
}

/// Checks whether a new variable behaves like a confounder of an existing
/// `parent -> child` edge: it must independently validate as a direct cause
/// of the child and as a direct cause of the parent.
pub fn confounder_workflow(
    structure: &BnStructure,
    new_node: &NodeSpec,
    child: &str,
    parent: &str,
    train: &Dataset,
    test: &Dataset,
    cfg: &ValidationConfig,
) -> Result<ConfounderReport> {
    let parents = structure.parents(child)?;
    if !parents.iter().any(|p| p == parent) {
        return Err(Error::InvalidConfig {
            reason: format!(
                "confounder check requires an existing edge '{parent}' -> '{child}'"
            ),
        });
    }
    let child_after = apply_refinement(
        structure,
        &RefinementOp::AddDirectCause {
            new_node: new_node.clone(),
            target: child.to_string(),
        },
    )?;
    let child_report = validate(structure, &child_after, train, test, cfg, child)?;
    let parent_after = apply_refinement(
        structure,
        &RefinementOp::AddDirectCause {
            new_node: new_node.clone(),
            target: parent.to_string(),
        },
    )?;
    let parent_report = validate(structure, &parent_after, train, test, cfg, parent)?;
    let indicated = child_report.proposition == Proposition::Valid
        && parent_report.proposition == Proposition::Valid;
    Ok(ConfounderReport {
        new_node: new_node.name.clone(),
        child_report,
        parent_report,
        indicated,
    })
}

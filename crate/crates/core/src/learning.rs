//! Table learning: maximum-likelihood estimation of every node's conditional
//! belief table by exact counting over a training instance table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bn::{BnModel, BnStructure, Cbt, CbtRow, ParentConfig, ZeroCountPolicy};
use crate::dataset::{Dataset, ObjectInstance};
use crate::error::{Error, Result};

/// Learning options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Policy stamped onto the learned model for later unseen-configuration
    /// queries; learning itself only materializes observed rows.
    #[serde(default)]
    pub zero_count_policy: ZeroCountPolicy,
}

/// Looks up one attribute of an instance as a state index of `node`.
fn state_index_of(
    instance: &ObjectInstance,
    node: &str,
    states: &[String],
) -> Result<usize> {
    let value = instance
        .attributes
        .get(node)
        .ok_or_else(|| Error::MissingAttribute {
            scene_id: instance.scene_id.clone(),
            attribute: node.to_string(),
        })?;
    states
        .iter()
        .position(|s| s == value)
        .ok_or_else(|| Error::UnknownStateLabel {
            scene_id: instance.scene_id.clone(),
            node: node.to_string(),
            value: value.clone(),
        })
}

/// Learns one table per structure node by counting: each observed parent
/// configuration becomes a row whose probabilities are the exact
/// integer-count ratios `count / row total`.
///
/// Every instance must carry a declared state for every structure node
/// (extra attributes are ignored). An empty dataset produces a model whose
/// tables are all empty, so every query falls to the zero-count policy.
pub fn learn_cbts(structure: &BnStructure, train: &Dataset, cfg: &LearnConfig) -> Result<BnModel> {
    let mut cbts = Vec::with_capacity(structure.nodes().len());
    for spec in structure.nodes() {
        let parents = structure.parents(&spec.name)?;
        let parent_states: Vec<&[String]> = parents
            .iter()
            .map(|p| structure.node(p).unwrap().states.as_slice())
            .collect();
        // Count in index space; parent configurations become maps only once
        // per distinct row at the end.
        let mut rows: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
        let k = spec.states.len();
        for instance in train.instances() {
            let child_ix = state_index_of(instance, &spec.name, &spec.states)?;
            let mut key = Vec::with_capacity(parents.len());
            for (parent, states) in parents.iter().zip(&parent_states) {
                key.push(state_index_of(instance, parent, states)?);
            }
            rows.entry(key).or_insert_with(|| vec![0; k])[child_ix] += 1;
        }
        let rows: BTreeMap<ParentConfig, CbtRow> = rows
            .into_iter()
            .map(|(key, counts)| {
                let config = ParentConfig::from_pairs(
                    key.iter()
                        .enumerate()
                        .map(|(i, &state_ix)| {
                            (parents[i].clone(), parent_states[i][state_ix].clone())
                        }),
                );
                (config, CbtRow::from_counts(counts))
            })
            .collect();
        cbts.push(Cbt {
            child: spec.name.clone(),
            parent_names: parents.to_vec(),
            rows,
        });
    }
    BnModel::new(structure.clone(), cbts, cfg.zero_count_policy)
}

/// Log-likelihood of a dataset under a model: the sum over instances of the
/// log joint probability of their assignments restricted to the structure's
/// nodes. A zero-probability factor yields negative infinity; an empty
/// dataset yields 0.
pub fn log_likelihood(model: &BnModel, data: &Dataset) -> Result<f64> {
    let structure = &model.structure;
    let mut total = 0.0;
    for instance in data.instances() {
        for spec in structure.nodes() {
            let value = instance
                .attributes
                .get(&spec.name)
                .ok_or_else(|| Error::MissingAttribute {
                    scene_id: instance.scene_id.clone(),
                    attribute: spec.name.clone(),
                })?;
            let mut config = ParentConfig::empty();
            for parent in structure.parents(&spec.name)? {
                let pv = instance
                    .attributes
                    .get(parent)
                    .ok_or_else(|| Error::MissingAttribute {
                        scene_id: instance.scene_id.clone(),
                        attribute: parent.clone(),
                    })?;
                config.insert(parent.clone(), pv.clone());
            }
            let p = model.conditional_prob(&spec.name, value, &config)?;
            total += p.ln();
        }
    }
    Ok(total)
}

//! Synthetic corpus generation: ancestral sampling of scene- and
//! instance-level variables from an authored network, positional layout
//! inside the sensor box, optional detector noise, and suppression of
//! detections for missed objects so the miss label can be rebuilt from
//! geometry downstream.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotations::{AnnotationFile, AnnotationNode, SceneAnnotation};
use crate::bn::{BnModel, ParentConfig};
use crate::dataset::{RawObjectRecord, Source};
use crate::error::{Error, Result};

/// Ground-truth model and layout parameters for one synthetic corpus.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Fully specified network the corpus is drawn from.
    pub truth_model: BnModel,
    /// Number of scenes.
    pub scenes: usize,
    /// Inclusive (min, max) object count per scene.
    pub instances_per_scene: (usize, usize),
    /// Nodes drawn once per scene, shared by all its objects.
    pub scene_level_nodes: Vec<String>,
    /// Nodes drawn independently per object.
    pub instance_level_nodes: Vec<String>,
    /// Nodes sampled but withheld from the emitted attribute columns.
    pub hidden_nodes: Vec<String>,
    /// When set, the miss-label node is withheld from the emitted columns
    /// and objects whose label equals `fn_positive_state` produce no
    /// detection record, so the label is recoverable only from geometry.
    pub fn_emission: bool,
    pub fn_node: String,
    pub fn_positive_state: String,
    /// Standard deviation of the detector position error, in meters.
    pub noise_std: f64,
    /// Objects are placed strictly inside `|x| < x_limit`, `|y| < y_limit`.
    pub x_limit: f64,
    pub y_limit: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Starts a config with the conventional layout defaults; node
    /// partitions start empty and must be filled in by the caller.
    pub fn new(
        truth_model: BnModel,
        scenes: usize,
        instances_per_scene: (usize, usize),
        seed: u64,
    ) -> Self {
        GeneratorConfig {
            truth_model,
            scenes,
            instances_per_scene,
            scene_level_nodes: Vec::new(),
            instance_level_nodes: Vec::new(),
            hidden_nodes: Vec::new(),
            fn_emission: false,
            fn_node: "FN".into(),
            fn_positive_state: "Yes".into(),
            noise_std: 0.3,
            x_limit: 140.0,
            y_limit: 50.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidConfig { reason });
        if self.scenes == 0 {
            return fail("scene count must be positive".into());
        }
        let (lo, hi) = self.instances_per_scene;
        if lo < 1 || lo > hi {
            return fail(format!(
                "instances_per_scene must satisfy 1 <= min <= max, got ({lo}, {hi})"
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        for (label, limit) in [("x_limit", self.x_limit), ("y_limit", self.y_limit)] {
            if !(limit > 0.0 && limit.is_finite()) {
                return fail(format!("{label} must be finite and positive, got {limit}"));
            }
        }
        let scene_set: BTreeSet<&str> =
            self.scene_level_nodes.iter().map(String::as_str).collect();
        let instance_set: BTreeSet<&str> =
            self.instance_level_nodes.iter().map(String::as_str).collect();
        if let Some(both) = scene_set.intersection(&instance_set).next() {
            return fail(format!("node '{both}' is declared both scene- and instance-level"));
        }
        let declared: BTreeSet<&str> = scene_set.union(&instance_set).copied().collect();
        let model_nodes: BTreeSet<&str> = self
            .truth_model
            .structure
            .nodes()
            .iter()
            .map(|n| n.name.as_str())
            .collect();
        if declared != model_nodes {
            return fail(format!(
                "scene- and instance-level nodes must partition the model's nodes exactly; \
                 declared {declared:?}, model has {model_nodes:?}"
            ));
        }
        for hidden in &self.hidden_nodes {
            if !model_nodes.contains(hidden.as_str()) {
                return Err(Error::UnknownNode {
                    name: hidden.clone(),
                });
            }
        }
        // A per-scene value cannot depend on a per-object one.
        for node in &self.scene_level_nodes {
            for parent in self.truth_model.structure.parents(node)? {
                if instance_set.contains(parent.as_str()) {
                    return fail(format!(
                        "scene-level node '{node}' has instance-level parent '{parent}'"
                    ));
                }
            }
        }
        if self.fn_emission {
            if !instance_set.contains(self.fn_node.as_str()) {
                return fail(format!(
                    "fn_emission requires instance-level node '{}' in the model",
                    self.fn_node
                ));
            }
            let spec = self.truth_model.structure.node(&self.fn_node).unwrap();
            if spec.state_index(&self.fn_positive_state).is_none() {
                return Err(Error::UnknownState {
                    node: self.fn_node.clone(),
                    state: self.fn_positive_state.clone(),
                });
            }
        }
        Ok(())
    }
}

struct SampledInstance {
    /// Full assignment: scene-level and instance-level values merged.
    values: BTreeMap<String, String>,
    x: f64,
    y: f64,
    /// Detector-reported position; `None` when the object went undetected.
    detect: Option<(f64, f64)>,
}

struct SampledScene {
    scene_id: String,
    scene_states: BTreeMap<String, String>,
    instances: Vec<SampledInstance>,
}

/// Draws one state of `node` given the values already assigned, walking the
/// cumulative distribution with a single uniform draw. Accumulated rounding
/// can leave the final cumulative fractionally short of 1, so the last state
/// absorbs any fall-through; rows that put probability 1 on one state
/// therefore produce that state unconditionally.
fn sample_state(
    model: &BnModel,
    node: &str,
    assignment: &BTreeMap<String, String>,
    rng: &mut ChaCha8Rng,
) -> Result<String> {
    let spec = model
        .structure
        .node(node)
        .ok_or_else(|| Error::UnknownNode { name: node.into() })?;
    let mut config = ParentConfig::empty();
    for parent in model.structure.parents(node)? {
        config.insert(parent.clone(), assignment[parent].clone());
    }
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut chosen = spec.states.len() - 1;
    for (i, state) in spec.states.iter().enumerate() {
        cumulative += model.conditional_prob(node, state, &config)?;
        if u < cumulative {
            chosen = i;
            break;
        }
    }
    Ok(spec.states[chosen].clone())
}

/// Uniform draw strictly inside `(-limit, limit)`.
fn sample_coordinate(limit: f64, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = rng.gen_range(-limit..limit);
        if v.abs() < limit {
            return v;
        }
    }
}

/// Samples the full corpus. Every scene gets its own decorrelated stream of
/// the same seeded generator, so corpora are reproducible and unaffected by
/// scene count changes elsewhere. Suppressed objects draw no noise, which
/// keeps paired runs (emission on/off) on identical streams when the noise
/// is zero.
fn sample_corpus(cfg: &GeneratorConfig) -> Result<Vec<SampledScene>> {
    cfg.validate()?;
    let model = &cfg.truth_model;
    let topo = model.structure.topological_order();
    let scene_set: BTreeSet<&str> = cfg.scene_level_nodes.iter().map(String::as_str).collect();
    let scene_order: Vec<&String> = topo.iter().filter(|n| scene_set.contains(n.as_str())).collect();
    let instance_order: Vec<&String> =
        topo.iter().filter(|n| !scene_set.contains(n.as_str())).collect();
    let (lo, hi) = cfg.instances_per_scene;
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidConfig {
            reason: format!("invalid noise_std: {e}"),
        })?)
    } else {
        None
    };

    let mut scenes = Vec::with_capacity(cfg.scenes);
    for scene_index in 0..cfg.scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(scene_index as u64);

        let mut scene_states = BTreeMap::new();
        for node in &scene_order {
            let state = sample_state(model, node, &scene_states, &mut rng)?;
            scene_states.insert((*node).clone(), state);
        }
        let count = if lo == hi { lo } else { rng.gen_range(lo..=hi) };

        let mut instances = Vec::with_capacity(count);
        for _ in 0..count {
            let mut values = scene_states.clone();
            for node in &instance_order {
                let state = sample_state(model, node, &values, &mut rng)?;
                values.insert((*node).clone(), state);
            }
            let x = sample_coordinate(cfg.x_limit, &mut rng);
            let y = sample_coordinate(cfg.y_limit, &mut rng);
            let suppressed = cfg.fn_emission
                && values[&cfg.fn_node] == cfg.fn_positive_state;
            let detect = if suppressed {
                None
            } else if let Some(noise) = &noise {
                let dx: f64 = noise.sample(&mut rng);
                let dy: f64 = noise.sample(&mut rng);
                Some((x + dx, y + dy))
            } else {
                Some((x, y))
            };
            instances.push(SampledInstance {
                values,
                x,
                y,
                detect,
            });
        }
        scenes.push(SampledScene {
            scene_id: format!("s{scene_index:05}"),
            scene_states,
            instances,
        });
    }
    Ok(scenes)
}

/// Names the columns written to ground-truth records: everything sampled,
/// minus hidden nodes, minus the miss label when it is left to geometry.
fn emitted_columns(cfg: &GeneratorConfig) -> Vec<String> {
    cfg.truth_model
        .structure
        .nodes()
        .iter()
        .map(|n| n.name.clone())
        .filter(|n| !cfg.hidden_nodes.contains(n))
        .filter(|n| !(cfg.fn_emission && *n == cfg.fn_node))
        .collect()
}

/// Generates the raw record stream of a synthetic corpus: per scene, one
/// ground-truth record per object followed by one detection record per
/// detected object. Detection records carry no attribute columns.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<RawObjectRecord>> {
    let corpus = sample_corpus(cfg)?;
    let columns = emitted_columns(cfg);
    let mut records = Vec::new();
    for scene in &corpus {
        for inst in &scene.instances {
            records.push(RawObjectRecord {
                scene_id: scene.scene_id.clone(),
                source: Source::GroundTruth,
                x: inst.x,
                y: inst.y,
                attributes: columns
                    .iter()
                    .map(|c| (c.clone(), inst.values[c].clone()))
                    .collect(),
            });
        }
        for inst in &scene.instances {
            if let Some((dx, dy)) = inst.detect {
                records.push(RawObjectRecord {
                    scene_id: scene.scene_id.clone(),
                    source: Source::Detection,
                    x: dx,
                    y: dy,
                    attributes: BTreeMap::new(),
                });
            }
        }
    }
    Ok(records)
}

/// Writes the true per-scene states of one hidden scene-level node as an
/// annotation file, standing in for the expert who would normally supply
/// them. The node must be hidden and scene-level.
pub fn truth_sidecar(cfg: &GeneratorConfig, node: &str) -> Result<AnnotationFile> {
    if !cfg.hidden_nodes.iter().any(|h| h == node) {
        return Err(Error::InvalidConfig {
            reason: format!("sidecar node '{node}' is not hidden"),
        });
    }
    if !cfg.scene_level_nodes.iter().any(|s| s == node) {
        return Err(Error::InvalidConfig {
            reason: format!("sidecar node '{node}' is not scene-level"),
        });
    }
    let corpus = sample_corpus(cfg)?;
    let spec = cfg
        .truth_model
        .structure
        .node(node)
        .ok_or_else(|| Error::UnknownNode { name: node.into() })?;
    Ok(AnnotationFile {
        node: AnnotationNode {
            name: spec.name.clone(),
            states: spec.states.clone(),
            default_state: None,
        },
        scenes: corpus
            .iter()
            .map(|scene| SceneAnnotation {
                scene_id: scene.scene_id.clone(),
                n_instances: scene.instances.len(),
                verdict: String::new(),
                state: scene.scene_states[node].clone(),
                instance_states: Vec::new(),
                instances: Vec::new(),
            })
            .collect(),
    })
}

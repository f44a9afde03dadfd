//! Scene annotation files: the editable record an expert fills in after
//! reviewing flagged scenes, and the merge that turns those records into a
//! new attribute column.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bn::NodeSpec;
use crate::dataset::{Dataset, ObjectInstance, SceneRecord};
use crate::error::{Error, Result};

/// Reviewer verdict marking a flagged scene as plain chance.
pub const VERDICT_RANDOM: &str = "random_occurrence";
/// Reviewer verdict marking a flagged scene as showing a real trigger.
pub const VERDICT_TRIGGER: &str = "triggering_condition";

/// The variable an annotation file introduces: name, states, and optionally
/// the state assumed for scenes the reviewer left blank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AnnotationNode {
    pub name: String,
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_state: Option<String>,
}

/// One scene's entry: identification, a short instance summary, and the
/// fields the reviewer fills in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub n_instances: usize,
    /// Empty, or one of [`VERDICT_RANDOM`] / [`VERDICT_TRIGGER`].
    #[serde(default)]
    pub verdict: String,
    /// Scene-level state of the new variable; empty means unannotated.
    #[serde(default)]
    pub state: String,
    /// Optional per-instance override; when present it must list one state
    /// per instance and takes precedence over `state`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instance_states: Vec<String>,
    /// Read-only compact rendering of each instance's attributes, written at
    /// export time to give the reviewer context.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<String>,
}

/// An annotation document: one new variable and one entry per scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub node: AnnotationNode,
    #[serde(default)]
    pub scenes: Vec<SceneAnnotation>,
}

impl AnnotationFile {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse {
            reason: format!("annotation file serialization failed: {e}"),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

fn summarize(instance: &ObjectInstance) -> String {
    instance
        .attributes
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds an annotation skeleton for the given scenes (typically the flagged
/// ones): node fields left blank for the reviewer, one entry per scene with
/// its instances summarized. Scene ids must exist in the dataset.
pub fn export_annotations(data: &Dataset, scene_ids: &[String]) -> Result<AnnotationFile> {
    let mut scenes = Vec::with_capacity(scene_ids.len());
    for scene_id in scene_ids {
        let scene = data.scene(scene_id).ok_or_else(|| Error::UnknownScene {
            scene_id: scene_id.clone(),
        })?;
        scenes.push(SceneAnnotation {
            scene_id: scene_id.clone(),
            n_instances: scene.instances.len(),
            verdict: String::new(),
            state: String::new(),
            instance_states: Vec::new(),
            instances: scene.instances.iter().map(summarize).collect(),
        });
    }
    Ok(AnnotationFile {
        node: AnnotationNode::default(),
        scenes,
    })
}

/// Merges an annotation file into a dataset as a new attribute column.
///
/// Every instance of every scene receives a value: the scene's per-instance
/// states when given, else the scene's state, else the declared default. A
/// scene left without any of the three is an error, as are unknown scene
/// ids, undeclared state values, or a column that already exists.
pub fn import_annotations(data: &Dataset, annotation: &AnnotationFile) -> Result<Dataset> {
    // Validating through NodeSpec keeps the state-list rules identical to
    // the network's own.
    let spec = NodeSpec::new(annotation.node.name.clone(), annotation.node.states.clone())?;
    let node = &spec.name;
    if let Some(default) = &annotation.node.default_state {
        if spec.state_index(default).is_none() {
            return Err(Error::InvalidConfig {
                reason: format!("default_state '{default}' is not a declared state of '{node}'"),
            });
        }
    }
    for instance in data.instances() {
        if instance.attributes.contains_key(node) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "attribute '{node}' already exists on scene '{}'",
                    instance.scene_id
                ),
            });
        }
    }
    let mut by_scene = std::collections::BTreeMap::new();
    for entry in &annotation.scenes {
        if data.scene(&entry.scene_id).is_none() {
            return Err(Error::UnknownScene {
                scene_id: entry.scene_id.clone(),
            });
        }
        if !entry.verdict.is_empty()
            && entry.verdict != VERDICT_RANDOM
            && entry.verdict != VERDICT_TRIGGER
        {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "scene '{}' has unknown verdict '{}'",
                    entry.scene_id, entry.verdict
                ),
            });
        }
        if by_scene.insert(entry.scene_id.as_str(), entry).is_some() {
            return Err(Error::InvalidConfig {
                reason: format!("scene '{}' is annotated twice", entry.scene_id),
            });
        }
    }

    let mut scenes = Vec::with_capacity(data.scenes.len());
    for scene in &data.scenes {
        let entry = by_scene.get(scene.scene_id.as_str());
        let per_instance: Option<&Vec<String>> = entry
            .map(|e| &e.instance_states)
            .filter(|v| !v.is_empty());
        if let Some(states) = per_instance {
            if states.len() != scene.instances.len() {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "scene '{}' lists {} instance states for {} instances",
                        scene.scene_id,
                        states.len(),
                        scene.instances.len()
                    ),
                });
            }
        }
        let scene_state: Option<&str> = entry
            .map(|e| e.state.as_str())
            .filter(|s| !s.is_empty())
            .or(annotation.node.default_state.as_deref());
        let mut instances = Vec::with_capacity(scene.instances.len());
        for (i, instance) in scene.instances.iter().enumerate() {
            let value = match per_instance {
                Some(states) => states[i].as_str(),
                None => scene_state.ok_or_else(|| Error::IncompleteAnnotation {
                    node: node.clone(),
                    scene_id: scene.scene_id.clone(),
                })?,
            };
            if spec.state_index(value).is_none() {
                return Err(Error::UnknownStateLabel {
                    scene_id: scene.scene_id.clone(),
                    node: node.clone(),
                    value: value.to_string(),
                });
            }
            let mut attributes = instance.attributes.clone();
            attributes.insert(node.clone(), value.to_string());
            instances.push(ObjectInstance {
                scene_id: instance.scene_id.clone(),
                attributes,
            });
        }
        scenes.push(SceneRecord {
            scene_id: scene.scene_id.clone(),
            instances,
        });
    }
    Ok(Dataset { scenes })
}

#[cfg(test)]
mod tests {
    use super::*;
    

    fn instance(scene: &str, attrs: &[(&str, &str)]) -> ObjectInstance {
        ObjectInstance {
            scene_id: scene.into(),
            attributes: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn sample_data() -> Dataset {
        Dataset::from_instances(vec![
            instance("s0", &[("FN", "Yes")]),
            instance("s0", &[("FN", "No")]),
            instance("s1", &[("FN", "No")]),
        ])
    }

    fn annotation(default: Option<&str>, entries: &[(&str, &str)]) -> AnnotationFile {
        AnnotationFile {
            node: AnnotationNode {
                name: "T".into(),
                states: vec!["off".into(), "on".into()],
                default_state: default.map(str::to_string),
            },
            scenes: entries
                .iter()
                .map(|(id, state)| SceneAnnotation {
                    scene_id: id.to_string(),
                    n_instances: 0,
                    verdict: String::new(),
                    state: state.to_string(),
                    instance_states: Vec::new(),
                    instances: Vec::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn export_builds_skeleton_with_summaries() {
        let data = sample_data();
        let file = export_annotations(&data, &["s0".into()]).unwrap();
        assert_eq!(file.scenes.len(), 1);
        assert_eq!(file.scenes[0].n_instances, 2);
        assert_eq!(file.scenes[0].instances, vec!["FN=Yes", "FN=No"]);
        assert!(file.node.name.is_empty());
        assert!(file.scenes[0].verdict.is_empty());
    }

    #[test]
    fn export_rejects_unknown_scene() {
        assert!(matches!(
            export_annotations(&sample_data(), &["nope".into()]),
            Err(Error::UnknownScene { .. })
        ));
    }

    #[test]
    fn import_merges_column_into_every_instance() {
        let data = sample_data();
        let merged =
            import_annotations(&data, &annotation(Some("off"), &[("s0", "on")])).unwrap();
        let values: Vec<&str> = merged
            .instances()
            .map(|i| i.attributes["T"].as_str())
            .collect();
        assert_eq!(values, vec!["on", "on", "off"]);
        // Existing attributes survive untouched.
        assert_eq!(merged.scenes[0].instances[0].attributes["FN"], "Yes");
    }

    #[test]
    fn import_without_default_requires_full_coverage() {
        let data = sample_data();
        let err =
            import_annotations(&data, &annotation(None, &[("s0", "on")])).unwrap_err();
        match err {
            Error::IncompleteAnnotation { scene_id, .. } => assert_eq!(scene_id, "s1"),
            other => panic!("expected IncompleteAnnotation, got {other:?}"),
        }
    }

    #[test]
    fn import_rejects_unknown_scene_and_state() {
        let data = sample_data();
        assert!(matches!(
            import_annotations(&data, &annotation(Some("off"), &[("zz", "on")])),
            Err(Error::UnknownScene { .. })
        ));
        assert!(matches!(
            import_annotations(&data, &annotation(Some("off"), &[("s0", "sideways")])),
            Err(Error::UnknownStateLabel { .. })
        ));
    }

    #[test]
    fn import_rejects_existing_column() {
        let data = Dataset::from_instances(vec![instance("s0", &[("T", "on")])]);
        assert!(matches!(
            import_annotations(&data, &annotation(Some("off"), &[])),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn per_instance_states_take_precedence() {
        let data = sample_data();
        let mut file = annotation(Some("off"), &[("s0", "off")]);
        file.scenes[0].instance_states = vec!["on".into(), "off".into()];
        let merged = import_annotations(&data, &file).unwrap();
        assert_eq!(merged.scenes[0].instances[0].attributes["T"], "on");
        assert_eq!(merged.scenes[0].instances[1].attributes["T"], "off");
        // Wrong arity is rejected.
        let mut bad = annotation(Some("off"), &[("s0", "off")]);
        bad.scenes[0].instance_states = vec!["on".into()];
        assert!(matches!(
            import_annotations(&data, &bad),
            Err(Error::InvalidConfig { .. })
        ));
    }

    #[test]
    fn toml_round_trip() {
        let data = sample_data();
        let mut file = export_annotations(&data, &["s0".into(), "s1".into()]).unwrap();
        file.node = AnnotationNode {
            name: "T".into(),
            states: vec!["off".into(), "on".into()],
            default_state: Some("off".into()),
        };
        file.scenes[0].state = "on".into();
        file.scenes[0].verdict = VERDICT_TRIGGER.into();
        let text = file.to_toml_string().unwrap();
        let reloaded = AnnotationFile::from_toml_str(&text).unwrap();
        assert_eq!(file, reloaded);
    }

    #[test]
    fn unknown_verdict_is_rejected() {
        let data = sample_data();
        let mut file = annotation(Some("off"), &[("s0", "on")]);
        file.scenes[0].verdict = "plausible".into();
        assert!(matches!(
            import_annotations(&data, &file),
            Err(Error::InvalidConfig { .. })
        ));
    }
}

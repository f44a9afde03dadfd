//! Scene-grouped object data: raw record ingestion, false-negative label
//! derivation by ground-truth/detection matching, instance tables, and the
//! scene-granular train/test split.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute name under which the derived false-negative label is stored.
pub const FN_ATTRIBUTE: &str = "FN";
/// Label given to a ground-truth object no detection was matched to.
pub const FN_YES: &str = "Yes";
/// Label given to a matched ground-truth object.
pub const FN_NO: &str = "No";

/// Origin of a raw record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    GroundTruth,
    Detection,
}

/// One row of raw input: an annotated ground-truth object or a detector
/// output, with a scene id and a position in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObjectRecord {
    pub scene_id: String,
    pub source: Source,
    pub x: f64,
    pub y: f64,
    /// Categorical annotations; empty CSV cells are simply absent here.
    pub attributes: BTreeMap<String, String>,
}

/// A fully attributed object ready for counting: scene id plus a complete
/// categorical assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub scene_id: String,
    pub attributes: BTreeMap<String, String>,
}

/// All instances of one scene, in their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: String,
    pub instances: Vec<ObjectInstance>,
}

/// An instance table grouped by scene. Scenes are kept sorted by id so that
/// iteration order never depends on input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub scenes: Vec<SceneRecord>,
}

impl Dataset {
    /// Groups instances by scene id; scenes come out sorted by id, instances
    /// keep their relative order within each scene.
    pub fn from_instances(instances: Vec<ObjectInstance>) -> Self {
        let mut by_scene: BTreeMap<String, Vec<ObjectInstance>> = BTreeMap::new();
        for instance in instances {
            by_scene
                .entry(instance.scene_id.clone())
                .or_default()
                .push(instance);
        }
        Dataset {
            scenes: by_scene
                .into_iter()
                .map(|(scene_id, instances)| SceneRecord {
                    scene_id,
                    instances,
                })
                .collect(),
        }
    }

    /// Total instance count across scenes.
    pub fn total_instances(&self) -> usize {
        self.scenes.iter().map(|s| s.instances.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Iterates instances scene by scene.
    pub fn instances(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.scenes.iter().flat_map(|s| s.instances.iter())
    }

    pub fn scene(&self, scene_id: &str) -> Option<&SceneRecord> {
        // Scenes are sorted by id, so binary search suffices.
        self.scenes
            .binary_search_by(|s| s.scene_id.as_str().cmp(scene_id))
            .ok()
            .map(|i| &self.scenes[i])
    }

    /// Sorted union of attribute names appearing on any instance.
    pub fn attribute_names(&self) -> Vec<String> {
        let mut names = BTreeSet::new();
        for instance in self.instances() {
            for key in instance.attributes.keys() {
                names.insert(key.clone());
            }
        }
        names.into_iter().collect()
    }
}

/// Raw records partitioned by source and grouped by scene; within a scene the
/// input order is preserved.
#[derive(Debug, Clone, Default)]
pub struct IngestResult {
    pub ground_truth: BTreeMap<String, Vec<RawObjectRecord>>,
    pub detections: BTreeMap<String, Vec<RawObjectRecord>>,
}

impl IngestResult {
    /// Sorted union of scene ids seen on either side.
    pub fn scene_ids(&self) -> Vec<String> {
        let mut ids: BTreeSet<String> = self.ground_truth.keys().cloned().collect();
        ids.extend(self.detections.keys().cloned());
        ids.into_iter().collect()
    }
}

/// Partitions already-parsed records by source and groups them by scene.
pub fn ingest_records(records: impl IntoIterator<Item = RawObjectRecord>) -> IngestResult {
    let mut result = IngestResult::default();
    for record in records {
        let side = match record.source {
            Source::GroundTruth => &mut result.ground_truth,
            Source::Detection => &mut result.detections,
        };
        side.entry(record.scene_id.clone()).or_default().push(record);
    }
    result
}

/// Reads the raw-record CSV schema: required columns `scene_id`, `source`,
/// `x`, `y`; every other column is a categorical attribute, with empty cells
/// meaning "not annotated".
pub fn ingest<R: Read>(reader: R) -> Result<IngestResult> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    for required in ["scene_id", "source", "x", "y"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                reason: format!("raw record file is missing required column '{required}'"),
            });
        }
    }
    let column_of = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (scene_col, source_col, x_col, y_col) = (
        column_of("scene_id"),
        column_of("source"),
        column_of("x"),
        column_of("y"),
    );
    let attr_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![scene_col, source_col, x_col, y_col].contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    for (index, row) in csv_reader.records().enumerate() {
        let row = row?;
        let field = |col: usize| row.get(col).unwrap_or("");
        let scene_id = field(scene_col).to_string();
        if scene_id.is_empty() {
            return Err(Error::MalformedRow {
                index,
                reason: "empty scene_id".into(),
            });
        }
        let source = match field(source_col) {
            "GroundTruth" => Source::GroundTruth,
            "Detection" => Source::Detection,
            other => {
                return Err(Error::MalformedRow {
                    index,
                    reason: format!("source must be GroundTruth or Detection, got '{other}'"),
                })
            }
        };
        let parse_coord = |col: usize, name: &str| -> Result<f64> {
            let text = field(col);
            let value: f64 = text.parse().map_err(|_| Error::MalformedRow {
                index,
                reason: format!("{name} is not a number: '{text}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::MalformedRow {
                    index,
                    reason: format!("{name} is not finite: '{text}'"),
                });
            }
            Ok(value)
        };
        let x = parse_coord(x_col, "x")?;
        let y = parse_coord(y_col, "y")?;
        let mut attributes = BTreeMap::new();
        for (col, name) in &attr_cols {
            let value = field(*col);
            if !value.is_empty() {
                attributes.insert(name.clone(), value.to_string());
            }
        }
        records.push(RawObjectRecord {
            scene_id,
            source,
            x,
            y,
            attributes,
        });
    }
    Ok(ingest_records(records))
}

/// Writes raw records in the schema [`ingest`] reads. Attribute columns are
/// the sorted union over all records; absent attributes become empty cells.
pub fn write_raw_records<W: Write>(records: &[RawObjectRecord], writer: W) -> Result<()> {
    let mut attr_names = BTreeSet::new();
    for record in records {
        for key in record.attributes.keys() {
            attr_names.insert(key.clone());
        }
    }
    let attr_names: Vec<String> = attr_names.into_iter().collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "scene_id".to_string(),
        "source".to_string(),
        "x".to_string(),
        "y".to_string(),
    ];
    header.extend(attr_names.iter().cloned());
    w.write_record(&header)?;
    for record in records {
        let mut row = vec![
            record.scene_id.clone(),
            match record.source {
                Source::GroundTruth => "GroundTruth".to_string(),
                Source::Detection => "Detection".to_string(),
            },
            record.x.to_string(),
            record.y.to_string(),
        ];
        for name in &attr_names {
            row.push(record.attributes.get(name).cloned().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Matching parameters for false-negative derivation.
///
/// A detection can be matched to a ground-truth object when the matching cost
/// (half the squared distance between them) is strictly below
/// `cost_threshold`. Objects outside the analysis range box
/// (`|x| < x_limit && |y| < y_limit`) are dropped before matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub cost_threshold: f64,
    pub x_limit: f64,
    pub y_limit: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            cost_threshold: 2.0,
            x_limit: 140.0,
            y_limit: 50.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("cost_threshold", self.cost_threshold),
            ("x_limit", self.x_limit),
            ("y_limit", self.y_limit),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} must be a positive finite number, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Bookkeeping from false-negative derivation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStats {
    pub gt_total: usize,
    pub gt_in_range: usize,
    pub det_total: usize,
    pub det_in_range: usize,
    pub matched: usize,
    pub false_negatives: usize,
    /// In-range detections left unmatched. Counted and reported only; they
    /// never become instances.
    pub false_positives: usize,
}

impl MatchStats {
    fn absorb(&mut self, other: MatchStats) {
        self.gt_total += other.gt_total;
        self.gt_in_range += other.gt_in_range;
        self.det_total += other.det_total;
        self.det_in_range += other.det_in_range;
        self.matched += other.matched;
        self.false_negatives += other.false_negatives;
        self.false_positives += other.false_positives;
    }
}

fn in_range(record: &RawObjectRecord, cfg: &MatchConfig) -> bool {
    record.x.abs() < cfg.x_limit && record.y.abs() < cfg.y_limit
}

fn match_cost(gt: &RawObjectRecord, det: &RawObjectRecord) -> f64 {
    let dx = gt.x - det.x;
    let dy = gt.y - det.y;
    (dx * dx + dy * dy) / 2.0
}

/// Derives false-negative labels for one scene.
///
/// In-range ground truth and detections are matched greedily, cheapest pair
/// first (ties broken by ground-truth then detection input position), one to
/// one, using only pairs whose cost is strictly below the threshold. Every
/// in-range ground-truth object becomes an instance carrying its original
/// attributes plus `FN=No` when matched and `FN=Yes` otherwise. A
/// pre-existing `FN` attribute is overwritten.
pub fn derive_fn(
    gt: &[RawObjectRecord],
    det: &[RawObjectRecord],
    cfg: &MatchConfig,
) -> (Vec<ObjectInstance>, MatchStats) {
    let gt_kept: Vec<&RawObjectRecord> = gt.iter().filter(|r| in_range(r, cfg)).collect();
    let det_kept: Vec<&RawObjectRecord> = det.iter().filter(|r| in_range(r, cfg)).collect();

    let mut pairs = Vec::new();
    for (gi, g) in gt_kept.iter().enumerate() {
        for (di, d) in det_kept.iter().enumerate() {
            let cost = match_cost(g, d);
            if cost < cfg.cost_threshold {
                pairs.push((cost, gi, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_matched = vec![false; gt_kept.len()];
    let mut det_matched = vec![false; det_kept.len()];
    let mut matched = 0;
    for (_, gi, di) in pairs {
        if !gt_matched[gi] && !det_matched[di] {
            gt_matched[gi] = true;
            det_matched[di] = true;
            matched += 1;
        }
    }

    let instances = gt_kept
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let mut attributes = g.attributes.clone();
            attributes.insert(
                FN_ATTRIBUTE.to_string(),
                if gt_matched[gi] { FN_NO } else { FN_YES }.to_string(),
            );
            ObjectInstance {
                scene_id: g.scene_id.clone(),
                attributes,
            }
        })
        .collect::<Vec<_>>();

    let stats = MatchStats {
        gt_total: gt.len(),
        gt_in_range: gt_kept.len(),
        det_total: det.len(),
        det_in_range: det_kept.len(),
        matched,
        false_negatives: gt_kept.len() - matched,
        false_positives: det_kept.len() - matched,
    };
    (instances, stats)
}

/// Runs [`derive_fn`] over every scene of an ingest result and assembles the
/// instance table. Scenes whose ground truth is entirely out of range (or
/// that only contain detections) produce no instances and are omitted.
pub fn derive_fn_dataset(ingested: &IngestResult, cfg: &MatchConfig) -> Result<(Dataset, MatchStats)> {
    cfg.validate()?;
    static EMPTY: Vec<RawObjectRecord> = Vec::new();
    let mut instances = Vec::new();
    let mut stats = MatchStats::default();
    for scene_id in ingested.scene_ids() {
        let gt = ingested.ground_truth.get(&scene_id).unwrap_or(&EMPTY);
        let det = ingested.detections.get(&scene_id).unwrap_or(&EMPTY);
        let (scene_instances, scene_stats) = derive_fn(gt, det, cfg);
        instances.extend(scene_instances);
        stats.absorb(scene_stats);
    }
    Ok((Dataset::from_instances(instances), stats))
}

/// Splits a dataset into train and test partitions at scene granularity.
///
/// Scene ids are sorted, shuffled with a seeded generator, and the first
/// `ceil(train_fraction * n)` become the train side (rounding toward train).
/// The same seed over the same scene-id set always produces the same split,
/// regardless of how the dataset was assembled.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("train_fraction must lie in (0, 1), got {train_fraction}"),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ids: Vec<&str> = data.scenes.iter().map(|s| s.scene_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((train_fraction * ids.len() as f64).ceil() as usize).min(ids.len());
    let train_ids: BTreeSet<&str> = ids[..n_train].iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for scene in &data.scenes {
        if train_ids.contains(scene.scene_id.as_str()) {
            train.push(scene.clone());
        } else {
            test.push(scene.clone());
        }
    }
    Ok((Dataset { scenes: train }, Dataset { scenes: test }))
}

/// Writes an instance table as CSV: a `scene_id` column plus one column per
/// attribute (sorted union), empty cell meaning "absent".
pub fn write_instances<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let attr_names = data.attribute_names();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scene_id".to_string()];
    header.extend(attr_names.iter().cloned());
    w.write_record(&header)?;
    for instance in data.instances() {
        let mut row = vec![instance.scene_id.clone()];
        for name in &attr_names {
            row.push(instance.attributes.get(name).cloned().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(Error::Io)?;
    Ok(())
}

/// Reads an instance table written by [`write_instances`].
pub fn read_instances<R: Read>(reader: R) -> Result<Dataset> {
    let mut csv_reader = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let scene_col = headers
        .iter()
        .position(|h| h == "scene_id")
        .ok_or_else(|| Error::Parse {
            reason: "instance table is missing the 'scene_id' column".into(),
        })?;
    let attr_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != scene_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut instances = Vec::new();
    for (index, row) in csv_reader.records().enumerate() {
        let row = row?;
        let scene_id = row.get(scene_col).unwrap_or("").to_string();
        if scene_id.is_empty() {
            return Err(Error::MalformedRow {
                index,
                reason: "empty scene_id".into(),
            });
        }
        let mut attributes = BTreeMap::new();
        for (col, name) in &attr_cols {
            let value = row.get(*col).unwrap_or("");
            if !value.is_empty() {
                attributes.insert(name.clone(), value.to_string());
            }
        }
        instances.push(ObjectInstance {
            scene_id,
            attributes,
        });
    }
    Ok(Dataset::from_instances(instances))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(scene: &str, x: f64, y: f64, attrs: &[(&str, &str)]) -> RawObjectRecord {
        RawObjectRecord {
            scene_id: scene.into(),
            source: Source::GroundTruth,
            x,
            y,
            attributes: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn det(scene: &str, x: f64, y: f64) -> RawObjectRecord {
        RawObjectRecord {
            scene_id: scene.into(),
            source: Source::Detection,
            x,
            y,
            attributes: BTreeMap::new(),
        }
    }

    #[test]
    fn near_detection_matches_and_far_gt_is_flagged() {
        // Two ground-truth objects, one detection near the first. The second
        // has no detection in reach and becomes FN=Yes.
        let gts = vec![gt("s0", 0.0, 0.0, &[]), gt("s0", 1.0, 0.0, &[])];
        let dets = vec![det("s0", 0.1, 0.0)];
        let (instances, stats) = derive_fn(&gts, &dets, &MatchConfig::default());
        assert_eq!(instances.len(), 2);
        assert_eq!(instances[0].attributes[FN_ATTRIBUTE], FN_NO);
        assert_eq!(instances[1].attributes[FN_ATTRIBUTE], FN_YES);
        assert_eq!(stats.matched, 1);
        assert_eq!(stats.false_negatives, 1);
        assert_eq!(stats.false_positives, 0);
    }

    #[test]
    fn out_of_range_ground_truth_is_dropped_before_matching() {
        let gts = vec![gt("s0", 150.0, 0.0, &[]), gt("s0", 10.0, 0.0, &[])];
        let dets = vec![det("s0", 10.0, 0.1)];
        let (instances, stats) = derive_fn(&gts, &dets, &MatchConfig::default());
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].attributes[FN_ATTRIBUTE], FN_NO);
        assert_eq!(stats.gt_total, 2);
        assert_eq!(stats.gt_in_range, 1);
    }

    #[test]
    fn range_filter_is_strict() {
        let cfg = MatchConfig::default();
        let boundary = gt("s0", 140.0, 0.0, &[]);
        let inside = gt("s0", 139.999, 49.999, &[]);
        assert!(!in_range(&boundary, &cfg));
        assert!(in_range(&inside, &cfg));
    }

    #[test]
    fn cost_threshold_is_strict() {
        // Distance 2.0 gives cost exactly 2.0, which is not below the
        // threshold, so the pair must not match.
        let gts = vec![gt("s0", 0.0, 0.0, &[])];
        let dets = vec![det("s0", 2.0, 0.0)];
        let (instances, stats) = derive_fn(&gts, &dets, &MatchConfig::default());
        assert_eq!(instances[0].attributes[FN_ATTRIBUTE], FN_YES);
        assert_eq!(stats.false_positives, 1);
    }

    #[test]
    fn matching_is_one_to_one_and_greedy() {
        // One detection sits between two ground-truth objects, nearer the
        // second; a second detection can still pick up the first object.
        let gts = vec![gt("s0", 0.0, 0.0, &[]), gt("s0", 1.0, 0.0, &[])];
        let dets = vec![det("s0", 0.8, 0.0), det("s0", 0.1, 0.0)];
        let (instances, stats) = derive_fn(&gts, &dets, &MatchConfig::default());
        assert_eq!(stats.matched, 2);
        assert!(instances
            .iter()
            .all(|i| i.attributes[FN_ATTRIBUTE] == FN_NO));
    }

    #[test]
    fn unmatched_detregister_as_false_positives_only() {
        let gts: Vec<RawObjectRecord> = Vec::new();
        let dets = vec![det("s0", 5.0, 5.0)];
        let (instances, stats) = derive_fn(&gts, &dets, &MatchConfig::default());
        assert!(instances.is_empty());
        assert_eq!(stats.false_positives, 1);
    }

    #[test]
    fn derived_instances_keep_attributes() {
        let gts = vec![gt("s0", 0.0, 0.0, &[("Occlusion", "partly_occluded")])];
        let (instances, _) = derive_fn(&gts, &[], &MatchConfig::default());
        assert_eq!(instances[0].attributes["Occlusion"], "partly_occluded");
        assert_eq!(instances[0].attributes[FN_ATTRIBUTE], FN_YES);
    }

    #[test]
    fn ingest_partitions_and_groups() {
        let csv_text = "\
scene_id,source,x,y,Occlusion
s1,GroundTruth,1.0,2.0,partly_occluded
s0,Detection,3.0,4.0,
s0,GroundTruth,5.0,6.0,fully_visible
s1,GroundTruth,7.0,8.0,
";
        let ingested = ingest(csv_text.as_bytes()).unwrap();
        assert_eq!(ingested.scene_ids(), vec!["s0", "s1"]);
        assert_eq!(ingested.ground_truth["s1"].len(), 2);
        assert_eq!(ingested.detections["s0"].len(), 1);
        // Empty attribute cells are absent, not empty strings.
        assert!(ingested.ground_truth["s1"][1].attributes.is_empty());
        assert_eq!(
            ingested.ground_truth["s1"][0].attributes["Occlusion"],
            "partly_occluded"
        );
    }

    #[test]
    fn ingest_reports_malformed_rows_by_index() {
        let csv_text = "\
scene_id,source,x,y
s0,GroundTruth,1.0,2.0
s0,Sidecar,3.0,4.0
";
        let err = ingest(csv_text.as_bytes()).unwrap_err();
        match err {
            Error::MalformedRow { index, .. } => assert_eq!(index, 1),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
        let bad_coord = "scene_id,source,x,y\ns0,GroundTruth,abc,2.0\n";
        assert!(matches!(
            ingest(bad_coord.as_bytes()),
            Err(Error::MalformedRow { index: 0, .. })
        ));
    }

    #[test]
    fn ingest_requires_core_columns() {
        let missing = "scene_id,source,x\ns0,GroundTruth,1.0\n";
        assert!(matches!(
            ingest(missing.as_bytes()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn raw_record_round_trip() {
        let records = vec![
            gt("s0", 1.5, -2.25, &[("Occlusion", "fully_visible")]),
            det("s0", 1.625, -2.25),
        ];
        let mut buffer = Vec::new();
        write_raw_records(&records, &mut buffer).unwrap();
        let ingested = ingest(buffer.as_slice()).unwrap();
        assert_eq!(ingested.ground_truth["s0"], records[..1]);
        assert_eq!(ingested.detections["s0"], records[1..]);
    }

    #[test]
    fn instance_table_round_trip() {
        let data = Dataset::from_instances(vec![
            ObjectInstance {
                scene_id: "s1".into(),
                attributes: [("FN", "No"), ("Occlusion", "fully_visible")]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            },
            ObjectInstance {
                scene_id: "s0".into(),
                attributes: [("FN", "Yes")]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
            },
        ]);
        let mut buffer = Vec::new();
        write_instances(&data, &mut buffer).unwrap();
        let reloaded = read_instances(buffer.as_slice()).unwrap();
        assert_eq!(data, reloaded);
        assert_eq!(reloaded.scenes[0].scene_id, "s0");
    }

    fn numbered_scenes(n: usize) -> Dataset {
        Dataset::from_instances(
            (0..n)
                .map(|i| ObjectInstance {
                    scene_id: format!("s{i:03}"),
                    attributes: BTreeMap::new(),
                })
                .collect(),
        )
    }

    #[test]
    fn split_partitions_scenes() {
        let data = numbered_scenes(10);
        let (train, test) = split(&data, 0.8, 7).unwrap();
        assert_eq!(train.scenes.len(), 8);
        assert_eq!(test.scenes.len(), 2);
        let train_ids: BTreeSet<_> = train.scenes.iter().map(|s| &s.scene_id).collect();
        let test_ids: BTreeSet<_> = test.scenes.iter().map(|s| &s.scene_id).collect();
        assert!(train_ids.is_disjoint(&test_ids));
        assert_eq!(train_ids.len() + test_ids.len(), 10);
    }

    #[test]
    fn split_rounds_toward_train() {
        let data = numbered_scenes(7);
        let (train, test) = split(&data, 0.8, 0).unwrap();
        assert_eq!((train.scenes.len(), test.scenes.len()), (6, 1));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let data = numbered_scenes(50);
        let (a_train, _) = split(&data, 0.5, 3).unwrap();
        let (b_train, _) = split(&data, 0.5, 3).unwrap();
        assert_eq!(a_train, b_train);
        let (c_train, _) = split(&data, 0.5, 4).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn split_ignores_scene_insertion_order() {
        let forward = numbered_scenes(20);
        let mut reversed_instances: Vec<ObjectInstance> =
            forward.instances().cloned().collect();
        reversed_instances.reverse();
        let reversed = Dataset::from_instances(reversed_instances);
        let (a_train, _) = split(&forward, 0.7, 11).unwrap();
        let (b_train, _) = split(&reversed, 0.7, 11).unwrap();
        assert_eq!(a_train, b_train);
    }

    #[test]
    fn split_rejects_empty_and_bad_fraction() {
        assert!(matches!(
            split(&Dataset::default(), 0.8, 0),
            Err(Error::EmptyDataset)
        ));
        let data = numbered_scenes(3);
        assert!(split(&data, 0.0, 0).is_err());
        assert!(split(&data, 1.0, 0).is_err());
    }
}

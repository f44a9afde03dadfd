//! Implementations of the subcommands. Each one reads its inputs, calls the
//! library, writes its artifacts, and prints a short summary; no command
//! modifies an input file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use scenesift_core::annotations::{export_annotations, AnnotationFile};
use scenesift_core::bn::{BnModel, ZeroCountPolicy};
use scenesift_core::dataset::{
    derive_fn_dataset, ingest, read_instances, split, write_instances, write_raw_records, Dataset,
    MatchConfig,
};
use scenesift_core::hypothesis::{score_scenes, AnalysisConfig, RunReport};
use scenesift_core::learning::{learn_cbts, LearnConfig};
use scenesift_core::refinement::{
    apply_refinement, confounder_workflow, validate, ConfounderReport, RefinementOp,
    ValidationConfig, ValidationReport,
};
use scenesift_core::synthgen::{generate, truth_sidecar, GeneratorConfig};
use scenesift_core::Error as CoreError;

use crate::config::{require_file, ConfigProblem, SplitManifest, SynthConfig};
use crate::render;

/// Prints a summary line, exiting quietly when the reader has gone away
/// (e.g. `scenesift report ... | head`). Every command writes its artifacts
/// before printing anything, so truncated output never loses work.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let mut out = std::io::stdout().lock();
        if writeln!(out, $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

/// [`emit!`] for pre-rendered text that already ends in a newline.
fn emit_text(text: &str) {
    use std::io::Write as _;
    if std::io::stdout().lock().write_all(text.as_bytes()).is_err() {
        std::process::exit(0);
    }
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    require_file(path)?;
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let data = read_instances(file).with_context(|| format!("reading {}", path.display()))?;
    Ok(data)
}

fn load_model(path: &Path) -> anyhow::Result<BnModel> {
    require_file(path)?;
    BnModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_refinement_op(path: &Path) -> anyhow::Result<RefinementOp> {
    require_file(path)?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let op: RefinementOp = toml::from_str(&text).map_err(|e| CoreError::Parse {
        reason: format!("refinement op {}: {e}", path.display()),
    })?;
    Ok(op)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CoreError::from)?;
    text.push('\n');
    write_text(path, &text)
}

/// Sibling path with the extension replaced, for the rendered twin of a
/// JSON artifact.
fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// `ingest`: parse and validate a raw object table, optionally writing the
/// normalized form back out.
pub fn ingest_cmd(input: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    require_file(input)?;
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let ingested = ingest(file).with_context(|| format!("reading {}", input.display()))?;
    let scenes = ingested.scene_ids();
    let gt: usize = ingested.ground_truth.values().map(Vec::len).sum();
    let det: usize = ingested.detections.values().map(Vec::len).sum();
    if let Some(out) = out {
        let mut records = Vec::with_capacity(gt + det);
        for id in &scenes {
            if let Some(rs) = ingested.ground_truth.get(id) {
                records.extend(rs.iter().cloned());
            }
            if let Some(rs) = ingested.detections.get(id) {
                records.extend(rs.iter().cloned());
            }
        }
        let mut buf = Vec::new();
        write_raw_records(&records, &mut buf).map_err(anyhow::Error::from)?;
        write_text(out, std::str::from_utf8(&buf).expect("csv output is utf-8"))?;
    }
    emit!(
        "ingested {} scene(s): {gt} ground-truth object(s), {det} detection(s)",
        scenes.len()
    );
    if let Some(out) = out {
        emit!("wrote normalized table to {}", out.display());
    }
    Ok(())
}

/// `derive-fn`: match detections to ground truth and write the instance
/// table with the derived miss label.
pub fn derive_fn_cmd(input: &Path, out: &Path, match_cfg: &MatchConfig) -> anyhow::Result<()> {
    require_file(input)?;
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let ingested = ingest(file).with_context(|| format!("reading {}", input.display()))?;
    let (data, stats) = derive_fn_dataset(&ingested, match_cfg)?;
    let mut buf = Vec::new();
    write_instances(&data, &mut buf).map_err(anyhow::Error::from)?;
    write_text(out, std::str::from_utf8(&buf).expect("csv output is utf-8"))?;
    emit!(
        "matched {} of {} in-range ground-truth object(s); {} missed, {} spurious detection(s)",
        stats.matched, stats.gt_in_range, stats.false_negatives, stats.false_positives
    );
    emit!(
        "kept {} scene(s), {} instance(s) -> {}",
        data.scenes.len(),
        data.total_instances(),
        out.display()
    );
    Ok(())
}

/// `split`: partition scenes by seed and record the partition.
pub fn split_cmd(input: &Path, fraction: f64, seed: u64, out: &Path) -> anyhow::Result<()> {
    let data = read_dataset(input)?;
    let (train, test) = split(&data, fraction, seed)?;
    let manifest = SplitManifest {
        seed,
        train_fraction: fraction,
        train_scenes: train.scenes.iter().map(|s| s.scene_id.clone()).collect(),
        test_scenes: test.scenes.iter().map(|s| s.scene_id.clone()).collect(),
    };
    manifest.save(out)?;
    emit!(
        "split {} scene(s) into {} train / {} test (fraction {fraction}, seed {seed}) -> {}",
        data.scenes.len(),
        train.scenes.len(),
        test.scenes.len(),
        out.display()
    );
    Ok(())
}

/// `learn`: count conditional tables for a structure from the training side
/// of the data and save the resulting model.
pub fn learn_cmd(
    input: &Path,
    structure: &Path,
    manifest: Option<&Path>,
    policy: Option<ZeroCountPolicy>,
    out: &Path,
) -> anyhow::Result<()> {
    let data = read_dataset(input)?;
    let base = load_model(structure)?;
    let train = match manifest {
        Some(path) => SplitManifest::load(path)?.apply(&data)?.0,
        None => data,
    };
    let cfg = LearnConfig {
        zero_count_policy: policy.unwrap_or(base.zero_count_policy),
    };
    let model = learn_cbts(&base.structure, &train, &cfg)?;
    model.save(out)?;
    emit!(
        "learned {} table(s) from {} training instance(s); model {} -> {}",
        model.cbts.len(),
        train.total_instances(),
        model.fingerprint(),
        out.display()
    );
    for (node, cbt) in &model.cbts {
        let support: u64 = cbt.rows.values().map(|r| r.support).sum();
        emit!("  {node}: {} row(s), support {support}", cbt.rows.len());
    }
    Ok(())
}

/// `test`: score the held-out scenes of a split against the learned model
/// and write the report (JSON plus rendered text).
pub fn test_cmd(
    input: &Path,
    model_path: &Path,
    manifest_path: &Path,
    alpha: f64,
    targets: &[String],
    out: &Path,
) -> anyhow::Result<()> {
    let data = read_dataset(input)?;
    let model = load_model(model_path)?;
    let manifest = SplitManifest::load(manifest_path)?;
    let (train, test) = manifest.apply(&data)?;
    let cfg = AnalysisConfig {
        alpha,
        target_nodes: targets.to_vec(),
    };
    let report = score_scenes(&model, &train, &test, &cfg, Some(manifest.seed))?;
    write_json(out, &report)?;
    let rendered = render::render_run_report(&report);
    write_text(&with_extension(out, "txt"), &rendered)?;
    emit_text(&rendered);
    emit!("wrote {} and {}", out.display(), with_extension(out, "txt").display());
    Ok(())
}

/// `export-scenes`: write the annotation skeleton for the flagged scenes of
/// a report (or for every scene with `--all`).
pub fn export_scenes_cmd(
    input: &Path,
    report: Option<&Path>,
    all: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let data = read_dataset(input)?;
    let scene_ids: Vec<String> = match (report, all) {
        (Some(report_path), false) => {
            let run = read_run_report(report_path)?;
            run.scene_reports
                .iter()
                .filter(|s| s.relevant)
                .map(|s| s.scene_id.clone())
                .collect()
        }
        (None, true) => data.scenes.iter().map(|s| s.scene_id.clone()).collect(),
        (Some(_), true) => {
            return Err(
                ConfigProblem("pass either --report or --all, not both".into()).into(),
            )
        }
        (None, false) => {
            return Err(ConfigProblem(
                "which scenes? pass --report FILE for the flagged ones or --all".into(),
            )
            .into())
        }
    };
    let file = export_annotations(&data, &scene_ids)?;
    file.save(out)?;
    emit!(
        "exported {} scene(s) for annotation -> {}",
        scene_ids.len(),
        out.display()
    );
    Ok(())
}

/// `import-annotations`: merge an annotated node back into the instance
/// table as a new column.
pub fn import_annotations_cmd(
    input: &Path,
    annotations: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let data = read_dataset(input)?;
    require_file(annotations)?;
    let file = AnnotationFile::load(annotations)
        .with_context(|| format!("reading annotations {}", annotations.display()))?;
    let enriched = scenesift_core::annotations::import_annotations(&data, &file)?;
    let mut buf = Vec::new();
    write_instances(&enriched, &mut buf).map_err(anyhow::Error::from)?;
    write_text(out, std::str::from_utf8(&buf).expect("csv output is utf-8"))?;
    emit!(
        "imported node '{}' onto {} instance(s) -> {}",
        file.node.name,
        enriched.total_instances(),
        out.display()
    );
    Ok(())
}

/// `refine`: apply a structural edit to a model file and save the edited
/// structure (tables are dropped: a changed structure must be relearned).
pub fn refine_cmd(structure: &Path, op_path: &Path, out: &Path) -> anyhow::Result<()> {
    let base = load_model(structure)?;
    let op = load_refinement_op(op_path)?;
    let refined = apply_refinement(&base.structure, &op)?;
    let model = BnModel::structure_only(refined, base.zero_count_policy);
    model.save(out)?;
    emit!(
        "applied {} -> structure {} with {} node(s), {} edge(s) -> {}",
        op_name(&op),
        model.fingerprint(),
        model.structure.nodes().len(),
        model.structure.edges().len(),
        out.display()
    );
    Ok(())
}

fn op_name(op: &RefinementOp) -> String {
    match op {
        RefinementOp::AddDirectCause { new_node, target } => {
            format!("add_direct_cause {} -> {target}", new_node.name)
        }
        RefinementOp::AddConfounder { new_node, targets } => {
            format!("add_confounder {} -> {} + {}", new_node.name, targets[0], targets[1])
        }
        RefinementOp::RemoveCause {
            target,
            removed_parent,
        } => format!("remove_cause {removed_parent} -> {target}"),
    }
}

/// Validation artifact: the report plus the knobs and structure identities
/// that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationArtifact {
    pub alpha: f64,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub before_fingerprint: String,
    pub after_fingerprint: String,
    #[serde(flatten)]
    pub report: ValidationReport,
}

/// Confounder-check artifact, mirroring [`ValidationArtifact`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfounderArtifact {
    pub alpha: f64,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub structure_fingerprint: String,
    #[serde(flatten)]
    pub report: ConfounderReport,
}

/// Options for `validate` after flag/config merging.
pub struct ValidateArgs<'a> {
    pub before: &'a Path,
    pub after: Option<&'a Path>,
    pub op: Option<&'a Path>,
    pub input: &'a Path,
    pub manifest: &'a Path,
    pub eval: Option<&'a str>,
    pub alpha: f64,
    pub train_fraction: Option<f64>,
    pub seeds: Vec<u64>,
    pub policy: Option<ZeroCountPolicy>,
    pub out: &'a Path,
}

/// `validate`: relearn and rescore the structure before and after an edit.
/// A confounder op triggers the two-sided check; everything else is a plain
/// before/after comparison at the evaluation node.
pub fn validate_cmd(args: ValidateArgs<'_>) -> anyhow::Result<()> {
    let before_model = load_model(args.before)?;
    let data = read_dataset(args.input)?;
    let manifest = SplitManifest::load(args.manifest)?;
    let (train, test) = manifest.apply(&data)?;
    let cfg = ValidationConfig {
        alpha: args.alpha,
        learn: LearnConfig {
            zero_count_policy: args.policy.unwrap_or(before_model.zero_count_policy),
        },
        train_fraction: args.train_fraction.unwrap_or(manifest.train_fraction),
        seeds: args.seeds.clone(),
    };

    let op = match (args.after, args.op) {
        (Some(_), Some(_)) => {
            return Err(
                ConfigProblem("pass either --after or --op, not both".into()).into(),
            )
        }
        (None, None) => {
            return Err(ConfigProblem(
                "pass --after MODEL or --op FILE to define the refined structure".into(),
            )
            .into())
        }
        (None, Some(op_path)) => Some(load_refinement_op(op_path)?),
        (Some(_), None) => None,
    };

    if let Some(RefinementOp::AddConfounder { new_node, targets }) = &op {
        // Two-sided check: the new variable must validate as a direct cause
        // of each target independently.
        let (child, parent) = (&targets[0], &targets[1]);
        if let Some(eval) = args.eval {
            if eval != child {
                return Err(ConfigProblem(format!(
                    "a confounder op is scored at its first target '{child}'; \
                     drop --eval or set it to '{child}'"
                ))
                .into());
            }
        }
        let report = confounder_workflow(
            &before_model.structure,
            new_node,
            child,
            parent,
            &train,
            &test,
            &cfg,
        )?;
        let artifact = ConfounderArtifact {
            alpha: cfg.alpha,
            train_fraction: cfg.train_fraction,
            seeds: cfg.seeds,
            structure_fingerprint: before_model.fingerprint(),
            report,
        };
        write_json(args.out, &artifact)?;
        let rendered = render::render_confounder(&artifact);
        write_text(&with_extension(args.out, "txt"), &rendered)?;
        emit_text(&rendered);
        return Ok(());
    }

    let after_structure = match (&op, args.after) {
        (Some(op), None) => apply_refinement(&before_model.structure, op)?,
        (None, Some(path)) => load_model(path)?.structure,
        _ => unreachable!("resolved above"),
    };
    let eval = args.eval.ok_or_else(|| {
        ConfigProblem("pass --eval NODE to choose the scored node".into())
    })?;
    let report = validate(
        &before_model.structure,
        &after_structure,
        &train,
        &test,
        &cfg,
        eval,
    )?;
    let after_fingerprint =
        BnModel::structure_only(after_structure, before_model.zero_count_policy).fingerprint();
    let artifact = ValidationArtifact {
        alpha: cfg.alpha,
        train_fraction: cfg.train_fraction,
        seeds: cfg.seeds,
        before_fingerprint: before_model.fingerprint(),
        after_fingerprint,
        report,
    };
    write_json(args.out, &artifact)?;
    let rendered = render::render_validation(&artifact);
    write_text(&with_extension(args.out, "txt"), &rendered)?;
    emit_text(&rendered);
    Ok(())
}

fn read_run_report(path: &Path) -> anyhow::Result<RunReport> {
    require_file(path)?;
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| {
        CoreError::MalformedReport {
            reason: format!("{}: {e}", path.display()),
        }
    })?;
    Ok(report)
}

/// `report`: detect which report kind a JSON file holds and render it.
pub fn report_cmd(input: &Path) -> anyhow::Result<()> {
    require_file(input)?;
    let text =
        fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CoreError::MalformedReport {
            reason: format!("{}: {e}", input.display()),
        })?;
    let malformed = |e: serde_json::Error| CoreError::MalformedReport {
        reason: format!("{}: {e}", input.display()),
    };
    let rendered = if value.get("scene_reports").is_some() {
        let report: RunReport = serde_json::from_value(value).map_err(malformed)?;
        render::render_run_report(&report)
    } else if value.get("child_report").is_some() {
        let artifact: ConfounderArtifact = serde_json::from_value(value).map_err(malformed)?;
        render::render_confounder(&artifact)
    } else if value.get("iterations").is_some() {
        let artifact: ValidationArtifact = serde_json::from_value(value).map_err(malformed)?;
        render::render_validation(&artifact)
    } else {
        return Err(CoreError::MalformedReport {
            reason: format!(
                "{}: not a scene, validation, or confounder report",
                input.display()
            ),
        }
        .into());
    };
    emit_text(&rendered);
    Ok(())
}

/// `synth`: draw a corpus from a recipe and write the raw record table,
/// plus one annotation sidecar per hidden scene-level node when requested.
pub fn synth_cmd(
    recipe: &Path,
    out: &Path,
    sidecar_dir: Option<&Path>,
) -> anyhow::Result<()> {
    let (synth, model_path) = SynthConfig::load(recipe)?;
    let truth = load_model(&model_path)?;
    let mut cfg = GeneratorConfig::new(
        truth,
        synth.scenes,
        (synth.instances_min, synth.instances_max),
        synth.seed,
    );
    cfg.scene_level_nodes = synth.scene_level_nodes.clone();
    cfg.instance_level_nodes = synth.instance_level_nodes.clone();
    cfg.hidden_nodes = synth.hidden_nodes.clone();
    cfg.fn_emission = synth.fn_emission;
    cfg.fn_node = synth.fn_node.clone();
    cfg.fn_positive_state = synth.fn_positive_state.clone();
    cfg.noise_std = synth.noise_std;
    cfg.x_limit = synth.x_limit;
    cfg.y_limit = synth.y_limit;

    let records = generate(&cfg)?;
    let mut buf = Vec::new();
    write_raw_records(&records, &mut buf).map_err(anyhow::Error::from)?;
    write_text(out, std::str::from_utf8(&buf).expect("csv output is utf-8"))?;

    let mut sidecars = Vec::new();
    if let Some(dir) = sidecar_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        for node in &cfg.hidden_nodes {
            if !cfg.scene_level_nodes.contains(node) {
                continue;
            }
            let sidecar = truth_sidecar(&cfg, node)?;
            let path = dir.join(format!("{node}.annotations.toml"));
            sidecar.save(&path)?;
            sidecars.push((node.clone(), path));
        }
    }

    emit!(
        "generated {} scene(s), {} record(s) (seed {}) -> {}",
        synth.scenes,
        records.len(),
        synth.seed,
        out.display()
    );
    for (node, path) in &sidecars {
        emit!("wrote truth sidecar for '{node}' -> {}", path.display());
    }
    Ok(())
}

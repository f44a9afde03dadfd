//! `scenesift` — drives the rare-scene screening pipeline from the shell:
//! synthesize or ingest scene data, derive miss labels from detector
//! geometry, split scenes, learn a network, flag statistically rare scenes,
//! and vet structural refinements, one artifact per stage.
//!
//! Exit codes: 0 success; 2 bad flags, config, or missing input files;
//! 3 malformed or inconsistent data; 4 internal failures.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenesift_core::bn::ZeroCountPolicy;
use scenesift_core::Error as CoreError;

use crate::config::{ConfigProblem, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "scenesift",
    version,
    about = "Screens scene collections for statistically rare object configurations"
)]
struct Cli {
    /// TOML file with defaults for tuning flags (alpha, fraction, seeds,
    /// matching limits, common paths); explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

fn parse_policy(s: &str) -> Result<ZeroCountPolicy, String> {
    match s {
        "uniform" => Ok(ZeroCountPolicy::Uniform),
        "strict" => Ok(ZeroCountPolicy::Strict),
        other => Err(format!("unknown policy '{other}' (expected 'uniform' or 'strict')")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a raw object table, optionally normalizing it.
    Ingest {
        /// Raw record CSV (scene_id, source, x, y, attribute columns).
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Where to write the normalized table.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Label each ground-truth object as detected or missed by geometric
    /// matching, producing the instance table.
    DeriveFn {
        /// Raw record CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Instance-table destination.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Maximum matching cost (half squared distance, m^2).
        #[arg(long, value_name = "COST")]
        cost_threshold: Option<f64>,
        /// Keep objects with |x| strictly below this bound (m).
        #[arg(long, value_name = "M")]
        x_limit: Option<f64>,
        /// Keep objects with |y| strictly below this bound (m).
        #[arg(long, value_name = "M")]
        y_limit: Option<f64>,
    },
    /// Partition scenes into train and test sets and record the partition.
    Split {
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Fraction of scenes assigned to training, in (0, 1).
        #[arg(long, value_name = "F")]
        fraction: Option<f64>,
        /// Shuffle seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Split-manifest destination (JSON).
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Learn conditional tables for a structure by counting the training
    /// instances.
    Learn {
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Model file providing the structure (tables are relearned).
        #[arg(long, value_name = "MODEL")]
        structure: Option<PathBuf>,
        /// Split manifest; when given, only its training side is counted.
        #[arg(long, value_name = "JSON")]
        split: Option<PathBuf>,
        /// Fallback for unobserved parent configurations.
        #[arg(long, value_name = "POLICY", value_parser = parse_policy)]
        zero_count_policy: Option<ZeroCountPolicy>,
        /// Learned-model destination.
        #[arg(long, value_name = "MODEL")]
        out: PathBuf,
    },
    /// Score the held-out scenes of a split and flag the rare ones.
    Test {
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Learned model file.
        #[arg(long, value_name = "MODEL")]
        model: Option<PathBuf>,
        /// Split manifest naming the train and test scenes.
        #[arg(long, value_name = "JSON")]
        split: PathBuf,
        /// Significance level in (0, 1).
        #[arg(long, value_name = "A")]
        alpha: Option<f64>,
        /// Nodes whose realized probabilities are scored.
        #[arg(long, value_name = "NODES", value_delimiter = ',', required = true)]
        targets: Vec<String>,
        /// Report destination (JSON; a rendered .txt twin is written too).
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Write the annotation skeleton for flagged scenes (or all scenes).
    ExportScenes {
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Scene report; its flagged scenes are exported.
        #[arg(long, value_name = "JSON")]
        report: Option<PathBuf>,
        /// Export every scene instead.
        #[arg(long)]
        all: bool,
        /// Annotation-file destination (TOML).
        #[arg(long, value_name = "TOML")]
        out: PathBuf,
    },
    /// Merge an annotated node back into the instance table as a column.
    ImportAnnotations {
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Completed annotation file for one node.
        #[arg(long, value_name = "TOML")]
        annotations: PathBuf,
        /// Merged instance-table destination.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Apply a structural edit to a model file.
    Refine {
        /// Model file with the current structure.
        #[arg(long, value_name = "MODEL")]
        structure: Option<PathBuf>,
        /// Edit declaration (TOML).
        #[arg(long, value_name = "TOML")]
        op: PathBuf,
        /// Edited structure destination (tables are dropped; relearn).
        #[arg(long, value_name = "MODEL")]
        out: PathBuf,
    },
    /// Judge a structural edit by whether it shrinks the flagged-scene
    /// count; a confounder op runs the two-sided check.
    Validate {
        /// Model file with the current structure.
        #[arg(long, value_name = "MODEL")]
        before: Option<PathBuf>,
        /// Refined model file (alternative to --op).
        #[arg(long, value_name = "MODEL")]
        after: Option<PathBuf>,
        /// Edit declaration applied to --before (alternative to --after).
        #[arg(long, value_name = "TOML")]
        op: Option<PathBuf>,
        /// Instance table CSV.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        /// Split manifest naming the train and test scenes.
        #[arg(long, value_name = "JSON")]
        split: PathBuf,
        /// Node scored before and after the edit.
        #[arg(long, value_name = "NODE")]
        eval: Option<String>,
        /// Significance level in (0, 1).
        #[arg(long, value_name = "A")]
        alpha: Option<f64>,
        /// Train fraction for reshuffled iterations (defaults to the
        /// manifest's fraction).
        #[arg(long, value_name = "F")]
        fraction: Option<f64>,
        /// Reshuffle seeds, one iteration each; without any, the manifest's
        /// partition is used for a single iteration.
        #[arg(long, value_name = "N,N,...", value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Fallback for unobserved parent configurations.
        #[arg(long, value_name = "POLICY", value_parser = parse_policy)]
        zero_count_policy: Option<ZeroCountPolicy>,
        /// Verdict destination (JSON; a rendered .txt twin is written too).
        #[arg(long, value_name = "JSON")]
        out: PathBuf,
    },
    /// Render a report file (scene, validation, or confounder) as text.
    Report {
        /// Report JSON produced by test or validate.
        #[arg(long, value_name = "JSON")]
        input: PathBuf,
    },
    /// Draw a synthetic corpus from a recipe file.
    Synth {
        /// Corpus recipe (TOML with the truth model path, node roles,
        /// scene counts, and seed).
        #[arg(long, value_name = "TOML")]
        recipe: PathBuf,
        /// Raw-record destination (CSV).
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Also write one truth annotation file per hidden scene-level
        /// node into this directory.
        #[arg(long, value_name = "DIR")]
        sidecar_dir: Option<PathBuf>,
    },
}

fn resolve_input(
    flag: Option<PathBuf>,
    cfg: &PipelineConfig,
    what: &str,
) -> anyhow::Result<PathBuf> {
    flag.or_else(|| cfg.input.clone()).ok_or_else(|| {
        ConfigProblem(format!("no {what}: pass --input FILE or set `input` in the config")).into()
    })
}

fn resolve_model(
    flag: Option<PathBuf>,
    cfg: &PipelineConfig,
    flag_name: &str,
) -> anyhow::Result<PathBuf> {
    flag.or_else(|| cfg.model.clone()).ok_or_else(|| {
        ConfigProblem(format!(
            "no model file: pass --{flag_name} FILE or set `model` in the config"
        ))
        .into()
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { input, out } => {
            let input = resolve_input(input, &cfg, "raw table")?;
            commands::ingest_cmd(&input, out.as_deref())
        }
        Command::DeriveFn {
            input,
            out,
            cost_threshold,
            x_limit,
            y_limit,
        } => {
            let input = resolve_input(input, &cfg, "raw table")?;
            let match_cfg = cfg.match_config(cost_threshold, x_limit, y_limit);
            commands::derive_fn_cmd(&input, &out, &match_cfg)
        }
        Command::Split {
            input,
            fraction,
            seed,
            out,
        } => {
            let input = resolve_input(input, &cfg, "instance table")?;
            let fraction = fraction.or(cfg.train_fraction).unwrap_or(0.8);
            let seed = seed.or(cfg.seed).unwrap_or(0);
            commands::split_cmd(&input, fraction, seed, &out)
        }
        Command::Learn {
            input,
            structure,
            split,
            zero_count_policy,
            out,
        } => {
            let input = resolve_input(input, &cfg, "instance table")?;
            let structure = resolve_model(structure, &cfg, "structure")?;
            let policy = zero_count_policy.or(cfg.zero_count_policy);
            commands::learn_cmd(&input, &structure, split.as_deref(), policy, &out)
        }
        Command::Test {
            input,
            model,
            split,
            alpha,
            targets,
            out,
        } => {
            let input = resolve_input(input, &cfg, "instance table")?;
            let model = resolve_model(model, &cfg, "model")?;
            let alpha = alpha.or(cfg.alpha).unwrap_or(0.05);
            commands::test_cmd(&input, &model, &split, alpha, &targets, &out)
        }
        Command::ExportScenes {
            input,
            report,
            all,
            out,
        } => {
            let input = resolve_input(input, &cfg, "instance table")?;
            commands::export_scenes_cmd(&input, report.as_deref(), all, &out)
        }
        Command::ImportAnnotations {
            input,
            annotations,
            out,
        } => {
            let input = resolve_input(input, &cfg, "instance table")?;
            commands::import_annotations_cmd(&input, &annotations, &out)
        }
        Command::Refine { structure, op, out } => {
            let structure = resolve_model(structure, &cfg, "structure")?;
            commands::refine_cmd(&structure, &op, &out)
        }
        Command::Validate {
            before,
            after,
            op,
            input,
            split,
            eval,
            alpha,
            fraction,
            seeds,
            zero_count_policy,
            out,
        } => {
            let before = resolve_model(before, &cfg, "before")?;
            let input = resolve_input(input, &cfg, "instance table")?;
            commands::validate_cmd(commands::ValidateArgs {
                before: &before,
                after: after.as_deref(),
                op: op.as_deref(),
                input: &input,
                manifest: &split,
                eval: eval.as_deref(),
                alpha: alpha.or(cfg.alpha).unwrap_or(0.05),
                train_fraction: fraction.or(cfg.train_fraction),
                seeds: seeds.or_else(|| cfg.seeds.clone()).unwrap_or_default(),
                policy: zero_count_policy.or(cfg.zero_count_policy),
                out: &out,
            })
        }
        Command::Report { input } => commands::report_cmd(&input),
        Command::Synth {
            recipe,
            out,
            sidecar_dir,
        } => commands::synth_cmd(&recipe, &out, sidecar_dir.as_deref()),
    }
}

/// Maps an error chain to the documented exit classes: flag/config/path
/// problems are 2, data problems are 3, anything else is 4.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigProblem>().is_some() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<CoreError>() {
            return match core {
                CoreError::InvalidConfig { .. } => 2,
                CoreError::Io(_) => 4,
                _ => 3,
            };
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

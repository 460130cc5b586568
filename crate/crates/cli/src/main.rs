//! `chemberta`: the pretraining and benchmarking pipeline as subcommands.
//!
//! Every command writes its outputs atomically and leaves a run manifest
//! (inputs, seed, effective config, SHA-256 of every file) next to them.
//! Usage errors exit with status 2, pipeline errors with status 1.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use chemberta_core::baseline::{train_baseline, BaselineConfig};
use chemberta_core::datapipe::{curate, load_task_csv, scaffold_split, subset, Corpus, DedupMode, SplitIndices, TaskDataset};
use chemberta_core::introspect::{bracket_diagnostic, export_attention, heatmap_svg, HeadSelector};
use chemberta_core::model::{read_checkpoint, write_checkpoint, Checkpoint, Model, ModelConfig};
use chemberta_core::selfies::corpus_to_selfies;
use chemberta_core::synth::{generate_corpus, synthetic_task, SyntheticTask};
use chemberta_core::tokenize::{BpeTrainer, Tokenizer};
use chemberta_core::trainer::{
    delta_band, finetune, pretrain, scaling_experiment, FinetuneConfig, PretrainConfig, RunLog, ScalingConfig,
    ScalingReport, REFERENCE_DELTA_PRC_AUC, REFERENCE_DELTA_ROC_AUC,
};

use manifest::{beside, Run};

#[derive(Parser)]
#[command(name = "chemberta", version, about = "Chemical language model pretraining and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dedup {
    Exact,
    Canonical,
}

#[derive(Clone, Copy, ValueEnum)]
enum TokenizerKind {
    Regex,
    Bpe,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKind {
    ContainsNitrogen,
    CarboxylicAcid,
}

#[derive(Subcommand)]
enum Command {
    /// Trim, deduplicate and shuffle a molecule corpus.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "exact")]
        dedup: Dedup,
    },
    /// Write nested prefix subsets of a corpus.
    Subset {
        #[arg(long)]
        input: PathBuf,
        /// Ascending subset sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Scaffold split of a labelled CSV into train/valid/test indices.
    Split {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        label: String,
        /// Train, valid and test fractions.
        #[arg(long, value_parser = parse_fracs, default_value = "0.8,0.1,0.1")]
        fracs: [f64; 3],
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a regex or byte-pair tokenizer on a corpus.
    TrainTokenizer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "bpe")]
        kind: TokenizerKind,
        #[arg(long, default_value_t = 1000)]
        vocab_size: usize,
        /// Byte-pair merges need at least this many occurrences.
        #[arg(long, default_value_t = 1)]
        min_frequency: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert SMILES lines to SELFIES, reporting lines that fail.
    ToSelfies {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked-language-model pretraining.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// JSON with optional "model" and "pretrain" sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Keep per-epoch wall time in the log (breaks byte-identical reruns).
        #[arg(long)]
        record_time: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Classification finetuning with early stopping on validation ROC-AUC.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the tokenizer stored in the checkpoint.
        #[arg(long)]
        tokenizer: Option<PathBuf>,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        record_time: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fingerprint logistic-regression baseline.
    Baseline {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain on nested corpus prefixes and finetune each on one task.
    Scaling {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize per-task scaling runs as mean delta with a ±1 SD band.
    ScalingReport {
        #[arg(long = "reports", num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export attention matrices for one molecule string.
    AttentionExport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokenizer: Option<PathBuf>,
        #[arg(long)]
        input: String,
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        heads: Option<Vec<usize>>,
        /// Directory for one SVG heatmap per exported head.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic SMILES corpus.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a balanced labelled task as CSV.
    SynthTask {
        #[arg(long, value_enum)]
        kind: TaskKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-hash the files named in a run manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn parse_fracs(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected three fractions, got {}", p.len()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn lines(text: &str) -> Vec<String> {
    text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect()
}

fn load_config<T: DeserializeOwned + Default>(run: &mut Run, path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = run.read_text(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_task(run: &mut Run, path: &Path, label: &str) -> Result<TaskDataset> {
    let bytes = run.read(path)?;
    let (task, dropped) = load_task_csv(bytes.as_slice(), label)?;
    if !dropped.is_empty() {
        eprintln!("{}: dropped {} rows", path.display(), dropped.len());
        run.note("dropped_rows", dropped.iter().map(|d| d.row).collect::<Vec<_>>());
    }
    Ok(task)
}

fn load_split(run: &mut Run, path: &Path, n: usize) -> Result<SplitIndices> {
    Ok(SplitIndices::from_json(&run.read_text(path)?, n)?)
}

fn checkpoint_bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(ck, &mut out).expect("writing to memory");
    out
}

fn log_text(log: &RunLog, record_time: bool) -> String {
    if record_time {
        log.to_jsonl()
    } else {
        log.without_timing().to_jsonl()
    }
}

fn tokenizer_for(run: &mut Run, flag: Option<&Path>, ck: &Checkpoint) -> Result<Tokenizer> {
    match (flag, &ck.tokenizer) {
        (Some(p), _) => Ok(Tokenizer::from_json(&run.read_text(p)?)?),
        (None, Some(t)) => Ok(t.clone()),
        (None, None) => bail!("checkpoint carries no tokenizer; pass --tokenizer"),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PretrainFile {
    model: Option<ModelConfig>,
    pretrain: PretrainConfig,
}

#[derive(Serialize)]
struct Band {
    mean: f64,
    sd: Option<f64>,
}

#[derive(Serialize)]
struct BandRow {
    subset_size: usize,
    n_tasks: usize,
    delta_roc_auc: Band,
    delta_prc_auc: Band,
}

#[derive(Serialize)]
struct ScalingSummary {
    band: &'static str,
    reference_delta_roc_auc: f64,
    reference_delta_prc_auc: f64,
    reference_note: &'static str,
    tasks: Vec<String>,
    base_subset_size: usize,
    rows: Vec<BandRow>,
}

const BAND_DEFINITION: &str = "mean over tasks of the change against the smallest subset, \
     +/- 1 sample standard deviation (n-1 denominator), roughly a 68% interval";

fn summarize(reports: &[ScalingReport]) -> Result<ScalingSummary> {
    let sizes: Vec<usize> = reports[0].rows.iter().map(|r| r.subset_size).collect();
    for r in reports {
        if r.rows.iter().map(|r| r.subset_size).ne(sizes.iter().copied()) {
            bail!("report for {} uses a different subset ladder", r.task);
        }
    }
    if sizes.len() < 2 {
        bail!("reports need at least two subsets");
    }
    let mut rows = Vec::new();
    for (i, &size) in sizes.iter().enumerate().skip(1) {
        let pick = |f: fn(&chemberta_core::trainer::ScalingRow) -> Option<f64>| -> Result<Band> {
            let deltas: Vec<f64> = reports
                .iter()
                .map(|r| f(&r.rows[i]).context("row without delta"))
                .collect::<Result<_>>()?;
            let (mean, sd) = delta_band(&deltas).expect("at least one report");
            Ok(Band { mean, sd })
        };
        rows.push(BandRow {
            subset_size: size,
            n_tasks: reports.len(),
            delta_roc_auc: pick(|r| r.delta_roc_auc)?,
            delta_prc_auc: pick(|r| r.delta_prc_auc)?,
        });
    }
    Ok(ScalingSummary {
        band: BAND_DEFINITION,
        reference_delta_roc_auc: REFERENCE_DELTA_ROC_AUC,
        reference_delta_prc_auc: REFERENCE_DELTA_PRC_AUC,
        reference_note: "100K to 10M compound pretraining, averaged over tasks; context only",
        tasks: reports.iter().map(|r| r.task.clone()).collect(),
        base_subset_size: sizes[0],
        rows,
    })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Curate { input, out, seed, dedup } => {
            let mut run = Run::new("curate", Some(seed));
            let text = run.read_text(&input)?;
            let mode = match dedup {
                Dedup::Exact => DedupMode::Exact,
                Dedup::Canonical => DedupMode::CanonicalKey,
            };
            let (corpus, report) = curate(text.lines(), mode, seed);
            run.config(&serde_json::json!({ "dedup": format!("{mode:?}") }));
            run.note("input_lines", report.input_lines);
            run.note("empty_dropped", report.empty_dropped);
            run.note("duplicates_dropped", report.duplicates_dropped);
            run.write(&out, corpus.to_text().as_bytes())?;
            eprintln!(
                "kept {} of {} lines ({} empty, {} duplicates)",
                corpus.len(),
                report.input_lines,
                report.empty_dropped,
                report.duplicates_dropped
            );
            run.finish(beside(&out))?;
        }
        Command::Subset { input, sizes, out } => {
            let mut run = Run::new("subset", None);
            let corpus = Corpus {
                lines: lines(&run.read_text(&input)?),
            };
            run.config(&serde_json::json!({ "sizes": sizes }));
            for (size, part) in sizes.iter().zip(subset(&corpus, &sizes)?) {
                run.write(&out.join(format!("subset_{size}.txt")), part.to_text().as_bytes())?;
            }
            run.finish(out.join("manifest.json"))?;
        }
        Command::Split { task, label, fracs, out } => {
            let mut run = Run::new("split", None);
            let data = load_task(&mut run, &task, &label)?;
            run.config(&serde_json::json!({ "label": label, "fracs": fracs }));
            let split = scaffold_split(&data, fracs)?;
            run.note("sizes", [split.train.len(), split.valid.len(), split.test.len()]);
            run.write(&out, split.to_json().as_bytes())?;
            println!("train {} valid {} test {}", split.train.len(), split.valid.len(), split.test.len());
            run.finish(beside(&out))?;
        }
        Command::TrainTokenizer {
            input,
            kind,
            vocab_size,
            min_frequency,
            out,
        } => {
            let mut run = Run::new("train-tokenizer", None);
            let corpus = lines(&run.read_text(&input)?);
            let tok = match kind {
                TokenizerKind::Regex => Tokenizer::train_regex(&corpus, vocab_size)?,
                TokenizerKind::Bpe => Tokenizer::train_bpe(
                    &corpus,
                    &BpeTrainer {
                        vocab_size,
                        min_frequency,
                    },
                )?,
            };
            run.config(&serde_json::json!({
                "kind": tok.kind(),
                "vocab_size": vocab_size,
                "min_frequency": min_frequency,
            }));
            run.note("vocab_len", tok.vocab().len());
            run.write(&out, tok.to_json().as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::ToSelfies { input, out } => {
            let mut run = Run::new("to-selfies", None);
            let text = run.read_text(&input)?;
            let conv = corpus_to_selfies(text.lines());
            for s in &conv.skipped {
                eprintln!("line {}: skipped {:?}: {}", s.line + 1, s.input, s.reason);
            }
            run.note("converted", conv.converted.len());
            run.note("skipped_lines", conv.skipped.iter().map(|s| s.line).collect::<Vec<_>>());
            let body: String = conv.converted.iter().map(|(_, s)| format!("{s}\n")).collect();
            run.write(&out, body.as_bytes())?;
            eprintln!("converted {}, skipped {}", conv.converted.len(), conv.skipped.len());
            run.finish(beside(&out))?;
        }
        Command::Pretrain {
            corpus,
            tokenizer,
            valid,
            config,
            seed,
            record_time,
            out,
        } => {
            let mut run = Run::new("pretrain", Some(seed));
            let tok = Tokenizer::from_json(&run.read_text(&tokenizer)?)?;
            let train = lines(&run.read_text(&corpus)?);
            let valid = match &valid {
                Some(p) => lines(&run.read_text(p)?),
                None => Vec::new(),
            };
            let mut file: PretrainFile = load_config(&mut run, config.as_deref())?;
            file.pretrain.seed = seed;
            let mut model_cfg = file.model.take().unwrap_or_else(|| ModelConfig::desk(0));
            model_cfg.vocab_size = tok.vocab().len();
            file.model = Some(model_cfg.clone());
            run.config(&file);
            let model = Model::new(model_cfg, seed)?;
            let outcome = pretrain(model, &tok, &train, &valid, &file.pretrain)?;
            run.note("best_epoch", outcome.log.best_epoch);
            run.note("skipped_lines", outcome.skipped_lines);
            for (name, mut ck) in [("best.ckpt", outcome.best), ("last.ckpt", outcome.last)] {
                ck.tokenizer = Some(tok.clone());
                run.write(&out.join(name), &checkpoint_bytes(&ck))?;
            }
            run.write(&out.join("log.jsonl"), log_text(&outcome.log, record_time).as_bytes())?;
            if let Some(r) = outcome.log.records.last() {
                eprintln!("epoch {} train loss {:.4} valid loss {:?}", r.epoch, r.train_loss, r.valid_loss);
            }
            run.finish(out.join("manifest.json"))?;
        }
        Command::Finetune {
            checkpoint,
            tokenizer,
            task,
            label,
            split,
            config,
            seed,
            record_time,
            out,
        } => {
            let mut run = Run::new("finetune", Some(seed));
            let ck = read_checkpoint(&run.read(&checkpoint)?, None)?;
            let tok = tokenizer_for(&mut run, tokenizer.as_deref(), &ck)?;
            let data = load_task(&mut run, &task, &label)?;
            let split = load_split(&mut run, &split, data.len())?;
            let mut cfg: FinetuneConfig = load_config(&mut run, config.as_deref())?;
            cfg.seed = seed;
            run.config(&cfg);
            let outcome = finetune(&ck, &tok, &data, &split, &cfg)?;
            let mut best = outcome.best;
            best.tokenizer = Some(tok);
            run.write(&out.join("best.ckpt"), &checkpoint_bytes(&best))?;
            run.write(&out.join("log.jsonl"), log_text(&outcome.log, record_time).as_bytes())?;
            let report = serde_json::to_string_pretty(&outcome.report)? + "\n";
            run.write(&out.join("report.json"), report.as_bytes())?;
            print!("{report}");
            run.finish(out.join("manifest.json"))?;
        }
        Command::Baseline {
            task,
            label,
            split,
            config,
            out,
        } => {
            let mut run = Run::new("baseline", None);
            let data = load_task(&mut run, &task, &label)?;
            let split = load_split(&mut run, &split, data.len())?;
            let cfg: BaselineConfig = load_config(&mut run, config.as_deref())?;
            run.config(&cfg);
            let (_, report) = train_baseline(&data, &split, &cfg)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            run.write(&out, text.as_bytes())?;
            print!("{text}");
            run.finish(beside(&out))?;
        }
        Command::Scaling {
            corpus,
            sizes,
            tokenizer,
            task,
            label,
            split,
            config,
            seed,
            out,
        } => {
            let mut run = Run::new("scaling", Some(seed));
            let tok = Tokenizer::from_json(&run.read_text(&tokenizer)?)?;
            let corpus = Corpus {
                lines: lines(&run.read_text(&corpus)?),
            };
            let data = load_task(&mut run, &task, &label)?;
            let split = load_split(&mut run, &split, data.len())?;
            let mut cfg: ScalingConfig = load_config(&mut run, config.as_deref())?;
            cfg.pretrain.seed = seed;
            cfg.finetune.seed = seed;
            cfg.model.vocab_size = tok.vocab().len();
            run.config(&serde_json::json!({ "sizes": sizes, "experiment": cfg }));
            let subsets: Vec<Vec<String>> = subset(&corpus, &sizes)?.into_iter().map(|c| c.lines).collect();
            let report = scaling_experiment(&subsets, &tok, &data, &split, &cfg)?;
            for r in &report.rows {
                println!(
                    "{:>8} lines  test ROC-AUC {:.4}  PRC-AUC {:.4}  delta ROC {:+.4?}",
                    r.subset_size, r.test_roc_auc, r.test_prc_auc, r.delta_roc_auc
                );
            }
            run.write(&out, report.to_jsonl().as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::ScalingReport { reports, out } => {
            let mut run = Run::new("scaling-report", None);
            let parsed = reports
                .iter()
                .map(|p| Ok(ScalingReport::from_jsonl(&run.read_text(p)?)?))
                .collect::<Result<Vec<_>>>()?;
            let summary = summarize(&parsed)?;
            println!("# {}", summary.band);
            for r in &summary.rows {
                let fmt = |b: &Band| match b.sd {
                    Some(sd) => format!("{:+.4} +/- {:.4}", b.mean, sd),
                    None => format!("{:+.4}", b.mean),
                };
                println!(
                    "{:>8} vs {}: ROC-AUC {}  PRC-AUC {}  ({} tasks)",
                    r.subset_size,
                    summary.base_subset_size,
                    fmt(&r.delta_roc_auc),
                    fmt(&r.delta_prc_auc),
                    r.n_tasks
                );
            }
            let text = serde_json::to_string_pretty(&summary)? + "\n";
            run.write(&out, text.as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::AttentionExport {
            checkpoint,
            tokenizer,
            input,
            layers,
            heads,
            heatmaps,
            out,
        } => {
            let mut run = Run::new("attention-export", None);
            let ck = read_checkpoint(&run.read(&checkpoint)?, None)?;
            let tok = tokenizer_for(&mut run, tokenizer.as_deref(), &ck)?;
            let selector = HeadSelector { layers, heads };
            run.config(&serde_json::json!({ "input": input, "selector": selector }));
            let doc = export_attention(&ck.to_model(), &tok, &input, &selector)?;
            let scores = bracket_diagnostic(&doc);
            if scores.is_empty() {
                println!("no standalone '(' ')' token pairs to score");
            }
            for s in scores {
                println!(
                    "layer {} head {}: mean ')' -> '(' attention {:.4} over {} pairs",
                    s.layer, s.head, s.mean_mass, s.pairs
                );
            }
            if let Some(dir) = &heatmaps {
                for h in &doc.attention {
                    let svg = heatmap_svg(&doc.tokens, h);
                    run.write(&dir.join(format!("layer{}_head{}.svg", h.layer, h.head)), svg.as_bytes())?;
                }
            }
            run.write(&out, (serde_json::to_string(&doc)? + "\n").as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::Generate { n, seed, out } => {
            let mut run = Run::new("generate", Some(seed));
            run.config(&serde_json::json!({ "n": n }));
            let corpus = Corpus {
                lines: generate_corpus(n, seed),
            };
            run.write(&out, corpus.to_text().as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::SynthTask { kind, n, seed, out } => {
            let mut run = Run::new("synth-task", Some(seed));
            let kind = match kind {
                TaskKind::ContainsNitrogen => SyntheticTask::ContainsNitrogen,
                TaskKind::CarboxylicAcid => SyntheticTask::CarboxylicAcid,
            };
            run.config(&serde_json::json!({ "kind": kind, "n": n }));
            run.write(&out, synthetic_task(kind, n, seed).to_csv().as_bytes())?;
            run.finish(beside(&out))?;
        }
        Command::Verify { manifest: path } => {
            let m = manifest::load(&path)?;
            let problems = manifest::verify(&m);
            if !problems.is_empty() {
                for p in &problems {
                    eprintln!("{p}");
                }
                bail!("{} of {} files changed", problems.len(), m.inputs.len() + m.outputs.len());
            }
            println!("ok: {} inputs, {} outputs", m.inputs.len(), m.outputs.len());
        }
    }
    Ok(())
}

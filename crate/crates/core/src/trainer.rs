//! Training loops: MLM pretraining, classifier finetuning with early
//! stopping on validation ROC-AUC, and the pretraining-size ladder.
//!
//! Every random choice (masking, shuffling, dropout, head initialization)
//! is drawn from a ChaCha8 stream keyed by the run seed and epoch, so a run
//! is a pure function of its inputs apart from the logged wall time.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{make_mlm_examples, MaskingConfig, MlmExample, SplitIndices, TaskDataset};
use crate::metrics::{prc_auc, roc_auc, MetricError};
use crate::model::{AdamConfig, AdamState, Batch, Checkpoint, Model, ModelConfig, ModelError, Targets};
use crate::tokenize::{TokenSequence, TokenizeError, Tokenizer};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0} split is empty; early stopping needs train, valid and test records")]
    EmptySplit(&'static str),
    #[error("corpus has no usable lines")]
    EmptyCorpus,
    #[error("tokenizer has {tokenizer} tokens but the model expects {model}")]
    VocabMismatch { tokenizer: usize, model: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid scaling ladder: {0}")]
    InvalidLadder(String),
    #[error("malformed run log: {0}")]
    InvalidLog(String),
}

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;
const HEAD_STREAM: u64 = 0x4845_4144;
const VALID_MASK_EPOCH: u64 = u64::MAX;

fn stream_rng(seed: u64, purpose: u64, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.rotate_left(32));
    rng.set_stream(epoch);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Sequence length cap including `<bos>` and `<eos>`.
    pub max_len: usize,
    pub adam: AdamConfig,
    pub masking: MaskingConfig,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Stop once the validation loss (training loss without a validation
    /// set) falls below this value.
    pub target_loss: Option<f64>,
}

/// Linear warmup to the base rate, then either constant or a linear decay
/// reaching zero after the last planned step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub warmup_steps: usize,
    pub linear_decay: bool,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            warmup_steps: 0,
            linear_decay: false,
        }
    }
}

impl LrSchedule {
    /// Rate for zero-based `step` out of `total` planned steps.
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        let warm = if step < self.warmup_steps {
            (step + 1) as f64 / self.warmup_steps as f64
        } else {
            1.0
        };
        let decay = if self.linear_decay && total > self.warmup_steps && step >= self.warmup_steps {
            1.0 - (step - self.warmup_steps) as f64 / (total - self.warmup_steps) as f64
        } else {
            1.0
        };
        base * warm * decay
    }
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 16,
            max_len: 128,
            adam: AdamConfig::default(),
            masking: MaskingConfig::default(),
            seed: 0,
            schedule: LrSchedule::default(),
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

/// Hard cap on finetuning epochs.
pub const FINETUNE_EPOCH_CAP: usize = 25;

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            max_epochs: FINETUNE_EPOCH_CAP,
            patience: 3,
            batch_size: 16,
            max_len: 128,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs == 0 || self.max_epochs > FINETUNE_EPOCH_CAP {
            return Err(TrainError::InvalidConfig(format!(
                "max_epochs must lie in 1..={FINETUNE_EPOCH_CAP}"
            )));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be at least 1".into()));
        }
        check_common(self.batch_size, self.max_len, &self.adam)
    }
}

fn check_common(batch_size: usize, max_len: usize, adam: &AdamConfig) -> Result<(), TrainError> {
    if batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be positive".into()));
    }
    if max_len < 3 {
        return Err(TrainError::InvalidConfig("max_len must be at least 3".into()));
    }
    if !(adam.lr > 0.0) || !(0.0..1.0).contains(&adam.beta1) || !(0.0..1.0).contains(&adam.beta2) || !(adam.eps > 0.0) {
        return Err(TrainError::InvalidConfig("optimizer settings out of range".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_roc_auc: Option<f64>,
    pub valid_prc_auc: Option<f64>,
    pub wall_time_s: f64,
}

/// Per-epoch metrics plus the epoch whose weights were kept.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    #[serde(flatten)]
    record: EpochRecord,
    best: bool,
}

impl RunLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// One JSON object per epoch; the kept epoch has `"best": true`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = LogLine {
                record: r.clone(),
                best: r.epoch == self.best_epoch,
            };
            out.push_str(&serde_json::to_string(&line).expect("finite metrics"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<RunLog, TrainError> {
        let mut records = Vec::new();
        let mut best = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: LogLine =
                serde_json::from_str(line).map_err(|e| TrainError::InvalidLog(format!("line {}: {e}", i + 1)))?;
            if records.last().is_some_and(|r: &EpochRecord| r.epoch >= parsed.record.epoch) {
                return Err(TrainError::InvalidLog(format!("line {}: epochs must increase", i + 1)));
            }
            if parsed.best && best.replace(parsed.record.epoch).is_some() {
                return Err(TrainError::InvalidLog("more than one best epoch".into()));
            }
            records.push(parsed.record);
        }
        let best_epoch = best.ok_or_else(|| TrainError::InvalidLog("no best epoch marked".into()))?;
        Ok(RunLog { records, best_epoch })
    }

    /// The same log with wall times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> RunLog {
        let mut log = self.clone();
        log.records.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        log
    }
}

fn encode_all(tokenizer: &Tokenizer, lines: &[String], max_len: usize) -> (Vec<TokenSequence>, usize) {
    let mut skipped = 0;
    let seqs = lines
        .iter()
        .filter_map(|s| match tokenizer.encode(s, max_len) {
            Ok(seq) => Some(seq),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    (seqs, skipped)
}

fn check_vocab(tokenizer: &Tokenizer, cfg: &ModelConfig) -> Result<(), TrainError> {
    if tokenizer.vocab().len() != cfg.vocab_size {
        return Err(TrainError::VocabMismatch {
            tokenizer: tokenizer.vocab().len(),
            model: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Label-weighted mean MLM loss over fixed examples, without dropout.
/// `None` when no example carries a label.
pub fn mlm_eval_loss(model: &Model, examples: &[MlmExample], batch_size: usize) -> Result<Option<f64>, TrainError> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&MlmExample> = chunk.iter().collect();
        let (batch, labels) = Batch::from_mlm(&refs)?;
        let n = labels.iter().flatten().count();
        if n == 0 {
            continue;
        }
        sum += model.loss(&batch, &Targets::Mlm(labels))? * n as f64;
        count += n;
    }
    Ok((count > 0).then(|| sum / count as f64))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Weights from the epoch with the lowest validation loss (training
    /// loss without a validation set), ties to the earlier epoch.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: RunLog,
    /// Lines the tokenizer could not encode.
    pub skipped_lines: usize,
}

/// Dynamic-masking MLM training. Masks are redrawn every epoch; the
/// validation set uses one fixed draw so its loss is comparable across
/// epochs.
pub fn pretrain(
    mut model: Model,
    tokenizer: &Tokenizer,
    train: &[String],
    valid: &[String],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome, TrainError> {
    check_common(cfg.batch_size, cfg.max_len, &cfg.adam)?;
    if cfg.epochs == 0 {
        return Err(TrainError::InvalidConfig("epochs must be positive".into()));
    }
    check_vocab(tokenizer, &model.config)?;
    let max_len = cfg.max_len.min(model.config.max_positions);
    let (seqs, skipped_train) = encode_all(tokenizer, train, max_len);
    if seqs.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let (valid_seqs, skipped_valid) = encode_all(tokenizer, valid, max_len);
    let vocab = model.config.vocab_size;
    let valid_examples = make_mlm_examples(&valid_seqs, vocab, &cfg.masking, cfg.seed, VALID_MASK_EPOCH);

    let mut adam = AdamState::new(&model.config, cfg.adam);
    let total_steps = cfg.epochs * seqs.len().div_ceil(cfg.batch_size);
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let e = epoch as u64;
        let examples = make_mlm_examples(&seqs, vocab, &cfg.masking, cfg.seed, e);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, SHUFFLE_STREAM, e));
        let mut dropout = stream_rng(cfg.seed, DROPOUT_STREAM, e);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&MlmExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (batch, labels) = Batch::from_mlm(&refs)?;
            let n = labels.iter().flatten().count();
            if n == 0 {
                continue;
            }
            let (loss, grads) = model.loss_and_grads(&batch, &Targets::Mlm(labels), Some(&mut dropout))?;
            let lr = cfg.schedule.rate(cfg.adam.lr, adam.step_count() as usize, total_steps);
            adam.update(&mut model.params, &grads, lr)?;
            sum += loss * n as f64;
            count += n;
        }
        let train_loss = if count > 0 { sum / count as f64 } else { 0.0 };
        let valid_loss = mlm_eval_loss(&model, &valid_examples, cfg.batch_size)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            valid_roc_auc: None,
            valid_prc_auc: None,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        let score = valid_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        if cfg.target_loss.is_some_and(|t| score < t) {
            break;
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    let step = adam.step_count();
    let mut best_ck = Checkpoint::from_model(&best_model, step);
    best_ck.tokenizer = Some(tokenizer.clone());
    let mut last = Checkpoint::from_model(&model, step);
    last.tokenizer = Some(tokenizer.clone());
    last.optimizer = Some(adam);
    Ok(PretrainOutcome {
        best: best_ck,
        last,
        log: RunLog { records, best_epoch },
        skipped_lines: skipped_train + skipped_valid,
    })
}

/// Scores and loss of a classifier on a set of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scores: Vec<f64>,
    pub loss: f64,
    pub roc_auc: f64,
    pub prc_auc: f64,
}

fn classify_eval(
    model: &Model,
    seqs: &[TokenSequence],
    labels: &[bool],
    batch_size: usize,
) -> Result<Evaluation, TrainError> {
    let mut scores = Vec::with_capacity(seqs.len());
    let mut loss = 0.0;
    for (chunk, ys) in seqs.chunks(batch_size.max(1)).zip(labels.chunks(batch_size.max(1))) {
        let refs: Vec<&TokenSequence> = chunk.iter().collect();
        let logits = model.forward_classify(&Batch::from_sequences(&refs)?)?;
        for (z, &y) in logits.data.chunks_exact(2).zip(ys) {
            let max = z[0].max(z[1]);
            let lse = max + ((z[0] - max).exp() + (z[1] - max).exp()).ln();
            loss += lse - z[usize::from(y)];
            scores.push(1.0 / (1.0 + (z[0] - z[1]).exp()));
        }
    }
    let loss = loss / seqs.len().max(1) as f64;
    Ok(Evaluation {
        roc_auc: roc_auc(&scores, labels)?,
        prc_auc: prc_auc(&scores, labels)?,
        scores,
        loss,
    })
}

/// Evaluates `model` on the records at `indices`.
pub fn evaluate_classifier(
    model: &Model,
    tokenizer: &Tokenizer,
    task: &TaskDataset,
    indices: &[usize],
    max_len: usize,
    batch_size: usize,
) -> Result<Evaluation, TrainError> {
    let (seqs, labels) = encode_rows(tokenizer, task, indices, max_len)?;
    classify_eval(model, &seqs, &labels, batch_size)
}

fn encode_rows(
    tokenizer: &Tokenizer,
    task: &TaskDataset,
    indices: &[usize],
    max_len: usize,
) -> Result<(Vec<TokenSequence>, Vec<bool>), TrainError> {
    let mut seqs = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let r = task
            .records
            .get(i)
            .ok_or_else(|| TrainError::InvalidConfig(format!("split index {i} out of range")))?;
        seqs.push(tokenizer.encode(&r.smiles, max_len)?);
        labels.push(r.label);
    }
    Ok((seqs, labels))
}

/// Patience-based stopping on a score where higher is better. Only a
/// strict improvement resets the counter, so ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = self.best.is_none_or(|(_, b)| score > b);
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision {
            improved,
            stop: self.since_best >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub task: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub valid_roc_auc: f64,
    pub valid_prc_auc: f64,
    pub test_roc_auc: f64,
    pub test_prc_auc: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub best: Checkpoint,
    pub log: RunLog,
    pub report: FinetuneReport,
}

/// Trains the classification head and encoder together. After each epoch
/// the validation ROC-AUC decides whether the weights are kept; training
/// stops after `patience` epochs without a strict improvement. Test
/// metrics are computed once, for the kept weights.
pub fn finetune(
    ck: &Checkpoint,
    tokenizer: &Tokenizer,
    task: &TaskDataset,
    split: &SplitIndices,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome, TrainError> {
    cfg.validate()?;
    check_vocab(tokenizer, &ck.config)?;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if part.is_empty() {
            return Err(TrainError::EmptySplit(name));
        }
    }
    let max_len = cfg.max_len.min(ck.config.max_positions);
    let (train_seqs, train_labels) = encode_rows(tokenizer, task, &split.train, max_len)?;
    let (valid_seqs, valid_labels) = encode_rows(tokenizer, task, &split.valid, max_len)?;

    let mut model = ck.to_model();
    model.reset_classifier(cfg.seed ^ HEAD_STREAM);
    let mut adam = AdamState::new(&model.config, cfg.adam);
    let mut records = Vec::new();
    let mut best: Option<(f64, f64, Model)> = None;
    let mut stopper = EarlyStopping::new(cfg.patience);
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let e = epoch as u64;
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, SHUFFLE_STREAM, e));
        let mut dropout = stream_rng(cfg.seed, DROPOUT_STREAM, e);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&TokenSequence> = chunk.iter().map(|&i| &train_seqs[i]).collect();
            let labels: Vec<bool> = chunk.iter().map(|&i| train_labels[i]).collect();
            let batch = Batch::from_sequences(&refs)?;
            let (loss, grads) = model.loss_and_grads(&batch, &Targets::Classify(labels), Some(&mut dropout))?;
            adam.update(&mut model.params, &grads, cfg.adam.lr)?;
            sum += loss * chunk.len() as f64;
        }
        let eval = classify_eval(&model, &valid_seqs, &valid_labels, cfg.batch_size)?;
        records.push(EpochRecord {
            epoch,
            train_loss: sum / train_seqs.len() as f64,
            valid_loss: Some(eval.loss),
            valid_roc_auc: Some(eval.roc_auc),
            valid_prc_auc: Some(eval.prc_auc),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        let step = stopper.observe(epoch, eval.roc_auc);
        if step.improved {
            best = Some((eval.roc_auc, eval.prc_auc, model.clone()));
        }
        if step.stop {
            break;
        }
    }
    let (valid_roc_auc, valid_prc_auc, best_model) = best.expect("at least one epoch ran");
    let best_epoch = stopper.best_epoch().expect("at least one epoch ran");
    let test = evaluate_classifier(&best_model, tokenizer, task, &split.test, max_len, cfg.batch_size)?;
    let mut best_ck = Checkpoint::from_model(&best_model, adam.step_count());
    best_ck.tokenizer = Some(tokenizer.clone());
    Ok(FinetuneOutcome {
        best: best_ck,
        report: FinetuneReport {
            task: task.task_name.clone(),
            best_epoch,
            epochs_run: records.len(),
            valid_roc_auc,
            valid_prc_auc,
            test_roc_auc: test.roc_auc,
            test_prc_auc: test.prc_auc,
        },
        log: RunLog { records, best_epoch },
    })
}

/// Deltas reported at full scale when growing pretraining data from 100K
/// to 10M compounds. Kept as context for desk-scale reports; never
/// asserted.
pub const REFERENCE_DELTA_ROC_AUC: f64 = 0.110;
pub const REFERENCE_DELTA_PRC_AUC: f64 = 0.059;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    /// `(subset size, epochs)` pairs overriding `pretrain.epochs`.
    pub epoch_overrides: Vec<(usize, usize)>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            model: ModelConfig::desk(0),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            epoch_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub subset_size: usize,
    pub pretrain_epochs: usize,
    pub pretrain_loss: f64,
    pub valid_roc_auc: f64,
    pub test_roc_auc: f64,
    pub test_prc_auc: f64,
    /// Change against the smallest subset; `None` on that subset's row.
    pub delta_roc_auc: Option<f64>,
    pub delta_prc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub task: String,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn to_jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("finite metrics");
                v["task"] = self.task.clone().into();
                v.to_string() + "\n"
            })
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<ScalingReport, TrainError> {
        let mut task = None;
        let mut rows = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| TrainError::InvalidLog(e.to_string()))?;
            let name = v
                .as_object_mut()
                .and_then(|o| o.remove("task"))
                .and_then(|t| t.as_str().map(String::from))
                .ok_or_else(|| TrainError::InvalidLog("row without task name".into()))?;
            if task.get_or_insert_with(|| name.clone()) != &name {
                return Err(TrainError::InvalidLog("rows name different tasks".into()));
            }
            rows.push(serde_json::from_value(v).map_err(|e| TrainError::InvalidLog(e.to_string()))?);
        }
        Ok(ScalingReport {
            task: task.ok_or_else(|| TrainError::InvalidLog("empty report".into()))?,
            rows,
        })
    }

    /// Whether test ROC-AUC never decreases along the ladder.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].test_roc_auc >= w[0].test_roc_auc)
    }
}

/// Pretrains a fresh model (same initialization each time) on every subset,
/// finetunes the last pretraining checkpoint on `task`, and tabulates test
/// metrics. Subsets must be nested: each a prefix of the next.
pub fn scaling_experiment(
    subsets: &[Vec<String>],
    tokenizer: &Tokenizer,
    task: &TaskDataset,
    split: &SplitIndices,
    cfg: &ScalingConfig,
) -> Result<ScalingReport, TrainError> {
    if subsets.len() < 2 {
        return Err(TrainError::InvalidLadder("need at least two subsets".into()));
    }
    for w in subsets.windows(2) {
        if w[1].len() < w[0].len() || w[1][..w[0].len()] != w[0][..] {
            return Err(TrainError::InvalidLadder(format!(
                "subset of {} lines is not a prefix of the next",
                w[0].len()
            )));
        }
    }
    let mut model_cfg = cfg.model.clone();
    model_cfg.vocab_size = tokenizer.vocab().len();
    let mut rows: Vec<ScalingRow> = Vec::with_capacity(subsets.len());
    for lines in subsets {
        let epochs = cfg
            .epoch_overrides
            .iter()
            .find(|(size, _)| *size == lines.len())
            .map_or(cfg.pretrain.epochs, |&(_, e)| e);
        let pre_cfg = PretrainConfig {
            epochs,
            ..cfg.pretrain.clone()
        };
        let model = Model::new(model_cfg.clone(), cfg.pretrain.seed)?;
        let pre = pretrain(model, tokenizer, lines, &[], &pre_cfg)?;
        let ft = finetune(&pre.last, tokenizer, task, split, &cfg.finetune)?;
        let (delta_roc_auc, delta_prc_auc) = match rows.first() {
            None => (None, None),
            Some(base) => (
                Some(ft.report.test_roc_auc - base.test_roc_auc),
                Some(ft.report.test_prc_auc - base.test_prc_auc),
            ),
        };
        rows.push(ScalingRow {
            subset_size: lines.len(),
            pretrain_epochs: pre.log.records.len(),
            pretrain_loss: pre.log.records.last().expect("ran").train_loss,
            valid_roc_auc: ft.report.valid_roc_auc,
            test_roc_auc: ft.report.test_roc_auc,
            test_prc_auc: ft.report.test_prc_auc,
            delta_roc_auc,
            delta_prc_auc,
        });
    }
    Ok(ScalingReport {
        task: task.task_name.clone(),
        rows,
    })
}

/// Mean and sample standard deviation of one delta per task: the band
/// drawn around the mean improvement (±1 SD, roughly a 68% interval).
/// The deviation is `None` for fewer than two tasks.
pub fn delta_band(deltas: &[f64]) -> Option<(f64, Option<f64>)> {
    if deltas.is_empty() {
        return None;
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let sd = (deltas.len() > 1).then(|| (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Some((mean, sd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{scaffold_split, DEFAULT_FRACTIONS};
    use crate::synth::{generate_corpus, synthetic_task, SyntheticTask};

    fn small_model(tok: &Tokenizer) -> Model {
        let mut cfg = ModelConfig::desk(tok.vocab().len());
        cfg.d_model = 16;
        cfg.d_ff = 32;
        cfg.max_positions = 64;
        Model::new(cfg, 1).unwrap()
    }

    fn quick_pretrain(epochs: usize) -> PretrainConfig {
        PretrainConfig {
            epochs,
            max_len: 64,
            seed: 3,
            ..PretrainConfig::default()
        }
    }

    #[test]
    fn pretraining_lowers_loss_and_is_deterministic() {
        let corpus = generate_corpus(60, 2);
        let tok = Tokenizer::train_regex(&corpus, 200).unwrap();
        let run = || pretrain(small_model(&tok), &tok, &corpus, &corpus[..10], &quick_pretrain(4)).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.log.without_timing(), b.log.without_timing());
        assert_eq!(a.last.params, b.last.params);
        let first = a.log.records.first().unwrap().train_loss;
        let last = a.log.records.last().unwrap().train_loss;
        assert!(last < first, "{first} -> {last}");
        let best = a.log.best().unwrap().valid_loss.unwrap();
        assert!(a.log.records.iter().all(|r| r.valid_loss.unwrap() >= best));
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let s = LrSchedule {
            warmup_steps: 4,
            linear_decay: true,
        };
        let rates: Vec<f64> = (0..12).map(|t| s.rate(1.0, t, 12)).collect();
        assert_eq!(&rates[..5], &[0.25, 0.5, 0.75, 1.0, 1.0]);
        assert_eq!(rates[8], 0.5);
        assert!(rates.windows(2).skip(4).all(|w| w[1] < w[0]));
        assert_eq!(LrSchedule::default().rate(0.3, 7, 10), 0.3);
    }

    #[test]
    fn run_log_round_trips() {
        let log = RunLog {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.1 + 0.2,
                    valid_loss: Some(1.0 / 3.0),
                    valid_roc_auc: Some(0.75),
                    valid_prc_auc: None,
                    wall_time_s: 1e-7,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: std::f64::consts::PI,
                    valid_loss: None,
                    valid_roc_auc: None,
                    valid_prc_auc: Some(2f64.sqrt()),
                    wall_time_s: 3.5,
                },
            ],
            best_epoch: 2,
        };
        assert_eq!(RunLog::from_jsonl(&log.to_jsonl()).unwrap(), log);
        let bad = log.to_jsonl().replace("\"best\":true", "\"best\":false");
        assert!(RunLog::from_jsonl(&bad).is_err());
    }

    fn nitrogen_setup(n: usize) -> (Tokenizer, TaskDataset, SplitIndices) {
        let task = synthetic_task(SyntheticTask::ContainsNitrogen, n, 5);
        let smiles: Vec<&str> = task.records.iter().map(|r| r.smiles.as_str()).collect();
        let tok = Tokenizer::train_regex(&smiles, 200).unwrap();
        let split = scaffold_split(&task, DEFAULT_FRACTIONS).unwrap();
        (tok, task, split)
    }

    #[test]
    fn empty_partition_is_rejected() {
        let (tok, task, mut split) = nitrogen_setup(40);
        split.valid.clear();
        let ck = Checkpoint::from_model(&small_model(&tok), 0);
        let err = finetune(&ck, &tok, &task, &split, &FinetuneConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::EmptySplit("valid")));
    }

    #[test]
    fn vocabulary_must_match() {
        let (tok, task, split) = nitrogen_setup(40);
        let mut cfg = small_model(&tok).config;
        cfg.vocab_size += 1;
        let ck = Checkpoint::from_model(&Model::new(cfg, 0).unwrap(), 0);
        let err = finetune(&ck, &tok, &task, &split, &FinetuneConfig::default()).unwrap_err();
        assert!(matches!(err, TrainError::VocabMismatch { .. }));
    }

    #[test]
    fn early_stopping_keeps_best_epoch_and_reproduces_it() {
        let (tok, task, split) = nitrogen_setup(120);
        let ck = Checkpoint::from_model(&small_model(&tok), 0);
        let cfg = FinetuneConfig {
            max_epochs: 8,
            patience: 2,
            max_len: 64,
            seed: 4,
            ..FinetuneConfig::default()
        };
        let out = finetune(&ck, &tok, &task, &split, &cfg).unwrap();
        let log = &out.log;
        let best_roc = log.best().unwrap().valid_roc_auc.unwrap();
        for r in &log.records {
            let roc = r.valid_roc_auc.unwrap();
            assert!(roc <= best_roc);
            if r.epoch < log.best_epoch {
                assert!(roc < best_roc);
            }
        }
        let after = log.records.len() - log.best_epoch;
        assert!(after == cfg.patience || log.records.len() == cfg.max_epochs);
        let again = evaluate_classifier(&out.best.to_model(), &tok, &task, &split.valid, 64, 16).unwrap();
        assert_eq!(again.roc_auc, best_roc);
        assert_eq!(out.report.valid_roc_auc, best_roc);
    }

    #[test]
    fn patience_one_stops_after_second_worse_epoch() {
        let mut s = EarlyStopping::new(1);
        assert!(!s.observe(1, 0.9).stop);
        assert!(s.observe(2, 0.8).stop);
        assert_eq!(s.best_epoch(), Some(1));
    }

    #[test]
    fn ties_keep_the_earlier_epoch() {
        let mut s = EarlyStopping::new(3);
        s.observe(1, 0.5);
        s.observe(2, 0.7);
        let d = s.observe(3, 0.7);
        assert!(!d.improved && !d.stop);
        s.observe(4, 0.6);
        assert!(s.observe(5, 0.7).stop);
        assert_eq!(s.best_epoch(), Some(2));
    }

    #[test]
    fn finetune_config_limits() {
        let bad = FinetuneConfig {
            max_epochs: 26,
            ..FinetuneConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FinetuneConfig {
            patience: 0,
            ..FinetuneConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identical_subsets_give_zero_delta() {
        let (tok, task, split) = nitrogen_setup(60);
        let lines: Vec<String> = task.records.iter().map(|r| r.smiles.clone()).collect();
        let mut model = small_model(&tok).config;
        model.vocab_size = 0;
        let cfg = ScalingConfig {
            model,
            pretrain: quick_pretrain(1),
            finetune: FinetuneConfig {
                max_epochs: 2,
                max_len: 64,
                ..FinetuneConfig::default()
            },
            epoch_overrides: vec![],
        };
        let subsets = vec![lines[..30].to_vec(), lines[..30].to_vec()];
        let report = scaling_experiment(&subsets, &tok, &task, &split, &cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].delta_roc_auc, None);
        assert_eq!(report.rows[1].delta_roc_auc, Some(0.0));
        assert_eq!(report.rows[1].delta_prc_auc, Some(0.0));
        assert_eq!(ScalingReport::from_jsonl(&report.to_jsonl()).unwrap(), report);

        let not_nested = vec![lines[..30].to_vec(), lines[1..40].to_vec()];
        assert!(matches!(
            scaling_experiment(&not_nested, &tok, &task, &split, &cfg),
            Err(TrainError::InvalidLadder(_))
        ));
        assert!(scaling_experiment(&subsets[..1], &tok, &task, &split, &cfg).is_err());
    }

    #[test]
    fn band_uses_sample_deviation() {
        let (mean, sd) = delta_band(&[0.1, 0.2, 0.3]).unwrap();
        assert!((mean - 0.2).abs() < 1e-15);
        assert!((sd.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(delta_band(&[0.5]), Some((0.5, None)));
        assert_eq!(delta_band(&[]), None);
    }
}

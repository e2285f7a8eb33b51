//! Training: dataset splitting, the plateau LR schedule, the MSE training
//! loop for single- and multi-head models (with optional gradient surgery),
//! metric evaluation, and run artifacts.

pub mod artifacts;
pub mod metrics;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;
use crate::features::{self, DimNorm, FeatureError, NormStats, Transform};
use crate::nn::{adam_step, AdamState, Gradients, NnError, Real, Tensor2D};
use crate::pcgrad::{project_conflicts, PcGradError};
use crate::seernet::{ModelInput, SeerNet, SeerNetConfig, SeerNetError};

pub use metrics::{compute_metrics, metrics_from_rows, MetricsReport, PredRow, TargetMetrics};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("dataset too small: {split} split is empty")]
    TooSmall { split: &'static str },
    #[error("target \"{target}\" has a zero value; percentage metrics are undefined")]
    ZeroTarget { target: String },
    #[error("target \"{target}\" of sample {graph_id} is not positive; log-space training requires positive labels")]
    NonPositiveTarget { target: String, graph_id: String },
    #[error("sample {graph_id} is missing target \"{target}\"")]
    MissingTarget { target: String, graph_id: String },
    #[error("loss diverged (non-finite) at epoch {at_epoch}; last good checkpoint retained")]
    DivergedLoss {
        at_epoch: usize,
        output: Box<TrainOutput>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] SeerNetError),
    #[error(transparent)]
    PcGrad(#[from] PcGradError),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
}

/// Training hyperparameters plus the model architecture section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_floor: f64,
    pub patience_epochs: usize,
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub split_ratio: (u32, u32, u32),
    pub targets: Vec<String>,
    pub use_pcgrad: bool,
    pub hidden: usize,
    pub head_hidden: usize,
    pub use_synmm: bool,
    pub use_gnpb: bool,
    /// Stop early once held-out validation MAPE (mean over targets, percent)
    /// reaches this value.
    pub early_stop_val_mape: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr_init: 1e-3,
            lr_floor: 1e-6,
            patience_epochs: 5,
            lr_decay: 0.5,
            max_epochs: 500,
            seed: 0,
            loss: LossKind::Mse,
            split_ratio: (2, 1, 1),
            targets: vec![crate::synth::TARGET_TIME.to_string()],
            use_pcgrad: false,
            hidden: 256,
            head_hidden: 256,
            use_synmm: true,
            use_gnpb: true,
            early_stop_val_mape: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::BadConfig(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        let (a, b, c) = self.split_ratio;
        if a == 0 || b == 0 || c == 0 {
            return Err(TrainError::BadConfig("split ratios must be positive".into()));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor < self.lr_init) {
            return Err(TrainError::BadConfig(
                "lr_floor must be positive and below lr_init".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(TrainError::BadConfig("lr_decay must be in (0,1)".into()));
        }
        if self.targets.is_empty() {
            return Err(TrainError::BadConfig("at least one target required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.targets {
            if !seen.insert(t) {
                return Err(TrainError::BadConfig(format!("duplicate target \"{t}\"")));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> SeerNetConfig {
        SeerNetConfig {
            hidden: self.hidden,
            head_hidden: self.head_hidden,
            use_synmm: self.use_synmm,
            use_gnpb: self.use_gnpb,
            targets: self.targets.clone(),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<TrainConfig, TrainError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TrainError::Io(e.to_string()))?;
        let cfg: TrainConfig =
            serde_json::from_str(&text).map_err(|e| TrainError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

// ── splitting ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle, then floor quotas with the remainder distributed
/// train-first (train, val, test, train, ...).
pub fn split(n: usize, ratio: (u32, u32, u32), seed: u64) -> Result<Split, TrainError> {
    let total = (ratio.0 + ratio.1 + ratio.2) as u64;
    if total == 0 || n == 0 {
        return Err(TrainError::TooSmall { split: "train" });
    }
    let mut counts = [
        (n as u64 * ratio.0 as u64 / total) as usize,
        (n as u64 * ratio.1 as u64 / total) as usize,
        (n as u64 * ratio.2 as u64 / total) as usize,
    ];
    let mut leftover = n - counts.iter().sum::<usize>();
    let mut slot = 0;
    while leftover > 0 {
        counts[slot % 3] += 1;
        slot += 1;
        leftover -= 1;
    }
    for (i, name) in ["train", "val", "test"].iter().enumerate() {
        if counts[i] == 0 {
            return Err(TrainError::TooSmall { split: name });
        }
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let val_start = counts[0];
    let test_start = counts[0] + counts[1];
    Ok(Split {
        train: indices[..val_start].to_vec(),
        val: indices[val_start..test_start].to_vec(),
        test: indices[test_start..].to_vec(),
    })
}

// ── LR schedule ─────────────────────────────────────────────────────

/// Plateau schedule: halve the learning rate after `patience` epochs without
/// a relative improvement of the best validation loss, clamped at the floor.
/// The first epoch seeds the baseline and counts toward the patience window.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    lr: f64,
    floor: f64,
    decay: f64,
    patience: usize,
    rel_threshold: f64,
    best: Option<f64>,
    streak: usize,
}

impl PlateauSchedule {
    pub fn new(lr_init: f64, lr_floor: f64, decay: f64, patience: usize) -> Self {
        PlateauSchedule {
            lr: lr_init,
            floor: lr_floor,
            decay,
            patience,
            rel_threshold: 1e-6,
            best: None,
            streak: 0,
        }
    }

    /// Learning rate for the coming epoch.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss; returns true when it strictly
    /// improved the tracked best (by > the relative threshold).
    pub fn observe(&mut self, val_loss: f64) -> bool {
        let improved = match self.best {
            Some(best) if val_loss < best * (1.0 - self.rel_threshold) => {
                self.best = Some(val_loss);
                self.streak = 0;
                true
            }
            Some(_) => {
                self.streak += 1;
                false
            }
            None => {
                self.best = Some(val_loss);
                self.streak += 1;
                false
            }
        };
        if self.streak >= self.patience {
            self.lr = (self.lr * self.decay).max(self.floor);
            self.streak = 0;
        }
        improved
    }
}

// ── prepared data ───────────────────────────────────────────────────

/// Samples normalized with fitted stats and converted to model inputs.
pub struct Prepared {
    pub inputs: Vec<ModelInput>,
    /// Normalized labels per sample, aligned with the target list.
    pub norm_labels: Vec<Vec<f64>>,
    /// Raw (physical-unit) labels per sample, aligned with the target list.
    pub raw_labels: Vec<Vec<f64>>,
    pub ids: Vec<String>,
}

fn fit_target_stats(
    samples: &[Sample],
    train_idx: &[usize],
    targets: &[String],
) -> Result<BTreeMap<String, DimNorm>, TrainError> {
    let mut out = BTreeMap::new();
    for target in targets {
        let mut logs = Vec::with_capacity(train_idx.len());
        for &i in train_idx {
            let s = &samples[i];
            let y = *s.labels.get(target).ok_or_else(|| TrainError::MissingTarget {
                target: target.clone(),
                graph_id: s.graph_id.clone(),
            })?;
            if !(y > 0.0) {
                return Err(TrainError::NonPositiveTarget {
                    target: target.clone(),
                    graph_id: s.graph_id.clone(),
                });
            }
            logs.push(y.ln());
        }
        let n = logs.len().max(1) as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        out.insert(
            target.clone(),
            DimNorm {
                transform: Transform::Log,
                shift: mean,
                scale: if std > 1e-12 { std } else { 1.0 },
            },
        );
    }
    Ok(out)
}

/// Normalizes all samples with the given stats and extracts model inputs and
/// label vectors.
pub fn prepare(
    samples: &[Sample],
    stats: &NormStats,
    targets: &[String],
) -> Result<Prepared, TrainError> {
    let mut inputs = Vec::with_capacity(samples.len());
    let mut norm_labels = Vec::with_capacity(samples.len());
    let mut raw_labels = Vec::with_capacity(samples.len());
    let mut ids = Vec::with_capacity(samples.len());
    for s in samples {
        let pg = features::normalize(&s.pg, stats)?;
        inputs.push(ModelInput::from_perfgraph(&pg)?);
        let mut norm_row = Vec::with_capacity(targets.len());
        let mut raw_row = Vec::with_capacity(targets.len());
        for t in targets {
            let y = *s.labels.get(t).ok_or_else(|| TrainError::MissingTarget {
                target: t.clone(),
                graph_id: s.graph_id.clone(),
            })?;
            raw_row.push(y);
            norm_row.push(stats.normalize_target(t, y)?);
        }
        norm_labels.push(norm_row);
        raw_labels.push(raw_row);
        ids.push(s.graph_id.clone());
    }
    Ok(Prepared {
        inputs,
        norm_labels,
        raw_labels,
        ids,
    })
}

// ── training loop ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: SeerNet,
    pub stats: NormStats,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub split: Split,
    pub config: TrainConfig,
}

/// Per-task sum of squared errors and gradients over one batch or split.
struct TaskAccum {
    grads: Vec<Gradients>,
    sq: Vec<f64>,
}

/// Trains on the samples per the config: 2:1:1-style seeded split, feature
/// and log-target normalization fitted on the training split, Adam with the
/// plateau schedule, best-validation checkpointing, and optional gradient
/// surgery across task heads.
pub fn train(config: &TrainConfig, samples: &[Sample]) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    let split = split(samples.len(), config.split_ratio, config.seed)?;
    let targets = config.targets.clone();

    let train_graphs: Vec<&crate::features::PerfGraph> =
        split.train.iter().map(|&i| &samples[i].pg).collect();
    let mut stats = features::fit_feature_stats(&train_graphs);
    stats.targets = fit_target_stats(samples, &split.train, &targets)?;

    let prepared = prepare(samples, &stats, &targets)?;
    let mut model = SeerNet::init(config.model_config(), config.seed);
    let n_tasks = targets.len();
    let n_params = model.params.len();
    let shared_len = model.params.shared_len();

    let mut adam = AdamState::new(n_params);
    let mut schedule = PlateauSchedule::new(
        config.lr_init,
        config.lr_floor,
        config.lr_decay,
        config.patience_epochs,
    );
    let mut loop_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xD1CE_5EED));

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_flat: Vec<Real> = model.params.flat().to_vec();

    let mut task_accums = TaskAccum {
        grads: (0..n_tasks)
            .map(|_| Gradients::zeros(n_params))
            .collect(),
        sq: vec![0.0; n_tasks],
    };
    let mut combined = vec![0.0 as Real; n_params];

    let finish = |model: &mut SeerNet,
                  best_flat: &[Real],
                  history: Vec<EpochRecord>,
                  best_epoch: usize,
                  best_val: f64,
                  stats: NormStats,
                  split: Split,
                  config: &TrainConfig|
     -> Result<TrainOutput, TrainError> {
        model.params.assign_flat(best_flat)?;
        model.mark_fitted();
        Ok(TrainOutput {
            model: model.clone(),
            stats,
            history,
            best_epoch,
            best_val_loss: best_val,
            split,
            config: config.clone(),
        })
    };

    let mut train_order: Vec<usize> = split.train.clone();
    for epoch in 1..=config.max_epochs {
        let lr = schedule.lr();
        train_order.shuffle(&mut loop_rng);

        let mut epoch_sq = vec![0.0f64; n_tasks];
        let mut diverged = false;

        for batch in train_order.chunks(config.batch_size) {
            for g in &mut task_accums.grads {
                g.zero();
            }
            task_accums.sq.iter_mut().for_each(|s| *s = 0.0);

            for &idx in batch {
                let pass = model.forward(&prepared.inputs[idx])?;
                for t in 0..n_tasks {
                    let pred = pass.prediction(t) as f64;
                    if !pred.is_finite() {
                        diverged = true;
                        break;
                    }
                    let err = pred - prepared.norm_labels[idx][t];
                    task_accums.sq[t] += err * err;
                    let seed_val = (2.0 * err / batch.len() as f64) as Real;
                    pass.tape.backward_into(
                        &model.params,
                        pass.head_outputs[t],
                        Tensor2D::row_vector(vec![seed_val])?,
                        &mut task_accums.grads[t],
                    )?;
                }
                if diverged {
                    break;
                }
            }
            if diverged {
                break;
            }
            for t in 0..n_tasks {
                epoch_sq[t] += task_accums.sq[t];
            }

            combined.iter_mut().for_each(|v| *v = 0.0);
            if n_tasks > 1 && config.use_pcgrad {
                let shared: Vec<Vec<Real>> = task_accums
                    .grads
                    .iter()
                    .map(|g| g.params[..shared_len].to_vec())
                    .collect();
                let surgered = project_conflicts(&shared, loop_rng.random::<u64>())?;
                combined[..shared_len].copy_from_slice(&surgered);
                for g in &task_accums.grads {
                    for (c, &gv) in combined[shared_len..]
                        .iter_mut()
                        .zip(&g.params[shared_len..])
                    {
                        *c += gv;
                    }
                }
            } else {
                for g in &task_accums.grads {
                    for (c, &gv) in combined.iter_mut().zip(&g.params) {
                        *c += gv;
                    }
                }
            }
            adam_step(model.params.flat_mut(), &combined, &mut adam, lr)?;
        }

        let train_loss: f64 = epoch_sq
            .iter()
            .map(|sq| sq / split.train.len() as f64)
            .sum();

        // Validation loss (forward only), and optionally MAPE for early stop.
        let mut val_sq = vec![0.0f64; n_tasks];
        let mut val_rel_abs = vec![0.0f64; n_tasks];
        let mut val_ok = !diverged && train_loss.is_finite();
        if val_ok {
            'val: for &idx in &split.val {
                let pass = model.forward(&prepared.inputs[idx])?;
                for t in 0..n_tasks {
                    let pred = pass.prediction(t) as f64;
                    if !pred.is_finite() {
                        val_ok = false;
                        break 'val;
                    }
                    let err = pred - prepared.norm_labels[idx][t];
                    val_sq[t] += err * err;
                    let y_raw = prepared.raw_labels[idx][t];
                    let y_hat = stats.denormalize_target(&targets[t], pred)?;
                    val_rel_abs[t] += ((y_hat - y_raw) / y_raw).abs();
                }
            }
        }
        if !val_ok {
            let output = finish(
                &mut model, &best_flat, history, best_epoch, best_val, stats, split, config,
            )?;
            return Err(TrainError::DivergedLoss {
                at_epoch: epoch,
                output: Box::new(output),
            });
        }
        let val_loss: f64 = val_sq.iter().map(|sq| sq / split.val.len() as f64).sum();
        let val_mape = val_rel_abs
            .iter()
            .map(|s| s / split.val.len() as f64 * 100.0)
            .sum::<f64>()
            / n_tasks as f64;

        // Exact argmin for checkpointing; thresholded improvement for patience.
        let improved_exact = val_loss < best_val;
        if improved_exact {
            best_val = val_loss;
            best_epoch = epoch;
            best_flat.copy_from_slice(model.params.flat());
        }
        schedule.observe(val_loss);

        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            improved: improved_exact,
        });

        if let Some(stop) = config.early_stop_val_mape {
            if val_mape <= stop {
                break;
            }
        }
    }

    finish(
        &mut model, &best_flat, history, best_epoch, best_val, stats, split, config,
    )
}

/// Evaluates a fitted model on samples: predictions are denormalized to
/// physical units and compared against the raw labels.
pub fn evaluate(
    model: &SeerNet,
    samples: &[Sample],
    stats: &NormStats,
) -> Result<(MetricsReport, Vec<PredRow>), TrainError> {
    let targets = model.config.targets.clone();
    let prepared = prepare(samples, stats, &targets)?;
    let mut rows = Vec::with_capacity(samples.len() * targets.len());
    for (i, input) in prepared.inputs.iter().enumerate() {
        let pass = model.forward(input)?;
        for (t, target) in targets.iter().enumerate() {
            let pred_norm = pass.prediction(t) as f64;
            let y_pred = stats.denormalize_target(target, pred_norm)?;
            rows.push(PredRow {
                graph_id: prepared.ids[i].clone(),
                target: target.clone(),
                y_true: prepared.raw_labels[i][t],
                y_pred,
            });
        }
    }
    let report = metrics_from_rows(&rows)?;
    Ok((report, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::samples_from_labeled;
    use crate::features::Phase;
    use crate::synth::{gen_labeled, DatasetSpec, TARGET_TIME};

    #[test]
    fn split_exact_division() {
        let s = split(8, (2, 1, 1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4, 2, 2));
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn split_remainder_goes_train_first() {
        let s = split(7, (2, 1, 1), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (4, 2, 1));
    }

    #[test]
    fn split_same_seed_same_membership() {
        let a = split(101, (2, 1, 1), 9).unwrap();
        let b = split(101, (2, 1, 1), 9).unwrap();
        assert_eq!(a, b);
        let c = split(101, (2, 1, 1), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_too_small_is_rejected() {
        assert!(matches!(
            split(2, (2, 1, 1), 0),
            Err(TrainError::TooSmall { .. })
        ));
    }

    #[test]
    fn schedule_trace_under_monotone_worsening() {
        // Expected: 1e-3 for epochs 1..=5, 5e-4 for 6..=10, ..., clamped at
        // 1e-6 from epoch 51 onward.
        let mut sched = PlateauSchedule::new(1e-3, 1e-6, 0.5, 5);
        let mut trace = Vec::new();
        for epoch in 1..=60 {
            trace.push(sched.lr());
            sched.observe(1.0 + epoch as f64); // strictly worsening
        }
        for (i, &lr) in trace.iter().enumerate() {
            let epoch = i + 1;
            let halvings = (epoch - 1) / 5;
            let expected = (1e-3 * 0.5f64.powi(halvings as i32)).max(1e-6);
            assert_eq!(lr, expected, "epoch {epoch}");
        }
        assert_eq!(trace[49], 1.953125e-6);
        assert_eq!(trace[50], 1e-6);
        assert!(trace.iter().skip(50).all(|&lr| lr == 1e-6));
    }

    #[test]
    fn schedule_lr_never_increases_and_respects_floor() {
        let mut sched = PlateauSchedule::new(1e-3, 1e-6, 0.5, 3);
        let mut prev = sched.lr();
        let mut rng_vals = [0.9, 1.1, 0.85, 0.86, 0.87, 0.84, 2.0, 3.0, 4.0, 5.0, 6.0]
            .iter()
            .cycle()
            .take(100);
        while let Some(&v) = rng_vals.next() {
            sched.observe(v);
            let lr = sched.lr();
            assert!(lr <= prev);
            assert!(lr >= 1e-6);
            prev = lr;
        }
    }

    #[test]
    fn schedule_improvement_resets_patience() {
        let mut sched = PlateauSchedule::new(1e-3, 1e-6, 0.5, 5);
        sched.observe(1.0); // baseline
        for v in [0.9, 0.8, 0.7, 0.6, 0.5, 0.4] {
            assert!(sched.observe(v));
            assert_eq!(sched.lr(), 1e-3);
        }
    }

    fn tiny_config(targets: &[&str]) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            max_epochs: 8,
            hidden: 8,
            head_hidden: 8,
            targets: targets.iter().map(|t| t.to_string()).collect(),
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn tiny_samples(n: usize) -> Vec<Sample> {
        let graphs = gen_labeled(&DatasetSpec::mixed(13), n).unwrap();
        samples_from_labeled(&graphs, &[Phase::Infer]).unwrap()
    }

    #[test]
    fn training_runs_and_checkpoints_best_epoch() {
        let samples = tiny_samples(32);
        let out = train(&tiny_config(&[TARGET_TIME]), &samples).unwrap();
        assert!(out.model.is_fitted());
        assert_eq!(out.history.len(), 8);
        let argmin = out
            .history
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        assert_eq!(out.best_epoch, argmin.epoch);
        assert!((out.best_val_loss - argmin.val_loss).abs() < 1e-15);
        // LR is non-increasing over epochs.
        for w in out.history.windows(2) {
            assert!(w[1].lr <= w[0].lr);
        }
    }

    #[test]
    fn same_seed_gives_identical_loss_curves() {
        let samples = tiny_samples(24);
        let cfg = tiny_config(&[TARGET_TIME]);
        let a = train(&cfg, &samples).unwrap();
        let b = train(&cfg, &samples).unwrap();
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.train_loss.to_bits(), rb.train_loss.to_bits());
            assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits());
        }
        assert_eq!(a.model.params.flat(), b.model.params.flat());
    }

    #[test]
    fn constant_labels_reach_zero_mape_quickly() {
        // A constant-label dataset is learnable by bias alone.
        let graphs = gen_labeled(&DatasetSpec::mixed(3), 200).unwrap();
        let mut samples = samples_from_labeled(&graphs, &[Phase::Infer]).unwrap();
        for s in &mut samples {
            s.labels.insert(TARGET_TIME.to_string(), 0.25);
        }
        let mut cfg = tiny_config(&[TARGET_TIME]);
        cfg.batch_size = 4;
        cfg.lr_init = 1e-2;
        cfg.max_epochs = 50;
        cfg.early_stop_val_mape = Some(0.01);
        let out = train(&cfg, &samples).unwrap();
        let (report, _) = evaluate(
            &out.model,
            &split_samples(&samples, &out.split.val),
            &out.stats,
        )
        .unwrap();
        assert!(
            report.mean_mape < 0.5,
            "constant labels should be trivially learnable, got MAPE {}",
            report.mean_mape
        );
    }

    fn split_samples(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
        idx.iter().map(|&i| samples[i].clone()).collect()
    }

    #[test]
    fn multi_task_with_pcgrad_trains() {
        let samples = tiny_samples(24);
        let mut cfg = tiny_config(&crate::synth::ALL_TARGETS);
        cfg.use_pcgrad = true;
        cfg.max_epochs = 4;
        let out = train(&cfg, &samples).unwrap();
        assert_eq!(out.model.head_count(), 3);
        let (report, rows) = evaluate(
            &out.model,
            &split_samples(&samples, &out.split.test),
            &out.stats,
        )
        .unwrap();
        assert_eq!(report.per_target.len(), 3);
        assert_eq!(rows.len(), out.split.test.len() * 3);
        assert!(report.mean_mape.is_finite());
    }

    #[test]
    fn missing_target_is_reported() {
        let samples = tiny_samples(16);
        let cfg = tiny_config(&["nonexistent"]);
        assert!(matches!(
            train(&cfg, &samples),
            Err(TrainError::MissingTarget { .. })
        ));
    }
}

//! Run artifacts on disk: checkpoint binary + manifest, normalization stats,
//! training history, metric reports, and prediction dumps.

use std::path::{Path, PathBuf};

use crate::features::NormStats;
use crate::nn::checkpoint::{self, CheckpointManifest};
use crate::seernet::SeerNet;

use super::metrics::{MetricsReport, PredRow};
use super::{EpochRecord, TrainError, TrainOutput};

pub const CHECKPOINT_FILE: &str = "best.bin";
pub const NORM_STATS_FILE: &str = "norm_stats.json";
pub const HISTORY_FILE: &str = "history.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn io_err(e: std::io::Error) -> TrainError {
    TrainError::Io(e.to_string())
}

/// Writes best.bin (+ manifest), norm_stats.json, and history.json into the
/// run directory. Returns the checkpoint path.
pub fn save_run(dir: &Path, output: &TrainOutput) -> Result<PathBuf, TrainError> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let stats_json = output.stats.to_json_string();
    std::fs::write(dir.join(NORM_STATS_FILE), &stats_json).map_err(io_err)?;
    let stats_hash = checkpoint::sha256_hex(stats_json.as_bytes());

    let mut model_section = output.model.manifest_model();
    model_section["training"] = serde_json::json!({
        "config": output.config,
        "best_epoch": output.best_epoch,
        "best_val_loss": output.best_val_loss,
        "split_sizes": [
            output.split.train.len(),
            output.split.val.len(),
            output.split.test.len(),
        ],
    });

    let ckpt = dir.join(CHECKPOINT_FILE);
    checkpoint::save(
        &ckpt,
        &output.model.params,
        output.model.seed(),
        &stats_hash,
        model_section,
    )?;

    let history = serde_json::to_string_pretty(&output.history)
        .map_err(|e| TrainError::Parse(e.to_string()))?;
    std::fs::write(dir.join(HISTORY_FILE), history).map_err(io_err)?;
    Ok(ckpt)
}

/// Loads a fitted model plus its normalization stats from a checkpoint path.
/// The stats sidecar must live next to the checkpoint and hash-match the
/// manifest.
pub fn load_model(ckpt: &Path) -> Result<(SeerNet, NormStats, CheckpointManifest), TrainError> {
    let manifest = checkpoint::load_manifest(ckpt)?;
    let mut model = SeerNet::from_manifest_model(&manifest.model, manifest.seed)?;
    checkpoint::load_into(ckpt, &manifest, &mut model.params)?;
    model.mark_fitted();

    let stats_path = ckpt
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(NORM_STATS_FILE);
    let stats_json = std::fs::read_to_string(&stats_path).map_err(io_err)?;
    let hash = checkpoint::sha256_hex(stats_json.as_bytes());
    if hash != manifest.norm_stats_sha256 {
        return Err(TrainError::Parse(format!(
            "{} does not match the checkpoint manifest hash",
            stats_path.display()
        )));
    }
    let stats: NormStats =
        serde_json::from_str(&stats_json).map_err(|e| TrainError::Parse(e.to_string()))?;
    Ok((model, stats, manifest))
}

pub fn load_history(dir: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    let text = std::fs::read_to_string(dir.join(HISTORY_FILE)).map_err(io_err)?;
    serde_json::from_str(&text).map_err(|e| TrainError::Parse(e.to_string()))
}

pub fn save_report(path: &Path, report: &MetricsReport) -> Result<(), TrainError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| TrainError::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(io_err)
}

/// CSV dump with full-precision floats (`{}` formatting round-trips f64).
pub fn write_predictions_csv(path: &Path, rows: &[PredRow]) -> Result<(), TrainError> {
    let mut out = String::from("graph_id,target,y_true,y_pred\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.graph_id, r.target, r.y_true, r.y_pred
        ));
    }
    std::fs::write(path, out).map_err(io_err)
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredRow>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(TrainError::Parse(format!(
                "predictions line {}: expected 4 columns",
                lineno + 1
            )));
        }
        let num = |s: &str| -> Result<f64, TrainError> {
            s.parse()
                .map_err(|_| TrainError::Parse(format!("predictions line {}: bad number", lineno + 1)))
        };
        rows.push(PredRow {
            graph_id: parts[0].to_string(),
            target: parts[1].to_string(),
            y_true: num(parts[2])?,
            y_pred: num(parts[3])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::samples_from_labeled;
    use crate::features::Phase;
    use crate::synth::{gen_labeled, DatasetSpec, TARGET_TIME};
    use crate::trainer::{evaluate, metrics_from_rows, train, TrainConfig};

    #[test]
    fn run_roundtrip_restores_identical_model() {
        let graphs = gen_labeled(&DatasetSpec::mixed(4), 24).unwrap();
        let samples = samples_from_labeled(&graphs, &[Phase::Infer]).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 3,
            hidden: 8,
            head_hidden: 8,
            targets: vec![TARGET_TIME.to_string()],
            seed: 5,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &samples).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ckpt = save_run(dir.path(), &out).unwrap();
        let (model, stats, manifest) = load_model(&ckpt).unwrap();
        assert_eq!(model.params.flat(), out.model.params.flat());
        assert_eq!(stats, out.stats);
        assert_eq!(manifest.seed, 5);

        let history = load_history(dir.path()).unwrap();
        assert_eq!(history, out.history);

        // Reloaded model predicts identically.
        let (r1, rows1) = evaluate(&out.model, &samples, &out.stats).unwrap();
        let (r2, rows2) = evaluate(&model, &samples, &stats).unwrap();
        assert_eq!(rows1, rows2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn predictions_csv_recomputes_bit_identical_report() {
        let rows = vec![
            PredRow {
                graph_id: "g00000".into(),
                target: "time_s".into(),
                y_true: 0.0012345678901234567,
                y_pred: 0.0011999,
            },
            PredRow {
                graph_id: "g00001".into(),
                target: "time_s".into(),
                y_true: 3.725290298461914e-9,
                y_pred: 4.0e-9,
            },
            PredRow {
                graph_id: "g00000".into(),
                target: "mem_bytes".into(),
                y_true: 123456789.0,
                y_pred: 123000000.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PREDICTIONS_FILE);
        write_predictions_csv(&path, &rows).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        assert_eq!(rows, back);
        let a = metrics_from_rows(&rows).unwrap();
        let b = metrics_from_rows(&back).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}

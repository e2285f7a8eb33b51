//! Learnability probe: trains a model on a synthetic dataset and prints the
//! per-epoch validation trajectory plus held-out metrics. Development tool.

use std::time::Instant;

use perfseer_core::dataset::samples_from_labeled;
use perfseer_core::features::Phase;
use perfseer_core::synth::{gen_labeled, DatasetSpec, TARGET_TIME};
use perfseer_core::trainer::{evaluate, train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let hidden: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);

    let t0 = Instant::now();
    let spec = DatasetSpec::mixed(42);
    let graphs = gen_labeled(&spec, n).unwrap();
    let samples = samples_from_labeled(&graphs, &[Phase::Infer]).unwrap();
    let avg_nodes: f64 = samples.iter().map(|s| s.pg.num_nodes() as f64).sum::<f64>()
        / samples.len() as f64;
    println!(
        "dataset: {} samples, avg {:.1} nodes, gen+featurize {:.1}s",
        samples.len(),
        avg_nodes,
        t0.elapsed().as_secs_f64()
    );

    let cfg = TrainConfig {
        max_epochs: epochs,
        hidden,
        head_hidden: 256,
        targets: vec![TARGET_TIME.to_string()],
        seed: 42,
        early_stop_val_mape: Some(6.0),
        ..TrainConfig::default()
    };

    let t1 = Instant::now();
    let out = train(&cfg, &samples).unwrap();
    let train_secs = t1.elapsed().as_secs_f64();
    for r in out.history.iter() {
        if r.epoch % 5 == 0 || r.epoch <= 3 || r.epoch == out.history.len() {
            println!(
                "epoch {:3}  lr {:.2e}  train {:.5}  val {:.5}{}",
                r.epoch,
                r.lr,
                r.train_loss,
                r.val_loss,
                if r.improved { "  *" } else { "" }
            );
        }
    }
    println!(
        "trained {} epochs in {:.1}s ({:.2}s/epoch), best epoch {}",
        out.history.len(),
        train_secs,
        train_secs / out.history.len() as f64,
        out.best_epoch
    );

    let test: Vec<_> = out.split.test.iter().map(|&i| samples[i].clone()).collect();
    let (report, _) = evaluate(&out.model, &test, &out.stats).unwrap();
    println!(
        "test: MAPE {:.3}%  RMSPE {:.3}%  acc@5 {:.1}%  acc@10 {:.1}%  (n={})",
        report.mean_mape,
        report.mean_rmspe,
        report.mean_acc_at_5,
        report.mean_acc_at_10,
        report.sample_count
    );
}

//! Test accuracy as random edges are added to the training graph.

use oscgnn::graph::{make_splits, sbm, SbmConfig, Targets};
use oscgnn::models::ModelConfig;
use oscgnn::trainer::{robustness_sweep, write_robustness_csv, TrainConfig};

fn main() -> oscgnn::Result<()> {
    let bundle = sbm(&SbmConfig::default())?;
    let Targets::Classes { labels, num_classes } = &bundle.targets else {
        unreachable!()
    };
    let masks = make_splits(labels, *num_classes, 10, 20, 0)?;
    let cfg = TrainConfig {
        epochs: 60,
        patience: 0,
        ..TrainConfig::default()
    };
    let model = ModelConfig {
        layers: 4,
        ..ModelConfig::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = robustness_sweep(&model, &bundle, &masks, &cfg, &[0, 100, 300], 4, 0, jobs)?;
    write_robustness_csv(&rows, std::io::stdout())?;
    Ok(())
}

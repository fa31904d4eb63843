//! Accuracy against depth for every model family on the block model.

use oscgnn::graph::{make_splits, sbm, SbmConfig, Targets};
use oscgnn::models::{ModelConfig, ModelFamily};
use oscgnn::trainer::{depth_sweep, write_depth_csv, TrainConfig};

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
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for family in ModelFamily::ALL {
        let model = ModelConfig {
            family,
            ..ModelConfig::default()
        };
        println!("# {family}");
        let rows = depth_sweep(&model, &[2, 8, 32], &bundle, &masks, &cfg, jobs)?;
        write_depth_csv(&rows, std::io::stdout())?;
    }
    Ok(())
}

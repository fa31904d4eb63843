//! Trains a Stuart-Landau GCN on the block model and round-trips the checkpoint.

use oscgnn::graph::{make_splits, sbm, SbmConfig, Targets};
use oscgnn::models::{Model, ModelConfig, ModelInput};
use oscgnn::trainer::{run_experiment, TrainConfig};

fn main() -> oscgnn::Result<()> {
    let bundle = sbm(&SbmConfig::default())?;
    let Targets::Classes { labels, num_classes } = &bundle.targets else {
        unreachable!()
    };
    let masks = make_splits(labels, *num_classes, 10, 20, 0)?;
    let model_cfg = ModelConfig {
        layers: 4,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 150,
        patience: 50,
        ..TrainConfig::default()
    };
    let (model, report) = run_experiment(&model_cfg, &bundle, &masks, &train_cfg)?;
    println!(
        "epochs {}, best epoch {}, val {:.1}%, test {:.1}%",
        report.epochs_run, report.best_epoch, report.val_metric, report.test_metric
    );

    let dir = std::env::temp_dir().join("oscgnn-example-checkpoint");
    model.save(&dir)?;
    let restored = Model::load(&dir)?;
    let input = ModelInput::from_bundle(&bundle)?;
    let same = model.predict(&input)? == restored.predict(&input)?;
    println!("checkpoint at {} reloads identically: {same}", dir.display());
    Ok(())
}

//! Generates a two-block stochastic block model and its train/val/test split.

use oscgnn::graph::{make_splits, sbm, SbmConfig, Targets};

fn main() -> oscgnn::Result<()> {
    let bundle = sbm(&SbmConfig::default())?;
    let g = &bundle.graph;
    let Targets::Classes { labels, num_classes } = &bundle.targets else {
        unreachable!("block model targets are classes");
    };
    let (mut inside, mut across) = (0, 0);
    for (i, j) in g.edge_list() {
        if labels[i] == labels[j] {
            inside += 1;
        } else {
            across += 1;
        }
    }
    println!("{} nodes, {} edges ({inside} within blocks, {across} across)", g.n(), g.edge_count());
    let masks = make_splits(labels, *num_classes, 10, 20, 0)?;
    println!(
        "split: {} train, {} val, {} test",
        masks.train_idx().len(),
        masks.val_idx().len(),
        masks.test_idx().len()
    );
    Ok(())
}

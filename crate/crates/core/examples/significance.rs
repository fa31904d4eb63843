//! Welch-style t-score between two reported mean/std pairs.

use oscgnn::trainer::t_score;

fn main() -> oscgnn::Result<()> {
    for (mu1, s1, mu2, s2) in [(82.92, 1.39, 82.35, 1.61), (71.2, 0.8, 71.0, 1.2)] {
        let t = t_score(mu1, s1, mu2, s2, 100)?;
        println!(
            "{mu1}±{s1} vs {mu2}±{s2}: t = {:.3}, significant at {}: {}",
            t.t, t.threshold, t.significant
        );
    }
    Ok(())
}

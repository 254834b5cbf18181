//! Two confusion matrices with identical accuracy that the severity-aware
//! metrics tell apart.
//!
//! cargo run --example metrics_discrimination

use sevmil::hierarchy::Hierarchy;
use sevmil::metrics::{ConfusionMatrix, MetricReport, MetricSettings};

fn main() -> sevmil::Result<()> {
    let h = Hierarchy::single_chain(3);
    let settings = MetricSettings::default();
    // counts[true][pred]; both have 6 correct out of 8
    let mild = ConfusionMatrix::from_counts(0, vec![vec![2, 1, 0], vec![0, 2, 0], vec![0, 1, 2]])?;
    let severe =
        ConfusionMatrix::from_counts(0, vec![vec![2, 0, 0], vec![0, 2, 0], vec![2, 0, 2]])?;
    println!(
        "{:<8} {:>8} {:>8} {:>8} {:>7}",
        "matrix", "acc", "ascc", "asmc", "severe"
    );
    for (name, cm) in [("mild", &mild), ("severe", &severe)] {
        let r = MetricReport::from_confusion(cm, &h, &settings)?;
        let asmc = r
            .asmc
            .value()
            .map_or("inf".to_string(), |v| format!("{v:.4}"));
        println!(
            "{name:<8} {:>8.4} {:>8.4} {asmc:>8} {:>7}",
            r.accuracy, r.ascc, r.severe_error_count
        );
    }
    Ok(())
}

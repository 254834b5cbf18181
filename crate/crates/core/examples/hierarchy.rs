//! Builds a two-level hierarchy, checks it, and walks its structure.
//!
//! cargo run --example hierarchy

use sevmil::hierarchy::{Hierarchy, Level, PriorityMatrix};

fn main() -> sevmil::Result<()> {
    let h = Hierarchy::chains(&[2, 4], &[vec![0, 0, 1, 1]])?;
    for level in 0..h.num_levels() {
        println!("level {level}: {} classes", h.num_classes(level)?);
    }
    println!("labels for leaf 2: {:?}", h.labels_for(2)?);
    println!("leaves under coarse class 1: {:?}", h.leaves_under(0, 1)?);

    // predicting class 0 when the truth is class 3 is an under-diagnosis
    for (pred, truth) in [(0, 3), (3, 0), (1, 1)] {
        println!(
            "pred {pred} truth {truth}: severe = {}",
            h.is_severe(1, pred, truth)?
        );
    }

    let fine = [0.1, 0.2, 0.3, 0.4];
    println!(
        "aggregated {fine:?} -> {:?}",
        h.aggregate_to_parent(1, &fine)?
    );
    println!(
        "most urgent among [0, 2, 1]: {:?}",
        h.most_urgent(1, &[0, 2, 1])
    );

    // a partial order given by pairs, then closed transitively
    let p = PriorityMatrix::from_pairs(3, &[(2, 1), (1, 0)], &[])?.closure();
    println!(
        "after closure, 2 more urgent than 0: {}",
        p.is_more_urgent(2, 0)
    );

    // parents that do not respect the order are reported, not silently accepted
    let broken = Hierarchy::new_unchecked(vec![
        Level::unnamed(vec![], PriorityMatrix::chain(2)),
        Level::unnamed(vec![1, 0], PriorityMatrix::chain(2)),
    ]);
    let report = broken.validate();
    println!(
        "broken hierarchy: {}",
        if report.is_empty() {
            "ok".into()
        } else {
            report.to_string()
        }
    );
    Ok(())
}

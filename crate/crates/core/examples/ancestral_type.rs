//! Probability that the common ancestor carries the fit type, as a series
//! in the stationary tails of the pruned lookdown graph: without selection
//! or environment it collapses to h(x) = x, with them it dominates x.

use wfenv::recursion::{h_series, solve_fearnhead};
use wfenv::{LevyMeasure, ModelParams, SigmaTable};

fn main() -> wfenv::Result<()> {
    let k = 48;
    let neutral = ModelParams::new(0.0, 1.0, 0.5)?;
    let neutral_table = SigmaTable::build(&LevyMeasure::empty(), k as u64)?;
    let a0 = solve_fearnhead(&neutral, &neutral_table, k, 1e-10)?;
    println!(
        "neutral tails a_1..a_3: {:?}  (all zero, so h(x) = x)",
        &a0.values[1..4]
    );

    let p = ModelParams::new(1.0, 1.0, 0.5)?;
    let mu = LevyMeasure::new(vec![(0.5, 0.3)])?;
    let table = SigmaTable::build(&mu, k as u64)?;
    let a = solve_fearnhead(&p, &table, k, 1e-10)?;
    println!("\nsigma=1 plus environment, tails a_1..a_5:");
    for n in 1..=5usize {
        println!("  a_{n} = {:.8}", a.get(n));
    }
    println!("\n  x      h(x)     h(x)-x");
    for i in 1..10 {
        let x = i as f64 / 10.0;
        let h = h_series(&a, x)?;
        println!("  {x:.1}  {:.6}  {:+.6}", h.value, h.value - x);
    }
    Ok(())
}

//! Stationary moments of the annealed frequency process from the
//! truncated linear recursion: Beta moments fall out in the neutral case,
//! and selection plus environment tilt the distribution away from them.

use statrs::function::gamma::ln_gamma;
use wfenv::recursion::{simpson_index, solve_wn};
use wfenv::{LevyMeasure, ModelParams, SigmaTable};

/// n-th moment of 1 - X under Beta(theta nu0, theta nu1).
fn beta_moment(theta: f64, nu0: f64, n: u64) -> f64 {
    let a = theta * (1.0 - nu0);
    let s = theta;
    ((ln_gamma(a + n as f64) + ln_gamma(s)) - (ln_gamma(a) + ln_gamma(s + n as f64))).exp()
}

fn main() -> wfenv::Result<()> {
    let k = 32;
    let neutral_table = SigmaTable::build(&LevyMeasure::empty(), k as u64)?;

    let p0 = ModelParams::new(0.0, 1.5, 0.4)?;
    let w0 = solve_wn(&p0, &neutral_table, k, 1e-10)?;
    println!("neutral case vs Beta closed form (theta=1.5, nu0=0.4):");
    for n in 1..=4u64 {
        println!(
            "  w_{n} = {:.10}   Beta: {:.10}",
            w0.get(n as usize),
            beta_moment(1.5, 0.4, n)
        );
    }

    let mu = LevyMeasure::new(vec![(0.5, 0.3)])?;
    let table = SigmaTable::build(&mu, k as u64)?;
    let p1 = ModelParams::new(1.0, 1.5, 0.4)?;
    let w1 = solve_wn(&p1, &table, k, 1e-10)?;
    println!("\nwith selection sigma=1 and an environmental atom:");
    for n in 1..=4usize {
        println!("  w_{n} = {:.10}", w1.get(n));
    }
    println!(
        "\nmean frequency rises from {:.4} to {:.4}; Simpson index {:.4} -> {:.4}",
        1.0 - w0.get(1),
        1.0 - w1.get(1),
        simpson_index(&w0),
        simpson_index(&w1)
    );
    println!("recursion defects: {:.2e}, {:.2e}", w0.defect, w1.defect);
    Ok(())
}

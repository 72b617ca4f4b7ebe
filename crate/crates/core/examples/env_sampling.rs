//! Draw compound-Poisson environments from a finite atomic measure and
//! check the draw statistics against the measure, then split one draw into
//! its large- and small-jump parts.

use wfenv::model::env_sample;
use wfenv::rng::single_rng;
use wfenv::LevyMeasure;

fn main() -> wfenv::Result<()> {
    let mu = LevyMeasure::new(vec![(0.8, 0.25), (0.4, 0.05)])?;
    let horizon = 5.0;
    let mut rng = single_rng(1);

    let draws = 2000;
    let mut count = 0usize;
    for _ in 0..draws {
        count += env_sample(&mu, horizon, &mut rng)?.jumps.len();
    }
    let expected = mu.total_mass() * horizon;
    println!(
        "mean jump count over {draws} draws: {:.3} (measure says {expected:.3})",
        count as f64 / draws as f64
    );

    let omega = env_sample(&mu, horizon, &mut rng)?;
    println!("\none draw on [0, {horizon}]:");
    for j in &omega.jumps {
        println!("  t = {:.3}  dp = {}", j.t, j.dp);
    }
    let (big, small) = omega.split(0.1);
    println!(
        "split at delta = 0.1: {} large jumps (mass {:.2}), {} small (mass {:.2})",
        big.jumps.len(),
        big.total_increment(),
        small.jumps.len(),
        small.total_increment()
    );
    Ok(())
}

//! Siegmund duality between the pruned lookdown chain L and its
//! level-ordering dual D: P(L(t) >= d | L(0) = l) equals
//! P(D(t) <= l | D(0) = d), with explosion of D counted as "never below".

use wfenv::genealogy::{
    chain_run_annealed, chain_run_with_rates, rate_table, ChainKind, DAGGER, DEFAULT_STATE_CAP,
};
use wfenv::path::RunningMoments;
use wfenv::rng::{replicate_rng, STREAM_AUX, STREAM_BACKWARD};
use wfenv::{Error, LevyMeasure, ModelParams, SigmaTable};

fn main() -> wfenv::Result<()> {
    let p = ModelParams::new(0.5, 1.0, 0.5)?;
    let mu = LevyMeasure::new(vec![(0.5, 0.3)])?;
    let table = SigmaTable::build(&mu, 127)?;
    let rates = rate_table(ChainKind::Siegmund, 128, &p, &table)?;
    let t = 1.0;
    let reps = 20_000u64;

    println!("  l  d   P(L(t)>=d)      P(D(t)<=l)      z");
    for (l, d) in [(1u64, 2u64), (2, 2), (2, 3), (3, 2)] {
        let mut lhs = RunningMoments::new();
        for r in 0..reps {
            let mut rng = replicate_rng(31 + l, STREAM_BACKWARD, r);
            let path = chain_run_annealed(
                ChainKind::Pldasg, l, t, &p, &table, DEFAULT_STATE_CAP, &mut rng,
            )?;
            // D's rate table already carries the measure, and L's annealed
            // runner draws its own environmental events
            lhs.push(if path.last_value().unwrap() >= d as f64 { 1.0 } else { 0.0 });
        }
        let mut rhs = RunningMoments::new();
        for r in 0..reps {
            let mut rng = replicate_rng(41 + d, STREAM_AUX, r);
            let below = match chain_run_with_rates(&rates, d, t, &mut rng) {
                Ok(path) => {
                    let v = path.last_value().unwrap();
                    v != DAGGER && v <= l as f64
                }
                // cap hit: the dual exploded, so it is not below l
                Err(Error::StateCap { .. }) => false,
                Err(e) => return Err(e),
            };
            rhs.push(if below { 1.0 } else { 0.0 });
        }
        let z = (lhs.mean() - rhs.mean())
            / (lhs.stderr().powi(2) + rhs.stderr().powi(2)).sqrt();
        println!(
            "  {l}  {d}   {:.4} ({:.4})  {:.4} ({:.4})  {z:+.2}",
            lhs.mean(),
            lhs.stderr(),
            rhs.mean(),
            rhs.stderr()
        );
    }
    Ok(())
}

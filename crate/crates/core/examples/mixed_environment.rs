//! Moments seen by an observer who knows the recent environment exactly
//! and treats the deep past as stationary: a stationary-start vector is
//! pushed through the spectral propagator of the known window.

use wfenv::recursion::solve_wn;
use wfenv::spectral::{build_decomposition, mixed_env_moments, DecompKind};
use wfenv::{Environment, LevyMeasure, ModelParams, SigmaTable};

fn main() -> wfenv::Result<()> {
    let p = ModelParams::new(0.0, 1.0, 0.5)?;
    let mu = LevyMeasure::new(vec![(0.8, 0.3)])?;
    let table = SigmaTable::build(&mu, 64)?;
    let w = solve_wn(&p, &table, 64, 1e-10)?;
    println!("stationary moments (no window knowledge): w_1={:.6} w_2={:.6}", w.get(1), w.get(2));

    let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, 48)?;
    for (label, zeta) in [
        ("calm recent window (no jumps, length 0.5)", Environment::new(0.5, vec![])?),
        ("one recent jump of size 0.4", Environment::new(0.5, vec![(0.25, 0.4)])?),
        ("two recent jumps", Environment::new(0.5, vec![(0.1, 0.3), (0.4, 0.3)])?),
    ] {
        let m = mixed_env_moments(&d, &zeta, &w, 2, 1e-10)?;
        println!("{label}: E[(1-X)^1]={:.6} E[(1-X)^2]={:.6}", m[0], m[1]);
    }
    println!("\njumps push the fit type up, so the conditional moments of 1-X drop");
    Ok(())
}

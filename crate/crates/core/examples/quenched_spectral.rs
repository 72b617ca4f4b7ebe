//! Spectral machinery for the selection-free model: triangular
//! decomposition identities, quenched moments through a fixed jump
//! schedule, and their horizon-independent absorption limits.

use wfenv::spectral::{
    build_decomposition, quenched_moment_coeffs, quenched_moment_eval, quenched_wn, DecompKind,
};
use wfenv::Environment;

fn main() -> wfenv::Result<()> {
    let theta = 1.0;
    let nu0 = 0.5;
    let d = build_decomposition(DecompKind::Killed, theta, nu0, 64)?;
    let (uv, udv) = d.identity_residuals();
    println!("block 64 identity residuals: |UV - I| = {uv:.2e}, |UDV - Q| = {udv:.2e}");

    // jumps 0.4, 1.5 and 3 time units before the observation; a window of
    // depth T drops the older ones, and the error decays like e^{-theta nu0 T}
    let backward = [(0.4, 0.35), (1.5, 0.3), (3.0, 0.25)];
    let full = Environment::new(
        8.0,
        backward.iter().rev().map(|&(b, dp)| (8.0 - b, dp)).collect(),
    )?;
    let w = quenched_wn(&d, &full, 2, 1e-10)?;
    println!("\nC_n0 for truncated pasts against the full-past limit W_n:");
    for t in [1.0, 2.0, 4.0, 8.0] {
        let omega = Environment::new(
            t,
            backward
                .iter()
                .filter(|&&(b, _)| b < t)
                .rev()
                .map(|&(b, dp)| (t - b, dp))
                .collect(),
        )?;
        let c = quenched_moment_coeffs(&d, &omega, 2, 1e-10)?;
        let c10 = c.c[(d.idx(1), d.idx(0))];
        let c20 = c.c[(d.idx(2), d.idx(0))];
        println!(
            "  T={t}: C_10={c10:.8} (gap {:.1e})   C_20={c20:.8} (gap {:.1e})   bound {:.1e}",
            (c10 - w[0]).abs(),
            (c20 - w[1]).abs(),
            (-theta * nu0 * t).exp()
        );
    }
    println!("  limits: W_1={:.8} W_2={:.8}", w[0], w[1]);

    let omega = Environment::new(1.0, vec![(0.6, 0.35)])?;
    let c = quenched_moment_coeffs(&d, &omega, 2, 1e-10)?;
    println!("\nquenched moments at T=1 with one jump 0.4 before the observation:");
    for x in [0.2, 0.5, 0.8] {
        println!(
            "  x={x}: E[(1-X)^1] = {:.6}, E[(1-X)^2] = {:.6}",
            quenched_moment_eval(&c, &d, 1, x)?,
            quenched_moment_eval(&c, &d, 2, x)?
        );
    }
    Ok(())
}

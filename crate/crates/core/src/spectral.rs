//! Closed-form machinery for the selection-free (sigma = 0) regime: explicit
//! triangular diagonalizations Q = U D V of the killed and pruned line-count
//! generators, binomial jump matrices, time-ordered matrix products giving
//! quenched moments, quenched ancestral-type distributions, their T -> inf
//! limits, and the mixed-environment moment formula.
//!
//! Index layout. Killed kind: matrix index 0 is the cemetery, index j+1 is
//! chain state j (j = 0..=K). Pruned kind: index j-1 is chain state j
//! (j = 1..=K). All eigenvalues are stored as the positive decay rates
//! lambda, i.e. the generator eigenvalue is -lambda.
//!
//! U and V have entries spanning many orders of magnitude while UV, UDV and
//! the time-ordered products cancel back down to O(1), so everything here is
//! built and multiplied in double-double arithmetic; only the exported
//! matrices and scalars are rounded to f64.

use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::model::{KahanSum, Environment, Orientation};
use crate::recursion::MomentVector;

/// Dense row-major matrix of f64, the exported form of the internal
/// double-double computations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut s = KahanSum::new();
                for k in 0..self.cols {
                    let a = self[(i, k)];
                    if a != 0.0 {
                        s.add(a * other[(k, j)]);
                    }
                }
                out[(i, j)] = s.value();
            }
        }
        out
    }

    /// Multiplies by diag(d) on the right (scales columns).
    pub fn scale_cols(&self, d: &[f64]) -> Mat {
        assert_eq!(self.cols, d.len());
        let mut out = self.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                out[(i, j)] *= d[j];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense row-major double-double matrix, used for every internal product.
#[derive(Debug, Clone)]
struct DMat {
    rows: usize,
    cols: usize,
    data: Vec<Dd>,
}

impl DMat {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Dd::ZERO; rows * cols],
        }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.cols + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.data[i * self.cols + j] = v;
    }

    fn mul(&self, other: &DMat) -> DMat {
        assert_eq!(self.cols, other.rows);
        let mut out = DMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.hi == 0.0 && a.lo == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.hi != 0.0 || b.lo != 0.0 {
                        out.set(i, j, out.get(i, j).add(a.mul(b)));
                    }
                }
            }
        }
        out
    }

    fn scale_cols(&self, d: &[Dd]) -> DMat {
        assert_eq!(self.cols, d.len());
        let mut out = self.clone();
        for i in 0..out.rows {
            for j in 0..out.cols {
                out.set(i, j, out.get(i, j).mul(d[j]));
            }
        }
        out
    }

    fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).to_f64();
            }
        }
        m
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompKind {
    Killed,
    Pldasg,
}

/// Triangular spectral decomposition Q = U D V of the no-environment,
/// no-selection generator, truncated to states <= k_dim.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub kind: DecompKind,
    pub theta: f64,
    pub nu0: f64,
    pub k_dim: usize,
    /// Decay rates per matrix index; generator eigenvalue is -lambda.
    pub lambda: Vec<f64>,
    pub u: Mat,
    pub v: Mat,
    ud: DMat,
    vd: DMat,
    lambda_d: Vec<Dd>,
}

fn finite_or_overflow(x: Dd, what: &str) -> Result<Dd> {
    if x.hi.is_finite() {
        Ok(x)
    } else {
        Err(Error::Truncation(format!(
            "{what} overflowed f64; reduce k_dim or theta"
        )))
    }
}

/// Builds the decomposition for the given kind. The killed kind needs
/// theta > 0 (its two zero eigenvalues are handled by the explicit cemetery
/// column formulas, but theta = 0 would collide state 1 with state 0).
pub fn build_decomposition(
    kind: DecompKind,
    theta: f64,
    nu0: f64,
    k_dim: usize,
) -> Result<SpectralDecomposition> {
    if !(0.0..=1.0).contains(&nu0) {
        return Err(Error::Domain(format!("nu0 must be in [0,1], got {nu0}")));
    }
    if k_dim < 1 {
        return Err(Error::Domain("k_dim must be >= 1".into()));
    }
    let td = Dd::from_f64(theta);
    let tn0 = td.mul(Dd::from_f64(nu0));
    let tn1 = td.mul(Dd::from_f64(1.0 - nu0));
    match kind {
        DecompKind::Killed => {
            if !(theta > 0.0) || nu0 <= 0.0 || nu0 >= 1.0 {
                return Err(Error::Domain(
                    "killed decomposition needs theta > 0 and nu0 in (0,1): \
                     the spectrum degenerates otherwise"
                        .into(),
                ));
            }
            let dim = k_dim + 2;
            // lam(j) = j (j - 1 + theta), gam(j) = j (j - 1 + theta nu1)
            let lam = |j: usize| Dd::from_f64(j as f64).mul(Dd::from_f64(j as f64 - 1.0).add(td));
            let gam = |j: usize| Dd::from_f64(j as f64).mul(Dd::from_f64(j as f64 - 1.0).add(tn1));
            let mut lambda_d = vec![Dd::ZERO; dim];
            for j in 0..=k_dim {
                lambda_d[j + 1] = lam(j);
            }
            let mut u = DMat::zeros(dim, dim);
            let mut v = DMat::zeros(dim, dim);
            u.set(0, 0, Dd::ONE);
            v.set(0, 0, Dd::ONE);
            // dagger column of U via the running sum
            // s_i = (gamma_i/lambda_i) s_{i-1} + 1/(i-1+theta)
            let mut s = Dd::ZERO;
            for i in 0..=k_dim {
                if i >= 1 {
                    s = gam(i)
                        .div(lam(i))
                        .mul(s)
                        .add(Dd::ONE.div(Dd::from_f64(i as f64 - 1.0).add(td)));
                }
                u.set(i + 1, 0, finite_or_overflow(tn0.mul(s), "u dagger column")?);
                u.set(i + 1, i + 1, Dd::ONE);
                // u_{i,j} = prod_{l=j+1}^{i} gamma_l / (lambda_l - lambda_j)
                for j in (0..i).rev() {
                    let mut p = Dd::ONE;
                    for l in (j + 1)..=i {
                        p = p.mul(gam(l).div(lam(l).sub(lam(j))));
                    }
                    u.set(i + 1, j + 1, finite_or_overflow(p, "u entry")?);
                }
                // v_{i,j} = prod_{l=j}^{i-1} (-gamma_{l+1}) / (lambda_i - lambda_l)
                v.set(i + 1, i + 1, Dd::ONE);
                for j in (0..i).rev() {
                    let mut p = Dd::ONE;
                    for l in j..i {
                        p = p.mul(gam(l + 1).neg().div(lam(i).sub(lam(l))));
                    }
                    v.set(i + 1, j + 1, finite_or_overflow(p, "v entry")?);
                }
                if i >= 1 {
                    let mut acc = Dd::ZERO;
                    for k in 1..=i {
                        acc = acc.add(Dd::from_f64(k as f64).mul(v.get(i + 1, k + 1)));
                    }
                    let val = tn0.neg().div(lam(i)).mul(acc);
                    v.set(i + 1, 0, finite_or_overflow(val, "v dagger column")?);
                }
            }
            let lambda = lambda_d.iter().map(|l| l.to_f64()).collect();
            Ok(SpectralDecomposition {
                kind,
                theta,
                nu0,
                k_dim,
                lambda,
                u: u.to_mat(),
                v: v.to_mat(),
                ud: u,
                vd: v,
                lambda_d,
            })
        }
        DecompKind::Pldasg => {
            if theta < 0.0 {
                return Err(Error::Domain("theta must be >= 0".into()));
            }
            let dim = k_dim;
            // lam(j) = (j - 1)(j + theta),
            // gam(j) = j (j - 1) + (j - 1) theta nu1 + theta nu0
            let lam = |j: usize| Dd::from_f64(j as f64 - 1.0).mul(Dd::from_f64(j as f64).add(td));
            let gam = |j: usize| {
                Dd::from_f64(j as f64 * (j as f64 - 1.0))
                    .add(Dd::from_f64(j as f64 - 1.0).mul(tn1))
                    .add(tn0)
            };
            let mut lambda_d = vec![Dd::ZERO; dim];
            for j in 1..=k_dim {
                lambda_d[j - 1] = lam(j);
            }
            let mut u = DMat::zeros(dim, dim);
            let mut v = DMat::zeros(dim, dim);
            // u rows by the forward recurrence; colsum_j = sum_{l=j}^{i-2} u_{l,j}
            let mut colsum = vec![Dd::ZERO; dim];
            for i in 1..=k_dim {
                if i >= 2 {
                    let r = i - 2;
                    if r >= 1 {
                        for j in 1..=r {
                            colsum[j - 1] = colsum[j - 1].add(u.get(r - 1, j - 1));
                        }
                    }
                }
                u.set(i - 1, i - 1, Dd::ONE);
                for j in 1..i {
                    let val = gam(i)
                        .mul(u.get(i - 2, j - 1))
                        .add(tn0.mul(colsum[j - 1]))
                        .div(lam(i).sub(lam(j)));
                    u.set(i - 1, j - 1, finite_or_overflow(val, "u entry")?);
                }
                // v row backward: v_{i,j} = -[theta nu0 sum_{l=j+2}^i v_{i,l}
                //                            + gamma_{j+1} v_{i,j+1}] / (lambda_i - lambda_j)
                v.set(i - 1, i - 1, Dd::ONE);
                let mut tail = Dd::ZERO;
                for j in (1..i).rev() {
                    if j + 2 <= i {
                        tail = tail.add(v.get(i - 1, j + 1));
                    }
                    let val = tn0
                        .mul(tail)
                        .add(gam(j + 1).mul(v.get(i - 1, j)))
                        .neg()
                        .div(lam(i).sub(lam(j)));
                    v.set(i - 1, j - 1, finite_or_overflow(val, "v entry")?);
                }
            }
            let lambda = lambda_d.iter().map(|l| l.to_f64()).collect();
            Ok(SpectralDecomposition {
                kind,
                theta,
                nu0,
                k_dim,
                lambda,
                u: u.to_mat(),
                v: v.to_mat(),
                ud: u,
                vd: v,
                lambda_d,
            })
        }
    }
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        match self.kind {
            DecompKind::Killed => self.k_dim + 2,
            DecompKind::Pldasg => self.k_dim,
        }
    }

    /// Matrix index of chain state j.
    pub fn idx(&self, state: usize) -> usize {
        match self.kind {
            DecompKind::Killed => state + 1,
            DecompKind::Pldasg => {
                debug_assert!(state >= 1);
                state - 1
            }
        }
    }

    /// Smallest chain state represented.
    pub fn min_state(&self) -> usize {
        match self.kind {
            DecompKind::Killed => 0,
            DecompKind::Pldasg => 1,
        }
    }

    /// diag(e^{-lambda s}) as a vector.
    pub fn exp_d(&self, s: f64) -> Vec<f64> {
        debug_assert!(s >= 0.0);
        self.lambda.iter().map(|&l| (-l * s).exp()).collect()
    }

    fn exp_dd(&self, s: f64) -> Vec<Dd> {
        self.exp_d(s).into_iter().map(Dd::from_f64).collect()
    }

    /// The truncated no-environment generator (exact on the block: without
    /// selection or environment no transition leaves it upward).
    pub fn rate_matrix(&self) -> Mat {
        self.rate_dmat().to_mat()
    }

    fn rate_dmat(&self) -> DMat {
        let dim = self.dim();
        let mut q = DMat::zeros(dim, dim);
        let td = Dd::from_f64(self.theta);
        let tn0 = td.mul(Dd::from_f64(self.nu0));
        let tn1 = td.mul(Dd::from_f64(1.0 - self.nu0));
        match self.kind {
            DecompKind::Killed => {
                for i in 1..=self.k_dim {
                    let fi = Dd::from_f64(i as f64);
                    let down = fi.mul(Dd::from_f64(i as f64 - 1.0)).add(fi.mul(tn1));
                    q.set(self.idx(i), self.idx(i - 1), down);
                    q.set(self.idx(i), 0, fi.mul(tn0));
                    q.set(self.idx(i), self.idx(i), self.lambda_d[self.idx(i)].neg());
                }
            }
            DecompKind::Pldasg => {
                for i in 2..=self.k_dim {
                    let fi = i as f64;
                    let down = Dd::from_f64(fi * (fi - 1.0))
                        .add(Dd::from_f64(fi - 1.0).mul(tn1))
                        .add(tn0);
                    q.set(self.idx(i), self.idx(i - 1), down);
                    for j in 1..i.saturating_sub(1) {
                        q.set(self.idx(i), self.idx(j), tn0);
                    }
                    q.set(self.idx(i), self.idx(i), self.lambda_d[self.idx(i)].neg());
                }
            }
        }
        q
    }

    /// (max|UV - I|, max|VU - I|), with the products taken in extended
    /// precision so the result reflects the decomposition, not roundoff.
    pub fn identity_residuals(&self) -> (f64, f64) {
        let id = Mat::identity(self.dim());
        let uv = self.ud.mul(&self.vd).to_mat();
        let vu = self.vd.mul(&self.ud).to_mat();
        (uv.max_abs_diff(&id), vu.max_abs_diff(&id))
    }

    /// max|U D V - Q| with the product taken in extended precision.
    pub fn generator_residual(&self) -> f64 {
        let neg_lambda: Vec<Dd> = self.lambda_d.iter().map(|l| l.neg()).collect();
        let udv = self.ud.scale_cols(&neg_lambda).mul(&self.vd);
        udv.to_mat().max_abs_diff(&self.rate_matrix())
    }

    /// Binomial reweighting matrix: entry (i, j) is P(i + Bin(i, z) = j),
    /// with identity rows at the cemetery and at state 0. Columns beyond the
    /// truncated block are dropped.
    pub fn binomial_matrix(&self, z: f64) -> Result<Mat> {
        Ok(self.binomial_dmat(z)?.to_mat())
    }

    fn binomial_dmat(&self, z: f64) -> Result<DMat> {
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::Domain(format!("z must be in (0,1), got {z}")));
        }
        let dim = self.dim();
        let mut b = DMat::zeros(dim, dim);
        if self.kind == DecompKind::Killed {
            b.set(0, 0, Dd::ONE);
        }
        let zd = Dd::from_f64(z);
        let qd = Dd::ONE.sub(zd);
        let ratio = zd.div(qd);
        for i in self.min_state()..=self.k_dim {
            // pmf recurrence: p_0 = (1-z)^i, p_{k+1} = p_k (i-k)/(k+1) z/(1-z)
            let mut p = Dd::ONE;
            for _ in 0..i {
                p = p.mul(qd);
            }
            for j in i..=(2 * i).min(self.k_dim) {
                b.set(self.idx(i), self.idx(j), p);
                let k = j - i;
                p = p
                    .mul(ratio)
                    .mul(Dd::from_f64((i - k) as f64).div(Dd::from_f64(k as f64 + 1.0)));
            }
        }
        Ok(b)
    }

    fn p_poly_dd(&self, k: usize, y: Dd) -> Dd {
        let mut s = Dd::ZERO;
        let mut pow = if self.min_state() == 0 { Dd::ONE } else { y };
        for i in self.min_state()..=k {
            s = s.add(self.vd.get(self.idx(k), self.idx(i)).mul(pow));
            pow = pow.mul(y);
        }
        s
    }

    /// P_k(y): the k-th eigen-polynomial, sum_i v_{k,i} y^i over the chain
    /// states i (starting at 0 for the killed kind, 1 for the pruned kind).
    pub fn p_poly(&self, k: usize, y: f64) -> f64 {
        self.p_poly_dd(k, Dd::from_f64(y)).to_f64()
    }

    /// sum_k u_{n,k} P_k(y); equals y^n exactly in the untruncated calculus.
    pub fn moment_basis_eval(&self, n: usize, y: f64) -> f64 {
        let yd = Dd::from_f64(y);
        let mut s = Dd::ZERO;
        for k in self.min_state()..=self.k_dim {
            let unk = self.ud.get(self.idx(n), self.idx(k));
            if unk.hi != 0.0 || unk.lo != 0.0 {
                s = s.add(unk.mul(self.p_poly_dd(k, yd)));
            }
        }
        s.to_f64()
    }
}

/// Coefficient matrix of a quenched computation, plus provenance and the
/// truncation certificate (0 when the exact support fits in the block).
#[derive(Debug, Clone)]
pub struct QuenchedCoefficients {
    pub c: Mat,
    pub n_max: u64,
    pub horizon: f64,
    pub jumps: Vec<(f64, f64)>,
    pub k_dim: usize,
    pub truncation_bound: f64,
}

/// Log of the dominating bound 4^k (2ek)^{(k+theta)/2} e^{-lambda_k g} on a
/// dropped coefficient at index k, with g the decay gap available to it.
fn ln_truncation_bound(k: f64, theta: f64, lambda_k: f64, gap: f64) -> f64 {
    k * 4.0f64.ln() + 0.5 * (k + theta) * (2.0 * std::f64::consts::E * k).ln() - lambda_k * gap
}

fn check_truncation(
    decomp: &SpectralDecomposition,
    n_max: u64,
    n_jumps: usize,
    gap: f64,
    tol: f64,
) -> Result<f64> {
    let support = (n_max as f64) * 2.0f64.powi(n_jumps as i32);
    if support <= decomp.k_dim as f64 {
        return Ok(0.0);
    }
    let k = decomp.k_dim as f64 + 1.0;
    let lambda_k = match decomp.kind {
        DecompKind::Killed => k * (k - 1.0 + decomp.theta),
        DecompKind::Pldasg => (k - 1.0) * (k + decomp.theta),
    };
    let ln_b = ln_truncation_bound(k, decomp.theta, lambda_k, gap);
    let bound = ln_b.exp();
    if bound > tol {
        return Err(Error::Truncation(format!(
            "support {support} exceeds block {} and the dropped-coefficient bound \
             {bound:.3e} exceeds tol {tol:.1e}; raise k_dim or tol",
            decomp.k_dim
        )));
    }
    Ok(bound)
}

fn require_forward(env: &Environment) -> Result<()> {
    env.validate()?;
    if env.orientation != Orientation::Forward {
        return Err(Error::Domain(
            "spectral routines take forward environments and reorder internally".into(),
        ));
    }
    Ok(())
}

/// beta(z)^T = V B(z) U, the jump action in the eigenbasis (transposed).
fn beta_t(decomp: &SpectralDecomposition, z: f64) -> Result<DMat> {
    Ok(decomp.vd.mul(&decomp.binomial_dmat(z)?).mul(&decomp.ud))
}

/// Time-ordered product U [exp beta]... exp for the moment expansion; the
/// trailing factor covers the stretch down to forward time 0.
fn moment_product(decomp: &SpectralDecomposition, omega: &Environment) -> Result<DMat> {
    let mut m = decomp.ud.clone();
    let mut later = omega.horizon;
    for j in omega.jumps.iter().rev() {
        m = m
            .scale_cols(&decomp.exp_dd(later - j.t))
            .mul(&beta_t(decomp, j.dp)?);
        later = j.t;
    }
    Ok(m.scale_cols(&decomp.exp_dd(later)))
}

/// Coefficients C(omega, T) of the quenched moment expansion. `omega` is a
/// forward environment on [0, T] standing for the window (-T, 0]: a jump at
/// forward time T acts at the observation time, one at forward time 0 right
/// after the initial condition.
pub fn quenched_moment_coeffs(
    decomp: &SpectralDecomposition,
    omega: &Environment,
    n_max: u64,
    tol: f64,
) -> Result<QuenchedCoefficients> {
    if decomp.kind != DecompKind::Killed {
        return Err(Error::Domain("moment coefficients need the killed kind".into()));
    }
    require_forward(omega)?;
    let t_total = omega.horizon;
    // decay gap available to every retained product: time from -T to the
    // earliest jump
    let gap = omega.jumps.first().map_or(t_total, |j| j.t);
    let bound = check_truncation(decomp, n_max, omega.jumps.len(), gap, tol)?;
    let m = moment_product(decomp, omega)?;
    Ok(QuenchedCoefficients {
        c: m.to_mat(),
        n_max,
        horizon: t_total,
        jumps: omega.jumps.iter().map(|j| (j.t, j.dp)).collect(),
        k_dim: decomp.k_dim,
        truncation_bound: bound,
    })
}

/// E^omega[(1-X(0))^n | X(-T) = x] from precomputed coefficients.
pub fn quenched_moment_eval(
    coeffs: &QuenchedCoefficients,
    decomp: &SpectralDecomposition,
    n: u64,
    x: f64,
) -> Result<f64> {
    if decomp.kind != DecompKind::Killed {
        return Err(Error::Domain("moment evaluation needs the killed kind".into()));
    }
    if n > coeffs.n_max {
        return Err(Error::Domain(format!("n = {n} exceeds n_max = {}", coeffs.n_max)));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x must be in [0,1], got {x}")));
    }
    let y = Dd::from_f64(1.0 - x);
    let row = coeffs.c.row(decomp.idx(n as usize));
    let mut s = Dd::ZERO;
    for k in 0..=decomp.k_dim {
        let c = row[decomp.idx(k)];
        if c != 0.0 {
            s = s.add(Dd::from_f64(c).mul(decomp.p_poly_dd(k, y)));
        }
    }
    Ok(s.to_f64())
}

/// Exact T -> infinity absorption limits W_n(omega) for n = 1..=n_max. The
/// forward environment's jumps are all the jumps of the past; the trailing
/// exponential drops because the absorbing state has decay rate zero.
pub fn quenched_wn(
    decomp: &SpectralDecomposition,
    omega: &Environment,
    n_max: u64,
    tol: f64,
) -> Result<Vec<f64>> {
    if decomp.kind != DecompKind::Killed {
        return Err(Error::Domain("absorption limits need the killed kind".into()));
    }
    require_forward(omega)?;
    let gap = omega.jumps.first().map_or(omega.horizon, |j| j.t);
    check_truncation(decomp, n_max, omega.jumps.len(), gap, tol)?;
    let mut m = decomp.ud.clone();
    let mut later = omega.horizon;
    for j in omega.jumps.iter().rev() {
        m = m
            .scale_cols(&decomp.exp_dd(later - j.t))
            .mul(&beta_t(decomp, j.dp)?);
        later = j.t;
    }
    Ok((1..=n_max)
        .map(|n| m.get(decomp.idx(n as usize), decomp.idx(0)).to_f64())
        .collect())
}

/// Coefficients C(omega, T) of the quenched ancestral-type expansion for
/// the pruned kind; `omega` is forward on [0, T].
pub fn quenched_ancestral_coeffs(
    decomp: &SpectralDecomposition,
    omega: &Environment,
    tol: f64,
) -> Result<QuenchedCoefficients> {
    if decomp.kind != DecompKind::Pldasg {
        return Err(Error::Domain("ancestral coefficients need the pruned kind".into()));
    }
    require_forward(omega)?;
    let gap = omega.jumps.first().map_or(omega.horizon, |j| j.t);
    let bound = check_truncation(decomp, 1, omega.jumps.len(), gap, tol)?;
    let last = omega.jumps.last().map_or(0.0, |j| j.t);
    let mut m = decomp.ud.scale_cols(&decomp.exp_dd(omega.horizon - last));
    for (i, j) in omega.jumps.iter().enumerate().rev() {
        let prev = if i == 0 { 0.0 } else { omega.jumps[i - 1].t };
        m = m
            .mul(&beta_t(decomp, j.dp)?)
            .scale_cols(&decomp.exp_dd(j.t - prev));
    }
    Ok(QuenchedCoefficients {
        c: m.to_mat(),
        n_max: 1,
        horizon: omega.horizon,
        jumps: omega.jumps.iter().map(|j| (j.t, j.dp)).collect(),
        k_dim: decomp.k_dim,
        truncation_bound: bound,
    })
}

/// The T -> infinity limit coefficients C_{1,k}(omega, inf): the first row
/// of the jump product alone, exact once T passes the last jump.
pub fn quenched_ancestral_limit(
    decomp: &SpectralDecomposition,
    omega: &Environment,
    tol: f64,
) -> Result<Vec<f64>> {
    if decomp.kind != DecompKind::Pldasg {
        return Err(Error::Domain("ancestral limits need the pruned kind".into()));
    }
    require_forward(omega)?;
    let gap = omega.jumps.first().map_or(omega.horizon, |j| j.t);
    check_truncation(decomp, 1, omega.jumps.len(), gap, tol)?;
    let mut m = decomp.ud.clone();
    let mut prev_end: Option<f64> = None;
    for j in omega.jumps.iter().rev() {
        if let Some(end) = prev_end {
            m = m.scale_cols(&decomp.exp_dd(end - j.t));
        }
        m = m.mul(&beta_t(decomp, j.dp)?);
        prev_end = Some(j.t);
    }
    if let Some(end) = prev_end {
        m = m.scale_cols(&decomp.exp_dd(end));
    }
    let row_idx = decomp.idx(1);
    Ok((0..decomp.dim()).map(|j| m.get(row_idx, j).to_f64()).collect())
}

/// h^omega_T(x) = 1 - sum_k C_{1,k} P_k(1-x) from ancestral coefficients
/// (either the finite-T matrix row or a precomputed limit row).
pub fn ancestral_eval_row(decomp: &SpectralDecomposition, row: &[f64], x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x must be in [0,1], got {x}")));
    }
    let y = Dd::from_f64(1.0 - x);
    let mut s = Dd::ZERO;
    for k in 1..=decomp.k_dim {
        let c = row[decomp.idx(k)];
        if c != 0.0 {
            s = s.add(Dd::from_f64(c).mul(decomp.p_poly_dd(k, y)));
        }
    }
    Ok(1.0 - s.to_f64())
}

pub fn ancestral_eval(
    coeffs: &QuenchedCoefficients,
    decomp: &SpectralDecomposition,
    x: f64,
) -> Result<f64> {
    ancestral_eval_row(decomp, coeffs.c.row(decomp.idx(1)), x)
}

/// Moments under a mixed environment: stationary annealed past, then the
/// fixed recent window `zeta` (forward on [0, T] standing for [-T, 0]).
/// `w` must be the stationary moment vector of the annealed past.
pub fn mixed_env_moments(
    decomp: &SpectralDecomposition,
    zeta: &Environment,
    w: &MomentVector,
    n_max: u64,
    tol: f64,
) -> Result<Vec<f64>> {
    if decomp.kind != DecompKind::Killed {
        return Err(Error::Domain("mixed-environment moments need the killed kind".into()));
    }
    require_forward(zeta)?;
    let gap = zeta.jumps.first().map_or(zeta.horizon, |j| j.t);
    check_truncation(decomp, n_max, zeta.jumps.len(), gap, tol)?;
    let c = moment_product(decomp, zeta)?;
    let g = c.mul(&decomp.vd);
    let mut out = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let row = decomp.idx(n as usize);
        let mut s = Dd::ZERO;
        for j in 0..=decomp.k_dim {
            let gj = g.get(row, decomp.idx(j));
            if gj.hi != 0.0 || gj.lo != 0.0 {
                s = s.add(gj.mul(Dd::from_f64(w.get(j))));
            }
        }
        out.push(s.to_f64());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn killed_u_entries_match_hand_values() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 8).unwrap();
        // u_{1,0} = gamma_1 / lambda_1 = theta nu1 / theta = 0.5
        assert_relative_eq!(d.u[(d.idx(1), d.idx(0))], 0.5, epsilon = 1e-14);
        for theta in [0.3, 1.0, 3.0] {
            let d = build_decomposition(DecompKind::Killed, theta, 0.4, 8).unwrap();
            let nu1 = 0.6;
            let expect = nu1 * (1.0 + theta * nu1) / (1.0 + theta);
            assert_relative_eq!(d.u[(d.idx(2), d.idx(0))], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn uv_and_vu_are_identity() {
        for theta in [0.3, 1.0, 3.0] {
            for kind in [DecompKind::Killed, DecompKind::Pldasg] {
                let d = build_decomposition(kind, theta, 0.35, 40).unwrap();
                let (uv, vu) = d.identity_residuals();
                assert!(uv < 1e-8, "{kind:?} theta={theta}: |UV - I| = {uv:.3e}");
                assert!(vu < 1e-8, "{kind:?} theta={theta}: |VU - I| = {vu:.3e}");
            }
        }
    }

    #[test]
    fn udv_reconstructs_generator() {
        for kind in [DecompKind::Killed, DecompKind::Pldasg] {
            let d = build_decomposition(kind, 1.3, 0.45, 40).unwrap();
            let r = d.generator_residual();
            assert!(r < 1e-8, "{kind:?}: |UDV - Q| = {r:.3e}");
        }
    }

    #[test]
    fn killed_rejects_theta_zero() {
        assert!(build_decomposition(DecompKind::Killed, 0.0, 0.5, 8).is_err());
        assert!(build_decomposition(DecompKind::Pldasg, 0.0, 0.5, 8).is_ok());
    }

    #[test]
    fn binomial_matrix_rows() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 10).unwrap();
        let b = d.binomial_matrix(0.5).unwrap();
        assert_relative_eq!(b[(d.idx(2), d.idx(2))], 0.25, epsilon = 1e-12);
        assert_relative_eq!(b[(d.idx(2), d.idx(3))], 0.5, epsilon = 1e-12);
        assert_relative_eq!(b[(d.idx(2), d.idx(4))], 0.25, epsilon = 1e-12);
        for z in [0.1, 0.5, 0.9] {
            let b = d.binomial_matrix(z).unwrap();
            for i in 0..=5usize {
                let sum: f64 = (i..=2 * i).map(|j| b[(d.idx(i), d.idx(j))]).sum();
                assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
                assert_relative_eq!(b[(d.idx(i), d.idx(i))], (1.0 - z).powi(i as i32), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn no_jump_coefficients_are_u_exp() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 12).unwrap();
        let env = Environment::empty(2.0);
        let c = quenched_moment_coeffs(&d, &env, 3, 1e-8).unwrap();
        let direct = d.u.clone().scale_cols(&d.exp_d(2.0));
        assert!(c.c.max_abs_diff(&direct) < 1e-12);
        assert_eq!(c.truncation_bound, 0.0);
    }

    #[test]
    fn moment_eval_constants() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 12).unwrap();
        let env = Environment::new(2.0, vec![(1.0, 0.5)]).unwrap();
        let c = quenched_moment_coeffs(&d, &env, 2, 1e-8).unwrap();
        assert_relative_eq!(quenched_moment_eval(&c, &d, 0, 0.3).unwrap(), 1.0, epsilon = 1e-10);
        let m1 = quenched_moment_eval(&c, &d, 1, 0.3).unwrap();
        assert!((0.0..=1.0).contains(&m1), "moment {m1} outside [0,1]");
    }

    #[test]
    fn null_environment_long_horizon_reaches_stationary_moments() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 16).unwrap();
        let env = Environment::empty(40.0);
        let c = quenched_moment_coeffs(&d, &env, 2, 1e-8).unwrap();
        // x-independence and the Beta(theta nu0, theta nu1) moments
        let at_02 = quenched_moment_eval(&c, &d, 1, 0.2).unwrap();
        let at_08 = quenched_moment_eval(&c, &d, 1, 0.8).unwrap();
        assert!((at_02 - at_08).abs() < 1e-12);
        assert_relative_eq!(at_02, 0.5, epsilon = 1e-10);
        let wn = quenched_wn(&d, &Environment::empty(1.0), 2, 1e-8).unwrap();
        assert_relative_eq!(wn[0], d.u[(d.idx(1), d.idx(0))], epsilon = 1e-14);
        assert_relative_eq!(wn[1], d.u[(d.idx(2), d.idx(0))], epsilon = 1e-14);
    }

    #[test]
    fn ancestral_trivial_regime_gives_identity() {
        // no jumps: h_T(x) for the pruned chain from one line with no upward
        // rates is x + (1-x) * P(absorption-type ...) = x in the stationary
        // limit; at finite T with theta > 0 it still equals x because L = 1
        // forever when there are no upward rates
        let d = build_decomposition(DecompKind::Pldasg, 0.8, 0.5, 12).unwrap();
        let env = Environment::empty(3.0);
        let c = quenched_ancestral_coeffs(&d, &env, 1e-8).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert_relative_eq!(ancestral_eval(&c, &d, x).unwrap(), x, epsilon = 1e-10);
        }
        let lim = quenched_ancestral_limit(&d, &env, 1e-8).unwrap();
        for i in 0..=10 {
            let x = i as f64 / 10.0;
            assert_relative_eq!(ancestral_eval_row(&d, &lim, x).unwrap(), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn ancestral_boundary_x_one() {
        let d = build_decomposition(DecompKind::Pldasg, 1.0, 0.5, 16).unwrap();
        let env = Environment::new(2.0, vec![(0.7, 0.4), (1.5, 0.2)]).unwrap();
        let c = quenched_ancestral_coeffs(&d, &env, 1e-8).unwrap();
        assert_relative_eq!(ancestral_eval(&c, &d, 1.0).unwrap(), 1.0, epsilon = 1e-8);
        assert_relative_eq!(ancestral_eval(&c, &d, 0.0).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn mixed_env_empty_window_returns_wn() {
        use crate::model::{LevyMeasure, SigmaTable};
        use crate::recursion::solve_wn;
        let params = crate::model::ModelParams::new(0.0, 1.0, 0.5).unwrap();
        let mu = LevyMeasure::empty();
        let table = SigmaTable::build(&mu, 4).unwrap();
        let w = solve_wn(&params, &table, 8, 1e-12).unwrap();
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 16).unwrap();
        // T = 0 is not a valid environment horizon; use a tiny window, which
        // perturbs the stationary law by at most 1 - e^{-lambda t} = O(t)
        let env = Environment::empty(1e-9);
        let m = mixed_env_moments(&d, &env, &w, 2, 1e-8).unwrap();
        assert_relative_eq!(m[0], w.values[1], epsilon = 1e-6);
        assert_relative_eq!(m[1], w.values[2], epsilon = 1e-6);
    }

    #[test]
    fn truncation_certificate_triggers() {
        let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 4).unwrap();
        // 10 jumps close to the start: support 2^10 with almost no decay gap
        let jumps: Vec<(f64, f64)> = (0..10).map(|i| (1e-6 * (i + 1) as f64, 0.3)).collect();
        let env = Environment::new(1.0, jumps).unwrap();
        assert!(matches!(
            quenched_moment_coeffs(&d, &env, 2, 1e-8),
            Err(Error::Truncation(_))
        ));
    }
}

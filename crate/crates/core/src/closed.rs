//! Closed-form monodromy data from boundary values `(Â₀, G₀)`.
//!
//! Everything is pinned to the chamber where `u` decreases and `v`
//! increases in `Im(· e^{id})`, with the one-pole rigid factors taken at the
//! representative directions `−π/2` (∞ side) and `+π/2` (0 side).

use crate::error::{Error, Result};
use crate::gamma::{gamma_product_ratio, gamma_val};
use crate::matrix::{
    self as mx, c, det, diag, diag_of, eye, inv, leading_spectra, max_abs, unit_lu, CMat,
    SpectrumLadder, C64, I, ONE, ZERO,
};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Hat,
    Til,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

fn prod(it: impl Iterator<Item = C64>) -> C64 {
    it.fold(ONE, |a, b| a * b)
}

/// det of (λ·Id − M) restricted to the given 0-based rows and columns.
fn shifted_minor(m: &CMat, lam: C64, rows: &[usize], cols: &[usize]) -> C64 {
    let s = CMat::from_fn(rows.len(), cols.len(), |a, b| {
        let (i, j) = (rows[a], cols[b]);
        if i == j {
            lam - m[(i, j)]
        } else {
            -m[(i, j)]
        }
    });
    det(&s)
}

fn sign_of(p: usize) -> f64 {
    if p % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The factor `Ĉ_k` (1 ≤ k ≤ n−1) built from the spectra of the leading
/// blocks of `a0`. Phases are `e^{−πi(μ_j − λ_i)/2}`; with this choice `Ĉ_k`
/// equals [`rigid_factor`] up to left and right diagonal scalings.
pub fn chat_factor(ladder: &SpectrumLadder, a0: &CMat, k: usize) -> Result<CMat> {
    let n = a0.nrows();
    if k == 0 || k >= n {
        return Ok(eye(n));
    }
    ladder.check_non_resonant()?;
    let lk = ladder.level(k);
    let lk1 = ladder.level(k + 1);
    let lkm = ladder.level(k - 1);
    let mut out = eye(n);
    let rows: Vec<usize> = (0..k).collect();
    let mut cols: Vec<usize> = (0..k - 1).collect();
    cols.push(k);
    let col_root = |j: usize| -> Result<C64> {
        let num = prod(lk.iter().map(|&l| lk1[j] - l));
        let den = prod((0..=k).filter(|&v| v != j).map(|v| lk1[j] - lk1[v]));
        let r = num / den;
        if r.norm() == 0.0 || !r.is_finite() {
            return Err(Error::ZeroRadicand { k, i: k + 1, j: j + 1 });
        }
        Ok(r.sqrt())
    };
    for j in 0..=k {
        let cr = col_root(j)?;
        for i in 0..k {
            let diff = lk1[j] - lk[i];
            let mut num: Vec<C64> = (0..=k).map(|v| ONE + lk1[j] - lk1[v]).collect();
            num.extend((0..k).map(|v| ONE + lk[i] - lk[v]));
            let mut den: Vec<C64> = (0..k).filter(|&v| v != i).map(|v| ONE + lk1[j] - lk[v]).collect();
            den.extend((0..=k).filter(|&v| v != j).map(|v| ONE + lk[i] - lk1[v]));
            let g = gamma_product_ratio(&num, &den)?;
            let minor = shifted_minor(a0, lk[i], &rows, &cols);
            let rad = prod((0..k).filter(|&l| l != i).map(|l| lk[i] - lk[l]))
                * prod(lkm.iter().map(|&l| lk[i] - l));
            if rad.norm() == 0.0 {
                return Err(Error::ZeroRadicand { k, i: i + 1, j: j + 1 });
            }
            out[(i, j)] = (-I * PI * diff / 2.0).exp() / diff * g * sign_of(k + i + 1) * minor
                / rad.sqrt()
                * cr;
        }
        let num: Vec<C64> = (0..=k).map(|v| ONE + lk1[j] - lk1[v]).collect();
        let den: Vec<C64> = (0..k).map(|v| ONE + lk1[j] - lk[v]).collect();
        let g = gamma_product_ratio(&num, &den)?;
        out[(k, j)] = (-I * PI * (a0[(k, k)] - lk1[j]) / 2.0).exp() * g * cr;
    }
    Ok(out)
}

/// Diagonalizer of `m` normalized through the minors of `m`, with its inverse.
pub fn p_matrix(m: &CMat) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if n == 1 {
        return Ok((eye(1), eye(1)));
    }
    let ladder = leading_spectra(m, 1e-13)?;
    let ln = ladder.level(n);
    let lp = ladder.level(n - 1);
    let scale = ln.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for a in 0..n {
        for b in a + 1..n {
            let g = (ln[a] - ln[b]).norm();
            if g <= 1e-8 * scale {
                return Err(Error::RepeatedEigenvalue(g));
            }
        }
        for t in lp {
            if (ln[a] - t).norm() <= 1e-12 * scale {
                return Err(Error::LadderCollision);
            }
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let without = |x: usize| -> Vec<usize> { all.iter().cloned().filter(|&y| y != x).collect() };
    // det(M − λ) = (−1)^{n−1} det(λ − M) on (n−1)-square minors
    let s = sign_of(n - 1);
    let mut p = CMat::zeros(n, n);
    let mut pi = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mij = s * shifted_minor(m, ln[j], &without(n - 1), &without(i));
            let den = prod(lp.iter().map(|&t| t - ln[j]));
            p[(i, j)] = sign_of(i + 1 + n) * mij / den;
            let mi = s * shifted_minor(m, ln[i], &without(j), &without(n - 1));
            let di = prod((0..n).filter(|&x| x != i).map(|x| ln[x] - ln[i]));
            pi[(i, j)] = sign_of(n + j + 1) * mi / di;
        }
    }
    Ok((p, pi))
}

/// `e^{f·πi·diag}` of a vector.
pub fn exp_pi(d: &[C64], f: f64) -> CMat {
    diag(&d.iter().map(|&x| (f * PI * I * x).exp()).collect::<Vec<_>>())
}

/// Rigid factor in eigenbases: with `P_k` the minor-normalized diagonalizer
/// of the leading k-block (identity elsewhere),
/// `C_{-π/2}(E_{k+1}, δ_{k+1}M) = P_k · T_k · P_{k+1}⁻¹`.
pub fn rigid_factor(ladder: &SpectrumLadder, m: &CMat, k: usize) -> Result<CMat> {
    let n = m.nrows();
    if k == 0 || k >= n {
        return Ok(eye(n));
    }
    ladder.check_non_resonant()?;
    let lk = ladder.level(k);
    let mu = ladder.level(k + 1);
    let rows: Vec<usize> = (0..k).collect();
    let mut cols: Vec<usize> = (0..k - 1).collect();
    cols.push(k);
    let mut out = eye(n);
    for j in 0..=k {
        for i in 0..k {
            let diff = mu[j] - lk[i];
            let mut num: Vec<C64> = (0..=k).map(|v| ONE + mu[j] - mu[v]).collect();
            num.extend((0..k).map(|v| ONE + lk[i] - lk[v]));
            let mut den: Vec<C64> = (0..k).filter(|&v| v != i).map(|v| ONE + mu[j] - lk[v]).collect();
            den.extend((0..=k).filter(|&v| v != j).map(|v| ONE + lk[i] - mu[v]));
            let g = gamma_product_ratio(&num, &den)?;
            let minor = shifted_minor(m, lk[i], &rows, &cols);
            let vd = prod((0..k).filter(|&l| l != i).map(|l| lk[i] - lk[l]));
            out[(i, j)] = -(-I * PI * diff).exp() / diff * g * minor / vd;
        }
        let num: Vec<C64> = (0..=k).map(|v| ONE + mu[j] - mu[v]).collect();
        let den: Vec<C64> = (0..k).map(|v| ONE + mu[j] - lk[v]).collect();
        out[(k, j)] = gamma_product_ratio(&num, &den)?;
    }
    Ok(out)
}

/// `P(M^{[k]})` embedded with identity on the trailing block.
pub fn p_embedded(m: &CMat, k: usize) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    let (p, pi) = p_matrix(&mx::leading(m, k))?;
    let emb = |x: &CMat| {
        CMat::from_fn(n, n, |i, j| {
            if i < k && j < k {
                x[(i, j)]
            } else if i == j {
                ONE
            } else {
                ZERO
            }
        })
    };
    Ok((emb(&p), emb(&pi)))
}

/// Eigenbasis pieces of `∏_k C_{−π/2}(E_{k+1}, δ_{k+1}M)`:
/// the product equals `T · P(M)⁻¹` with `T = T₁⋯T_{n−1}`.
struct Rigid {
    t: CMat,
    /// `T⁻¹` as the reversed product of the factor inverses; better
    /// conditioned than inverting `T`
    t_inv: CMat,
    p_inv: CMat,
    lam: Vec<C64>,
}

fn rigid(m: &CMat) -> Result<Rigid> {
    let n = m.nrows();
    // a diagonal system has no Stokes phenomenon; the formulas below are
    // singular there but the product is the identity
    if (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == ZERO)) {
        return Ok(Rigid {
            t: eye(n),
            t_inv: eye(n),
            p_inv: eye(n),
            lam: diag_of(m),
        });
    }
    let ladder = leading_spectra(m, 1e-13)?;
    ladder.check_non_resonant()?;
    let mut t = eye(n);
    let mut t_inv = eye(n);
    for k in 1..n {
        let f = rigid_factor(&ladder, m, k)?;
        t_inv = inv(&f)? * t_inv;
        t *= f;
    }
    let (_, p_inv) = p_matrix(m)?;
    Ok(Rigid {
        t,
        t_inv,
        p_inv,
        lam: ladder.level(n).to_vec(),
    })
}

/// `∏_k C_{−π/2}(E_{k+1}, δ_{k+1}M)`, ordered left to right.
pub fn hat_product(m: &CMat) -> Result<CMat> {
    let r = rigid(m)?;
    Ok(&r.t * &r.p_inv)
}

/// `∏_k C_{π/2}(−E_{k+1}, δ_{k+1}M) = e^{−πiδM} · hat_product(M) · e^{πiM}`.
pub fn til_product(m: &CMat) -> Result<CMat> {
    let r = rigid(m)?;
    Ok(exp_pi(&diag_of(m), -1.0) * &r.t * exp_pi(&r.lam, 1.0) * &r.p_inv)
}

/// Monodromy `ν^{(∞)}_d` (hat, from `Â₀`) or `ν^{(0)}_{−d}` (til, from `Ã₀`).
pub fn nu_from_boundary(a0: &CMat, side: Side) -> Result<CMat> {
    let r = rigid(a0)?;
    let core = &r.t * exp_pi(&r.lam, 2.0) * &r.t_inv;
    Ok(match side {
        Side::Hat => core,
        Side::Til => {
            let dg = diag_of(a0);
            exp_pi(&dg, -1.0) * core * exp_pi(&dg, 1.0)
        }
    })
}

/// Stokes pair from `ν = S₋⁻¹ e^{2πi·δ} S₊` by unpivoted LDU.
pub fn stokes_full(nu: &CMat, delta_a: &[C64]) -> Result<(CMat, CMat)> {
    let (l, d, u) = unit_lu(nu)?;
    let mis = d
        .iter()
        .zip(delta_a)
        .map(|(x, a)| (x - (2.0 * PI * I * a).exp()).norm())
        .fold(0.0, f64::max);
    if mis > 1e-8 {
        return Err(Error::DiagonalMismatch(mis));
    }
    Ok((u, inv(&l)?))
}

/// Sub-diagonal Stokes entries from the spectra alone: `(S₊)_{k,k+1}` or
/// `(S₋)_{k+1,k}` for `k = 1..n−1`. `side` selects the ∞ (hat, from `Â₀`)
/// or 0 (til, from `Ã₀`) phase conventions.
pub fn stokes_subdiagonal(ladder: &SpectrumLadder, a0: &CMat, sign: Sign, side: Side) -> Result<Vec<C64>> {
    let n = a0.nrows();
    ladder.check_non_resonant()?;
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let lk = ladder.level(k);
        let lk1 = ladder.level(k + 1);
        let lkm = ladder.level(k - 1);
        let mut kk: Vec<usize> = (0..k - 1).collect();
        kk.push(k);
        let first: Vec<usize> = (0..k).collect();
        // orientation flips every Gamma argument for the lower entry
        let o = if sign == Sign::Plus { ONE } else { -ONE };
        let mut sum = ZERO;
        for i in 0..k {
            let mut num: Vec<C64> = (0..k).filter(|&l| l != i).map(|l| ONE + o * (lk[i] - lk[l])).collect();
            num.extend((0..k).filter(|&l| l != i).map(|l| o * (lk[i] - lk[l])));
            let mut den: Vec<C64> = lk1.iter().map(|&l| ONE + o * (lk[i] - l)).collect();
            den.extend(lkm.iter().map(|&l| ONE + o * (lk[i] - l)));
            let g = gamma_product_ratio(&num, &den)?;
            let minor = match sign {
                Sign::Plus => shifted_minor(a0, lk[i], &first, &kk),
                // det(A − λ) on rows {1..k−1,k+1}, cols {1..k}
                Sign::Minus => sign_of(k) * shifted_minor(a0, lk[i], &kk, &first),
            };
            sum += g * minor;
        }
        let phase = match (sign, side) {
            (Sign::Minus, Side::Hat) | (Sign::Plus, Side::Til) => {
                (PI * I * (a0[(k, k)] - a0[(k - 1, k - 1)])).exp()
            }
            _ => ONE,
        };
        out.push(-2.0 * PI * I * phase * sum);
    }
    Ok(out)
}

/// Convenience for the ∞ side.
pub fn stokes_subdiagonal_inf(ladder: &SpectrumLadder, a0: &CMat, sign: Sign) -> Result<Vec<C64>> {
    stokes_subdiagonal(ladder, a0, sign, Side::Hat)
}

/// Boundary value `(Â₀, G₀)` with `Ã₀ = −G₀⁻¹Â₀G₀` and both ladders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryDatum {
    #[serde(with = "crate::io::cmat")]
    pub a_hat0: CMat,
    #[serde(with = "crate::io::cmat")]
    pub g0: CMat,
    #[serde(with = "crate::io::cmat")]
    pub a_til0: CMat,
    pub hat: SpectrumLadder,
    pub til: SpectrumLadder,
    pub shrinking: bool,
    pub non_resonant: bool,
}

impl BoundaryDatum {
    pub fn new(a_hat0: CMat, g0: CMat) -> Result<Self> {
        let n = a_hat0.nrows();
        if n == 0 || a_hat0.ncols() != n || g0.nrows() != n || g0.ncols() != n {
            return Err(Error::Input("boundary datum needs square matrices of equal size".into()));
        }
        if !mx::is_finite(&a_hat0) || !mx::is_finite(&g0) {
            return Err(Error::Input("non-finite entries".into()));
        }
        let gi = inv(&g0).map_err(|_| Error::Input("G0 is singular".into()))?;
        let a_til0 = -(&gi * &a_hat0 * &g0);
        let hat = leading_spectra(&a_hat0, 1e-13)?;
        let til = leading_spectra(&a_til0, 1e-13)?;
        let shrinking = hat.shrinking() && til.shrinking();
        let non_resonant = hat.non_resonant() && til.non_resonant();
        Ok(BoundaryDatum {
            a_hat0,
            g0,
            a_til0,
            hat,
            til,
            shrinking,
            non_resonant,
        })
    }

    pub fn n(&self) -> usize {
        self.a_hat0.nrows()
    }

    /// Domain errors for data outside the shrinking, non-resonant class.
    pub fn check(&self) -> Result<()> {
        if !self.shrinking {
            return Err(Error::SpreadTooLarge(self.hat.spread().max(self.til.spread())));
        }
        self.hat.check_non_resonant()?;
        self.til.check_non_resonant()
    }
}

/// Direction and ordering of `(U, V)` the data refer to.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Chamber {
    pub direction: f64,
    pub description: String,
}

impl Chamber {
    pub fn standard(direction: f64) -> Self {
        Chamber {
            direction,
            description: "Im(u_k e^{id}) decreasing, Im(v_k e^{id}) increasing, \
                          d + arg(u_{k+1}-u_k) in (-pi, 0), d + arg(v_{k+1}-v_k) in (0, pi)"
                .into(),
        }
    }
}

/// `(δA, δ(G⁻¹AG), ν^{(∞)}_d, ν^{(0)}_{−d}, C_d)` plus Stokes pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonodromyData {
    #[serde(with = "crate::io::cvec")]
    pub delta_a: Vec<C64>,
    #[serde(with = "crate::io::cvec")]
    pub delta_gag: Vec<C64>,
    #[serde(with = "crate::io::cmat")]
    pub nu_inf: CMat,
    #[serde(with = "crate::io::cmat")]
    pub nu_zero: CMat,
    #[serde(with = "crate::io::cmat")]
    pub connection: CMat,
    #[serde(with = "crate::io::cmat")]
    pub s_plus_inf: CMat,
    #[serde(with = "crate::io::cmat")]
    pub s_minus_inf: CMat,
    #[serde(with = "crate::io::cmat")]
    pub s_plus_zero: CMat,
    #[serde(with = "crate::io::cmat")]
    pub s_minus_zero: CMat,
    pub chamber: Chamber,
}

impl MonodromyData {
    pub fn n(&self) -> usize {
        self.nu_inf.nrows()
    }

    /// `max|ν^{(∞)} − C (ν^{(0)})⁻¹ C⁻¹|`.
    pub fn similarity_residual(&self) -> Result<f64> {
        let r = &self.connection * inv(&self.nu_zero)? * inv(&self.connection)?;
        Ok(max_abs(&(&self.nu_inf - r)))
    }

    /// Worst LDU residual over both ends.
    pub fn lu_residual(&self) -> f64 {
        let one = |sp: &CMat, sm: &CMat, d: &[C64], nu: &CMat| -> f64 {
            match inv(sm) {
                Ok(smi) => max_abs(&(smi * exp_pi(d, 2.0) * sp - nu)),
                Err(_) => f64::INFINITY,
            }
        };
        let dz: Vec<C64> = self.delta_gag.iter().map(|x| -x).collect();
        one(&self.s_plus_inf, &self.s_minus_inf, &self.delta_a, &self.nu_inf)
            .max(one(&self.s_plus_zero, &self.s_minus_zero, &dz, &self.nu_zero))
    }
}

/// `C_d = ∏C_{−π/2}(E, δÂ₀) · G₀ · (∏C_{π/2}(−E, δÃ₀))⁻¹`.
pub fn connection_matrix(bd: &BoundaryDatum) -> Result<CMat> {
    bd.check()?;
    let x = hat_product(&bd.a_hat0)?;
    let y = til_product(&bd.a_til0)?;
    Ok(x * &bd.g0 * inv(&y)?)
}

/// Full closed-form monodromy data of the shrinking solution with boundary
/// value `bd`, in the standard chamber at direction `d`.
pub fn monodromy_data(bd: &BoundaryDatum, d: f64) -> Result<MonodromyData> {
    bd.check()?;
    let nu_inf = nu_from_boundary(&bd.a_hat0, Side::Hat)?;
    let nu_zero = nu_from_boundary(&bd.a_til0, Side::Til)?;
    let connection = connection_matrix(bd)?;
    let delta_a = diag_of(&bd.a_hat0);
    let delta_til = diag_of(&bd.a_til0);
    let (s_plus_inf, s_minus_inf) = stokes_full(&nu_inf, &delta_a)?;
    let (s_plus_zero, s_minus_zero) = stokes_full(&nu_zero, &delta_til)?;
    Ok(MonodromyData {
        delta_a,
        delta_gag: delta_til.iter().map(|x| -x).collect(),
        nu_inf,
        nu_zero,
        connection,
        s_plus_inf,
        s_minus_inf,
        s_plus_zero,
        s_minus_zero,
        chamber: Chamber::standard(d),
    })
}

/// Painlevé III monodromy parameters `(p, q)` for `u ~ r log x + s`.
pub fn piii_pq(r: C64, s: C64) -> Result<(C64, C64)> {
    let h = r * I / 4.0;
    let two = C64::from(2.0);
    let g1 = gamma_val(0.5 + h)?;
    let g2 = gamma_val(0.5 - h)?;
    let alpha = two.powc(3.0 * I * r / 2.0) * (I * s / 2.0).exp() * g1 * g1;
    let beta = two.powc(-3.0 * I * r / 2.0) * (-I * s / 2.0).exp() * g2 * g2;
    let ab = alpha + beta;
    if ab.norm() <= 1e-12 * (alpha.norm() + beta.norm()).max(1e-300) {
        return Err(Error::DegenerateAlphaBeta);
    }
    let em = (-PI * r / 4.0).exp();
    let ep = (PI * r / 4.0).exp();
    Ok(((alpha * em - beta * ep) / ab, (beta * em - alpha * ep) / ab))
}

/// Stokes matrices at ∞ in the `(p, q)` parametrization, `(S₊, S₋)`.
pub fn piii_stokes_inf(p: C64, q: C64) -> (CMat, CMat) {
    let s = p + q;
    (
        mx::from_rows(&[vec![ONE, -s], vec![ZERO, ONE]]),
        mx::from_rows(&[vec![ONE, ZERO], vec![s, ONE]]),
    )
}

/// `(1/√(1+pq)) [[1, q], [−p, 1]]`.
pub fn piii_connection(p: C64, q: C64) -> CMat {
    let f = (ONE + p * q).sqrt().inv();
    mx::from_rows(&[vec![f, f * q], vec![-f * p, f]])
}

/// `Â₀ = [[0, −ri/4], [−ri/4, 0]]` and `G₀ = ½H·diag(e^{is/2}2^{ir/2}, e^{−is/2}2^{−ir/2})·H'`.
pub fn piii_boundary(r: C64, s: C64) -> Result<BoundaryDatum> {
    if r.im.abs() >= 2.0 {
        return Err(Error::SpreadTooLarge(r.im.abs() / 2.0));
    }
    let h = -r * I / 4.0;
    let a = mx::from_rows(&[vec![ZERO, h], vec![h, ZERO]]);
    let two = C64::from(2.0);
    let e1 = (I * s / 2.0).exp() * two.powc(I * r / 2.0);
    let e2 = (-I * s / 2.0).exp() * two.powc(-I * r / 2.0);
    let hl = mx::from_rows(&[vec![ONE, ONE], vec![-ONE, ONE]]);
    let hr = mx::from_rows(&[vec![ONE, -ONE], vec![ONE, ONE]]);
    let g = hl * diag(&[e1, e2]) * hr * c(0.5, 0.0);
    BoundaryDatum::new(a, g)
}

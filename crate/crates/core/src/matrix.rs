//! Dense complex linear algebra on top of `nalgebra`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(d: &[C64]) -> CMat {
    let mut m = CMat::zeros(d.len(), d.len());
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = x;
    }
    m
}

pub fn diag_of(m: &CMat) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, i)]).collect()
}

/// Diagonal part.
pub fn delta(m: &CMat) -> CMat {
    diag(&diag_of(m))
}

/// Leading `k`-block kept whole, diagonal elsewhere.
pub fn delta_k(m: &CMat, k: usize) -> CMat {
    let n = m.nrows();
    let mut out = delta(m);
    for i in 0..k.min(n) {
        for j in 0..k.min(n) {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

pub fn leading(m: &CMat, k: usize) -> CMat {
    m.view((0, 0), (k, k)).into_owned()
}

pub fn from_rows(rows: &[Vec<C64>]) -> CMat {
    let n = rows.len();
    let mcols = if n == 0 { 0 } else { rows[0].len() };
    CMat::from_fn(n, mcols, |i, j| rows[i][j])
}

pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn inv(m: &CMat) -> Result<CMat> {
    let scale = max_abs(m).max(1e-300);
    let lu = m.clone().lu();
    let u = lu.u();
    for i in 0..u.nrows() {
        if u[(i, i)].norm() < 1e-15 * scale {
            return Err(Error::SingularMinor(i + 1));
        }
    }
    lu.try_inverse().ok_or(Error::SingularMinor(0))
}

/// Commutator `[a, b]`.
pub fn comm(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > 0.25 {
        (norm1 / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let b = a / C64::from(2f64.powi(s));
    let mut term = eye(n);
    let mut sum = eye(n);
    for k in 1..40 {
        term = &term * &b / C64::from(k as f64);
        sum += &term;
        if max_abs(&term) < 1e-18 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Ordering by real part, then imaginary part. Real parts closer than a
/// relative 1e-9 count as equal so conjugate pairs sort stably.
pub fn spec_cmp(a: &C64, b: &C64) -> Ordering {
    let scale = 1.0 + a.norm().max(b.norm());
    if (a.re - b.re).abs() > 1e-9 * scale {
        a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal)
    } else {
        a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal)
    }
}

pub fn sort_spectrum(v: &mut [C64]) {
    v.sort_by(spec_cmp);
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMat,
    /// 2-norm condition number of `vectors`.
    pub condition: f64,
}

fn schur(m: &CMat, tol: f64) -> Result<(CMat, CMat)> {
    let n = m.nrows();
    if (0..n).all(|j| (j + 1..n).all(|i| m[(i, j)] == ZERO)) {
        return Ok((eye(n), m.clone()));
    }
    // nalgebra's deflation test is absolute, so remove the mean of the
    // spectrum and work at unit scale (clusters near ν ≈ 1 otherwise stall)
    let mu = trace(m) / n as f64;
    let shifted = m - eye(n) * mu;
    let scale = max_abs(&shifted);
    if scale == 0.0 {
        return Ok((eye(n), m.clone()));
    }
    let eps = tol.min(1e-13).max(f64::EPSILON);
    let x = shifted / C64::from(scale);
    let (q, t) = match Schur::try_new(x.clone(), eps, 10_000) {
        Some(s) => s.unpack(),
        None => {
            // shift sequence can cycle on tight clusters; restart from a
            // Householder-rotated copy, which changes the Hessenberg form
            let v = CMat::from_fn(n, 1, |i, _| C64::from_polar(1.0, 0.7 + 2.399963 * i as f64));
            let h = eye(n) - &v * v.adjoint() * C64::from(2.0 / n as f64);
            let s = Schur::try_new(&h * x * &h, eps, 10_000).ok_or(Error::NonConvergence)?;
            let (q, t) = s.unpack();
            (h * q, t)
        }
    };
    Ok((q, t * C64::from(scale) + eye(n) * mu))
}

pub fn cond2(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    let mx = sv.iter().cloned().fold(0.0, f64::max);
    let mn = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if mn == 0.0 {
        f64::INFINITY
    } else {
        mx / mn
    }
}

pub fn eigen(m: &CMat, tol: f64) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n != m.ncols() || n == 0 {
        return Err(Error::Input("eigen needs a nonempty square matrix".into()));
    }
    if !is_finite(m) {
        return Err(Error::NonConvergence);
    }
    let (q, t) = schur(m, tol)?;
    let tnorm = max_abs(&t).max(1e-300);
    let small = 1e-14 * tnorm;
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = t[(i, k)];
            for j in i + 1..k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < small {
                den = C64::from(small);
            }
            y[(i, k)] = -acc / den;
        }
    }
    let mut v = q * y;
    for k in 0..n {
        let nr = (0..n).map(|i| v[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            v[(i, k)] /= nr;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let vals: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    idx.sort_by(|&a, &b| spec_cmp(&vals[a], &vals[b]));
    let values: Vec<C64> = idx.iter().map(|&k| vals[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| v[(i, idx[j])]);
    let condition = cond2(&vectors);
    let dec = EigenDecomposition {
        values,
        vectors,
        condition,
    };
    let res = fro(&(m * &dec.vectors - &dec.vectors * diag(&dec.values)));
    let mn = fro(m).max(1e-300);
    if condition.is_finite() && res / mn > tol.max(1e-8) * condition.max(1.0) {
        return Err(Error::NonConvergence);
    }
    Ok(dec)
}

pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let (_, t) = schur(m, 1e-14)?;
    let mut v: Vec<C64> = (0..t.nrows()).map(|k| t[(k, k)]).collect();
    sort_spectrum(&mut v);
    Ok(v)
}

/// Eigenvalues of every leading principal submatrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumLadder {
    /// `levels[k-1]` holds the k eigenvalues of the k-by-k leading block.
    pub levels: Vec<Vec<C64>>,
}

impl SpectrumLadder {
    pub fn n(&self) -> usize {
        self.levels.len()
    }

    /// 1-based level access; level 0 is empty.
    pub fn level(&self, k: usize) -> &[C64] {
        if k == 0 {
            &[]
        } else {
            &self.levels[k - 1]
        }
    }

    /// Largest |Re(λ_i − λ_j)| over all levels.
    pub fn spread(&self) -> f64 {
        let mut s: f64 = 0.0;
        for lv in &self.levels {
            for a in lv {
                for b in lv {
                    s = s.max((a.re - b.re).abs());
                }
            }
        }
        s
    }

    pub fn shrinking(&self) -> bool {
        self.spread() < 1.0
    }

    /// Smallest distance of a cross-level or in-level difference to a
    /// nonzero integer, with the offending level.
    pub fn resonance_gap(&self) -> (f64, usize, C64) {
        let mut best = (f64::INFINITY, 0, C64::from(0.0));
        let mut probe = |lv: usize, d: C64| {
            let r = d.re.round();
            if r != 0.0 {
                let g = (d - C64::from(r)).norm();
                if g < best.0 {
                    best = (g, lv, d);
                }
            }
        };
        for k in 1..=self.n() {
            let cur = self.level(k);
            for a in cur {
                for b in cur {
                    probe(k, a - b);
                }
            }
            if k > 1 {
                for a in cur {
                    for b in self.level(k - 1) {
                        probe(k, a - b);
                    }
                }
            }
        }
        best
    }

    pub fn non_resonant(&self) -> bool {
        self.resonance_gap().0 > 1e-8
    }

    pub fn check_non_resonant(&self) -> Result<()> {
        let (g, lv, d) = self.resonance_gap();
        if g <= 1e-8 {
            Err(Error::ResonantLadder { level: lv, diff: d })
        } else {
            Ok(())
        }
    }

    /// True when some difference sits within 1e-5 of a nonzero integer.
    pub fn near_resonant(&self) -> bool {
        self.resonance_gap().0 <= 1e-5
    }
}

pub fn leading_spectra(m: &CMat, _tol: f64) -> Result<SpectrumLadder> {
    let n = m.nrows();
    let mut levels = Vec::with_capacity(n);
    for k in 1..=n {
        levels.push(eigenvalues(&leading(m, k))?);
    }
    Ok(SpectrumLadder { levels })
}

/// `exp(log_t · M)` for an explicitly chosen logarithm `log_t`.
pub fn matrix_power_log(log_t: C64, m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    if log_t == ZERO {
        return Ok(eye(n));
    }
    // off-diagonal entries exactly zero: no decomposition needed
    let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == ZERO));
    if is_diag {
        return Ok(diag(
            &diag_of(m).iter().map(|&x| (log_t * x).exp()).collect::<Vec<_>>(),
        ));
    }
    match eigen(m, 1e-12) {
        Ok(e) if e.condition <= 1e8 => {
            let vi = inv(&e.vectors)?;
            let d: Vec<C64> = e.values.iter().map(|&x| (log_t * x).exp()).collect();
            Ok(&e.vectors * diag(&d) * vi)
        }
        _ => {
            let r = expm(&(m * log_t));
            if is_finite(&r) {
                Ok(r)
            } else {
                Err(Error::NearDefective(f64::INFINITY))
            }
        }
    }
}

/// Principal branch `t^M`, arg t in (−π, π].
pub fn matrix_power(t: C64, m: &CMat) -> Result<CMat> {
    matrix_power_wind(t, m, 0)
}

/// `t^M` with `log t = ln|t| + i(Arg t + 2π·winding)`.
pub fn matrix_power_wind(t: C64, m: &CMat, winding: i32) -> Result<CMat> {
    if t == ZERO {
        return Err(Error::Input("matrix_power at t = 0".into()));
    }
    let lt = C64::new(t.norm().ln(), t.arg() + 2.0 * PI * winding as f64);
    matrix_power_log(lt, m)
}

/// Same as [`matrix_power_log`] but refuses near-defective input.
pub fn matrix_power_strict(log_t: C64, m: &CMat) -> Result<CMat> {
    let e = eigen(m, 1e-12)?;
    if e.condition > 1e8 {
        return Err(Error::NearDefective(e.condition));
    }
    matrix_power_log(log_t, m)
}

/// Unpivoted `M = L·D·U` with unit triangular `L`, `U`.
pub fn unit_lu(m: &CMat) -> Result<(CMat, Vec<C64>, CMat)> {
    let n = m.nrows();
    let scale = max_abs(m).max(1e-300);
    let mut a = m.clone();
    let mut l = eye(n);
    for k in 0..n {
        let p = a[(k, k)];
        if p.norm() < 1e-14 * scale {
            return Err(Error::SingularMinor(k + 1));
        }
        for i in k + 1..n {
            let f = a[(i, k)] / p;
            l[(i, k)] = f;
            for j in k..n {
                let v = a[(k, j)];
                a[(i, j)] -= f * v;
            }
        }
    }
    let d: Vec<C64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut u = eye(n);
    for i in 0..n {
        for j in i + 1..n {
            u[(i, j)] = a[(i, j)] / d[i];
        }
    }
    Ok((l, d, u))
}

/// Rank of each `u_i` when sorted by decreasing `Im(u_i e^{id})`.
pub fn dominance_permutation(u: &[C64], d: f64) -> Result<Vec<usize>> {
    let n = u.len();
    let rot = C64::from_polar(1.0, d);
    let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..n {
        for j in i + 1..n {
            if ((u[i] - u[j]) * rot).im.abs() <= 1e-12 * scale {
                return Err(Error::AntiStokesDirection { d, i, j });
            }
        }
    }
    let key: Vec<f64> = u.iter().map(|z| (z * rot).im).collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key[b].partial_cmp(&key[a]).unwrap());
    let mut rank = vec![0; n];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    Ok(rank)
}

/// `det` via LU; small sizes only.
pub fn det(m: &CMat) -> C64 {
    if m.nrows() == 0 {
        return ONE;
    }
    m.clone().lu().determinant()
}

/// Submatrix on the given (0-based) rows and columns.
pub fn sub(m: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn trace(m: &CMat) -> C64 {
    diag_of(m).iter().sum()
}

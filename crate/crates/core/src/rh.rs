//! Numeric Riemann–Hilbert step: recover `(Â, Ĝ)` at finite `z`, `w` from
//! monodromy data by matching one-pole Stokes matrices.
//!
//! For n = 2 `Â` is an explicit conjugate of `Â₀` ([`crate::flow::boundary_to_hat`]).
//! For n ≥ 3 the z-flow has no closed form here, so the off-diagonal part of
//! `Â` is fitted by Gauss–Newton until the `(U, Â)` Stokes matrices equal the
//! prescribed ones, starting from the nested conjugation
//! `Â_k = z_k^{−δ_k Â_{k−1}} Â_{k−1} z_k^{δ_k Â_{k−1}}`. The same is done for
//! `Ã` against the `(−Ṽ, Ã)` system, and then
//! `Ĝ = span^{−Â} C(U, Â)⁻¹ · C · C(−Ṽ', Ã) · Ṽ₂^{−Ã}` with `Ṽ' = Ṽ/Ṽ₂`.

use crate::closed::{BoundaryDatum, MonodromyData};
use crate::error::{Error, Result};
use crate::flow::Coordinates;
use crate::matrix::{self as mx, c, inv, matrix_power_log, max_abs, CMat, C64};
use crate::ode::{one_pole_numeric, NumericOptions};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub numeric: NumericOptions,
    /// target on the max-abs Stokes mismatch
    pub tol: f64,
    pub max_iter: usize,
    /// finite-difference step for the Jacobian
    pub step: f64,
    /// integration tolerance for Jacobian columns and for ranking the
    /// starting windings; only the residual needs `numeric.tol`
    pub coarse_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            numeric: NumericOptions {
                tol: 1e-12,
                anchor_radius: None,
            },
            tol: 1e-10,
            max_iter: 30,
            step: 1e-4,
            coarse_tol: 1e-8,
        }
    }
}

/// A fitted residue and how well it reproduces the target.
#[derive(Debug, Clone)]
pub struct ResidueFit {
    pub phi: CMat,
    pub residual: f64,
    pub iterations: usize,
    /// distance between the starting guess and the fit
    pub moved: f64,
}

/// `Â_{n−1}` from `M = Â₀` and `log z₁, …, log z_{n−1}`.
pub fn nested_guess(m: &CMat, logs: &[C64]) -> Result<CMat> {
    let n = m.nrows();
    let mut a = m.clone();
    for (k, &l) in logs.iter().enumerate() {
        let dk = if k == 0 { mx::delta(&a) } else { mx::delta_k(&a, k + 1) };
        let p = matrix_power_log(l, &dk)?;
        a = inv(&p)? * &a * p;
    }
    debug_assert_eq!(a.nrows(), n);
    Ok(a)
}

fn off_diag(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn stokes_gap(u: &[C64], phi: &CMat, d: f64, sp: &CMat, sm: &CMat, opt: NumericOptions) -> Result<DVector<C64>> {
    let nm = one_pole_numeric(u, phi, d, opt)?;
    let idx = off_diag(phi.nrows());
    let mut r = DVector::zeros(2 * idx.len());
    for (k, &(i, j)) in idx.iter().enumerate() {
        r[k] = nm.inf.s_plus[(i, j)] - sp[(i, j)];
        r[idx.len() + k] = nm.inf.s_minus[(i, j)] - sm[(i, j)];
    }
    Ok(r)
}

fn sup(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Gauss–Newton on the off-diagonal of `Φ` (diagonal held fixed) so that the
/// `(U, Φ)` Stokes matrices at `d` become `(sp, sm)`.
pub fn fit_residue(u: &[C64], d: f64, sp: &CMat, sm: &CMat, guess: &CMat, opt: FitOptions) -> Result<ResidueFit> {
    let n = guess.nrows();
    let idx = off_diag(n);
    let m = idx.len();
    let mut phi = guess.clone();
    let mut r = stokes_gap(u, &phi, d, sp, sm, opt.numeric)?;
    let mut res = sup(&r);
    let coarse = NumericOptions {
        tol: opt.coarse_tol.max(opt.numeric.tol),
        ..opt.numeric
    };
    let jacobian = |phi: &CMat| -> Result<DMatrix<C64>> {
        let r0 = stokes_gap(u, phi, d, sp, sm, coarse)?;
        let cols: Vec<DVector<C64>> = idx
            .par_iter()
            .map(|&(i, j)| {
                let h = opt.step * (1.0 + phi[(i, j)].norm());
                let mut p = phi.clone();
                p[(i, j)] += h;
                stokes_gap(u, &p, d, sp, sm, coarse).map(|rp| (rp - &r0) / C64::from(h))
            })
            .collect::<Result<_>>()?;
        let mut jac = DMatrix::<C64>::zeros(2 * m, m);
        for (col, v) in cols.iter().enumerate() {
            jac.set_column(col, v);
        }
        Ok(jac)
    };
    let mut it = 0;
    let mut jac: Option<DMatrix<C64>> = None;
    while res > opt.tol {
        if it == opt.max_iter {
            return Err(Error::NewtonStall(res));
        }
        it += 1;
        // chord steps: the Jacobian is kept while the residual contracts well
        let fresh = jac.is_none();
        let j = match jac.take() {
            Some(j) => j,
            None => jacobian(&phi)?,
        };
        let step = j
            .clone()
            .svd(true, true)
            .solve(&(-&r), 1e-12)
            .map_err(|e| Error::Input(format!("Gauss-Newton solve: {e}")))?;
        let mut lam = 1.0;
        loop {
            let mut p = phi.clone();
            for (k, &(i, j)) in idx.iter().enumerate() {
                p[(i, j)] += step[k] * lam;
            }
            match stokes_gap(u, &p, d, sp, sm, opt.numeric) {
                Ok(rn) if sup(&rn) < res => {
                    let new = sup(&rn);
                    if lam == 1.0 && new < 0.1 * res {
                        jac = Some(j);
                    }
                    phi = p;
                    r = rn;
                    res = new;
                    break;
                }
                _ if !fresh => break,
                _ if lam > 1e-3 => lam /= 2.0,
                _ => return Err(Error::NewtonStall(res)),
            }
        }
    }
    Ok(ResidueFit {
        moved: max_abs(&(&phi - guess)),
        phi,
        residual: res,
        iterations: it,
    })
}

/// Try every winding in `{−1, 0, 1}` for each logarithm and keep the guess
/// whose Stokes mismatch is smallest.
fn best_guess(
    u: &[C64],
    d: f64,
    m0: &CMat,
    ratios: &[C64],
    sp: &CMat,
    sm: &CMat,
    opt: NumericOptions,
) -> Result<CMat> {
    let k = ratios.len();
    let tried: Vec<(f64, CMat)> = (0..3usize.pow(k as u32))
        .into_par_iter()
        .filter_map(|code| {
            let mut cc = code;
            let logs: Vec<C64> = ratios
                .iter()
                .map(|z| {
                    let w = (cc % 3) as f64 - 1.0;
                    cc /= 3;
                    z.ln() + c(0.0, 2.0 * PI * w)
                })
                .collect();
            let g = nested_guess(m0, &logs).ok()?;
            let r = stokes_gap(u, &g, d, sp, sm, opt).ok()?;
            Some((sup(&r), g))
        })
        .collect();
    tried
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, g)| g)
        .ok_or(Error::NewtonStall(f64::INFINITY))
}

/// Everything the fit produced.
#[derive(Debug, Clone)]
pub struct HatFit {
    pub a_hat: CMat,
    pub g_hat: CMat,
    pub a_til: CMat,
    pub fit_hat: ResidueFit,
    pub fit_til: ResidueFit,
    /// `|Ĝ⁻¹ÂĜ + Ã|`, not imposed by the fit
    pub consistency: f64,
}

/// `(Â, Ĝ)` at the coordinates of `coords` and at `t` (only `arg t` enters,
/// through the direction of the ξ = 0 system), from closed-form data.
pub fn hat_from_monodromy(
    bd: &BoundaryDatum,
    md: &MonodromyData,
    coords: &Coordinates,
    t: C64,
    opt: FitOptions,
) -> Result<HatFit> {
    let n = coords.n();
    if bd.n() != n || md.n() != n {
        return Err(Error::Input("rank mismatch between data and coordinates".into()));
    }
    let d = coords.direction;
    let z = coords.z();
    let hat_ratios: Vec<C64> = z[1..].to_vec();
    let screen = NumericOptions {
        tol: 1e-6f64.max(opt.numeric.tol),
        ..opt.numeric
    };
    let g = best_guess(&coords.u, d, &bd.a_hat0, &hat_ratios, &md.s_plus_inf, &md.s_minus_inf, screen)?;
    let fit_hat = fit_residue(&coords.u, d, &md.s_plus_inf, &md.s_minus_inf, &g, opt)?;

    // ξ = 0: the (−Ṽ', Ã) system with Ṽ' = Ṽ/Ṽ₂ at direction d + arg w₁
    let v2 = coords.v_shape[1];
    let mv: Vec<C64> = coords.v_shape.iter().map(|x| -x / v2).collect();
    let dz = d + coords.log_w1(coords.log_t(t)).im;
    let w = coords.w(t);
    let til_ratios: Vec<C64> = w[..n - 2].iter().rev().cloned().collect();
    let mut til_logs_ratios = vec![C64::from(1.0)];
    til_logs_ratios.extend(til_ratios);
    // Ã₁ = Ã₀: the first conjugation is the identity
    let gt = best_guess(&mv, dz, &bd.a_til0, &til_logs_ratios, &md.s_plus_zero, &md.s_minus_zero, screen)?;
    let fit_til = fit_residue(&mv, dz, &md.s_plus_zero, &md.s_minus_zero, &gt, opt)?;

    let a_hat = fit_hat.phi.clone();
    let a_til = fit_til.phi.clone();
    let ch = one_pole_numeric(&coords.u, &a_hat, d, opt.numeric)?.connection;
    let ct = one_pole_numeric(&mv, &a_til, dz, opt.numeric)?.connection;
    let sp = matrix_power_log(coords.log_span(), &a_hat)?;
    // Ṽ' = Ṽ/Ṽ₂ rescales the Frobenius normalization by Ṽ₂^{Ã}
    let vp = matrix_power_log(-v2.ln(), &a_til)?;
    let g_hat = inv(&sp)? * inv(&ch)? * &md.connection * ct * vp;
    let consistency = max_abs(&(inv(&g_hat)? * &a_hat * &g_hat + &a_til));
    Ok(HatFit {
        a_hat,
        g_hat,
        a_til,
        fit_hat,
        fit_til,
        consistency,
    })
}

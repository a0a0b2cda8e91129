//! Logarithm ladders of monodromy matrices, the strictly log-confined test,
//! and the inverse map from monodromy data back to boundary values.

use crate::closed::{
    exp_pi, hat_product, monodromy_data, nu_from_boundary, stokes_full, stokes_subdiagonal, til_product, BoundaryDatum,
    Chamber, MonodromyData, Side, Sign,
};
use crate::error::{Error, Result};
use crate::matrix::{self as mx, c, diag, inv, max_abs, CMat, SpectrumLadder, C64, ONE, ZERO};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct ConfineOptions {
    /// `|Re Δ|` within this of 1 counts as exactly 1; same for distances of
    /// cross-level differences to nonzero integers
    pub boundary_tol: f64,
    /// allowed distance of `trace − Σ log μ / 2πi` to an integer
    pub trace_tol: f64,
}

impl Default for ConfineOptions {
    fn default() -> Self {
        ConfineOptions {
            boundary_tol: 1e-5,
            trace_tol: 1e-4,
        }
    }
}

/// Logarithms `λ_j` with `e^{2πiλ_j} = μ_j` and `Σλ_j = trace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSet {
    #[serde(with = "crate::io::cvec")]
    pub values: Vec<C64>,
    /// `max Re λ − min Re λ`
    pub diameter: f64,
    pub strict: bool,
    /// only `|Re Δ| = 1` is achievable
    pub non_strict: bool,
    /// `|Σλ − trace|` left after the integer shift
    pub trace_residual: f64,
}

/// Principal logarithms, an integer shift to hit the trace, then unit
/// transfers `(λ_i, λ_j) → (λ_i + 1, λ_j − 1)` from the largest to the
/// smallest real part until all real parts fit in an interval of length 1.
pub fn lambda_adjust(mu: &[C64], trace_target: C64, opt: ConfineOptions) -> Result<LambdaSet> {
    if mu.iter().any(|m| m.norm() < 1e-300 || !m.re.is_finite() || !m.im.is_finite()) {
        return Err(Error::Input("eigen-exponentials must be finite and nonzero".into()));
    }
    let mut lam: Vec<C64> = mu.iter().map(|m| m.ln() / (2.0 * PI * c(0.0, 1.0))).collect();
    if lam.is_empty() {
        return Ok(LambdaSet {
            values: lam,
            diameter: 0.0,
            strict: true,
            non_strict: false,
            trace_residual: trace_target.norm(),
        });
    }
    let gap: C64 = trace_target - lam.iter().sum::<C64>();
    let shift = gap.re.round();
    let off = (gap - C64::from(shift)).norm();
    if off > opt.trace_tol {
        return Err(Error::InconsistentTrace(off));
    }
    lam[0] += shift;
    let re_range = |l: &[C64]| {
        let (mut imax, mut imin) = (0, 0);
        for (i, x) in l.iter().enumerate() {
            if x.re > l[imax].re {
                imax = i;
            }
            if x.re < l[imin].re {
                imin = i;
            }
        }
        (imax, imin, l[imax].re - l[imin].re)
    };
    loop {
        let (imax, imin, dia) = re_range(&lam);
        if dia <= 1.0 + opt.boundary_tol {
            break;
        }
        lam[imax] -= 1.0;
        lam[imin] += 1.0;
    }
    let (_, _, diameter) = re_range(&lam);
    let non_strict = (diameter - 1.0).abs() <= opt.boundary_tol;
    Ok(LambdaSet {
        trace_residual: (lam.iter().sum::<C64>() - trace_target).norm(),
        values: lam,
        diameter,
        strict: diameter < 1.0 - opt.boundary_tol,
        non_strict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Which {
    Infinity,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    /// `|Re(λ_i − λ_j)| = 1` inside one level
    UnitDiameter,
    /// `λ^{(k+1)} − λ^{(k)}` is a nonzero integer
    CrossLevelResonance,
}

impl std::fmt::Display for Cause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cause::UnitDiameter => "|Re d| = 1",
            Cause::CrossLevelResonance => "cross-level integer difference",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub end: Which,
    pub level: usize,
    pub cause: Cause,
    #[serde(with = "crate::io::cvec")]
    pub pair: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// `σ_k` for `ν^{(∞)}`, k = 1..n
    pub sigma_inf: Vec<LambdaSet>,
    /// `σ_k` for `ν^{(0)}`
    pub sigma_zero: Vec<LambdaSet>,
    pub shrinking: bool,
    pub non_resonant: bool,
    pub verdict: bool,
    pub failures: Vec<Failure>,
}

impl ClassificationResult {
    pub fn failing_levels(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.failures.iter().map(|f| f.level).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The ladder `σ_1, …, σ_n` at one end.
    pub fn ladder(&self, end: Which) -> SpectrumLadder {
        let s = match end {
            Which::Infinity => &self.sigma_inf,
            Which::Zero => &self.sigma_zero,
        };
        SpectrumLadder {
            levels: s.iter().map(|l| l.values.clone()).collect(),
        }
    }
}

/// Ladder of one monodromy matrix with trace targets `Σ_{j≤k} h_j`.
pub fn classify_matrix(nu: &CMat, h: &[C64], end: Which, opt: ConfineOptions) -> Result<(Vec<LambdaSet>, Vec<Failure>)> {
    let n = nu.nrows();
    if h.len() != n {
        return Err(Error::Input("diagonal and monodromy sizes differ".into()));
    }
    let mut sets = Vec::with_capacity(n);
    let mut fails = Vec::new();
    let mut tr = ZERO;
    for k in 1..=n {
        tr += h[k - 1];
        let mu = mx::eigenvalues(&mx::leading(nu, k))?;
        let s = lambda_adjust(&mu, tr, opt)?;
        if !s.strict {
            let (mut a, mut b) = (s.values[0], s.values[0]);
            for x in &s.values {
                if x.re > a.re {
                    a = *x;
                }
                if x.re < b.re {
                    b = *x;
                }
            }
            fails.push(Failure {
                end,
                level: k,
                cause: Cause::UnitDiameter,
                pair: vec![a, b],
            });
        }
        sets.push(s);
    }
    for k in 1..n {
        for &a in &sets[k].values {
            for &b in &sets[k - 1].values {
                let d = a - b;
                let r = d.re.round();
                if r != 0.0 && (d - C64::from(r)).norm() <= opt.boundary_tol {
                    fails.push(Failure {
                        end,
                        level: k + 1,
                        cause: Cause::CrossLevelResonance,
                        pair: vec![a, b],
                    });
                }
            }
        }
    }
    Ok((sets, fails))
}

fn check_chamber(ch: &Chamber) -> Result<()> {
    if *ch != Chamber::standard(ch.direction) {
        return Err(Error::ChamberMismatch(ch.description.clone()));
    }
    Ok(())
}

/// Membership of `ν^{(∞)}_d` in `M(δA)` and of `ν^{(0)}_{−d}` in
/// `M(δ(G⁻¹AG))`, with the trace targets `tr A^{[k]}` and
/// `−tr (G⁻¹AG)^{[k]}`.
pub fn classify_log_confined(md: &MonodromyData, opt: ConfineOptions) -> Result<ClassificationResult> {
    check_chamber(&md.chamber)?;
    let hz: Vec<C64> = md.delta_gag.iter().map(|x| -x).collect();
    let (sigma_inf, mut failures) = classify_matrix(&md.nu_inf, &md.delta_a, Which::Infinity, opt)?;
    let (sigma_zero, f0) = classify_matrix(&md.nu_zero, &hz, Which::Zero, opt)?;
    failures.extend(f0);
    let shrinking = sigma_inf.iter().chain(&sigma_zero).all(|s| s.strict);
    let non_resonant = !failures.iter().any(|f| f.cause == Cause::CrossLevelResonance);
    Ok(ClassificationResult {
        verdict: shrinking && non_resonant,
        sigma_inf,
        sigma_zero,
        shrinking,
        non_resonant,
        failures,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct InverseOptions {
    pub confine: ConfineOptions,
    pub max_iter: usize,
    /// finite-difference step of the Jacobian
    pub step: f64,
    /// residual above which a stalled iteration is an error
    pub stall: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            confine: ConfineOptions::default(),
            max_iter: 60,
            step: 1e-6,
            stall: 1e-6,
        }
    }
}

/// Result of [`inverse_monodromy`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inversion {
    pub datum: BoundaryDatum,
    /// entrywise distance between the forward image and the input, relative
    /// to the size of each input matrix
    pub residual: f64,
    pub iterations: usize,
}

/// `Φ₀` for one end: diagonal `h`, ladder `σ`, `nu_from_boundary(Φ₀) = ν`.
///
/// The Stokes pair of a leading block of `Φ` is the leading block of the
/// Stokes pair of `Φ`, so the solve goes level by level: the 2×2 block is
/// explicit, and level k only adds the new row and column.
fn invert_end(nu: &CMat, h: &[C64], sigma: &SpectrumLadder, side: Side, opt: InverseOptions) -> Result<(CMat, usize)> {
    let n = nu.nrows();
    if n == 1 {
        return Ok((diag(h), 0));
    }
    let (sp, sm) = stokes_full(nu, h)?;
    let ladder = |k: usize| SpectrumLadder {
        levels: sigma.levels[..k].to_vec(),
    };
    let mut phi = pairwise_guess(&mx::leading(&sp, 2), &mx::leading(&sm, 2), &h[..2], &ladder(2), side)?;
    let mut total = 0;
    for k in 3..=n {
        let (spk, smk) = (mx::leading(&sp, k), mx::leading(&sm, k));
        let idx: Vec<(usize, usize)> = (0..k - 1).flat_map(|i| [(i, k - 1), (k - 1, i)]).collect();
        let pw = pairwise_guess(&spk, &smk, &h[..k], &ladder(k), side)?;
        let mut guess = diag(&h[..k]);
        guess.view_mut((0, 0), (k - 1, k - 1)).copy_from(&phi);
        for &(i, j) in &idx {
            guess[(i, j)] = pw[(i, j)];
        }
        let (p, it) = solve_level(&mx::leading(nu, k), &h[..k], &ladder(k), side, &idx, guess, opt)?;
        phi = p;
        total += it;
    }
    Ok((phi, total))
}

/// One level: Newton from the pairwise start, then continuation from a few
/// other starts.
fn solve_level(
    nu: &CMat,
    h: &[C64],
    sigma: &SpectrumLadder,
    side: Side,
    idx: &[(usize, usize)],
    guess: CMat,
    opt: InverseOptions,
) -> Result<(CMat, usize)> {
    let first = match newton(nu, sigma, side, idx, guess.clone(), opt) {
        Ok(r) => return Ok(r),
        Err(e) => e,
    };
    // starts whose level-k spectrum already equals the target, then the
    // guess itself, clipped, and small perturbations
    let k = guess.nrows();
    let b = mx::leading(&guess, k - 1);
    let target = sigma.level(k);
    let mut starts = Vec::new();
    let col: Vec<C64> = (0..k - 1).map(|i| guess[(i, k - 1)]).collect();
    if let Ok(p) = spectral_start(&b, h[k - 1], target, &col) {
        starts.push(p);
    }
    for r in 0..4 {
        let seed: Vec<C64> = (0..k - 1).map(|i| C64::from_polar(1.0, 2.399963 * (i + 5 * r) as f64)).collect();
        if let Ok(p) = spectral_start(&b, h[k - 1], target, &seed) {
            starts.push(p);
        }
    }
    starts.push(guess.clone());
    let mut clipped = guess.clone();
    for &(i, j) in idx {
        let z = clipped[(i, j)];
        if z.norm() > 1.0 {
            clipped[(i, j)] = z / z.norm();
        }
    }
    starts.push(clipped);
    for r in 0..4 {
        let mut p = guess.clone();
        for (m, &(i, j)) in idx.iter().enumerate() {
            p[(i, j)] = C64::from_polar(0.3, 2.399963 * (m + 7 * r) as f64);
        }
        starts.push(p);
    }
    let mut last = first;
    for st in starts {
        match continuation(nu, h, side, idx, st, opt) {
            Ok(r) => return Ok(r),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Completes the leading block `b` with a last column and row so that the
/// spectrum becomes `target`. In the eigenbasis of `b` only the products
/// `y'_i x'_i` are fixed (by interpolation at the eigenvalues of `b`); the
/// phases of `x'` come from `seed` and the moduli are balanced.
fn spectral_start(b: &CMat, hk: C64, target: &[C64], seed: &[C64]) -> Result<CMat> {
    let m = b.nrows();
    let e = mx::eigen(b, 1e-13)?;
    let d = &e.values;
    let pinv = inv(&e.vectors)?;
    let rem = |l: C64| d.iter().fold(l - hk, |a, &x| a * (l - x)) - target.iter().fold(ONE, |a, &s| a * (l - s));
    let xs = &pinv * DVector::from_column_slice(seed);
    let mut xp = DVector::<C64>::zeros(m);
    let mut yp = DVector::<C64>::zeros(m);
    for i in 0..m {
        let den = (0..m).filter(|&j| j != i).fold(ONE, |a, j| a * (d[i] - d[j]));
        let p = rem(d[i]) / den;
        let ph = if xs[i].norm() > 1e-12 { xs[i] / xs[i].norm() } else { ONE };
        xp[i] = ph * p.norm().sqrt().max(1e-8);
        yp[i] = p / xp[i];
    }
    let x = &e.vectors * xp;
    let y = yp.transpose() * pinv;
    let mut out = CMat::zeros(m + 1, m + 1);
    out.view_mut((0, 0), (m, m)).copy_from(b);
    for i in 0..m {
        out[(i, m)] = x[i];
        out[(m, i)] = y[(0, i)];
    }
    out[(m, m)] = hk;
    if !mx::is_finite(&out) {
        return Err(Error::NonConvergence);
    }
    Ok(out)
}

/// Homotopy from the data of `start` to `ν`: the Stokes pairs are blended
/// linearly (any pair with the right diagonal is admissible data), the
/// ladder is recomputed along the way, and each stage is a warm-started
/// Newton solve in the entries `idx`. Steps halve on failure.
fn continuation(
    nu: &CMat,
    h: &[C64],
    side: Side,
    idx: &[(usize, usize)],
    start: CMat,
    opt: InverseOptions,
) -> Result<(CMat, usize)> {
    let end = match side {
        Side::Hat => Which::Infinity,
        Side::Til => Which::Zero,
    };
    // shrink the free entries until the start is itself strictly
    // log-confined, with ladder equal to its own leading spectra
    let mut start = start;
    let mut found = None;
    for _ in 0..30 {
        if let Ok(nu0) = nu_from_boundary(&start, side) {
            if let (Ok(own), Ok((sets, fails))) = (
                mx::leading_spectra(&start, 1e-13),
                classify_matrix(&nu0, h, end, opt.confine),
            ) {
                let same = fails.is_empty()
                    && own.levels.iter().zip(&sets).all(|(a, b)| {
                        a.iter().all(|x| b.values.iter().any(|y| (x - y).norm() < 1e-8))
                    });
                if same {
                    found = Some(nu0);
                    break;
                }
            }
        }
        for &(i, j) in idx {
            start[(i, j)] *= 0.5;
        }
    }
    let nu0 = found.ok_or(Error::NewtonStall(f64::INFINITY))?;
    let (sp0, sm0) = stokes_full(&nu0, h)?;
    let (sp1, sm1) = stokes_full(nu, h)?;
    let e = exp_pi(h, 2.0);
    let at = |tau: f64| -> Result<(CMat, SpectrumLadder)> {
        let s = C64::from(tau);
        let sp = &sp0 + (&sp1 - &sp0) * s;
        let sm = &sm0 + (&sm1 - &sm0) * s;
        let v = inv(&sm)? * &e * sp;
        let (sets, fails) = classify_matrix(&v, h, end, opt.confine)?;
        if !fails.is_empty() {
            return Err(Error::NotLogConfined);
        }
        Ok((
            v,
            SpectrumLadder {
                levels: sets.into_iter().map(|s| s.values).collect(),
            },
        ))
    };
    let mut phi = start;
    let mut tau = 0.0;
    let mut dt: f64 = 0.125;
    let mut total = 0;
    while tau < 1.0 {
        let next = (tau + dt).min(1.0);
        let attempt = at(next).and_then(|(v, lad)| newton(&v, &lad, side, idx, phi.clone(), opt));
        match attempt {
            Ok((p, it)) => {
                phi = p;
                tau = next;
                total += it;
                dt = (dt * 1.5).min(0.25);
            }
            Err(err) => {
                dt /= 2.0;
                if dt < 1.0 / 4096.0 {
                    return Err(err);
                }
            }
        }
    }
    Ok((phi, total))
}

/// For n = 2 this is exact: with the ladder fixed, `(S₊)₁₂` is linear in
/// `a₁₂` and `(S₋)₂₁` in `a₂₁`. For larger n each pair `(i, j)` is treated
/// as its own 2×2 problem, which is a first-order start for Newton.
fn pairwise_guess(sp: &CMat, sm: &CMat, h: &[C64], sigma: &SpectrumLadder, side: Side) -> Result<CMat> {
    let n = h.len();
    let mut a = diag(h);
    for i in 0..n {
        for j in i + 1..n {
            let lad = if n == 2 {
                sigma.clone()
            } else {
                SpectrumLadder {
                    levels: vec![vec![h[i]], vec![h[i], h[j]]],
                }
            };
            let probe = |b: C64, cc: C64| mx::from_rows(&[vec![h[i], b], vec![cc, h[j]]]);
            let fp = stokes_subdiagonal(&lad, &probe(ONE, ZERO), Sign::Plus, side)?[0];
            let fm = stokes_subdiagonal(&lad, &probe(ZERO, ONE), Sign::Minus, side)?[0];
            a[(i, j)] = sp[(i, j)] / fp;
            a[(j, i)] = sm[(j, i)] / fm;
        }
    }
    Ok(a)
}

/// `ν(Φ) − ν` entrywise, then the leading-block power sums
/// `(tr (Φ^{[k]})^m − Σ λ^m)/m` for m = 2..k.
fn inverse_residual(phi: &CMat, nu: &CMat, sigma: &SpectrumLadder, side: Side) -> Result<DVector<C64>> {
    let n = phi.nrows();
    let f = nu_from_boundary(phi, side)?;
    let mut r: Vec<C64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| f[(i, j)] - nu[(i, j)]).collect();
    for k in 2..=n {
        let blk = mx::leading(phi, k);
        let mut pw = blk.clone();
        for m in 2..=k {
            pw = &pw * &blk;
            let target: C64 = sigma.level(k).iter().map(|l| l.powi(m as i32)).sum();
            r.push((mx::trace(&pw) - target) / m as f64);
        }
    }
    Ok(DVector::from_vec(r))
}

fn sup(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn newton(nu: &CMat, sigma: &SpectrumLadder, side: Side, idx: &[(usize, usize)], guess: CMat, opt: InverseOptions) -> Result<(CMat, usize)> {
    let mut phi = guess;
    let eval = |p: &CMat| inverse_residual(p, nu, sigma, side);
    let mut r = eval(&phi)?;
    let mut res = sup(&r);
    let mut it = 0;
    let goal = 1e-13 * (1.0 + max_abs(nu));
    while res > goal && it < opt.max_iter {
        it += 1;
        let mut jac = DMatrix::<C64>::zeros(r.len(), idx.len());
        for (col, &(i, j)) in idx.iter().enumerate() {
            let st = opt.step * (1.0 + phi[(i, j)].norm());
            let mut p = phi.clone();
            p[(i, j)] += st;
            jac.set_column(col, &((eval(&p)? - &r) / C64::from(st)));
        }
        // Levenberg–Marquardt: full Gauss–Newton first, damped on failure
        let jh = jac.adjoint();
        let jtj = &jh * &jac;
        let g = &jh * &r;
        let scale = jtj.diagonal().iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut mu = 0.0;
        let mut moved = false;
        for _ in 0..24 {
            let mut m = jtj.clone();
            for k in 0..m.nrows() {
                m[(k, k)] += mu * scale;
            }
            let dx = match m.svd(true, true).solve(&(-&g), 1e-15) {
                Ok(d) => d,
                Err(_) => break,
            };
            let mut p = phi.clone();
            for (k, &(i, j)) in idx.iter().enumerate() {
                p[(i, j)] += dx[k];
            }
            if let Ok(rn) = eval(&p) {
                if sup(&rn) < res {
                    phi = p;
                    r = rn;
                    res = sup(&r);
                    moved = true;
                    break;
                }
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
        }
        if !moved {
            break;
        }
    }
    if res > opt.stall {
        return Err(Error::NewtonStall(res));
    }
    Ok((phi, it))
}

/// Entrywise distance, relative to the size of each matrix in `b`.
fn data_distance(a: &MonodromyData, b: &MonodromyData) -> f64 {
    let v = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let m = |x: &CMat, y: &CMat| max_abs(&(x - y)) / (1.0 + max_abs(y));
    [
        m(&a.nu_inf, &b.nu_inf),
        m(&a.nu_zero, &b.nu_zero),
        m(&a.connection, &b.connection),
        v(&a.delta_a, &b.delta_a),
        v(&a.delta_gag, &b.delta_gag),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Boundary value `(Â₀, G₀)` of the shrinking solution with monodromy data
/// `md`. `Â₀` and `Ã₀` are reconstructed separately from `ν^{(∞)}` and
/// `ν^{(0)}` with the ladders fixed by [`classify_log_confined`]; then
/// `G₀ = (∏C(E, δÂ₀))⁻¹ · C · ∏C(−E, δÃ₀)`.
pub fn inverse_monodromy(md: &MonodromyData, opt: InverseOptions) -> Result<Inversion> {
    let cls = classify_log_confined(md, opt.confine)?;
    if !cls.verdict {
        return Err(Error::NotLogConfined);
    }
    let h_til: Vec<C64> = md.delta_gag.iter().map(|x| -x).collect();
    let (a_hat0, it1) = invert_end(&md.nu_inf, &md.delta_a, &cls.ladder(Which::Infinity), Side::Hat, opt)?;
    let (a_til0, it2) = invert_end(&md.nu_zero, &h_til, &cls.ladder(Which::Zero), Side::Til, opt)?;
    let g0 = inv(&hat_product(&a_hat0)?)? * &md.connection * til_product(&a_til0)?;
    let datum = BoundaryDatum::new(a_hat0, g0)?;
    let fwd = monodromy_data(&datum, md.chamber.direction)?;
    let residual = data_distance(&fwd, md).max(max_abs(&(&datum.a_til0 - &a_til0)));
    if residual > opt.stall {
        return Err(Error::NewtonStall(residual));
    }
    Ok(Inversion {
        datum,
        residual,
        iterations: it1 + it2,
    })
}

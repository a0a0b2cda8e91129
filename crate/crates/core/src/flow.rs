//! Isomonodromic flow in `t` from `(Â, Ĝ)` by Picard iteration, and the
//! n = 2 passage from boundary values `(Â₀, G₀)` to `(Â, Ĝ)`.

use crate::closed::BoundaryDatum;
use crate::error::{Error, Result};
use crate::matrix::{self as mx, c, diag, diag_of, inv, max_abs, CMat, C64, ONE};
use crate::ode::{dp45, LinearSystemSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `(U, V)` through the coordinates `u`, `Ṽ = (V − v₁)/(v_n − v₁)`, `w₀ = v₁`
/// and `t = (v_n − v₁)(u_n − u₁)`, so that `V(t) = w₀ + t·Ṽ/(u_n − u₁)`.
/// Branches of logarithms follow the direction `d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coordinates {
    #[serde(with = "crate::io::cvec")]
    pub u: Vec<C64>,
    #[serde(with = "crate::io::cvec")]
    pub v_shape: Vec<C64>,
    pub w0: C64,
    pub direction: f64,
}

/// `ln|z| + i·arg z` with `arg z ∈ (lo, lo + 2π]`.
pub(crate) fn log_from(z: C64, lo: f64) -> C64 {
    let mut a = z.arg();
    while a <= lo {
        a += 2.0 * PI;
    }
    while a > lo + 2.0 * PI {
        a -= 2.0 * PI;
    }
    c(z.norm().ln(), a)
}

impl Coordinates {
    pub fn new(u: Vec<C64>, v_shape: Vec<C64>, w0: C64, direction: f64) -> Result<Self> {
        let n = u.len();
        if n < 2 || v_shape.len() != n {
            return Err(Error::Input("coordinates need n >= 2 entries in u and v".into()));
        }
        if (v_shape[0]).norm() > 1e-14 || (v_shape[n - 1] - ONE).norm() > 1e-14 {
            return Err(Error::Input("v_shape must start at 0 and end at 1".into()));
        }
        if (u[n - 1] - u[0]).norm() == 0.0 {
            return Err(Error::Input("u_n = u_1".into()));
        }
        Ok(Coordinates {
            u,
            v_shape,
            w0,
            direction,
        })
    }

    /// From concrete `(U, V)`; returns the coordinates and `t`.
    pub fn from_uv(u: &[C64], v: &[C64], direction: f64) -> Result<(Self, C64)> {
        let n = u.len();
        if n < 2 || v.len() != n {
            return Err(Error::Input("coordinates need n >= 2 entries in u and v".into()));
        }
        let span = v[n - 1] - v[0];
        if span.norm() == 0.0 {
            return Err(Error::Input("v_n = v_1".into()));
        }
        let shape: Vec<C64> = v.iter().map(|x| (x - v[0]) / span).collect();
        let t = span * (u[n - 1] - u[0]);
        Ok((Coordinates::new(u.to_vec(), shape, v[0], direction)?, t))
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn span(&self) -> C64 {
        self.u[self.n() - 1] - self.u[0]
    }

    /// `log(u_n − u₁)` with argument in `(−π − d, −d]`.
    pub fn log_span(&self) -> C64 {
        log_from(self.span(), -PI - self.direction)
    }

    /// `log t` with argument in `(−π − 2d, π − 2d]`.
    pub fn log_t(&self, t: C64) -> C64 {
        log_from(t, -PI - 2.0 * self.direction)
    }

    pub fn v_at(&self, t: C64) -> Vec<C64> {
        let f = t / self.span();
        self.v_shape.iter().map(|x| self.w0 + f * x).collect()
    }

    /// `log w₁ = log t + log Ṽ₂ − log(u_n − u₁)`.
    pub fn log_w1(&self, log_t: C64) -> C64 {
        log_t + self.v_shape[1].ln() - self.log_span()
    }

    /// `(z₀, z₁, …, z_{n−1})`.
    pub fn z(&self) -> Vec<C64> {
        let n = self.n();
        let mut z = vec![self.u[0]];
        if n > 1 {
            z.push(self.u[1] - self.u[0]);
        }
        for k in 2..n {
            z.push((self.u[k] - self.u[0]) / (self.u[k - 1] - self.u[0]));
        }
        z
    }

    /// `(w_{n−1}, …, w₂, w₀)` at `t`.
    pub fn w(&self, t: C64) -> Vec<C64> {
        let v = self.v_at(t);
        let n = self.n();
        let mut w: Vec<C64> = (2..n).rev().map(|k| (v[k] - v[0]) / (v[k - 1] - v[0])).collect();
        w.push(v[0]);
        w
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub(crate) fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q {
        let mut z = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(q, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(q, z);
        x[q - 1 - i] = z;
        w[q - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(P_q(x), P_q'(x))`.
fn legendre(q: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, q as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn legendre_all(q: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0, x];
    for k in 2..=q {
        p.push(((2 * k - 1) as f64 * x * p[k - 1] - (k - 1) as f64 * p[k - 2]) / k as f64);
    }
    p.truncate(q + 1);
    p
}

/// Matrix `Q` with `∫_{−1}^{x_i} f = Σ_j Q_ij f(x_j)` for polynomials of
/// degree < q.
fn cumulative_matrix(x: &[f64]) -> DMatrix<f64> {
    let q = x.len();
    let v = DMatrix::from_fn(q, q, |i, j| legendre_all(q, x[i])[j]);
    let wi = DMatrix::from_fn(q, q, |i, j| {
        let p = legendre_all(q + 1, x[i]);
        if j == 0 {
            x[i] + 1.0
        } else {
            (p[j + 1] - p[j - 1]) / (2 * j + 1) as f64
        }
    });
    wi * v.try_inverse().expect("Legendre Vandermonde is invertible")
}

/// Geometrically graded panels `[2^{−m−1}, 2^{−m}]` on (0, 1].
struct Grid {
    sigma: Vec<f64>,
    /// half length of the panel each node belongs to
    half: Vec<f64>,
    q: usize,
    w: Vec<f64>,
    qm: DMatrix<f64>,
    panels: usize,
}

impl Grid {
    fn new(panels: usize, q: usize) -> Self {
        let (x, w) = gauss_legendre(q);
        let qm = cumulative_matrix(&x);
        let mut sigma = Vec::with_capacity(panels * q);
        let mut half = Vec::with_capacity(panels * q);
        for m in (0..panels).rev() {
            let hi = 0.5f64.powi(m as i32);
            let lo = hi / 2.0;
            let h = (hi - lo) / 2.0;
            for &xi in &x {
                sigma.push(lo + h * (xi + 1.0));
                half.push(h);
            }
        }
        Grid {
            sigma,
            half,
            q,
            w,
            qm,
            panels,
        }
    }

    /// Cumulative integrals `∫_0^{σ_i} f dσ` at every node, plus the total.
    fn cumulative(&self, f: &[CMat]) -> (Vec<CMat>, CMat) {
        let (r, cc) = (f[0].nrows(), f[0].ncols());
        let mut base = CMat::zeros(r, cc);
        let mut out = Vec::with_capacity(f.len());
        for p in 0..self.panels {
            let off = p * self.q;
            let h = C64::from(self.half[off]);
            for i in 0..self.q {
                let mut acc = base.clone();
                for j in 0..self.q {
                    acc += &f[off + j] * (h * self.qm[(i, j)]);
                }
                out.push(acc);
            }
            for j in 0..self.q {
                base += &f[off + j] * (h * self.w[j]);
            }
        }
        (out, base)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Gauss–Legendre order per panel
    pub order: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tol: 1e-14,
            max_iter: 200,
            order: 12,
        }
    }
}

/// `(A(t), G̃(t), B̃(t))` with `G̃ = t^{−Â} G w₁^{δ(G⁻¹AG)}`, and the
/// recovered `G(t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowState {
    pub t: C64,
    pub log_t: C64,
    #[serde(with = "crate::io::cmat")]
    pub a: CMat,
    #[serde(with = "crate::io::cmat")]
    pub g_tilde: CMat,
    #[serde(with = "crate::io::cmat")]
    pub b_tilde: CMat,
    #[serde(with = "crate::io::cmat")]
    pub g: CMat,
    pub iteration: usize,
    /// sup-norm change per iteration
    pub residuals: Vec<f64>,
    /// geometric decay estimate of the residuals
    pub ratio: f64,
    /// `|B̃ − G̃ṼG̃⁻¹|` at `t`
    pub b_consistency: f64,
    /// `|A − Â|`, expected to be O(|t|^{1−σ₁})
    pub drift: f64,
    /// `σ₁ = max |Re(μ_i − μ_j)|` over the eigenvalues of `Â`
    pub sigma1: f64,
    /// `t` where Picard converged, when the rest was integrated as an ODE
    pub continued_from: Option<C64>,
}

impl FlowState {
    /// The two-pole linear system at this point of the flow.
    pub fn system(&self, coords: &Coordinates) -> LinearSystemSpec {
        LinearSystemSpec::two_pole(coords.u.clone(), coords.v_at(self.t), self.a.clone(), self.g.clone())
    }
}

struct Eig {
    p: CMat,
    pi: CMat,
    lam: Vec<C64>,
}

fn eig_of(a: &CMat) -> Result<Eig> {
    let e = mx::eigen(a, 1e-12)?;
    if e.condition > 1e8 {
        return Err(Error::NearDefective(e.condition));
    }
    Ok(Eig {
        pi: inv(&e.vectors)?,
        p: e.vectors,
        lam: e.values,
    })
}

/// `x ∘ s^{f(λ_i − λ_j)}` entrywise.
fn hadamard_pow(x: &CMat, lam: &[C64], log_s: C64, f: f64) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (f * (lam[i] - lam[j]) * log_s).exp())
}

/// Solve the t-flow with `A → Â`, `t^{−Â} G w₁^{δ(G⁻¹AG)} → Ĝ`.
pub fn picard_flow(
    a_hat: &CMat,
    g_hat: &CMat,
    coords: &Coordinates,
    t: C64,
    opt: FlowOptions,
) -> Result<FlowState> {
    let n = coords.n();
    if a_hat.nrows() != n || g_hat.nrows() != n {
        return Err(Error::Input("A_hat, G_hat and coordinates disagree in size".into()));
    }
    let e = eig_of(a_hat)?;
    let spread = e
        .lam
        .iter()
        .flat_map(|a| e.lam.iter().map(move |b| (a.re - b.re).abs()))
        .fold(0.0, f64::max);
    if spread >= 1.0 {
        return Err(Error::SpreadTooLarge(spread));
    }
    if t.norm() == 0.0 {
        return Err(Error::Input("t = 0".into()));
    }
    let mut last = None;
    for m in 0..=20 {
        let tm = t / 2f64.powi(m);
        match picard_at(a_hat, g_hat, &e, spread, coords, tm, opt) {
            Ok(st) if m == 0 => return Ok(st),
            Ok(st) => return continue_flow(st, a_hat, g_hat, coords, t, opt),
            Err(err @ Error::DivergentIteration(_)) => last = Some(err),
            Err(err) => return Err(err),
        }
    }
    Err(last.unwrap_or(Error::DivergentIteration(f64::INFINITY)))
}

fn picard_at(
    a_hat: &CMat,
    g_hat: &CMat,
    e: &Eig,
    spread: f64,
    coords: &Coordinates,
    t: C64,
    opt: FlowOptions,
) -> Result<FlowState> {
    let log_t = coords.log_t(t);
    // truncation below σ_min costs about σ_min^{1−spread}
    let panels = ((55.0 / (1.0 - spread)).ceil() as usize).clamp(40, 830);
    let grid = Grid::new(panels, opt.order);
    let nodes = grid.sigma.len();
    let ut = diag(&coords.u.iter().map(|x| x / coords.span()).collect::<Vec<_>>());
    let vt = diag(&coords.v_shape);
    let gi = inv(g_hat)?;
    // everything in the eigenbasis of Â
    let up = &e.pi * &ut * &e.p;
    let b_hat = &e.pi * (g_hat * &vt * &gi) * &e.p;
    let g0 = &e.pi * g_hat;
    let lam = &e.lam;
    let lamd = diag(lam);
    let log_s: Vec<C64> = grid.sigma.iter().map(|&s| log_t + s.ln()).collect();
    let mut a_k: Vec<CMat> = vec![lamd.clone(); nodes];
    let mut b_k: Vec<CMat> = vec![b_hat.clone(); nodes];
    let mut g_k: Vec<CMat> = vec![g0.clone(); nodes];
    let (mut a_end, mut b_end, mut g_end) = (lamd.clone(), b_hat.clone(), g0.clone());
    let mut residuals = Vec::new();
    let scale = 1.0 + max_abs(&b_hat) + max_abs(&g0);
    let mut ratio = 0.0;
    let mut iteration = 0;
    let mut converged = false;
    while iteration < opt.max_iter {
        iteration += 1;
        // A' = Λ + t ∫ [Ũ', s^Λ B̃' s^{−Λ}] dσ
        let fa: Vec<CMat> = (0..nodes)
            .map(|i| hadamard_pow(&b_k[i], lam, log_s[i], 1.0) * t)
            .collect();
        let (ia, ia_end) = grid.cumulative(&fa);
        let new_a: Vec<CMat> = ia.iter().map(|x| &lamd + mx::comm(&up, x)).collect();
        let new_a_end = &lamd + mx::comm(&up, &ia_end);
        // s^{−Λ}(A' − Λ)s^{Λ}, integrated against dσ/σ
        let y: Vec<CMat> = (0..nodes)
            .map(|i| hadamard_pow(&(&a_k[i] - &lamd), lam, log_s[i], -1.0) / C64::from(grid.sigma[i]))
            .collect();
        let fg: Vec<CMat> = (0..nodes).map(|i| &y[i] * &g_k[i]).collect();
        let fb: Vec<CMat> = (0..nodes).map(|i| mx::comm(&y[i], &b_k[i])).collect();
        let (ig, ig_end) = grid.cumulative(&fg);
        let (ib, ib_end) = grid.cumulative(&fb);
        let new_g: Vec<CMat> = ig.iter().map(|x| &g0 + x).collect();
        let new_b: Vec<CMat> = ib.iter().map(|x| &b_hat + x).collect();
        let mut delta: f64 = 0.0;
        for i in 0..nodes {
            // compare in the gauge where entries stay bounded
            delta = delta
                .max(max_abs(&hadamard_pow(&(&new_a[i] - &a_k[i]), lam, log_s[i], -1.0)))
                .max(max_abs(&(&new_g[i] - &g_k[i])))
                .max(max_abs(&(&new_b[i] - &b_k[i])));
        }
        if !delta.is_finite() {
            return Err(Error::DivergentIteration(f64::INFINITY));
        }
        a_k = new_a;
        g_k = new_g;
        b_k = new_b;
        a_end = new_a_end;
        g_end = &g0 + ig_end;
        b_end = &b_hat + ib_end;
        residuals.push(delta);
        // coupled recursions contract unevenly from one sweep to the next,
        // so the rate is a geometric mean over three sweeps
        let k = residuals.len();
        if k >= 4 {
            let back = residuals[k - 4];
            ratio = if back > 0.0 { (delta / back).powf(1.0 / 3.0) } else { 0.0 };
        } else if k >= 2 && residuals[k - 2] > 0.0 {
            ratio = delta / residuals[k - 2];
        }
        if iteration > 6 && ratio >= 1.0 && delta > opt.tol * scale {
            return Err(Error::DivergentIteration(ratio));
        }
        if delta <= opt.tol * scale && (ratio < 0.9 || iteration <= 2) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::DivergentIteration(ratio));
    }
    let a = &e.p * &a_end * &e.pi;
    let g_tilde = &e.p * &g_end;
    let b_tilde = &e.p * &b_end * &e.pi;
    let dgag = diag_of(&(&gi * a_hat * g_hat));
    let g = recover_g(e, log_t, &g_tilde, &dgag, coords.log_w1(log_t));
    let b_consistency = max_abs(&(&b_tilde - &g_tilde * &vt * inv(&g_tilde)?));
    Ok(FlowState {
        t,
        log_t,
        drift: max_abs(&(&a - a_hat)),
        sigma1: spread,
        a,
        g_tilde,
        b_tilde,
        g,
        iteration,
        residuals,
        ratio,
        b_consistency,
        continued_from: None,
    })
}

/// `G = t^{Â} G̃ w₁^{−δ(G⁻¹AG)}`.
fn recover_g(e: &Eig, log_t: C64, g_tilde: &CMat, dgag: &[C64], log_w1: C64) -> CMat {
    let tp = &e.p * diag(&e.lam.iter().map(|l| (l * log_t).exp()).collect::<Vec<_>>()) * &e.pi;
    tp * g_tilde * diag(&dgag.iter().map(|d| (-d * log_w1).exp()).collect::<Vec<_>>())
}

/// Carry a converged state to `t` along the ray by integrating
/// `dA/dt = [Ũ, GṼG⁻¹]`, `dG/dt = (AG − G·δ(G⁻¹AG))/t`.
fn continue_flow(
    st: FlowState,
    a_hat: &CMat,
    g_hat: &CMat,
    coords: &Coordinates,
    t: C64,
    opt: FlowOptions,
) -> Result<FlowState> {
    let n = coords.n();
    let ut = diag(&coords.u.iter().map(|x| x / coords.span()).collect::<Vec<_>>());
    let vt = diag(&coords.v_shape);
    let t0 = st.t;
    let mut y0 = CMat::zeros(n, 2 * n);
    y0.view_mut((0, 0), (n, n)).copy_from(&st.a);
    y0.view_mut((0, n), (n, n)).copy_from(&st.g);
    let f = |s: f64, y: &CMat| -> CMat {
        let tt = t0 + (t - t0) * s;
        let a = y.view((0, 0), (n, n)).into_owned();
        let g = y.view((0, n), (n, n)).into_owned();
        let gi = inv(&g).unwrap_or_else(|_| CMat::from_element(n, n, C64::new(f64::NAN, 0.0)));
        let da = mx::comm(&ut, &(&g * &vt * &gi));
        let dg = (&a * &g - &g * mx::delta(&(&gi * &a * &g))) / tt;
        let mut out = CMat::zeros(n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&(da * (t - t0)));
        out.view_mut((0, n), (n, n)).copy_from(&(dg * (t - t0)));
        out
    };
    let y = dp45(y0, f, opt.tol.max(1e-13), |_| {})?;
    let a = y.view((0, 0), (n, n)).into_owned();
    let g = y.view((0, n), (n, n)).into_owned();
    let log_t = coords.log_t(t);
    let e = eig_of(a_hat)?;
    let gi = inv(g_hat)?;
    let dgag = diag_of(&(&gi * a_hat * g_hat));
    let log_w1 = coords.log_w1(log_t);
    // G̃ = t^{−Â} G w₁^{δ}
    let tm = &e.p * diag(&e.lam.iter().map(|l| (-l * log_t).exp()).collect::<Vec<_>>()) * &e.pi;
    let g_tilde = tm * &g * diag(&dgag.iter().map(|d| (d * log_w1).exp()).collect::<Vec<_>>());
    let tpa = &e.p * diag(&e.lam.iter().map(|l| (l * log_t).exp()).collect::<Vec<_>>()) * &e.pi;
    let b = inv(&tpa)? * (&g * &vt * inv(&g)?) * &tpa;
    let b_consistency = max_abs(&(&b - &g_tilde * &vt * inv(&g_tilde)?));
    Ok(FlowState {
        t,
        log_t,
        drift: max_abs(&(&a - a_hat)),
        sigma1: st.sigma1,
        b_consistency,
        a,
        g_tilde,
        b_tilde: b,
        g,
        iteration: st.iteration,
        residuals: st.residuals,
        ratio: st.ratio,
        continued_from: Some(t0),
    })
}

/// `(Â, Ĝ)` from boundary values for n = 2:
/// `Â = z₁^{−δÂ₀} Â₀ z₁^{δÂ₀}`, `Ĝ = z₁^{−δÂ₀} G₀`.
pub fn boundary_to_hat(bd: &BoundaryDatum, coords: &Coordinates) -> Result<(CMat, CMat)> {
    if bd.n() != 2 || coords.n() != 2 {
        return Err(Error::UnsupportedRank(bd.n()));
    }
    bd.check()?;
    let lz = coords.log_span();
    let d = diag_of(&bd.a_hat0);
    let zm = diag(&d.iter().map(|x| (-x * lz).exp()).collect::<Vec<_>>());
    let zp = diag(&d.iter().map(|x| (x * lz).exp()).collect::<Vec<_>>());
    let a_hat = &zm * &bd.a_hat0 * &zp;
    let g_hat = &zm * &bd.g0;
    Ok((a_hat, g_hat))
}

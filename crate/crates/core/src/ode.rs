//! Numerical monodromy of `dF/dξ = (U + A/ξ + B/ξ²) F`.
//!
//! Canonical solutions at ∞ are built from two inward rays at `d ± π/2`,
//! anchored by the optimally truncated formal series. On each ray only the
//! recessive directions are polluted, so a UL split of the transition
//! between the two rays isolates the canonical solution.

use crate::error::{Error, Result};
use crate::matrix::{self as mx, c, diag, eye, inv, max_abs, CMat, C64, I, ONE, ZERO};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    OnePole,
    TwoPole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum End {
    Infinity,
    Zero,
}

/// `∂F/∂ξ = (U + A/ξ + G V G⁻¹/ξ²) F`; for one pole `V` is empty and the
/// last term is absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearSystemSpec {
    pub kind: Kind,
    #[serde(with = "crate::io::cvec")]
    pub u: Vec<C64>,
    #[serde(with = "crate::io::cvec", default)]
    pub v: Vec<C64>,
    #[serde(with = "crate::io::cmat")]
    pub a: CMat,
    #[serde(with = "crate::io::cmat_opt", default)]
    pub g: Option<CMat>,
}

impl LinearSystemSpec {
    pub fn one_pole(u: Vec<C64>, phi: CMat) -> Self {
        LinearSystemSpec {
            kind: Kind::OnePole,
            u,
            v: vec![],
            a: phi,
            g: None,
        }
    }

    pub fn two_pole(u: Vec<C64>, v: Vec<C64>, a: CMat, g: CMat) -> Self {
        LinearSystemSpec {
            kind: Kind::TwoPole,
            u,
            v,
            a,
            g: Some(g),
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 || self.a.nrows() != n || self.a.ncols() != n {
            return Err(Error::Input("dimension mismatch between U and A".into()));
        }
        if self.kind == Kind::TwoPole {
            let g = self.g.as_ref().ok_or(Error::Input("two-pole spec needs G".into()))?;
            if self.v.len() != n || g.nrows() != n || g.ncols() != n {
                return Err(Error::Input("dimension mismatch in V or G".into()));
            }
            distinct(&self.v, "V")?;
        }
        distinct(&self.u, "U")
    }

    pub fn b(&self) -> Result<CMat> {
        match self.kind {
            Kind::OnePole => Ok(CMat::zeros(self.n(), self.n())),
            Kind::TwoPole => {
                let g = self.g.as_ref().ok_or(Error::Input("missing G".into()))?;
                Ok(g * diag(&self.v) * inv(g)?)
            }
        }
    }

    /// Coefficient matrix at ξ.
    pub fn coeff(&self, xi: C64) -> Result<CMat> {
        Ok(Coeffs {
            u: self.u.clone(),
            a: self.a.clone(),
            b: self.b()?,
        }
        .at(xi))
    }
}

fn distinct(x: &[C64], name: &str) -> Result<()> {
    let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            if (x[i] - x[j]).norm() <= 1e-12 * scale {
                return Err(Error::Input(format!("{name} has repeated entries")));
            }
        }
    }
    Ok(())
}

/// A point on the universal cover of ℂ*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pt {
    pub r: f64,
    pub arg: f64,
}

impl Pt {
    pub fn new(r: f64, arg: f64) -> Self {
        Pt { r, arg }
    }
    pub fn z(&self) -> C64 {
        C64::from_polar(self.r, self.arg)
    }
    pub fn ln(&self) -> C64 {
        c(self.r.ln(), self.arg)
    }
}

/// Piecewise path; rays keep their argument, arcs sweep it. Rays are
/// parameterized geometrically in the radius, so a ray spanning many decades
/// costs steps per decade rather than per unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Ray { arg: f64, from: f64, to: f64 },
    Arc { radius: f64, from: f64, to: f64 },
}

impl Segment {
    fn at(&self, s: f64) -> (C64, C64) {
        match *self {
            Segment::Ray { arg, from, to } => {
                let l = (to / from).ln();
                let z = C64::from_polar(from * (s * l).exp(), arg);
                (z, z * l)
            }
            Segment::Arc { radius, from, to } => {
                let z = C64::from_polar(radius, from + s * (to - from));
                (z, I * (to - from) * z)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Coeffs {
    pub u: Vec<C64>,
    pub a: CMat,
    pub b: CMat,
}

impl Coeffs {
    pub fn at(&self, z: C64) -> CMat {
        let zi = ONE / z;
        let mut m = &self.a * zi + &self.b * (zi * zi);
        for (i, &ui) in self.u.iter().enumerate() {
            m[(i, i)] += ui;
        }
        m
    }
}

// Dormand–Prince 5(4)
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - (-92097.0 / 339200.0);
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &CMat, terms: &[(f64, &CMat)], h: f64) -> CMat {
    let mut out = y.clone();
    for (w, k) in terms {
        if *w != 0.0 {
            out += *k * C64::from(w * h);
        }
    }
    out
}

/// Integrate `dY/ds = f(s, Y)` for s ∈ [0, 1]. `hook` may right-multiply
/// the state by a constant after each accepted step.
pub(crate) fn dp45<F, H>(y0: CMat, f: F, tol: f64, mut hook: H) -> Result<CMat>
where
    F: Fn(f64, &CMat) -> CMat,
    H: FnMut(&mut CMat),
{
    let mut y = y0;
    let mut s = 0.0;
    let mut k1 = f(0.0, &y);
    let rate = max_abs(&k1) / max_abs(&y).max(1e-300);
    let mut h = (0.05 / rate.max(1e-12)).min(0.1).max(1e-8);
    let n = y.ncols();
    let mut steps = 0usize;
    while s < 1.0 {
        if s + h > 1.0 {
            h = 1.0 - s;
        }
        let k2 = f(s + C2 * h, &axpy(&y, &[(A21, &k1)], h));
        let k3 = f(s + C3 * h, &axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = f(s + C4 * h, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = f(
            s + C5 * h,
            &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        );
        let k6 = f(
            s + h,
            &axpy(
                &y,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                h,
            ),
        );
        let ynew = axpy(
            &y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            h,
        );
        let k7 = f(s + h, &ynew);
        let err = axpy(
            &CMat::zeros(y.nrows(), n),
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
            h,
        );
        if !mx::is_finite(&ynew) || !mx::is_finite(&err) {
            return Err(Error::NonFiniteState);
        }
        let mut en: f64 = 0.0;
        for j in 0..n {
            let mut sc: f64 = 1e-300;
            for i in 0..y.nrows() {
                sc = sc.max(y[(i, j)].norm()).max(ynew[(i, j)].norm());
            }
            for i in 0..y.nrows() {
                en = en.max(err[(i, j)].norm() / (tol * sc));
            }
        }
        if en <= 1.0 {
            s += h;
            y = ynew;
            hook(&mut y);
            // the hook may have changed y, so k7 cannot be reused
            k1 = f(s, &y);
            steps += 1;
            if steps > 20_000_000 {
                return Err(Error::StepUnderflow(s));
            }
        }
        let fac = if en == 0.0 { 5.0 } else { 0.9 * en.powf(-0.2) };
        h *= fac.clamp(0.2, 5.0);
        if h < 1e-14 && s < 1.0 {
            return Err(Error::StepUnderflow(s));
        }
    }
    Ok(y)
}

pub(crate) fn transport(co: &Coeffs, seg: Segment, y0: CMat, tol: f64) -> Result<CMat> {
    dp45(
        y0,
        |s, y| {
            let (z, dz) = seg.at(s);
            co.at(z) * y * dz
        },
        tol,
        |_| {},
    )
}

/// Transport a fundamental matrix along a piecewise path.
pub fn integrate(spec: &LinearSystemSpec, path: &[Segment], f_start: &CMat, tol: f64) -> Result<CMat> {
    spec.validate()?;
    let co = Coeffs {
        u: spec.u.clone(),
        a: spec.a.clone(),
        b: spec.b()?,
    };
    let mut f = f_start.clone();
    for seg in path {
        f = transport(&co, *seg, f, tol)?;
    }
    Ok(f)
}

/// Transport along an arc split into pieces of at most π/4.
pub(crate) fn arc(co: &Coeffs, r: f64, from: f64, to: f64, y0: CMat, tol: f64) -> Result<CMat> {
    let pieces = ((to - from).abs() / (PI / 4.0)).ceil().max(1.0) as usize;
    let mut y = y0;
    for p in 0..pieces {
        let a0 = from + (to - from) * p as f64 / pieces as f64;
        let a1 = from + (to - from) * (p + 1) as f64 / pieces as f64;
        y = transport(co, Segment::Arc { radius: r, from: a0, to: a1 }, y, tol)?;
    }
    Ok(y)
}

fn same(a: C64, b: C64, scale: f64) -> bool {
    (a - b).norm() <= 1e-12 * scale
}

/// Formal solution `(Σ H_k ξ^{-k}) ξ^Λ e^{ξU}`; the blocks of `a` on equal
/// entries of `u` must already be diagonal.
pub(crate) fn formal_series(u: &[C64], a: &CMat, b: &CMat, kmax: usize) -> Vec<CMat> {
    let n = u.len();
    let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let lam: Vec<C64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut hs = vec![eye(n)];
    let mut prev = CMat::zeros(n, n);
    for k in 0..kmax {
        let hk = hs[k].clone();
        let r = -&hk * C64::from(k as f64) + &hk * diag(&lam) - a * &hk - b * &prev;
        let mut next = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if !same(u[i], u[j], scale) {
                    next[(i, j)] = r[(i, j)] / (u[i] - u[j]);
                }
            }
        }
        let bh = b * &hk;
        for i in 0..n {
            for j in 0..n {
                if same(u[i], u[j], scale) {
                    let mut acc = bh[(i, j)];
                    for l in 0..n {
                        if !same(u[l], u[i], scale) {
                            acc += a[(i, l)] * next[(l, j)];
                        }
                    }
                    next[(i, j)] = acc / (lam[j] - lam[i] - C64::from((k + 1) as f64));
                }
            }
        }
        if !mx::is_finite(&next) || max_abs(&next) > 1e250 {
            break;
        }
        prev = hk;
        hs.push(next);
    }
    hs
}

/// Smallest radius (doubling from `r0`) at which the optimally truncated
/// series has its smallest term below `target`. Returns (R, terms kept).
pub(crate) fn anchor_radius(hs: &[CMat], r0: f64, target: f64) -> (f64, usize, f64) {
    let norms: Vec<f64> = hs.iter().map(max_abs).collect();
    let mut r = r0;
    let mut best = (r0, 1, f64::INFINITY);
    for _ in 0..12 {
        let mut tmin = f64::INFINITY;
        let mut kmin = 1;
        for (k, nk) in norms.iter().enumerate().skip(1) {
            let t = nk * r.powi(-(k as i32));
            if t < tmin {
                tmin = t;
                kmin = k;
            }
            if t == 0.0 {
                break;
            }
        }
        best = (r, kmin, tmin);
        if tmin < target {
            return best;
        }
        r *= 2.0;
    }
    best
}

fn eval_series(hs: &[CMat], kept: usize, z: C64) -> CMat {
    let n = hs[0].nrows();
    let zi = ONE / z;
    let mut acc = CMat::zeros(n, n);
    for k in (0..kept).rev() {
        acc = acc * zi + &hs[k];
    }
    acc
}

/// Canonical solutions at ∞ of one irregular end.
pub(crate) struct InfEnd {
    pub co: Coeffs,
    pub lam: Vec<C64>,
    hs: Vec<CMat>,
    pub r_anchor: f64,
    kept: usize,
    pub anchor_err: f64,
    pub r_match: f64,
    tol: f64,
}

impl InfEnd {
    /// `co` must have distinct `u` or diagonal blocks on repeated ones.
    pub fn new(co: Coeffs, r_match: f64, tol: f64, r_anchor_min: Option<f64>) -> Result<Self> {
        let n = co.u.len();
        let scale = co.u.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut gap = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if !same(co.u[i], co.u[j], scale) {
                    gap = gap.min((co.u[i] - co.u[j]).norm());
                }
            }
        }
        let lam: Vec<C64> = (0..n).map(|i| co.a[(i, i)]).collect();
        let hs = formal_series(&co.u, &co.a, &co.b, 150);
        let r0 = if gap.is_finite() { (8.0 / gap).max(2.0 * r_match) } else { 2.0 * r_match };
        let r0 = r0.max(r_anchor_min.unwrap_or(0.0));
        let (r, kept, err) = anchor_radius(&hs, r0, 0.1 * tol);
        Ok(InfEnd {
            co,
            lam,
            hs,
            r_anchor: r,
            kept,
            anchor_err: err,
            r_match,
            tol,
        })
    }

    fn gauge(&self, p: Pt) -> CMat {
        let l = p.ln();
        let z = p.z();
        diag(
            &self
                .lam
                .iter()
                .zip(&self.co.u)
                .map(|(&la, &u)| (la * l + u * z).exp())
                .collect::<Vec<_>>(),
        )
    }

    /// Gauged solution on the ray of argument `theta`, from the anchor
    /// down to the matching radius, cleaned of recessive pollution.
    pub fn ray_w(&self, theta: f64) -> Result<CMat> {
        let n = self.co.u.len();
        let rot = C64::from_polar(1.0, theta);
        let scale = self.co.u.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let growth: Vec<f64> = self.co.u.iter().map(|u| (u * rot).re).collect();
        let rec: Vec<Vec<usize>> = (0..n)
            .map(|q| {
                (0..n)
                    .filter(|&p| growth[p] < growth[q] - 1e-12 * scale)
                    .collect()
            })
            .collect();
        let clean = |w: &mut CMat| {
            let w0 = w.clone();
            for q in 0..n {
                let s = &rec[q];
                if s.is_empty() {
                    continue;
                }
                let wss = mx::sub(&w0, s, s);
                let rhs = CMat::from_fn(s.len(), 1, |i, _| w0[(s[i], q)]);
                if let Some(alpha) = wss.lu().solve(&rhs) {
                    for i in 0..n {
                        let mut acc = ZERO;
                        for (t, &p) in s.iter().enumerate() {
                            acc += w0[(i, p)] * alpha[(t, 0)];
                        }
                        w[(i, q)] -= acc;
                    }
                }
            }
        };
        let p0 = Pt::new(self.r_anchor, theta);
        let mut w = eval_series(&self.hs, self.kept, p0.z());
        clean(&mut w);
        let seg = Segment::Ray {
            arg: theta,
            from: self.r_anchor,
            to: self.r_match,
        };
        let udiag = diag(&self.co.u);
        let lam = diag(&self.lam);
        let co = &self.co;
        dp45(
            w,
            |s, y| {
                let (z, dz) = seg.at(s);
                (co.at(z) * y - y * (&udiag + &lam / z)) * dz
            },
            self.tol,
            clean,
        )
    }

    /// Ray solution anchored on the sheet `theta`, as F at radius r_match.
    pub fn ray_f(&self, w: &CMat, theta: f64) -> CMat {
        w * self.gauge(Pt::new(self.r_match, theta))
    }

    pub fn arc(&self, from: f64, to: f64, y: CMat) -> Result<CMat> {
        arc(&self.co, self.r_match, from, to, y, self.tol)
    }

    /// Positions ordered by decreasing Im(u e^{i dir}); ties keep index order.
    pub fn order(&self, dir: f64) -> Vec<usize> {
        let rot = C64::from_polar(1.0, dir);
        let key: Vec<f64> = self.co.u.iter().map(|u| (u * rot).im).collect();
        let mut idx: Vec<usize> = (0..key.len()).collect();
        idx.sort_by(|&a, &b| key[b].partial_cmp(&key[a]).unwrap().then(a.cmp(&b)));
        idx
    }

    /// Canonical solution for direction `dir` from the two ray solutions
    /// already transported to argument `dir`.
    pub fn combine(&self, dir: f64, y_plus: &CMat, y_minus: &CMat) -> Result<(CMat, f64)> {
        let n = y_plus.nrows();
        let ord = self.order(dir);
        let m = inv(y_plus)? * y_minus;
        // reversed order turns UL into LU
        let rev: Vec<usize> = ord.iter().rev().cloned().collect();
        let mp = mx::sub(&m, &rev, &rev);
        let (_l1, d, u1) = mx::unit_lu(&mp)?;
        let dev = d.iter().map(|x| (x - ONE).norm()).fold(0.0, f64::max);
        let mut lt = eye(n);
        for p in 0..n {
            for q in 0..n {
                lt[(rev[p], rev[q])] = u1[(p, q)];
            }
        }
        Ok((y_minus * inv(&lt)?, dev))
    }
}

/// Everything one gets at the ∞ end for a direction `d`.
#[derive(Debug, Clone)]
pub struct EndData {
    /// canonical F_d at radius r_match, argument d
    pub f_d: CMat,
    pub s_plus: CMat,
    pub s_minus: CMat,
    pub nu: CMat,
    pub r_match: f64,
    pub r_anchor: f64,
    pub anchor_err: f64,
    /// largest deviation from the identity of the UL middle factor
    pub split_dev: f64,
    pub tri_residual: f64,
}

pub(crate) fn end_data(e: &InfEnd, d: f64) -> Result<EndData> {
    let h = PI / 2.0;
    let w_up = e.ray_w(d + h)?;
    let w_dn = e.ray_w(d - h)?;
    let y = |w: &CMat, th: f64| -> Result<CMat> { e.arc(th, d, e.ray_f(w, th)) };
    let y_p = y(&w_up, d + h)?; // sheet d+π/2
    let y_m = y(&w_dn, d - h)?; // sheet d−π/2
    let y_pp = y(&w_dn, d + 3.0 * h)?; // sheet d+3π/2
    let y_mm = y(&w_up, d - 3.0 * h)?; // sheet d−3π/2
    let (f_d, dev0) = e.combine(d, &y_p, &y_m)?;
    // F_{d+π}: plus ray d+3π/2, minus ray d+π/2; the split only needs
    // both at a common point, so argument d is fine with the order of d+π.
    let (f_dp, dev1) = e.combine(d + PI, &y_pp, &y_p)?;
    let (f_dm, dev2) = e.combine(d - PI, &y_m, &y_mm)?;
    let fi = inv(&f_d)?;
    let s_plus = inv(&f_dp)? * &f_d;
    let s_minus = inv(&f_dm)? * &f_d;
    let looped = e.arc(d, d + 2.0 * PI, f_d.clone())?;
    let nu = &fi * looped;
    let ord = e.order(d);
    let n = ord.len();
    let mut pos = vec![0; n];
    for (p, &i) in ord.iter().enumerate() {
        pos[i] = p;
    }
    let mut tri: f64 = 0.0;
    let scale = e.co.u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            let same_u = same(e.co.u[i], e.co.u[j], scale);
            let up_ok = i == j || (pos[i] < pos[j] && !same_u);
            let lo_ok = i == j || (pos[i] > pos[j] && !same_u);
            let ep = if i == j { (s_plus[(i, j)] - ONE).norm() } else { s_plus[(i, j)].norm() };
            let em = if i == j { (s_minus[(i, j)] - ONE).norm() } else { s_minus[(i, j)].norm() };
            if !up_ok || i == j {
                tri = tri.max(ep);
            }
            if !lo_ok || i == j {
                tri = tri.max(em);
            }
        }
    }
    Ok(EndData {
        f_d,
        s_plus,
        s_minus,
        nu,
        r_match: e.r_match,
        r_anchor: e.r_anchor,
        anchor_err: e.anchor_err,
        split_dev: dev0.max(dev1).max(dev2),
        tri_residual: tri,
    })
}

/// Force exact unit-triangular shape on a Stokes pair given the order.
fn enforce(s: &CMat, ord: &[usize], upper: bool) -> CMat {
    let n = ord.len();
    let mut pos = vec![0; n];
    for (p, &i) in ord.iter().enumerate() {
        pos[i] = p;
    }
    CMat::from_fn(n, n, |i, j| {
        if i == j {
            ONE
        } else if (upper && pos[i] < pos[j]) || (!upper && pos[i] > pos[j]) {
            s[(i, j)]
        } else {
            ZERO
        }
    })
}

/// Result of the numeric pipeline.
#[derive(Debug, Clone)]
pub struct NumericMonodromy {
    pub direction: f64,
    pub inf: EndData,
    /// ξ = 0 data (two-pole only), as the ∞ data of the η = 1/ξ system
    pub zero: Option<EndData>,
    /// C_d
    pub connection: CMat,
}

/// Block-diagonalizer on groups of equal `u` (identity when all distinct).
fn block_diagonalizer(u: &[C64], a: &CMat) -> Result<CMat> {
    let n = u.len();
    let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut q = eye(n);
    let mut seen = vec![false; n];
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let grp: Vec<usize> = (0..n).filter(|&j| same(u[i], u[j], scale)).collect();
        for &j in &grp {
            seen[j] = true;
        }
        if grp.len() > 1 {
            let blk = mx::sub(a, &grp, &grp);
            let e = mx::eigen(&blk, 1e-13)?;
            for (s, &r) in grp.iter().enumerate() {
                for (t, &cc) in grp.iter().enumerate() {
                    q[(r, cc)] = e.vectors[(s, t)];
                }
            }
        }
    }
    Ok(q)
}

fn mean(x: &[C64]) -> C64 {
    x.iter().sum::<C64>() / C64::from(x.len() as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct NumericOptions {
    pub tol: f64,
    /// lower bound on the anchor radius (∞ end)
    pub anchor_radius: Option<f64>,
}

impl Default for NumericOptions {
    fn default() -> Self {
        NumericOptions {
            tol: 1e-10,
            anchor_radius: None,
        }
    }
}

/// Frobenius solution `H(ξ) ξ^Φ` of the one-pole system at `p`.
pub(crate) fn frobenius(u: &[C64], phi: &CMat, p: Pt) -> Result<CMat> {
    let n = u.len();
    let e = mx::eigen(phi, 1e-13)?;
    let pm = &e.vectors;
    let pinv = inv(pm)?;
    for a in &e.values {
        for b in &e.values {
            let d = a - b;
            let r = d.re.round();
            if r != 0.0 && (d - C64::from(r)).norm() < 1e-8 {
                return Err(Error::ResonantResidue(d));
            }
        }
    }
    let ut = &pinv * diag(u) * pm;
    let z = p.z();
    let mut term = eye(n);
    let mut sum = eye(n);
    let mut zk = ONE;
    for k in 1..400 {
        let rhs = -(&ut * &term);
        let mut next = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] = rhs[(i, j)] / (e.values[i] - e.values[j] - C64::from(k as f64));
            }
        }
        term = next;
        zk *= z;
        let add = &term * zk;
        sum += &add;
        if max_abs(&add) < 1e-18 * max_abs(&sum) && k > 5 {
            break;
        }
    }
    let pw = diag(&e.values.iter().map(|&l| (l * p.ln()).exp()).collect::<Vec<_>>());
    Ok(pm * sum * pw * pinv)
}

pub(crate) fn check_direction(u: &[C64], d: f64) -> Result<()> {
    let n = u.len();
    let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let rot = C64::from_polar(1.0, d);
    for i in 0..n {
        for j in i + 1..n {
            if !same(u[i], u[j], scale) && ((u[i] - u[j]) * rot).im.abs() <= 1e-9 * scale {
                return Err(Error::AntiStokesDirection { d, i, j });
            }
        }
    }
    Ok(())
}

/// One-pole data for `(U, Φ)`: (Stokes, monodromy, connection `C_d`).
/// Repeated entries of `U` are allowed.
pub fn one_pole_numeric(u: &[C64], phi: &CMat, d: f64, opt: NumericOptions) -> Result<NumericMonodromy> {
    check_direction(u, d)?;
    let ubar = mean(u);
    let us: Vec<C64> = u.iter().map(|x| x - ubar).collect();
    let q = block_diagonalizer(&us, phi)?;
    let qi = inv(&q)?;
    let phq = &qi * phi * &q;
    let unorm = us.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let r_match = if unorm > 0.0 { (1.0 / unorm).min(1.0) } else { 1.0 };
    let co = Coeffs {
        u: us.clone(),
        a: phq.clone(),
        b: CMat::zeros(u.len(), u.len()),
    };
    let e = InfEnd::new(co, r_match, opt.tol, opt.anchor_radius)?;
    let mut inf = end_data(&e, d)?;
    let f0 = frobenius(&us, &phq, Pt::new(r_match, d))?;
    let conn = inv(&inf.f_d)? * f0;
    let back = |m: &CMat| &q * m * &qi;
    let ord = e.order(d);
    inf.s_plus = back(&enforce(&inf.s_plus, &ord, true));
    inf.s_minus = back(&enforce(&inf.s_minus, &ord, false));
    inf.nu = back(&inf.nu);
    inf.f_d = back(&inf.f_d);
    Ok(NumericMonodromy {
        direction: d,
        inf,
        zero: None,
        connection: back(&conn),
    })
}

/// Full two-pole numeric monodromy.
pub fn two_pole_numeric(spec: &LinearSystemSpec, d: f64, opt: NumericOptions) -> Result<NumericMonodromy> {
    two_pole_impl(spec, d, opt, None)
}

/// `zero_anchor` is a lower bound on the anchor radius of the η = 1/ξ system.
fn two_pole_impl(spec: &LinearSystemSpec, d: f64, opt: NumericOptions, zero_anchor: Option<f64>) -> Result<NumericMonodromy> {
    spec.validate()?;
    let g = spec.g.clone().ok_or(Error::Input("missing G".into()))?;
    let gi = inv(&g)?;
    check_direction(&spec.u, d)?;
    // ξ = 0 side: η = 1/ξ, direction d in η is −d in ξ
    check_direction(&spec.v.iter().map(|x| -x).collect::<Vec<_>>(), d)?;
    let ubar = mean(&spec.u);
    let vbar = mean(&spec.v);
    let us: Vec<C64> = spec.u.iter().map(|x| x - ubar).collect();
    let vs: Vec<C64> = spec.v.iter().map(|x| x - vbar).collect();
    let b = &g * diag(&vs) * &gi;
    let unorm = us.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let bnorm = max_abs(&b);
    let r_match = if bnorm > 0.0 && unorm > 0.0 {
        (bnorm / unorm).sqrt()
    } else {
        1.0
    };
    let co_inf = Coeffs {
        u: us.clone(),
        a: spec.a.clone(),
        b: b.clone(),
    };
    let co_zero = Coeffs {
        u: vs.iter().map(|x| -x).collect(),
        a: -(&gi * &spec.a * &g),
        b: -(&gi * diag(&us) * &g),
    };
    let e_inf = InfEnd::new(co_inf.clone(), r_match, opt.tol, opt.anchor_radius)?;
    let e_zero = InfEnd::new(co_zero, 1.0 / r_match, opt.tol, zero_anchor)?;
    let mut inf = end_data(&e_inf, d)?;
    let mut zero = end_data(&e_zero, d)?;
    // F^{(0)}_{-d}(ξ) = G K_d(1/ξ) at ξ = r e^{-id}, carried to argument d
    let f0 = &g * &zero.f_d;
    let f0_at_d = arc(&co_inf, r_match, -d, d, f0, opt.tol)?;
    let conn = inv(&inf.f_d)? * f0_at_d;
    let oi = e_inf.order(d);
    let oz = e_zero.order(d);
    inf.s_plus = enforce(&inf.s_plus, &oi, true);
    inf.s_minus = enforce(&inf.s_minus, &oi, false);
    zero.s_plus = enforce(&zero.s_plus, &oz, true);
    zero.s_minus = enforce(&zero.s_minus, &oz, false);
    Ok(NumericMonodromy {
        direction: d,
        inf,
        zero: Some(zero),
        connection: conn,
    })
}

/// Numeric data for either kind of spec.
pub fn numeric(spec: &LinearSystemSpec, d: f64, opt: NumericOptions) -> Result<NumericMonodromy> {
    spec.validate()?;
    match spec.kind {
        Kind::OnePole => one_pole_numeric(&spec.u, &spec.a, d, opt),
        Kind::TwoPole => two_pole_numeric(spec, d, opt),
    }
}

fn end_of(nm: &NumericMonodromy, at: End) -> Result<&EndData> {
    match at {
        End::Infinity => Ok(&nm.inf),
        End::Zero => nm
            .zero
            .as_ref()
            .ok_or_else(|| Error::Input("a one-pole system has no irregular singularity at 0".into())),
    }
}

/// Canonical solution at one end, with an a posteriori anchor check.
#[derive(Debug, Clone)]
pub struct SectorSolution {
    pub direction: f64,
    pub at: End,
    /// `F_d` at the matching radius on the ray of argument `d` (for `at = Zero`
    /// the solution `K_d(η)` of the η = 1/ξ system, so that `F⁽⁰⁾ = G·K`)
    pub value: CMat,
    pub r_match: f64,
    pub r_anchor: f64,
    /// size of the first neglected term of the formal series at the anchor
    pub anchor_err: f64,
    /// relative change of `value` when the anchor radius is doubled
    pub stability: f64,
}

fn with_anchor(spec: &LinearSystemSpec, d: f64, at: End, opt: NumericOptions, r: Option<f64>) -> Result<NumericMonodromy> {
    match (spec.kind, at) {
        (Kind::OnePole, _) => one_pole_numeric(&spec.u, &spec.a, d, NumericOptions { anchor_radius: r, ..opt }),
        (Kind::TwoPole, End::Infinity) => two_pole_impl(spec, d, NumericOptions { anchor_radius: r, ..opt }, None),
        (Kind::TwoPole, End::Zero) => two_pole_impl(spec, d, opt, r),
    }
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b)) / (1.0 + max_abs(b))
}

/// Canonical solution at `at` for direction `d`. The anchor radius is the
/// adaptive one, bounded below by `opt.anchor_radius` at ∞.
pub fn sector_solution(spec: &LinearSystemSpec, d: f64, at: End, opt: NumericOptions) -> Result<SectorSolution> {
    spec.validate()?;
    if spec.kind == Kind::OnePole && at == End::Zero {
        return Err(Error::Input("a one-pole system has no irregular singularity at 0".into()));
    }
    let first = with_anchor(spec, d, at, opt, if at == End::Infinity { opt.anchor_radius } else { None })?;
    let e = end_of(&first, at)?;
    let again = with_anchor(spec, d, at, opt, Some(2.0 * e.r_anchor))?;
    let stability = rel(&end_of(&again, at)?.f_d, &e.f_d);
    if stability > 10.0 * opt.tol {
        return Err(Error::AnchorUnstable(stability));
    }
    Ok(SectorSolution {
        direction: d,
        at,
        value: e.f_d.clone(),
        r_match: e.r_match,
        r_anchor: e.r_anchor,
        anchor_err: e.anchor_err,
        stability,
    })
}

/// `(S₊, S₋)` at `at` for direction `d`, exactly unit-triangular. Fails if
/// the raw matrices leave the triangular pattern by more than `10·tol`.
pub fn numeric_stokes(spec: &LinearSystemSpec, d: f64, at: End, opt: NumericOptions) -> Result<(CMat, CMat)> {
    let nm = numeric(spec, d, opt)?;
    let e = end_of(&nm, at)?;
    let scale = 1.0 + max_abs(&e.s_plus).max(max_abs(&e.s_minus));
    if e.tri_residual > 10.0 * opt.tol * scale {
        return Err(Error::TriangularityViolated(e.tri_residual));
    }
    Ok((e.s_plus.clone(), e.s_minus.clone()))
}

/// `C_d`: the ξ = 0 solution (Frobenius for one pole) in the basis of the
/// canonical ∞ solution.
pub fn numeric_connection(spec: &LinearSystemSpec, d: f64, opt: NumericOptions) -> Result<CMat> {
    Ok(numeric(spec, d, opt)?.connection)
}

/// Monodromy `ν_d` at `at`.
pub fn monodromy(spec: &LinearSystemSpec, d: f64, at: End, opt: NumericOptions) -> Result<CMat> {
    let nm = numeric(spec, d, opt)?;
    Ok(end_of(&nm, at)?.nu.clone())
}

/// Global accuracy estimate: the largest relative change of the Stokes,
/// monodromy and connection matrices between `tol` and `10·tol`.
pub fn richardson_estimate(spec: &LinearSystemSpec, d: f64, opt: NumericOptions) -> Result<f64> {
    let fine = numeric(spec, d, opt)?;
    let coarse = numeric(spec, d, NumericOptions { tol: 10.0 * opt.tol, ..opt })?;
    let mut est = rel(&coarse.connection, &fine.connection);
    let pairs = [(Some(&coarse.inf), Some(&fine.inf)), (coarse.zero.as_ref(), fine.zero.as_ref())];
    for (a, b) in pairs {
        if let (Some(a), Some(b)) = (a, b) {
            est = est
                .max(rel(&a.s_plus, &b.s_plus))
                .max(rel(&a.s_minus, &b.s_minus))
                .max(rel(&a.nu, &b.nu));
        }
    }
    Ok(est)
}

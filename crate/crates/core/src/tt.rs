//! tt*-Toda and sine-Gordon specializations: `Ω`, `D`, the Toda boundary
//! datum, the order-4 braid move, symmetry checks and the `(γ, δ)` scan.

use crate::closed::{monodromy_data, BoundaryDatum, MonodromyData};
use crate::error::{Error, Result};
use crate::inverse::{classify_log_confined, classify_matrix, Cause, ConfineOptions, Failure, Which};
use crate::matrix::{c, diag, eye, inv, max_abs, CMat, C64, ZERO};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub use crate::closed::piii_boundary;

/// `Ω_{kj} = e^{2πi kj/(n+1)}` and `D = diag(1, e^{2πi/(n+1)}, …)`.
pub fn build_omega_d(np1: usize) -> Result<(CMat, CMat)> {
    if np1 < 2 {
        return Err(Error::Input("matrix order must be at least 2".into()));
    }
    let w = |k: usize| C64::from_polar(1.0, 2.0 * PI * (k % np1) as f64 / np1 as f64);
    let omega = CMat::from_fn(np1, np1, |k, j| w(k * j));
    let d = diag(&(0..np1).map(w).collect::<Vec<_>>());
    Ok((omega, d))
}

/// `Λ = diag(m)` and `L = diag(l)` of a radial tt*-Toda solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TodaConfig {
    pub m: Vec<f64>,
    pub l: Vec<f64>,
}

impl TodaConfig {
    pub fn new(m: Vec<f64>, l: Vec<f64>) -> Result<Self> {
        let cfg = TodaConfig { m, l };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `m = (γ/2, δ/2, −δ/2, −γ/2)` for order 4, `(γ/2, δ/2, 0, −δ/2, −γ/2)`
    /// for order 5; `l = 1`.
    pub fn from_gamma_delta(order: usize, gamma: f64, delta: f64) -> Result<Self> {
        let (g, d) = (gamma / 2.0, delta / 2.0);
        let m = match order {
            4 => vec![g, d, -d, -g],
            5 => vec![g, d, 0.0, -d, -g],
            _ => return Err(Error::UnsupportedRank(order)),
        };
        TodaConfig::new(m, vec![1.0; order])
    }

    pub fn order(&self) -> usize {
        self.m.len()
    }

    pub fn spread(&self) -> f64 {
        let hi = self.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.m.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// `m_i + m_{n−i} = 0`, `l_i l_{n−i} = 1`, `l > 0`.
    pub fn validate(&self) -> Result<()> {
        let k = self.m.len();
        if k < 2 || self.l.len() != k {
            return Err(Error::Input("m and l need equal length of at least 2".into()));
        }
        for i in 0..k {
            if (self.m[i] + self.m[k - 1 - i]).abs() > 1e-12 {
                return Err(Error::Input(format!("m_{i} + m_{} is not zero", k - 1 - i)));
            }
            if self.l[i] <= 0.0 || (self.l[i] * self.l[k - 1 - i] - 1.0).abs() > 1e-12 {
                return Err(Error::Input(format!("l_{i} l_{} is not one", k - 1 - i)));
            }
        }
        Ok(())
    }
}

/// `Â₀ = −ΩΛΩ⁻¹`, `G₀ = Ω (−(1 − e^{−2πi/(n+1)})²)^Λ L Ω`.
pub fn toda_boundary(cfg: &TodaConfig) -> Result<BoundaryDatum> {
    let s = cfg.spread();
    if s >= 1.0 {
        return Err(Error::SpreadTooLarge(s));
    }
    cfg.validate()?;
    toda_datum(&cfg.m, &cfg.l)
}

fn toda_datum(m: &[f64], l: &[f64]) -> Result<BoundaryDatum> {
    let np1 = m.len();
    let (omega, _) = build_omega_d(np1)?;
    let lam = diag(&m.iter().map(|&x| C64::from(x)).collect::<Vec<_>>());
    let a = -(&omega * lam * inv(&omega)?);
    // −(1 − e^{−2πi/N})² = 4sin²(π/N)·e^{−2πi/N}, principal argument taken
    // exactly (N = 2 lies on the cut, where rounding would pick the side)
    let arg = if np1 == 2 { PI } else { -2.0 * PI / np1 as f64 };
    let lb = c((4.0 * (PI / np1 as f64).sin().powi(2)).ln(), arg);
    let pw: Vec<C64> = m.iter().zip(l).map(|(&x, &y)| (lb * x).exp() * y).collect();
    let g = &omega * diag(&pw) * &omega;
    BoundaryDatum::new(a, g)
}

/// `s₁ = 2e^{3πi/4}(cos(π(1+2m₀)/4) + cos(π(3+2m₁)/4))`.
pub fn braid_s1(m0: f64, m1: f64) -> C64 {
    C64::from_polar(2.0, 0.75 * PI) * ((PI / 4.0 * (1.0 + 2.0 * m0)).cos() + (PI / 4.0 * (3.0 + 2.0 * m1)).cos())
}

/// Order-4 chamber move: `B₁ = 1 + s₁E₂₁`, `B₂ = 1 − s̄₁E₁₂`,
/// `S₁' = B₁⁻¹S₁B₂`, `S₂' = B₂⁻¹S₂B₁`, `ν = (S₁'S₂')⁻¹`.
pub fn braid_conjugate(s1: &CMat, s2: &CMat, m0: f64, m1: f64) -> Result<(CMat, CMat, CMat)> {
    if s1.shape() != (4, 4) || s2.shape() != (4, 4) {
        return Err(Error::Input("braid move needs 4x4 Stokes matrices".into()));
    }
    let s = braid_s1(m0, m1);
    let mut b1 = eye(4);
    b1[(1, 0)] = s;
    let mut b2 = eye(4);
    b2[(0, 1)] = -s.conj();
    let s1p = inv(&b1)? * s1 * &b2;
    let s2p = inv(&b2)? * s2 * &b1;
    let nu = inv(&(&s1p * &s2p))?;
    Ok((s1p, s2p, nu))
}

/// Residuals of `−Aᵀ = A`, `m^{−T} = m`, `−mĀm̄⁻¹ = A`, `m̄ᵀ = m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub antisymmetry: f64,
    pub orthogonality: f64,
    pub reality: f64,
    pub hermitian: f64,
    pub pass: bool,
}

pub fn general_tt_symmetry_check(a: &CMat, m: &CMat, tol: f64) -> SymmetryReport {
    let bad = f64::INFINITY;
    let antisymmetry = max_abs(&(a + a.transpose()));
    let orthogonality = inv(&m.transpose()).map_or(bad, |x| max_abs(&(x - m)));
    let reality = inv(&m.conjugate()).map_or(bad, |x| max_abs(&(-(m * a.conjugate() * x) - a)));
    let hermitian = max_abs(&(m.adjoint() - m));
    SymmetryReport {
        pass: [antisymmetry, orthogonality, reality, hermitian].iter().all(|&r| r < tol),
        antisymmetry,
        orthogonality,
        reality,
        hermitian,
    }
}

/// One `(γ, δ)` point of a Toda scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub gamma: f64,
    pub delta: f64,
    pub verdict: bool,
    pub failing_levels: Vec<usize>,
    pub causes: Vec<Cause>,
    /// the offending eigenvalue pairs, one per failure
    pub eigen_pairs: Vec<Vec<C64>>,
    /// set when the point could not be classified
    pub error: Option<String>,
}

impl ScanRecord {
    fn from_failures(gamma: f64, delta: f64, fails: Vec<Failure>) -> Self {
        let mut levels: Vec<usize> = fails.iter().map(|f| f.level).collect();
        levels.sort_unstable();
        levels.dedup();
        let mut causes: Vec<Cause> = Vec::new();
        for f in &fails {
            if !causes.contains(&f.cause) {
                causes.push(f.cause);
            }
        }
        ScanRecord {
            gamma,
            delta,
            verdict: fails.is_empty(),
            failing_levels: levels,
            causes,
            eigen_pairs: fails.into_iter().map(|f| f.pair).collect(),
            error: None,
        }
    }

    fn failed(gamma: f64, delta: f64, e: &Error) -> Self {
        ScanRecord {
            gamma,
            delta,
            verdict: false,
            failing_levels: Vec::new(),
            causes: Vec::new(),
            eigen_pairs: Vec::new(),
            error: Some(e.to_string()),
        }
    }
}

/// Points `start, start + step, …` up to `end`.
pub fn axis(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::Input(format!("bad axis {start}:{end}:{step}")));
    }
    let k = ((end - start) / step + 1e-9).floor() as usize;
    if k > 100_000 {
        return Err(Error::Input("axis has too many points".into()));
    }
    // rounded to 12 decimals so that 0.1-steps print as typed
    Ok((0..=k).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// A Stokes pair at one tabulated `(γ, δ)`; `s1`, `s2` are in the chamber
/// the braid move starts from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedPoint {
    pub gamma: f64,
    pub delta: f64,
    #[serde(rename = "S1", with = "crate::io::cmat")]
    pub s1: CMat,
    #[serde(rename = "S2", with = "crate::io::cmat")]
    pub s2: CMat,
}

#[derive(Debug, Clone)]
pub enum StokesSource {
    /// monodromy of the Toda boundary datum at each point
    Synthetic { order: usize },
    /// order-4 Stokes pairs, one per point
    Tabulated(Vec<TabulatedPoint>),
}

/// Direction of the standard chamber used for order `k` Toda data.
pub fn toda_direction(order: usize) -> f64 {
    PI / (2 * order) as f64
}

/// Closed-form monodromy of the Toda datum. Where `Λ` has repeated entries
/// (γ = ±δ, or m = 0) the closed forms are singular although the data are
/// analytic in `m`; there the mean of the data at `m ± h·p` is used, with a
/// fixed generic direction `p`, which is exact to O(h²).
pub fn toda_monodromy(cfg: &TodaConfig, d: f64) -> Result<MonodromyData> {
    let bd = toda_boundary(cfg)?;
    match monodromy_data(&bd, d) {
        Ok(md) => Ok(md),
        Err(
            Error::RepeatedEigenvalue(_)
            | Error::LadderCollision
            | Error::ResonantLadder { .. }
            | Error::ZeroRadicand { .. }
            | Error::SingularMinor(_)
            | Error::DiagonalMismatch(_)
            | Error::NearDefective(_),
        ) => {
            let h = 1e-5;
            let p = [0.37, -0.21, 0.13, -0.29, 0.17, -0.07, 0.23];
            let at = |s: f64| -> Result<MonodromyData> {
                let m: Vec<f64> = cfg.m.iter().enumerate().map(|(i, x)| x + s * h * p[i % p.len()]).collect();
                monodromy_data(&toda_datum(&m, &cfg.l)?, d)
            };
            let (a, b) = (at(1.0)?, at(-1.0)?);
            let half = c(0.5, 0.0);
            let mean = |x: &CMat, y: &CMat| (x + y) * half;
            let meanv = |x: &[C64], y: &[C64]| x.iter().zip(y).map(|(p, q)| (p + q) * half).collect();
            Ok(MonodromyData {
                delta_a: meanv(&a.delta_a, &b.delta_a),
                delta_gag: meanv(&a.delta_gag, &b.delta_gag),
                nu_inf: mean(&a.nu_inf, &b.nu_inf),
                nu_zero: mean(&a.nu_zero, &b.nu_zero),
                connection: mean(&a.connection, &b.connection),
                s_plus_inf: mean(&a.s_plus_inf, &b.s_plus_inf),
                s_minus_inf: mean(&a.s_minus_inf, &b.s_minus_inf),
                s_plus_zero: mean(&a.s_plus_zero, &b.s_plus_zero),
                s_minus_zero: mean(&a.s_minus_zero, &b.s_minus_zero),
                chamber: a.chamber,
            })
        }
        Err(e) => Err(e),
    }
}

fn synthetic_point(order: usize, gamma: f64, delta: f64, opt: ConfineOptions) -> ScanRecord {
    let run = || -> Result<ScanRecord> {
        let cfg = TodaConfig::from_gamma_delta(order, gamma, delta)?;
        let md = toda_monodromy(&cfg, toda_direction(order))?;
        let cls = classify_log_confined(&md, opt)?;
        Ok(ScanRecord::from_failures(gamma, delta, cls.failures))
    };
    run().unwrap_or_else(|e| ScanRecord::failed(gamma, delta, &e))
}

/// Classification of `ν^{(∞)}` after the braid move. Only the ∞ end is
/// available from a Stokes pair; `δA = 0` for Toda data.
pub fn tabulated_point(p: &TabulatedPoint, opt: ConfineOptions) -> ScanRecord {
    let run = || -> Result<ScanRecord> {
        let (_, _, nu) = braid_conjugate(&p.s1, &p.s2, p.gamma / 2.0, p.delta / 2.0)?;
        let (_, fails) = classify_matrix(&nu, &[ZERO; 4], Which::Infinity, opt)?;
        Ok(ScanRecord::from_failures(p.gamma, p.delta, fails))
    };
    run().unwrap_or_else(|e| ScanRecord::failed(p.gamma, p.delta, &e))
}

/// Classify every grid point (row-major in `γ`, then `δ`). Synthetic mode
/// visits `gammas × deltas`; tabulated mode visits the table in order and
/// ignores the axes.
pub fn toda_scan(gammas: &[f64], deltas: &[f64], source: &StokesSource, opt: ConfineOptions) -> Result<Vec<ScanRecord>> {
    match source {
        StokesSource::Synthetic { order } => {
            if *order != 4 && *order != 5 {
                return Err(Error::UnsupportedRank(*order));
            }
            let pts: Vec<(f64, f64)> = gammas.iter().flat_map(|&g| deltas.iter().map(move |&d| (g, d))).collect();
            Ok(pts.par_iter().map(|&(g, d)| synthetic_point(*order, g, d, opt)).collect())
        }
        StokesSource::Tabulated(tab) => Ok(tab.par_iter().map(|p| tabulated_point(p, opt)).collect()),
    }
}


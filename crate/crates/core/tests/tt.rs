use isomono::closed::{piii_boundary, BoundaryDatum};
use isomono::inverse::{classify_matrix, lambda_adjust, Cause, ConfineOptions, Which};
use isomono::matrix::*;
use isomono::tt::*;
use isomono::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const FIXTURE: &str = include_str!("../data/toda4_example.json");

fn fixture() -> Vec<TabulatedPoint> {
    serde_json::from_str(FIXTURE).unwrap()
}

fn close_sets(a: &[C64], b: &[C64], tol: f64) -> bool {
    let mut used = vec![false; b.len()];
    a.len() == b.len()
        && a.iter().all(|x| match (0..b.len()).filter(|&j| !used[j]).find(|&j| (b[j] - x).norm() < tol) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        })
}

/// Reference ν at γ = 0.8, δ = −1.1, five decimals.
fn reference_nu() -> CMat {
    let r = |v: &[(f64, f64)]| v.iter().map(|&(a, b)| c(a, b)).collect::<Vec<_>>();
    from_rows(&[
        r(&[(1.0, 0.0), (-0.33219, -0.33219), (0.0, -1.82839), (-0.95587, 0.95585)]),
        r(&[(0.33219, -0.33219), (0.77930, 0.0), (-0.93956, -0.93956), (0.0, -1.19333)]),
        r(&[(0.0, -2.04909), (-0.34850, 0.34850), (-2.96752, 0.0), (1.01911, 1.01911)]),
        r(&[(-0.33219, -0.33219), (0.0, -1.82839), (-0.95587, 0.95587), (-2.33219, 0.0)]),
    ])
}

#[test]
fn omega_and_d() {
    let (o, d) = build_omega_d(2).unwrap();
    assert!(max_abs(&(o - from_rows(&[vec![ONE, ONE], vec![ONE, -ONE]]))) < 1e-15);
    assert!(max_abs(&(d - diag(&[ONE, -ONE]))) < 1e-15);
    for np1 in 2..7 {
        let (o, _) = build_omega_d(np1).unwrap();
        // Ω² = (n+1)·(index reversal mod n+1), Ω·Ω̄ = (n+1)·Id
        let rev = CMat::from_fn(np1, np1, |i, j| if (i + j) % np1 == 0 { ONE } else { ZERO });
        let n1 = C64::from(np1 as f64);
        assert!(max_abs(&(&o * &o - rev * n1)) < 1e-12);
        assert!(max_abs(&(&o * o.conjugate() - eye(np1) * n1)) < 1e-12);
    }
    assert!(build_omega_d(1).is_err());
}

#[test]
fn toda_boundary_examples() {
    let cfg = TodaConfig::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
    let bd = toda_boundary(&cfg).unwrap();
    assert!(max_abs(&bd.a_hat0) < 1e-15);
    let (o, _) = build_omega_d(4).unwrap();
    assert!(max_abs(&(&bd.g0 - &o * &o)) < 1e-12);

    let cfg = TodaConfig::new(vec![0.4, -0.55, 0.55, -0.4], vec![1.0; 4]).unwrap();
    assert!(matches!(toda_boundary(&cfg), Err(Error::SpreadTooLarge(_))));
    let bad = TodaConfig::new(vec![0.4, -0.55, -0.4, 0.55], vec![1.0; 4]);
    assert!(matches!(bad, Err(Error::Input(_))));
    assert!(TodaConfig::new(vec![0.1, -0.1], vec![2.0, 0.4]).is_err());

    // eigenvalues of Â₀ are −m
    let cfg = TodaConfig::from_gamma_delta(4, 0.6, -0.3).unwrap();
    let bd = toda_boundary(&cfg).unwrap();
    let neg: Vec<C64> = cfg.m.iter().map(|&x| C64::from(-x)).collect();
    assert!(close_sets(&eigenvalues(&bd.a_hat0).unwrap(), &neg, 1e-12));
}

#[test]
fn order_two_toda_is_piii() {
    // Λ = diag(m, −m) gives Â₀ = −m·[[0,1],[1,0]], the PIII residue at r = −4im
    let m = 0.3;
    let bd = toda_boundary(&TodaConfig::new(vec![m, -m], vec![1.0, 1.0]).unwrap()).unwrap();
    let p = piii_boundary(c(0.0, -4.0 * m), C64::from(2.0 * PI * m)).unwrap();
    assert!(max_abs(&(&bd.a_hat0 - &p.a_hat0)) < 1e-15);
    // the two G₀ agree up to the factor 2 and the sign of the off-diagonal
    let s = diag(&[ONE, -ONE]);
    assert!(max_abs(&(&bd.g0 - &s * &p.g0 * &s * C64::from(2.0))) < 1e-12);
}

#[test]
fn braid_move() {
    assert!(braid_s1(0.0, 0.0).norm() < 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s1 = eye(4);
    let mut s2 = eye(4);
    for i in 0..4 {
        for j in i + 1..4 {
            s1[(i, j)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            s2[(j, i)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let (a, b, nu) = braid_conjugate(&s1, &s2, 0.0, 0.0).unwrap();
    assert!(max_abs(&(a - &s1)) < 1e-14 && max_abs(&(b - &s2)) < 1e-14);
    assert!(max_abs(&(&nu - inv(&(&s1 * &s2)).unwrap())) < 1e-14);

    // conjugacy class of the total monodromy is kept
    for (m0, m1) in [(0.4, -0.55), (0.1, 0.3), (-0.45, 0.2)] {
        let (_, _, nu) = braid_conjugate(&s1, &s2, m0, m1).unwrap();
        let before = eigenvalues(&inv(&(&s1 * &s2)).unwrap()).unwrap();
        assert!(close_sets(&eigenvalues(&nu).unwrap(), &before, 1e-9));
    }
    assert!(braid_conjugate(&eye(3), &eye(3), 0.0, 0.0).is_err());
}

#[test]
fn reference_example_reproduced() {
    let p = &fixture()[0];
    assert_eq!((p.gamma, p.delta), (0.8, -1.1));
    let s = braid_s1(p.gamma / 2.0, p.delta / 2.0);
    assert!((s - c(-0.33219, 0.33219)).norm() < 1e-5);
    let (_, _, nu) = braid_conjugate(&p.s1, &p.s2, p.gamma / 2.0, p.delta / 2.0).unwrap();
    assert!(max_abs(&(&nu - reference_nu())) < 1e-3);
    let mu = eigenvalues(&leading(&nu, 3)).unwrap();
    let want = [C64::from(-1.53758), ONE, C64::from(-0.65037)];
    assert!(close_sets(&mu, &want, 1e-3), "{mu:?}");
    let sig = lambda_adjust(&mu, ZERO, ConfineOptions::default()).unwrap();
    // |μ| ≠ 1, so only the real parts are ±1/2, 0
    let re: Vec<C64> = sig.values.iter().map(|x| C64::from(x.re)).collect();
    assert!(close_sets(&re, &[C64::from(-0.5), ZERO, C64::from(0.5)], 1e-3));
    assert!(sig.non_strict);

    let (_, fails) = classify_matrix(&nu, &[ZERO; 4], Which::Infinity, ConfineOptions::default()).unwrap();
    assert!(fails.iter().any(|f| f.level == 3 && f.cause == Cause::UnitDiameter));
    let rec = tabulated_point(p, ConfineOptions::default());
    assert!(!rec.verdict && rec.failing_levels.contains(&3));
}

#[test]
fn synthetic_scans() {
    let opt = ConfineOptions::default();
    let one = toda_scan(&[0.0], &[0.0], &StokesSource::Synthetic { order: 4 }, opt).unwrap();
    assert!(one.len() == 1 && one[0].verdict && one[0].error.is_none());

    let g = axis(-0.9, 0.9, 0.3).unwrap();
    assert_eq!(g.len(), 7);
    for order in [4, 5] {
        let recs = toda_scan(&g, &g, &StokesSource::Synthetic { order }, opt).unwrap();
        assert_eq!(recs.len(), 49);
        assert!(recs.iter().all(|r| r.verdict && r.error.is_none()), "order {order}");
        // (γ, δ) → (−γ, −δ)
        for r in &recs {
            let mirror = recs.iter().find(|q| q.gamma == -r.gamma && q.delta == -r.delta).unwrap();
            assert_eq!(mirror.verdict, r.verdict);
        }
    }
    assert!(matches!(toda_scan(&g, &g, &StokesSource::Synthetic { order: 3 }, opt), Err(Error::UnsupportedRank(3))));
    // beyond the unit square the datum is refused, recorded per point
    let out = toda_scan(&[1.2], &[0.0], &StokesSource::Synthetic { order: 4 }, opt).unwrap();
    assert!(!out[0].verdict && out[0].error.is_some());
}

#[test]
fn axis_examples() {
    assert_eq!(axis(-0.95, 0.95, 0.1).unwrap().len(), 20);
    assert_eq!(axis(-0.95, 0.95, 0.1).unwrap()[1], -0.85);
    assert_eq!(axis(0.0, 0.0, 1.0).unwrap(), vec![0.0]);
    assert!(axis(1.0, 0.0, 0.1).is_err());
    assert!(axis(0.0, 1.0, 0.0).is_err());
}

#[test]
fn symmetry_checks() {
    let r = general_tt_symmetry_check(&CMat::zeros(3, 3), &eye(3), 1e-12);
    assert!(r.pass && r.antisymmetry == 0.0 && r.orthogonality == 0.0 && r.reality == 0.0 && r.hermitian == 0.0);

    // real anti-symmetric A with a real reflection m
    let (co, si) = (0.7f64.cos(), 0.7f64.sin());
    let m = from_rows(&[vec![C64::from(co), C64::from(si)], vec![C64::from(si), C64::from(-co)]]);
    let a = from_rows(&[vec![ZERO, C64::from(0.3)], vec![C64::from(-0.3), ZERO]]);
    assert!(general_tt_symmetry_check(&a, &m, 1e-12).pass);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = CMat::from_fn(3, 3, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let r = general_tt_symmetry_check(&a, &eye(3), 1e-10);
    assert!(!r.pass && r.antisymmetry > 1e-3);

    // the PIII residue is symmetric, not anti-symmetric, in this normalization
    let BoundaryDatum { a_hat0, g0, .. } = piii_boundary(ONE, ZERO).unwrap();
    let r = general_tt_symmetry_check(&a_hat0, &g0, 1e-10);
    assert!(!r.pass && (r.antisymmetry - 0.5).abs() < 1e-12);
}

#[test]
fn scan_records_serialize() {
    let recs = toda_scan(&[], &[], &StokesSource::Tabulated(fixture()), ConfineOptions::default()).unwrap();
    let js = serde_json::to_string(&recs).unwrap();
    assert!(js.contains("\"failing_levels\":[3"));
    assert!(serde_json::from_str::<Vec<TabulatedPoint>>("[{\"gamma\":0}]").is_err());
}

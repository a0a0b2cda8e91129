use isomono::closed::{piii_boundary, stokes_subdiagonal_inf, Sign};
use isomono::matrix::*;
use isomono::ode::*;
use isomono::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const OPT: NumericOptions = NumericOptions {
    tol: 1e-11,
    anchor_radius: None,
};

fn random_mat(rng: &mut ChaCha8Rng, n: usize, s: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.gen_range(-s..s), rng.gen_range(-s..s)))
}

fn close_sets(a: &[C64], b: &[C64], tol: f64) -> bool {
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        match (0..b.len()).filter(|&j| !used[j]).find(|&j| (b[j] - x).norm() < tol) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

#[test]
fn diagonal_transport_is_explicit() {
    let u = vec![c(1.0, 0.5), c(-0.5, 0.2), c(0.1, -1.0)];
    let v = vec![c(0.3, 0.0), c(0.0, -0.4), c(-0.2, 0.1)];
    let a = diag(&[c(0.2, 0.1), c(-0.3, 0.0), c(0.05, -0.2)]);
    let spec = LinearSystemSpec::two_pole(u.clone(), v.clone(), a.clone(), eye(3));
    let path = [
        Segment::Ray { arg: 0.3, from: 2.0, to: 0.5 },
        Segment::Arc { radius: 0.5, from: 0.3, to: 2.0 },
    ];
    let f = integrate(&spec, &path, &eye(3), 1e-12).unwrap();
    // oracle: dF/dξ = (u + a/ξ + v/ξ²)F entrywise
    let (p0, p1) = (Pt::new(2.0, 0.3), Pt::new(0.5, 2.0));
    for i in 0..3 {
        let expect = (u[i] * (p1.z() - p0.z()) + a[(i, i)] * (p1.ln() - p0.ln()) - v[i] * (ONE / p1.z() - ONE / p0.z())).exp();
        assert!((f[(i, i)] - expect).norm() < 1e-9 * expect.norm(), "i={i}");
    }
}

#[test]
fn diagonal_loop_gives_exponential() {
    let a = diag(&[c(0.2, 0.1), c(-0.3, 0.0)]);
    let spec = LinearSystemSpec::one_pole(vec![ONE, -ONE], a.clone());
    let path = [Segment::Arc { radius: 1.0, from: 0.4, to: 0.4 + 2.0 * PI }];
    let f = integrate(&spec, &path, &eye(2), 1e-12).unwrap();
    let expect = diag(&[(2.0 * PI * I * a[(0, 0)]).exp(), (2.0 * PI * I * a[(1, 1)]).exp()]);
    assert!(max_abs(&(f - expect)) < 1e-9);
}

#[test]
fn loop_transport_has_exponentiated_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let phi = random_mat(&mut rng, 2, 0.4);
        let u = vec![c(rng.gen_range(-1.0..1.0), 0.3), c(rng.gen_range(-1.0..1.0), -0.7)];
        let spec = LinearSystemSpec::one_pole(u, phi.clone());
        let path = [Segment::Arc { radius: 0.7, from: 0.0, to: 2.0 * PI }];
        let f = integrate(&spec, &path, &eye(2), 1e-12).unwrap();
        let expect: Vec<C64> = eigenvalues(&phi).unwrap().iter().map(|l| (2.0 * PI * I * l).exp()).collect();
        assert!(close_sets(&eigenvalues(&f).unwrap(), &expect, 1e-8));
    }
}

#[test]
fn monodromy_conjugate_to_exponential_of_residue() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = random_mat(&mut rng, 3, 0.3);
    let spec = LinearSystemSpec::one_pole(vec![ONE, c(0.0, 1.0), c(-1.0, -0.5)], phi.clone());
    let nu = monodromy(&spec, 0.3, End::Infinity, OPT).unwrap();
    let expect: Vec<C64> = eigenvalues(&phi).unwrap().iter().map(|l| (2.0 * PI * I * l).exp()).collect();
    assert!(close_sets(&eigenvalues(&nu).unwrap(), &expect, 1e-8));
}

#[test]
fn diagonal_spec_outputs() {
    let u = vec![ONE, c(0.0, 1.0), c(-1.0, 0.0)];
    let a = diag(&[c(0.1, 0.0), c(-0.2, 0.1), c(0.05, 0.0)]);
    let spec = LinearSystemSpec::one_pole(u.clone(), a.clone());
    let d = 0.4;
    let (sp, sm) = numeric_stokes(&spec, d, End::Infinity, OPT).unwrap();
    assert!(max_abs(&(sp - eye(3))) < 1e-9 && max_abs(&(sm - eye(3))) < 1e-9);
    let nu = monodromy(&spec, d, End::Infinity, OPT).unwrap();
    let expect = diag(&diag_of(&a).iter().map(|x| (2.0 * PI * I * x).exp()).collect::<Vec<_>>());
    assert!(max_abs(&(nu - expect)) < 1e-9);
    let conn = numeric_connection(&spec, d, OPT).unwrap();
    assert!(max_abs(&(conn - eye(3))) < 1e-9);
    // the canonical solution is the model e^{ξU} ξ^{δA} itself
    let s = sector_solution(&spec, d, End::Infinity, OPT).unwrap();
    let p = Pt::new(s.r_match, d);
    let mean = (u[0] + u[1] + u[2]) / 3.0;
    let model = diag(&(0..3).map(|i| ((u[i] - mean) * p.z() + a[(i, i)] * p.ln()).exp()).collect::<Vec<_>>());
    assert!(max_abs(&(&s.value - model)) < 1e-9);
    assert!(s.stability < 10.0 * OPT.tol);
}

#[test]
fn piii_one_pole_stokes_match_closed_form() {
    let bd = piii_boundary(ONE, ZERO).unwrap();
    let spec = LinearSystemSpec::one_pole(vec![ZERO, ONE], bd.a_hat0.clone());
    let (sp, sm) = numeric_stokes(&spec, -PI / 2.0, End::Infinity, OPT).unwrap();
    let cp = stokes_subdiagonal_inf(&bd.hat, &bd.a_hat0, Sign::Plus).unwrap();
    let cm = stokes_subdiagonal_inf(&bd.hat, &bd.a_hat0, Sign::Minus).unwrap();
    assert!((sp[(0, 1)] - cp[0]).norm() < 1e-6);
    assert!((sm[(1, 0)] - cm[0]).norm() < 1e-6);
}

#[test]
fn stokes_relations() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let phi = random_mat(&mut rng, 3, 0.3);
    let u = vec![ONE, c(0.0, 1.0), c(-1.0, -0.5)];
    let a = phi.clone();
    let spec = LinearSystemSpec::one_pole(u, phi);
    let d = 0.3;
    let (sp, sm) = numeric_stokes(&spec, d, End::Infinity, OPT).unwrap();
    let nu = monodromy(&spec, d, End::Infinity, OPT).unwrap();
    let e = diag(&diag_of(&a).iter().map(|x| (2.0 * PI * I * x).exp()).collect::<Vec<_>>());
    assert!(max_abs(&(inv(&sm).unwrap() * e * &sp - nu)) < 1e-9);
    // S⁺ at d − π is the inverse of S⁻ at d
    let (sp_back, _) = numeric_stokes(&spec, d - PI, End::Infinity, OPT).unwrap();
    assert!(max_abs(&(sp_back - inv(&sm).unwrap())) < 1e-8);
    let (_, sm_fwd) = numeric_stokes(&spec, d + PI, End::Infinity, OPT).unwrap();
    assert!(max_abs(&(sm_fwd - inv(&sp).unwrap())) < 1e-8);
}

#[test]
fn two_pole_anchor_and_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = random_mat(&mut rng, 2, 0.3);
    let g = eye(2) + random_mat(&mut rng, 2, 0.3);
    let spec = LinearSystemSpec::two_pole(vec![ZERO, c(0.3, -1.0)], vec![ZERO, c(0.0, 0.02)], a, g);
    for at in [End::Infinity, End::Zero] {
        let s = sector_solution(&spec, 0.0, at, OPT).unwrap();
        assert!(s.stability < 10.0 * OPT.tol, "{at:?}: {}", s.stability);
        assert!(s.anchor_err < OPT.tol);
    }
    let est = richardson_estimate(&spec, 0.0, OPT).unwrap();
    assert!(est < 1e-8, "{est}");
    let nm = numeric(&spec, 0.0, OPT).unwrap();
    let nz = nm.zero.as_ref().unwrap();
    // ν^{(∞)} = C (ν^{(0)})⁻¹ C⁻¹
    let sim = &nm.connection * inv(&nz.nu).unwrap() * inv(&nm.connection).unwrap();
    assert!(max_abs(&(sim - &nm.inf.nu)) < 1e-8);
}

#[test]
fn error_paths() {
    let spec = LinearSystemSpec::one_pole(vec![ZERO, ONE], eye(2) * c(0.1, 0.0));
    assert!(matches!(numeric_stokes(&spec, 0.0, End::Infinity, OPT), Err(Error::AntiStokesDirection { .. })));
    assert!(matches!(sector_solution(&spec, 0.5, End::Zero, OPT), Err(Error::Input(_))));
    let resonant = LinearSystemSpec::one_pole(vec![ZERO, ONE], from_rows(&[vec![ZERO, c(0.2, 0.0)], vec![ZERO, ONE]]));
    assert!(matches!(numeric_connection(&resonant, 0.5, OPT), Err(Error::ResonantResidue(_))));
    let repeated = LinearSystemSpec::one_pole(vec![ONE, ONE], eye(2));
    assert!(matches!(numeric(&repeated, 0.5, OPT), Err(Error::Input(_))));
}

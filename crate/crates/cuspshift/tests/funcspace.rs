use std::f64::consts::PI;

use cuspshift::funcspace::*;
use cuspshift::geometry::DomainSpec;
use cuspshift::{Error, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn disc_grid(f: impl Fn(C64) -> f64, nr: usize, nt: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) / nr as f64;
        for j in 0..nt {
            let t = 2.0 * PI * (j as f64 + 0.5) / nt as f64;
            s += f(C64::from_polar(r, t)) * 4.0 * r / (1.0 + r * r).powi(2);
        }
    }
    s * (1.0 / nr as f64) * (2.0 * PI / nt as f64)
}

fn random_combo(rng: &mut ChaCha8Rng, terms: usize, max_alpha: f64) -> RationalCombo {
    RationalCombo::from_terms(
        (0..terms)
            .map(|_| {
                let alpha = if rng.gen_bool(0.2) {
                    c(0.0, 0.0)
                } else {
                    C64::from_polar(rng.gen_range(0.0..max_alpha), rng.gen_range(-PI..PI))
                };
                Term { alpha, k: rng.gen_range(0..5), c: c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) }
            })
            .collect(),
    )
}

#[test]
fn shift_poly_examples() {
    let f = TaylorPoly::real(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(shift_poly(&f), TaylorPoly::real(&[2.0, 3.0, 4.0]));
    assert_eq!(shift_poly(&TaylorPoly::real(&[5.0])), TaylorPoly::real(&[]));
    assert_eq!(shift_poly(&TaylorPoly::real(&[])), TaylorPoly::real(&[]));
    let mut g = TaylorPoly::real(&[0.0, 0.0, 0.0, 7.0]);
    for _ in 0..3 {
        g = shift_poly(&g);
    }
    assert_eq!(g, TaylorPoly::real(&[7.0]));
}

#[test]
fn shift_rational_examples() {
    let a = c(0.3, -1.1);
    let g = shift_rational(&RationalCombo::gamma(a));
    assert_eq!(g.terms, vec![Term { alpha: a, k: 0, c: a }]);
    assert_eq!(shift_rational(&RationalCombo::gamma_k(c(0.0, 0.0), 4)), RationalCombo::gamma_k(c(0.0, 0.0), 3));
    assert!(shift_rational(&RationalCombo::gamma(c(0.0, 0.0))).is_zero());

    // T gamma_{a,1} = 1/(1 - a z)^2, checked pointwise
    let t = shift_rational(&RationalCombo::gamma_k(a, 1));
    assert_eq!(
        t,
        RationalCombo::from_terms(vec![Term { alpha: a, k: 0, c: c(1.0, 0.0) }, Term { alpha: a, k: 1, c: a }])
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let z = C64::from_polar(rng.gen_range(0.05..0.6), rng.gen_range(-PI..PI));
        let oracle = (c(1.0, 0.0) - a * z).powi(-2);
        assert!((t.eval(z).unwrap() - oracle).norm() < 1e-12 * oracle.norm());
    }
}

#[test]
fn evaluate_examples() {
    let a = c(0.7, 0.2);
    assert_eq!(evaluate(&RationalCombo::gamma(a), c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    assert_eq!(evaluate(&RationalCombo::gamma_k(a, 3), c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    assert_eq!(evaluate(&TaylorPoly::real(&[1.0, 1.0, 1.0]), c(0.5, 0.0)).unwrap(), c(1.75, 0.0));
    assert!(matches!(evaluate(&RationalCombo::gamma(c(2.0, 0.0)), c(0.5, 0.0)), Err(Error::Pole(_))));
}

#[test]
fn canonical_form() {
    let a = c(0.5, 0.0);
    let f = RationalCombo::from_terms(vec![
        Term { alpha: a, k: 1, c: c(1.0, 0.0) },
        Term { alpha: c(-0.5, 0.0), k: 0, c: c(2.0, 0.0) },
        Term { alpha: a, k: 1, c: c(-1.0, 0.0) },
        Term { alpha: a, k: 0, c: c(3.0, 0.0) },
    ]);
    assert!(f.is_canonical());
    assert_eq!(f.terms.len(), 2);
    assert_eq!(f.terms[0].alpha, c(-0.5, 0.0));
    let s = serde_json::to_string(&f).unwrap();
    assert_eq!(serde_json::from_str::<RationalCombo>(&s).unwrap(), f);
}

#[test]
fn iterate_identity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = TaylorPoly::new((0..65).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
    assert!(iterate_identity_residual(&f, 0, c(0.3, 0.0)).unwrap() < 1e-12);
    assert!(iterate_identity_residual(&f, 10, c(0.0, 0.9)).unwrap() < 1e-10);
    assert_eq!(iterate_identity_residual(&TaylorPoly::real(&[4.0]), 0, c(0.3, 0.0)).unwrap(), 0.0);
    assert!(iterate_identity_residual(&f, 3, c(0.0, 0.0)).is_err());
}

#[test]
fn inner_products_on_disc() {
    let d = DomainSpec::unit_disc();
    let one = TaylorPoly::real(&[1.0]);
    let z = TaylorPoly::real(&[0.0, 1.0]);
    let v = inner_product(&one, &one, &d, 1e-10);
    assert!((v.value - c(2.0 * PI, 0.0)).norm() < 1e-8);
    let v = inner_product(&z, &one, &d, 1e-10);
    assert!(v.value.norm() < 1e-9);
    let g = RationalCombo::gamma(c(0.5, 0.0));
    let v = inner_product(&g, &g, &d, 1e-10).value;
    let oracle = disc_grid(|z| 1.0 / (c(1.0, 0.0) - 0.5 * z).norm_sqr(), 1000, 2000);
    assert!(v.im.abs() < 1e-12 && (v.re - oracle).abs() < 1e-5 * oracle, "{v} {oracle}");
}

#[test]
fn gram_system_examples() {
    let d = DomainSpec::unit_disc();
    let one = RationalCombo::gamma(c(0.0, 0.0));
    let z = RationalCombo::gamma_k(c(0.0, 0.0), 1);
    let s = gram_system(std::slice::from_ref(&one), &one, &d, 1e-10).unwrap();
    assert!((s.gram[(0, 0)] - c(2.0 * PI, 0.0)).norm() < 1e-8);
    assert!((s.rhs[0] - c(2.0 * PI, 0.0)).norm() < 1e-8);
    let g = RationalCombo::gamma(c(0.5, 0.0));
    assert!(matches!(gram_system(&[g.clone(), g.clone()], &one, &d, 1e-8), Err(Error::Precondition(_))));
    let s = gram_system(&[one.clone(), z], &one, &d, 1e-10).unwrap();
    assert!(s.gram[(0, 1)].norm() < 1e-9 && s.gram[(1, 0)].norm() < 1e-9);
}

#[test]
fn projection_examples() {
    let d = DomainSpec::unit_disc();
    let basis = vec![RationalCombo::gamma(c(0.5, 0.0)), RationalCombo::gamma(c(-0.3, 0.2))];
    let s = gram_system(&basis, &basis[0], &d, 1e-10).unwrap();
    let (coef, res) = project(&s).unwrap();
    assert!(res < 1e-4, "{res}");
    assert!((coef[0] - c(1.0, 0.0)).norm() < 1e-6);
    let s = gram_system(&basis, &RationalCombo::zero(), &d, 1e-10).unwrap();
    let (coef, res) = project(&s).unwrap();
    assert!(coef.iter().all(|v| v.norm() == 0.0) && res == 0.0);
}

#[test]
fn density_probe_examples() {
    let d = DomainSpec::unit_disc();
    let fam = |k: usize| RationalCombo::gamma_k(c(0.0, 0.0), k as u32);
    assert!(density_probe(&d, &fam, &[], &[1, 2], 1e-8).unwrap().rows.is_empty());
    let t = TaylorPoly::real(&[0.0, 0.0, 1.0]).to_combo();
    let rep = density_probe(&d, &fam, std::slice::from_ref(&t), &[0, 2, 3], 1e-10).unwrap();
    let col = rep.column(0);
    let norm = norm_sq(&t, &d, 1e-10).value.sqrt();
    assert!((col[0] - norm).abs() < 1e-9);
    assert!((col[1] - norm).abs() < 1e-6);
    assert!(col[2] < 1e-4);
    assert!(rep.to_csv().starts_with("target,K,residual,condition_estimate\n"));
    assert!(density_probe(&d, &fam, &[t], &[3, 2], 1e-8).is_err());
}

#[test]
fn membership_checks() {
    let cr = DomainSpec::crescent();
    check_membership(&RationalCombo::gamma(c(1.0, 0.0)), &cr).unwrap();
    assert!(matches!(check_membership(&RationalCombo::gamma_k(c(1.0, 0.0), 1), &cr), Err(Error::NotInSpace(_))));
    assert!(matches!(check_membership(&RationalCombo::gamma(c(-1.0, 0.0)), &cr), Err(Error::NotInSpace(_))));
    assert!(matches!(check_membership(&RationalCombo::gamma(c(0.0, 1.5)), &cr), Err(Error::NotInSpace(_))));
    // pole inside the removed disc
    check_membership(&RationalCombo::gamma(c(2.0, 0.0)), &cr).unwrap();
}

#[test]
fn cauchy_schwarz_and_psd() {
    let d = DomainSpec::crescent();
    let basis: Vec<RationalCombo> =
        [c(0.5, 0.0), c(-0.2, 0.6), c(1.6, 0.1), c(0.0, -0.7)].iter().map(|&a| RationalCombo::gamma(a)).collect();
    let t = TaylorPoly::real(&[1.0, -1.0, 0.5]).to_combo();
    let s = gram_system(&basis, &t, &d, 1e-10).unwrap();
    let tn = s.target_norm_sq.sqrt();
    for i in 0..basis.len() {
        assert!(s.rhs[i].norm() <= s.gram[(i, i)].re.sqrt() * tn + 1e-8);
    }
    let eig = s.gram.clone().symmetric_eigen();
    let scale = s.gram.norm();
    assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10 * scale));
    // first-order optimality of the projection
    let (coef, res) = project(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut dv: Vec<C64> = (0..coef.len()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let nrm = dv.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        dv.iter_mut().for_each(|v| *v *= 1e-3 / nrm);
        let u = RationalCombo::combine(
            &basis.iter().zip(&coef).zip(&dv).map(|((b, &a), &e)| (a + e, b)).collect::<Vec<_>>(),
        );
        let diff = u.add(&t.scale(c(-1.0, 0.0)));
        let r = norm_sq(&diff, &d, 1e-11).value.max(0.0).sqrt();
        assert!(r >= res - 1e-7, "{r} < {res}");
    }
}

proptest! {
    #[test]
    fn shift_is_linear(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_combo(&mut rng, 6, 2.0);
        let g = random_combo(&mut rng, 6, 2.0);
        let (a, b) = (c(a, 0.5), c(b, -0.25));
        let lhs = shift_rational(&RationalCombo::combine(&[(a, &f), (b, &g)]));
        let rhs = RationalCombo::combine(&[(a, &shift_rational(&f)), (b, &shift_rational(&g))]);
        let z = c(0.21, -0.13);
        prop_assert!((lhs.eval(z).unwrap() - rhs.eval(z).unwrap()).norm() < 1e-12 * (1.0 + lhs.eval(z).unwrap().norm()));
        let p = TaylorPoly::new((0..8).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect());
        let q = TaylorPoly::new((0..8).map(|_| c(0.0, rng.gen_range(-1.0..1.0))).collect());
        let sum = TaylorPoly::new(p.coeffs.iter().zip(&q.coeffs).map(|(x, y)| a * x + b * y).collect());
        let lin = TaylorPoly::new(shift_poly(&p).coeffs.iter().zip(&shift_poly(&q).coeffs).map(|(x, y)| a * x + b * y).collect());
        prop_assert_eq!(shift_poly(&sum), lin);
    }

    #[test]
    fn shift_matches_difference_quotient(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_combo(&mut rng, 8, 1.0 / 0.99);
        let g = shift_rational(&f);
        prop_assert!(g.is_canonical());
        let f0 = f.eval(c(0.0, 0.0)).unwrap();
        for _ in 0..100 {
            let z = C64::from_polar(rng.gen_range(1e-3..0.9), rng.gen_range(-PI..PI));
            let want = (f.eval(z).unwrap() - f0) / z;
            let got = g.eval(z).unwrap();
            prop_assert!((got - want).norm() <= 1e-11 * (1.0 + want.norm()), "{} vs {}", got, want);
        }
    }

    #[test]
    fn eigen_relation(r in 1e-3f64..2.0, t in -PI..PI) {
        let a = C64::from_polar(r, t);
        let g = shift_rational(&RationalCombo::gamma(a));
        prop_assert_eq!(g.terms, vec![Term { alpha: a, k: 0, c: a }]);
    }

    #[test]
    fn iterate_identity_random(seed in 0u64..10_000, n in 0usize..16, t in -PI..PI) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let deg = rng.gen_range(n + 1..65);
        let f = TaylorPoly::new((0..=deg).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect());
        prop_assert!(iterate_identity_residual(&f, n, C64::from_polar(0.9, t)).unwrap() < 1e-10);
    }
}

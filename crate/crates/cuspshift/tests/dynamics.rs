use std::f64::consts::PI;
use std::sync::OnceLock;

use cuspshift::construct::{build_domain, CuspSearch, ZSpec};
use cuspshift::dynamics::*;
use cuspshift::funcspace::{norm_sq, shift_rational_n, RationalCombo, Term};
use cuspshift::geometry::{DomainSpec, Membership};
use cuspshift::{Error, C64};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn built() -> &'static DomainSpec {
    static D: OnceLock<DomainSpec> = OnceLock::new();
    D.get_or_init(|| {
        build_domain(&ZSpec::dyadic(8), 3, &[0.9, 0.48, 0.45], &[0.5, 0.25, 0.5 / 3.0], &CuspSearch::default())
            .unwrap()
            .domain
    })
}

#[test]
fn orbit_of_eigenvector_decays_geometrically() {
    let d = DomainSpec::unit_disc();
    let a = c(0.3, -0.4);
    let norms = orbit_norms(&d, &RationalCombo::gamma(a), 6, 1e-10).unwrap();
    assert_eq!(norms.len(), 7);
    for (n, v) in norms.iter().enumerate() {
        let oracle = 0.5f64.powi(n as i32) * norms[0];
        assert!((v - oracle).abs() < 1e-7 * norms[0], "{n} {v} {oracle}");
    }
    // ||1||^2 = 2 pi and T 1 = 0
    let norms = orbit_norms(&d, &RationalCombo::gamma(c(0.0, 0.0)), 2, 1e-10).unwrap();
    assert!((norms[0] - (2.0 * PI).sqrt()).abs() < 1e-8);
    assert_eq!(&norms[1..], &[0.0, 0.0]);
    assert!(orbit_norms(&d, &RationalCombo::gamma(c(2.0, 0.0)), 2, 1e-8).is_err());
}

#[test]
fn damp_inverts_shift_exactly_for_dyadic_beta() {
    let ext = RationalCombo::from_terms(vec![
        Term { alpha: c(2.0, 0.0), k: 0, c: c(1.5, -0.25) },
        Term { alpha: c(0.0, 4.0), k: 0, c: c(-3.0, 1.0) },
    ]);
    for n in [0, 1, 5, 17] {
        assert_eq!(shift_rational_n(&damp(&ext, n), n), ext, "{n}");
    }
}

#[test]
fn exterior_classification() {
    let dom = built();
    let p = dom.prepare();
    let pool = exterior_pole_pool(dom, 0.02, 64);
    assert!((56..=72).contains(&pool.len()), "{}", pool.len());
    for z in &pool {
        assert!(z.norm() < 1.0);
        assert_eq!(p.membership(*z, 0.02), Membership::Outside);
        assert!(is_exterior(&Term { alpha: z.inv(), k: 0, c: c(1.0, 0.0) }, &p));
        assert!(!is_exterior(&Term { alpha: z.inv(), k: 1, c: c(1.0, 0.0) }, &p));
    }
    assert!(!is_exterior(&Term { alpha: c(-2.0, 0.0), k: 0, c: c(1.0, 0.0) }, &p));
    assert!(!is_exterior(&Term { alpha: c(0.5, 0.0), k: 0, c: c(1.0, 0.0) }, &p));
    assert!(exterior_pole_pool(&DomainSpec::unit_disc(), 0.02, 64).is_empty());
}

#[test]
fn witness_preconditions() {
    let d = DomainSpec::unit_disc();
    let one = RationalCombo::gamma(c(0.0, 0.0));
    let z = RationalCombo::gamma_k(c(0.0, 0.0), 1);
    let o = WitnessOptions::default();
    assert!(matches!(mixing_witness(&d, &one, &z, 0.0, &o, 1e-3), Err(Error::Precondition(_))));
    let far = RationalCombo::gamma(c(1.5, 0.0));
    assert!(matches!(mixing_witness(&d, &far, &z, 1e-2, &o, 1e-3), Err(Error::Precondition(_))));
    assert!(matches!(mixing_witness(&d, &one, &z, 1e-2, &o, 1e-3), Err(Error::Precondition(_))));
}

#[test]
fn witness_for_exact_eigenvector_targets() {
    let dom = built();
    let pool = exterior_pole_pool(dom, 0.05, 16);
    let beta = pool[3].inv();
    let f = RationalCombo::gamma(c(0.3, 0.0));
    let g = RationalCombo::gamma(beta).scale(c(0.05, 0.0));
    let w = mixing_witness(dom, &f, &g, 1e-2, &WitnessOptions::default(), 1e-3).unwrap();
    assert_eq!(w.exterior_part, g);
    assert!(w.err_start + 2.0 * w.err_start_error < 1e-2);
    assert!(w.err_end + 2.0 * w.err_end_error < 1e-2);
    // T^n u - g = 0.3^n gamma_0.3 exactly
    let tail = norm_sq(&RationalCombo::gamma(c(0.3, 0.0)), dom, 1e-10).value.sqrt() * 0.3f64.powi(w.n as i32);
    assert!((w.err_end - tail).abs() < 1e-5, "{} {tail}", w.err_end);
    let check = verify_witness(dom, &w, &f, &g, 1e-4);
    assert!(check.ok, "{:?}", check.messages);

    let mut bad = w.clone();
    bad.n = 1;
    let check = verify_witness(dom, &bad, &f, &g, 1e-4);
    assert!(!check.ok);
    assert!(check.messages.iter().any(|m| m.contains("differs")));
    assert!(serde_json::from_str::<MixingWitness>(&w.to_json().unwrap()).unwrap() == w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_semigroup(a in 0usize..12, b in 0usize..12, r in 0.1f64..3.0, t in -PI..PI, k in 0u32..3) {
        let f = RationalCombo::from_terms(vec![
            Term { alpha: C64::from_polar(r, t), k, c: c(1.0, 0.5) },
            Term { alpha: c(0.0, 0.0), k: 14, c: c(-2.0, 0.0) },
        ]);
        let lhs = shift_rational_n(&f, a + b);
        let rhs = shift_rational_n(&shift_rational_n(&f, a), b);
        let z = C64::from_polar(0.05, t + 1.0);
        let (x, y) = (lhs.value(z), rhs.value(z));
        prop_assert!((x - y).norm() <= 1e-10 * (1.0 + x.norm()), "{x} {y}");
    }

    #[test]
    fn damp_undone_by_shift(n in 0usize..30, r in 1.05f64..3.0, t in -PI..PI) {
        let ext = RationalCombo::gamma(C64::from_polar(r, t)).scale(c(0.7, -0.2));
        let back = shift_rational_n(&damp(&ext, n), n);
        for (x, y) in back.terms.iter().zip(&ext.terms) {
            prop_assert_eq!(x.alpha, y.alpha);
            prop_assert!((x.c - y.c).norm() <= 1e-12 * y.c.norm());
        }
    }
}

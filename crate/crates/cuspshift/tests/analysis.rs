use std::f64::consts::{LN_2, PI};

use cuspshift::analysis::*;
use cuspshift::funcspace::{RationalCombo, TaylorPoly};
use cuspshift::geometry::{CuspRegion, DomainSpec};
use cuspshift::{Error, C64};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn single_cusp() -> DomainSpec {
    DomainSpec::with_cusps(vec![CuspRegion::new(0.0, 1.5, 1.0, 2.0)])
}

#[test]
fn shapes() {
    assert_eq!(derivative_shape(0), 1.0);
    assert!((derivative_shape(1) - 5f64.sqrt() * LN_2).abs() < 1e-15);
    assert!((derivative_shape(3) - 6.0 * 5f64.powf(1.5) * 3f64.ln().powi(3)).abs() < 1e-12);
    assert_eq!(w_shape(0), 1.0);
    assert!((w_shape(4) - 625.0 * 4f64.ln().powi(8)).abs() < 1e-9);
}

#[test]
fn growth_interval_is_symmetric_under_inversion() {
    let xs = growth_interval(0.4, 9);
    assert_eq!(xs.len(), 9);
    assert!((xs[4] - 1.0).abs() < 1e-14, "{xs:?}");
    for i in 0..9 {
        // tan(pi/4 + a) tan(pi/4 - a) = 1
        assert!((xs[i] * xs[8 - i] - 1.0).abs() < 1e-14, "{xs:?}");
        if i > 0 {
            assert!(xs[i] > xs[i - 1]);
        }
    }
    assert!((xs[0] - (PI / 4.0 - 0.1).tan()).abs() < 1e-14, "{xs:?}");
    assert!((growth_interval(0.4, 1)[0] - 1.0).abs() < 1e-15);
}

#[test]
fn cauchy_transform_on_disc() {
    let d = DomainSpec::unit_disc();
    let one = TaylorPoly::real(&[1.0]);
    let z = TaylorPoly::real(&[0.0, 1.0]);
    // mean value property on circles
    let a = c(0.3, 0.4);
    let v = cauchy_transform(&one, a, 0, &d, 1e-8).unwrap();
    assert!((v.value - c(2.0 * PI, 0.0)).norm() < 1e-5, "{v:?}");
    let v = cauchy_transform(&one, a, 1, &d, 1e-8).unwrap();
    assert!(v.value.norm() < 1e-5, "{v:?}");
    // <gamma_a, z> = a int |z|^2 dm2 = a 4 pi (ln 2 - 1/2)
    let v = cauchy_transform(&z, a, 0, &d, 1e-8).unwrap();
    let oracle = a * 4.0 * PI * (LN_2 - 0.5);
    assert!((v.value - oracle).norm() < 1e-5, "{v:?} {oracle}");
    // 1! <gamma_{0,1}, z> = int |z|^2 dm2
    let v = cauchy_transform(&z, c(0.0, 0.0), 1, &d, 1e-8).unwrap();
    assert!((v.value - c(4.0 * PI * (LN_2 - 0.5), 0.0)).norm() < 1e-5);
    assert!(matches!(cauchy_transform(&one, c(2.0, 0.0), 0, &d, 1e-8), Err(Error::Precondition(_))));
}

#[test]
fn growth_checks_need_cusp_at_one() {
    let g = RationalCombo::gamma(c(0.5, 0.0));
    for d in [DomainSpec::unit_disc(), DomainSpec::crescent()] {
        assert!(matches!(growth_check(&g, &d, 0.25, 2, 3, 1e-6), Err(Error::Precondition(_))));
        assert!(matches!(w_bound_check(&d, 0.25, 2, 3, 1e-6), Err(Error::Precondition(_))));
    }
    assert!(matches!(w_bound_check(&single_cusp(), 1.5, 2, 3, 1e-6), Err(Error::Precondition(_))));
    assert!(matches!(w_bound_check(&single_cusp(), 0.25, 2, 0, 1e-6), Err(Error::Precondition(_))));
}

#[test]
fn w_bound_on_single_cusp() {
    let rep = w_bound_check(&single_cusp(), 0.25, 6, 5, 1e-6).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(rep.pass, "{rep:?}");
    let ratio0 = rep.sup_w[0] / rep.bound_values[0];
    let ratio1 = rep.sup_w[1] / rep.bound_values[1];
    assert!((ratio0.max(ratio1) - 1.0).abs() < 1e-12);
    assert!(rep.to_csv().starts_with("k,sup_w,bound_value,ratio\n"));
}

#[test]
fn growth_on_single_cusp() {
    let rep = growth_check(&RationalCombo::gamma(c(0.5, 0.0)), &single_cusp(), 0.25, 3, 3, 1e-7).unwrap();
    assert_eq!(rep.k_values, vec![0, 1, 2, 3]);
    for (s, b) in rep.sup_derivatives.iter().zip(&rep.cauchy_schwarz_bounds) {
        assert!(*s <= b * (1.0 + 1e-6), "{rep:?}");
    }
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn eigen_on_crescent_and_disc() {
    let scales = cuspshift::quadrature::default_scales();
    let cr = DomainSpec::crescent();
    let e = eigen_classify(&cr, c(1.0, 0.0), &scales, 1e-6).unwrap();
    assert_eq!(e.verdict, Verdict::Eigenvalue);
    assert!(e.norm_if_member.unwrap() > 0.0);
    assert_eq!(eigen_classify(&cr, c(-1.0, 0.0), &scales, 1e-6).unwrap().verdict, Verdict::NotEigenvalue);
    let d = DomainSpec::unit_disc();
    let i = C64::from_polar(1.0, 1.0);
    let e = eigen_classify(&d, i, &scales, 1e-6).unwrap();
    assert_eq!(e.verdict, Verdict::NotEigenvalue);
    assert!(e.norm_if_member.is_none());
    assert!(matches!(eigen_classify(&d, c(0.9, 0.0), &scales, 1e-6), Err(Error::Precondition(_))));
}

#[test]
fn eigen_at_cusp_anchor() {
    let scales = cuspshift::quadrature::default_scales();
    let dom = single_cusp();
    assert_eq!(eigen_classify(&dom, c(1.0, 0.0), &scales, 1e-6).unwrap().verdict, Verdict::Eigenvalue);
    assert_eq!(eigen_classify(&dom, C64::from_polar(1.0, 2.5), &scales, 1e-6).unwrap().verdict, Verdict::NotEigenvalue);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cauchy_transform_is_antilinear_in_g(a in -0.9f64..0.9, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let d = DomainSpec::unit_disc();
        let f = TaylorPoly::real(&[1.0, 0.5]);
        let g = TaylorPoly::new(vec![c(s, t), c(0.0, 0.0), c(1.0, -s)]);
        let sum = TaylorPoly::new(vec![c(1.0 + s, t), c(0.5, 0.0), c(1.0, -s)]);
        let al = c(a, 0.2);
        let vf = cauchy_transform(&f, al, 1, &d, 1e-7).unwrap().value;
        let vg = cauchy_transform(&g, al, 1, &d, 1e-7).unwrap().value;
        let vs = cauchy_transform(&sum, al, 1, &d, 1e-7).unwrap().value;
        prop_assert!((vs - vf - vg).norm() < 1e-5 * (1.0 + vs.norm()));
    }
}

use std::f64::consts::PI;

use cuspshift::geometry::*;
use cuspshift::quadrature::*;
use cuspshift::C64;
use proptest::prelude::*;

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Brute-force polar midpoint rule on the unit disc against the spherical measure.
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

#[test]
fn disc_area() {
    let q = area(&Region::new(&DomainSpec::unit_disc()), 1e-10);
    assert!((q.value - 2.0 * PI).abs() < 1e-9, "{q:?}");
    assert!(q.converged);
}

#[test]
fn crescent_area_matches_one_dimensional_oracle() {
    // removed disc in polar form: r < cos(theta); the radial integral is closed form
    let removed = simpson(|t| 2.0 - 2.0 / (1.0 + t.cos().powi(2)), -PI / 2.0, PI / 2.0, 2000);
    let oracle = 2.0 * PI - removed;
    assert!((oracle - 2f64.sqrt() * PI).abs() < 1e-10);
    let q = area(&Region::new(&DomainSpec::crescent()), 1e-10);
    assert!((q.value - oracle).abs() < 1e-8, "{} vs {oracle}", q.value);
}

#[test]
fn moment_on_disc() {
    let q = integrate(&Region::new(&DomainSpec::unit_disc()), |z| z.norm_sqr(), 1e-11, 40);
    let oracle = 2.0 * PI * (2.0 * 2f64.ln() - 1.0);
    assert!((q.value - oracle).abs() < 1e-9);
}

#[test]
fn excised_and_kept_discs() {
    let dom = DomainSpec::unit_disc();
    let d = Disc::new(C64::new(0.3, -0.2), 0.25);
    let inside = area(&Region::new(&dom).keep(d), 1e-11).value;
    let outside = area(&Region::new(&dom).excise(d), 1e-11).value;
    assert!((inside + outside - 2.0 * PI).abs() < 1e-9);
    let oracle = disc_grid(|z| d.contains(z) as u8 as f64, 1500, 3000);
    assert!((inside - oracle).abs() < 2e-4, "{inside} {oracle}");
}

#[test]
fn w_integral_on_disc_matches_grid() {
    let reg = Region::new(&DomainSpec::unit_disc());
    for &(k, x) in &[(0u32, C64::new(0.3, 0.1)), (2, C64::new(-0.5, 0.0)), (1, C64::new(0.0, 0.6))] {
        let w = w_integral(&reg, k, x, 1e-10);
        let oracle = disc_grid(|z| w_kernel(k, x, z), 800, 1600);
        assert!((w.quad.value - oracle).abs() < 1e-5 * oracle, "{k} {x}: {} {oracle}", w.quad.value);
        assert!(w.trace.is_none());
    }
}

#[test]
fn w_integral_at_origin_is_area() {
    let reg = Region::new(&DomainSpec::crescent());
    let w = w_integral(&reg, 3, C64::new(0.0, 0.0), 1e-10);
    assert!((w.quad.value - 2f64.sqrt() * PI).abs() < 1e-8);
}

#[test]
fn w_integral_divergent_reports_trace() {
    let reg = Region::new(&DomainSpec::crescent());
    let w = w_integral(&reg, 0, C64::new(-1.0, 0.0), 1e-8);
    let tr = w.trace.expect("boundary pole on the free arc must diverge");
    assert_eq!(tr.entries.len(), 6);
    assert!(tr.entries.windows(2).all(|p| p[1].0 < p[0].0 && p[1].1 > p[0].1));
    assert!(tr.to_csv().starts_with("epsilon,partial_integral\n"));
}

#[test]
fn exp_integral_reference_values() {
    for &(x, v) in &[
        (0.5, 0.5597735947761608),
        (1.0, 0.21938393439552029),
        (2.0, 0.04890051070806112),
        (10.0, 4.156968929685324e-6),
    ] {
        assert!((exp_integral_e1(x) - v).abs() < 1e-14 * v.max(1e-3), "{x}");
    }
}

#[test]
fn log_tail_k0_is_e1() {
    for &r in &[0.9f64, 0.5, 0.3] {
        let a = (1.0 / r).exp();
        let v = log_tail_integral(0, r);
        assert!((v - exp_integral_e1(a)).abs() < 1e-12 * v, "{r}");
        assert!((log_tail_integral_direct(0, r) - v).abs() < 1e-12 * v);
    }
}

#[test]
fn log_tail_log_space_matches_direct() {
    for &(k, r) in &[(1u32, 0.5), (3, 0.4), (6, 0.8)] {
        let d = log_tail_integral_direct(k, r);
        assert!((log_tail_integral_ln(k, r) - d.ln()).abs() < 1e-10, "{k} {r}");
    }
    assert!(log_tail_integral_ln(60, 0.5).is_finite());
}

#[test]
fn divergence_probe_crescent() {
    let c = DomainSpec::crescent();
    let conv = divergence_probe(&c, C64::new(1.0, 0.0), &default_scales()).unwrap();
    assert_eq!(conv.classification, DivergenceClass::Convergent, "{conv:?}");
    let div = divergence_probe(&c, C64::new(-1.0, 0.0), &default_scales()).unwrap();
    assert_eq!(div.classification, DivergenceClass::LogDivergent, "{div:?}");
    // half-disc at -1 with unit density there
    assert!((div.slope - PI).abs() < 0.1, "{}", div.slope);
    let e = &div.trace.entries;
    let n = e.len();
    let last = (e[n - 1].1 - e[n - 2].1) / (e[n - 2].0 / e[n - 1].0).ln();
    assert!((last - PI).abs() < 0.02, "{last}");
    assert!(divergence_probe(&c, C64::new(-1.0, 0.0), &[0.1, 0.05]).is_err());
}

#[test]
fn classify_synthetic_traces() {
    let mk =
        |f: &dyn Fn(f64) -> f64| RefinementTrace { entries: default_scales().into_iter().map(|e| (e, f(e))).collect() };
    assert_eq!(classify_trace(&mk(&|e| 2.0 + 3.0 * (1.0 / e).ln())).0, DivergenceClass::LogDivergent);
    assert_eq!(classify_trace(&mk(&|e| 2.0 - e * e)).0, DivergenceClass::Convergent);
    assert_eq!(classify_trace(&mk(&|_| 5.0)).0, DivergenceClass::Convergent);
    assert_eq!(classify_trace(&mk(&|e| 1.0 / e)).0, DivergenceClass::Inconclusive);
}

#[test]
fn build_rule_reproduces_integrals() {
    let reg = Region::new(&DomainSpec::with_cusps(vec![CuspRegion::new(0.0, 1.0, 1.0, 2.0)]));
    let opts = QuadOptions::abs(1e-9);
    let (rule, q) = build_rule(&reg, 1, |_, out| out[0] = 1.0, &opts);
    let s: f64 = rule.iter().map(|p| p.weight).sum();
    assert!((s - q.value[0]).abs() < 1e-12);
    let m: f64 = rule.iter().map(|p| p.weight * p.z.re).sum();
    let direct = integrate(&reg, |z| z.re, 1e-9, 40).value;
    assert!((m - direct).abs() < 1e-6);
}

#[test]
fn refinement_trace_csv() {
    let t = RefinementTrace { entries: vec![(0.1, 1.5), (0.05, 2.0)] };
    assert_eq!(t.to_csv(), "epsilon,partial_integral\n0.1,1.5\n0.05,2.0\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn excision_is_additive(re in -0.6f64..0.6, im in -0.6f64..0.6, r in 0.01f64..0.3) {
        let dom = DomainSpec::crescent();
        let d = Disc::new(C64::new(re, im), r);
        let a = area(&Region::new(&dom).keep(d), 1e-11).value;
        let b = area(&Region::new(&dom).excise(d), 1e-11).value;
        prop_assert!((a + b - 2f64.sqrt() * PI).abs() < 1e-8);
        prop_assert!(a >= -1e-12);
    }

    #[test]
    fn w_is_monotone_in_k(re in -0.9f64..0.9, im in -0.9f64..0.9) {
        let x = C64::new(re, im);
        prop_assume!(x.norm() < 0.9);
        let reg = Region::new(&DomainSpec::unit_disc());
        let w0 = w_integral(&reg, 0, x, 1e-8).quad.value;
        let w1 = w_integral(&reg, 1, x, 1e-8).quad.value;
        // pointwise 1/|1 - x z| >= 1/(1 + |x|)
        prop_assert!(w1 >= w0 / (1.0 + x.norm()).powi(2) * (1.0 - 1e-9));
    }
}

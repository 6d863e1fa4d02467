//! Orbits of the backward shift and explicit mixing witnesses built from
//! eigenvectors inside and outside the unit circle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::funcspace::{check_membership, lsq_solve, norm_sq, shift_rational, shift_rational_n, RationalCombo, Term};
use crate::geometry::{DomainSpec, Membership, PreparedDomain};
use crate::quadrature::{build_rule, integrate_vec, QuadOptions, Region, RulePoint};
use crate::{Error, Result, C64};

/// `||T^n f||` for `n = 0..=count`.
pub fn orbit_norms(dom: &DomainSpec, f: &RationalCombo, count: usize, tol: f64) -> Result<Vec<f64>> {
    check_membership(f, dom)?;
    let mut cur = f.clone();
    let mut out = Vec::with_capacity(count + 1);
    for n in 0..=count {
        let q = norm_sq(&cur, dom, tol);
        if !q.converged {
            return Err(Error::Quadrature { what: format!("||T^{n} f||"), error: q.error_estimate });
        }
        out.push(q.value.max(0.0).sqrt());
        cur = shift_rational(&cur);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingWitness {
    pub u: RationalCombo,
    pub n: usize,
    pub eps: f64,
    /// `||u - f||`.
    pub err_start: f64,
    pub err_start_error: f64,
    /// `||T^n u - g||`.
    pub err_end: f64,
    pub err_end_error: f64,
    pub interior_part: RationalCombo,
    /// Unscaled approximant of `g`; `u` holds it multiplied by `beta^(-n)` termwise.
    pub exterior_part: RationalCombo,
}

impl MixingWitness {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// True when `t` is `gamma_beta` with `1/beta` strictly inside a removed cusp piece.
pub fn is_exterior(t: &Term, dom: &PreparedDomain) -> bool {
    t.k == 0 && t.alpha.norm() > 1.0 && {
        let p = t.alpha.inv();
        p.norm() < 1.0 && dom.membership(p, 0.0) == Membership::Outside
    }
}

fn is_interior(t: &Term) -> bool {
    t.alpha.norm() < 1.0
}

/// `sum c_i beta_i^(-n) gamma_(beta_i)`, whose `n`-th shift is `ext`.
pub fn damp(ext: &RationalCombo, n: usize) -> RationalCombo {
    RationalCombo::from_terms(
        ext.terms.iter().map(|t| Term { alpha: t.alpha, k: t.k, c: t.c / t.alpha.powu(n as u32) }).collect(),
    )
}

/// `count` exterior poles: points `1/beta` pushed at least `margin` into the
/// removed cusp pieces from equispaced points of their hull boundaries, with
/// counts proportional to the perimeters.
pub fn exterior_pole_pool(dom: &DomainSpec, margin: f64, count: usize) -> Vec<C64> {
    let p = dom.prepare();
    let hulls: Vec<Vec<C64>> = p.cusps.iter().map(|c| c.hull_polygon()).filter(|h| h.len() >= 3).collect();
    let perimeter = |h: &[C64]| (0..h.len()).map(|i| (h[(i + 1) % h.len()] - h[i]).norm()).sum::<f64>();
    let total: f64 = hulls.iter().map(|h| perimeter(h)).sum();
    let mut pool = Vec::new();
    if !(total > 0.0) {
        return pool;
    }
    for h in &hulls {
        let per = perimeter(h);
        let m = (count as f64 * per / total).round() as usize;
        let centroid = h.iter().sum::<C64>() / h.len() as f64;
        let (mut i, mut start) = (0, 0.0);
        for j in 0..m {
            let s = per * (j as f64 + 0.5) / m as f64;
            while i + 1 < h.len() && start + (h[(i + 1) % h.len()] - h[i]).norm() < s {
                start += (h[(i + 1) % h.len()] - h[i]).norm();
                i += 1;
            }
            let seg = h[(i + 1) % h.len()] - h[i];
            let mut z = h[i] + seg * ((s - start) / seg.norm()).min(1.0);
            let step = (centroid - z) / 400.0;
            for _ in 0..400 {
                if z.norm() < 1.0 && p.membership(z, margin) == Membership::Outside {
                    pool.push(z);
                    break;
                }
                z += step;
            }
        }
    }
    pool
}

fn fit_rule(dom: &DomainSpec, g: &RationalCombo, rule_tol: f64) -> Vec<RulePoint> {
    let region = Region::new(dom).singular(singular_of(g));
    build_rule(
        &region,
        2,
        |z, out| {
            out[0] = 1.0;
            out[1] = g.value(z).norm_sqr();
        },
        &QuadOptions::rel(rule_tol, rule_tol * 1e-2),
    )
    .0
}

fn singular_of(f: &RationalCombo) -> Vec<C64> {
    f.poles().into_iter().filter(|a| a.norm() > 0.0).map(|a| a.inv()).collect()
}

fn rule_norm(rule: &[RulePoint], f: &RationalCombo) -> f64 {
    rule.iter().map(|p| p.weight * f.value(p.z).norm_sqr()).sum::<f64>().max(0.0).sqrt()
}

/// Least-squares fit of `g` by `gamma_beta`, `1/beta` in `poles`, in the
/// discrete norm of `rule`.
fn fit_exterior(rule: &[RulePoint], g: &RationalCombo, poles: &[C64]) -> RationalCombo {
    let betas: Vec<C64> = poles.iter().map(|p| p.inv()).collect();
    let a = DMatrix::from_fn(rule.len(), betas.len(), |i, j| 1.0 / (1.0 - betas[j] * rule[i].z));
    let b = DVector::from_iterator(rule.len(), rule.iter().map(|p| g.value(p.z)));
    let w: Vec<f64> = rule.iter().map(|p| p.weight).collect();
    let c = lsq_solve(&a, &b, Some(&w), 1e-15);
    RationalCombo::from_terms(betas.iter().zip(c.iter()).map(|(&alpha, &c)| Term { alpha, k: 0, c }).collect())
}

/// `||f||` by adaptive quadrature to absolute tolerance `abs` on `||f||^2`;
/// returns the norm, its error estimate and the convergence flag.
pub fn witness_norm(f: &RationalCombo, dom: &DomainSpec, abs: f64) -> (f64, f64, bool) {
    let region = Region::new(dom).singular(singular_of(f));
    let q = integrate_vec(&region, 1, |z, o| o[0] = f.value(z).norm_sqr(), &QuadOptions::abs(abs));
    (q.value[0].max(0.0).sqrt(), sqrt_err(q.value[0], q.error[0]), q.converged)
}

/// Options of [`mixing_witness`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessOptions {
    /// Pole counts tried in turn for the exterior fit.
    pub budgets: Vec<usize>,
    /// Clearance of the poles from the domain.
    pub pole_margin: f64,
    /// Relative tolerance of the rule the fit is made on; the residual is
    /// measured on a rule a hundred times finer.
    pub rule_tol: f64,
    pub max_n: usize,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions { budgets: vec![64, 128, 256], pole_margin: 0.02, rule_tol: 1e-6, max_n: 1 << 16 }
    }
}

/// Finds `u` and `n` with `||u - f|| < eps` and `||T^n u - g|| < eps`, both
/// with a margin of twice the quadrature error estimate. Squared norms are
/// integrated to the absolute tolerance `tol * eps^2`.
pub fn mixing_witness(
    dom: &DomainSpec,
    f: &RationalCombo,
    g: &RationalCombo,
    eps: f64,
    opts: &WitnessOptions,
    tol: f64,
) -> Result<MixingWitness> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("eps must be positive".into()));
    }
    if !f.terms.iter().all(is_interior) {
        return Err(Error::Precondition("f must be a combination of kernels with |alpha| < 1".into()));
    }
    let prepared = dom.prepare();
    let exterior = if g.terms.iter().all(|t| is_exterior(t, &prepared)) {
        g.clone()
    } else {
        if exterior_pole_pool(dom, opts.pole_margin, 64).is_empty() {
            return Err(Error::Precondition("the domain offers no exterior eigenvalues".into()));
        }
        let coarse = fit_rule(dom, g, opts.rule_tol);
        let fine = fit_rule(dom, g, opts.rule_tol * 1e-2);
        let mut best: Option<(f64, RationalCombo)> = None;
        for &m in &opts.budgets {
            let poles = exterior_pole_pool(dom, opts.pole_margin, m);
            let fit = fit_exterior(&coarse, g, &poles);
            let diff = fit.add(&g.scale(C64::new(-1.0, 0.0)));
            let (rf, rc) = (rule_norm(&fine, &diff), rule_norm(&coarse, &diff));
            let res = rf + 2.0 * (rf - rc).abs();
            if best.as_ref().is_none_or(|(b, _)| res < *b) {
                best = Some((res, fit));
            }
            if res < 0.5 * eps {
                break;
            }
        }
        let (res, fit) = best.unwrap();
        if !(res < eps) {
            return Err(Error::ResidualFloor { achieved: res, eps });
        }
        fit
    };
    let interior = f.clone();
    let minus = C64::new(-1.0, 0.0);
    let abs = tol * eps * eps;
    let mut n = 1;
    let mut last = None;
    while n <= opts.max_n {
        let u = interior.add(&damp(&exterior, n));
        let (es, ses, sc) = witness_norm(&u.add(&f.scale(minus)), dom, abs);
        let (ee, see, ec) = witness_norm(&shift_rational_n(&u, n).add(&g.scale(minus)), dom, abs);
        if sc && ec && es + 2.0 * ses < eps && ee + 2.0 * see < eps {
            return Ok(MixingWitness {
                u,
                n,
                eps,
                err_start: es,
                err_start_error: ses,
                err_end: ee,
                err_end_error: see,
                interior_part: interior,
                exterior_part: exterior,
            });
        }
        last = Some(es.max(ee));
        n *= 2;
    }
    Err(Error::ResidualFloor { achieved: last.unwrap_or(f64::INFINITY), eps })
}

/// Error of `sqrt(v)` given an error `e` of `v`.
fn sqrt_err(v: f64, e: f64) -> f64 {
    let v = v.max(0.0);
    (v + e).sqrt() - v.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessCheck {
    pub ok: bool,
    pub err_start: f64,
    pub err_start_error: f64,
    pub err_end: f64,
    pub err_end_error: f64,
    pub messages: Vec<String>,
}

/// Recomputes both errors from scratch, with squared norms to absolute
/// tolerance `tol * eps^2`, and checks the algebraic structure of `u`.
pub fn verify_witness(
    dom: &DomainSpec,
    w: &MixingWitness,
    f: &RationalCombo,
    g: &RationalCombo,
    tol: f64,
) -> WitnessCheck {
    let mut messages = Vec::new();
    let prepared = dom.prepare();
    if w.u != w.interior_part.add(&damp(&w.exterior_part, w.n)) {
        messages.push("u differs from interior part plus damped exterior part".to_string());
    }
    if !w.interior_part.terms.iter().all(is_interior) {
        messages.push("interior part has a pole with |alpha| >= 1".to_string());
    }
    if !w.exterior_part.terms.iter().all(|t| is_exterior(t, &prepared)) {
        messages.push("exterior part has a pole outside the removed cusp pieces".to_string());
    }
    let minus = C64::new(-1.0, 0.0);
    let abs = tol * w.eps * w.eps;
    let (es, ses, sc) = witness_norm(&w.u.add(&f.scale(minus)), dom, abs);
    let (ee, see, ec) = witness_norm(&shift_rational_n(&w.u, w.n).add(&g.scale(minus)), dom, abs);
    if !(sc && ec) {
        messages.push("quadrature did not converge".to_string());
    }
    if !(es < w.eps + 2.0 * ses) {
        messages.push(format!("||u - f|| = {es} is not below eps"));
    }
    if !(ee < w.eps + 2.0 * see) {
        messages.push(format!("||T^n u - g|| = {ee} is not below eps"));
    }
    WitnessCheck {
        ok: messages.is_empty(),
        err_start: es,
        err_start_error: ses,
        err_end: ee,
        err_end_error: see,
        messages,
    }
}

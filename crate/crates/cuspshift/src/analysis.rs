//! Cauchy transforms of dual elements, growth of their derivatives along the
//! interval entering a cusp, and classification of unimodular eigenvalues.

use serde::{Deserialize, Serialize};

use crate::funcspace::{inner_product, norm_sq, Analytic, RationalCombo};
use crate::geometry::{strip_to_plane, DomainSpec, Membership, StripPoint};
use crate::quadrature::{divergence_probe, fmt_f64, w_integral, DivergenceClass, QuadResult, RefinementTrace, Region};
use crate::{Error, Result, C64};

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

/// `(Vg)^(k)(alpha) = k! <gamma_{alpha,k}, g>`.
pub fn cauchy_transform(g: &dyn Analytic, alpha: C64, k: u32, dom: &DomainSpec, tol: f64) -> Result<QuadResult<C64>> {
    if alpha != C64::new(0.0, 0.0) && dom.prepare().membership(alpha.inv(), 0.0) == Membership::Inside {
        return Err(Error::Precondition(format!("1/alpha = {} lies inside the domain", alpha.inv())));
    }
    let kernel = RationalCombo::gamma_k(alpha, k);
    let f = factorial(k);
    Ok(inner_product(&kernel, g, dom, tol).map(|v| v * f))
}

/// Real interval `strip_to_plane(i [-r/2, r/2])` sampled at `grid` points.
pub fn growth_interval(r: f64, grid: usize) -> Vec<f64> {
    (0..grid)
        .map(|i| {
            let s = if grid == 1 { 0.0 } else { -r / 2.0 + r * i as f64 / (grid - 1) as f64 };
            strip_to_plane(StripPoint::new(0.0, s)).finite().map_or(f64::INFINITY, |z| z.re)
        })
        .collect()
}

fn log_shape(k: u32) -> f64 {
    (k.max(2) as f64).ln()
}

/// `k! 5^(k/2) log^k(max(k, 2))`.
pub fn derivative_shape(k: u32) -> f64 {
    factorial(k) * 5f64.powf(k as f64 / 2.0) * log_shape(k).powi(k as i32)
}

/// `5^k log^(2k)(max(k, 2))`.
pub fn w_shape(k: u32) -> f64 {
    5f64.powi(k as i32) * log_shape(k).powi(2 * k as i32)
}

fn require_cusp_at_one(dom: &DomainSpec) -> Result<()> {
    if dom.cusps.iter().any(|c| crate::geometry::wrap_angle(c.anchor_angle).abs() < 1e-12) {
        Ok(())
    } else {
        Err(Error::Precondition("growth checks need a cusp anchored at 1".into()))
    }
}

/// Calibrates `C` on `k in {0, 1}` and checks `values[k] <= C shape[k]`.
fn fit_and_check(values: &[f64], shapes: &[f64], from: usize) -> (f64, bool) {
    let c = values.iter().zip(shapes).take(2).map(|(v, s)| v / s).fold(0.0, f64::max);
    let pass = values.iter().zip(shapes).skip(from).all(|(v, s)| *v <= c * s);
    (c, pass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub k_values: Vec<u32>,
    pub sup_derivatives: Vec<f64>,
    /// `fitted_C` times [`derivative_shape`].
    pub bound_values: Vec<f64>,
    pub fitted_c: f64,
    /// Per-`k` bound `k! ||g|| sup_x sqrt(W(k, x))`.
    pub cauchy_schwarz_bounds: Vec<f64>,
    pub pass: bool,
}

impl GrowthReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,sup_derivative,bound_value,ratio,cauchy_schwarz_bound\n");
        for i in 0..self.k_values.len() {
            let b = self.bound_values[i];
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.k_values[i],
                fmt_f64(self.sup_derivatives[i]),
                fmt_f64(b),
                fmt_f64(if b > 0.0 { self.sup_derivatives[i] / b } else { f64::INFINITY }),
                fmt_f64(self.cauchy_schwarz_bounds[i])
            ));
        }
        s
    }
}

/// Sup over the sampled interval of `|(Vg)^(k)|` against the
/// `k! 5^(k/2) log^k k` shape.
pub fn growth_check(
    g: &dyn Analytic,
    dom: &DomainSpec,
    r: f64,
    kmax: u32,
    grid: usize,
    tol: f64,
) -> Result<GrowthReport> {
    require_cusp_at_one(dom)?;
    if !(r > 0.0 && r < 1.0) || grid == 0 {
        return Err(Error::Precondition("growth check needs 0 < r < 1 and a nonempty grid".into()));
    }
    let xs = growth_interval(r, grid);
    let gnorm = norm_sq(g, dom, tol).value.max(0.0).sqrt();
    let region = Region::new(dom);
    let mut sups = Vec::new();
    let mut cs = Vec::new();
    for k in 0..=kmax {
        let mut sup = 0.0f64;
        let mut wsup = 0.0f64;
        for &x in &xs {
            let x = C64::new(x, 0.0);
            let v = cauchy_transform(g, x, k, dom, tol)?;
            if !v.converged {
                return Err(Error::Quadrature { what: format!("(Vg)^({k}) at x = {}", x.re), error: v.error_estimate });
            }
            sup = sup.max(v.value.norm());
            let w = w_integral(&region, k, x, tol);
            wsup = wsup.max(w.quad.value);
        }
        sups.push(sup);
        cs.push(factorial(k) * gnorm * wsup.sqrt());
    }
    let shapes: Vec<f64> = (0..=kmax).map(derivative_shape).collect();
    let (c, pass) = fit_and_check(&sups, &shapes, 0);
    Ok(GrowthReport {
        k_values: (0..=kmax).collect(),
        bound_values: shapes.iter().map(|s| c * s).collect(),
        sup_derivatives: sups,
        fitted_c: c,
        cauchy_schwarz_bounds: cs,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WBoundReport {
    pub k_values: Vec<u32>,
    pub sup_w: Vec<f64>,
    pub bound_values: Vec<f64>,
    pub fitted_c: f64,
    pub converged: bool,
    pub pass: bool,
}

impl WBoundReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,sup_w,bound_value,ratio\n");
        for i in 0..self.k_values.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.k_values[i],
                fmt_f64(self.sup_w[i]),
                fmt_f64(self.bound_values[i]),
                fmt_f64(self.sup_w[i] / self.bound_values[i])
            ));
        }
        s
    }
}

/// Sup over the sampled interval of `W(k, x)` against `5^k log^(2k) k`,
/// calibrated on `k in {0, 1}` and checked for `k >= 2`.
pub fn w_bound_check(dom: &DomainSpec, r: f64, kmax: u32, grid: usize, tol: f64) -> Result<WBoundReport> {
    require_cusp_at_one(dom)?;
    if !(r > 0.0 && r < 1.0) || grid == 0 {
        return Err(Error::Precondition("W bound check needs 0 < r < 1 and a nonempty grid".into()));
    }
    let xs = growth_interval(r, grid);
    let region = Region::new(dom);
    let mut sups = Vec::new();
    let mut converged = true;
    for k in 0..=kmax {
        let mut sup = 0.0f64;
        for &x in &xs {
            let w = w_integral(&region, k, C64::new(x, 0.0), tol);
            converged &= w.quad.converged;
            sup = sup.max(w.quad.value);
        }
        sups.push(sup);
    }
    let shapes: Vec<f64> = (0..=kmax).map(w_shape).collect();
    let (c, pass) = fit_and_check(&sups, &shapes, 2);
    Ok(WBoundReport {
        k_values: (0..=kmax).collect(),
        bound_values: shapes.iter().map(|s| c * s).collect(),
        sup_w: sups,
        fitted_c: c,
        converged,
        pass: pass && converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Eigenvalue,
    NotEigenvalue,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenClassification {
    pub lambda: C64,
    pub verdict: Verdict,
    pub evidence: RefinementTrace,
    /// Where the CLI wrote the trace, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    pub norm_if_member: Option<f64>,
}

/// Decides whether `gamma_lambda` is square integrable near its boundary pole.
pub fn eigen_classify(dom: &DomainSpec, lambda: C64, scales: &[f64], tol: f64) -> Result<EigenClassification> {
    if (lambda.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition(format!("lambda = {lambda} is not unimodular")));
    }
    let rep = divergence_probe(dom, lambda, scales)?;
    let (verdict, norm) = match rep.classification {
        DivergenceClass::Convergent => {
            let q = norm_sq(&RationalCombo::gamma(lambda), dom, tol);
            if q.converged && q.value.is_finite() {
                (Verdict::Eigenvalue, Some(q.value.max(0.0).sqrt()))
            } else {
                (Verdict::Inconclusive, None)
            }
        }
        DivergenceClass::LogDivergent => (Verdict::NotEigenvalue, None),
        DivergenceClass::Inconclusive => (Verdict::Inconclusive, None),
    };
    Ok(EigenClassification { lambda, verdict, evidence: rep.trace, trace_path: None, norm_if_member: norm })
}

//! Integration against the spherical measure over domain regions.
//!
//! The region is swept in strip coordinates: an outer adaptive Gauss-Kronrod
//! rule runs over the argument `t`, and every outer node integrates the exact
//! set of admissible depths on its ray with an inner adaptive rule. The
//! spherical area element in these coordinates is `cos(d) dd dt`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{radius_of_depth, wrap_angle, Disc, DomainSpec, PreparedDomain};
use crate::{Error, Result, C64};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_64, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Share of the outer tolerance granted to each ray integral.
const INNER_SHARE: f64 = 0.05;
const MAX_PANELS: usize = 40_000;
/// Integrand evaluations after which refinement gives up.
const MAX_CELLS: usize = 2_000_000;
/// Refinement also gives up after this many rounds without a 1% error improvement.
const STALL_ROUNDS: usize = 16;

/// Spherical density `4 / (1 + |z|^2)^2`; total mass of the plane is `4 pi`.
pub fn spherical_density(z: C64) -> f64 {
    let q = 1.0 + z.norm_sqr();
    4.0 / (q * q)
}

/// Integral value with its error estimate and refinement bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult<T> {
    pub value: T,
    pub error_estimate: f64,
    pub cells_used: usize,
    pub max_depth_hit: bool,
    pub converged: bool,
}

impl<T> QuadResult<T> {
    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> QuadResult<U> {
        QuadResult {
            value: f(self.value),
            error_estimate: self.error_estimate,
            cells_used: self.cells_used,
            max_depth_hit: self.max_depth_hit,
            converged: self.converged,
        }
    }
}

/// Vector-valued integration result.
#[derive(Clone, Debug, PartialEq)]
pub struct VecQuad {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub cells_used: usize,
    pub max_depth_hit: bool,
    pub converged: bool,
}

/// Per-component error allowance, computed from the current totals.
#[derive(Clone, Debug, PartialEq)]
pub enum Tolerance {
    Abs(f64),
    /// `max(abs, rel |T_i|)`
    Rel {
        rel: f64,
        abs: f64,
    },
    /// `max(abs, rel max_j |T_j|)`
    RelMax {
        rel: f64,
        abs: f64,
    },
    /// Layout of [`gram_layout`]: pair `(i, j)` gets `max(abs, rel sqrt(T_ii T_jj))`;
    /// each of the `m` target blocks scales its projections by the target norm.
    Gram {
        rel: f64,
        abs: f64,
        n: usize,
        m: usize,
    },
}

impl Tolerance {
    /// Per-slot error allowance given the current totals.
    pub fn allowed(&self, totals: &[f64], out: &mut [f64]) {
        match *self {
            Tolerance::Abs(a) => out.iter_mut().for_each(|o| *o = a),
            Tolerance::Rel { rel, abs } => {
                for (o, t) in out.iter_mut().zip(totals) {
                    *o = abs.max(rel * t.abs());
                }
            }
            Tolerance::RelMax { rel, abs } => {
                let m = totals.iter().fold(0.0f64, |a, t| a.max(t.abs()));
                out.iter_mut().for_each(|o| *o = abs.max(rel * m));
            }
            Tolerance::Gram { rel, abs, n, m } => {
                let diag: Vec<f64> = (0..n).map(|i| totals[gram_index(n, i, i).0].abs()).collect();
                for i in 0..n {
                    for j in 0..=i {
                        let (re, im) = gram_index(n, i, j);
                        let a = abs.max(rel * (diag[i] * diag[j]).sqrt());
                        out[re] = a;
                        out[im] = a;
                    }
                }
                for t in 0..m {
                    let base = n * (n + 1) + t * (2 * n + 1);
                    let norm = totals[base + 2 * n].abs();
                    for i in 0..n {
                        let a = abs.max(rel * (diag[i] * norm).sqrt());
                        out[base + 2 * i] = a;
                        out[base + 2 * i + 1] = a;
                    }
                    out[base + 2 * n] = abs.max(rel * norm);
                }
            }
        }
    }

    fn scaled(&self, factor: f64) -> Tolerance {
        match *self {
            Tolerance::Abs(a) => Tolerance::Abs(a * factor),
            Tolerance::Rel { rel, abs } => Tolerance::Rel { rel: rel * factor, abs: abs * factor },
            Tolerance::RelMax { rel, abs } => Tolerance::RelMax { rel: rel * factor, abs: abs * factor },
            Tolerance::Gram { rel, abs, n, m } => Tolerance::Gram { rel: rel * factor, abs: abs * factor, n, m },
        }
    }
}

/// Index of the real and imaginary slot of the lower-triangular pair `(i, j)`, `j <= i`.
pub fn gram_index(_n: usize, i: usize, j: usize) -> (usize, usize) {
    let k = i * (i + 1) / 2 + j;
    (2 * k, 2 * k + 1)
}

/// Number of slots used by a Gram layout of `n` functions and `m` targets:
/// the lower triangle as complex pairs, then per target `n` complex
/// projections followed by the squared target norm.
pub fn gram_layout(n: usize, m: usize) -> usize {
    n * (n + 1) + m * (2 * n + 1)
}

/// Integration region: a domain, optionally intersected with a disc, minus excised discs.
#[derive(Clone, Debug)]
pub struct Region {
    pub dom: PreparedDomain,
    pub keep: Option<Disc>,
    pub excise: Vec<Disc>,
    /// Points near which the integrand is singular; used for breakpoints only.
    pub singular: Vec<C64>,
}

impl Region {
    pub fn new(dom: &DomainSpec) -> Self {
        Region { dom: dom.prepare(), keep: None, excise: Vec::new(), singular: Vec::new() }
    }

    pub fn keep(mut self, d: Disc) -> Self {
        self.keep = Some(d);
        self
    }

    pub fn excise(mut self, d: Disc) -> Self {
        self.excise.push(d);
        self
    }

    pub fn singular(mut self, pts: impl IntoIterator<Item = C64>) -> Self {
        self.singular.extend(pts);
        self
    }

    pub fn ray_intervals(&self, theta: f64) -> Vec<(f64, f64)> {
        let mut iv = self.dom.ray_intervals(theta);
        if let Some(k) = &self.keep {
            match k.ray_interval(theta) {
                None => return Vec::new(),
                Some((a, b)) => {
                    iv = iv
                        .into_iter()
                        .filter_map(|(x, y)| {
                            let (lo, hi) = (x.max(a), y.min(b));
                            (lo < hi).then_some((lo, hi))
                        })
                        .collect()
                }
            }
        }
        for e in &self.excise {
            if let Some((a, b)) = e.ray_interval(theta) {
                let mut out = Vec::with_capacity(iv.len() + 1);
                for (x, y) in iv {
                    if b <= x || a >= y {
                        out.push((x, y));
                        continue;
                    }
                    if a > x {
                        out.push((x, a));
                    }
                    if b < y {
                        out.push((b, y));
                    }
                }
                iv = out;
            }
        }
        iv
    }

    /// Sorted outer breakpoints in `[-pi, pi]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut raw = self.dom.breakpoints();
        let mut circles = self.dom.circles();
        for d in self.keep.iter().chain(self.excise.iter()) {
            raw.extend(d.tangent_angles());
            if d.center.norm() > 0.0 {
                raw.push(d.center.arg());
            }
            circles.push(*d);
        }
        for i in 0..circles.len() {
            for j in 0..i {
                raw.extend(circles[i].crossings(&circles[j]).into_iter().filter(|z| z.norm() > 0.0).map(|z| z.arg()));
            }
        }
        for p in &self.singular {
            if p.norm() > 0.0 {
                raw.push(p.arg());
            }
        }
        let mut v: Vec<f64> = raw.into_iter().map(wrap_angle).filter(|a| a.abs() < PI).collect();
        v.push(-PI);
        v.push(PI);
        v.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(v.len());
        for a in v {
            if out.last().is_none_or(|b| a - b > 1e-12) {
                out.push(a);
            }
        }
        if let Some(last) = out.last_mut() {
            *last = PI;
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Panel {
    a: f64,
    b: f64,
    depth: u32,
    val: Vec<f64>,
    err: Vec<f64>,
    cells: usize,
}

struct Adaptive {
    panels: Vec<Panel>,
    value: Vec<f64>,
    error: Vec<f64>,
    converged: bool,
    max_depth_hit: bool,
}

/// One Gauss-Kronrod 15 panel of a vector integrand whose nodes may carry
/// their own error estimates.
fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize) -> (Vec<f64>, Vec<f64>, usize)
where
    F: FnMut(f64, &mut [f64], &mut [f64]) -> usize,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut fv = vec![0.0; 15 * dim];
    let mut fe = vec![0.0; 15 * dim];
    let mut cells = 0;
    // node order: center, then (-x_j, +x_j) for j = 0..7
    cells += f(c, &mut fv[0..dim], &mut fe[0..dim]);
    for j in 0..7 {
        let x = h * XGK[j];
        let (lo, hi) = ((1 + 2 * j) * dim, (2 + 2 * j) * dim);
        cells += f(c - x, &mut fv[lo..lo + dim], &mut fe[lo..lo + dim]);
        cells += f(c + x, &mut fv[hi..hi + dim], &mut fe[hi..hi + dim]);
    }
    let mut val = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    for i in 0..dim {
        let fc = fv[i];
        let mut rk = WGK[7] * fc;
        let mut rg = WG[3] * fc;
        let mut rabs = WGK[7] * fc.abs();
        let mut inner = WGK[7] * fe[i];
        for j in 0..7 {
            let f1 = fv[(1 + 2 * j) * dim + i];
            let f2 = fv[(2 + 2 * j) * dim + i];
            rk += WGK[j] * (f1 + f2);
            rabs += WGK[j] * (f1.abs() + f2.abs());
            inner += WGK[j] * (fe[(1 + 2 * j) * dim + i] + fe[(2 + 2 * j) * dim + i]);
            if j % 2 == 1 {
                rg += WG[j / 2] * (f1 + f2);
            }
        }
        let mean = 0.5 * rk;
        let mut rasc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            let f1 = fv[(1 + 2 * j) * dim + i];
            let f2 = fv[(2 + 2 * j) * dim + i];
            rasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
        }
        let (rk, rabs, rasc) = (rk * h, rabs * h.abs(), rasc * h.abs());
        let mut e = ((rk - rg * h).abs()).max(0.0);
        if rasc != 0.0 && e != 0.0 {
            e = rasc * (200.0 * e / rasc).powf(1.5).min(1.0);
        }
        if rabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * rabs);
        }
        val[i] = rk;
        err[i] = e + inner * h.abs();
    }
    (val, err, cells)
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}

fn totals(panels: &[Panel], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut val = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut buf = Vec::with_capacity(panels.len());
    for i in 0..dim {
        buf.clear();
        buf.extend(panels.iter().map(|p| p.val[i]));
        val[i] = pairwise_sum(&buf);
        buf.clear();
        buf.extend(panels.iter().map(|p| p.err[i]));
        err[i] = pairwise_sum(&buf);
    }
    (val, err)
}

fn adaptive<F>(f: &mut F, dim: usize, breaks: &[f64], tol: &Tolerance, max_depth: u32) -> Adaptive
where
    F: FnMut(f64, &mut [f64], &mut [f64]) -> usize,
{
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (val, err, cells) = gk15(f, w[0], w[1], dim);
            Panel { a: w[0], b: w[1], depth: 0, val, err, cells }
        })
        .collect();
    let mut allowed = vec![0.0; dim];
    let mut max_depth_hit = false;
    let mut best = vec![f64::INFINITY; dim];
    let mut stall = 0;
    loop {
        let (value, error) = totals(&panels, dim);
        tol.allowed(&value, &mut allowed);
        for a in allowed.iter_mut() {
            if !(*a > 0.0) {
                *a = f64::MIN_POSITIVE;
            }
        }
        let converged = error.iter().zip(&allowed).all(|(e, a)| e <= a);
        let cells: usize = panels.iter().map(|p| p.cells).sum();
        let mut improved = false;
        for (b, e) in best.iter_mut().zip(&error) {
            if *e < 0.99 * *b {
                *b = *e;
                improved = true;
            }
        }
        stall = if improved { 0 } else { stall + 1 };
        if converged || panels.len() >= MAX_PANELS || cells >= MAX_CELLS || stall >= STALL_ROUNDS {
            return Adaptive { panels, value, error, converged, max_depth_hit };
        }
        let keys: Vec<f64> =
            panels.iter().map(|p| p.err.iter().zip(&allowed).fold(0.0f64, |m, (e, a)| m.max(e / a))).collect();
        let kmax = keys.iter().cloned().fold(0.0f64, f64::max);
        let cut = (1.0 / panels.len() as f64).max(0.1 * kmax);
        let mut next = Vec::with_capacity(panels.len() + 16);
        let mut split_any = false;
        for (p, k) in panels.into_iter().zip(keys) {
            if k >= cut && k > 0.0 {
                if p.depth >= max_depth {
                    max_depth_hit = true;
                    next.push(p);
                    continue;
                }
                let m = 0.5 * (p.a + p.b);
                let (v1, e1, c1) = gk15(f, p.a, m, dim);
                let (v2, e2, c2) = gk15(f, m, p.b, dim);
                next.push(Panel { a: p.a, b: m, depth: p.depth + 1, val: v1, err: e1, cells: c1 });
                next.push(Panel { a: m, b: p.b, depth: p.depth + 1, val: v2, err: e2, cells: c2 });
                split_any = true;
            } else {
                next.push(p);
            }
        }
        panels = next;
        if !split_any {
            let (value, error) = totals(&panels, dim);
            return Adaptive { panels, value, error, converged: false, max_depth_hit };
        }
    }
}

/// Point of a discrete quadrature rule on a region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RulePoint {
    pub z: C64,
    pub weight: f64,
}

/// Options for region integration.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadOptions {
    pub tol: Tolerance,
    pub max_depth: u32,
}

impl QuadOptions {
    pub fn abs(tol: f64) -> Self {
        QuadOptions { tol: Tolerance::Abs(tol), max_depth: 40 }
    }

    pub fn rel(rel: f64, abs: f64) -> Self {
        QuadOptions { tol: Tolerance::Rel { rel, abs }, max_depth: 40 }
    }
}

struct RayIntegrator<'a, F> {
    region: &'a Region,
    f: &'a F,
    dim: usize,
    inner_tol: Tolerance,
    max_depth: u32,
}

impl<'a, F> RayIntegrator<'a, F>
where
    F: Fn(C64, &mut [f64]),
{
    fn integrand(&self, theta: f64, d: f64, out: &mut [f64]) {
        let z = C64::from_polar(radius_of_depth(d), theta);
        (self.f)(z, out);
        let w = d.cos();
        out.iter_mut().for_each(|v| *v *= w);
    }

    /// Integral over the admissible depths of one ray; returns panel count.
    fn ray(
        &self,
        theta: f64,
        val: &mut [f64],
        err: &mut [f64],
        mut record: Option<&mut Vec<(f64, f64, f64)>>,
    ) -> usize {
        val.iter_mut().for_each(|v| *v = 0.0);
        err.iter_mut().for_each(|v| *v = 0.0);
        let mut cells = 0;
        for (d0, d1) in self.region.ray_intervals(theta) {
            let mut g = |d: f64, v: &mut [f64], e: &mut [f64]| {
                self.integrand(theta, d, v);
                e.iter_mut().for_each(|x| *x = 0.0);
                1usize
            };
            let res = adaptive(&mut g, self.dim, &[d0, d1], &self.inner_tol, self.max_depth + 12);
            cells += res.panels.len();
            for i in 0..self.dim {
                val[i] += res.value[i];
                err[i] += res.error[i];
            }
            if let Some(rec) = record.as_deref_mut() {
                for p in &res.panels {
                    push_nodes(p.a, p.b, rec);
                }
            }
        }
        cells
    }
}

/// Kronrod nodes of `[a, b]` as `(x, weight, 0)` triples.
fn push_nodes(a: f64, b: f64, out: &mut Vec<(f64, f64, f64)>) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    out.push((c, WGK[7] * h, 0.0));
    for j in 0..7 {
        out.push((c - h * XGK[j], WGK[j] * h, 0.0));
        out.push((c + h * XGK[j], WGK[j] * h, 0.0));
    }
}

fn run_region<F>(region: &Region, dim: usize, f: &F, opts: &QuadOptions) -> (Adaptive, Tolerance)
where
    F: Fn(C64, &mut [f64]),
{
    let span = 2.0 * PI;
    let inner_tol = opts.tol.scaled(INNER_SHARE / span);
    let ri = RayIntegrator { region, f, dim, inner_tol: inner_tol.clone(), max_depth: opts.max_depth };
    let breaks = region.breakpoints();
    let mut outer = |theta: f64, v: &mut [f64], e: &mut [f64]| ri.ray(theta, v, e, None);
    let res = adaptive(&mut outer, dim, &breaks, &opts.tol, opts.max_depth);
    (res, inner_tol)
}

/// Integrates a vector-valued integrand over the region.
pub fn integrate_vec<F>(region: &Region, dim: usize, f: F, opts: &QuadOptions) -> VecQuad
where
    F: Fn(C64, &mut [f64]),
{
    let (res, _) = run_region(region, dim, &f, opts);
    VecQuad {
        cells_used: res.panels.iter().map(|p| p.cells).sum(),
        value: res.value,
        error: res.error,
        max_depth_hit: res.max_depth_hit,
        converged: res.converged,
    }
}

/// Integrates `driver` adaptively and returns the final discrete rule together
/// with the driver result. Any integrand integrated with the rule reproduces
/// what the adaptive scheme would report on the same panels.
pub fn build_rule<F>(region: &Region, dim: usize, driver: F, opts: &QuadOptions) -> (Vec<RulePoint>, VecQuad)
where
    F: Fn(C64, &mut [f64]),
{
    let (res, inner_tol) = run_region(region, dim, &driver, opts);
    let ri = RayIntegrator { region, f: &driver, dim, inner_tol, max_depth: opts.max_depth };
    let mut rule = Vec::new();
    let mut v = vec![0.0; dim];
    let mut e = vec![0.0; dim];
    let mut outer_nodes = Vec::new();
    let mut inner_nodes = Vec::new();
    for p in &res.panels {
        outer_nodes.clear();
        push_nodes(p.a, p.b, &mut outer_nodes);
        for &(theta, wt, _) in &outer_nodes {
            inner_nodes.clear();
            ri.ray(theta, &mut v, &mut e, Some(&mut inner_nodes));
            for &(d, wd, _) in &inner_nodes {
                rule.push(RulePoint { z: C64::from_polar(radius_of_depth(d), theta), weight: wt * wd * d.cos() });
            }
        }
    }
    let quad = VecQuad {
        cells_used: res.panels.iter().map(|p| p.cells).sum(),
        value: res.value,
        error: res.error,
        max_depth_hit: res.max_depth_hit,
        converged: res.converged,
    };
    (rule, quad)
}

fn scalar_result(v: VecQuad) -> QuadResult<f64> {
    QuadResult {
        value: v.value[0],
        error_estimate: v.error[0],
        cells_used: v.cells_used,
        max_depth_hit: v.max_depth_hit,
        converged: v.converged,
    }
}

/// Integral of a real integrand against the spherical measure; `tol` is absolute.
pub fn integrate<F>(region: &Region, f: F, tol: f64, max_depth: u32) -> QuadResult<f64>
where
    F: Fn(C64) -> f64,
{
    let opts = QuadOptions { tol: Tolerance::Abs(tol), max_depth };
    scalar_result(integrate_vec(region, 1, |z, out| out[0] = f(z), &opts))
}

/// Complex-valued variant of [`integrate`]; the error estimate bounds both parts.
pub fn integrate_complex<F>(region: &Region, f: F, opts: &QuadOptions) -> QuadResult<C64>
where
    F: Fn(C64) -> C64,
{
    let v = integrate_vec(
        region,
        2,
        |z, out| {
            let w = f(z);
            out[0] = w.re;
            out[1] = w.im;
        },
        opts,
    );
    QuadResult {
        value: C64::new(v.value[0], v.value[1]),
        error_estimate: v.error[0].hypot(v.error[1]),
        cells_used: v.cells_used,
        max_depth_hit: v.max_depth_hit,
        converged: v.converged,
    }
}

/// Spherical area of the region.
pub fn area(region: &Region, tol: f64) -> QuadResult<f64> {
    integrate(region, |_| 1.0, tol, 40)
}

/// List of `(epsilon, partial integral)` pairs with strictly decreasing epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub entries: Vec<(f64, f64)>,
}

impl RefinementTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,partial_integral\n");
        for (e, v) in &self.entries {
            s.push_str(&format!("{},{}\n", fmt_f64(*e), fmt_f64(*v)));
        }
        s
    }
}

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| format!("{x:?}"))
}

/// `W(k, x)` together with a divergence trace when the integral does not settle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WResult {
    pub quad: QuadResult<f64>,
    pub trace: Option<RefinementTrace>,
}

/// Integrand of `W(k, x)` at `z`.
pub fn w_kernel(k: u32, x: C64, z: C64) -> f64 {
    let q = (C64::new(1.0, 0.0) - x * z).norm_sqr();
    q.powi(-(k as i32 + 1))
}

/// `W(k, x) = int dm2 / |1 - x z|^(2k+2)` over the region; `tol` is relative.
pub fn w_integral(region: &Region, k: u32, x: C64, tol: f64) -> WResult {
    let mut reg = region.clone();
    if x.norm() > 0.0 {
        reg.singular.push(1.0 / x);
    }
    let opts = QuadOptions::rel(tol, 0.0);
    let v = integrate_vec(&reg, 1, |z, out| out[0] = w_kernel(k, x, z), &opts);
    let quad = scalar_result(v);
    let trace = if quad.converged || x.norm() == 0.0 {
        None
    } else {
        let p = 1.0 / x;
        let entries = (1..=6)
            .map(|i| {
                let eps = 0.1 * 0.5f64.powi(i - 1);
                let r = reg.clone().excise(Disc::new(p, eps));
                let q = integrate_vec(&r, 1, |z, out| out[0] = w_kernel(k, x, z), &opts);
                (eps, q.value[0])
            })
            .collect();
        Some(RefinementTrace { entries })
    };
    WResult { quad, trace }
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs a positive argument");
    if x <= 1.0 {
        // power series
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -0.577_215_664_901_532_9 - x.ln() + sum
    } else {
        // modified Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

fn gk_scalar<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64) -> f64 {
    let mut g = |x: f64, v: &mut [f64], e: &mut [f64]| {
        v[0] = f(x);
        e[0] = 0.0;
        1usize
    };
    adaptive(&mut g, 1, &[a, b], &Tolerance::Rel { rel, abs: 0.0 }, 60).value[0]
}

/// Natural log of the tail integral `int_{e^{1/r}}^inf e^{-u} u^{-1} log^{2k}(u) du`.
pub fn log_tail_integral_ln(k: u32, r: f64) -> f64 {
    assert!(r > 0.0 && r < 1.0, "r must lie in (0, 1)");
    let a = (1.0 / r).exp();
    let kk = 2.0 * k as f64;
    let lf = |u: f64| -u - u.ln() + if k == 0 { 0.0 } else { kk * u.ln().ln() };
    let split = a.max((k * k) as f64);
    // the integrand is maximal at the left end or at its interior peak
    let mut reference = lf(a);
    let mut u = a;
    while u < split + 4.0 * kk + 64.0 {
        reference = reference.max(lf(u));
        u += 0.25;
    }
    let mut upper = split.max(a) + 1.0;
    while lf(upper) > reference - 60.0 {
        upper = upper * 1.5 + 1.0;
    }
    let g = |u: f64| (lf(u) - reference).exp();
    let mut total = 0.0;
    if split > a {
        total += gk_scalar(&g, a, split, 1e-14);
    }
    total += gk_scalar(&g, split, upper, 1e-14);
    reference + total.ln()
}

/// Tail integral evaluated in log space and exponentiated.
pub fn log_tail_integral(k: u32, r: f64) -> f64 {
    log_tail_integral_ln(k, r).exp()
}

/// Direct evaluation without log-space scaling; representable for small `k`.
pub fn log_tail_integral_direct(k: u32, r: f64) -> f64 {
    let a = (1.0 / r).exp();
    let f = |u: f64| (-u).exp() / u * u.ln().powi(2 * k as i32);
    let mut upper = a + 1.0;
    while f(upper) > 1e-30 * f(a).max(1e-300) || upper < (k * k) as f64 + 50.0 {
        upper = upper * 1.5 + 1.0;
    }
    gk_scalar(&f, a, upper, 1e-14)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceClass {
    Convergent,
    LogDivergent,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub trace: RefinementTrace,
    pub classification: DivergenceClass,
    /// Fitted `c` in `a + c log(1/eps)`.
    pub slope: f64,
    pub intercept: f64,
    /// RMS fit residual relative to the fitted rise over the scale range.
    pub fit_residual: f64,
    pub errors: Vec<f64>,
    pub converged: bool,
}

/// Fit-based classification of a refinement trace.
pub fn classify_trace(trace: &RefinementTrace) -> (DivergenceClass, f64, f64, f64) {
    let n = trace.entries.len();
    let ls: Vec<f64> = trace.entries.iter().map(|(e, _)| -(e.ln())).collect();
    let vs: Vec<f64> = trace.entries.iter().map(|(_, v)| *v).collect();
    let lm = ls.iter().sum::<f64>() / n as f64;
    let vm = vs.iter().sum::<f64>() / n as f64;
    let sxx: f64 = ls.iter().map(|l| (l - lm) * (l - lm)).sum();
    let sxy: f64 = ls.iter().zip(&vs).map(|(l, v)| (l - lm) * (v - vm)).sum();
    let slope = sxy / sxx;
    let intercept = vm - slope * lm;
    let rms = (ls.iter().zip(&vs).map(|(l, v)| (v - intercept - slope * l).powi(2)).sum::<f64>() / n as f64).sqrt();
    let rise = slope.abs() * (ls[n - 1] - ls[0]);
    let resid = if rise > 0.0 { rms / rise } else { f64::INFINITY };

    let scale = vs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let rates: Vec<f64> = (0..n - 1).map(|i| (vs[i + 1] - vs[i]) / (ls[i + 1] - ls[i])).collect();
    let negligible = |r: f64| r.abs() <= 1e-9 * scale;
    let geometric = rates
        .windows(2)
        .all(|w| negligible(w[1]) || (!negligible(w[0]) && w[1] / w[0] <= 0.75 && w[1] >= -1e-9 * scale));
    let class = if rates.iter().all(|r| negligible(*r)) || (geometric && !negligible(rates[0])) {
        DivergenceClass::Convergent
    } else if slope > 0.0 && resid < 0.1 {
        DivergenceClass::LogDivergent
    } else {
        DivergenceClass::Inconclusive
    };
    (class, slope, intercept, resid)
}

fn check_scales(scales: &[f64]) -> Result<()> {
    if scales.len() < 3 {
        return Err(Error::Precondition("divergence probe needs at least 3 scales".into()));
    }
    if scales.iter().any(|s| !(*s > 0.0 && *s < 1.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("scales must be strictly decreasing in (0, 1)".into()));
    }
    Ok(())
}

/// Partial integrals of `|gamma_{alpha,k}|^2` outside shrinking discs about `1/alpha`.
pub fn divergence_probe_k(dom: &DomainSpec, alpha: C64, k: u32, scales: &[f64], tol: f64) -> Result<DivergenceReport> {
    check_scales(scales)?;
    if alpha.norm() == 0.0 {
        return Err(Error::Precondition("divergence probe needs a nonzero alpha".into()));
    }
    let p = 1.0 / alpha;
    let base = Region::new(dom).singular([p]);
    let opts = QuadOptions::rel(tol, tol * 1e-3);
    let one = C64::new(1.0, 0.0);
    let mut entries = Vec::with_capacity(scales.len());
    let mut errors = Vec::with_capacity(scales.len());
    let mut converged = true;
    for &eps in scales {
        let region = base.clone().excise(Disc::new(p, eps));
        let q = integrate_vec(
            &region,
            1,
            |z, out| {
                let den = one - alpha * z;
                out[0] = (z.norm_sqr()).powi(k as i32) / den.norm_sqr().powi(k as i32 + 1);
            },
            &opts,
        );
        converged &= q.converged;
        entries.push((eps, q.value[0]));
        errors.push(q.error[0]);
    }
    let trace = RefinementTrace { entries };
    let (classification, slope, intercept, fit_residual) = classify_trace(&trace);
    Ok(DivergenceReport { trace, classification, slope, intercept, fit_residual, errors, converged })
}

/// [`divergence_probe_k`] for `gamma_alpha` itself.
pub fn divergence_probe(dom: &DomainSpec, alpha: C64, scales: &[f64]) -> Result<DivergenceReport> {
    divergence_probe_k(dom, alpha, 0, scales, 1e-9)
}

/// Default excision scales: eight halvings starting at 0.1.
pub fn default_scales() -> Vec<f64> {
    (0..8).map(|i| 0.1 * 0.5f64.powi(i)).collect()
}

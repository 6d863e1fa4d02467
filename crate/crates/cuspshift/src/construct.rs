//! Staged construction of a cusp domain with eigenvalues at a prescribed set
//! of circle points, with rational approximants and certified collar integrals.
//!
//! Stages are numbered from 0. Stage `n` works in the window
//! `U_{r_n} = D(1, r_n) ∩ 𝔻`, approximates `gamma_{1,j}` for `j = 0..=n` on
//! `closed 𝔻 \ U_{r_n}` by combinations of `gamma_zeta`, `zeta` in `Z ∩ U_{r_n}`,
//! and adds cusps anchored at `conj(zeta)` so that `gamma_zeta` becomes square
//! integrable. Every measured quantity of stage `n` is bounded by `1/(n+1)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::funcspace::{lsq_solve, RationalCombo, Term};
use crate::geometry::{wrap_angle, CuspRegion, Disc, DomainSpec, Membership};
use crate::quadrature::{integrate_vec, QuadOptions, Region};
use crate::{Error, Result, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZKind {
    FiniteList,
    AccumulatingSequence,
}

/// Target set of circle points, given by angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZSpec {
    pub kind: ZKind,
    pub angles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulation_point: Option<f64>,
}

impl ZSpec {
    /// `{2 pi / 2^m : m = 1..=levels} ∪ {0}`.
    pub fn dyadic(levels: u32) -> Self {
        let mut angles: Vec<f64> = (1..=levels).map(|m| TAU / 2f64.powi(m as i32)).collect();
        angles.push(0.0);
        ZSpec { kind: ZKind::FiniteList, angles, accumulation_point: Some(0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() || self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Precondition("Z needs finite angles".into()));
        }
        for (i, a) in self.angles.iter().enumerate() {
            for b in &self.angles[..i] {
                if wrap_angle(a - b).abs() < 1e-12 {
                    return Err(Error::Precondition(format!("Z angles {a} and {b} coincide mod 2 pi")));
                }
            }
        }
        if self.kind == ZKind::AccumulatingSequence {
            let p = self
                .accumulation_point
                .ok_or_else(|| Error::Precondition("accumulating sequence needs an accumulation point".into()))?;
            let d: Vec<f64> = self.angles.iter().map(|a| wrap_angle(a - p).abs()).collect();
            if d.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Precondition(
                    "sequence does not approach its accumulation point monotonically".into(),
                ));
            }
        }
        Ok(())
    }

    /// Points of `Z` strictly inside `U_r`.
    pub fn in_window(&self, r: f64) -> Vec<f64> {
        self.angles.iter().cloned().filter(|&a| (C64::from_polar(1.0, a) - ONE).norm() < r).collect()
    }
}

/// `gamma_{1,j}`, the approximation target.
fn target(j: u32) -> RationalCombo {
    RationalCombo::gamma_k(ONE, j)
}

/// Compact set `closed 𝔻 \ U_r` represented by samples of its boundary and interior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSpec {
    pub r: f64,
}

impl KSpec {
    /// Boundary samples: the circle arc outside the window and the window arc inside the disc.
    pub fn boundary(&self, n: usize) -> Vec<C64> {
        let a0 = 2.0 * (self.r / 2.0).asin();
        let mut pts: Vec<C64> =
            (0..n).map(|i| C64::from_polar(1.0, a0 + (TAU - 2.0 * a0) * i as f64 / (n - 1) as f64)).collect();
        // inner arc of |z - 1| = r, from one circle crossing to the other
        let b0 = (self.r / 2.0).acos();
        for i in 0..n {
            let b = PI - b0 + 2.0 * b0 * i as f64 / (n - 1) as f64;
            pts.push(ONE + C64::from_polar(self.r, b));
        }
        pts
    }

    /// Interior polar grid points outside the window.
    pub fn interior(&self, n: usize) -> Vec<C64> {
        let mut pts = Vec::new();
        for i in 0..n {
            let rad = (i as f64 + 0.5) / n as f64;
            for j in 0..4 * n {
                let z = C64::from_polar(rad, TAU * j as f64 / (4 * n) as f64);
                if (z - ONE).norm() >= self.r {
                    pts.push(z);
                }
            }
        }
        pts
    }
}

fn design(zetas: &[f64], pts: &[C64]) -> DMatrix<C64> {
    DMatrix::from_fn(pts.len(), zetas.len(), |i, j| {
        Term::kernel(C64::from_polar(1.0, zetas[j]), 0, pts[i]).unwrap_or(C64::new(f64::NAN, f64::NAN))
    })
}

fn combo_from(zetas: &[f64], coef: &DVector<C64>) -> RationalCombo {
    RationalCombo::from_terms(
        zetas.iter().zip(coef.iter()).map(|(&t, &c)| Term { alpha: C64::from_polar(1.0, t), k: 0, c }).collect(),
    )
}

fn sup_error(f: &RationalCombo, j: u32, pts: &[C64]) -> f64 {
    let t = target(j);
    pts.iter().map(|&z| (f.value(z) - t.value(z)).norm()).fold(0.0, f64::max)
}

/// Options of the rational fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungeOptions {
    pub fit_samples: usize,
    pub validation_samples: usize,
    pub lawson_iterations: usize,
    pub singular_cutoff: f64,
}

impl Default for RungeOptions {
    fn default() -> Self {
        RungeOptions { fit_samples: 600, validation_samples: 4000, lawson_iterations: 200, singular_cutoff: 1e-14 }
    }
}

/// Lawson iteration for a near-minimax fit on the given samples.
fn lawson(zetas: &[f64], pts: &[C64], b: &DVector<C64>, opts: &RungeOptions) -> DVector<C64> {
    let a = design(zetas, pts);
    let mut w = vec![1.0 / pts.len() as f64; pts.len()];
    let mut best = (f64::INFINITY, DVector::from_element(zetas.len(), C64::new(0.0, 0.0)));
    for _ in 0..opts.lawson_iterations.max(1) {
        let c = lsq_solve(&a, b, Some(&w), opts.singular_cutoff);
        let e: Vec<f64> = (&a * &c - b).iter().map(|v| v.norm()).collect();
        let m = e.iter().cloned().fold(0.0, f64::max);
        if m < best.0 {
            best = (m, c);
        }
        let s: f64 = w.iter().zip(&e).map(|(w, e)| w * e).sum();
        if !(s > 0.0) {
            break;
        }
        w.iter_mut().zip(&e).for_each(|(w, e)| *w *= e / s);
    }
    best.1
}

/// Approximates `gamma_{alpha,j}` on `closed 𝔻 \ U_r` by `gamma_zeta` with
/// `zeta` chosen greedily from the pool. Returns the combination and its
/// sup error on the validation samples.
pub fn runge_approximant(
    j: u32,
    alpha: C64,
    pole_budget: usize,
    pole_pool: &[f64],
    k: &KSpec,
    tol: f64,
    opts: &RungeOptions,
) -> Result<(RationalCombo, f64)> {
    if pole_pool.is_empty() {
        return Err(Error::Precondition("empty pole pool".into()));
    }
    let tgt = RationalCombo::gamma_k(alpha, j);
    let fit = k.boundary(opts.fit_samples);
    let mut check = k.boundary(opts.validation_samples);
    check.extend(k.interior(opts.validation_samples / 100 + 2));
    let b = DVector::from_iterator(fit.len(), fit.iter().map(|&z| tgt.value(z)));
    let sup_of = |f: &RationalCombo| check.iter().map(|&z| (f.value(z) - tgt.value(z)).norm()).fold(0.0, f64::max);

    let mut chosen: Vec<f64> = Vec::new();
    let mut best = (RationalCombo::zero(), sup_of(&RationalCombo::zero()));
    while chosen.len() < pole_budget.min(pole_pool.len()) && best.1 > tol {
        let mut step: Option<(f64, f64)> = None;
        for &cand in pole_pool {
            if chosen.contains(&cand) {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(cand);
            let a = design(&trial, &fit);
            let c = lsq_solve(&a, &b, None, opts.singular_cutoff);
            let res = (&a * &c - &b).norm();
            if step.is_none_or(|(_, r)| res < r) {
                step = Some((cand, res));
            }
        }
        let Some((cand, _)) = step else { break };
        chosen.push(cand);
        let c = lawson(&chosen, &fit, &b, opts);
        let f = combo_from(&chosen, &c);
        let s = sup_of(&f);
        if s < best.1 {
            best = (f, s);
        }
    }
    if best.1 <= tol {
        Ok(best)
    } else {
        Err(Error::Runge { best: best.1, tol })
    }
}

/// Parameters of the per-stage cusp search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspSearch {
    pub rho_start: f64,
    pub max_halvings: usize,
    pub delta_max: f64,
    pub delta_step: f64,
    /// Relative quadrature tolerance for the collar integrals.
    pub quad_tol: f64,
    pub pole_budget: usize,
    /// Largest number of points of `Z` used per stage.
    pub z_budget: usize,
    pub runge: RungeOptions,
}

impl Default for CuspSearch {
    fn default() -> Self {
        CuspSearch {
            rho_start: 1.0,
            max_halvings: 80,
            delta_max: 1.55,
            delta_step: 0.02,
            quad_tol: 1e-8,
            pole_budget: 8,
            z_budget: 8,
            runge: RungeOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub n: usize,
    pub r_n: f64,
    /// Points of `Z` used at this stage; cusps sit at their conjugates.
    pub z_n: Vec<f64>,
    /// Radius of the collar window: `r_{n-1}`, or `r_0` at stage 0.
    pub collar_r: f64,
    pub sup_error: f64,
    pub sup_bound: f64,
    pub sup_errors: Vec<f64>,
    pub integral_r: Vec<f64>,
    pub integral_r_error: Vec<f64>,
    pub integral_gamma: Vec<f64>,
    pub integral_gamma_error: Vec<f64>,
    pub integral_bound: f64,
    pub delta_n: f64,
    pub rho_n: f64,
    /// `(rho, largest collar integral)` for every tried `rho`.
    pub rho_trace: Vec<(f64, f64)>,
    pub approximants: Vec<RationalCombo>,
    pub pass: bool,
}

impl StageCertificate {
    fn evaluate_pass(&self) -> bool {
        self.sup_error < self.sup_bound
            && self.integral_r.iter().chain(&self.integral_gamma).all(|v| *v < self.integral_bound)
    }
}

/// Result of [`build_domain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildResult {
    pub domain: DomainSpec,
    pub certificates: Vec<StageCertificate>,
}

fn collar_radius(rs: &[f64], n: usize) -> f64 {
    rs[n.saturating_sub(1)]
}

/// Default window `delta`: the chord of the hull stays clear of the window.
pub fn default_delta(r: f64) -> f64 {
    (0.5 * (1.0 - r)).acos().min(1.5)
}

fn stage_cusps(zs: &[f64], r: f64, delta: f64, rho: f64, stage: usize) -> Vec<CuspRegion> {
    zs.iter()
        .map(|&a| {
            let anchor = wrap_angle(-a);
            let w = r - (C64::from_polar(1.0, anchor) - ONE).norm();
            let mut c = CuspRegion::new(anchor, delta, rho, w);
            c.stage = stage;
            c
        })
        .collect()
}

/// True when the removed cusp pieces form a single overlapping cluster.
pub fn is_connected(dom: &DomainSpec) -> bool {
    let p = dom.prepare();
    let clusters = p.piece_clusters();
    let skip = usize::from(p.removed_disc.is_some());
    let cusp: Vec<usize> = clusters.into_iter().skip(skip).collect();
    cusp.windows(2).all(|w| w[0] == w[1]) || cusp.iter().all(|c| *c == cusp[0])
}

/// Collar integrals `int_{U_r \ G} |f|^2` for every function, with error estimates.
pub fn collar_integrals(dom: &DomainSpec, r: f64, fs: &[RationalCombo], quad_tol: f64) -> (Vec<f64>, Vec<f64>, bool) {
    let mut region = Region::new(dom).keep(Disc::new(ONE, r));
    for f in fs {
        region.singular.extend(f.poles().into_iter().map(|a| a.inv()));
    }
    let q = integrate_vec(
        &region,
        fs.len(),
        |z, out| {
            for (o, f) in out.iter_mut().zip(fs) {
                *o = f.value(z).norm_sqr();
            }
        },
        &QuadOptions::rel(quad_tol, quad_tol * 1e-6),
    );
    (q.value, q.error, q.converged)
}

/// Builds the stage domains and their certificates. Fails with the failing
/// stage rather than returning an unverified domain.
pub fn build_domain(
    z: &ZSpec,
    stages: usize,
    r_schedule: &[f64],
    tol_schedule: &[f64],
    search: &CuspSearch,
) -> Result<BuildResult> {
    z.validate()?;
    if stages == 0 {
        return Err(Error::Precondition("at least one stage is needed".into()));
    }
    if r_schedule.len() < stages || tol_schedule.len() < stages {
        return Err(Error::Precondition("schedules are shorter than the number of stages".into()));
    }
    let rs = &r_schedule[..stages];
    if rs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("r schedule must be strictly decreasing".into()));
    }
    for (n, &r) in rs.iter().enumerate() {
        if !(r > 0.0 && r < 1.0) || (n >= 1 && r >= 1.0 / n as f64) {
            return Err(Error::Precondition(format!("r_{n} = {r} violates 0 < r_n < min(1, 1/n)")));
        }
        let bound = 1.0 / (n + 1) as f64;
        if !(tol_schedule[n] > 0.0 && tol_schedule[n] < bound) {
            return Err(Error::Precondition(format!("tolerance of stage {n} must lie in (0, {bound})")));
        }
    }
    let mut cusps: Vec<CuspRegion> = Vec::new();
    let mut certs = Vec::new();
    for n in 0..stages {
        let r = rs[n];
        let bound = 1.0 / (n + 1) as f64;
        let mut pool = z.in_window(r);
        if pool.is_empty() {
            return Err(Error::Stage { stage: n, reason: format!("no point of Z inside U_{r}") });
        }
        pool = spread_subset(&pool, search.z_budget);
        let kspec = KSpec { r };
        let mut approximants = Vec::new();
        let mut sup_errors = Vec::new();
        for j in 0..=n as u32 {
            let (f, e) = runge_approximant(j, ONE, search.pole_budget, &pool, &kspec, tol_schedule[n], &search.runge)
                .map_err(|e| Error::Stage { stage: n, reason: e.to_string() })?;
            approximants.push(f);
            sup_errors.push(e);
        }
        let mut fs = approximants.clone();
        fs.extend((0..=n as u32).map(target));
        let collar = collar_radius(rs, n);

        let mut delta = default_delta(r);
        let mut rho = search.rho_start;
        let mut trace = Vec::new();
        let mut accepted = None;
        for _ in 0..=search.max_halvings {
            let mut candidate = cusps.clone();
            candidate.extend(stage_cusps(&pool, r, delta, rho, n));
            let mut dom = DomainSpec::with_cusps(candidate.clone());
            while !is_connected(&dom) && delta + search.delta_step <= search.delta_max {
                delta += search.delta_step;
                candidate.truncate(cusps.len());
                candidate.extend(stage_cusps(&pool, r, delta, rho, n));
                dom = DomainSpec::with_cusps(candidate.clone());
            }
            dom.validate().map_err(|e| Error::Stage { stage: n, reason: e.to_string() })?;
            let (vals, errs, converged) = collar_integrals(&dom, collar, &fs, search.quad_tol);
            let worst = vals.iter().zip(&errs).map(|(v, e)| v + 2.0 * e).fold(0.0, f64::max);
            trace.push((rho, vals.iter().cloned().fold(0.0, f64::max)));
            if converged && worst < bound && is_connected(&dom) {
                accepted = Some((candidate, vals, errs));
                break;
            }
            rho *= 0.5;
        }
        let Some((candidate, vals, errs)) = accepted else {
            return Err(Error::Stage { stage: n, reason: format!("collar constraints not met; rho trace {trace:?}") });
        };
        let m = n + 1;
        let cert = StageCertificate {
            n,
            r_n: r,
            z_n: pool,
            collar_r: collar,
            sup_error: sup_errors.iter().cloned().fold(0.0, f64::max),
            sup_bound: bound,
            sup_errors,
            integral_r: vals[..m].to_vec(),
            integral_r_error: errs[..m].to_vec(),
            integral_gamma: vals[m..].to_vec(),
            integral_gamma_error: errs[m..].to_vec(),
            integral_bound: bound,
            delta_n: delta,
            rho_n: rho,
            rho_trace: trace,
            approximants,
            pass: false,
        };
        let pass = cert.evaluate_pass();
        let cert = StageCertificate { pass, ..cert };
        if !pass {
            return Err(Error::Stage { stage: n, reason: "certificate failed".into() });
        }
        cusps = candidate;
        certs.push(cert);
    }
    let domain = DomainSpec::with_cusps(cusps);
    domain.validate()?;
    Ok(BuildResult { domain, certificates: certs })
}

/// Up to `budget` points with the largest spread, always keeping the point
/// closest to 1.
fn spread_subset(pool: &[f64], budget: usize) -> Vec<f64> {
    if pool.len() <= budget {
        return pool.to_vec();
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(|a, b| wrap_angle(*a).abs().total_cmp(&wrap_angle(*b).abs()));
    let mut out = vec![sorted[0]];
    while out.len() < budget {
        let next = sorted
            .iter()
            .filter(|a| !out.contains(a))
            .max_by(|a, b| {
                let da = out.iter().map(|o| wrap_angle(*a - o).abs()).fold(f64::INFINITY, f64::min);
                let db = out.iter().map(|o| wrap_angle(*b - o).abs()).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .cloned();
        match next {
            Some(a) => out.push(a),
            None => break,
        }
    }
    out
}

/// Outcome of [`verify_certificates`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub mismatches: Vec<String>,
}

/// Recomputes every certified quantity at `quad_tol` and checks the strict
/// inequalities with a margin of twice the error estimates.
pub fn verify_certificates(
    dom: &DomainSpec,
    certs: &[StageCertificate],
    quad_tol: f64,
    runge: &RungeOptions,
) -> Result<VerifyReport> {
    let mut report = VerifyReport { ok: true, mismatches: Vec::new() };
    let mut fail = |msg: String| {
        report.ok = false;
        report.mismatches.push(msg);
    };
    for cert in certs {
        let n = cert.n;
        let bound = 1.0 / (n + 1) as f64;
        if cert.sup_bound != bound || cert.integral_bound != bound {
            fail(format!("stage {n}: bounds differ from 1/(n+1)"));
        }
        if cert.approximants.len() != n + 1 {
            fail(format!("stage {n}: expected {} approximants", n + 1));
            continue;
        }
        let staged = dom.up_to_stage(n);
        for &a in &cert.z_n {
            let found = staged.cusps.iter().any(|c| c.stage == n && wrap_angle(c.anchor_angle + a).abs() < 1e-12);
            if !found {
                fail(format!("stage {n}: no cusp at conj of angle {a}"));
            }
        }
        let kspec = KSpec { r: cert.r_n };
        let mut check = kspec.boundary(runge.validation_samples * 2);
        check.extend(kspec.interior(runge.validation_samples / 50 + 2));
        for (j, f) in cert.approximants.iter().enumerate() {
            let e = sup_error(f, j as u32, &check);
            if !(e < bound) {
                fail(format!("stage {n}, j = {j}: sup error {e} is not below {bound}"));
            }
            if (e - cert.sup_errors[j]).abs() > 0.1 * cert.sup_errors[j].max(1e-12) + 1e-9 {
                fail(format!("stage {n}, j = {j}: sup error {e} differs from certified {}", cert.sup_errors[j]));
            }
        }
        let mut fs = cert.approximants.clone();
        fs.extend((0..=n as u32).map(target));
        let (vals, errs, converged) = collar_integrals(&staged, cert.collar_r, &fs, quad_tol);
        if !converged {
            fail(format!("stage {n}: collar quadrature did not converge"));
        }
        let certified: Vec<(f64, f64)> = cert
            .integral_r
            .iter()
            .zip(&cert.integral_r_error)
            .chain(cert.integral_gamma.iter().zip(&cert.integral_gamma_error))
            .map(|(v, e)| (*v, *e))
            .collect();
        for (i, ((v, e), (cv, ce))) in vals.iter().zip(&errs).zip(&certified).enumerate() {
            let what = if i <= n { format!("R_{i}") } else { format!("gamma_(1,{})", i - n - 1) };
            if !(v + 2.0 * e < bound) {
                fail(format!("stage {n}: collar integral of {what} = {v} (err {e}) is not below {bound} with margin"));
            }
            if (v - cv).abs() > 2.0 * (e + ce) + 1e-6 * v.abs().max(*cv) + 1e-14 {
                fail(format!("stage {n}: collar integral of {what} = {v} differs from certified {cv}"));
            }
        }
    }
    Ok(report)
}

/// Random-point check that each stage's removed set contains the previous one.
pub fn check_nesting(dom: &DomainSpec, stages: usize, samples: usize, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prepared: Vec<_> = (0..stages).map(|n| dom.up_to_stage(n).prepare()).collect();
    for _ in 0..samples {
        let z = C64::from_polar(rng.gen::<f64>().sqrt(), rng.gen_range(-PI..PI));
        for n in 1..stages {
            let before = prepared[n - 1].membership(z, 0.0) == Membership::Outside;
            let after = prepared[n].membership(z, 0.0) == Membership::Outside;
            if before && !after {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Flags for the variants that modify `G` further; none is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variants {
    pub connected_complement: bool,
    pub restrict_spectrum: bool,
}

impl Variants {
    pub fn check(&self) -> Result<()> {
        if self.connected_complement {
            return Err(Error::NotImplemented("modification of G to an open set with connected complement".into()));
        }
        if self.restrict_spectrum {
            return Err(Error::NotImplemented("restriction of the spectrum on the circle to Z".into()));
        }
        Ok(())
    }
}

//! Taylor polynomials, finite combinations of the kernels
//! `gamma_{alpha,k}(z) = z^k / (1 - alpha z)^(k+1)`, the backward shift on both,
//! and least-squares projections in the Bergman space of a domain.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{DomainSpec, Membership};
use crate::quadrature::{
    default_scales, divergence_probe_k, fmt_f64, gram_index, gram_layout, integrate_complex, integrate_vec,
    DivergenceClass, QuadOptions, QuadResult, Region, Tolerance,
};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Something that can be evaluated on the domain and integrated.
pub trait Analytic {
    fn eval(&self, z: C64) -> Result<C64>;

    /// Points where the function blows up; used as quadrature breakpoints.
    fn singular_points(&self) -> Vec<C64> {
        Vec::new()
    }
}

/// Truncated power series `a_0 + a_1 z + ... + a_N z^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorPoly {
    pub coeffs: Vec<C64>,
}

impl TaylorPoly {
    pub fn new(coeffs: Vec<C64>) -> Self {
        TaylorPoly { coeffs }
    }

    pub fn real(coeffs: &[f64]) -> Self {
        TaylorPoly { coeffs: coeffs.iter().map(|&c| C64::new(c, 0.0)).collect() }
    }

    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![ZERO; k + 1];
        coeffs[k] = ONE;
        TaylorPoly { coeffs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation.
    pub fn value(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &a| acc * z + a)
    }

    /// Partial sum `S_n f`; the whole polynomial when `n` exceeds its degree.
    pub fn partial_sum(&self, n: usize) -> TaylorPoly {
        TaylorPoly { coeffs: self.coeffs.iter().take(n + 1).cloned().collect() }
    }

    /// The same function as a kernel combination with `alpha = 0`.
    pub fn to_combo(&self) -> RationalCombo {
        RationalCombo::from_terms(
            self.coeffs.iter().enumerate().map(|(k, &c)| Term { alpha: ZERO, k: k as u32, c }).collect(),
        )
    }
}

impl Analytic for TaylorPoly {
    fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.value(z))
    }
}

/// Left shift of the coefficient vector.
pub fn shift_poly(f: &TaylorPoly) -> TaylorPoly {
    TaylorPoly { coeffs: f.coeffs.iter().skip(1).cloned().collect() }
}

/// One kernel term `c z^k / (1 - alpha z)^(k+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: C64,
    pub k: u32,
    pub c: C64,
}

impl Term {
    /// Value of the bare kernel `gamma_{alpha,k}`; `None` at its pole.
    pub fn kernel(alpha: C64, k: u32, z: C64) -> Option<C64> {
        let d = ONE - alpha * z;
        if d == ZERO {
            return None;
        }
        let inv = d.inv();
        Some((z * inv).powu(k) * inv)
    }
}

fn term_order(a: &Term, b: &Term) -> Ordering {
    a.alpha.re.total_cmp(&b.alpha.re).then(a.alpha.im.total_cmp(&b.alpha.im)).then(a.k.cmp(&b.k))
}

/// Finite combination of kernels in canonical form: terms sorted by
/// `(alpha, k)`, no repeated pair, no zero coefficient.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RationalCombo {
    pub terms: Vec<Term>,
}

impl RationalCombo {
    pub fn zero() -> Self {
        RationalCombo { terms: Vec::new() }
    }

    /// `gamma_alpha`.
    pub fn gamma(alpha: C64) -> Self {
        Self::gamma_k(alpha, 0)
    }

    /// `gamma_{alpha,k}`.
    pub fn gamma_k(alpha: C64, k: u32) -> Self {
        RationalCombo { terms: vec![Term { alpha, k, c: ONE }] }
    }

    /// Canonicalises an arbitrary term list.
    pub fn from_terms(mut terms: Vec<Term>) -> Self {
        terms.sort_by(term_order);
        let mut out: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match out.last_mut() {
                Some(last) if term_order(last, &t) == Ordering::Equal => last.c += t.c,
                _ => out.push(t),
            }
        }
        out.retain(|t| t.c != ZERO);
        RationalCombo { terms: out }
    }

    pub fn is_canonical(&self) -> bool {
        self.terms.windows(2).all(|w| term_order(&w[0], &w[1]) == Ordering::Less)
            && self.terms.iter().all(|t| t.c != ZERO)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| Term { c: t.c * s, ..*t }).collect())
    }

    pub fn add(&self, other: &RationalCombo) -> Self {
        Self::from_terms(self.terms.iter().chain(&other.terms).cloned().collect())
    }

    /// Linear combination `sum c_i f_i`.
    pub fn combine(parts: &[(C64, &RationalCombo)]) -> Self {
        Self::from_terms(
            parts.iter().flat_map(|(s, f)| f.terms.iter().map(move |t| Term { c: t.c * s, ..*t })).collect(),
        )
    }

    /// Evaluation that returns a non-finite value at a pole instead of failing.
    pub fn value(&self, z: C64) -> C64 {
        self.terms
            .iter()
            .fold(ZERO, |acc, t| acc + t.c * Term::kernel(t.alpha, t.k, z).unwrap_or(C64::new(f64::INFINITY, f64::NAN)))
    }

    /// Distinct nonzero `alpha` values.
    pub fn poles(&self) -> Vec<C64> {
        let mut v: Vec<C64> = Vec::new();
        for t in &self.terms {
            if t.alpha != ZERO && v.last() != Some(&t.alpha) {
                v.push(t.alpha);
            }
        }
        v
    }
}

impl Analytic for RationalCombo {
    fn eval(&self, z: C64) -> Result<C64> {
        let mut acc = ZERO;
        for t in &self.terms {
            acc += t.c * Term::kernel(t.alpha, t.k, z).ok_or(Error::Pole(z))?;
        }
        Ok(acc)
    }

    fn singular_points(&self) -> Vec<C64> {
        self.poles().into_iter().map(|a| a.inv()).collect()
    }
}

/// Evaluates either representation.
pub fn evaluate(f: &dyn Analytic, z: C64) -> Result<C64> {
    f.eval(z)
}

/// Exact image under the backward shift `(f - f(0)) / z`.
pub fn shift_rational(f: &RationalCombo) -> RationalCombo {
    let mut out = Vec::with_capacity(2 * f.terms.len());
    for t in &f.terms {
        if t.alpha == ZERO {
            // monomial rule
            if t.k > 0 {
                out.push(Term { k: t.k - 1, ..*t });
            }
        } else if t.k == 0 {
            out.push(Term { c: t.c * t.alpha, ..*t });
        } else {
            // T gamma_{a,k} = gamma_{a,k-1} + a gamma_{a,k}
            out.push(Term { k: t.k - 1, ..*t });
            out.push(Term { c: t.c * t.alpha, ..*t });
        }
    }
    RationalCombo::from_terms(out)
}

/// `n`-fold shift.
pub fn shift_rational_n(f: &RationalCombo, n: usize) -> RationalCombo {
    let mut g = f.clone();
    for _ in 0..n {
        if g.is_zero() {
            break;
        }
        g = shift_rational(&g);
    }
    g
}

/// `|T^{n+1} f(z) - (f(z) - S_n f(z)) / z^{n+1}|` for `z != 0`. The value
/// `T^{n+1} f(0) = a_{n+1}` is checked on the way.
pub fn iterate_identity_residual(f: &TaylorPoly, n: usize, z: C64) -> Result<f64> {
    if z == ZERO {
        return Err(Error::Precondition("the iterate identity needs z != 0".into()));
    }
    if n + 1 > f.len() {
        return Err(Error::Precondition(format!("n + 1 = {} exceeds the length {} of f", n + 1, f.len())));
    }
    let mut g = f.clone();
    for _ in 0..=n {
        g = shift_poly(&g);
    }
    let a = f.coeffs.get(n + 1).cloned().unwrap_or(ZERO);
    if g.value(ZERO) != a {
        return Err(Error::Inconsistent((g.value(ZERO) - a).norm()));
    }
    let rhs = (f.value(z) - f.partial_sum(n).value(z)) / z.powu(n as u32 + 1);
    Ok((g.value(z) - rhs).norm())
}

fn region_for(dom: &DomainSpec, fs: &[&dyn Analytic]) -> Region {
    Region::new(dom).singular(fs.iter().flat_map(|f| f.singular_points()))
}

/// `<f, g> = int f conj(g) dm2`; `tol` is relative with a small absolute floor.
pub fn inner_product(f: &dyn Analytic, g: &dyn Analytic, dom: &DomainSpec, tol: f64) -> QuadResult<C64> {
    let region = region_for(dom, &[f, g]);
    let nan = C64::new(f64::NAN, f64::NAN);
    integrate_complex(
        &region,
        |z| f.eval(z).unwrap_or(nan) * g.eval(z).unwrap_or(nan).conj(),
        &QuadOptions::rel(tol, tol * 1e-3),
    )
}

/// Squared norm `int |f|^2 dm2`.
pub fn norm_sq(f: &dyn Analytic, dom: &DomainSpec, tol: f64) -> QuadResult<f64> {
    inner_product(f, f, dom, tol).map(|v| v.re)
}

/// Rejects combinations whose kernels are not square integrable on `dom`:
/// poles inside the domain are refused outright, poles on its boundary must
/// pass a divergence probe.
pub fn check_membership(f: &RationalCombo, dom: &DomainSpec) -> Result<()> {
    let prepared = dom.prepare();
    let mut probed: Vec<(C64, u32)> = Vec::new();
    for t in &f.terms {
        if t.alpha == ZERO {
            continue;
        }
        let p = t.alpha.inv();
        match prepared.membership(p, 1e-12) {
            Membership::Inside => {
                return Err(Error::NotInSpace(format!(
                    "pole {p} of gamma_({},{}) lies inside the domain",
                    t.alpha, t.k
                )))
            }
            Membership::Outside if (p.norm() - 1.0).abs() > 1e-12 => continue,
            _ => {}
        }
        if probed.iter().any(|&(a, k)| a == t.alpha && k >= t.k) {
            continue;
        }
        let rep = divergence_probe_k(dom, t.alpha, t.k, &default_scales(), 1e-9)?;
        if rep.classification != DivergenceClass::Convergent {
            return Err(Error::NotInSpace(format!(
                "|gamma_({},{})|^2 is classified {:?} near its boundary pole",
                t.alpha, t.k, rep.classification
            )));
        }
        probed.push((t.alpha, t.k));
    }
    Ok(())
}

/// Gram matrix of a basis with projections of a target.
#[derive(Clone, Debug)]
pub struct GramSystem {
    /// `gram[(i, j)] = <b_j, b_i>`.
    pub gram: DMatrix<C64>,
    /// `rhs[i] = <target, b_i>`.
    pub rhs: DVector<C64>,
    pub target_norm_sq: f64,
    pub condition_estimate: f64,
    pub quad_tol: f64,
    /// Largest quadrature error estimate over all entries.
    pub quad_error: f64,
}

/// Raw assembly of a basis against several targets in one quadrature sweep.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub gram: DMatrix<C64>,
    pub rhs: Vec<DVector<C64>>,
    pub target_norm_sq: Vec<f64>,
    pub quad_error: f64,
}

impl Assembly {
    /// System restricted to the first `k` basis elements and target `t`.
    pub fn system(&self, k: usize, t: usize, quad_tol: f64) -> GramSystem {
        let gram = self.gram.view((0, 0), (k, k)).into_owned();
        GramSystem {
            condition_estimate: condition_estimate(&gram),
            rhs: self.rhs[t].rows(0, k).into_owned(),
            gram,
            target_norm_sq: self.target_norm_sq[t],
            quad_tol,
            quad_error: self.quad_error,
        }
    }
}

fn condition_estimate(gram: &DMatrix<C64>) -> f64 {
    if gram.nrows() == 0 {
        return 1.0;
    }
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Assembles the Gram matrix of `basis` and projections of all `targets`.
pub fn assemble(basis: &[RationalCombo], targets: &[RationalCombo], dom: &DomainSpec, tol: f64) -> Result<Assembly> {
    if !(tol > 0.0) {
        return Err(Error::Precondition("quadrature tolerance must be positive".into()));
    }
    for (i, b) in basis.iter().enumerate() {
        if !b.is_canonical() || b.is_zero() {
            return Err(Error::Precondition(format!("basis element {i} is not a nonzero canonical combination")));
        }
        if basis[..i].contains(b) {
            return Err(Error::Precondition(format!("basis element {i} duplicates an earlier one")));
        }
        check_membership(b, dom)?;
    }
    for t in targets {
        check_membership(t, dom)?;
    }
    let n = basis.len();
    let m = targets.len();
    let dim = gram_layout(n, m);
    let mut region = Region::new(dom);
    for f in basis.iter().chain(targets) {
        region.singular.extend(f.singular_points());
    }
    let opts = QuadOptions { tol: Tolerance::Gram { rel: tol, abs: tol * 1e-3, n, m }, max_depth: 40 };
    let q = integrate_vec(
        &region,
        dim,
        |z, out| {
            let bv: Vec<C64> = basis.iter().map(|b| b.value(z)).collect();
            for i in 0..n {
                for j in 0..=i {
                    let (re, im) = gram_index(n, i, j);
                    let v = bv[j] * bv[i].conj();
                    out[re] = v.re;
                    out[im] = v.im;
                }
            }
            for (ti, t) in targets.iter().enumerate() {
                let base = n * (n + 1) + ti * (2 * n + 1);
                let tv = t.value(z);
                for i in 0..n {
                    let v = tv * bv[i].conj();
                    out[base + 2 * i] = v.re;
                    out[base + 2 * i + 1] = v.im;
                }
                out[base + 2 * n] = tv.norm_sqr();
            }
        },
        &opts,
    );
    if !q.converged {
        let mut allowed = vec![0.0; dim];
        opts.tol.allowed(&q.value, &mut allowed);
        let worst =
            (0..dim).max_by(|&a, &b| (q.error[a] / allowed[a]).total_cmp(&(q.error[b] / allowed[b]))).unwrap_or(0);
        return Err(Error::Quadrature { what: describe_slot(worst, n), error: q.error[worst] });
    }
    let mut gram = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in 0..=i {
            let (re, im) = gram_index(n, i, j);
            let v = if i == j { C64::new(q.value[re], 0.0) } else { C64::new(q.value[re], q.value[im]) };
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }
    let mut rhs = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for t in 0..m {
        let base = n * (n + 1) + t * (2 * n + 1);
        rhs.push(DVector::from_fn(n, |i, _| C64::new(q.value[base + 2 * i], q.value[base + 2 * i + 1])));
        norms.push(q.value[base + 2 * n]);
    }
    let quad_error = q.error.iter().cloned().fold(0.0, f64::max);
    Ok(Assembly { gram, rhs, target_norm_sq: norms, quad_error })
}

fn describe_slot(slot: usize, n: usize) -> String {
    if slot < n * (n + 1) {
        let k = slot / 2;
        let mut i = 0;
        while (i + 1) * (i + 2) / 2 <= k {
            i += 1;
        }
        let j = k - i * (i + 1) / 2;
        format!("gram entry ({i}, {j})")
    } else {
        let r = slot - n * (n + 1);
        let (t, o) = (r / (2 * n + 1), r % (2 * n + 1));
        if o == 2 * n {
            format!("norm of target {t}")
        } else {
            format!("projection of target {t} on basis element {}", o / 2)
        }
    }
}

/// Gram system of `basis` against a single `target`.
pub fn gram_system(basis: &[RationalCombo], target: &RationalCombo, dom: &DomainSpec, tol: f64) -> Result<GramSystem> {
    let a = assemble(basis, std::slice::from_ref(target), dom, tol)?;
    Ok(a.system(basis.len(), 0, tol))
}

/// Eigenvalues below this fraction of the largest are discarded in [`project`].
pub const SPECTRAL_CUTOFF: f64 = 1e-12;

/// Least-squares coefficients by spectral cutoff and the projection residual.
pub fn project(sys: &GramSystem) -> Result<(Vec<C64>, f64)> {
    let n = sys.gram.nrows();
    if n == 0 {
        return Ok((Vec::new(), sys.target_norm_sq.max(0.0).sqrt()));
    }
    let eig = sys.gram.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let mut c = DVector::from_element(n, ZERO);
    if lmax > 0.0 {
        for (idx, &l) in eig.eigenvalues.iter().enumerate() {
            if l > SPECTRAL_CUTOFF * lmax {
                let v = eig.eigenvectors.column(idx);
                let w = v.dotc(&sys.rhs) / l;
                c += v * w;
            }
        }
    }
    let cr = c.dotc(&sys.rhs).re;
    let cgc = c.dotc(&(&sys.gram * &c)).re;
    let r2 = sys.target_norm_sq - 2.0 * cr + cgc;
    let scale = sys.target_norm_sq.abs() + cr.abs() + cgc.abs();
    if r2 < -10.0 * sys.quad_tol * scale {
        return Err(Error::Inconsistent(r2));
    }
    Ok((c.iter().cloned().collect(), r2.max(0.0).sqrt()))
}

/// One row of a density report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub target: usize,
    pub k: usize,
    pub residual: f64,
    pub condition_estimate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
}

impl DensityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("target,K,residual,condition_estimate\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.target, r.k, fmt_f64(r.residual), fmt_f64(r.condition_estimate)));
        }
        s
    }

    /// Residuals of one target in schedule order.
    pub fn column(&self, target: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.target == target).map(|r| r.residual).collect()
    }
}

/// Projection residuals of every target onto the first `K` elements of the
/// basis family, for each `K` in the schedule.
pub fn density_probe(
    dom: &DomainSpec,
    family: &dyn Fn(usize) -> RationalCombo,
    targets: &[RationalCombo],
    schedule: &[usize],
    tol: f64,
) -> Result<DensityReport> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("K schedule must be strictly increasing".into()));
    }
    if targets.is_empty() {
        return Ok(DensityReport::default());
    }
    let kmax = schedule.last().cloned().unwrap_or(0);
    let basis: Vec<RationalCombo> = (0..kmax).map(family).collect();
    let asm = assemble(&basis, targets, dom, tol)?;
    let mut rows = Vec::with_capacity(targets.len() * schedule.len());
    for t in 0..targets.len() {
        for &k in schedule {
            let sys = asm.system(k, t, tol);
            let (_, residual) = project(&sys)?;
            rows.push(DensityRow { target: t, k, residual, condition_estimate: sys.condition_estimate });
        }
    }
    Ok(DensityReport { rows })
}

/// Weighted least squares `min sum w_i |(A c - b)_i|^2` by SVD with relative
/// singular cutoff; columns are equilibrated first.
pub fn lsq_solve(a: &DMatrix<C64>, b: &DVector<C64>, weights: Option<&[f64]>, cutoff: f64) -> DVector<C64> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return DVector::from_element(0, ZERO);
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    if let Some(w) = weights {
        for i in 0..rows {
            let s = w[i].max(0.0).sqrt();
            m.row_mut(i).scale_mut(s);
            rhs[i] *= s;
        }
    }
    let scales: Vec<f64> = (0..cols).map(|j| m.column(j).norm()).map(|n| if n > 0.0 { n } else { 1.0 }).collect();
    for (j, s) in scales.iter().enumerate() {
        m.column_mut(j).unscale_mut(*s);
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let mut c = svd.solve(&rhs, cutoff * smax).unwrap_or_else(|_| DVector::from_element(cols, ZERO));
    for (j, s) in scales.iter().enumerate() {
        c[j] /= *s;
    }
    c
}

//! Strip coordinates, flat cups, cusp regions and domains.
//!
//! Points of the disc are handled in strip coordinates `(t, d)` where `t` is
//! the argument and `d = pi/2 - 2 atan|z|` is the inward depth measured from
//! the unit circle. Cusp regions are described ray by ray as depth intervals,
//! which keeps doubly-exponentially thin slivers representable.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Current on-disk version of [`DomainSpec`].
pub const FORMAT_VERSION: u32 = 1;

/// Geometric tolerance used by [`cup_membership`].
pub const CUP_TOL: f64 = 1e-12;

/// Point of the extended plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedComplex {
    Finite(C64),
    Infinity,
}

impl ExtendedComplex {
    /// Inversion `z -> 1/z` with `1/0 = inf` and `1/inf = 0`.
    pub fn inv(self) -> Self {
        match self {
            ExtendedComplex::Infinity => ExtendedComplex::Finite(C64::new(0.0, 0.0)),
            ExtendedComplex::Finite(z) if z.re == 0.0 && z.im == 0.0 => ExtendedComplex::Infinity,
            ExtendedComplex::Finite(z) => ExtendedComplex::Finite(z.conj() / z.norm_sqr()),
        }
    }

    pub fn finite(self) -> Option<C64> {
        match self {
            ExtendedComplex::Finite(z) => Some(z),
            ExtendedComplex::Infinity => None,
        }
    }
}

/// Point `t + i s` of the strip `R + i(-pi/2, pi/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripPoint {
    pub t: f64,
    pub s: f64,
}

impl StripPoint {
    pub fn new(t: f64, s: f64) -> Self {
        StripPoint { t, s }
    }
}

/// Sphere parametrisation followed by stereographic projection from the north pole.
pub fn strip_to_plane(w: StripPoint) -> ExtendedComplex {
    if w.s >= FRAC_PI_2 {
        return ExtendedComplex::Infinity;
    }
    let r = (FRAC_PI_4 + 0.5 * w.s).tan();
    ExtendedComplex::Finite(C64::from_polar(r, w.t))
}

/// Inverse of [`strip_to_plane`] with `t` in `(-pi, pi]`; `None` at the origin.
pub fn plane_to_strip(z: C64) -> Option<StripPoint> {
    if z.re == 0.0 && z.im == 0.0 {
        return None;
    }
    Some(StripPoint::new(z.arg(), -depth_of_radius(z.norm())))
}

/// Inward depth `pi/2 - 2 atan r`, negative outside the closed disc.
pub fn depth_of_radius(r: f64) -> f64 {
    2.0 * ((1.0 - r) / (1.0 + r)).atan()
}

pub fn radius_of_depth(d: f64) -> f64 {
    (FRAC_PI_4 - 0.5 * d).tan()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(TAU);
    if x > PI {
        x -= TAU;
    }
    x
}

/// Largest `t` for which `exp(-exp(1/t))` is exactly zero in `f64`.
pub fn underflow_threshold() -> f64 {
    // exp(-x) is zero for x above ~745.13
    1.0 / 745.2f64.ln()
}

/// The flat profile `s(t) = exp(-exp(1/|t|))`, `s(0) = 0`.
pub fn flat_profile(t: f64) -> f64 {
    let a = t.abs();
    if a == 0.0 {
        return 0.0;
    }
    let e = (1.0 / a).exp();
    (-e).exp()
}

/// Derivative of [`flat_profile`] for `t > 0`.
pub fn flat_profile_deriv(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let u = 1.0 / t;
    if u > 700.0 {
        return 0.0;
    }
    let e = u.exp();
    let s = (-e).exp();
    if s == 0.0 {
        0.0
    } else {
        s * e * u * u
    }
}

/// Inflection point of [`flat_profile`] on `t > 0`; convex before it, concave after.
/// With `u = 1/t` it solves `e^u = 1 + 2/u`.
pub fn inflection_point() -> f64 {
    let (mut a, mut b) = (0.5f64, 2.0f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m.exp() < 1.0 + 2.0 / m {
            a = m;
        } else {
            b = m;
        }
    }
    2.0 / (a + b)
}

/// Flat cup `C_{delta, rho}`: interior of the convex hull of `t + i rho s(t)`, `|t| <= delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CupSpec {
    pub delta: f64,
    pub rho: f64,
    pub samples: usize,
}

impl CupSpec {
    pub fn new(delta: f64, rho: f64) -> Self {
        CupSpec { delta, rho, samples: 512 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Precondition(format!("cup delta must be positive, got {}", self.delta)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Precondition(format!("cup rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.samples < 3 {
            return Err(Error::Precondition("cup needs at least 3 samples".into()));
        }
        let h = self.top();
        if !(h >= f64::MIN_POSITIVE) {
            return Err(Error::DegenerateCup { delta: self.delta, height: h });
        }
        Ok(())
    }

    /// Height `rho s(delta)` of the closing chord.
    pub fn top(&self) -> f64 {
        self.rho * flat_profile(self.delta)
    }

    pub fn shape(&self) -> CupShape {
        CupShape::new(self.delta, self.rho)
    }

    /// Sampled curve points `(t, rho s(t))`, denser near `t = 0`.
    pub fn curve_samples(&self) -> Vec<StripPoint> {
        let n = self.samples.max(3);
        (0..n)
            .map(|i| {
                let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let t = self.delta * u * u.abs();
                StripPoint::new(t, self.rho * flat_profile(t))
            })
            .collect()
    }
}

/// Lower boundary of a cup hull: the convex minorant of `rho s(|t|)` on `[-delta, delta]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CupShape {
    pub delta: f64,
    pub rho: f64,
    /// Tangent point beyond which the hull boundary is a straight segment.
    pub t_tan: f64,
    /// Slope of that segment divided by `rho`.
    pub slope: f64,
}

impl CupShape {
    pub fn new(delta: f64, rho: f64) -> Self {
        let s_delta = flat_profile(delta);
        let phi = |t: f64| flat_profile(t) + flat_profile_deriv(t) * (delta - t) - s_delta;
        let hi = inflection_point();
        let lo = underflow_threshold().min(0.5 * delta);
        if delta <= hi || !(phi(lo) < 0.0) {
            return CupShape { delta, rho, t_tan: delta, slope: flat_profile_deriv(delta) };
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if phi(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 * b {
                break;
            }
        }
        let t_tan = 0.5 * (a + b);
        let slope = (s_delta - flat_profile(t_tan)) / (delta - t_tan);
        CupShape { delta, rho, t_tan, slope }
    }

    /// Hull lower boundary at `t`; meaningful for `|t| <= delta`.
    pub fn lower(&self, t: f64) -> f64 {
        let a = t.abs().min(self.delta);
        if a <= self.t_tan {
            self.rho * flat_profile(a)
        } else {
            self.rho * (flat_profile(self.t_tan) + self.slope * (a - self.t_tan))
        }
    }

    pub fn top(&self) -> f64 {
        self.rho * flat_profile(self.delta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Inside,
    Outside,
    BoundaryBand,
}

/// Classifies a strip point against the cup hull.
pub fn cup_membership(cup: &CupSpec, w: StripPoint) -> Result<Membership> {
    cup.validate()?;
    let shape = cup.shape();
    let tol = CUP_TOL;
    let top = shape.top();
    let a = w.t.abs();
    if a > cup.delta + tol || w.s > top + tol {
        return Ok(Membership::Outside);
    }
    let lo = shape.lower(a);
    if w.s < lo - tol {
        return Ok(Membership::Outside);
    }
    if a < cup.delta - tol && w.s > lo + tol && w.s < top - tol {
        Ok(Membership::Inside)
    } else {
        Ok(Membership::BoundaryBand)
    }
}

/// Closed disc in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: C64,
    pub radius: f64,
}

impl Disc {
    pub fn new(center: C64, radius: f64) -> Self {
        Disc { center, radius }
    }

    pub fn contains(&self, z: C64) -> bool {
        (z - self.center).norm() <= self.radius
    }

    /// Depth interval cut out of the ray at angle `theta`, clipped to `[0, pi/2]`.
    pub fn ray_interval(&self, theta: f64) -> Option<(f64, f64)> {
        let dir = C64::from_polar(1.0, -theta);
        let b = (self.center * dir).re;
        let c = self.center.norm_sqr() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let r_hi = b + sq;
        if r_hi <= 0.0 {
            return None;
        }
        let r_lo = if b - sq > 0.0 { c / r_hi } else { 0.0 };
        let d_lo = depth_of_radius(r_hi).max(0.0);
        let d_hi = depth_of_radius(r_lo).min(FRAC_PI_2);
        if d_lo < d_hi {
            Some((d_lo, d_hi))
        } else {
            None
        }
    }

    /// Angles at which rays from the origin become tangent to the circle.
    pub fn tangent_angles(&self) -> Vec<f64> {
        let m = self.center.norm();
        if m < self.radius * (1.0 - 1e-14) || m == 0.0 {
            return Vec::new();
        }
        let a = (self.radius / m).min(1.0).asin();
        let c = self.center.arg();
        vec![c - a, c + a]
    }

    /// Intersection points of the two boundary circles.
    pub fn crossings(&self, other: &Disc) -> Vec<C64> {
        let d = other.center - self.center;
        let m = d.norm();
        let (r1, r2) = (self.radius, other.radius);
        if m == 0.0 || m > r1 + r2 || m < (r1 - r2).abs() {
            return Vec::new();
        }
        let a = (r1 * r1 - r2 * r2 + m * m) / (2.0 * m);
        let h = (r1 * r1 - a * a).max(0.0).sqrt();
        let u = d / m;
        let base = self.center + u * a;
        let perp = C64::new(-u.im, u.re) * h;
        vec![base + perp, base - perp]
    }
}

/// Cusp region: the flat cup mapped to the plane, rotated to touch the
/// circle at its anchor, convexified and clipped to a window about the anchor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspRegion {
    pub anchor_angle: f64,
    #[serde(flatten)]
    pub cup: CupSpec,
    pub window_radius: f64,
    #[serde(default)]
    pub stage: usize,
}

impl CuspRegion {
    pub fn new(anchor_angle: f64, delta: f64, rho: f64, window_radius: f64) -> Self {
        CuspRegion { anchor_angle, cup: CupSpec::new(delta, rho), window_radius, stage: 0 }
    }

    pub fn anchor(&self) -> C64 {
        C64::from_polar(1.0, self.anchor_angle)
    }

    pub fn validate(&self) -> Result<()> {
        self.cup.validate()?;
        if self.cup.delta >= FRAC_PI_2 {
            return Err(Error::Precondition(format!("cusp delta must be below pi/2, got {}", self.cup.delta)));
        }
        if !(self.window_radius > 0.0) || !self.anchor_angle.is_finite() {
            return Err(Error::Precondition("cusp window radius must be positive".into()));
        }
        Ok(())
    }

    pub fn prepare(&self) -> PreparedCusp {
        PreparedCusp::new(self)
    }
}

/// Cusp region with cached shape data for fast ray queries.
#[derive(Clone, Debug)]
pub struct PreparedCusp {
    pub region: CuspRegion,
    pub anchor: C64,
    pub shape: CupShape,
    /// Distance from the origin to the closing chord.
    pub chord_dist: f64,
    /// Largest `|t|` whose ray meets the region.
    pub t_extent: f64,
}

impl PreparedCusp {
    pub fn new(region: &CuspRegion) -> Self {
        let shape = region.cup.shape();
        let r_top = radius_of_depth(shape.top());
        let mut p = PreparedCusp {
            region: *region,
            anchor: region.anchor(),
            shape,
            chord_dist: r_top * region.cup.delta.cos(),
            t_extent: region.cup.delta,
        };
        p.t_extent = p.find_extent();
        p
    }

    fn find_extent(&self) -> f64 {
        let nonempty = |t: f64| self.interval_rel(t).is_some();
        let mut hi = self.region.cup.delta;
        if self.region.window_radius < 1.0 {
            hi = hi.min(self.region.window_radius.asin());
        }
        if nonempty(hi) {
            return hi;
        }
        let mut lo = 0.0;
        if !nonempty(lo) {
            // the window is narrower than anything the cup reaches
            return 0.0;
        }
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if nonempty(m) {
                lo = m;
            } else {
                hi = m;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        hi
    }

    /// Depth interval of the region on the ray at relative angle `t`.
    pub fn interval_rel(&self, t: f64) -> Option<(f64, f64)> {
        let delta = self.region.cup.delta;
        let a = t.abs();
        if a >= delta {
            return None;
        }
        let lo = self.shape.lower(a);
        let hi_chord = depth_of_radius(self.chord_dist / a.cos());
        let w = self.region.window_radius;
        let (sn, cs) = a.sin_cos();
        let disc = w * w - sn * sn;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let r_hi = cs + sq;
        let r_lo = cs - sq;
        let w_lo = depth_of_radius(r_hi).max(0.0);
        let w_hi = if r_lo > 0.0 { depth_of_radius(r_lo) } else { FRAC_PI_2 };
        let d0 = lo.max(w_lo);
        let d1 = hi_chord.min(w_hi);
        if d0 < d1 {
            Some((d0, d1))
        } else {
            None
        }
    }

    /// Depth interval on the ray at absolute angle `theta`.
    pub fn ray_interval(&self, theta: f64) -> Option<(f64, f64)> {
        let t = wrap_angle(theta - self.region.anchor_angle);
        if t.abs() > self.t_extent {
            return None;
        }
        self.interval_rel(t)
    }

    /// Angles where the ray profile of the region changes character.
    pub fn breakpoints(&self) -> Vec<f64> {
        let a = self.region.anchor_angle;
        let mut v = vec![a, a - self.t_extent, a + self.t_extent];
        let u = underflow_threshold();
        for t in [u, self.shape.t_tan] {
            if t < self.t_extent {
                v.push(a - t);
                v.push(a + t);
            }
        }
        v
    }

    pub fn classify(&self, z: C64, tol: f64) -> Membership {
        let r = z.norm();
        let d = depth_of_radius(r);
        let theta = if r == 0.0 { 0.0 } else { z.arg() };
        let dt = if r > 0.0 { tol / r } else { 0.0 };
        let mut band = false;
        if let Some((lo, hi)) = self.ray_interval(theta) {
            if d > lo + tol && d < hi - tol {
                return Membership::Inside;
            }
            if d >= lo - tol && d <= hi + tol {
                band = true;
            }
        }
        if !band && dt > 0.0 {
            for th in [theta - dt, theta + dt] {
                if let Some((lo, hi)) = self.ray_interval(th) {
                    if d >= lo - tol && d <= hi + tol {
                        band = true;
                    }
                }
            }
        }
        if band {
            Membership::BoundaryBand
        } else {
            Membership::Outside
        }
    }

    /// Ordered convex polygon of the region boundary.
    pub fn hull_polygon(&self) -> Vec<C64> {
        let n = self.region.cup.samples.max(3);
        let a = self.region.anchor_angle;
        let ext = self.t_extent * (1.0 - 1e-12);
        let mut outer = Vec::with_capacity(n);
        let mut inner = Vec::with_capacity(n);
        for i in 0..n {
            let u = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let t = ext * u * u.abs();
            if let Some((lo, hi)) = self.interval_rel(t) {
                // underflowed heights snap to the anchor
                outer.push(if lo == 0.0 { self.anchor } else { C64::from_polar(radius_of_depth(lo), a + t) });
                inner.push(C64::from_polar(radius_of_depth(hi), a + t));
            }
        }
        inner.reverse();
        outer.extend(inner);
        dedup_points(outer)
    }
}

fn dedup_points(pts: Vec<C64>) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.last().is_none_or(|q| (p - *q).norm() > 1e-13) {
            out.push(p);
        }
    }
    while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() <= 1e-13 {
        out.pop();
    }
    out
}

/// True when consecutive edges of the closed polygon never turn clockwise.
pub fn is_convex(poly: &[C64]) -> bool {
    let n = poly.len();
    if n < 3 {
        return true;
    }
    let scale = poly.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    let eps = 1e-12 * scale * scale;
    let mut sign = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let cross = (b - a).re * (c - b).im - (b - a).im * (c - b).re;
        if cross.abs() <= eps {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Separating-axis overlap test for convex polygons.
pub fn convex_overlap(p: &[C64], q: &[C64]) -> bool {
    if p.is_empty() || q.is_empty() {
        return false;
    }
    for poly in [p, q] {
        let n = poly.len();
        for i in 0..n {
            let e = poly[(i + 1) % n] - poly[i];
            let axis = C64::new(-e.im, e.re);
            if axis.norm() == 0.0 {
                continue;
            }
            let proj = |pts: &[C64]| {
                pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                    let v = z.re * axis.re + z.im * axis.im;
                    (lo.min(v), hi.max(v))
                })
            };
            let (a0, a1) = proj(p);
            let (b0, b1) = proj(q);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Base {
    UnitDisc,
    Crescent { center: [f64; 2], radius: f64 },
}

impl Base {
    /// The removed closed disc of the crescent `D \ {|z - 1/2| <= 1/2}`.
    pub fn standard_crescent() -> Self {
        Base::Crescent { center: [0.5, 0.0], radius: 0.5 }
    }

    pub fn removed_disc(&self) -> Option<Disc> {
        match *self {
            Base::UnitDisc => None,
            Base::Crescent { center, radius } => Some(Disc::new(C64::new(center[0], center[1]), radius)),
        }
    }
}

/// Unit disc (or crescent) minus a finite union of closed cusp regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub base: Base,
    pub cusps: Vec<CuspRegion>,
    pub format_version: u32,
}

impl DomainSpec {
    pub fn unit_disc() -> Self {
        DomainSpec { base: Base::UnitDisc, cusps: Vec::new(), format_version: FORMAT_VERSION }
    }

    pub fn crescent() -> Self {
        DomainSpec { base: Base::standard_crescent(), cusps: Vec::new(), format_version: FORMAT_VERSION }
    }

    pub fn with_cusps(cusps: Vec<CuspRegion>) -> Self {
        DomainSpec { base: Base::UnitDisc, cusps, format_version: FORMAT_VERSION }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported format_version {}", self.format_version)));
        }
        if let Some(d) = self.base.removed_disc() {
            if !(d.radius > 0.0) || d.center.norm() + d.radius > 1.0 + 1e-12 {
                return Err(Error::Precondition("crescent disc must lie in the closed unit disc".into()));
            }
        }
        for (i, c) in self.cusps.iter().enumerate() {
            c.validate()?;
            for d in &self.cusps[..i] {
                if d == c {
                    return Err(Error::Precondition(format!(
                        "duplicate cusp entry at anchor angle {}",
                        c.anchor_angle
                    )));
                }
            }
        }
        let p = self.prepare();
        if p.membership(C64::new(0.0, 0.0), 1e-12) == Membership::Outside {
            return Err(Error::Precondition("domain must not remove the origin".into()));
        }
        Ok(())
    }

    pub fn prepare(&self) -> PreparedDomain {
        PreparedDomain::new(self)
    }

    /// Domain restricted to the cusps of stages `<= stage`.
    pub fn up_to_stage(&self, stage: usize) -> DomainSpec {
        DomainSpec {
            base: self.base,
            cusps: self.cusps.iter().filter(|c| c.stage <= stage).cloned().collect(),
            format_version: self.format_version,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: DomainSpec = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }
}

/// Domain with cached cusp shapes.
#[derive(Clone, Debug)]
pub struct PreparedDomain {
    pub spec: DomainSpec,
    pub removed_disc: Option<Disc>,
    pub cusps: Vec<PreparedCusp>,
}

/// Identifier of a component of the interior of the star set, labelled by
/// the removed piece `1/p` falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Piece {
    Exterior,
    Removed(usize),
}

impl PreparedDomain {
    pub fn new(spec: &DomainSpec) -> Self {
        PreparedDomain {
            spec: spec.clone(),
            removed_disc: spec.base.removed_disc(),
            cusps: spec.cusps.iter().map(|c| c.prepare()).collect(),
        }
    }

    /// Depth intervals of the ray at `theta` that lie in the domain, ascending.
    pub fn ray_intervals(&self, theta: f64) -> Vec<(f64, f64)> {
        let mut iv = vec![(0.0, FRAC_PI_2)];
        if let Some(d) = &self.removed_disc {
            if let Some(cut) = d.ray_interval(theta) {
                subtract_interval(&mut iv, cut);
            }
        }
        for c in &self.cusps {
            if let Some(cut) = c.ray_interval(theta) {
                subtract_interval(&mut iv, cut);
            }
        }
        iv
    }

    /// Boundary circles of the domain: the unit circle, the removed disc and the cusp windows.
    pub fn circles(&self) -> Vec<Disc> {
        let mut v = vec![Disc::new(C64::new(0.0, 0.0), 1.0)];
        v.extend(self.removed_disc);
        v.extend(self.cusps.iter().map(|c| Disc::new(c.anchor, c.region.window_radius)));
        v
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(d) = &self.removed_disc {
            v.extend(d.tangent_angles());
            // the standard crescent is tangent to the circle at its outermost point
            if (d.center.norm() + d.radius - 1.0).abs() < 1e-12 {
                v.push(d.center.arg());
            }
        }
        for c in &self.cusps {
            v.extend(c.breakpoints());
        }
        v
    }

    pub fn membership(&self, z: C64, tol: f64) -> Membership {
        let r = z.norm();
        if r >= 1.0 + tol {
            return Membership::Outside;
        }
        let mut band = r > 1.0 - tol;
        if let Some(d) = &self.removed_disc {
            let e = (z - d.center).norm() - d.radius;
            if e < -tol {
                return Membership::Outside;
            }
            if e <= tol {
                band = true;
            }
        }
        for c in &self.cusps {
            match c.classify(z, tol) {
                Membership::Inside => return Membership::Outside,
                Membership::BoundaryBand => band = true,
                Membership::Outside => {}
            }
        }
        if band {
            Membership::BoundaryBand
        } else {
            Membership::Inside
        }
    }

    /// Polygons of all removed pieces: crescent disc first, then cusps.
    pub fn removed_polygons(&self) -> Vec<Vec<C64>> {
        let mut v = Vec::new();
        if let Some(d) = &self.removed_disc {
            v.push((0..256).map(|i| d.center + C64::from_polar(d.radius, TAU * i as f64 / 256.0)).collect());
        }
        for c in &self.cusps {
            v.push(c.hull_polygon());
        }
        v
    }

    /// Cluster label of each removed piece; overlapping pieces share a label.
    pub fn piece_clusters(&self) -> Vec<usize> {
        let polys = self.removed_polygons();
        let n = polys.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let nx = p[j];
                p[j] = r;
                j = nx;
            }
            r
        }
        for i in 0..n {
            for j in 0..i {
                if convex_overlap(&polys[i], &polys[j]) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }

    /// Component of the star-set interior containing `p`, if any.
    pub fn star_piece(&self, p: ExtendedComplex, clusters: &[usize]) -> Option<Piece> {
        let q = match p.inv() {
            ExtendedComplex::Infinity => return Some(Piece::Exterior),
            ExtendedComplex::Finite(q) => q,
        };
        // strict: the cusp pieces are thinner than any fixed tolerance near their anchors
        let tol = 0.0;
        if q.norm() > 1.0 + tol {
            return Some(Piece::Exterior);
        }
        let mut idx = 0;
        if let Some(d) = &self.removed_disc {
            if (q - d.center).norm() < d.radius - tol {
                return Some(Piece::Removed(clusters[0]));
            }
            idx = 1;
        }
        for (k, c) in self.cusps.iter().enumerate() {
            if c.classify(q, tol) == Membership::Inside {
                return Some(Piece::Removed(clusters[idx + k]));
            }
        }
        None
    }
}

fn subtract_interval(iv: &mut Vec<(f64, f64)>, (a, b): (f64, f64)) {
    let mut out = Vec::with_capacity(iv.len() + 1);
    for &(x, y) in iv.iter() {
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
    *iv = out;
}

/// Classifies `z` against the domain with boundary tolerance `tol`.
pub fn domain_membership(dom: &DomainSpec, z: C64, tol: f64) -> Membership {
    dom.prepare().membership(z, tol)
}

/// `alpha` lies in the star set iff `1/alpha` is not a point of the domain.
pub fn star_membership(dom: &DomainSpec, alpha: ExtendedComplex) -> bool {
    match alpha.inv() {
        ExtendedComplex::Infinity => true,
        ExtendedComplex::Finite(q) => domain_membership(dom, q, 1e-14) != Membership::Inside,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub bridge_point: C64,
    pub orientation: C64,
    pub delta: f64,
    pub verified: bool,
    pub counterexample: Option<StripPoint>,
}

/// Seed points of the two star components meeting at `zeta`: the reflected
/// removed piece nearest to `conj(zeta)` and the disc component.
fn default_seeds(p: &PreparedDomain, zeta: C64) -> Option<(C64, C64)> {
    let target = zeta.conj();
    let mut best: Option<(f64, C64)> = None;
    if let Some(d) = &p.removed_disc {
        let far = d.center + d.radius * d.center.unscale(d.center.norm().max(1e-300));
        best = Some(((far - target).norm(), d.center));
    }
    for c in &p.cusps {
        let dist = (c.anchor - target).norm();
        if best.is_none_or(|(b, _)| dist < b) {
            let t_mid = 0.0;
            if let Some((lo, hi)) = c.interval_rel(t_mid) {
                let deep = C64::from_polar(radius_of_depth(0.5 * (lo + hi)), c.region.anchor_angle);
                best = Some((dist, deep));
            }
        }
    }
    best.map(|(_, q)| (1.0 / q, C64::new(0.0, 0.0)))
}

/// Samples `w +- omega C_delta` and checks they land in the two components of
/// the star interior that meet at `zeta`.
pub fn verify_bridge(dom: &DomainSpec, zeta: C64, omega: C64, delta: f64, grid: usize) -> Result<BridgeReport> {
    if grid == 0 {
        return Err(Error::Precondition("bridge grid must be positive".into()));
    }
    if (zeta.norm() - 1.0).abs() > 1e-12 || (omega.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition("bridge point and orientation must be unimodular".into()));
    }
    let cup = CupSpec::new(delta, 1.0);
    cup.validate()?;
    let p = dom.prepare();
    let clusters = p.piece_clusters();
    let (seed_a, seed_b) = default_seeds(&p, zeta)
        .ok_or_else(|| Error::AmbiguousComponent("domain has no removed piece to bridge to".into()))?;
    let comp_a = p
        .star_piece(ExtendedComplex::Finite(seed_a), &clusters)
        .ok_or_else(|| Error::AmbiguousComponent(format!("seed {seed_a} lies in no component")))?;
    let comp_b = p
        .star_piece(ExtendedComplex::Finite(seed_b), &clusters)
        .ok_or_else(|| Error::AmbiguousComponent(format!("seed {seed_b} lies in no component")))?;
    if comp_a == comp_b {
        return Err(Error::AmbiguousComponent("both seeds lie in the same component".into()));
    }
    let w = C64::new(zeta.arg(), 0.0);
    let top = cup.top();
    let shape = cup.shape();
    let mut report =
        BridgeReport { bridge_point: zeta, orientation: omega, delta, verified: true, counterexample: None };
    for i in 0..grid {
        let t = delta * (-1.0 + 2.0 * (i as f64 + 0.5) / grid as f64);
        let lo = shape.lower(t);
        for j in 0..grid {
            let y = lo + (top - lo) * (j as f64 + 0.5) / grid as f64;
            for (sign, comp) in [(1.0, comp_a), (-1.0, comp_b)] {
                let v = w + sign * omega * C64::new(t, y);
                let sp = StripPoint::new(v.re, v.im);
                let ok = sp.s.abs() < FRAC_PI_2 && p.star_piece(strip_to_plane(sp), &clusters) == Some(comp);
                if !ok {
                    report.verified = false;
                    report.counterexample = Some(sp);
                    return Ok(report);
                }
            }
        }
    }
    Ok(report)
}

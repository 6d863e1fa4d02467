//! Run configuration, pipelines behind each command, and SVG rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{eigen_classify, growth_check, w_bound_check, Verdict};
use crate::construct::{build_domain, check_nesting, verify_certificates, CuspSearch, StageCertificate, ZSpec};
use crate::dynamics::{mixing_witness, verify_witness, WitnessOptions};
use crate::funcspace::{check_membership, density_probe, norm_sq, RationalCombo, TaylorPoly};
use crate::geometry::{DomainSpec, PreparedDomain};
use crate::quadrature::{area, default_scales, Region};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Build,
    Eigen,
    Density,
    Mixing,
    Growth,
    Integrate,
    Render,
    Verify,
}

/// `Z` given inline or as a path to a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZSource {
    Inline(ZSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_file: Option<PathBuf>,
    /// Inline domain, used when no file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_spec: Option<ZSource>,
    /// Keys: `quad` (default 1e-8) and `verify` (default `quad / 10`).
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
}

/// Command parameters; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub stages: usize,
    pub r_schedule: Vec<f64>,
    /// Per-stage sup-error targets; defaults to half of `1/(n+1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_schedule: Option<Vec<f64>>,
    /// Angles of the points `lambda` classified by `eigen`.
    pub lambda_angles: Vec<f64>,
    pub density_alpha: C64,
    pub density_schedule: Vec<usize>,
    /// Degrees of the monomial targets of `density`.
    pub density_targets: Vec<usize>,
    /// Taylor coefficients of `f` and `g` for `mixing`.
    pub mixing_f: Vec<C64>,
    pub mixing_g: Vec<C64>,
    pub eps: f64,
    /// Pole `alpha` of `g = gamma_alpha` for `growth`.
    pub growth_alpha: C64,
    pub growth_r: f64,
    pub growth_kmax: u32,
    pub growth_grid: usize,
    /// Combination whose norm `integrate` reports besides the area.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integrand: Option<RationalCombo>,
    /// Certificates checked by `verify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificates_file: Option<PathBuf>,
    pub nesting_samples: usize,
    /// Index of the cusp shown in the zoom inset of the rendering.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zoom_cusp: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            stages: 3,
            r_schedule: vec![0.9, 0.48, 0.45],
            tol_schedule: None,
            lambda_angles: vec![0.0],
            density_alpha: C64::new(1.0, 0.0),
            density_schedule: vec![0, 5, 10, 20, 40],
            density_targets: vec![0, 1, 2, 3],
            mixing_f: vec![C64::new(1.0, 0.0)],
            mixing_g: vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            eps: 1e-2,
            growth_alpha: C64::new(0.5, 0.0),
            growth_r: 0.25,
            growth_kmax: 6,
            growth_grid: 9,
            integrand: None,
            certificates_file: None,
            nesting_samples: 10_000,
            zoom_cusp: None,
        }
    }
}

impl RunConfig {
    pub fn new(command: Command, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            domain_file: None,
            domain: None,
            z_spec: None,
            tolerances: BTreeMap::new(),
            output_dir: output_dir.into(),
            seed: 0,
            params: Params::default(),
        }
    }

    pub fn quad_tol(&self) -> f64 {
        self.tolerances.get("quad").copied().unwrap_or(1e-8)
    }

    pub fn verify_tol(&self) -> f64 {
        self.tolerances.get("verify").copied().unwrap_or(self.quad_tol() / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("tolerance {k} = {v} must be positive")));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("output_dir is empty".into()));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn load_domain(&self) -> Result<DomainSpec> {
        match (&self.domain_file, &self.domain) {
            (Some(p), _) => DomainSpec::from_json(&read(p)?),
            (None, Some(d)) => {
                d.validate()?;
                Ok(d.clone())
            }
            (None, None) => Err(Error::Config("the command needs domain_file or domain".into())),
        }
    }

    fn load_z(&self) -> Result<ZSpec> {
        match &self.z_spec {
            None => Ok(ZSpec::dyadic(8)),
            Some(ZSource::Inline(z)) => Ok(z.clone()),
            Some(ZSource::File(p)) => serde_json::from_str(&read(p)?).map_err(|e| Error::Config(e.to_string())),
        }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))
}

/// What a pipeline produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    /// One line per check.
    pub summary: Vec<String>,
    pub pass: bool,
    /// File name and contents, written in order.
    pub artifacts: Vec<(String, String)>,
}

impl Outcome {
    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        self.summary.push(format!("{} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref()));
        self.pass &= ok;
    }

    fn add(&mut self, name: &str, contents: String) {
        self.artifacts.push((name.to_string(), contents));
    }
}

/// Exit status for an error: configuration and precondition problems give 2,
/// everything else 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Runs the pipeline of `config.command` without touching the file system
/// beyond reading inputs.
pub fn execute(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let tol = config.quad_tol();
    let p = &config.params;
    let mut out = Outcome { pass: true, ..Default::default() };
    match config.command {
        Command::Build => {
            let z = config.load_z()?;
            let tols = p.tol_schedule.clone().unwrap_or_else(|| (0..p.stages).map(|n| 0.5 / (n + 1) as f64).collect());
            let search = CuspSearch { quad_tol: tol, ..CuspSearch::default() };
            let built = build_domain(&z, p.stages, &p.r_schedule, &tols, &search)?;
            for c in &built.certificates {
                out.check(
                    &format!("stage {}", c.n),
                    c.pass,
                    format!("sup error {:.3e}, collar integrals < {:.4}", c.sup_error, c.integral_bound),
                );
            }
            let v = verify_certificates(&built.domain, &built.certificates, config.verify_tol(), &search.runge)?;
            out.check("reverification", v.ok, v.mismatches.first().map_or("all inequalities hold", |s| s));
            let nested = check_nesting(&built.domain, p.stages, p.nesting_samples, config.seed)?;
            out.check("nesting", nested, format!("{} sampled points", p.nesting_samples));
            out.add("domain.json", built.domain.to_json()?);
            out.add("certificates.jsonl", certificates_jsonl(&built.certificates)?);
            out.add(
                "domain.svg",
                render_svg(&built.domain, &RenderOptions { zoom_cusp: p.zoom_cusp, ..Default::default() }),
            );
        }
        Command::Eigen => {
            let dom = config.load_domain()?;
            let mut results = Vec::new();
            for (i, &a) in p.lambda_angles.iter().enumerate() {
                let lambda = C64::from_polar(1.0, a);
                let mut c = eigen_classify(&dom, lambda, &default_scales(), tol)?;
                let name = format!("eigen_trace_{i}.csv");
                out.add(&name, c.evidence.to_csv());
                c.trace_path = Some(name);
                out.check(&format!("lambda angle {a}"), c.verdict != Verdict::Inconclusive, format!("{:?}", c.verdict));
                results.push(c);
            }
            out.add("eigen.json", serde_json::to_string_pretty(&results)?);
        }
        Command::Density => {
            let dom = config.load_domain()?;
            let alpha = p.density_alpha;
            let targets: Vec<RationalCombo> =
                p.density_targets.iter().map(|&d| TaylorPoly::monomial(d).to_combo()).collect();
            let report =
                density_probe(&dom, &|k| RationalCombo::gamma_k(alpha, k as u32), &targets, &p.density_schedule, tol)?;
            for (t, d) in p.density_targets.iter().enumerate() {
                let col = report.column(t);
                let ok = col.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
                out.check(
                    &format!("target z^{d}"),
                    ok,
                    format!("residuals {:?}", col.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>()),
                );
            }
            out.add("density.csv", report.to_csv());
        }
        Command::Mixing => {
            let dom = config.load_domain()?;
            let f = TaylorPoly::new(p.mixing_f.clone()).to_combo();
            let g = TaylorPoly::new(p.mixing_g.clone()).to_combo();
            let w = mixing_witness(&dom, &f, &g, p.eps, &WitnessOptions::default(), tol)?;
            let v = verify_witness(&dom, &w, &f, &g, config.verify_tol());
            out.check(
                "witness",
                v.ok,
                format!("n = {}, err_start {:.3e}, err_end {:.3e}", w.n, v.err_start, v.err_end),
            );
            out.add("witness.json", w.to_json()?);
        }
        Command::Growth => {
            let dom = config.load_domain()?;
            let g = RationalCombo::gamma(p.growth_alpha);
            check_membership(&g, &dom)?;
            let gr = growth_check(&g, &dom, p.growth_r, p.growth_kmax, p.growth_grid, tol)?;
            out.check("derivative growth", gr.pass, format!("fitted C {:.4e}", gr.fitted_c));
            let wb = w_bound_check(&dom, p.growth_r, p.growth_kmax.max(2), p.growth_grid, tol)?;
            out.check("W bound", wb.pass, format!("fitted C {:.4e}", wb.fitted_c));
            out.add("growth.csv", gr.to_csv());
            out.add("w_bound.csv", wb.to_csv());
        }
        Command::Integrate => {
            let dom = config.load_domain()?;
            let a = area(&Region::new(&dom), tol);
            out.check("area", a.converged, format!("{} (error {:.2e})", a.value, a.error_estimate));
            let mut report = serde_json::json!({ "area": a.value, "area_error": a.error_estimate });
            if let Some(f) = &p.integrand {
                check_membership(f, &dom)?;
                let q = norm_sq(f, &dom, tol);
                out.check("norm", q.converged, format!("{} (error {:.2e})", q.value, q.error_estimate));
                report["norm_sq"] = q.value.into();
                report["norm_sq_error"] = q.error_estimate.into();
            }
            out.add("integrate.json", serde_json::to_string_pretty(&report)?);
        }
        Command::Render => {
            let dom = config.load_domain()?;
            out.check("render", true, format!("{} cusps", dom.cusps.len()));
            out.add("domain.svg", render_svg(&dom, &RenderOptions { zoom_cusp: p.zoom_cusp, ..Default::default() }));
        }
        Command::Verify => {
            let dom = config.load_domain()?;
            let path = p
                .certificates_file
                .as_ref()
                .ok_or_else(|| Error::Config("verify needs params.certificates_file".into()))?;
            let certs = parse_certificates(&read(path)?)?;
            let v = verify_certificates(&dom, &certs, config.verify_tol(), &CuspSearch::default().runge)?;
            for m in &v.mismatches {
                out.summary.push(format!("mismatch: {m}"));
            }
            out.check("certificates", v.ok, format!("{} stages, {} mismatches", certs.len(), v.mismatches.len()));
            out.add("verify.json", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(out)
}

pub fn certificates_jsonl(certs: &[StageCertificate]) -> Result<String> {
    let mut s = String::new();
    for c in certs {
        s.push_str(&serde_json::to_string(c)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_certificates(s: &str) -> Result<Vec<StageCertificate>> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("bad certificate line: {e}"))))
        .collect()
}

/// Runs a command and writes its artifacts. Returns the exit status; a
/// `FAILED` marker is left next to partial artifacts on nonzero status.
pub fn run(config: &RunConfig, quiet: bool) -> i32 {
    let dir = &config.output_dir;
    let result = execute(config);
    let (code, outcome, message) = match result {
        Ok(o) => (if o.pass { 0 } else { 1 }, Some(o), None),
        Err(e) => (exit_code(&e), None, Some(e.to_string())),
    };
    if let Err(e) = fs::create_dir_all(dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return 2;
    }
    let _ = fs::remove_file(dir.join("FAILED"));
    if let Some(o) = &outcome {
        for (name, contents) in &o.artifacts {
            if let Err(e) = fs::write(dir.join(name), contents) {
                eprintln!("cannot write {name}: {e}");
                return 2;
            }
        }
        if !quiet {
            for l in &o.summary {
                println!("{l}");
            }
        }
    }
    if code != 0 {
        let text = message.clone().unwrap_or_else(|| {
            outcome
                .map(|o| o.summary.into_iter().filter(|l| !l.starts_with("PASS")).collect::<Vec<_>>().join("\n"))
                .unwrap_or_default()
        });
        let _ = fs::write(dir.join("FAILED"), format!("{text}\n"));
        if let Some(m) = message {
            eprintln!("error: {m}");
        }
    }
    code
}

#[derive(Debug, Parser)]
#[command(name = "cuspshift", about = "Backward shift on Bergman spaces of cusped domains")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub command: Option<Command>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

impl Cli {
    /// Merges the flags into the configuration file, if any.
    pub fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => {
                let cmd =
                    self.command.ok_or_else(|| Error::Config("either --config or --command is required".into()))?;
                RunConfig::new(cmd, self.out.clone().unwrap_or_else(|| PathBuf::from("out")))
            }
        };
        if let Some(c) = self.command {
            cfg.command = c;
        }
        if let Some(o) = self.out {
            cfg.output_dir = o;
        }
        if let Some(t) = self.tol {
            cfg.tolerances.insert("quad".into(), t);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.stages {
            cfg.params.stages = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub size: f64,
    pub zoom_cusp: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { size: 800.0, zoom_cusp: None }
    }
}

/// Deterministic SVG of the domain: unit circle, removed pieces shaded,
/// anchors ticked and labelled by angle, optional zoom inset on one cusp.
pub fn render_svg(dom: &DomainSpec, opts: &RenderOptions) -> String {
    let s = opts.size;
    let scale = 0.42 * s;
    let (cx, cy) = (s / 2.0, s / 2.0);
    let px = |z: C64| (cx + scale * z.re, cy - scale * z.im);
    let prepared = PreparedDomain::new(dom);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s:.0}" height="{s:.0}" viewBox="0 0 {s:.0} {s:.0}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<circle cx="{cx:.3}" cy="{cy:.3}" r="{scale:.3}" fill="none" stroke="#000" stroke-width="1.5"/>"##
    );
    if let Some(d) = &prepared.removed_disc {
        let (x, y) = px(d.center);
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}" fill="#9ab" stroke="#345" stroke-width="1"/>"##,
            scale * d.radius
        );
    }
    for c in &prepared.cusps {
        let pts = polyline(&c.hull_polygon(), &px);
        let _ = writeln!(
            svg,
            r##"<polygon points="{pts}" fill="#9ab" fill-opacity="0.7" stroke="#345" stroke-width="0.5"/>"##
        );
    }
    for c in &prepared.cusps {
        let a = c.region.anchor_angle;
        let (x0, y0) = px(C64::from_polar(1.0, a));
        let (x1, y1) = px(C64::from_polar(1.06, a));
        let (xl, yl) = px(C64::from_polar(1.12, a));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y1:.3}" stroke="#c00" stroke-width="1"/>"##
        );
        let _ = writeln!(
            svg,
            r##"<text x="{xl:.3}" y="{yl:.3}" font-size="10" text-anchor="middle" fill="#c00">{:.6}</text>"##,
            a
        );
    }
    if let Some(i) = opts.zoom_cusp {
        if let Some(c) = prepared.cusps.get(i) {
            let hull = c.hull_polygon();
            let (mut lo, mut hi) =
                (C64::new(f64::INFINITY, f64::INFINITY), C64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
            for z in &hull {
                lo = C64::new(lo.re.min(z.re), lo.im.min(z.im));
                hi = C64::new(hi.re.max(z.re), hi.im.max(z.im));
            }
            let box_size = 0.3 * s;
            let span = (hi.re - lo.re).max(hi.im - lo.im).max(1e-12);
            let zpx = |z: C64| {
                (s - box_size - 10.0 + box_size * (z.re - lo.re) / span, 10.0 + box_size * (hi.im - z.im) / span)
            };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.3}" y="10" width="{box_size:.3}" height="{box_size:.3}" fill="white" stroke="#000"/>"##,
                s - box_size - 10.0
            );
            let circle: Vec<C64> = (0..=256)
                .map(|k| C64::from_polar(1.0, c.region.anchor_angle - c.t_extent + 2.0 * c.t_extent * k as f64 / 256.0))
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#000" stroke-width="0.8"/>"##,
                polyline(&circle, &zpx)
            );
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#345" stroke-width="0.8"/>"##,
                polyline(&hull, &zpx)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn polyline(pts: &[C64], px: &dyn Fn(C64) -> (f64, f64)) -> String {
    let mut s = String::new();
    for (i, &z) in pts.iter().enumerate() {
        let (x, y) = px(z);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.3},{:.3}", x, y);
    }
    s
}

//! The subcommands. Each one writes its outputs plus `config.txt` into the output
//! directory and returns the paths it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use torrey_core::basis::{GeometryKind, OperatorMatrices};
use torrey_core::io::{fmt_f64, write_csv};
use torrey_core::jordan::{self, JordanOptions};
use torrey_core::operator::{self, EigenOptions, Magnetization};
use torrey_core::registry;
use torrey_core::scanner::{self, Cell, ChiPolicy, ScanConfig, ScanReport};
use torrey_core::toy2x2;
use torrey_core::tracking::{track, GPath, TrackOptions};
use torrey_core::{Error, Result, C64};

use crate::config::{Chi, RunConfig, Truncation};

pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
    written: Vec<PathBuf>,
}

impl Run {
    pub fn new(config: RunConfig, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Run {
            config,
            out: out.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let echo = self.config.canonical();
        let mut w = self.create("config.txt")?;
        w.write_all(echo.as_bytes())?;
        w.flush()?;
        Ok(self.written)
    }

    fn build(&mut self, probe_gs: &[C64]) -> Result<OperatorMatrices> {
        let builder = registry::geometries().get(&self.config.geometry)?;
        let import = self.config.import_path.clone();
        let size = self.config.size;
        let build = |n: usize| builder.build(size, n, import.as_deref());
        let n = match self.config.truncation {
            _ if builder.default_truncation() == 0 => 0,
            None => builder.default_truncation(),
            Some(Truncation::Fixed(n)) => n,
            Some(Truncation::Auto) => {
                let base = (builder.default_truncation() / 2).max(self.config.sheets + 2);
                let n = operator::resolve_truncation(build, base, probe_gs, self.config.sheets, self.config.trust_tol, 4)?;
                self.config.resolved_truncation = Some(n);
                n
            }
        };
        let mats = build(n)?;
        if self.config.sheets > mats.size() {
            return Err(Error::Validation(format!(
                "{} sheets requested but the truncation is {}",
                self.config.sheets,
                mats.size()
            )));
        }
        Ok(mats)
    }

    /// Doubled-truncation companion used to decide which sheets are trusted.
    fn doubled(&self, mats: &OperatorMatrices) -> Result<Option<OperatorMatrices>> {
        if mats.geometry.kind == GeometryKind::Imported {
            return Ok(None);
        }
        let builder = registry::geometries().get(&self.config.geometry)?;
        builder.build(self.config.size, 2 * mats.size(), None).map(Some)
    }

    fn point(&self) -> C64 {
        C64::new(self.config.g_re, self.config.g_im)
    }

    fn region(&self) -> Result<Cell> {
        let c = &self.config;
        Cell::new(C64::new(c.re_min, c.im_min), C64::new(c.re_max, c.im_max))
    }

    fn scan_config(&self) -> Result<ScanConfig> {
        let c = &self.config;
        let mut config = ScanConfig::new(self.region()?, c.epsilon, c.sheets);
        config.contour_shape = registry::contour_shapes().get(&c.contour)?;
        config.chi = match c.chi {
            Chi::Adaptive => ChiPolicy::default(),
            Chi::Fixed(x) => ChiPolicy::Fixed(x),
        };
        config.samples_per_contour = c.samples;
        config.max_depth = c.max_depth;
        config.validate()?;
        Ok(config)
    }
}

fn sweep_points(c: &RunConfig) -> Vec<C64> {
    match c.g_points {
        0 => Vec::new(),
        1 => vec![C64::new(c.g_min, c.g_im)],
        n => (0..n)
            .map(|k| C64::new(c.g_min + (c.g_max - c.g_min) * k as f64 / (n - 1) as f64, c.g_im))
            .collect(),
    }
}

/// Spatial sample points: a line across the interval, a square grid clipped to the disk.
fn spatial_points(mats: &OperatorMatrices, n: usize) -> Result<Vec<[f64; 2]>> {
    let l = mats.geometry.size;
    let axis = |k: usize| if n <= 1 { 0.0 } else { -0.5 * l + l * k as f64 / (n - 1) as f64 };
    match mats.geometry.kind {
        GeometryKind::Interval => Ok((0..n).map(|k| [axis(k), 0.0]).collect()),
        GeometryKind::Disk => {
            let r2 = 0.25 * l * l;
            Ok((0..n)
                .flat_map(|j| (0..n).map(move |i| [axis(i), axis(j)]))
                .filter(|p| p[0] * p[0] + p[1] * p[1] <= r2)
                .collect())
        }
        GeometryKind::Imported => Err(Error::Unsupported("imported matrices carry no spatial basis".into())),
    }
}

fn mode_rows(mats: &OperatorMatrices, g: C64, sheets: usize, points: &[[f64; 2]]) -> Result<Vec<Vec<String>>> {
    let solve = operator::eigensolve(mats, g, &EigenOptions::default())?;
    let mut rows = Vec::new();
    for n in 0..sheets {
        let values = operator::evaluate_mode(mats, &solve, n, points)?;
        for (p, v) in points.iter().zip(values) {
            rows.push(vec![
                fmt_f64(g.re),
                fmt_f64(g.im),
                (n + 1).to_string(),
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                fmt_f64(v.re),
                fmt_f64(v.im),
            ]);
        }
    }
    Ok(rows)
}

const MODES_HEADER: &str = "g_re,g_im,sheet,x,y,value_re,value_im";

/// Eigenvalues along a real-g sweep, with residuals, plus optional mode snapshots.
pub fn cmd_spectrum(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let gs = sweep_points(&run.config);
    let mats = run.build(&gs)?;
    let fine = run.doubled(&mats)?;
    let sheets = run.config.sheets;
    let tol = run.config.trust_tol;
    let solves: Vec<_> = gs
        .par_iter()
        .map(|&g| {
            let solve = operator::eigensolve(&mats, g, &EigenOptions::default())?;
            let trusted = match &fine {
                Some(fine) => operator::trusted_sheet_count(&solve.eigenvalues, &operator::eigenvalues(fine, g)?, tol),
                None => usize::MAX,
            };
            Ok((solve, trusted))
        })
        .collect::<Result<_>>()?;

    let untrusted: Vec<C64> = gs
        .iter()
        .zip(&solves)
        .filter(|(_, (_, trusted))| *trusted < sheets)
        .map(|(g, _)| *g)
        .collect();
    if let Some(first) = untrusted.first() {
        let builder = registry::geometries().get(&run.config.geometry)?;
        let size = run.config.size;
        let needed = operator::resolve_truncation(|n| builder.build(size, n, None), mats.size(), &untrusted, sheets, tol, 4);
        let advice = match needed {
            Ok(n) => format!("rerun with --truncation {n}"),
            Err(_) => format!("even truncation {} is not enough", mats.size() << 4),
        };
        return Err(Error::Validation(format!(
            "{sheets} sheets are not trusted at g = {first} with truncation {}; {advice}",
            mats.size()
        )));
    }

    let rows = gs.iter().zip(&solves).flat_map(|(g, (solve, _))| {
        (0..sheets).map(move |n| {
            let l = solve.eigenvalues[n];
            vec![
                fmt_f64(g.re),
                fmt_f64(g.im),
                (n + 1).to_string(),
                fmt_f64(l.re),
                fmt_f64(l.im),
                fmt_f64(solve.residuals[n]),
            ]
        })
    });
    let w = run.create("spectrum.csv")?;
    write_csv(w, "g_re,g_im,sheet,lambda_re,lambda_im,residual", rows)?;

    if !run.config.snapshots.is_empty() {
        let points = spatial_points(&mats, run.config.grid_points)?;
        let mut rows = Vec::new();
        for &g in &run.config.snapshots {
            rows.extend(mode_rows(&mats, C64::new(g, run.config.g_im), sheets, &points)?);
        }
        let w = run.create("modes.csv")?;
        write_csv(w, MODES_HEADER, rows)?;
    }
    run.finish()
}

/// The first `sheets` modes at `g_re + i g_im` sampled in space.
pub fn cmd_modes(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let g = run.point();
    let mats = run.build(&[g])?;
    let points = spatial_points(&mats, run.config.grid_points)?;
    let rows = mode_rows(&mats, g, run.config.sheets, &points)?;
    let w = run.create("modes.csv")?;
    write_csv(w, MODES_HEADER, rows)?;
    run.finish()
}

/// Coefficients of the uniform initial magnetization at each requested time.
pub fn cmd_evolve(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let g = run.point();
    let mats = run.build(&[g])?;
    let solve = operator::eigensolve(&mats, g, &EigenOptions::default())?;
    let m0 = Magnetization::uniform(&mats);
    let mut rows = Vec::new();
    for &t in &run.config.times {
        let m = operator::evolve_with(&solve, &m0, t).map_err(|e| match e {
            Error::DefectiveSpectrum { g, modes } => Error::Validation(format!(
                "g = {g} is at a branch point (modes {modes:?} are nearly self-orthogonal); \
                 use `torrey jordan` for the evolution there"
            )),
            other => other,
        })?;
        for (k, a) in m.coefficients.iter().enumerate() {
            rows.push(vec![fmt_f64(t), (k + 1).to_string(), fmt_f64(a.re), fmt_f64(a.im)]);
        }
    }
    let w = run.create("evolve.csv")?;
    write_csv(w, "t,mode,coef_re,coef_im", rows)?;
    run.finish()
}

fn region_corners(run: &Run) -> Vec<C64> {
    let c = &run.config;
    vec![
        C64::new(c.re_min, c.im_min),
        C64::new(c.re_max, c.im_min),
        C64::new(c.re_max, c.im_max),
        C64::new(c.re_min, c.im_max),
    ]
}

fn write_points(run: &mut Run, name: &str, report: &ScanReport) -> Result<()> {
    let w = run.create(name)?;
    scanner::write_jsonl(w, report)?;
    Ok(())
}

/// Branch-point search over the configured region.
pub fn cmd_scan(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let scan_config = run.scan_config()?;
    let mats = run.build(&region_corners(&run))?;
    let report = scanner::scan(&mats, &scan_config)?;
    write_points(&mut run, "branch_points.jsonl", &report)?;
    let summary = json!({
        "branch_points": report.branch_points.len(),
        "unresolved": report.unresolved.len(),
        "contours_evaluated": report.contours_evaluated,
        "truncation": mats.size(),
    });
    let mut w = run.create("scan_summary.json")?;
    writeln!(w, "{summary}")?;
    w.flush()?;
    run.finish()
}

fn read_points(run: &Run, default: &[&str]) -> Result<Vec<scanner::BranchPoint>> {
    let path = match &run.config.input {
        Some(p) => p.clone(),
        None => default
            .iter()
            .map(|name| run.out.join(name))
            .find(|p| p.exists())
            .ok_or_else(|| Error::Validation(format!("no `input` given and none of {default:?} in the output directory")))?,
    };
    scanner::read_jsonl(&fs::read_to_string(&path)?)
}

/// Shrinks every branch point of the input file to the resolution `target`.
pub fn cmd_refine(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let points = read_points(&run, &["branch_points.jsonl"])?;
    let scan_config = run.scan_config()?;
    let gs: Vec<C64> = points.iter().map(|p| p.g0).collect();
    let mats = run.build(&gs)?;
    let refined = points
        .iter()
        .map(|bp| scanner::refine(&mats, bp, run.config.target, &scan_config))
        .collect::<Result<Vec<_>>>()?;
    let report = ScanReport {
        branch_points: refined,
        ..ScanReport::default()
    };
    write_points(&mut run, "refined.jsonl", &report)?;
    run.finish()
}

/// Jordan data and collapse/regularity diagnostics for every input branch point.
pub fn cmd_jordan(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let points = read_points(&run, &["refined.jsonl", "branch_points.jsonl"])?;
    let gs: Vec<C64> = points.iter().map(|p| p.g0).collect();
    let mats = run.build(&gs)?;
    let direction = C64::new(1.0, 0.0);
    for (k, bp) in points.iter().enumerate() {
        let jd = jordan::extract(&mats, bp, &JordanOptions::default())?;
        let mut w = run.create(&format!("jordan_{}.json", k + 1))?;
        writeln!(w, "{}", jd.to_json())?;
        w.flush()?;

        let mut rows = jordan::collapse_diagnostics(&mats, bp, &run.config.offsets, direction)?;
        let mut constant = vec![C64::new(0.0, 0.0); mats.size()];
        constant[0] = C64::new(1.0, 0.0);
        rows.extend(jordan::check_decomposition_regularity(&mats, &jd, &constant, &run.config.offsets, direction)?);
        let w = run.create(&format!("jordan_diagnostics_{}.csv", k + 1))?;
        jordan::write_diagnostics(w, &rows)?;
    }
    run.finish()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Diffusion coefficient, m²/s.
    pub diffusion: f64,
    /// Gyromagnetic ratio, 1/(T s).
    pub gamma: f64,
    /// Domain size, m.
    pub length: f64,
    /// Dimensionless branch-point constant `g_c L³`.
    pub eta: f64,
}

impl PhysicalParams {
    pub fn from_config(c: &RunConfig) -> Result<Self> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Validation(format!("gc needs `{key}`")));
        Ok(PhysicalParams {
            diffusion: need(c.diffusion, "diffusion")?,
            gamma: need(c.gamma, "gamma")?,
            length: need(c.length, "length")?,
            eta: need(c.eta, "eta")?,
        })
    }
}

/// Critical gradient `η D / (γ L³)` in T/m.
pub fn critical_gradient(p: &PhysicalParams) -> f64 {
    p.eta * p.diffusion / (p.gamma * p.length.powi(3))
}

/// Critical gradient from the physical parameters, printed and written to `gc.json`.
pub fn cmd_gc(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let params = PhysicalParams::from_config(&run.config)?;
    let g = critical_gradient(&params);
    println!("G_c = {} T/m = {} mT/m", fmt_f64(g), fmt_f64(1e3 * g));
    let record = json!({
        "diffusion": params.diffusion,
        "gamma": params.gamma,
        "length": params.length,
        "eta": params.eta,
        "gc_t_per_m": g,
        "gc_mt_per_m": 1e3 * g,
    });
    let mut w = run.create("gc.json")?;
    writeln!(w, "{record}")?;
    w.flush()?;
    run.finish()
}

/// Sheet values of a toy model on the region grid, and the permutation after
/// `turns` turns of a circle around `g_re + i g_im`.
pub fn cmd_toy(config: RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(config, out)?;
    let model = registry::sheet_models().get(&run.config.model)?;
    let c = &run.config;
    let rows = toy2x2::sheet_grid(
        model.as_ref(),
        C64::new(c.re_min, c.im_min),
        C64::new(c.re_max, c.im_max),
        c.grid_points,
        c.grid_points,
    );
    let w = run.create("sheets.csv")?;
    toy2x2::write_sheet_grid(w, &rows)?;

    let c = &run.config;
    if c.turns == 0 {
        return Err(Error::Validation("turns must be positive".into()));
    }
    let per_turn = 64;
    let center = C64::new(c.g_re, c.g_im);
    let mut samples: Vec<C64> = (0..c.turns * per_turn)
        .map(|k| center + C64::from_polar(c.loop_radius, std::f64::consts::TAU * k as f64 / per_turn as f64))
        .collect();
    samples.push(samples[0]);
    let family = toy2x2::SheetFamily(model.as_ref());
    let n = model.sheets(center).len();
    let tracked = track(&family, &GPath::new(samples, true)?, n, &TrackOptions::default())?;
    let record = json!({
        "model": model.name(),
        "turns": c.turns,
        "permutation": tracked.permutation.iter().map(|p| p + 1).collect::<Vec<_>>(),
        "cycles": tracked.cycles().iter().map(|cy| cy.iter().map(|p| p + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    let mut w = run.create("monodromy.json")?;
    writeln!(w, "{record}")?;
    w.flush()?;
    run.finish()
}

//! Branch-point search by recursive subdivision of contours in the complex g-plane.
//!
//! A cell is split when one of its tracked sheets has a contour integral above the
//! threshold or when the sheets do not return to themselves. Cells are split at
//! [`SPLIT_FRACTION`] of their width and height rather than at the midpoint, so cell
//! edges do not fall on the real or imaginary axis, where branch points and exact
//! degeneracies of symmetric domains sit.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::operator::{BlockSpectrum, SpectralFamily, C64};
use crate::tracking::{contour_integral, track, CachedFamily, GPath, TrackOptions, TrackedPath};

pub const SPLIT_FRACTION: f64 = 0.5126;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub lo: C64,
    pub hi: C64,
}

impl Cell {
    pub fn new(lo: C64, hi: C64) -> Result<Self> {
        if !(hi.re > lo.re && hi.im > lo.im) {
            return Err(Error::Validation(format!("degenerate region {lo} .. {hi}")));
        }
        Ok(Cell { lo, hi })
    }

    pub fn square(center: C64, side: f64) -> Self {
        let h = C64::new(0.5 * side, 0.5 * side);
        Cell {
            lo: center - h,
            hi: center + h,
        }
    }

    pub fn center(&self) -> C64 {
        (self.lo + self.hi) * 0.5
    }

    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    pub fn width(&self) -> f64 {
        self.hi.re - self.lo.re
    }

    pub fn height(&self) -> f64 {
        self.hi.im - self.lo.im
    }

    pub fn contains(&self, g: C64) -> bool {
        g.re >= self.lo.re && g.re <= self.hi.re && g.im >= self.lo.im && g.im <= self.hi.im
    }

    /// Four children, lower-left first, counterclockwise.
    pub fn split(&self) -> [Cell; 4] {
        let x = self.lo.re + SPLIT_FRACTION * self.width();
        let y = self.lo.im + SPLIT_FRACTION * self.height();
        let (x0, x1, y0, y1) = (self.lo.re, self.hi.re, self.lo.im, self.hi.im);
        [
            Cell { lo: C64::new(x0, y0), hi: C64::new(x, y) },
            Cell { lo: C64::new(x, y0), hi: C64::new(x1, y) },
            Cell { lo: C64::new(x, y), hi: C64::new(x1, y1) },
            Cell { lo: C64::new(x0, y), hi: C64::new(x, y1) },
        ]
    }
}

/// How a cell is turned into a closed contour.
pub trait ContourShape: Send + Sync {
    fn name(&self) -> &'static str;
    fn contour(&self, cell: &Cell, samples: usize) -> GPath;
}

/// The cell boundary itself; cells tile the region exactly.
pub struct SquareContour;

impl ContourShape for SquareContour {
    fn name(&self) -> &'static str {
        "square"
    }

    fn contour(&self, cell: &Cell, samples: usize) -> GPath {
        GPath::rectangle(cell.lo, cell.hi, (samples / 4).max(1))
    }
}

/// The circumscribed circle of the cell; neighbouring circles overlap.
pub struct CircleContour;

impl ContourShape for CircleContour {
    fn name(&self) -> &'static str {
        "circle"
    }

    fn contour(&self, cell: &Cell, samples: usize) -> GPath {
        GPath::circle(cell.center(), 0.5 * cell.diameter(), samples)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChiPolicy {
    /// `max(error_factor × Richardson error, floor × perimeter × median |λ|)`.
    Adaptive { error_factor: f64, floor: f64 },
    Fixed(f64),
}

impl Default for ChiPolicy {
    fn default() -> Self {
        ChiPolicy::Adaptive {
            error_factor: 3.0,
            floor: 1e-6,
        }
    }
}

impl ChiPolicy {
    pub fn threshold(&self, estimated_error: f64, perimeter: f64, median_abs: f64) -> f64 {
        match *self {
            ChiPolicy::Adaptive { error_factor, floor } => {
                (error_factor * estimated_error).max(floor * perimeter * median_abs)
            }
            ChiPolicy::Fixed(chi) => chi,
        }
    }
}

#[derive(Clone)]
pub struct ScanConfig {
    pub region: Cell,
    pub contour_shape: Arc<dyn ContourShape>,
    pub chi: ChiPolicy,
    pub epsilon: f64,
    pub n_sheets: usize,
    pub samples_per_contour: usize,
    pub max_depth: usize,
    pub track: TrackOptions,
}

impl ScanConfig {
    pub fn new(region: Cell, epsilon: f64, n_sheets: usize) -> Self {
        ScanConfig {
            region,
            contour_shape: Arc::new(SquareContour),
            chi: ChiPolicy::default(),
            epsilon,
            n_sheets,
            samples_per_contour: 64,
            max_depth: 40,
            track: TrackOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Validation("epsilon must be positive".into()));
        }
        if !(self.region.width() > 0.0 && self.region.height() > 0.0) {
            return Err(Error::Validation("scan region is degenerate".into()));
        }
        if self.samples_per_contour < 16 {
            return Err(Error::Validation("samples_per_contour must be at least 16".into()));
        }
        if self.n_sheets == 0 {
            return Err(Error::Validation("n_sheets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchPoint {
    pub g0: C64,
    pub resolution: f64,
    /// 0-based sheet labels at the start of the enclosing contour.
    pub sheet_pair: (usize, usize),
    pub max_integral: f64,
    pub monodromy_confirmed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnresolvedRegion {
    pub cell: Cell,
    pub max_integral: f64,
    pub chi: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct ScanReport {
    pub branch_points: Vec<BranchPoint>,
    pub unresolved: Vec<UnresolvedRegion>,
    pub contours_evaluated: usize,
}

/// Outcome of one contour of the search.
#[derive(Clone, Debug)]
pub struct ContourEvaluation {
    pub cell: Cell,
    pub tracked: Option<TrackedPath>,
    pub max_integral: f64,
    pub estimated_error: f64,
    pub chi: f64,
    pub monodromy: bool,
    /// Set when sheet matching stayed ambiguous at the maximal bisection depth.
    pub ambiguity: Option<C64>,
}

impl ContourEvaluation {
    pub fn triggered(&self) -> bool {
        self.monodromy || self.ambiguity.is_some() || self.max_integral > self.chi
    }

    /// Sheet pairs of every cycle that moves a reported sheet: an m-cycle
    /// contributes its m - 1 consecutive pairs.
    pub fn sheet_pairs(&self) -> Vec<(usize, usize)> {
        let Some(t) = &self.tracked else {
            return Vec::new();
        };
        let mut pairs = Vec::new();
        for cycle in t.cycles() {
            if cycle.iter().all(|&k| k >= t.n_sheets) {
                continue;
            }
            let leaked_here: Vec<(usize, usize)> =
                t.leaked.iter().copied().filter(|(k, _)| cycle.contains(k)).collect();
            if !leaked_here.is_empty() {
                pairs.extend(leaked_here);
                continue;
            }
            for w in cycle.windows(2) {
                pairs.push((w[0].min(w[1]), w[0].max(w[1])));
            }
        }
        pairs
    }
}

pub fn evaluate_contour(family: &dyn SpectralFamily, cell: &Cell, config: &ScanConfig) -> Result<ContourEvaluation> {
    let path = config.contour_shape.contour(cell, config.samples_per_contour);
    let tracked = match track(family, &path, config.n_sheets, &config.track) {
        Ok(t) => t,
        Err(Error::TrackingAmbiguity { g, .. }) => {
            return Ok(ContourEvaluation {
                cell: *cell,
                tracked: None,
                max_integral: f64::INFINITY,
                estimated_error: f64::INFINITY,
                chi: 0.0,
                monodromy: false,
                ambiguity: Some(g),
            })
        }
        Err(e) => return Err(e),
    };
    let integral = contour_integral(&tracked)?;
    let reported = tracked.n_sheets;
    let max_integral = integral.integrals[..reported]
        .iter()
        .fold(0.0f64, |a, v| a.max(v.norm()));
    let mut magnitudes: Vec<f64> = tracked
        .sheets
        .iter()
        .flat_map(|s| s[..reported].iter().map(|v| v.norm()))
        .collect();
    magnitudes.sort_by(f64::total_cmp);
    let median = magnitudes[magnitudes.len() / 2];
    let chi = config.chi.threshold(integral.estimated_error, tracked.path.length(), median);
    let monodromy = tracked.moves_reported_sheets();
    Ok(ContourEvaluation {
        cell: *cell,
        tracked: Some(tracked),
        max_integral,
        estimated_error: integral.estimated_error,
        chi,
        monodromy,
        ambiguity: None,
    })
}

/// Recursive quadtree search over `config.region`. Each level is evaluated in parallel
/// and merged in cell order, so the result does not depend on the worker count.
pub fn scan(family: &dyn SpectralFamily, config: &ScanConfig) -> Result<ScanReport> {
    config.validate()?;
    let cached = CachedFamily::new(family);
    let mut report = ScanReport::default();
    let mut found: Vec<(usize, BranchPoint)> = Vec::new();
    let mut level = vec![(config.region, 0usize)];
    let mut cell_id = 0usize;
    while !level.is_empty() {
        let evaluations = level
            .par_iter()
            .map(|(cell, _)| evaluate_contour(&cached, cell, config))
            .collect::<Result<Vec<_>>>()?;
        cached.clear();
        report.contours_evaluated += level.len();
        let mut next = Vec::new();
        for ((cell, depth), ev) in level.iter().zip(evaluations) {
            if !ev.triggered() {
                continue;
            }
            if cell.diameter() <= config.epsilon {
                if ev.monodromy {
                    for pair in ev.sheet_pairs() {
                        found.push((
                            cell_id,
                            BranchPoint {
                                g0: cell.center(),
                                resolution: cell.diameter(),
                                sheet_pair: pair,
                                max_integral: ev.max_integral,
                                monodromy_confirmed: true,
                            },
                        ));
                    }
                    cell_id += 1;
                } else {
                    let reason = if ev.ambiguity.is_some() {
                        "sheet matching ambiguous at maximal bisection depth"
                    } else {
                        "contour integral above threshold without monodromy"
                    };
                    report.unresolved.push(UnresolvedRegion {
                        cell: *cell,
                        max_integral: ev.max_integral,
                        chi: ev.chi,
                        reason: reason.into(),
                    });
                }
            } else if *depth >= config.max_depth {
                report.unresolved.push(UnresolvedRegion {
                    cell: *cell,
                    max_integral: ev.max_integral,
                    chi: ev.chi,
                    reason: "maximal subdivision depth reached".into(),
                });
            } else {
                next.extend(cell.split().into_iter().map(|c| (c, depth + 1)));
            }
        }
        level = next;
    }
    report.branch_points = deduplicate(found, 2.0 * config.epsilon);
    report.unresolved.sort_by(|a, b| {
        a.cell.lo.re
            .total_cmp(&b.cell.lo.re)
            .then(a.cell.lo.im.total_cmp(&b.cell.lo.im))
    });
    Ok(report)
}

/// Merges points from different cells closer than `radius`, keeping the one with the
/// larger integral. Points from the same cell (several sheet pairs) are all kept.
fn deduplicate(mut found: Vec<(usize, BranchPoint)>, radius: f64) -> Vec<BranchPoint> {
    found.sort_by(|a, b| b.1.max_integral.total_cmp(&a.1.max_integral).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, BranchPoint)> = Vec::new();
    for (id, bp) in found {
        let duplicate = kept
            .iter()
            .any(|(kid, k)| *kid != id && (k.g0 - bp.g0).norm() <= radius);
        if !duplicate {
            kept.push((id, bp));
        }
    }
    let mut points: Vec<BranchPoint> = kept.into_iter().map(|(_, bp)| bp).collect();
    points.sort_by(|a, b| {
        a.g0.re
            .total_cmp(&b.g0.re)
            .then(a.g0.im.total_cmp(&b.g0.im))
            .then(a.sheet_pair.cmp(&b.sheet_pair))
    });
    points
}

/// Subdivides around `bp` until the enclosing cell has diameter at most `target_eps`,
/// then confirms the monodromy on the circumscribed circle of the final cell.
pub fn refine(family: &dyn SpectralFamily, bp: &BranchPoint, target_eps: f64, config: &ScanConfig) -> Result<BranchPoint> {
    if target_eps >= bp.resolution {
        return Ok(bp.clone());
    }
    let cached = CachedFamily::new(family);
    let mut cell = Cell::square(bp.g0, bp.resolution);
    let mut last: Option<ContourEvaluation> = None;
    while cell.diameter() > target_eps {
        let children = cell.split();
        let evaluations = children
            .par_iter()
            .map(|c| evaluate_contour(&cached, c, config))
            .collect::<Result<Vec<_>>>()?;
        cached.clear();
        let best = evaluations
            .into_iter()
            .filter(|e| e.monodromy)
            .max_by(|a, b| a.max_integral.total_cmp(&b.max_integral));
        match best {
            Some(e) => {
                cell = e.cell;
                last = Some(e);
            }
            None => return Err(Error::RefinementInconsistency { g: cell.center() }),
        }
    }
    let last = last.expect("at least one subdivision");
    let circle = GPath::circle(cell.center(), 0.525 * cell.diameter(), config.samples_per_contour);
    let confirmed = track(&cached, &circle, config.n_sheets, &config.track)
        .map(|t| t.moves_reported_sheets())
        .unwrap_or(false);
    let sheet_pair = last.sheet_pairs().first().copied().unwrap_or(bp.sheet_pair);
    Ok(BranchPoint {
        g0: cell.center(),
        resolution: cell.diameter(),
        sheet_pair,
        max_integral: last.max_integral,
        monodromy_confirmed: confirmed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryCheck {
    pub map: &'static str,
    pub max_unmatched: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryReport {
    pub checks: Vec<SymmetryCheck>,
}

impl SymmetryReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, map: &str) -> Option<&SymmetryCheck> {
        self.checks.iter().find(|c| c.map == map)
    }
}

/// Largest distance from an image point to the nearest point of the set, for
/// `g -> -g*` and, on parity-symmetric domains, `g -> g*`.
pub fn check_symmetry(points: &[BranchPoint], parity_symmetric: bool, tol: f64) -> SymmetryReport {
    let unmatched = |map: fn(C64) -> C64| {
        points
            .iter()
            .map(|p| {
                let image = map(p.g0);
                points
                    .iter()
                    .map(|q| (q.g0 - image).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    let mut maps: Vec<(&'static str, fn(C64) -> C64)> = vec![("-conj", |g: C64| -g.conj())];
    if parity_symmetric {
        maps.push(("conj", |g: C64| g.conj()));
    }
    SymmetryReport {
        checks: maps
            .into_iter()
            .map(|(name, map)| {
                let d = unmatched(map);
                SymmetryCheck {
                    map: name,
                    max_unmatched: d,
                    pass: d <= tol,
                }
            })
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Unit direction of the sampling ray from g0.
    pub direction: C64,
    pub points: usize,
    /// Inner and outer radius of the annulus, in units of the resolution.
    pub inner: f64,
    pub outer: f64,
    /// Sheets examined for the coalescing pair and for contamination.
    pub window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            direction: C64::from_polar(1.0, 0.3),
            points: 12,
            inner: 10.0,
            outer: 1000.0,
            window: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExponentFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub intercept: f64,
    /// `(|g - g0|, |λ - λ'|)` per sample.
    pub samples: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn closest_pair(spec: &BlockSpectrum, window: usize) -> (usize, usize) {
    let values = &spec.values[..window];
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if spec.blocks[i] != spec.blocks[j] {
                continue;
            }
            let d = (values[i] - values[j]).norm();
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

/// Log-log slope of the gap of the coalescing pair against the distance to g0.
pub fn fit_sqrt_exponent(family: &dyn SpectralFamily, bp: &BranchPoint, options: &FitOptions) -> Result<ExponentFit> {
    if options.points < 3 {
        return Err(Error::Validation("the fit needs at least 3 points".into()));
    }
    let window = options.window.max(bp.sheet_pair.1 + 1).min(family.dimension()).max(2);
    let at_g0 = family.block_spectrum(bp.g0)?;
    let (i, j) = closest_pair(&at_g0, window);
    let pair_block = at_g0.blocks[i];
    let lambda0 = (at_g0.values[i] + at_g0.values[j]) * 0.5;

    let (r_min, r_max) = (options.inner * bp.resolution, options.outer * bp.resolution);
    let mut samples = Vec::with_capacity(options.points);
    for k in 0..options.points {
        let r = r_min * (r_max / r_min).powf(k as f64 / (options.points - 1) as f64);
        let spec = family.block_spectrum(bp.g0 + options.direction * r)?;
        let mut values: Vec<C64> = spec
            .values
            .iter()
            .zip(&spec.blocks)
            .filter(|(_, b)| **b == pair_block)
            .map(|(v, _)| *v)
            .collect();
        values.sort_by(|a, b| (a - lambda0).norm().total_cmp(&(b - lambda0).norm()));
        samples.push((r, (values[0] - values[1]).norm()));
    }

    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| Error::Validation(e.to_string()))?
        .inverse_cdf(0.975);

    let mut warnings = Vec::new();
    let circle = GPath::circle(bp.g0, 1.05 * r_max, 64);
    match track(family, &circle, window, &TrackOptions::default()) {
        Ok(t) => {
            let cycles: Vec<Vec<usize>> = t.cycles();
            let single = cycles.len() == 1 && cycles[0].len() == 2 && t.leaked.is_empty();
            if !single {
                warnings.push(format!(
                    "sampling annulus is contaminated: monodromy on the outer circle has cycles {cycles:?}"
                ));
            }
        }
        Err(e) => warnings.push(format!("could not verify the sampling annulus: {e}")),
    }
    Ok(ExponentFit {
        slope,
        ci_low: slope - t * se,
        ci_high: slope + t * se,
        intercept,
        samples,
        warnings,
    })
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BranchPointRecord {
    pub g_re: f64,
    pub g_im: f64,
    pub resolution: f64,
    /// 1-based sheet labels.
    pub sheets: [usize; 2],
    pub max_integral: f64,
    pub monodromy: bool,
}

impl From<&BranchPoint> for BranchPointRecord {
    fn from(bp: &BranchPoint) -> Self {
        BranchPointRecord {
            g_re: bp.g0.re,
            g_im: bp.g0.im,
            resolution: bp.resolution,
            sheets: [bp.sheet_pair.0 + 1, bp.sheet_pair.1 + 1],
            max_integral: bp.max_integral,
            monodromy: bp.monodromy_confirmed,
        }
    }
}

impl From<&BranchPointRecord> for BranchPoint {
    fn from(r: &BranchPointRecord) -> Self {
        BranchPoint {
            g0: C64::new(r.g_re, r.g_im),
            resolution: r.resolution,
            sheet_pair: (r.sheets[0].saturating_sub(1), r.sheets[1].saturating_sub(1)),
            max_integral: r.max_integral,
            monodromy_confirmed: r.monodromy,
        }
    }
}

#[derive(Serialize, Debug)]
struct UnresolvedRecord<'a> {
    status: &'static str,
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
    max_integral: Option<f64>,
    chi: f64,
    reason: &'a str,
}

/// One JSON object per line: branch points first, then unresolved regions.
pub fn write_jsonl<W: Write>(mut out: W, report: &ScanReport) -> std::io::Result<()> {
    for bp in &report.branch_points {
        let rec = BranchPointRecord::from(bp);
        writeln!(out, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
    }
    for u in &report.unresolved {
        let rec = UnresolvedRecord {
            status: "unresolved",
            re_min: u.cell.lo.re,
            re_max: u.cell.hi.re,
            im_min: u.cell.lo.im,
            im_max: u.cell.hi.im,
            max_integral: u.max_integral.is_finite().then_some(u.max_integral),
            chi: u.chi,
            reason: &u.reason,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
    }
    out.flush()
}

/// Branch points from a JSON-lines file; unresolved entries are skipped.
pub fn read_jsonl(text: &str) -> Result<Vec<BranchPoint>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.contains("\"status\"") {
            continue;
        }
        let rec: BranchPointRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        points.push(BranchPoint::from(&rec));
    }
    Ok(points)
}

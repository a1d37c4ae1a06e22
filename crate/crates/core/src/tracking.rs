//! Continuation of eigenvalue sheets along paths in the complex g-plane, contour
//! integrals of the sheets and their monodromy.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use crate::assignment::{self, FORBIDDEN};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::operator::{BlockSpectrum, SpectralFamily, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct GPath {
    pub samples: Vec<C64>,
    pub closed: bool,
}

impl GPath {
    pub fn new(samples: Vec<C64>, closed: bool) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation("a path needs at least two samples".into()));
        }
        if closed && samples.first() != samples.last() {
            return Err(Error::Validation("closed path must end at its first sample".into()));
        }
        if samples.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(Error::Validation("non-finite path sample".into()));
        }
        Ok(GPath { samples, closed })
    }

    /// Open straight segment with `steps + 1` samples.
    pub fn segment(a: C64, b: C64, steps: usize) -> Self {
        let steps = steps.max(1);
        let samples = (0..=steps)
            .map(|k| a + (b - a) * (k as f64 / steps as f64))
            .collect();
        GPath {
            samples,
            closed: false,
        }
    }

    /// Counterclockwise circle starting at angle zero, `n` distinct samples.
    pub fn circle(center: C64, radius: f64, n: usize) -> Self {
        let n = n.max(3);
        let mut samples: Vec<C64> = (0..n)
            .map(|k| center + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .collect();
        samples.push(samples[0]);
        GPath {
            samples,
            closed: true,
        }
    }

    /// Counterclockwise rectangle boundary starting at the lower-left corner, with
    /// `per_side` steps on each side. Edge points are generated from the
    /// lexicographically smaller end so that neighbouring cells share them bitwise.
    pub fn rectangle(lo: C64, hi: C64, per_side: usize) -> Self {
        let per_side = per_side.max(1);
        let corners = [lo, C64::new(hi.re, lo.im), hi, C64::new(lo.re, hi.im)];
        let mut samples = Vec::with_capacity(4 * per_side + 1);
        for s in 0..4 {
            let (a, b) = (corners[s], corners[(s + 1) % 4]);
            let forward = (a.re, a.im) <= (b.re, b.im);
            let (p, q) = if forward { (a, b) } else { (b, a) };
            let mut edge: Vec<C64> = (0..=per_side)
                .map(|k| {
                    if k == per_side {
                        q
                    } else {
                        p + (q - p) * (k as f64 / per_side as f64)
                    }
                })
                .collect();
            if !forward {
                edge.reverse();
            }
            samples.extend_from_slice(&edge[..per_side]);
        }
        samples.push(lo);
        GPath {
            samples,
            closed: true,
        }
    }

    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        GPath {
            samples,
            closed: self.closed,
        }
    }

    pub fn conj(&self) -> Self {
        GPath {
            samples: self.samples.iter().map(|g| g.conj()).collect(),
            closed: self.closed,
        }
    }

    pub fn length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct TrackOptions {
    /// Extra sheets tracked beyond the reported ones.
    pub guard: usize,
    /// A step is ambiguous if the second-best matching costs less than this times the best.
    pub ambiguity_ratio: f64,
    pub max_depth: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            guard: 4,
            ambiguity_ratio: 3.0,
            max_depth: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrackedPath {
    /// The path actually sampled, including bisection points.
    pub path: GPath,
    /// `sheets[s][k]`: value of sheet `k` at sample `s`.
    pub sheets: Vec<Vec<C64>>,
    /// Sheets requested by the caller; the remaining columns are the guard band.
    pub n_sheets: usize,
    /// Sheet `k` ends on the start value of sheet `permutation[k]`. Identity for open paths.
    pub permutation: Vec<usize>,
    /// `(sheet, start index)` for sheets that ended on the start value of an untracked
    /// sheet (index into the full sorted start spectrum). They are given the unused
    /// labels in `permutation`.
    pub leaked: Vec<(usize, usize)>,
    pub refinement_depth: usize,
}

impl TrackedPath {
    pub fn tracked_sheets(&self) -> usize {
        self.sheets.first().map_or(0, |s| s.len())
    }

    /// Non-trivial cycles of the permutation.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        permutation_cycles(&self.permutation)
    }

    /// Whether the monodromy moves any of the requested (non-guard) sheets.
    pub fn moves_reported_sheets(&self) -> bool {
        self.leaked.iter().any(|&(k, _)| k < self.n_sheets)
            || self
                .permutation
                .iter()
                .enumerate()
                .any(|(k, &p)| k != p && (k < self.n_sheets || p < self.n_sheets))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = self.path.samples.iter().enumerate().flat_map(|(s, g)| {
            self.sheets[s].iter().enumerate().map(move |(k, l)| {
                vec![
                    s.to_string(),
                    fmt_f64(g.re),
                    fmt_f64(g.im),
                    (k + 1).to_string(),
                    fmt_f64(l.re),
                    fmt_f64(l.im),
                ]
            })
        });
        crate::io::write_csv(out, "sample_idx,g_re,g_im,sheet,lambda_re,lambda_im", rows)
    }
}

pub fn permutation_cycles(perm: &[usize]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; perm.len()];
    let mut cycles = Vec::new();
    for start in 0..perm.len() {
        if seen[start] || perm[start] == start {
            seen[start] = true;
            continue;
        }
        let mut cycle = Vec::new();
        let mut k = start;
        while !seen[k] {
            seen[k] = true;
            cycle.push(k);
            k = perm[k];
        }
        cycles.push(cycle);
    }
    cycles
}

/// Memoizes spectra by the exact bit pattern of g. Shared edges of neighbouring
/// contours and repeated bisection midpoints are then solved once.
pub struct CachedFamily<'a> {
    inner: &'a dyn SpectralFamily,
    cache: Mutex<HashMap<(u64, u64), Arc<BlockSpectrum>>>,
}

impl<'a> CachedFamily<'a> {
    pub fn new(inner: &'a dyn SpectralFamily) -> Self {
        CachedFamily {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn clear(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    fn get(&self, g: C64) -> Result<Arc<BlockSpectrum>> {
        let key = (g.re.to_bits(), g.im.to_bits());
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.inner.block_spectrum(g)?);
        self.cache.lock().expect("cache lock").insert(key, v.clone());
        Ok(v)
    }
}

impl SpectralFamily for CachedFamily<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn spectrum(&self, g: C64) -> Result<Vec<C64>> {
        Ok(self.get(g)?.values.clone())
    }

    fn block_spectrum(&self, g: C64) -> Result<BlockSpectrum> {
        Ok(self.get(g)?.as_ref().clone())
    }
}

fn coincidence_tol(values: &[C64]) -> f64 {
    1e-12 * values.iter().fold(1.0f64, |a, v| a.max(v.norm()))
}

/// Distance from value `k` to the nearest other value of its block that is not
/// numerically coincident with it.
fn gap(spec: &BlockSpectrum, k: usize, tol: f64) -> f64 {
    spec.values
        .iter()
        .zip(&spec.blocks)
        .enumerate()
        .filter(|(j, (_, b))| *j != k && **b == spec.blocks[k])
        .map(|(_, (v, _))| (*v - spec.values[k]).norm())
        .filter(|d| *d > tol)
        .fold(f64::INFINITY, f64::min)
}

struct Matching {
    assignment: Vec<usize>,
    ambiguous: bool,
}

/// Matches the tracked values `prev` (sheet blocks `block`, extrapolations `pred`)
/// against all candidate eigenvalues of the same block.
fn match_step(
    prev: &[C64],
    prev_all: &BlockSpectrum,
    block: &[usize],
    pred: &[C64],
    cand: &BlockSpectrum,
    ratio: f64,
) -> Matching {
    let k = pred.len();
    let m = cand.values.len();
    let values = &cand.values;
    let tol = coincidence_tol(values);
    let mut cost = vec![0.0; k * m];
    for i in 0..k {
        for j in 0..m {
            cost[i * m + j] = if cand.blocks[j] == block[i] {
                (pred[i] - values[j]).norm_sqr()
            } else {
                FORBIDDEN
            };
        }
    }
    let (assignment, best) = assignment::solve(&cost, k, m);

    // Alternatives that only swap numerically coincident candidates are the same labeling.
    let alternative =
        |i: usize, j: usize| cand.blocks[j] == block[i] && (values[j] - values[assignment[i]]).norm() > tol;

    // Any different assignment changes some row to a non-coincident column, so it costs
    // at least the cheapest such entry. Only compute the exact second best when that
    // bound does not already settle the question.
    let lower_bound = (0..k)
        .flat_map(|i| (0..m).filter(move |&j| alternative(i, j)).map(move |j| (i, j)))
        .map(|(i, j)| cost[i * m + j])
        .fold(f64::INFINITY, f64::min);
    let mut ambiguous = false;
    if lower_bound < ratio * best && m > 1 {
        let mut second = f64::INFINITY;
        for i in 0..k {
            let mut forbidden = cost.clone();
            for j in 0..m {
                if !alternative(i, j) {
                    forbidden[i * m + j] = FORBIDDEN;
                }
            }
            let (_, c) = assignment::solve(&forbidden, k, m);
            if c < FORBIDDEN {
                second = second.min(c);
            }
        }
        ambiguous = second < ratio * best;
    }

    if !ambiguous {
        let prev_tol = coincidence_tol(&prev_all.values);
        for i in 0..k {
            let j = assignment[i];
            let displacement = (values[j] - pred[i]).norm();
            let prev_index = prev_all
                .values
                .iter()
                .zip(&prev_all.blocks)
                .position(|(v, b)| *v == prev[i] && *b == block[i])
                .unwrap_or(0);
            let gap_prev = gap(prev_all, prev_index, prev_tol);
            let gap_cur = gap(cand, j, tol);
            if displacement > 0.5 * gap_prev.min(gap_cur) {
                ambiguous = true;
                break;
            }
        }
    }
    Matching {
        assignment,
        ambiguous,
    }
}

struct Sample {
    g: C64,
    values: Vec<C64>,
    all: Arc<BlockSpectrum>,
}

/// Follows the lowest `n_sheets` sheets (plus the guard band) along `path`.
pub fn track(family: &dyn SpectralFamily, path: &GPath, n_sheets: usize, options: &TrackOptions) -> Result<TrackedPath> {
    let dim = family.dimension();
    let n_sheets = n_sheets.min(dim);
    let k = (n_sheets + options.guard).min(dim);
    let spectrum = |g: C64| -> Result<Arc<BlockSpectrum>> { Ok(Arc::new(family.block_spectrum(g)?)) };

    let start_all = spectrum(path.samples[0])?;
    let block: Vec<usize> = start_all.blocks[..k].to_vec();
    let mut accepted = vec![Sample {
        g: path.samples[0],
        values: start_all.values[..k].to_vec(),
        all: start_all.clone(),
    }];
    let mut max_depth = 0;

    for &end in &path.samples[1..] {
        let mut stack: Vec<(C64, usize, Option<Arc<BlockSpectrum>>)> = vec![(end, 0, None)];
        while let Some((target, depth, cached)) = stack.pop() {
            let cand = match cached {
                Some(c) => c,
                None => spectrum(target)?,
            };
            let last = accepted.last().expect("non-empty");
            let pred: Vec<C64> = if accepted.len() >= 2 {
                let before = &accepted[accepted.len() - 2];
                let step = last.g - before.g;
                let t = if step.norm() > 0.0 {
                    (target - last.g) / step
                } else {
                    C64::new(0.0, 0.0)
                };
                last.values
                    .iter()
                    .zip(&before.values)
                    .map(|(a, b)| a + (a - b) * t)
                    .collect()
            } else {
                last.values.clone()
            };
            let step = match_step(&last.values, &last.all, &block, &pred, &cand, options.ambiguity_ratio);
            if step.ambiguous && target != last.g {
                if depth >= options.max_depth {
                    return Err(Error::TrackingAmbiguity { g: target, depth });
                }
                let mid = (last.g + target) * 0.5;
                stack.push((target, depth + 1, Some(cand)));
                stack.push((mid, depth + 1, None));
                continue;
            }
            max_depth = max_depth.max(depth);
            let values = step.assignment.iter().map(|&j| cand.values[j]).collect();
            accepted.push(Sample {
                g: target,
                values,
                all: cand,
            });
        }
    }

    let mut permutation: Vec<usize> = (0..k).collect();
    let mut leaked = Vec::new();
    if path.closed {
        let finish = &accepted.last().expect("non-empty").values;
        let start = &start_all.values;
        let m = start.len();
        let tie = (1e-14 * start.iter().fold(1.0f64, |a, v| a.max(v.norm()))).powi(2);
        let mut cost = vec![0.0; k * m];
        for i in 0..k {
            for j in 0..m {
                cost[i * m + j] = if start_all.blocks[j] == block[i] {
                    (finish[i] - start[j]).norm_sqr() + if i == j { 0.0 } else { tie }
                } else {
                    FORBIDDEN
                };
            }
        }
        let (assign, _) = assignment::solve(&cost, k, m);
        let mut used = vec![false; k];
        for (i, &j) in assign.iter().enumerate() {
            if j < k {
                permutation[i] = j;
                used[j] = true;
            } else {
                leaked.push((i, j));
            }
        }
        let mut free = (0..k).filter(|j| !used[*j]);
        for &(i, _) in &leaked {
            permutation[i] = free.next().expect("as many free labels as leaked sheets");
        }
    }

    let samples: Vec<C64> = accepted.iter().map(|s| s.g).collect();
    let sheets = accepted.into_iter().map(|s| s.values).collect();
    Ok(TrackedPath {
        path: GPath {
            samples,
            closed: path.closed,
        },
        sheets,
        n_sheets,
        permutation,
        leaked,
        refinement_depth: max_depth,
    })
}

#[derive(Clone, Debug)]
pub struct ContourIntegralResult {
    pub integrals: Vec<C64>,
    pub estimated_error: f64,
    pub permutation: Vec<usize>,
}

fn trapezoid(g: &[C64], sheets: &[&Vec<C64>], k: usize) -> C64 {
    g.windows(2)
        .zip(sheets.windows(2))
        .map(|(gw, sw)| (sw[0][k] + sw[1][k]) * 0.5 * (gw[1] - gw[0]))
        .sum()
}

/// Trapezoid integrals of every tracked sheet. The error estimate is the Richardson
/// difference between all samples and every other sample, floored by rounding. The
/// floor only uses the bounding box and the start values, so it does not change when
/// the sampling is refined.
pub fn contour_integral(tracked: &TrackedPath) -> Result<ContourIntegralResult> {
    if !tracked.path.closed {
        return Err(Error::Validation("contour integral needs a closed path".into()));
    }
    let g = &tracked.path.samples;
    let all: Vec<&Vec<C64>> = tracked.sheets.iter().collect();
    let mut half_idx: Vec<usize> = (0..g.len()).step_by(2).collect();
    if *half_idx.last().expect("non-empty") != g.len() - 1 {
        half_idx.push(g.len() - 1);
    }
    let g_half: Vec<C64> = half_idx.iter().map(|&i| g[i]).collect();
    let s_half: Vec<&Vec<C64>> = half_idx.iter().map(|&i| all[i]).collect();

    let (lo, hi) = g.iter().fold(
        (C64::new(f64::INFINITY, f64::INFINITY), C64::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
        |(lo, hi), z| (C64::new(lo.re.min(z.re), lo.im.min(z.im)), C64::new(hi.re.max(z.re), hi.im.max(z.im))),
    );
    let start_scale = all[0].iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let floor = 100.0 * f64::EPSILON * std::f64::consts::PI * (hi - lo).norm() * start_scale;

    let k = tracked.tracked_sheets();
    let mut integrals = Vec::with_capacity(k);
    let mut error = floor;
    for n in 0..k {
        let full = trapezoid(g, &all, n);
        let half = trapezoid(&g_half, &s_half, n);
        error = error.max((full - half).norm() / 3.0);
        integrals.push(full);
    }
    Ok(ContourIntegralResult {
        integrals,
        estimated_error: error,
        permutation: tracked.permutation.clone(),
    })
}

/// True iff the monodromy is not the identity on the tracked window.
pub fn closure_check(tracked: &TrackedPath) -> bool {
    !tracked.leaked.is_empty() || tracked.permutation.iter().enumerate().any(|(k, &p)| k != p)
}

//! Fiber zero-set scanning: trace the connected components of
//! f_θ⁻¹(0) ∩ I² (or, slice by slice, ∩ I³), classify the almost-horizontal
//! ones, measure slopes, and check the projection lower bound.
//!
//! A planar scan walks grid columns left to right, brackets all roots in y
//! per column, and links roots across columns by monotone nearest-neighbor
//! assignment. Chains that die in the interior are examined for wall exits
//! and, failing that, stitched pairwise across fold tips.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{verify_conditions, ConditionReport, Mode, ModelInstance};
use crate::numerics::{bisect, bracketed_roots, ROOT_XTOL};

/// Wall of the square a component endpoint lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallTag {
    Left,
    Right,
    Top,
    Bottom,
    Interior,
}

/// One traced connected component of a planar zero set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarComponent {
    /// Ordered vertices along the curve.
    pub points: Vec<(f64, f64)>,
    pub endpoints: (WallTag, WallTag),
    /// max |dy/dx| by central differences along the polyline (one-sided at
    /// the ends). Near-vertical segments give large finite values.
    pub max_abs_slope: f64,
    /// Spans wall to wall and touches the boundary only at its endpoints.
    pub almost_horizontal: bool,
    /// x is strictly monotone along the polyline.
    pub graph_over_x: bool,
    pub y_range: (f64, f64),
}

impl PlanarComponent {
    /// Extent of the projection onto the y-axis.
    pub fn projection_width(&self) -> f64 {
        self.y_range.1 - self.y_range.0
    }

    /// Linear interpolation of y at a given x along the polyline; the first
    /// crossing wins when the component is not a graph over x.
    pub fn y_at(&self, x: f64) -> Option<f64> {
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if (x0 <= x && x <= x1) || (x1 <= x && x <= x0) {
                if x1 == x0 {
                    return Some(y0);
                }
                return Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0));
            }
        }
        None
    }
}

/// Scan result for one fiber of a one-dimensional system (or one frozen
/// slice of a two-dimensional one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub theta: Vec<f64>,
    pub epsilon: f64,
    pub grid: usize,
    /// For two-dimensional models scanned on a slice: which argument was
    /// frozen and at which value.
    pub frozen: Option<(SliceAxis, f64)>,
    /// Components sorted by y at x = 0.
    pub components: Vec<PlanarComponent>,
    pub n_almost_horizontal: usize,
    /// Smallest y-projection width among almost-horizontal components.
    pub min_projection_width: Option<f64>,
    /// δ with every almost-horizontal slope ≤ 1 − δ; zero when violated.
    pub slope_margin: f64,
    /// The union of component x-projections covers I (up to one cell).
    pub covers_x: bool,
}

impl FiberReport {
    pub fn almost_horizontal(&self) -> impl Iterator<Item = &PlanarComponent> {
        self.components.iter().filter(|c| c.almost_horizontal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    /// Freeze the first lattice argument x_{k+1}; the scan plane is (z, y).
    X,
    /// Freeze the last lattice argument x_{k−1}; the scan plane is (x, y).
    Z,
}

// ---------------------------------------------------------------------------
// planar scanner
// ---------------------------------------------------------------------------

const WALL_TOL: f64 = 1e-9;

struct Chain {
    points: Vec<(f64, f64)>,
    start: WallTag,
    end: WallTag,
    open_left: bool,  // starts mid-domain with no wall exit found
    open_right: bool, // dies mid-domain with no wall exit found
}

/// Monotone minimal-cost alignment of two ascending root lists. Returns
/// pairs (index in a, index in b); unmatched entries are births/deaths.
fn align(a: &[f64], b: &[f64], skip_cost: f64) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut cost = vec![0.0_f64; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        cost[idx(i, 0)] = i as f64 * skip_cost;
    }
    for j in 1..=m {
        cost[idx(0, j)] = j as f64 * skip_cost;
    }
    for i in 1..=n {
        for j in 1..=m {
            let pair = cost[idx(i - 1, j - 1)] + (a[i - 1] - b[j - 1]).abs();
            let skip_a = cost[idx(i - 1, j)] + skip_cost;
            let skip_b = cost[idx(i, j - 1)] + skip_cost;
            cost[idx(i, j)] = pair.min(skip_a).min(skip_b);
        }
    }
    // backtrack, preferring matches on ties
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let here = cost[idx(i, j)];
        let pair = cost[idx(i - 1, j - 1)] + (a[i - 1] - b[j - 1]).abs();
        if (here - pair).abs() <= 1e-12 * here.abs().max(1.0) {
            pairs.push((i - 1, j - 1));
            i -= 1;
            j -= 1;
        } else if (here - (cost[idx(i - 1, j)] + skip_cost)).abs() <= 1e-12 * here.abs().max(1.0) {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

/// Roots in y of g(x, ·) on I, with the under-resolution guard.
fn column_roots<F: Fn(f64, f64) -> f64>(g: &F, x: f64, grid: usize) -> Result<Vec<f64>> {
    let roots = bracketed_roots(|y| g(x, y), -1.0, 1.0, grid, ROOT_XTOL);
    let min_gap = 2.0 * (2.0 / grid as f64);
    for w in roots.windows(2) {
        if w[1] - w[0] < min_gap {
            return Err(Error::Resolution(format!(
                "two roots within {:.3e} (< 2 cells) at x = {x:.6}, y ≈ {:.6}; rescan at a finer \
                 grid",
                w[1] - w[0],
                0.5 * (w[0] + w[1])
            )));
        }
    }
    Ok(roots)
}

/// Locate a wall exit of a dying branch between columns: a root of
/// g(·, ±1) inside [x0, x1]. Returns the exit point when found.
fn wall_exit<F: Fn(f64, f64) -> f64>(
    g: &F,
    x0: f64,
    x1: f64,
    y_last: f64,
) -> Option<(f64, f64, WallTag)> {
    let mut cands = Vec::new();
    for (wall, tag) in [(1.0, WallTag::Top), (-1.0, WallTag::Bottom)] {
        let h0 = g(x0, wall);
        let h1 = g(x1, wall);
        if h0 == 0.0 {
            cands.push((x0, wall, tag));
        } else if h0 * h1 < 0.0 {
            let xr = bisect(|x| g(x, wall), x0, x1, ROOT_XTOL);
            cands.push((xr, wall, tag));
        }
    }
    // prefer the wall the branch was heading toward
    cands.sort_by(|a, b| {
        let da = (a.1 - y_last).abs();
        let db = (b.1 - y_last).abs();
        da.partial_cmp(&db).unwrap()
    });
    cands.first().copied()
}

/// Trace all components of the zero set of `g` on I². `grid` is the cell
/// count per axis.
pub fn scan_plane<F: Fn(f64, f64) -> f64>(g: F, grid: usize) -> Result<Vec<PlanarComponent>> {
    if grid < 8 {
        return Err(Error::Contract(format!(
            "plane scan needs a grid of at least 8 cells, got {grid}"
        )));
    }
    let dx = 2.0 / grid as f64;
    let dy_cell = 2.0 / grid as f64;
    let skip_cost = 6.0 * dx + 2.0 * dy_cell; // alignment penalty for birth/death

    let xs: Vec<f64> = (0..=grid)
        .map(|i| if i == grid { 1.0 } else { -1.0 + i as f64 * dx })
        .collect();

    let mut done: Vec<Chain> = Vec::new();
    let mut active: Vec<Chain> = Vec::new();

    let mut prev_roots = column_roots(&g, xs[0], grid)?;
    for &r in &prev_roots {
        active.push(Chain {
            points: vec![(xs[0], r)],
            start: WallTag::Left,
            end: WallTag::Interior,
            open_left: false,
            open_right: false,
        });
    }

    for ci in 1..xs.len() {
        let x = xs[ci];
        let roots = column_roots(&g, x, grid)?;
        let pairs = align(&prev_roots, &roots, skip_cost);

        let mut next_active: Vec<Chain> = Vec::new();
        let mut taken_b = vec![false; roots.len()];
        let mut by_a: Vec<Option<usize>> = vec![None; prev_roots.len()];
        for &(ia, ib) in &pairs {
            by_a[ia] = Some(ib);
            taken_b[ib] = true;
        }

        let mut chains: Vec<Option<Chain>> = active.drain(..).map(Some).collect();
        for ia in 0..prev_roots.len() {
            let mut chain = chains[ia].take().expect("chain per previous root");
            match by_a[ia] {
                Some(ib) => {
                    chain.points.push((x, roots[ib]));
                    next_active.push(chain);
                }
                None => {
                    // death between columns: wall exit or genuine fold end
                    let (px, py) = *chain.points.last().expect("nonempty chain");
                    if let Some((xe, ye, tag)) = wall_exit(&g, px, x, py) {
                        chain.points.push((xe, ye));
                        chain.end = tag;
                    } else {
                        chain.end = WallTag::Interior;
                        chain.open_right = true;
                    }
                    done.push(chain);
                }
            }
        }
        // births
        for (ib, &r) in roots.iter().enumerate() {
            if taken_b[ib] {
                continue;
            }
            let mut chain = Chain {
                points: vec![(x, r)],
                start: WallTag::Interior,
                end: WallTag::Interior,
                open_left: true,
                open_right: false,
            };
            if let Some((xe, ye, tag)) = wall_exit(&g, xs[ci - 1], x, r) {
                chain.points.insert(0, (xe, ye));
                chain.start = tag;
                chain.open_left = false;
            }
            next_active.push(chain);
        }

        next_active.sort_by(|a, b| {
            let ya = a.points.last().unwrap().1;
            let yb = b.points.last().unwrap().1;
            ya.partial_cmp(&yb).unwrap()
        });
        active = next_active;
        prev_roots = roots;
    }

    for mut chain in active {
        chain.end = WallTag::Right;
        done.push(chain);
    }

    stitch_folds(&mut done, 8.0 * dy_cell, 2.5 * dx)?;

    let mut comps: Vec<PlanarComponent> = done.into_iter().map(finish_chain).collect();
    comps.sort_by(|a, b| {
        let ka = a.y_at(0.0).unwrap_or(0.5 * (a.y_range.0 + a.y_range.1));
        let kb = b.y_at(0.0).unwrap_or(0.5 * (b.y_range.0 + b.y_range.1));
        ka.partial_cmp(&kb).unwrap()
    });
    Ok(comps)
}

/// Join chains that die in the interior across a fold tip. Two open ends
/// match when they are close in both coordinates; a chain whose ends join
/// onto each other would be a closed curve, which the scanned systems
/// cannot contain (no horizontal tangencies), so that is reported as a
/// hypothesis violation.
fn stitch_folds(chains: &mut Vec<Chain>, y_tol: f64, x_tol: f64) -> Result<()> {
    loop {
        let mut ends: Vec<(usize, bool, (f64, f64))> = Vec::new();
        for (i, c) in chains.iter().enumerate() {
            if c.open_right {
                ends.push((i, true, *c.points.last().unwrap()));
            }
            if c.open_left {
                ends.push((i, false, *c.points.first().unwrap()));
            }
        }
        if ends.len() < 2 {
            return Ok(());
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..ends.len() {
            for b in a + 1..ends.len() {
                let (pa, pb) = (ends[a].2, ends[b].2);
                let (dx, dy) = ((pa.0 - pb.0).abs(), (pa.1 - pb.1).abs());
                if dx <= x_tol && dy <= y_tol {
                    let d = dx + dy;
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, a, b));
                    }
                }
            }
        }
        let Some((_, a, b)) = best else { return Ok(()) };
        let (ci, a_right, _) = ends[a];
        let (cj, b_right, _) = ends[b];
        if ci == cj {
            return Err(Error::Hypothesis(format!(
                "closed component found near ({:.4}, {:.4}); the zero set of a coupling with a \
                 sign-definite forward partial cannot contain circles — check the model conditions",
                ends[a].2 .0, ends[a].2 .1
            )));
        }
        // merge cj into ci so that the joined ends meet
        let (lo, hi) = (ci.min(cj), ci.max(cj));
        let other = chains.remove(hi);
        let keep = &mut chains[lo];
        let keep_is_ci = lo == ci;
        let (keep_right, other_right) =
            if keep_is_ci { (a_right, b_right) } else { (b_right, a_right) };
        let mut other_pts = other.points;
        if keep_right {
            // append other, oriented so its matching end comes first
            if other_right {
                other_pts.reverse();
                keep.points.extend(other_pts);
                keep.end = other.start;
                keep.open_right = other.open_left;
            } else {
                keep.points.extend(other_pts);
                keep.end = other.end;
                keep.open_right = other.open_right;
            }
        } else {
            // prepend other, oriented so its matching end comes last
            if other_right {
                other_pts.extend(std::mem::take(&mut keep.points));
                keep.points = other_pts;
                keep.start = other.start;
                keep.open_left = other.open_left;
            } else {
                other_pts.reverse();
                other_pts.extend(std::mem::take(&mut keep.points));
                keep.points = other_pts;
                keep.start = other.end;
                keep.open_left = other.open_right;
            }
        }
    }
}

fn finish_chain(c: Chain) -> PlanarComponent {
    let pts = c.points;
    let n = pts.len();
    let slope = |i: usize, j: usize| -> f64 {
        let (xi, yi) = pts[i];
        let (xj, yj) = pts[j];
        (yj - yi).abs() / (xj - xi).abs().max(1e-300)
    };
    let mut max_slope = 0.0_f64;
    if n >= 2 {
        max_slope = max_slope.max(slope(0, 1)).max(slope(n - 2, n - 1));
        for i in 1..n - 1 {
            max_slope = max_slope.max(slope(i - 1, i + 1));
        }
    }
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for &(_, y) in &pts {
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    let graph_over_x = pts.windows(2).all(|w| w[1].0 > w[0].0);
    let wall_ends = matches!(
        (c.start, c.end),
        (WallTag::Left, WallTag::Right) | (WallTag::Right, WallTag::Left)
    );
    let interior_clean = pts
        .iter()
        .skip(1)
        .take(n.saturating_sub(2))
        .all(|&(_, y)| y.abs() < 1.0 - WALL_TOL);
    PlanarComponent {
        endpoints: (c.start, c.end),
        max_abs_slope: max_slope,
        almost_horizontal: wall_ends && interior_clean,
        graph_over_x,
        y_range: (y_lo, y_hi),
        points: pts,
    }
}

// ---------------------------------------------------------------------------
// fiber scans
// ---------------------------------------------------------------------------

fn report_from_components(
    m: &ModelInstance,
    theta: &[f64],
    grid: usize,
    frozen: Option<(SliceAxis, f64)>,
    comps: Vec<PlanarComponent>,
) -> Result<FiberReport> {
    let n_ah = comps.iter().filter(|c| c.almost_horizontal).count();
    let min_w = comps
        .iter()
        .filter(|c| c.almost_horizontal)
        .map(|c| c.projection_width())
        .min_by(|a, b| a.partial_cmp(b).unwrap());
    let max_slope = comps
        .iter()
        .filter(|c| c.almost_horizontal)
        .map(|c| c.max_abs_slope)
        .fold(0.0_f64, f64::max);
    let slope_margin = (1.0 - max_slope).max(0.0);

    // x-projection coverage, up to one cell
    let mut intervals: Vec<(f64, f64)> = comps
        .iter()
        .map(|c| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &(x, _) in &c.points {
                lo = lo.min(x);
                hi = hi.max(x);
            }
            (lo, hi)
        })
        .collect();
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let cell = 2.0 / grid as f64;
    let mut covers_x = true;
    let mut reach = -1.0_f64;
    for (lo, hi) in intervals {
        if lo > reach + cell {
            covers_x = false;
        }
        reach = reach.max(hi);
    }
    if reach < 1.0 - cell {
        covers_x = false;
    }

    let report = FiberReport {
        theta: theta.to_vec(),
        epsilon: m.epsilon,
        grid,
        frozen,
        components: comps,
        n_almost_horizontal: n_ah,
        min_projection_width: min_w,
        slope_margin,
        covers_x,
    };

    if report.n_almost_horizontal == 0 && m.epsilon != 0.0 && m.in_validated_regime() {
        return Err(Error::Resolution(format!(
            "no almost-horizontal component at θ = {theta:?} although the standing conditions \
             hold; rescan at a finer grid (current {grid})"
        )));
    }
    Ok(report)
}

/// Scan a single fiber of a one-dimensional model, or the central z = 0
/// slice of a two-dimensional one.
pub fn scan_fiber_1d(m: &ModelInstance, theta: &[f64], grid: usize) -> Result<FiberReport> {
    match m.mode() {
        Mode::OneD => {
            let comps = scan_plane(|x, y| m.eval_f(theta, &[x, y]).expect("arity"), grid)?;
            report_from_components(m, theta, grid, None, comps)
        }
        Mode::TwoD => scan_fiber_slice(m, theta, grid, SliceAxis::Z, 0.0),
    }
}

/// Scan one slice of a two-dimensional fiber. The scan plane's horizontal
/// coordinate is the lattice argument left free; vertical is always y.
pub fn scan_fiber_slice(
    m: &ModelInstance,
    theta: &[f64],
    grid: usize,
    axis: SliceAxis,
    c: f64,
) -> Result<FiberReport> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("slice scans need a two-dimensional model".into()));
    }
    if m.epsilon == 0.0 {
        return Err(Error::Contract(
            "slice scans need ε ≠ 0: at ε = 0 the sheet structure degenerates".into(),
        ));
    }
    let comps = match axis {
        SliceAxis::Z => scan_plane(|x, y| m.eval_f(theta, &[x, y, c]).expect("arity"), grid)?,
        SliceAxis::X => scan_plane(|z, y| m.eval_f(theta, &[c, y, z]).expect("arity"), grid)?,
    };
    report_from_components(m, theta, grid, Some((axis, c)), comps)
}

// ---------------------------------------------------------------------------
// two-dimensional fibers: sheets and their natural foliations
// ---------------------------------------------------------------------------

/// A sampled leaf: one planar component cut from the sheet by a slice plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub slice_value: f64,
    pub component: PlanarComponent,
}

/// One sheet of a two-dimensional fiber's zero set, assembled from leaves of
/// both natural foliations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetComponent {
    /// Leaves cut by planes z = c: curves in the (x, y) square.
    pub leaves_x: Vec<Leaf>,
    /// Leaves cut by planes x = c: curves in the (z, y) square.
    pub leaves_z: Vec<Leaf>,
    pub slice_grid: Vec<f64>,
    pub almost_horizontal: bool,
    pub max_leaf_slope: f64,
    pub y_range: (f64, f64),
    /// Largest Hausdorff distance between leaves at adjacent slice values.
    pub max_adjacent_hausdorff: f64,
}

/// Scan result for one fiber of a two-dimensional system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberReport2 {
    pub theta: Vec<f64>,
    pub epsilon: f64,
    pub grid: usize,
    pub slices: usize,
    pub sheets: Vec<SheetComponent>,
    pub n_almost_horizontal: usize,
    pub min_projection_width: Option<f64>,
    pub slope_margin: f64,
}

impl FiberReport2 {
    pub fn almost_horizontal(&self) -> impl Iterator<Item = &SheetComponent> {
        self.sheets.iter().filter(|s| s.almost_horizontal)
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

fn hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let one_way = |p: &[(f64, f64)], q: &[(f64, f64)]| -> f64 {
        p.iter()
            .map(|&(x0, y0)| {
                q.iter()
                    .map(|&(x1, y1)| ((x0 - x1).powi(2) + (y0 - y1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Match a y-band to the best-overlapping sheet band. Ties go to the
/// smaller midpoint distance.
fn best_band_match(
    bands: impl Iterator<Item = (usize, (f64, f64), bool)>,
    band: (f64, f64),
) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (si, sband, blocked) in bands {
        if blocked {
            continue;
        }
        let ov = overlap(sband, band);
        if ov <= 0.0 {
            continue;
        }
        let mid_gap = ((sband.0 + sband.1) - (band.0 + band.1)).abs() * 0.5;
        let better = match best {
            None => true,
            Some((_, bov, bgap)) => ov > bov || (ov == bov && mid_gap < bgap),
        };
        if better {
            best = Some((si, ov, mid_gap));
        }
    }
    best.map(|(si, _, _)| si)
}

/// Scan a two-dimensional fiber by slicing both natural foliations and
/// assembling sheets by y-band matching across adjacent slices.
pub fn scan_fiber_2d(
    m: &ModelInstance,
    theta: &[f64],
    slices: usize,
    grid: usize,
) -> Result<FiberReport2> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("scan_fiber_2d needs a two-dimensional model".into()));
    }
    if m.epsilon == 0.0 {
        return Err(Error::Contract(
            "scan_fiber_2d needs ε ≠ 0: transversality of the slice planes fails at ε = 0".into(),
        ));
    }
    if slices < 9 {
        return Err(Error::Contract(format!(
            "scan_fiber_2d needs at least 9 slices, got {slices}"
        )));
    }
    let cs: Vec<f64> = (0..slices)
        .map(|j| -1.0 + 2.0 * j as f64 / (slices - 1) as f64)
        .collect();

    // leaves of the z = c family, clustered into sheets by y-band overlap
    let mut sheets: Vec<(Vec<Leaf>, (f64, f64))> = Vec::new();
    for (j, &c) in cs.iter().enumerate() {
        let rep = scan_fiber_slice(m, theta, grid, SliceAxis::Z, c)?;
        for comp in rep.components {
            let band = comp.y_range;
            let chosen = best_band_match(
                sheets
                    .iter()
                    .enumerate()
                    .map(|(si, (lv, sb))| (si, *sb, lv.last().is_some_and(|l| l.slice_value == c))),
                band,
            );
            match chosen {
                Some(si) => {
                    let (leaves, sband) = &mut sheets[si];
                    leaves.push(Leaf { slice_value: c, component: comp });
                    *sband = (sband.0.min(band.0), sband.1.max(band.1));
                }
                None if j == 0 => sheets.push((vec![Leaf { slice_value: c, component: comp }], band)),
                None => {
                    return Err(Error::Resolution(format!(
                        "leaf at slice z = {c:.4} (y-band [{:.4}, {:.4}]) matches no sheet; \
                         increase the slice count",
                        band.0, band.1
                    )))
                }
            }
        }
    }

    // attach the x = c family by the same band matching
    let mut leaves_x_per_sheet: Vec<Vec<Leaf>> = vec![Vec::new(); sheets.len()];
    for &c in &cs {
        let rep = scan_fiber_slice(m, theta, grid, SliceAxis::X, c)?;
        for comp in rep.components {
            let band = comp.y_range;
            let chosen = best_band_match(
                sheets.iter().enumerate().map(|(si, (_, sb))| (si, *sb, false)),
                band,
            );
            match chosen {
                Some(si) => {
                    leaves_x_per_sheet[si].push(Leaf { slice_value: c, component: comp })
                }
                None => {
                    return Err(Error::Resolution(format!(
                        "transverse leaf at slice x = {c:.4} matches no sheet; increase the \
                         slice count"
                    )))
                }
            }
        }
    }

    let spacing = 2.0 / (slices - 1) as f64;
    let mut out = Vec::with_capacity(sheets.len());
    for ((leaves_by_z, band), leaves_by_x) in sheets.into_iter().zip(leaves_x_per_sheet) {
        let full_coverage = leaves_by_z.len() == slices && leaves_by_x.len() == slices;
        let all_ah = leaves_by_z
            .iter()
            .chain(&leaves_by_x)
            .all(|l| l.component.almost_horizontal);
        let max_slope = leaves_by_z
            .iter()
            .chain(&leaves_by_x)
            .map(|l| l.component.max_abs_slope)
            .fold(0.0_f64, f64::max);
        let mut max_h = 0.0_f64;
        for w in leaves_by_z.windows(2) {
            max_h = max_h.max(hausdorff(&w[0].component.points, &w[1].component.points));
        }
        if max_h >= 10.0 * spacing {
            return Err(Error::Resolution(format!(
                "adjacent leaves are {max_h:.4} apart (limit {:.4}); sheet assembly is not \
                 continuous at this slice count",
                10.0 * spacing
            )));
        }
        out.push(SheetComponent {
            leaves_x: leaves_by_z,
            leaves_z: leaves_by_x,
            slice_grid: cs.clone(),
            almost_horizontal: full_coverage && all_ah,
            max_leaf_slope: max_slope,
            y_range: band,
            max_adjacent_hausdorff: max_h,
        });
    }
    out.sort_by(|a, b| a.y_range.0.partial_cmp(&b.y_range.0).unwrap());

    let n_ah = out.iter().filter(|s| s.almost_horizontal).count();
    let min_w = out
        .iter()
        .filter(|s| s.almost_horizontal)
        .map(|s| s.y_range.1 - s.y_range.0)
        .min_by(|a, b| a.partial_cmp(b).unwrap());
    let max_slope = out
        .iter()
        .filter(|s| s.almost_horizontal)
        .map(|s| s.max_leaf_slope)
        .fold(0.0_f64, f64::max);
    Ok(FiberReport2 {
        theta: theta.to_vec(),
        epsilon: m.epsilon,
        grid,
        slices,
        sheets: out,
        n_almost_horizontal: n_ah,
        min_projection_width: min_w,
        slope_margin: (1.0 - max_slope).max(0.0),
    })
}

// ---------------------------------------------------------------------------
// projection lower bound
// ---------------------------------------------------------------------------

/// Verdict for one component's y-projection width against 2·K₁/K₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentBound {
    pub width: f64,
    /// K₁, K₂ measured on the component's bounding box.
    pub k1_local: f64,
    pub k2_local: f64,
    pub bound_local: f64,
    pub pass_local: bool,
    /// Bound from grid-global condition-report extrema.
    pub bound_global: f64,
    pub pass_global: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub per_component: Vec<ComponentBound>,
    pub all_pass: bool,
}

/// Check the lower bound width ≥ 2·K₁/K₂ for every almost-horizontal
/// component of a fiber report, with K₁ = min |∂Z/∂x| and
/// K₂ = max |∂Z/∂y + (1/ε)·∂V/∂y|, estimated both on each component's
/// bounding box and from grid-global extrema.
pub fn check_projection_bound(
    report: &FiberReport,
    m: &ModelInstance,
    conditions: Option<&ConditionReport>,
) -> Result<BoundCheck> {
    if m.epsilon == 0.0 {
        return Err(Error::Contract("the projection bound needs ε ≠ 0".into()));
    }
    if report.n_almost_horizontal == 0 {
        return Err(Error::Contract(
            "the projection bound applies to almost-horizontal components; the report has none"
                .into(),
        ));
    }
    let owned;
    let cond = match conditions {
        Some(c) => c,
        None => {
            owned = verify_conditions(m, 64)?;
            &owned
        }
    };
    let inv_eps = 1.0 / m.epsilon.abs();
    let k2_global = cond.max_abs_dz_mid + inv_eps * cond.max_abs_dv;
    let bound_global = 2.0 * cond.min_abs_dz_first.value / k2_global;

    let theta = &report.theta;
    let frozen_c = report.frozen.map(|(_, c)| c).unwrap_or(0.0);
    let arity = m.coupling.arity;

    let mut per = Vec::new();
    for comp in report.components.iter().filter(|c| c.almost_horizontal) {
        let (ylo, yhi) = comp.y_range;
        let mut k1 = f64::INFINITY;
        let mut k2 = 0.0_f64;
        let probes = 32;
        for i in 0..=probes {
            let x = -1.0 + 2.0 * i as f64 / probes as f64;
            for j in 0..=probes {
                let y = ylo + (yhi - ylo) * j as f64 / probes as f64;
                let args: Vec<f64> = if arity == 2 { vec![x, y] } else { vec![x, y, frozen_c] };
                k1 = k1.min(m.coupling.partial(theta, &args, 0).abs());
                let dzy = m.coupling.partial(theta, &args, 1);
                let dvy = m.dv_dy(theta, y);
                k2 = k2.max((dzy + dvy / m.epsilon).abs());
            }
        }
        let width = comp.projection_width();
        let bound_local = 2.0 * k1 / k2;
        per.push(ComponentBound {
            width,
            k1_local: k1,
            k2_local: k2,
            bound_local,
            pass_local: width >= bound_local,
            bound_global,
            pass_global: width >= bound_global,
        });
    }
    let all = per.iter().all(|b| b.pass_local && b.pass_global);
    Ok(BoundCheck { per_component: per, all_pass: all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinParams};

    fn dw(eps: f64, mode: Mode) -> ModelInstance {
        builtin_model(
            "double-well",
            &BuiltinParams { epsilon: Some(eps), mode: Some(mode), ..Default::default() },
        )
        .unwrap()
    }

    fn lin(eps: f64, mode: Mode) -> ModelInstance {
        builtin_model(
            "linear",
            &BuiltinParams { epsilon: Some(eps), mode: Some(mode), ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn linear_single_component_slope_bound() {
        let m = lin(0.1, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        assert_eq!(rep.components.len(), 1);
        assert_eq!(rep.n_almost_horizontal, 1);
        // |dy/dx| = |ε ∂xZ| / |ε ∂yZ + ∂yV| = (ε/8)/(1 − ε/4)
        let bound = (0.1 / 8.0) / (1.0 - 0.1 / 4.0);
        assert!(
            rep.components[0].max_abs_slope <= bound * 1.05,
            "{}",
            rep.components[0].max_abs_slope
        );
        assert!(rep.components[0].graph_over_x);
    }

    #[test]
    fn double_well_two_components() {
        let m = dw(0.01, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        assert_eq!(rep.n_almost_horizontal, 2);
        // sorted by y at x = 0: lower first
        assert!(rep.components[0].y_at(0.0).unwrap() < -0.45);
        assert!(rep.components[1].y_at(0.0).unwrap() > 0.45);
        assert!(rep.covers_x);
    }

    #[test]
    fn epsilon_zero_gives_horizontal_lines() {
        let m = dw(0.0, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 128).unwrap();
        assert_eq!(rep.components.len(), 2);
        for (comp, want) in rep.components.iter().zip([-0.5, 0.5]) {
            assert!(comp.almost_horizontal);
            assert!(comp.max_abs_slope < 1e-9);
            for &(_, y) in &comp.points {
                assert!((y - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn frozen_central_slice_of_2d_model() {
        let m = dw(0.01, Mode::TwoD);
        let rep = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        assert_eq!(rep.frozen, Some((SliceAxis::Z, 0.0)));
        assert_eq!(rep.n_almost_horizontal, 2);
    }

    #[test]
    fn slope_shrinks_tenfold_with_epsilon() {
        let m1 = lin(0.1, Mode::OneD);
        let m2 = lin(0.01, Mode::OneD);
        let s1 = scan_fiber_1d(&m1, &[0.0], 256).unwrap().components[0].max_abs_slope;
        let s2 = scan_fiber_1d(&m2, &[0.0], 256).unwrap().components[0].max_abs_slope;
        let ratio = s1 / s2;
        assert!((ratio - 10.0).abs() < 1.0, "slope ratio {ratio}");
    }

    #[test]
    fn circle_component_is_a_hypothesis_violation() {
        // a coupling violating the sign-definite forward partial produces a
        // circle; the scan must refuse it
        use crate::model::{BaseDynamics, Coupling, CouplingForm, CouplingTerm, Potential, PotentialForm};
        let z = Coupling {
            form: CouplingForm::Series {
                terms: vec![
                    CouplingTerm { coeff: 1.0, pows: [2, 0, 0], trig: None },
                    CouplingTerm { coeff: 1.0, pows: [0, 2, 0], trig: None },
                    CouplingTerm { coeff: -0.25, pows: [0, 0, 0], trig: None },
                ],
            },
            arity: 2,
            force_fd: false,
        };
        let m = ModelInstance::new(
            z,
            Potential::new(PotentialForm::Series { terms: vec![] }),
            BaseDynamics::fixed1(0.0),
            1.0,
        )
        .unwrap();
        let err = scan_fiber_1d(&m, &[0.0], 128).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(_)), "{err:?}");
    }

    #[test]
    fn ambiguous_roots_ask_for_refinement() {
        // V with two zeros 0.002 apart: a 128-cell grid cannot separate them
        use crate::model::{BaseDynamics, Coupling, Potential, PotentialForm, PotentialTerm};
        let v = Potential::new(PotentialForm::Series {
            terms: vec![
                PotentialTerm { coeff: 1.0, x_pow: 2, trig: None },
                PotentialTerm { coeff: -1e-6, x_pow: 0, trig: None },
            ],
        });
        let m =
            ModelInstance::new(Coupling::laplacian(2), v, BaseDynamics::fixed1(0.0), 0.0).unwrap();
        let err = scan_fiber_1d(&m, &[0.0], 128).unwrap_err();
        assert!(matches!(err, Error::Resolution(_)), "{err:?}");
    }

    #[test]
    fn double_well_2d_sheets() {
        let m = dw(0.01, Mode::TwoD);
        let rep = scan_fiber_2d(&m, &[0.0], 9, 96).unwrap();
        assert_eq!(rep.n_almost_horizontal, 2, "{}", rep.sheets.len());
        for sheet in rep.almost_horizontal() {
            assert!(sheet.max_leaf_slope < 0.002, "{}", sheet.max_leaf_slope);
            assert_eq!(sheet.leaves_x.len(), 9);
            assert_eq!(sheet.leaves_z.len(), 9);
        }
    }

    #[test]
    fn scan_2d_rejects_epsilon_zero() {
        let m = dw(0.0, Mode::TwoD);
        assert!(matches!(scan_fiber_2d(&m, &[0.0], 9, 64), Err(Error::Contract(_))));
    }

    #[test]
    fn linear_2d_leaf_slopes_shrink_with_epsilon() {
        let s_at = |eps: f64| {
            let m = lin(eps, Mode::TwoD);
            let rep = scan_fiber_2d(&m, &[0.0], 9, 96).unwrap();
            assert_eq!(rep.sheets.len(), 1);
            rep.sheets[0].max_leaf_slope
        };
        let (s1, s2) = (s_at(0.1), s_at(0.01));
        assert!((s1 / s2 - 10.0).abs() < 1.5, "{s1} / {s2}");
    }

    #[test]
    fn projection_bound_double_well() {
        let m = dw(0.1, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 512).unwrap();
        let check = check_projection_bound(&rep, &m, None).unwrap();
        assert_eq!(check.per_component.len(), 2);
        assert!(check.all_pass, "{check:?}");
    }

    #[test]
    fn projection_bound_scales_with_epsilon_linear() {
        let m = lin(0.1, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 512).unwrap();
        let check = check_projection_bound(&rep, &m, None).unwrap();
        // K₂ ≈ 1/ε for V = x, so the bound is about 2·(1/8)·ε
        let b = check.per_component[0].bound_local;
        assert!((b - 2.0 * 0.125 * 0.1).abs() < 0.01, "{b}");
        assert!(check.all_pass);
    }

    #[test]
    fn degenerate_width_fails_bound() {
        let comp = PlanarComponent {
            points: vec![(-1.0, 0.5), (1.0, 0.5)],
            endpoints: (WallTag::Left, WallTag::Right),
            max_abs_slope: 0.0,
            almost_horizontal: true,
            graph_over_x: true,
            y_range: (0.5, 0.5),
        };
        let m = dw(0.1, Mode::OneD);
        let rep = FiberReport {
            theta: vec![0.0],
            epsilon: 0.1,
            grid: 64,
            frozen: None,
            components: vec![comp],
            n_almost_horizontal: 1,
            min_projection_width: Some(0.0),
            slope_margin: 1.0,
            covers_x: true,
        };
        let check = check_projection_bound(&rep, &m, None).unwrap();
        assert!(!check.all_pass);
    }

    #[test]
    fn resolution_stability_of_slope() {
        let m = dw(0.05, Mode::OneD);
        let a = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let b = scan_fiber_1d(&m, &[0.0], 512).unwrap();
        for (ca, cb) in a.almost_horizontal().zip(b.almost_horizontal()) {
            let rel = (ca.max_abs_slope - cb.max_abs_slope).abs() / cb.max_abs_slope;
            assert!(rel < 0.05, "slope drift {rel}");
        }
    }

    #[test]
    fn residual_on_polyline_points() {
        let m = dw(0.05, Mode::OneD);
        let rep = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        for comp in &rep.components {
            for &(x, y) in &comp.points {
                let r = m.eval_f(&[0.0], &[x, y]).unwrap().abs();
                assert!(r <= 1e-10, "residual {r} at ({x}, {y})");
            }
        }
    }
}

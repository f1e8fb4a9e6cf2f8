//! Refinement trees: pull the working interval (or square) back through the
//! almost-horizontal component graphs, fiber by fiber, and certify Cantor
//! structure at finite depth.
//!
//! Branch indices count almost-horizontal components per fiber, in the
//! fiber report's y-order. Interval endpoints are computed by root solves on
//! the chosen component (not by polyline interpolation), so nested intervals
//! stay sharp down to machine precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::{FiberReport, FiberReport2, PlanarComponent};
use crate::model::{Mode, ModelInstance};
use crate::numerics::{bisect, linear_fit};

/// Set-inclusion slack for the nesting checks.
pub const NESTING_SLACK: f64 = 1e-10;

/// Relative allowance in the diameter-law check, covering the finite
/// resolution of the slope measurement.
pub const DIAMETER_ALLOWANCE: f64 = 1e-3;

/// One interval node of a refinement tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Index into the previous level; the root has none.
    pub parent: Option<usize>,
    /// Branch chosen at the deepest fiber of this node's itinerary.
    pub branch: usize,
    pub interval: (f64, f64),
    pub diameter: f64,
}

/// Nested interval sets produced by pulling I back through component graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTree {
    pub depth: usize,
    /// levels[d] holds the depth-d nodes; level 0 is the single root I.
    pub levels: Vec<Vec<TreeNode>>,
    /// Almost-horizontal component count per fiber.
    pub branch_counts: Vec<usize>,
    /// Node count per level (∏ branch counts when the full tree is built).
    pub component_counts: Vec<usize>,
    pub max_diameter: Vec<f64>,
    /// Largest almost-horizontal slope seen across the fibers used.
    pub max_slope: f64,
}

fn itinerary_from_levels(levels: &[Vec<TreeNode>], depth: usize, index: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(depth);
    let mut d = depth;
    let mut i = index;
    while d > 0 {
        let node = &levels[d][i];
        out.push(node.branch);
        i = node.parent.expect("non-root node has a parent");
        d -= 1;
    }
    out.reverse();
    out
}

impl RefinementTree {
    /// Itinerary of a node: branch choices from the root down.
    pub fn itinerary_of(&self, depth: usize, index: usize) -> Vec<usize> {
        itinerary_from_levels(&self.levels, depth, index)
    }
}

/// Evaluate the graph y = φ(x) of one almost-horizontal component by a root
/// solve bracketed around the polyline's interpolant.
fn graph_eval(
    m: &ModelInstance,
    site: i64,
    comp: &PlanarComponent,
    grid: usize,
    x: f64,
) -> Result<f64> {
    let guess = comp.y_at(x).ok_or_else(|| {
        Error::Resolution(format!(
            "component does not cover x = {x}; it is not a graph over the full interval"
        ))
    })?;
    let g = |y: f64| m.eval_site(site, &[x, y]).expect("arity");
    let mut w = 4.0 / grid as f64;
    for _ in 0..10 {
        let lo = (guess - w).max(-1.0);
        let hi = (guess + w).min(1.0);
        let (glo, ghi) = (g(lo), g(hi));
        if glo == 0.0 {
            return Ok(lo);
        }
        if ghi == 0.0 {
            return Ok(hi);
        }
        if glo * ghi < 0.0 {
            return Ok(bisect(g, lo, hi, 0.0));
        }
        w *= 2.0;
        if w > 0.5 {
            break;
        }
    }
    Err(Error::Resolution(format!(
        "no bracketed root near the component at x = {x} (guess y = {guess}); the fiber scan and \
         the model disagree"
    )))
}

/// Image [min φ, max φ] of [u, v] under the component graph. The polyline
/// supplies the shape; non-monotone stretches get their extrema refined by
/// ternary search on the true graph.
fn graph_image(
    m: &ModelInstance,
    site: i64,
    comp: &PlanarComponent,
    grid: usize,
    u: f64,
    v: f64,
) -> Result<(f64, f64)> {
    let fu = graph_eval(m, site, comp, grid, u)?;
    let fv = graph_eval(m, site, comp, grid, v)?;
    let mut lo = fu.min(fv);
    let mut hi = fu.max(fv);

    let inner: Vec<(f64, f64)> = comp
        .points
        .iter()
        .copied()
        .filter(|&(x, _)| x > u && x < v)
        .collect();
    let monotone = {
        let mut seq = Vec::with_capacity(inner.len() + 2);
        seq.push(fu);
        seq.extend(inner.iter().map(|&(_, y)| y));
        seq.push(fv);
        seq.windows(2).all(|w| w[1] >= w[0]) || seq.windows(2).all(|w| w[1] <= w[0])
    };
    if monotone {
        return Ok((lo, hi));
    }

    let mut xs = Vec::with_capacity(inner.len() + 2);
    xs.push((u, fu));
    xs.extend(inner);
    xs.push((v, fv));
    for w in xs.windows(3) {
        let rising_in = w[1].1 >= w[0].1;
        let rising_out = w[2].1 >= w[1].1;
        if rising_in == rising_out {
            continue;
        }
        let maximize = rising_in;
        let (mut a, mut b) = (w[0].0, w[2].0);
        for _ in 0..200 {
            if b - a < 1e-14 {
                break;
            }
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            let f1 = graph_eval(m, site, comp, grid, m1)?;
            let f2 = graph_eval(m, site, comp, grid, m2)?;
            lo = lo.min(f1.min(f2));
            hi = hi.max(f1.max(f2));
            let keep_left = if maximize { f1 > f2 } else { f1 < f2 };
            if keep_left {
                b = m2;
            } else {
                a = m1;
            }
        }
        let mid = 0.5 * (a + b);
        let fm = graph_eval(m, site, comp, grid, mid)?;
        lo = lo.min(fm);
        hi = hi.max(fm);
    }
    Ok((lo, hi))
}

fn ah_components(report: &FiberReport) -> Vec<&PlanarComponent> {
    report.components.iter().filter(|c| c.almost_horizontal).collect()
}

/// Build the one-dimensional refinement tree over `fibers[i]` = fiber at
/// site i. Depth equals the number of fibers. With an itinerary the tree is
/// a single path; otherwise it branches over every almost-horizontal
/// component.
pub fn refine_1d(
    m: &ModelInstance,
    fibers: &[FiberReport],
    itinerary: Option<&[usize]>,
) -> Result<RefinementTree> {
    if m.mode() != Mode::OneD {
        return Err(Error::Contract(
            "interval refinement works on one-dimensional models; use the region refinement for \
             two-dimensional ones"
                .into(),
        ));
    }
    if let Some(it) = itinerary {
        if it.len() != fibers.len() {
            return Err(Error::Contract(format!(
                "itinerary length {} does not match fiber count {}",
                it.len(),
                fibers.len()
            )));
        }
    }
    let mut branch_counts = Vec::with_capacity(fibers.len());
    let mut max_slope = 0.0_f64;
    for (i, rep) in fibers.iter().enumerate() {
        let ah = ah_components(rep);
        if ah.is_empty() {
            return Err(Error::Hypothesis(format!(
                "fiber {i} has no almost-horizontal component; the refinement hypotheses fail"
            )));
        }
        if rep.slope_margin <= 0.0 {
            return Err(Error::Hypothesis(format!(
                "fiber {i} has almost-horizontal slope ≥ 1 (margin {}); contraction fails",
                rep.slope_margin
            )));
        }
        max_slope = max_slope.max(1.0 - rep.slope_margin);
        branch_counts.push(ah.len());
    }

    let depth = fibers.len();
    let mut levels: Vec<Vec<TreeNode>> = Vec::with_capacity(depth + 1);
    levels.push(vec![TreeNode { parent: None, branch: 0, interval: (-1.0, 1.0), diameter: 2.0 }]);

    // every node's interval is the composition φ_0 ∘ … ∘ φ_{d−1}(I) for its
    // itinerary, rebuilt from the innermost fiber outwards
    for d in 1..=depth {
        let mut nodes = Vec::new();
        for pi in 0..levels[d - 1].len() {
            let prefix = itinerary_from_levels(&levels, d - 1, pi);
            let choices: Vec<usize> = match itinerary {
                Some(it) => vec![it[d - 1]],
                None => (0..branch_counts[d - 1]).collect(),
            };
            for &j in &choices {
                if j >= branch_counts[d - 1] {
                    return Err(Error::Contract(format!(
                        "itinerary index {j} out of range at fiber {} ({} branches)",
                        d - 1,
                        branch_counts[d - 1]
                    )));
                }
                let mut path = prefix.clone();
                path.push(j);
                let mut interval = (-1.0_f64, 1.0_f64);
                for (site, &jj) in path.iter().enumerate().rev() {
                    let rep = &fibers[site];
                    let comp = ah_components(rep)[jj];
                    interval =
                        graph_image(m, site as i64, comp, rep.grid, interval.0, interval.1)?;
                }
                nodes.push(TreeNode {
                    parent: Some(pi),
                    branch: j,
                    interval,
                    diameter: interval.1 - interval.0,
                });
            }
        }
        levels.push(nodes);
    }

    let component_counts: Vec<usize> = levels.iter().map(|l| l.len()).collect();
    let max_diameter: Vec<f64> = levels
        .iter()
        .map(|l| l.iter().map(|n| n.diameter).fold(0.0_f64, f64::max))
        .collect();
    Ok(RefinementTree { depth, levels, branch_counts, component_counts, max_diameter, max_slope })
}

/// Certificate of Cantor structure at finite depth. The infinitely-many-
/// splits hypothesis is replaced by the recorded split density — explicitly
/// a finite-depth surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorCertificate {
    pub depth: usize,
    pub delta_claim: f64,
    pub max_diameter: f64,
    /// 2(1−δ)^depth for the claimed δ.
    pub contraction_bound: f64,
    /// Smallest distance between sibling intervals at any split.
    pub min_gap: f64,
    /// Levels whose fiber carries at least two branches.
    pub split_depths: Vec<usize>,
    pub split_density_required: f64,
    pub box_dim_estimate: Option<f64>,
    pub box_dim_fit_residual: Option<f64>,
    pub diameter_ok: bool,
    pub splits_ok: bool,
    pub nesting_ok: bool,
    pub counts_ok: bool,
    pub density_ok: bool,
}

impl CantorCertificate {
    pub fn pass(&self) -> bool {
        self.diameter_ok && self.splits_ok && self.nesting_ok && self.counts_ok && self.density_ok
    }
}

/// Check the Cantor clauses of a refinement tree against a claimed slope
/// margin δ and split density ρ.
pub fn certify(tree: &RefinementTree, delta_claim: f64, rho: f64) -> Result<CantorCertificate> {
    if tree.depth < 3 {
        return Err(Error::Contract(format!(
            "certification needs depth ≥ 3, got {}",
            tree.depth
        )));
    }
    let depth = tree.depth;
    let max_diameter = tree.max_diameter[depth];
    let contraction_bound = 2.0 * (1.0 - delta_claim).powi(depth as i32);
    let diameter_ok = max_diameter <= contraction_bound * (1.0 + DIAMETER_ALLOWANCE);

    let mut nesting_ok = true;
    for d in 1..=depth {
        for node in &tree.levels[d] {
            let p = &tree.levels[d - 1][node.parent.expect("non-root")];
            if node.interval.0 < p.interval.0 - NESTING_SLACK
                || node.interval.1 > p.interval.1 + NESTING_SLACK
            {
                nesting_ok = false;
            }
        }
    }
    let mut counts_ok = true;
    let mut expect = 1usize;
    for d in 0..=depth {
        if tree.component_counts[d] != expect {
            counts_ok = false;
        }
        if d < depth {
            expect = expect.saturating_mul(tree.branch_counts[d]);
        }
    }

    let split_depths: Vec<usize> =
        (0..depth).filter(|&d| tree.branch_counts[d] >= 2).map(|d| d + 1).collect();
    let mut min_gap = f64::INFINITY;
    let mut splits_ok = !split_depths.is_empty();
    for &d in &split_depths {
        let mut by_parent: std::collections::BTreeMap<usize, Vec<&TreeNode>> = Default::default();
        for node in &tree.levels[d] {
            by_parent.entry(node.parent.expect("non-root")).or_default().push(node);
        }
        for (_, sibs) in by_parent {
            if sibs.len() < 2 {
                splits_ok = false;
                continue;
            }
            let mut sorted = sibs.clone();
            sorted.sort_by(|a, b| a.interval.0.partial_cmp(&b.interval.0).unwrap());
            for w in sorted.windows(2) {
                let gap = w[1].interval.0 - w[0].interval.1;
                min_gap = min_gap.min(gap);
                if gap <= 0.0 {
                    splits_ok = false;
                }
            }
        }
    }
    let required = (rho * depth as f64).ceil() as usize;
    let density_ok = split_depths.len() >= required;

    // box-counting estimate: log(count) against −log(diameter), depths ≥ 3
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in 3..=depth {
        let diam = tree.max_diameter[d];
        if diam > 0.0 {
            xs.push(-(diam.ln()));
            ys.push((tree.component_counts[d] as f64).ln());
        }
    }
    let (box_dim, fit_res) = if xs.len() >= 2 {
        let (slope, _icpt, res) = linear_fit(&xs, &ys);
        (Some(slope), Some(res))
    } else {
        (None, None)
    };

    Ok(CantorCertificate {
        depth,
        delta_claim,
        max_diameter,
        contraction_bound,
        min_gap: if min_gap.is_finite() { min_gap } else { 0.0 },
        split_depths,
        split_density_required: rho,
        box_dim_estimate: box_dim,
        box_dim_fit_residual: fit_res,
        diameter_ok,
        splits_ok,
        nesting_ok,
        counts_ok,
        density_ok,
    })
}

// ---------------------------------------------------------------------------
// two-dimensional refinement: rectangles in the (x_k, x_{k−1}) plane
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle bounding one pullback region, with the sampling
/// slack that was added to each side. True pullbacks are thin diagonal
/// strips; `strip_width` records the largest extent of the exact strip in
/// the contracting coordinate, which the bounding box necessarily inflates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRect {
    pub parent: Option<usize>,
    pub branch: usize,
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub slack: f64,
    pub strip_width: f64,
}

impl RegionRect {
    pub fn intersect(&self, other: &RegionRect) -> Option<(f64, f64, f64, f64)> {
        let y0 = self.y.0.max(other.y.0);
        let y1 = self.y.1.min(other.y.1);
        let z0 = self.z.0.max(other.z.0);
        let z1 = self.z.1.min(other.z.1);
        (y0 <= y1 && z0 <= z1).then_some((y0, y1, z0, z1))
    }
}

/// One intersection region: a forward region meets a backward region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WRegion {
    pub forward_index: usize,
    pub backward_index: usize,
    pub y: (f64, f64),
    pub z: (f64, f64),
}

/// Refinement of a two-dimensional fiber in both orbit directions. All
/// regions live in the (x_k, x_{k−1}) plane over the chosen central sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTree2 {
    pub depth: usize,
    pub central_sheet: usize,
    /// Forward pullback regions per level (constraints on future sites).
    pub forward: Vec<Vec<RegionRect>>,
    /// Backward pullback regions per level (constraints on past sites).
    pub backward: Vec<Vec<RegionRect>>,
    /// Intersections per level.
    pub w: Vec<Vec<WRegion>>,
    pub branch_counts_forward: Vec<usize>,
    pub branch_counts_backward: Vec<usize>,
    /// Largest exact strip extent per level: forward pullbacks contract in
    /// y, backward ones in z.
    pub forward_y_width: Vec<f64>,
    pub backward_z_width: Vec<f64>,
}

impl RefinementTree2 {
    pub fn w_counts(&self) -> Vec<usize> {
        self.w.iter().map(|l| l.len()).collect()
    }
}

fn itinerary_of_rect(levels: &[Vec<RegionRect>], depth: usize, index: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(depth);
    let mut d = depth;
    let mut i = index;
    while d > 0 {
        let node = &levels[d][i];
        out.push(node.branch);
        i = node.parent.expect("non-root");
        d -= 1;
    }
    out.reverse();
    out
}

/// Monotone root solve of the site equation in the first (slot 0) or last
/// (slot 2) lattice argument. The bracket expands beyond I so that orbit
/// chains stay defined even where they leave the working square — band
/// membership, checked separately, is what confines regions to I.
fn site_root(m: &ModelInstance, site: i64, slot: usize, fixed: [f64; 2]) -> Option<f64> {
    let g = |t: f64| {
        let args = match slot {
            0 => [t, fixed[0], fixed[1]],
            _ => [fixed[0], fixed[1], t],
        };
        m.eval_site(site, &args).expect("arity")
    };
    let mut b = 1.0;
    for _ in 0..16 {
        let (glo, ghi) = (g(-b), g(b));
        if glo == 0.0 {
            return Some(-b);
        }
        if ghi == 0.0 {
            return Some(b);
        }
        if glo * ghi < 0.0 {
            return Some(bisect(g, -b, b, 0.0));
        }
        b *= 2.0;
    }
    None
}

fn sheet_bands(rep: &FiberReport2) -> Vec<(f64, f64)> {
    rep.sheets
        .iter()
        .filter(|s| s.almost_horizontal)
        .map(|s| s.y_range)
        .collect()
}

const BAND_TOL: f64 = 1e-9;

struct DirectionScan<'a> {
    m: &'a ModelInstance,
    center: i64,
    /// bands[i] = almost-horizontal sheet bands of fiber center ± (i+1).
    bands: Vec<Vec<(f64, f64)>>,
    forward: bool,
}

impl DirectionScan<'_> {
    /// The orbit coordinate `steps` sites away from the center, as a
    /// function of the starting pair (y, z) = (x_k, x_{k−1}). `None` when a
    /// root solve along the way finds no root inside I.
    fn chain_value(&self, y: f64, z: f64, steps: usize) -> Option<f64> {
        if self.forward {
            let (mut cur, mut prev) = (y, z);
            for i in 0..steps {
                let next = site_root(self.m, self.center + i as i64, 0, [cur, prev])?;
                prev = cur;
                cur = next;
            }
            Some(cur)
        } else {
            // x_{k−1} is the input z itself; deeper values need solves
            let (mut hi, mut lo) = (y, z);
            for i in 1..steps {
                let next = site_root(self.m, self.center - i as i64, 2, [hi, lo])?;
                hi = lo;
                lo = next;
            }
            Some(lo)
        }
    }

    /// The chain value as a function of the contracting coordinate: y for
    /// the forward direction, z for the backward one. `w` is the other
    /// (sliced) coordinate.
    fn chain_at(&self, u: f64, w: f64, steps: usize) -> Option<f64> {
        if self.forward {
            self.chain_value(u, w, steps)
        } else {
            self.chain_value(w, u, steps)
        }
    }

    /// Shrink an interval of the contracting coordinate at a fixed slice by
    /// the step-(i+1) band constraint: the preimage of the band under the
    /// chain-value map. Band-level crossings are bracketed on a sample grid
    /// and bisected to machine precision; samples inside the band and all
    /// crossings bound the new interval.
    fn shrink(&self, w: f64, iv: (f64, f64), step: usize, band: (f64, f64)) -> Option<(f64, f64)> {
        let (a, b) = iv;
        let val = |u: f64| self.chain_at(u, w, step);
        let (lo, hi) = (band.0 - BAND_TOL, band.1 + BAND_TOL);

        let n = 96;
        let h = (b - a) / n as f64;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        let mut cover = |y: f64| {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        };
        // bisect the level crossing v(y) = t inside a bracketing cell
        let crossing = |t: f64, mut p: f64, vp: f64, mut q: f64| -> f64 {
            let mut below_p = vp < t;
            for _ in 0..80 {
                let mid = 0.5 * (p + q);
                if mid == p || mid == q {
                    break;
                }
                match val(mid) {
                    Some(vm) => {
                        if (vm < t) == below_p {
                            p = mid;
                        } else {
                            q = mid;
                        }
                    }
                    None => {
                        // undefined values sit far outside every band
                        q = mid;
                        let _ = &mut below_p;
                    }
                }
            }
            0.5 * (p + q)
        };

        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=(if h == 0.0 { 0 } else { n }) {
            let u = if i == n { b } else { a + i as f64 * h };
            let Some(v) = val(u) else {
                prev = None;
                continue;
            };
            if v >= lo && v <= hi {
                cover(u);
            }
            if let Some((pu, pv)) = prev {
                for t in [lo, hi] {
                    if (pv < t) != (v < t) {
                        cover(crossing(t, pu, pv, u));
                    }
                }
            }
            prev = Some((u, v));
        }
        (y_lo.is_finite() && y_hi >= y_lo).then_some((y_lo, y_hi))
    }

    /// The pullback strip of the contracting coordinate at one slice value,
    /// walking all band constraints of the itinerary. `root` is the
    /// level-0 interval of the contracting coordinate.
    fn slice_strip(&self, w: f64, its: &[usize], root: (f64, f64)) -> Option<(f64, f64)> {
        let mut iv = root;
        for (i, &j) in its.iter().enumerate() {
            iv = self.shrink(w, iv, i + 1, self.bands[i][j])?;
        }
        Some(iv)
    }
}

/// Sampling resolution for the region bounding boxes: the strip of the
/// contracting coordinate is located exactly per slice, so only the slice
/// count along the other axis matters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSampling {
    pub slices: usize,
}

impl Default for RegionSampling {
    fn default() -> Self {
        RegionSampling { slices: 48 }
    }
}

/// Branch choices for a two-direction refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary2 {
    pub forward: Vec<usize>,
    pub backward: Vec<usize>,
}

/// Build depth-n forward and backward pullback regions over the chosen
/// central sheet and intersect them. `fibers` covers sites
/// center−n ‥ center+n in order; the central report sits at index n and the
/// base dynamics' site numbering puts the center at `center_site`.
pub fn refine_2d(
    m: &ModelInstance,
    fibers: &[FiberReport2],
    center_site: i64,
    central_sheet: usize,
    depth: usize,
    itinerary: Option<&Itinerary2>,
    sampling: RegionSampling,
) -> Result<RefinementTree2> {
    if m.mode() != Mode::TwoD {
        return Err(Error::Contract("region refinement needs a two-dimensional model".into()));
    }
    if fibers.len() != 2 * depth + 1 {
        return Err(Error::Contract(format!(
            "need {} fiber reports for depth {depth} (center ± depth), got {}",
            2 * depth + 1,
            fibers.len()
        )));
    }
    for (i, rep) in fibers.iter().enumerate() {
        if rep.n_almost_horizontal == 0 {
            return Err(Error::Hypothesis(format!(
                "fiber at offset {} has no almost-horizontal sheet",
                i as i64 - depth as i64
            )));
        }
        if rep.slope_margin <= 0.0 {
            return Err(Error::Hypothesis(format!(
                "fiber at offset {} has leaf slope ≥ 1; contraction fails",
                i as i64 - depth as i64
            )));
        }
    }
    if let Some(it) = itinerary {
        if it.forward.len() != depth || it.backward.len() != depth {
            return Err(Error::Contract(format!(
                "two-direction itinerary needs {depth} entries per direction"
            )));
        }
    }
    let center_idx = depth;
    let central_bands = sheet_bands(&fibers[center_idx]);
    let central = *central_bands.get(central_sheet).ok_or_else(|| {
        Error::Contract(format!(
            "central sheet index {central_sheet} out of range ({} almost-horizontal sheets)",
            central_bands.len()
        ))
    })?;

    let fwd_bands: Vec<Vec<(f64, f64)>> =
        (1..=depth).map(|i| sheet_bands(&fibers[center_idx + i])).collect();
    let bwd_bands: Vec<Vec<(f64, f64)>> =
        (1..=depth).map(|i| sheet_bands(&fibers[center_idx - i])).collect();
    let branch_fwd: Vec<usize> = fwd_bands.iter().map(|b| b.len()).collect();
    let branch_bwd: Vec<usize> = bwd_bands.iter().map(|b| b.len()).collect();

    let scan_fwd = DirectionScan { m, center: center_site, bands: fwd_bands, forward: true };
    let scan_bwd = DirectionScan { m, center: center_site, bands: bwd_bands, forward: false };

    // level 0: the central sheet's (y, z)-domain, a band × the full interval
    let root = RegionRect {
        parent: None,
        branch: 0,
        y: central,
        z: (-1.0, 1.0),
        slack: 0.0,
        strip_width: central.1 - central.0,
    };

    // constraints confine y going forward and z going backward, so each
    // direction slices along its non-contracting axis and locates the strip
    // of the contracting one exactly
    let build = |scan: &DirectionScan, branch_counts: &[usize], picked: Option<&[usize]>| -> Result<Vec<Vec<RegionRect>>> {
        let mut levels: Vec<Vec<RegionRect>> = vec![vec![root]];
        for d in 1..=depth {
            let mut nodes = Vec::new();
            for pi in 0..levels[d - 1].len() {
                let parent = levels[d - 1][pi];
                let choices: Vec<usize> = match picked {
                    Some(it) => vec![it[d - 1]],
                    None => (0..branch_counts[d - 1]).collect(),
                };
                for &j in &choices {
                    if j >= branch_counts[d - 1] {
                        return Err(Error::Contract(format!(
                            "itinerary index {j} out of range at offset {d} ({} sheets)",
                            branch_counts[d - 1]
                        )));
                    }
                    let mut its = itinerary_of_rect(&levels, d - 1, pi);
                    its.push(j);
                    let (slice_range, root_u) =
                        if scan.forward { (parent.z, central) } else { (parent.y, (-1.0, 1.0)) };
                    let (w0, w1) = slice_range;
                    let dw = (w1 - w0) / sampling.slices.max(1) as f64;
                    let mut u_lo = f64::INFINITY;
                    let mut u_hi = f64::NEG_INFINITY;
                    let mut w_lo = f64::INFINITY;
                    let mut w_hi = f64::NEG_INFINITY;
                    let mut drift = 0.0_f64;
                    let mut strip_width = 0.0_f64;
                    let mut prev_strip: Option<(f64, f64)> = None;
                    for iw in 0..=sampling.slices {
                        let w = if dw == 0.0 { w0 } else { w0 + iw as f64 * dw };
                        match scan.slice_strip(w, &its, root_u) {
                            Some((s0, s1)) => {
                                u_lo = u_lo.min(s0);
                                u_hi = u_hi.max(s1);
                                w_lo = w_lo.min(w);
                                w_hi = w_hi.max(w);
                                strip_width = strip_width.max(s1 - s0);
                                if let Some((p0, p1)) = prev_strip {
                                    drift = drift.max((s0 - p0).abs()).max((s1 - p1).abs());
                                }
                                prev_strip = Some((s0, s1));
                            }
                            None => prev_strip = None,
                        }
                    }
                    if !u_lo.is_finite() {
                        return Err(Error::Resolution(format!(
                            "pullback region for itinerary {its:?} came up empty at {} slices; \
                             refine the sampling",
                            sampling.slices
                        )));
                    }
                    let (y, z) = if scan.forward {
                        (
                            ((u_lo - drift).max(parent.y.0), (u_hi + drift).min(parent.y.1)),
                            ((w_lo - dw).max(parent.z.0), (w_hi + dw).min(parent.z.1)),
                        )
                    } else {
                        (
                            ((w_lo - dw).max(parent.y.0), (w_hi + dw).min(parent.y.1)),
                            ((u_lo - drift).max(parent.z.0), (u_hi + drift).min(parent.z.1)),
                        )
                    };
                    nodes.push(RegionRect {
                        parent: Some(pi),
                        branch: j,
                        y,
                        z,
                        slack: dw.max(drift),
                        strip_width,
                    });
                }
            }
            levels.push(nodes);
        }
        Ok(levels)
    };

    let forward = build(&scan_fwd, &branch_fwd, itinerary.map(|it| it.forward.as_slice()))?;
    let backward = build(&scan_bwd, &branch_bwd, itinerary.map(|it| it.backward.as_slice()))?;

    // intersections: the forward strip is re-sliced over the backward
    // node's narrow z-range, so the W-rectangle contracts in both axes
    // instead of inheriting the diagonal strips' bounding boxes
    let mut w = Vec::with_capacity(depth + 1);
    for d in 0..=depth {
        let mut level = Vec::new();
        for (fi, fr) in forward[d].iter().enumerate() {
            let f_its = itinerary_of_rect(&forward, d, fi);
            for (bi, br) in backward[d].iter().enumerate() {
                let Some((by0, by1, bz0, bz1)) = fr.intersect(br) else { continue };
                // forward strip over the intersected z-range
                let refine_slices = 8;
                let dz = (bz1 - bz0) / refine_slices as f64;
                let mut y_lo = f64::INFINITY;
                let mut y_hi = f64::NEG_INFINITY;
                let mut drift = 0.0_f64;
                let mut prev: Option<(f64, f64)> = None;
                for i in 0..=refine_slices {
                    let z = if dz == 0.0 { bz0 } else { bz0 + i as f64 * dz };
                    match scan_fwd.slice_strip(z, &f_its, central) {
                        Some((s0, s1)) => {
                            y_lo = y_lo.min(s0);
                            y_hi = y_hi.max(s1);
                            if let Some((p0, p1)) = prev {
                                drift = drift.max((s0 - p0).abs()).max((s1 - p1).abs());
                            }
                            prev = Some((s0, s1));
                        }
                        None => prev = None,
                    }
                }
                if !y_lo.is_finite() {
                    continue;
                }
                let y0 = (y_lo - drift).max(by0);
                let y1 = (y_hi + drift).min(by1);
                if y1 < y0 {
                    continue;
                }
                level.push(WRegion {
                    forward_index: fi,
                    backward_index: bi,
                    y: (y0, y1),
                    z: (bz0, bz1),
                });
            }
        }
        w.push(level);
    }

    let forward_y_width = forward
        .iter()
        .map(|l| l.iter().map(|r| r.strip_width).fold(0.0_f64, f64::max))
        .collect();
    let backward_z_width = backward
        .iter()
        .map(|l| l.iter().map(|r| r.strip_width).fold(0.0_f64, f64::max))
        .collect();

    Ok(RefinementTree2 {
        depth,
        central_sheet,
        forward,
        backward,
        w,
        branch_counts_forward: branch_fwd,
        branch_counts_backward: branch_bwd,
        forward_y_width,
        backward_z_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::scan_fiber_1d;
    use crate::model::{builtin_model, BuiltinParams};

    fn dw1(eps: f64) -> ModelInstance {
        builtin_model(
            "double-well",
            &BuiltinParams { epsilon: Some(eps), mode: Some(Mode::OneD), ..Default::default() },
        )
        .unwrap()
    }

    fn lin1(eps: f64) -> ModelInstance {
        builtin_model(
            "linear",
            &BuiltinParams { epsilon: Some(eps), mode: Some(Mode::OneD), ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn depth_zero_root_is_i() {
        let m = dw1(0.1);
        let tree = refine_1d(&m, &[], None).unwrap();
        assert_eq!(tree.depth, 0);
        assert_eq!(tree.levels[0][0].interval, (-1.0, 1.0));
        assert_eq!(tree.levels[0][0].diameter, 2.0);
    }

    #[test]
    fn double_well_counts_double_per_level() {
        let m = dw1(0.1);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 5];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        assert_eq!(tree.component_counts, vec![1, 2, 4, 8, 16, 32]);
        for d in 2..=5 {
            let ratio = tree.max_diameter[d] / tree.max_diameter[d - 1];
            assert!(ratio <= tree.max_slope * 1.05, "level {d}: ratio {ratio}");
        }
    }

    #[test]
    fn linear_single_branch_shrinks_by_slope() {
        let m = lin1(0.1);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 6];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        assert!(tree.component_counts.iter().all(|&c| c == 1));
        let slope = (0.1 / 8.0) / (1.0 - 0.1 / 4.0);
        for d in 2..=6 {
            let ratio = tree.max_diameter[d] / tree.max_diameter[d - 1];
            assert!((ratio - slope).abs() < 0.2 * slope, "level {d}: {ratio} vs {slope}");
        }
    }

    #[test]
    fn nesting_holds_exactly() {
        let m = dw1(0.2);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 6];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        for d in 1..=tree.depth {
            for node in &tree.levels[d] {
                let p = &tree.levels[d - 1][node.parent.unwrap()];
                assert!(node.interval.0 >= p.interval.0 - NESTING_SLACK);
                assert!(node.interval.1 <= p.interval.1 + NESTING_SLACK);
            }
        }
    }

    #[test]
    fn itinerary_path_tracks_one_branch() {
        let m = dw1(0.1);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 4];
        let tree = refine_1d(&m, &fibers, Some(&[1, 1, 1, 1])).unwrap();
        assert!(tree.component_counts.iter().all(|&c| c == 1));
        let leaf = tree.levels[4][0].interval;
        assert!(leaf.0 > 0.4 && leaf.1 < 0.6, "{leaf:?}");
    }

    #[test]
    fn certificate_on_double_well_tree() {
        let m = dw1(0.2);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 6];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        let delta = 1.0 - tree.max_slope;
        let cert = certify(&tree, delta, 1.0).unwrap();
        assert!(cert.pass(), "{cert:?}");
        // sibling gaps contract with the same rate as the diameters, so the
        // minimum over all depths is tiny but must stay strictly positive
        assert!(cert.min_gap > 0.0, "{}", cert.min_gap);
        let top_gap = tree.levels[1][1].interval.0 - tree.levels[1][0].interval.1;
        assert!(top_gap > 0.9, "{top_gap}");
        // contraction s per level implies dimension log 2 / log(1/s)
        let s = tree.max_slope;
        let want = 2.0_f64.ln() / (1.0 / s).ln();
        let got = cert.box_dim_estimate.unwrap();
        assert!((got - want).abs() < 0.2 * want, "{got} vs {want}");
    }

    #[test]
    fn single_branch_fails_split_clause() {
        let m = lin1(0.1);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 4];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        let cert = certify(&tree, 0.5, 1.0).unwrap();
        assert!(!cert.splits_ok);
        assert!(!cert.pass());
    }

    #[test]
    fn delta_one_fails_diameter_clause() {
        let m = dw1(0.1);
        let fiber = scan_fiber_1d(&m, &[0.0], 256).unwrap();
        let fibers = vec![fiber; 4];
        let tree = refine_1d(&m, &fibers, None).unwrap();
        let cert = certify(&tree, 1.0, 1.0).unwrap();
        assert!(!cert.diameter_ok);
    }

    #[test]
    fn synthetic_middle_thirds_dimension() {
        // hand-built exact middle-thirds tree: the estimator must recover
        // log 2 / log 3
        let depth = 9;
        let mut levels = vec![vec![TreeNode {
            parent: None,
            branch: 0,
            interval: (0.0, 1.0),
            diameter: 1.0,
        }]];
        for d in 1..=depth {
            let mut level = Vec::new();
            for (pi, p) in levels[d - 1].iter().enumerate() {
                let (a, b) = p.interval;
                let third = (b - a) / 3.0;
                level.push(TreeNode {
                    parent: Some(pi),
                    branch: 0,
                    interval: (a, a + third),
                    diameter: third,
                });
                level.push(TreeNode {
                    parent: Some(pi),
                    branch: 1,
                    interval: (b - third, b),
                    diameter: third,
                });
            }
            levels.push(level);
        }
        let tree = RefinementTree {
            depth,
            component_counts: levels.iter().map(|l| l.len()).collect(),
            max_diameter: levels
                .iter()
                .map(|l| l.iter().map(|n| n.diameter).fold(0.0_f64, f64::max))
                .collect(),
            levels,
            branch_counts: vec![2; depth],
            max_slope: 1.0 / 3.0,
        };
        let cert = certify(&tree, 1.0 - 1.0 / 3.0, 1.0).unwrap();
        assert!(cert.pass(), "{cert:?}");
        let dim = cert.box_dim_estimate.unwrap();
        let want = 2.0_f64.ln() / 3.0_f64.ln();
        assert!((dim - want).abs() < 1e-6, "{dim} vs {want}");
    }
}

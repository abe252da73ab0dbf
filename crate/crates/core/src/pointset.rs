//! Delone point sets: generation, materialization in finite windows, geometric
//! certification, and pattern frequencies.
//!
//! Cubes follow the open sup-norm convention throughout: `Λ_L(y)` is the open cube of
//! side `L` centred at `y`, and distances between points are sup-norm distances.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stream::{SiteStream, TAG_SHIFT};

/// Hard cap on the number of points a single materialization may produce.
pub const MAX_POINTS: f64 = 5.0e7;

/// A point of the set together with its integer label in the generating frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub pos: [f64; 3],
    pub index: [i64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointSetKind {
    /// `q·ℤ^d`.
    Lattice { spacing: f64 },
    /// `q·ℤ^d` with every site moved by an independent shift in `[-s, s]^d`.
    PerturbedLattice {
        spacing: f64,
        max_shift: f64,
        shift_seed: u64,
    },
    /// Alternating `q2·ℤ^d` / `q1·ℤ^d` shells on the annuli `cl(Λ_{L_k}) \ Λ_{L_{k-1}}`,
    /// with `L_{k+1} = L_k^annulus_alpha`. Odd shells carry `q2`, even shells `q1`.
    AnnulusExample {
        q1: u32,
        q2: u32,
        annulus_alpha: f64,
        initial_side: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSetSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: PointSetKind,
}

impl PointSetSpec {
    pub fn lattice(dim: usize, spacing: f64) -> Self {
        Self {
            dim,
            kind: PointSetKind::Lattice { spacing },
        }
    }

    pub fn perturbed_lattice(dim: usize, spacing: f64, max_shift: f64, shift_seed: u64) -> Self {
        Self {
            dim,
            kind: PointSetKind::PerturbedLattice {
                spacing,
                max_shift,
                shift_seed,
            },
        }
    }

    pub fn annulus(dim: usize, q1: u32, q2: u32, annulus_alpha: f64, initial_side: f64) -> Self {
        Self {
            dim,
            kind: PointSetKind::AnnulusExample {
                q1,
                q2,
                annulus_alpha,
                initial_side,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(LabError::invalid("point_set.dim", "must be 1, 2 or 3"));
        }
        match self.kind {
            PointSetKind::Lattice { spacing } => positive("point_set.spacing", spacing),
            PointSetKind::PerturbedLattice {
                spacing, max_shift, ..
            } => {
                positive("point_set.spacing", spacing)?;
                if !(0.0..spacing / 2.0).contains(&max_shift) {
                    return Err(LabError::invalid(
                        "point_set.max_shift",
                        format!("must lie in [0, spacing/2), got {max_shift}"),
                    ));
                }
                Ok(())
            }
            PointSetKind::AnnulusExample {
                q1,
                q2,
                annulus_alpha,
                initial_side,
            } => {
                if q1 == 0 || q2 == 0 {
                    return Err(LabError::invalid("point_set.q1", "q1 and q2 must be positive"));
                }
                if q1 == q2 {
                    return Err(LabError::invalid("point_set.q2", "q1 and q2 must differ"));
                }
                if !(annulus_alpha > 1.0) {
                    return Err(LabError::invalid(
                        "point_set.annulus_alpha",
                        format!("must exceed 1, got {annulus_alpha}"),
                    ));
                }
                if !(initial_side > 1.0) {
                    return Err(LabError::invalid(
                        "point_set.initial_side",
                        "must exceed 1 so that the shells grow",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Radii `(r, R)` for which the whole infinite set is `(r, R)`-Delone by construction.
    pub fn nominal_radii(&self) -> (f64, f64) {
        match self.kind {
            PointSetKind::Lattice { spacing } => (spacing, 2.0 * spacing),
            PointSetKind::PerturbedLattice {
                spacing, max_shift, ..
            } => (spacing - 2.0 * max_shift, 2.0 * spacing + 2.0 * max_shift),
            PointSetKind::AnnulusExample { q1, q2, .. } => {
                (gcd(q1, q2) as f64, 2.0 * q1.max(q2) as f64)
            }
        }
    }

    /// Period of the translation action, when the set is periodic.
    pub fn period(&self) -> Option<f64> {
        match self.kind {
            PointSetKind::Lattice { spacing } => Some(spacing),
            _ => None,
        }
    }

    /// Side of the box `[0, t)^d` from which window translates are drawn when
    /// approximating a hull average: one period, or `R` for aperiodic sets.
    pub fn translate_range(&self) -> f64 {
        self.period().unwrap_or_else(|| self.nominal_radii().1)
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The open cube `Λ_side(center)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub dim: usize,
    pub center: [f64; 3],
    pub side: f64,
}

impl Window {
    pub fn new(dim: usize, center: &[f64], side: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) || center.len() != dim {
            return Err(LabError::invalid(
                "window.center",
                format!("expected {dim} coordinates, got {}", center.len()),
            ));
        }
        positive("window.side", side)?;
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(center);
        Ok(Self {
            dim,
            center: c,
            side,
        })
    }

    pub fn centered(dim: usize, side: f64) -> Result<Self> {
        Self::new(dim, &vec![0.0; dim], side)
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - self.side / 2.0
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + self.side / 2.0
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..self.dim).all(|j| p[j] > self.lo(j) && p[j] < self.hi(j))
    }

    /// Same centre, each face pushed out by `margin`.
    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            side: self.side + 2.0 * margin,
            ..*self
        }
    }

    pub fn translated(&self, shift: &[f64; 3]) -> Self {
        let mut center = self.center;
        for j in 0..self.dim {
            center[j] += shift[j];
        }
        Self { center, ..*self }
    }

    /// Whether the closure of `other` lies in the closure of `self`, up to `tol`.
    pub fn covers(&self, other: &Window, tol: f64) -> bool {
        (0..self.dim).all(|j| other.lo(j) >= self.lo(j) - tol && other.hi(j) <= self.hi(j) + tol)
    }
}

pub fn sup_distance(a: &[f64; 3], b: &[f64; 3], dim: usize) -> f64 {
    (0..dim).map(|j| (a[j] - b[j]).abs()).fold(0.0, f64::max)
}

fn lex_cmp(a: &[f64; 3], b: &[f64; 3], dim: usize) -> Ordering {
    for j in 0..dim {
        match a[j].partial_cmp(&b[j]) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Integer range `{i : lo < q·i < hi}`.
fn strict_index_range(lo: f64, hi: f64, q: f64) -> (i64, i64) {
    let mut first = (lo / q).floor() as i64;
    while q * first as f64 <= lo {
        first += 1;
    }
    let mut last = (hi / q).ceil() as i64;
    while q * last as f64 >= hi {
        last -= 1;
    }
    (first, last)
}

fn for_each_index(dim: usize, ranges: &[(i64, i64); 3], mut f: impl FnMut([i64; 3])) {
    let r = |j: usize| if j < dim { ranges[j] } else { (0, 0) };
    let (r0, r1, r2) = (r(0), r(1), r(2));
    for i in r0.0..=r0.1 {
        for j in r1.0..=r1.1 {
            for k in r2.0..=r2.1 {
                f([i, j, k]);
            }
        }
    }
}

fn check_budget(dim: usize, side: f64, spacing: f64) -> Result<()> {
    let estimate = (side / spacing + 2.0).powi(dim as i32);
    if estimate > MAX_POINTS {
        return Err(LabError::budget(
            "window.side",
            format!("about {estimate:.3e} points exceed the cap of {MAX_POINTS:.0e}"),
        ));
    }
    Ok(())
}

/// All points of the infinite set inside the open window, sorted lexicographically.
pub fn materialize(spec: &PointSetSpec, w: &Window) -> Result<Vec<Site>> {
    spec.validate()?;
    if w.dim != spec.dim {
        return Err(LabError::invalid("window.center", "dimension differs from point_set.dim"));
    }
    positive("window.side", w.side)?;
    let dim = spec.dim;
    let mut out = Vec::new();
    match spec.kind {
        PointSetKind::Lattice { spacing } => {
            check_budget(dim, w.side, spacing)?;
            let mut ranges = [(0, 0); 3];
            for (j, r) in ranges.iter_mut().enumerate().take(dim) {
                *r = strict_index_range(w.lo(j), w.hi(j), spacing);
            }
            for_each_index(dim, &ranges, |index| {
                let mut pos = [0.0; 3];
                for j in 0..dim {
                    pos[j] = spacing * index[j] as f64;
                }
                out.push(Site { pos, index });
            });
        }
        PointSetKind::PerturbedLattice {
            spacing,
            max_shift,
            shift_seed,
        } => {
            check_budget(dim, w.side, spacing)?;
            let grown = w.expanded(max_shift + spacing);
            let mut ranges = [(0, 0); 3];
            for (j, r) in ranges.iter_mut().enumerate().take(dim) {
                *r = strict_index_range(grown.lo(j), grown.hi(j), spacing);
            }
            let mut stream = SiteStream::new(shift_seed, TAG_SHIFT, 0);
            let mut u = [0.0; 3];
            for_each_index(dim, &ranges, |index| {
                stream.site(&index, dim, &mut u[..dim]);
                let mut pos = [0.0; 3];
                for j in 0..dim {
                    pos[j] = spacing * index[j] as f64 + max_shift * (2.0 * u[j] - 1.0);
                }
                if w.contains(&pos) {
                    out.push(Site { pos, index });
                }
            });
            out.sort_by(|a, b| lex_cmp(&a.pos, &b.pos, dim));
        }
        PointSetKind::AnnulusExample {
            q1,
            q2,
            annulus_alpha,
            initial_side,
        } => {
            let shells = AnnulusShells::new(initial_side, annulus_alpha);
            check_budget(dim, w.side, q1.min(q2) as f64)?;
            for (q, want_even) in [(q1, true), (q2, false)] {
                let q = q as f64;
                let mut ranges = [(0, 0); 3];
                for (j, r) in ranges.iter_mut().enumerate().take(dim) {
                    *r = strict_index_range(w.lo(j), w.hi(j), q);
                }
                for_each_index(dim, &ranges, |lattice| {
                    let mut pos = [0.0; 3];
                    let mut index = [0i64; 3];
                    for j in 0..dim {
                        index[j] = lattice[j] * q as i64;
                        pos[j] = index[j] as f64;
                    }
                    let radius = (0..dim).map(|j| pos[j].abs()).fold(0.0, f64::max);
                    if shells.shell_of(radius).is_multiple_of(2) {
                        if want_even {
                            out.push(Site { pos, index });
                        }
                    } else if !want_even {
                        out.push(Site { pos, index });
                    }
                });
            }
            out.sort_by(|a, b| lex_cmp(&a.pos, &b.pos, dim));
        }
    }
    Ok(out)
}

/// Side lengths of the annulus covering, tracked in log space.
#[derive(Clone, Copy, Debug)]
pub struct AnnulusShells {
    ln_first: f64,
    growth: f64,
}

impl AnnulusShells {
    pub fn new(initial_side: f64, growth: f64) -> Self {
        Self {
            ln_first: initial_side.ln(),
            growth,
        }
    }

    /// `ln L_k` for `k ≥ 1`.
    pub fn ln_side(&self, k: u32) -> f64 {
        self.ln_first * self.growth.powi(k as i32 - 1)
    }

    pub fn side(&self, k: u32) -> f64 {
        self.ln_side(k).exp()
    }

    /// Index `k` of the shell `A_k` owning a point at sup-norm radius `m`; points on a
    /// shared boundary belong to the inner shell.
    pub fn shell_of(&self, m: f64) -> u32 {
        let mut k = 1;
        while m > self.side(k) / 2.0 {
            k += 1;
        }
        k
    }
}

/// Uniform bucketing of points for sup-norm neighbourhood queries.
struct Buckets<'a> {
    sites: &'a [Site],
    dim: usize,
    cell: f64,
    map: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Buckets<'a> {
    fn new(sites: &'a [Site], dim: usize, cell: f64) -> Self {
        let mut map: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, s) in sites.iter().enumerate() {
            map.entry(Self::key_of(&s.pos, dim, cell)).or_default().push(i);
        }
        Self {
            sites,
            dim,
            cell,
            map,
        }
    }

    fn key_of(p: &[f64; 3], dim: usize, cell: f64) -> [i64; 3] {
        let mut k = [0i64; 3];
        for j in 0..dim {
            k[j] = (p[j] / cell).floor() as i64;
        }
        k
    }

    /// Indices of points in buckets within `reach` buckets of `p`.
    fn around(&self, p: &[f64; 3], reach: i64, mut f: impl FnMut(usize)) {
        let c = Self::key_of(p, self.dim, self.cell);
        let mut ranges = [(0, 0); 3];
        for j in 0..self.dim {
            ranges[j] = (c[j] - reach, c[j] + reach);
        }
        for_each_index(self.dim, &ranges, |k| {
            if let Some(v) = self.map.get(&k) {
                v.iter().copied().for_each(&mut f);
            }
        });
    }

    /// Points with sup-distance at most `radius` from `p`.
    fn within(&self, p: &[f64; 3], radius: f64, mut f: impl FnMut(usize)) {
        let reach = (radius / self.cell).ceil() as i64;
        self.around(p, reach, |i| {
            if sup_distance(&self.sites[i].pos, p, self.dim) <= radius {
                f(i)
            }
        });
    }

    /// Sup-distance from `p` to the nearest point; `None` once `limit` buckets are exhausted.
    fn nearest(&self, p: &[f64; 3], limit: i64) -> Option<f64> {
        let mut best = f64::INFINITY;
        for ring in 0..=limit {
            self.around(p, ring, |i| {
                best = best.min(sup_distance(&self.sites[i].pos, p, self.dim));
            });
            // Anything outside the ring is at least `ring * cell` away.
            if best <= ring as f64 * self.cell {
                return Some(best);
            }
        }
        best.is_finite().then_some(best)
    }
}

/// Smallest sup-norm distance between two distinct points.
pub fn min_pairwise_gap(sites: &[Site], dim: usize) -> Option<f64> {
    if sites.len() < 2 {
        return None;
    }
    if dim == 1 {
        return sites.windows(2).map(|w| (w[1].pos[0] - w[0].pos[0]).abs()).reduce(f64::min);
    }
    let (lo, hi) = bounding_box(sites, dim);
    let extent = (0..dim).map(|j| hi[j] - lo[j]).fold(0.0, f64::max).max(1e-12);
    let cell = (extent.powi(dim as i32) / sites.len() as f64).powf(1.0 / dim as f64);
    let buckets = Buckets::new(sites, dim, cell);
    let mut best = f64::INFINITY;
    for (i, s) in sites.iter().enumerate() {
        buckets.around(&s.pos, 1, |k| {
            if k != i {
                best = best.min(sup_distance(&s.pos, &sites[k].pos, dim));
            }
        });
    }
    if best > cell {
        // Neighbouring buckets only see pairs closer than one cell.
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                best = best.min(sup_distance(&a.pos, &b.pos, dim));
            }
        }
    }
    Some(best)
}

fn bounding_box(sites: &[Site], dim: usize) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for s in sites {
        for j in 0..dim {
            lo[j] = lo[j].min(s.pos[j]);
            hi[j] = hi[j].max(s.pos[j]);
        }
    }
    (lo, hi)
}

/// Rigorous cube-counting bounds for an `(r, R)`-Delone set: an open cube of side `L`
/// holds `⌊L/R⌋^d` disjoint `R`-cubes and is covered by `⌈L/r⌉^d` half-open `r`-cubes.
pub fn counting_bounds(side: f64, r: f64, big_r: f64, dim: usize) -> (u64, u64) {
    let lo = (side / big_r).floor().max(0.0).powi(dim as i32);
    let hi = (side / r).ceil().powi(dim as i32);
    (lo as u64, hi as u64)
}

/// Numerically certified Delone radii on a finite window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeloneCertificate {
    /// Minimal sup-norm gap between materialized points.
    pub r_hat: f64,
    /// A relative-denseness radius valid for every point of the probed region,
    /// `2·(largest probe gap) + probe_spacing`.
    pub big_r_hat: f64,
    /// Largest sup-distance from a probe to its nearest point.
    pub max_probe_gap: f64,
    pub window_checked: Window,
    pub probe_spacing: f64,
    pub probes: usize,
    pub counting_checks: usize,
}

pub fn verify_delone(spec: &PointSetSpec, w: &Window, probe_spacing: f64) -> Result<DeloneCertificate> {
    let sites = materialize(spec, w)?;
    let dim = spec.dim;
    let r_hat = min_pairwise_gap(&sites, dim).ok_or_else(|| {
        LabError::invalid("window.side", "window must contain at least two points")
    })?;
    positive("probe_spacing", probe_spacing)?;
    if probe_spacing > r_hat / 4.0 + 1e-12 {
        return Err(LabError::invalid(
            "probe_spacing",
            format!("must not exceed r_hat/4 = {}", r_hat / 4.0),
        ));
    }

    // Probe the inner half of the window so that nearest points are never cut off.
    let margin = w.side / 4.0;
    let inner = Window {
        side: w.side / 2.0,
        ..*w
    };
    let per_axis = (inner.side / probe_spacing).ceil() as i64;
    let probe_count = (per_axis as f64 + 1.0).powi(dim as i32);
    if probe_count > 2.0e7 {
        return Err(LabError::budget("probe_spacing", "too many probe points"));
    }
    let cell = r_hat.max(probe_spacing);
    let buckets = Buckets::new(&sites, dim, cell);
    let limit = (margin / cell).ceil() as i64 + 1;
    let mut max_gap: f64 = 0.0;
    let mut probes = 0usize;
    let mut failed = false;
    let ranges = [(0, per_axis); 3];
    for_each_index(dim, &ranges, |k| {
        if failed {
            return;
        }
        let mut x = [0.0; 3];
        for j in 0..dim {
            x[j] = inner.lo(j) + (k[j] as f64 * probe_spacing).min(inner.side);
        }
        match buckets.nearest(&x, limit) {
            Some(g) if g < margin => max_gap = max_gap.max(g),
            _ => failed = true,
        }
        probes += 1;
    });
    if failed {
        return Err(LabError::invalid(
            "window.side",
            "window too small to certify relative denseness",
        ));
    }
    let big_r_hat = (2.0 * max_gap + probe_spacing).max(r_hat);

    // Counting bounds on interior sub-windows of side >= 2 R_hat.
    let mut checks = 0usize;
    let mut side = 2.0 * big_r_hat;
    while side <= w.side / 2.0 {
        for offset in [0.0, 0.37, -0.61] {
            let shift = [offset * (w.side - side) / 2.0; 3];
            let sub = Window { side, ..*w }.translated(&shift);
            let n = sites.iter().filter(|s| sub.contains(&s.pos)).count() as u64;
            let (lo, hi) = counting_bounds(side, r_hat, big_r_hat, dim);
            if n < lo || n > hi {
                return Err(LabError::Invariant(format!(
                    "counting bound {lo} <= {n} <= {hi} fails on a sub-window of side {side}"
                )));
            }
            checks += 1;
        }
        side *= 1.5;
    }

    Ok(DeloneCertificate {
        r_hat,
        big_r_hat,
        max_probe_gap: max_gap,
        window_checked: *w,
        probe_spacing,
        probes,
        counting_checks: checks,
    })
}

/// A finite configuration `Q` read inside the closed cube of side `support_side`
/// centred at its anchor, which is the first point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub support_side: f64,
}

impl Pattern {
    pub fn single_point(dim: usize, support_side: f64) -> Self {
        Self {
            dim,
            points: vec![[0.0; 3]],
            support_side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let anchor = self
            .points
            .first()
            .ok_or_else(|| LabError::invalid("pattern.points", "pattern must not be empty"))?;
        positive("pattern.support_side", self.support_side)?;
        for (i, p) in self.points.iter().enumerate() {
            if sup_distance(p, anchor, self.dim) > self.support_side / 2.0 {
                return Err(LabError::invalid(
                    "pattern.points",
                    format!("point {i} lies outside the support cube"),
                ));
            }
            if self.points[..i].iter().any(|q| q == p) {
                return Err(LabError::invalid("pattern.points", "points must be distinct"));
            }
        }
        Ok(())
    }

    fn sorted_offsets(&self) -> Vec<[f64; 3]> {
        let anchor = self.points[0];
        let mut v: Vec<[f64; 3]> = self
            .points
            .iter()
            .map(|p| {
                let mut o = [0.0; 3];
                for j in 0..self.dim {
                    o[j] = p[j] - anchor[j];
                }
                o
            })
            .collect();
        v.sort_by(|a, b| lex_cmp(a, b, self.dim));
        v
    }
}

/// Number of occurrences of `pattern` per unit volume in `x + Λ_L`.
///
/// An occurrence is a point `p` of the set whose closed support cube lies inside the
/// window and whose neighbourhood in that cube equals the pattern translated to `p`,
/// coordinate-wise within `match_tol`.
pub fn pattern_frequency(
    spec: &PointSetSpec,
    pattern: &Pattern,
    x: &[f64],
    side: f64,
    match_tol: f64,
) -> Result<f64> {
    pattern.validate()?;
    if pattern.dim != spec.dim {
        return Err(LabError::invalid("pattern.dim", "dimension differs from point_set.dim"));
    }
    if side <= pattern.support_side {
        return Err(LabError::invalid("window.side", "must exceed the pattern support side"));
    }
    let (r, _) = spec.nominal_radii();
    if !(match_tol > 0.0 && match_tol < r / 2.0) {
        return Err(LabError::invalid("match_tol", format!("must lie in (0, r/2) with r = {r}")));
    }
    let dim = spec.dim;
    let window = Window::new(dim, x, side)?;
    let sites = materialize(spec, &window)?;
    let offsets = pattern.sorted_offsets();
    let half = pattern.support_side / 2.0;
    let buckets = Buckets::new(&sites, dim, pattern.support_side.max(r));
    let slack = 1e-12 * (1.0 + side);

    let mut hits = 0u64;
    let mut local: Vec<[f64; 3]> = Vec::with_capacity(offsets.len() + 4);
    for s in &sites {
        let inside = (0..dim).all(|j| (s.pos[j] - window.center[j]).abs() + half < side / 2.0);
        if !inside {
            continue;
        }
        local.clear();
        let mut overflow = false;
        buckets.within(&s.pos, half + slack, |i| {
            if local.len() > offsets.len() {
                overflow = true;
                return;
            }
            let mut o = [0.0; 3];
            for j in 0..dim {
                o[j] = sites[i].pos[j] - s.pos[j];
            }
            local.push(o);
        });
        if overflow || local.len() != offsets.len() {
            continue;
        }
        local.sort_by(|a, b| lex_cmp(a, b, dim));
        if local
            .iter()
            .zip(&offsets)
            .all(|(a, b)| sup_distance(a, b, dim) <= match_tol)
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / window.volume())
}

/// One row per point, columns `x1..xd`.
pub fn points_csv(sites: &[Site], dim: usize) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for s in sites {
        let row: Vec<String> = s.pos[..dim].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

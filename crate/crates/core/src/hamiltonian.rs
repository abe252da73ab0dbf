//! Finite-difference restrictions of `-Δ + V` to open cubes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::colouring::ColouredWindow;
use crate::error::{LabError, Result};
use crate::pointset::{min_pairwise_gap, Window};
use crate::spectrum::SymBand;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialShape {
    /// `u_plus` on the open cube of side `2a`.
    Box,
    /// Product of one-dimensional profiles equal to 1 on `[-a/2, a/2]` that decay as
    /// `cos²` to 0 at `±a`; continuously differentiable.
    Bump,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleSitePotential {
    pub shape: PotentialShape,
    pub u_plus: f64,
    /// Half-side of the support cube.
    pub a: f64,
}

impl SingleSitePotential {
    pub fn boxed(u_plus: f64, a: f64) -> Self {
        Self {
            shape: PotentialShape::Box,
            u_plus,
            a,
        }
    }

    pub fn bump(u_plus: f64, a: f64) -> Self {
        Self {
            shape: PotentialShape::Bump,
            u_plus,
            a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_plus > 0.0 && self.u_plus.is_finite()) {
            return Err(LabError::invalid("potential.u_plus", "must be positive"));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(LabError::invalid("potential.a", "must be positive"));
        }
        Ok(())
    }

    /// Side of the cube on which `u >= u_minus`.
    pub fn eps_u(&self) -> f64 {
        match self.shape {
            PotentialShape::Box => 2.0 * self.a,
            PotentialShape::Bump => self.a,
        }
    }

    /// Side of the cube containing the support.
    pub fn delta_u(&self) -> f64 {
        2.0 * self.a
    }

    pub fn u_minus(&self) -> f64 {
        match self.shape {
            PotentialShape::Box => self.u_plus,
            PotentialShape::Bump => self.u_plus / 2.0,
        }
    }

    /// One-dimensional profile at offset `t`.
    pub fn profile(&self, t: f64) -> f64 {
        let t = t.abs();
        match self.shape {
            PotentialShape::Box => f64::from(u8::from(t < self.a)),
            PotentialShape::Bump => {
                if t <= self.a / 2.0 {
                    1.0
                } else if t < self.a {
                    let c = (std::f64::consts::PI * (t - self.a / 2.0) / self.a).cos();
                    c * c
                } else {
                    0.0
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.u_plus * x.iter().map(|&t| self.profile(t)).product::<f64>()
    }

    /// Overlap bound `v_0 = u_plus (⌊2δ_u/r⌋ + 1)^d`, so that `V <= w v_0`.
    pub fn v0(&self, r: f64, dim: usize) -> f64 {
        self.u_plus * ((2.0 * self.delta_u() / r).floor() + 1.0).powi(dim as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Antisymmetric ghosts: each missing neighbour adds `1/h²` to the diagonal, which
    /// places the zero of the discrete field on the cube face.
    Dirichlet,
    /// Reflected ghosts: each missing neighbour removes `1/h²` from the diagonal.
    Neumann,
    /// Zero ghost values: the diagonal stays `2d/h²` everywhere.
    DirichletZeroGhost,
}

impl Boundary {
    fn ghost(self) -> f64 {
        match self {
            Boundary::Dirichlet => 1.0,
            Boundary::Neumann => -1.0,
            Boundary::DirichletZeroGhost => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Neumann => "neumann",
            Boundary::DirichletZeroGhost => "dirichlet_zero_ghost",
        }
    }
}

/// Cell-centred grid on `Λ_L(y)`: node `i` along axis `j` sits at `y_j - L/2 + (i + 1/2) h`.
/// Nodes are numbered row-major with the last axis fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub window: Window,
    pub h: f64,
    pub n_side: usize,
}

impl Grid {
    pub fn new(window: Window, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(LabError::invalid("h", "must be positive"));
        }
        let ratio = window.side / h;
        let n_side = ratio.round();
        if n_side < 1.0 || (ratio - n_side).abs() > 1e-9 * ratio.max(1.0) {
            return Err(LabError::invalid(
                "h",
                format!("side {} is not an integer multiple of h = {h}", window.side),
            ));
        }
        Ok(Self {
            window,
            h,
            n_side: n_side as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.window.dim
    }

    pub fn len(&self) -> usize {
        self.n_side.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.window.lo(axis) + (i as f64 + 0.5) * self.h
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n_side.pow((self.dim() - 1 - axis) as u32)
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        (0..self.dim()).map(|j| idx[j] * self.stride(j)).sum()
    }

    pub fn multi_index(&self, mut k: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        for j in (0..self.dim()).rev() {
            idx[j] = k % self.n_side;
            k /= self.n_side;
        }
        idx
    }

    /// Node offset of the subgrid of side `n_sub` whose corner cell is `corner`.
    pub fn subgrid_nodes(&self, corner: &[usize], n_sub: usize) -> Vec<usize> {
        let dim = self.dim();
        let total = n_sub.pow(dim as u32);
        (0..total)
            .map(|mut k| {
                let mut node = 0;
                for j in (0..dim).rev() {
                    node += (corner[j] + k % n_sub) * self.stride(j);
                    k /= n_sub;
                }
                node
            })
            .collect()
    }
}

/// `(1/h²)·(grid Laplacian with boundary rule) + diag(V)` on a cube.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: SymBand,
    pub boundary: Boundary,
    pub grid: Grid,
    pub window: Window,
    /// `w · v_0`, the a-priori bound on the potential.
    pub v_inf_bound: f64,
    pub potential: Vec<f64>,
}

impl OperatorMatrix {
    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// `i j value` per stored lower-triangle entry.
    pub fn triplet_text(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.matrix.triplets() {
            let _ = writeln!(out, "{i} {j} {v:e}");
        }
        out
    }
}

/// `V(x) = Σ_p ω_p u(x - p)` at every node.
pub fn potential_on_grid(cw: &ColouredWindow, u: &SingleSitePotential, grid: &Grid) -> Result<Vec<f64>> {
    u.validate()?;
    let dim = grid.dim();
    if cw.window.dim != dim {
        return Err(LabError::invalid("window", "colouring and grid dimensions differ"));
    }
    let need = grid.window.expanded(u.delta_u());
    if !cw.window.covers(&need, 1e-9 * need.side) {
        return Err(LabError::invalid(
            "margin",
            format!(
                "coloured window must extend the operator cube by delta_u = {} on every side",
                u.delta_u()
            ),
        ));
    }
    let n = grid.n_side;
    let mut v = vec![0.0; grid.len()];
    let mut factors: [Vec<f64>; 3] = Default::default();
    let mut first = [0usize; 3];
    for (site, &omega) in cw.sites.iter().zip(&cw.couplings) {
        if omega == 0.0 {
            continue;
        }
        let mut empty = false;
        for j in 0..dim {
            let p = site.pos[j];
            let lo = ((p - u.a - grid.window.lo(j)) / grid.h - 0.5).floor().max(0.0) as usize;
            let hi = (((p + u.a - grid.window.lo(j)) / grid.h - 0.5).ceil() as i64).min(n as i64 - 1);
            factors[j].clear();
            first[j] = lo;
            if hi < lo as i64 {
                empty = true;
                break;
            }
            for i in lo..=hi as usize {
                factors[j].push(u.profile(grid.coord(j, i) - p));
            }
        }
        if empty {
            continue;
        }
        let amp = omega * u.u_plus;
        match dim {
            1 => {
                for (i, f) in factors[0].iter().enumerate() {
                    v[first[0] + i] += amp * f;
                }
            }
            2 => {
                for (i, fi) in factors[0].iter().enumerate() {
                    if *fi == 0.0 {
                        continue;
                    }
                    let row = (first[0] + i) * n;
                    for (k, fk) in factors[1].iter().enumerate() {
                        v[row + first[1] + k] += amp * fi * fk;
                    }
                }
            }
            _ => {
                for (i, fi) in factors[0].iter().enumerate() {
                    if *fi == 0.0 {
                        continue;
                    }
                    for (k, fk) in factors[1].iter().enumerate() {
                        let row = ((first[0] + i) * n + first[1] + k) * n;
                        for (l, fl) in factors[2].iter().enumerate() {
                            v[row + first[2] + l] += amp * fi * fk * fl;
                        }
                    }
                }
            }
        }
    }
    Ok(v)
}

/// Laplacian part plus `diag(v)`.
pub fn assemble_from_potential(grid: &Grid, v: Vec<f64>, boundary: Boundary, v_inf_bound: f64) -> OperatorMatrix {
    let dim = grid.dim();
    let n = grid.n_side;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let bw = if dim == 1 { 1 } else { grid.stride(0) };
    let mut m = SymBand::zeros(grid.len(), bw);
    let ghost = boundary.ghost();
    for node in 0..grid.len() {
        let idx = grid.multi_index(node);
        let mut diag = 2.0 * dim as f64 * inv_h2 + v[node];
        for j in 0..dim {
            for (at_edge, _) in [(idx[j] == 0, 0), (idx[j] + 1 == n, 1)] {
                if at_edge {
                    diag += ghost * inv_h2;
                }
            }
            if idx[j] + 1 < n {
                m.set(node + grid.stride(j), node, -inv_h2);
            }
        }
        m.set(node, node, diag);
    }
    OperatorMatrix {
        matrix: m,
        boundary,
        grid: *grid,
        window: grid.window,
        v_inf_bound,
        potential: v,
    }
}

/// Restriction of `-Δ + V` to `Λ_L(y)` on a grid of spacing `h`.
pub fn assemble(
    cw: &ColouredWindow,
    u: &SingleSitePotential,
    side: f64,
    y: &[f64],
    h: f64,
    boundary: Boundary,
) -> Result<OperatorMatrix> {
    u.validate()?;
    let window = Window::new(cw.window.dim, y, side)?;
    let grid = Grid::new(window, h)?;
    if h >= u.a {
        return Err(LabError::invalid(
            "h",
            format!("grid spacing {h} does not resolve the potential half-width {}", u.a),
        ));
    }
    let v = potential_on_grid(cw, u, &grid)?;
    let bound = potential_bound(cw, u);
    check_potential(&v, bound)?;
    Ok(assemble_from_potential(&grid, v, boundary, bound))
}

/// `w · v_0` with `r` taken as the smallest gap present in the coloured window.
pub fn potential_bound(cw: &ColouredWindow, u: &SingleSitePotential) -> f64 {
    let w = cw.dist.w().max(cw.couplings.iter().copied().fold(0.0, f64::max));
    match min_pairwise_gap(&cw.sites, cw.window.dim) {
        Some(r) => w * u.v0(r, cw.window.dim),
        None => w * u.u_plus,
    }
}

pub(crate) fn check_potential(v: &[f64], bound: f64) -> Result<()> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if v.iter().any(|x| *x < 0.0) || max > bound * (1.0 + 1e-12) {
        return Err(LabError::Invariant(format!(
            "potential maximum {max} exceeds the overlap bound {bound}"
        )));
    }
    Ok(())
}

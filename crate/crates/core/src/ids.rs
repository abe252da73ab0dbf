//! Monte Carlo IDS statistics and the verification experiments built on them.
//!
//! A configuration fixes `n_samples` colourings and `n_translates` window centres; every
//! (colouring, centre) pair is one realization. Pairs are processed in parallel and
//! collected in index order, so results do not depend on the thread count.

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::temple_constants;
use crate::colouring::{couplings_for, sample_colouring, ColouredWindow, SingleSiteDistribution};
use crate::error::{LabError, Result};
use crate::hamiltonian::{
    assemble, assemble_from_potential, potential_bound, potential_on_grid, Boundary, Grid, OperatorMatrix,
    SingleSitePotential,
};
use crate::pointset::{materialize, PointSetSpec, Window};
use crate::spectrum::{check_ascending, count_below, ground_state_energy, IdsCurve, IdsMeta};
use crate::stats::{linear_fit, mean_stderr, quantile, LineFit};
use crate::stream::{seeded, SiteStream, TAG_BOOTSTRAP, TAG_TRANSLATE};

fn one() -> usize {
    1
}

fn both_boundaries() -> Vec<Boundary> {
    vec![Boundary::Dirichlet, Boundary::Neumann]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub point_set: PointSetSpec,
    pub potential: SingleSitePotential,
    pub dist: SingleSiteDistribution,
    /// Grid spacing; defaults to a quarter of the discreteness radius.
    #[serde(default)]
    pub h: Option<f64>,
    pub master_seed: u64,
    pub n_samples: usize,
    #[serde(default = "one")]
    pub n_translates: usize,
    #[serde(default)]
    pub e_grid: Vec<f64>,
    #[serde(default)]
    pub l_list: Vec<f64>,
    #[serde(default = "both_boundaries")]
    pub boundaries: Vec<Boundary>,
}

/// One coloured configuration seen through a window centred at `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub pair: usize,
    pub center: [f64; 3],
    pub side: f64,
    pub cw: ColouredWindow,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.point_set.validate()?;
        self.potential.validate()?;
        self.dist.validate()?;
        if self.n_samples == 0 {
            return Err(LabError::invalid("n_samples", "must be at least 1"));
        }
        if self.n_translates == 0 {
            return Err(LabError::invalid("n_translates", "must be at least 1"));
        }
        check_ascending("e_grid", &self.e_grid)?;
        check_ascending("l_list", &self.l_list)?;
        if self.l_list.iter().any(|l| *l <= 0.0) {
            return Err(LabError::invalid("l_list", "sides must be positive"));
        }
        let h = self.grid_spacing();
        if !(h > 0.0) {
            return Err(LabError::invalid("h", "must be positive"));
        }
        if h >= self.potential.a {
            return Err(LabError::invalid("h", "must be smaller than the potential half-width a"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.point_set.dim
    }

    pub fn grid_spacing(&self) -> f64 {
        self.h.unwrap_or(self.point_set.nominal_radii().0 / 4.0)
    }

    pub fn pairs(&self) -> usize {
        self.n_samples * self.n_translates
    }

    /// Centre of translate `t`, uniform in `[0, T)^d` with `T` the period or `R`.
    pub fn translate(&self, t: usize) -> [f64; 3] {
        let range = self.point_set.translate_range();
        let dim = self.dim();
        let mut u = [0.0; 3];
        SiteStream::new(self.master_seed, TAG_TRANSLATE, t as u64).site(&[0; 3], dim, &mut u[..dim]);
        let mut c = [0.0; 3];
        for j in 0..dim {
            c[j] = range * u[j];
        }
        c
    }

    pub fn realization(&self, side: f64, pair: usize) -> Result<Realization> {
        let sample = pair / self.n_translates;
        let center = self.translate(pair % self.n_translates);
        let dim = self.dim();
        let window = Window::new(dim, &center[..dim], side + 2.0 * self.potential.delta_u())?;
        let cw = sample_colouring(&self.point_set, &window, &self.dist, self.master_seed, sample as u64)?;
        Ok(Realization {
            pair,
            center,
            side,
            cw,
        })
    }

    pub fn operator(&self, real: &Realization, boundary: Boundary) -> Result<OperatorMatrix> {
        let dim = self.dim();
        assemble(
            &real.cw,
            &self.potential,
            real.side,
            &real.center[..dim],
            self.grid_spacing(),
            boundary,
        )
    }

    /// Counts `[boundary][energy]` for one pair.
    fn pair_counts(&self, side: f64, pair: usize, boundaries: &[Boundary], energies: &[f64]) -> Result<Vec<Vec<usize>>> {
        let real = self.realization(side, pair)?;
        boundaries
            .iter()
            .map(|&bc| {
                let m = self.operator(&real, bc)?;
                energies.iter().map(|&e| count_below(&m.matrix, e)).collect()
            })
            .collect()
    }
}

/// Eigenvalue counts for every pair, boundary and energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub side: f64,
    pub volume: f64,
    pub energies: Vec<f64>,
    pub boundaries: Vec<Boundary>,
    /// `counts[pair][boundary][energy]`.
    pub counts: Vec<Vec<Vec<usize>>>,
}

impl McTable {
    pub fn values(&self, b: usize, e: usize) -> Vec<f64> {
        self.counts.iter().map(|c| c[b][e] as f64 / self.volume).collect()
    }

    pub fn mean_stderr(&self, b: usize, e: usize) -> (f64, f64) {
        mean_stderr(&self.values(b, e))
    }

    pub fn curve(&self, b: usize, spec_id: &str) -> IdsCurve {
        let (values, errs): (Vec<f64>, Vec<f64>) = (0..self.energies.len()).map(|e| self.mean_stderr(b, e)).unzip();
        IdsCurve {
            energies: self.energies.clone(),
            values,
            stderr: Some(errs),
            meta: IdsMeta {
                side: self.side,
                boundary: self.boundaries[b],
                samples: self.counts.len(),
                spec_id: spec_id.to_string(),
            },
        }
    }
}

pub fn mc_counts(cfg: &ExperimentConfig, side: f64, boundaries: &[Boundary], energies: &[f64]) -> Result<McTable> {
    cfg.validate()?;
    check_ascending("e_grid", energies)?;
    let counts = (0..cfg.pairs())
        .into_par_iter()
        .map(|pair| cfg.pair_counts(side, pair, boundaries, energies))
        .collect::<Result<Vec<_>>>()?;
    Ok(McTable {
        side,
        volume: side.powi(cfg.dim() as i32),
        energies: energies.to_vec(),
        boundaries: boundaries.to_vec(),
        counts,
    })
}

/// Mean and standard error of `ν̃(E)` over all pairs.
pub fn mc_expected_ids(cfg: &ExperimentConfig, e: f64, side: f64, boundary: Boundary) -> Result<(f64, f64)> {
    Ok(mc_counts(cfg, side, &[boundary], &[e])?.mean_stderr(0, 0))
}

/// Averaged IDS curve on `cfg.e_grid`.
pub fn mc_ids_curve(cfg: &ExperimentConfig, side: f64, boundary: Boundary) -> Result<IdsCurve> {
    let t = mc_counts(cfg, side, &[boundary], &cfg.e_grid)?;
    Ok(t.curve(0, &spec_id(&cfg.point_set)))
}

pub fn spec_id(spec: &PointSetSpec) -> String {
    serde_json::to_string(spec).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "L")]
    pub side: f64,
    pub samples: usize,
    pub dirichlet_mean: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub dirichlet_stderr: f64,
    pub neumann_mean: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub neumann_stderr: f64,
    pub pathwise_violations: usize,
}

/// Dirichlet and Neumann IDS on shared realizations at every energy of `cfg.e_grid`.
pub fn bracketing_scan(cfg: &ExperimentConfig, side: f64) -> Result<Vec<BracketReport>> {
    let t = mc_counts(cfg, side, &[Boundary::Dirichlet, Boundary::Neumann], &cfg.e_grid)?;
    Ok((0..cfg.e_grid.len())
        .map(|e| {
            let (dm, ds) = t.mean_stderr(0, e);
            let (nm, ns) = t.mean_stderr(1, e);
            BracketReport {
                e: cfg.e_grid[e],
                side,
                samples: t.counts.len(),
                dirichlet_mean: dm,
                dirichlet_stderr: ds,
                neumann_mean: nm,
                neumann_stderr: ns,
                pathwise_violations: t.counts.iter().filter(|c| c[0][e] > c[1][e]).count(),
            }
        })
        .collect())
}

pub fn bracketing_check(cfg: &ExperimentConfig, e: f64, side: f64) -> Result<BracketReport> {
    let cfg = ExperimentConfig {
        e_grid: vec![e],
        ..cfg.clone()
    };
    Ok(bracketing_scan(&cfg, side)?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityRow {
    pub pair: usize,
    pub neumann_big: usize,
    pub neumann_parts: usize,
    pub dirichlet_big: usize,
    pub dirichlet_parts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    #[serde(rename = "E")]
    pub e: f64,
    pub l_small: f64,
    pub k: usize,
    pub samples: usize,
    pub neumann_violations: usize,
    pub dirichlet_violations: usize,
    /// Smallest `(Σ_j ν̃^N_j)/k^d - ν̃^N_K` over samples.
    #[serde(with = "crate::stats::nan_null")]
    pub min_neumann_slack: f64,
    /// Smallest `ν̃^D_K - (Σ_j ν̃^D_j)/k^d` over samples.
    #[serde(with = "crate::stats::nan_null")]
    pub min_dirichlet_slack: f64,
    pub rows: Vec<SubadditivityRow>,
}

/// Splits `Λ_{k L}(y)` into `k^d` aligned cubes of side `L` and compares eigenvalue
/// counts of the big cube with the summed counts of the parts, on one potential.
pub fn subadditivity_scan(cfg: &ExperimentConfig, l_small: f64, k: usize, energies: &[f64]) -> Result<Vec<SubadditivityReport>> {
    cfg.validate()?;
    check_ascending("e_grid", energies)?;
    if k == 0 {
        return Err(LabError::invalid("k", "must be at least 1"));
    }
    let h = cfg.grid_spacing();
    let dim = cfg.dim();
    let big = l_small * k as f64;
    let n_sub = (l_small / h).round();
    if (n_sub * h - l_small).abs() > 1e-9 * l_small || n_sub < 1.0 {
        return Err(LabError::invalid("L_small", "must be an integer multiple of h so that grids align"));
    }
    let n_sub = n_sub as usize;
    let rows_per_pair = (0..cfg.pairs())
        .into_par_iter()
        .map(|pair| -> Result<Vec<SubadditivityRow>> {
            let real = cfg.realization(big, pair)?;
            let window = Window::new(dim, &real.center[..dim], big)?;
            let grid = Grid::new(window, h)?;
            let v = potential_on_grid(&real.cw, &cfg.potential, &grid)?;
            let bound = potential_bound(&real.cw, &cfg.potential);
            let mut totals = vec![[0usize; 4]; energies.len()];
            for (slot, bc) in [(0, Boundary::Neumann), (2, Boundary::Dirichlet)] {
                let m = assemble_from_potential(&grid, v.clone(), bc, bound);
                for (i, &e) in energies.iter().enumerate() {
                    totals[i][slot] = count_below(&m.matrix, e)?;
                }
                for part in 0..k.pow(dim as u32) {
                    let mut corner = [0usize; 3];
                    let mut center = [0.0; 3];
                    let mut rest = part;
                    for j in (0..dim).rev() {
                        let c = rest % k;
                        rest /= k;
                        corner[j] = c * n_sub;
                        center[j] = window.lo(j) + (c as f64 + 0.5) * l_small;
                    }
                    let nodes = grid.subgrid_nodes(&corner[..dim], n_sub);
                    let sub_v: Vec<f64> = nodes.iter().map(|&i| v[i]).collect();
                    let sub_grid = Grid {
                        window: Window::new(dim, &center[..dim], l_small)?,
                        h,
                        n_side: n_sub,
                    };
                    let ms = assemble_from_potential(&sub_grid, sub_v, bc, bound);
                    for (i, &e) in energies.iter().enumerate() {
                        totals[i][slot + 1] += count_below(&ms.matrix, e)?;
                    }
                }
            }
            Ok(totals
                .into_iter()
                .map(|t| SubadditivityRow {
                    pair,
                    neumann_big: t[0],
                    neumann_parts: t[1],
                    dirichlet_big: t[2],
                    dirichlet_parts: t[3],
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let vol = big.powi(dim as i32);
    Ok(energies
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let rows: Vec<SubadditivityRow> = rows_per_pair.iter().map(|r| r[i].clone()).collect();
            let n_slack = rows
                .iter()
                .map(|r| (r.neumann_parts as f64 - r.neumann_big as f64) / vol)
                .fold(f64::INFINITY, f64::min);
            let d_slack = rows
                .iter()
                .map(|r| (r.dirichlet_big as f64 - r.dirichlet_parts as f64) / vol)
                .fold(f64::INFINITY, f64::min);
            SubadditivityReport {
                e,
                l_small,
                k,
                samples: rows.len(),
                neumann_violations: rows.iter().filter(|r| r.neumann_big > r.neumann_parts).count(),
                dirichlet_violations: rows.iter().filter(|r| r.dirichlet_big < r.dirichlet_parts).count(),
                min_neumann_slack: n_slack,
                min_dirichlet_slack: d_slack,
                rows,
            }
        })
        .collect())
}

pub fn subadditivity_check(cfg: &ExperimentConfig, e: f64, l_small: f64, k: usize) -> Result<SubadditivityReport> {
    Ok(subadditivity_scan(cfg, l_small, k, &[e])?.remove(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "L")]
    pub side: f64,
    pub mean: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    #[serde(rename = "E")]
    pub e: f64,
    pub boundary: Boundary,
    pub rows: Vec<ConvergenceRow>,
    /// `|mean(L_{i+1}) - mean(L_i)|`.
    pub gaps: Vec<f64>,
}

pub fn ids_convergence(cfg: &ExperimentConfig, e: f64, boundary: Boundary) -> Result<ConvergenceReport> {
    if cfg.l_list.len() < 3 {
        return Err(LabError::invalid("l_list", "needs at least 3 sides"));
    }
    let rows = cfg
        .l_list
        .iter()
        .map(|&side| {
            let (mean, stderr) = mc_expected_ids(cfg, e, side, boundary)?;
            Ok(ConvergenceRow { side, mean, stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps = rows.windows(2).map(|w| (w[1].mean - w[0].mean).abs()).collect();
    Ok(ConvergenceReport {
        e,
        boundary,
        rows,
        gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempleRow {
    pub sample: usize,
    pub ground_state: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempleReport {
    #[serde(rename = "L")]
    pub side: f64,
    pub h: f64,
    pub temple_alpha: f64,
    pub c_u: f64,
    pub slack: f64,
    pub violations: usize,
    /// Smallest `E_1 / bound - 1` over samples with a positive bound.
    #[serde(with = "crate::stats::nan_null")]
    pub min_relative_margin: f64,
    pub rows: Vec<TempleRow>,
}

/// Relative discretization slack allowed in the Temple comparison.
pub const TEMPLE_SLACK: f64 = 0.05;

/// Compares `E_1(H^N)` with `(c_u/L^d) Σ_{p ∈ Λ_L} min(ω_p, α/L²)` on `n_samples` pairs.
pub fn temple_check(cfg: &ExperimentConfig, side: f64, n_samples: usize) -> Result<TempleReport> {
    cfg.validate()?;
    let u = &cfg.potential;
    if side <= u.delta_u() {
        return Err(LabError::invalid("L", "must exceed delta_u"));
    }
    let dim = cfg.dim();
    let r = cfg.point_set.nominal_radii().0;
    let (alpha, c_u) = temple_constants(u.u_plus, u.u_minus(), u.eps_u(), u.delta_u(), r, dim as u32)?;
    let vol = side.powi(dim as i32);
    let cap = alpha / (side * side);
    let rows = (0..n_samples)
        .into_par_iter()
        .map(|pair| -> Result<TempleRow> {
            let real = cfg.realization(side, pair)?;
            let m = cfg.operator(&real, Boundary::Neumann)?;
            let e1 = ground_state_energy(&m.matrix, 1e-10)?;
            let window = Window::new(dim, &real.center[..dim], side)?;
            let sum: f64 = real
                .cw
                .sites
                .iter()
                .zip(&real.cw.couplings)
                .filter(|(s, _)| window.contains(&s.pos))
                .map(|(_, w)| w.min(cap))
                .sum();
            Ok(TempleRow {
                sample: pair,
                ground_state: e1,
                bound: c_u * sum / vol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = rows
        .iter()
        .filter(|r| r.ground_state < (1.0 - TEMPLE_SLACK) * r.bound)
        .count();
    let min_relative_margin = rows
        .iter()
        .filter(|r| r.bound > 0.0)
        .map(|r| r.ground_state / r.bound - 1.0)
        .fold(f64::INFINITY, f64::min);
    Ok(TempleReport {
        side,
        h: cfg.grid_spacing(),
        temple_alpha: alpha,
        c_u,
        slack: TEMPLE_SLACK,
        violations,
        min_relative_margin,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdConfig {
    pub point_set: PointSetSpec,
    pub dist: SingleSiteDistribution,
    /// Truncation constant: couplings are capped at `alpha / L²`.
    pub alpha: f64,
    pub l_list: Vec<f64>,
    pub e_level: f64,
    pub n_samples: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdRow {
    #[serde(rename = "L")]
    pub side: f64,
    /// `L^d / R^d`.
    pub x: f64,
    pub points: usize,
    pub hits: usize,
    pub samples: usize,
    pub probability: f64,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdReport {
    #[serde(rename = "R")]
    pub big_r: f64,
    pub e_level: f64,
    pub rows: Vec<LdRow>,
    /// Fit of `-ln P` against `L^d/R^d` over uncensored rows.
    pub fit: Option<LineFit>,
    pub censored: usize,
}

/// Monte Carlo estimate of `P((1/L^d) Σ_{p ∈ Λ_L} min(ω_p, α/L²) <= E)` for each side.
pub fn large_deviation_rate(cfg: &LdConfig) -> Result<LdReport> {
    cfg.point_set.validate()?;
    cfg.dist.validate()?;
    check_ascending("l_list", &cfg.l_list)?;
    if cfg.n_samples == 0 {
        return Err(LabError::invalid("n_samples", "must be at least 1"));
    }
    if !(cfg.alpha > 0.0) {
        return Err(LabError::invalid("alpha", "must be positive"));
    }
    let dim = cfg.point_set.dim;
    let big_r = cfg.point_set.nominal_radii().1;
    let rows = cfg
        .l_list
        .iter()
        .map(|&side| -> Result<LdRow> {
            let sites = materialize(&cfg.point_set, &Window::centered(dim, side)?)?;
            let vol = side.powi(dim as i32);
            let cap = cfg.alpha / (side * side);
            let hits: usize = (0..cfg.n_samples)
                .into_par_iter()
                .map(|s| {
                    let w = couplings_for(&sites, dim, &cfg.dist, cfg.master_seed, s as u64);
                    let total: f64 = w.iter().map(|v| v.min(cap)).sum();
                    usize::from(total / vol <= cfg.e_level)
                })
                .sum();
            Ok(LdRow {
                side,
                x: vol / big_r.powi(dim as i32),
                points: sites.len(),
                hits,
                samples: cfg.n_samples,
                probability: hits as f64 / cfg.n_samples as f64,
                censored: hits == 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<&LdRow> = rows.iter().filter(|r| !r.censored).collect();
    let x: Vec<f64> = used.iter().map(|r| r.x).collect();
    let y: Vec<f64> = used.iter().map(|r| -r.probability.ln()).collect();
    Ok(LdReport {
        big_r,
        e_level: cfg.e_level,
        fit: linear_fit(&x, &y),
        censored: rows.len() - used.len(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegnerReport {
    #[serde(rename = "L")]
    pub side: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub widths: Vec<f64>,
    pub mean_counts: Vec<f64>,
    #[serde(with = "crate::stats::nan_null::vec")]
    pub stderr: Vec<f64>,
    /// `mean(2|I|) / mean(|I|)` for consecutive widths.
    pub ratios: Vec<f64>,
    /// Least-squares slope of mean count against `|I|`, through the origin, divided by `L^d`.
    pub coefficient_per_volume: f64,
    pub max_count: usize,
    pub order: usize,
}

/// Mean number of Dirichlet eigenvalues in `[E0 - w/2, E0 + w/2]` for each width.
pub fn wegner_scan(cfg: &ExperimentConfig, e0: f64, widths: &[f64], side: f64) -> Result<WegnerReport> {
    check_ascending("widths", widths)?;
    if widths.iter().any(|w| *w <= 0.0) {
        return Err(LabError::invalid("widths", "must be positive"));
    }
    let mut energies: Vec<f64> = widths
        .iter()
        .flat_map(|w| [e0 - w / 2.0, e0 + w / 2.0])
        .collect();
    energies.sort_by(f64::total_cmp);
    energies.dedup();
    let t = mc_counts(cfg, side, &[Boundary::Dirichlet], &energies)?;
    let index = |e: f64| energies.iter().position(|x| *x == e).expect("energy on grid");
    let per_width: Vec<Vec<f64>> = widths
        .iter()
        .map(|w| {
            let (lo, hi) = (index(e0 - w / 2.0), index(e0 + w / 2.0));
            t.counts.iter().map(|c| (c[0][hi] - c[0][lo]) as f64).collect()
        })
        .collect();
    let max_count = t
        .counts
        .iter()
        .map(|c| c[0][energies.len() - 1] - c[0][0])
        .max()
        .unwrap_or(0);
    let (mean_counts, stderr): (Vec<f64>, Vec<f64>) = per_width.iter().map(|c| mean_stderr(c)).unzip();
    let ratios = mean_counts.windows(2).map(|m| m[1] / m[0]).collect();
    let sxy: f64 = widths.iter().zip(&mean_counts).map(|(w, c)| w * c).sum();
    let sxx: f64 = widths.iter().map(|w| w * w).sum();
    let vol = side.powi(cfg.dim() as i32);
    let order = Grid::new(Window::centered(cfg.dim(), side)?, cfg.grid_spacing())?.len();
    Ok(WegnerReport {
        side,
        e0,
        widths: widths.to_vec(),
        mean_counts,
        stderr,
        ratios,
        coefficient_per_volume: sxy / sxx / vol,
        max_count,
        order,
    })
}

/// How the cube side follows the energy in a Lifshitz scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SideRule {
    Fixed {
        #[serde(rename = "L")]
        side: f64,
    },
    /// `L = c E^{-1/2}`, rounded up to a multiple of `quantum` and clamped.
    Scaled { c: f64, quantum: f64, min: f64, max: f64 },
}

impl SideRule {
    pub fn side(&self, e: f64) -> f64 {
        match *self {
            SideRule::Fixed { side } => side,
            SideRule::Scaled { c, quantum, min, max } => {
                let raw = c / e.sqrt();
                ((raw / quantum).ceil() * quantum).clamp(min, max)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifshitzConfig {
    pub experiment: ExperimentConfig,
    pub side_rule: SideRule,
    pub n_boot: usize,
    pub min_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifshitzPoint {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "L")]
    pub side: f64,
    pub nu_neumann: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub stderr_neumann: f64,
    pub nu_dirichlet: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub stderr_dirichlet: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub fit: LineFit,
    #[serde(with = "crate::stats::nan_null")]
    pub ci_low: f64,
    #[serde(with = "crate::stats::nan_null")]
    pub ci_high: f64,
    pub points: usize,
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifshitzReport {
    pub dim: usize,
    pub expected_slope: f64,
    pub points: Vec<LifshitzPoint>,
    pub neumann: Option<LogLogFit>,
    pub dirichlet: Option<LogLogFit>,
}

impl LifshitzReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,L,nu_neumann,stderr_neumann,nu_dirichlet,stderr_dirichlet\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e}\n",
                p.e, p.side, p.nu_neumann, p.stderr_neumann, p.nu_dirichlet, p.stderr_dirichlet
            ));
        }
        out
    }
}

fn usable(nu: f64) -> bool {
    nu > 0.0 && nu < 1.0
}

fn loglog_fit(energies: &[f64], nu: &[f64]) -> Option<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = energies
        .iter()
        .zip(nu)
        .filter(|(_, v)| usable(**v))
        .map(|(e, v)| (e.ln(), (-v.ln()).ln()))
        .unzip();
    linear_fit(&x, &y)
}

/// Slope of `ln|ln ν̂(E)|` against `ln E`, with a pair-bootstrap 95% interval.
pub fn lifshitz_fit(cfg: &LifshitzConfig) -> Result<LifshitzReport> {
    let exp = &cfg.experiment;
    exp.validate()?;
    if exp.e_grid.is_empty() || exp.e_grid[0] <= 0.0 {
        return Err(LabError::invalid("e_grid", "needs positive energies"));
    }
    let mut sides: Vec<f64> = exp.e_grid.iter().map(|&e| cfg.side_rule.side(e)).collect();
    let per_energy_side = sides.clone();
    sides.sort_by(f64::total_cmp);
    sides.dedup();

    // Per-pair counts for each energy, grouped by cube side.
    let pairs = exp.pairs();
    let mut neumann = vec![Vec::new(); exp.e_grid.len()];
    let mut dirichlet = vec![Vec::new(); exp.e_grid.len()];
    for &side in &sides {
        let idx: Vec<usize> = (0..exp.e_grid.len()).filter(|&i| per_energy_side[i] == side).collect();
        let energies: Vec<f64> = idx.iter().map(|&i| exp.e_grid[i]).collect();
        let t = mc_counts(exp, side, &[Boundary::Neumann, Boundary::Dirichlet], &energies)?;
        for (k, &i) in idx.iter().enumerate() {
            neumann[i] = t.values(0, k);
            dirichlet[i] = t.values(1, k);
        }
    }
    let points: Vec<LifshitzPoint> = exp
        .e_grid
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let (nm, ns) = mean_stderr(&neumann[i]);
            let (dm, ds) = mean_stderr(&dirichlet[i]);
            LifshitzPoint {
                e,
                side: per_energy_side[i],
                nu_neumann: nm,
                stderr_neumann: ns,
                nu_dirichlet: dm,
                stderr_dirichlet: ds,
            }
        })
        .collect();

    let fit_with_ci = |samples: &[Vec<f64>], means: Vec<f64>, salt: u64| -> Option<LogLogFit> {
        let fit = loglog_fit(&exp.e_grid, &means)?;
        let used = means.iter().filter(|v| usable(**v)).count();
        let mut rng = seeded([exp.master_seed, TAG_BOOTSTRAP, salt, 0]);
        let all: Vec<usize> = (0..pairs).collect();
        let mut slopes = Vec::with_capacity(cfg.n_boot);
        for _ in 0..cfg.n_boot {
            let pick: Vec<usize> = (0..pairs).map(|_| *all.choose(&mut rng).expect("nonempty")).collect();
            let boot: Vec<f64> = samples
                .iter()
                .map(|v| pick.iter().map(|&j| v[j]).sum::<f64>() / pairs as f64)
                .collect();
            if let Some(f) = loglog_fit(&exp.e_grid, &boot) {
                slopes.push(f.slope);
            }
        }
        Some(LogLogFit {
            fit,
            ci_low: quantile(&slopes, 0.025),
            ci_high: quantile(&slopes, 0.975),
            points: used,
            censored: means.len() - used,
        })
    };
    let neumann_fit = fit_with_ci(&neumann, points.iter().map(|p| p.nu_neumann).collect(), 1);
    let dirichlet_fit = fit_with_ci(&dirichlet, points.iter().map(|p| p.nu_dirichlet).collect(), 2);
    Ok(LifshitzReport {
        dim: exp.dim(),
        expected_slope: -(exp.dim() as f64) / 2.0,
        points,
        neumann: neumann_fit,
        dirichlet: dirichlet_fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Grid cells `[E_i, E_{i+1}]` where the averaged IDS rises beyond two standard errors.
    pub growth_cells: Vec<(f64, f64)>,
    /// Grid cells containing an eigenvalue of at least one sampled operator.
    pub spectral_cells: Vec<(f64, f64)>,
    /// Total width of cells in exactly one of the two sets.
    pub symmetric_difference: f64,
    pub grid_resolution: f64,
}

pub fn growth_point_check(cfg: &ExperimentConfig, side: f64, boundary: Boundary) -> Result<GrowthReport> {
    if cfg.e_grid.len() < 2 {
        return Err(LabError::invalid("e_grid", "needs at least two energies"));
    }
    let t = mc_counts(cfg, side, &[boundary], &cfg.e_grid)?;
    let e = &cfg.e_grid;
    let stats: Vec<(f64, f64)> = (0..e.len()).map(|i| t.mean_stderr(0, i)).collect();
    let mut growth = Vec::new();
    let mut spectral = Vec::new();
    let mut sym = 0.0;
    for i in 0..e.len() - 1 {
        let (m0, s0) = stats[i];
        let (m1, s1) = stats[i + 1];
        let noise = (s0.max(0.0).powi(2) + s1.max(0.0).powi(2)).sqrt();
        let noise = if noise.is_nan() { 0.0 } else { noise };
        let grows = m1 - m0 > 2.0 * noise && m1 > m0;
        let hit = t.counts.iter().any(|c| c[0][i + 1] > c[0][i]);
        let cell = (e[i], e[i + 1]);
        if grows {
            growth.push(cell);
        }
        if hit {
            spectral.push(cell);
        }
        if grows != hit {
            sym += e[i + 1] - e[i];
        }
    }
    let grid_resolution = e.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(GrowthReport {
        growth_cells: growth,
        spectral_cells: spectral,
        symmetric_difference: sym,
        grid_resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::SingleSitePotential;

    fn lattice_cfg(dim: usize, w: f64) -> ExperimentConfig {
        ExperimentConfig {
            point_set: PointSetSpec::lattice(dim, 1.0),
            potential: SingleSitePotential::boxed(1.0, 0.375),
            dist: SingleSiteDistribution::Uniform { w },
            h: None,
            master_seed: 7,
            n_samples: 6,
            n_translates: 2,
            e_grid: vec![0.05, 0.1, 0.3],
            l_list: vec![4.0, 8.0, 16.0],
            boundaries: both_boundaries(),
        }
    }

    #[test]
    fn free_case_has_no_spread() {
        let cfg = ExperimentConfig {
            h: Some(1.0),
            potential: SingleSitePotential::boxed(1.0, 1.5),
            ..lattice_cfg(1, 0.0)
        };
        let (mean, se) = mc_expected_ids(&cfg, 0.1, 8.0, Boundary::Neumann).unwrap();
        assert_eq!(se, 0.0);
        // Free Neumann eigenvalues on 8 nodes: 2 - 2 cos(kπ/8); only k = 0 lies below 0.1.
        assert_eq!(mean, 1.0 / 8.0);
        let rep = bracketing_check(&cfg, 0.1, 8.0).unwrap();
        assert_eq!(rep.dirichlet_mean, 0.0);
        assert_eq!(rep.pathwise_violations, 0);
    }

    #[test]
    fn full_trace_above_spectrum() {
        let cfg = lattice_cfg(1, 1.0);
        let (mean, _) = mc_expected_ids(&cfg, 1e3, 4.0, Boundary::Dirichlet).unwrap();
        assert_eq!(mean, 16.0 / 4.0);
    }

    #[test]
    fn results_are_reproducible() {
        let cfg = lattice_cfg(1, 1.0);
        let a = mc_counts(&cfg, 8.0, &[Boundary::Neumann], &cfg.e_grid).unwrap();
        let b = mc_counts(&cfg, 8.0, &[Boundary::Neumann], &cfg.e_grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subadditivity_k1_is_equality() {
        let cfg = lattice_cfg(2, 1.0);
        let rep = subadditivity_check(&cfg, 0.5, 4.0, 1).unwrap();
        for r in &rep.rows {
            assert_eq!(r.neumann_big, r.neumann_parts);
            assert_eq!(r.dirichlet_big, r.dirichlet_parts);
        }
        let rep = subadditivity_check(&cfg, 0.5, 2.0, 2).unwrap();
        assert_eq!(rep.neumann_violations + rep.dirichlet_violations, 0);
    }

    #[test]
    fn temple_zero_coupling() {
        let cfg = lattice_cfg(1, 0.0);
        let rep = temple_check(&cfg, 8.0, 3).unwrap();
        for r in &rep.rows {
            assert_eq!(r.bound, 0.0);
            assert!(r.ground_state.abs() < 1e-9);
        }
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn single_site_deviation_probability() {
        // One point in Λ_1(0), uniform couplings, no truncation: P(ω <= 0.25) = 0.25.
        let cfg = LdConfig {
            point_set: PointSetSpec::lattice(1, 1.0),
            dist: SingleSiteDistribution::Uniform { w: 1.0 },
            alpha: 10.0,
            l_list: vec![1.0],
            e_level: 0.25,
            n_samples: 40_000,
            master_seed: 1,
        };
        let rep = large_deviation_rate(&cfg).unwrap();
        assert_eq!(rep.rows[0].points, 1);
        assert!((rep.rows[0].probability - 0.25).abs() < 0.01);
    }

    #[test]
    fn wegner_counts_are_bounded() {
        let cfg = lattice_cfg(1, 1.0);
        let rep = wegner_scan(&cfg, 0.3, &[0.02, 0.04], 8.0).unwrap();
        assert!(rep.mean_counts.iter().all(|c| *c >= 0.0 && *c <= rep.order as f64));
        assert!(rep.mean_counts[0] <= rep.mean_counts[1]);
    }

    #[test]
    fn growth_on_free_operator() {
        let cfg = ExperimentConfig {
            e_grid: (0..20).map(|i| 0.05 * i as f64).collect(),
            ..lattice_cfg(1, 0.0)
        };
        let rep = growth_point_check(&cfg, 16.0, Boundary::Neumann).unwrap();
        assert_eq!(rep.symmetric_difference, 0.0);
    }
}

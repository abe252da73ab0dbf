//! Eigenvalue counting by inertia, ground states, and finite-volume IDS curves.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::hamiltonian::{Boundary, OperatorMatrix};

/// Matrices up to this order are counted by full diagonalization.
pub const DENSE_MAX: usize = 24;
/// Relative size of one jitter step, `jitter_eps = JITTER_REL * ||M||`.
pub const JITTER_REL: f64 = 1e-10;
/// Pivots below `PIVOT_REL * ||M||` trigger a jitter retry.
pub const PIVOT_REL: f64 = 1e-12;
pub const MAX_JITTER: usize = 8;

/// Real symmetric band matrix; only the lower band is stored.
///
/// Row `i` holds `M[i][i-bw..=i]` left to right, padded with zeros before column 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), 0);
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Lower band of a dense symmetric matrix; entries outside the band must vanish.
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut bw = 0;
        for i in 0..n {
            for j in 0..i {
                if a[(i, j)] != 0.0 {
                    bw = bw.max(i - j);
                }
            }
        }
        let mut m = Self::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                m.set(i, j, a[(i, j)]);
            }
        }
        m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside the band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn shifted(&self, c: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.add(i, i, c);
        }
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let v = self.get(i, j);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let v = self.data[self.slot(i, j)];
                y[i] += v * x[j];
                y[j] += v * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut off = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..i {
                let v = self.get(i, j).abs();
                off[i] += v;
                off[j] += v;
            }
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, r) in off.iter().enumerate() {
            let d = self.get(i, i);
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// Infinity norm, which dominates the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    /// Nonzeros of the lower triangle as `(i, j, value)`, row by row.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let v = self.get(i, j);
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        t
    }
}

/// `L D L^T` factorization of a shifted band matrix.
pub struct BandLdl {
    n: usize,
    bw: usize,
    /// Unit lower factor in the band layout of [`SymBand`]; the diagonal slot holds `d`.
    w: Vec<f64>,
}

impl BandLdl {
    /// Factorizes `m - sigma I` without pivoting. Returns `None` when a pivot falls below `tol`.
    pub fn factor(m: &SymBand, sigma: f64, tol: f64) -> Option<Self> {
        let (n, bw) = (m.n, m.bw);
        let stride = bw + 1;
        let mut w = m.data.clone();
        for i in 0..n {
            w[i * stride + bw] -= sigma;
        }
        let mut col = vec![0.0; bw + 1];
        for j in 0..n {
            let d = w[j * stride + bw];
            if d.abs() < tol || !d.is_finite() {
                return None;
            }
            let reach = bw.min(n - 1 - j);
            for t in 1..=reach {
                // (j + t, j) sits at offset bw - t in row j + t.
                col[t] = w[(j + t) * stride + bw - t];
            }
            for t1 in 1..=reach {
                let f = col[t1] / d;
                if f == 0.0 {
                    continue;
                }
                let row = (j + t1) * stride;
                for t2 in 1..=t1 {
                    // (j + t1, j + t2) sits at offset bw - (t1 - t2).
                    w[row + bw - t1 + t2] -= f * col[t2];
                }
                w[row + bw - t1] = f;
            }
        }
        Some(Self { n, bw, w })
    }

    pub fn pivots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.w[i * (self.bw + 1) + self.bw])
    }

    pub fn negatives(&self) -> usize {
        self.pivots().filter(|d| *d < 0.0).count()
    }

    /// Solves `(M - sigma I) x = b` in place.
    pub fn solve(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.w[i * stride + bw + k - i] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.w[i * stride + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.w[k * stride + bw + i - k] * x[k];
            }
            x[i] = s;
        }
    }
}

fn diagonal_negatives(m: &SymBand, sigma: f64, tol: f64) -> Option<usize> {
    let mut count = 0;
    for &a in &m.data {
        let d = a - sigma;
        if d.abs() < tol {
            return None;
        }
        count += usize::from(d < 0.0);
    }
    Some(count)
}

/// Sturm count for a tridiagonal matrix: number of negative pivots of `m - sigma I`.
fn sturm_negatives(m: &SymBand, sigma: f64, tol: f64) -> Option<usize> {
    let mut count = 0;
    let mut prev = 1.0;
    let mut prev_off2 = 0.0;
    for i in 0..m.n {
        let d = m.data[2 * i + 1] - sigma - prev_off2 / prev;
        if d.abs() < tol || !d.is_finite() {
            return None;
        }
        if d < 0.0 {
            count += 1;
        }
        prev = d;
        if i + 1 < m.n {
            let b = m.data[2 * (i + 1)];
            prev_off2 = b * b;
        }
    }
    Some(count)
}

/// Number of eigenvalues of `m` that are `<= e`, by Sylvester inertia of `m - e I`.
///
/// A near-zero pivot moves the shift up by multiples of `JITTER_REL * ||m||`.
pub fn count_below(m: &SymBand, e: f64) -> Result<usize> {
    if m.n <= DENSE_MAX && m.bw > 1 {
        return Ok(dense_count_below(m, e));
    }
    count_below_ldl(m, e)
}

/// Inertia count that never falls back to dense diagonalization.
pub fn count_below_ldl(m: &SymBand, e: f64) -> Result<usize> {
    if m.n == 0 {
        return Ok(0);
    }
    let norm = m.norm_inf().max(e.abs());
    let tol = PIVOT_REL * norm;
    let eps = JITTER_REL * norm;
    for k in 0..=MAX_JITTER {
        let sigma = e + k as f64 * eps;
        let got = if m.bw == 0 {
            diagonal_negatives(m, sigma, tol)
        } else if m.bw == 1 {
            sturm_negatives(m, sigma, tol)
        } else {
            BandLdl::factor(m, sigma, tol).map(|f| f.negatives())
        };
        if let Some(c) = got {
            return Ok(c);
        }
    }
    Err(LabError::OnSpectrum {
        energy: e,
        retries: MAX_JITTER,
    })
}

/// All eigenvalues, ascending, by dense symmetric diagonalization.
pub fn dense_eigenvalues(m: &SymBand) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.to_dense()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn dense_count_below(m: &SymBand, e: f64) -> usize {
    dense_eigenvalues(m).iter().filter(|&&v| v <= e).count()
}

/// Smallest eigenvalue to absolute accuracy `tol`.
///
/// Bisection on inertia counts keeps a certified bracket `[lo, hi]`; inverse iteration
/// shifted to `lo` proposes a Rayleigh quotient that is accepted only once the counts
/// confirm it.
pub fn ground_state_energy(m: &SymBand, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(LabError::invalid("tol", "must be positive"));
    }
    if m.n == 0 {
        return Err(LabError::invalid("matrix", "empty matrix has no ground state"));
    }
    if m.n <= DENSE_MAX {
        return Ok(dense_eigenvalues(m)[0]);
    }
    let (g_lo, g_hi) = m.gershgorin();
    let scale = m.norm_inf();
    let mut lo = g_lo - 1e-9 * scale - tol;
    let mut hi = g_hi + 1e-9 * scale + tol;
    let max_iter = 400;
    let mut iter = 0;
    let coarse = (1e-4 * scale).max(tol);
    while hi - lo > coarse {
        let mid = 0.5 * (lo + hi);
        if count_below(m, mid)? >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        iter += 1;
    }
    if hi - lo <= tol {
        return Ok(0.5 * (lo + hi));
    }
    if let Some(rho) = inverse_iteration(m, lo, tol) {
        let up = rho + 0.5 * tol;
        let down = rho - 0.5 * tol;
        if up < hi && count_below(m, up)? >= 1 {
            hi = up;
        }
        if down > lo && count_below(m, down)? == 0 {
            lo = down;
        }
    }
    while hi - lo > tol {
        if iter >= max_iter {
            return Err(LabError::NoConvergence {
                what: "ground_state_energy",
                iterations: iter,
            });
        }
        let mid = 0.5 * (lo + hi);
        if count_below(m, mid)? >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        iter += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// Rayleigh quotient after inverse iteration with shift `sigma` below the spectrum.
fn inverse_iteration(m: &SymBand, sigma: f64, tol: f64) -> Option<f64> {
    let f = BandLdl::factor(m, sigma, PIVOT_REL * m.norm_inf())?;
    let n = m.n;
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 13) as f64).collect();
    let mut y = vec![0.0; n];
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        f.solve(&mut x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        m.matvec(&x, &mut y);
        let rho: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        if (rho - last).abs() < 0.01 * tol {
            return Some(rho);
        }
        last = rho;
    }
    Some(last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsMeta {
    pub side: f64,
    pub boundary: Boundary,
    pub samples: usize,
    pub spec_id: String,
}

/// `E ↦ ν(E)` on an ascending energy grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(with = "crate::stats::nan_null::opt_vec")]
    pub stderr: Option<Vec<f64>>,
    pub meta: IdsMeta,
}

impl IdsCurve {
    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Columns `E,value,stderr`; the last column is empty for a single realization.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,value,stderr\n");
        for (i, (e, v)) in self.energies.iter().zip(&self.values).enumerate() {
            match &self.stderr {
                Some(s) => {
                    let _ = writeln!(out, "{e},{v},{}", s[i]);
                }
                None => {
                    let _ = writeln!(out, "{e},{v},");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn check_ascending(key: &str, v: &[f64]) -> Result<()> {
    if v.windows(2).any(|w| !(w[0] < w[1])) || v.iter().any(|x| !x.is_finite()) {
        return Err(LabError::invalid(key, "must be finite and strictly ascending"));
    }
    Ok(())
}

/// `count_below(M, E) / L^d` at every grid energy.
pub fn finite_volume_ids(m: &OperatorMatrix, energies: &[f64]) -> Result<IdsCurve> {
    check_ascending("e_grid", energies)?;
    let volume = m.window.volume();
    let mut values = Vec::with_capacity(energies.len());
    for &e in energies {
        values.push(count_below(&m.matrix, e)? as f64 / volume);
    }
    Ok(IdsCurve {
        energies: energies.to_vec(),
        values,
        stderr: None,
        meta: IdsMeta {
            side: m.window.side,
            boundary: m.boundary,
            samples: 1,
            spec_id: String::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(diag: &[f64], off: f64) -> SymBand {
        let n = diag.len();
        let mut m = SymBand::zeros(n, 1);
        for i in 0..n {
            m.set(i, i, diag[i]);
            if i > 0 {
                m.set(i, i - 1, off);
            }
        }
        m
    }

    #[test]
    fn diagonal_counts() {
        let m = SymBand::from_diagonal(&[1.0, 2.0, 3.0]);
        assert_eq!(count_below(&m, 2.5).unwrap(), 2);
        assert_eq!(count_below_ldl(&m, 2.5).unwrap(), 2);
        assert_eq!(count_below(&m, -1.0).unwrap(), 0);
        assert!((ground_state_energy(&m, 1e-10).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_pivot_is_jittered() {
        let m = SymBand::from_diagonal(&[1.0, 2.0, 3.0]);
        // An eigenvalue sitting exactly at E is counted.
        assert_eq!(count_below_ldl(&m, 2.0).unwrap(), 2);
    }

    #[test]
    fn band_ldl_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let bw = 5;
        let mut m = SymBand::zeros(n, bw);
        for i in 0..n {
            m.set(i, i, 20.0 + rng.random::<f64>());
            for j in i.saturating_sub(bw)..i {
                m.set(i, j, rng.random::<f64>() - 0.5);
            }
        }
        let f = BandLdl::factor(&m, 1.5, 1e-14).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        f.solve(&mut x);
        let mut y = vec![0.0; n];
        m.shifted(-1.5).matvec(&x, &mut y);
        for (a, b) in y.iter().zip(&b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn band_counts_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let n = 30 + trial * 3;
            let bw = 1 + trial % 6;
            let mut m = SymBand::zeros(n, bw);
            for i in 0..n {
                m.set(i, i, rng.random::<f64>() * 4.0);
                for j in i.saturating_sub(bw)..i {
                    m.set(i, j, rng.random::<f64>() - 0.5);
                }
            }
            let ev = dense_eigenvalues(&m);
            for _ in 0..10 {
                let e = -2.0 + 8.0 * rng.random::<f64>();
                let want = ev.iter().filter(|&&v| v <= e).count();
                assert_eq!(count_below_ldl(&m, e).unwrap(), want);
            }
        }
    }

    #[test]
    fn ground_state_of_path_laplacian() {
        let n = 200;
        let mut d = vec![2.0; n];
        d[0] = 1.0;
        d[n - 1] = 1.0;
        let m = tridiag(&d, -1.0);
        assert!(ground_state_energy(&m, 1e-10).unwrap().abs() < 1e-10);
        let d = vec![2.0; n];
        let m = tridiag(&d, -1.0);
        let want = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((ground_state_energy(&m, 1e-11).unwrap() - want).abs() < 1e-11);
    }

    #[test]
    fn triplets_and_dense_roundtrip() {
        let m = tridiag(&[2.0, 2.0, 2.0], -1.0);
        assert_eq!(m.triplets().len(), 5);
        assert_eq!(SymBand::from_dense(&m.to_dense()), m);
    }
}

//! The annulus point set: pattern frequencies and finite-volume IDS that oscillate
//! between the values of two lattices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::colouring::{sample_colouring, SingleSiteDistribution};
use crate::error::{LabError, Result};
use crate::hamiltonian::{assemble, Boundary, SingleSitePotential};
use crate::pointset::{pattern_frequency, AnnulusShells, Pattern, PointSetSpec, Window, MAX_POINTS};
use crate::spectrum::count_below;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusParams {
    pub dim: usize,
    pub q1: u32,
    pub q2: u32,
    pub annulus_alpha: f64,
    #[serde(rename = "L1")]
    pub initial_side: f64,
    pub k_max: u32,
}

impl AnnulusParams {
    pub fn spec(&self) -> PointSetSpec {
        PointSetSpec::annulus(self.dim, self.q1, self.q2, self.annulus_alpha, self.initial_side)
    }

    pub fn shells(&self) -> AnnulusShells {
        AnnulusShells::new(self.initial_side, self.annulus_alpha)
    }

    fn validate(&self) -> Result<()> {
        self.spec().validate()?;
        if self.k_max < 2 {
            return Err(LabError::invalid("k_max", "needs at least 2 so that both parities occur"));
        }
        let ln_points = self.dim as f64 * (self.shells().ln_side(self.k_max) - (self.q1.min(self.q2) as f64).ln());
        if ln_points > MAX_POINTS.ln() {
            return Err(LabError::budget(
                "k_max",
                format!("L_k_max^d / q^d = e^{ln_points:.1} exceeds the point budget"),
            ));
        }
        Ok(())
    }

    /// Lattice spacing carried by shell `k`: `q1` for even `k`, `q2` for odd `k`.
    pub fn spacing_of(&self, k: u32) -> u32 {
        if k.is_multiple_of(2) {
            self.q1
        } else {
            self.q2
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationRow {
    pub k: u32,
    #[serde(rename = "L_k")]
    pub side: f64,
    pub value: f64,
    /// Finite-size error estimate; zero for exact counts.
    pub error: f64,
    pub parity: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub rows: Vec<OscillationRow>,
    /// Value at the largest even `k`.
    #[serde(with = "crate::stats::nan_null")]
    pub even_estimate: f64,
    /// Value at the largest odd `k`.
    #[serde(with = "crate::stats::nan_null")]
    pub odd_estimate: f64,
    /// `|value(k_max) - value(k_max - 1)|`.
    pub gap: f64,
    /// The gap the run must exceed.
    pub threshold: f64,
    pub passed: bool,
    /// Consecutive differences alternate in sign.
    pub alternates: bool,
}

impl OscillationReport {
    fn from_rows(rows: Vec<OscillationRow>, threshold: f64) -> Self {
        let last = |even: bool| {
            rows.iter()
                .rev()
                .find(|r| (r.k % 2 == 0) == even)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        let n = rows.len();
        let gap = (rows[n - 1].value - rows[n - 2].value).abs();
        let diffs: Vec<f64> = rows.windows(2).map(|w| w[1].value - w[0].value).collect();
        let alternates = diffs.windows(2).all(|d| d[0] * d[1] < 0.0);
        Self {
            even_estimate: last(true),
            odd_estimate: last(false),
            gap,
            threshold,
            passed: gap >= threshold,
            alternates,
            rows,
        }
    }

    /// Columns `k,L_k,value,error,parity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,L_k,value,error,parity\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.k, r.side, r.value, r.error, r.parity);
        }
        out
    }
}

fn parity(k: u32) -> String {
    if k.is_multiple_of(2) { "even" } else { "odd" }.to_string()
}

/// Frequency of `pattern` in `Λ_{L_k}(0)` for `k = 1..=k_max`.
///
/// Passes when the last gap exceeds half of `|q1^{-d} - q2^{-d}|`.
pub fn frequency_sequence(p: &AnnulusParams, pattern: &Pattern) -> Result<OscillationReport> {
    p.validate()?;
    let spec = p.spec();
    let shells = p.shells();
    let match_tol = (p.q1.min(p.q2) as f64) / 100.0;
    let rows = (1..=p.k_max)
        .map(|k| {
            let side = shells.side(k);
            let value = pattern_frequency(&spec, pattern, &vec![0.0; p.dim], side, match_tol)?;
            Ok(OscillationRow {
                k,
                side,
                value,
                error: 0.0,
                parity: parity(k),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = p.dim as i32;
    let target = ((p.q1 as f64).powi(-d) - (p.q2 as f64).powi(-d)).abs();
    Ok(OscillationReport::from_rows(rows, 0.5 * target))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsOscillationConfig {
    pub annulus: AnnulusParams,
    pub potential: SingleSitePotential,
    /// Common value of every coupling.
    pub coupling: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub h: f64,
    /// Side of the pure-lattice windows used for the reference values.
    pub reference_side: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeReference {
    pub q: u32,
    pub neumann: f64,
    pub dirichlet: f64,
}

impl LatticeReference {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.neumann + self.dirichlet)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsOscillationReport {
    pub oscillation: OscillationReport,
    pub reference_q1: LatticeReference,
    pub reference_q2: LatticeReference,
    /// Dirichlet values alongside the Neumann values in `oscillation.rows`.
    pub dirichlet: Vec<f64>,
    /// Each `k` lies within its error of the reference for the lattice carried by `A_k`.
    pub tracks_references: bool,
}

fn ids_pair(
    spec: &PointSetSpec,
    dim: usize,
    side: f64,
    cfg: &IdsOscillationConfig,
) -> Result<(f64, f64)> {
    let dist = SingleSiteDistribution::Constant { value: cfg.coupling };
    let center = vec![0.0; dim];
    let window = Window::new(dim, &center, side + 2.0 * cfg.potential.delta_u())?;
    let cw = sample_colouring(spec, &window, &dist, 0, 0)?;
    let vol = side.powi(dim as i32);
    let mut out = [0.0; 2];
    for (slot, bc) in [(0, Boundary::Neumann), (1, Boundary::Dirichlet)] {
        let m = assemble(&cw, &cfg.potential, side, &center, cfg.h, bc)?;
        out[slot] = count_below(&m.matrix, cfg.e)? as f64 / vol;
    }
    Ok((out[0], out[1]))
}

/// `ν̃^N_{L_k}(E)` for the deterministic operator with all couplings equal.
///
/// The error of row `k` is `|ν̃^N - ν̃^D| + (L_{k-1}/L_k)^d max(ν_1, ν_2)`: the bracketing
/// width plus the largest possible contribution of the inner cube `Λ_{L_{k-1}}`. The run
/// passes when the last gap is at least three times the larger of the last two errors.
pub fn ids_oscillation(cfg: &IdsOscillationConfig) -> Result<IdsOscillationReport> {
    let p = &cfg.annulus;
    p.validate()?;
    cfg.potential.validate()?;
    let dim = p.dim;
    let reference = |q: u32| -> Result<LatticeReference> {
        let spec = PointSetSpec::lattice(dim, q as f64);
        let (n, d) = ids_pair(&spec, dim, cfg.reference_side, cfg)?;
        Ok(LatticeReference {
            q,
            neumann: n,
            dirichlet: d,
        })
    };
    let ref1 = reference(p.q1)?;
    let ref2 = reference(p.q2)?;
    let ref_gap = (ref1.midpoint() - ref2.midpoint()).abs();
    let ref_width = (ref1.neumann - ref1.dirichlet).abs().max((ref2.neumann - ref2.dirichlet).abs());
    if ref_gap <= 2.0 * ref_width {
        return Err(LabError::invalid(
            "E",
            format!("lattice references {} and {} are indistinguishable at this energy", ref1.midpoint(), ref2.midpoint()),
        ));
    }
    let max_ref = ref1.neumann.max(ref2.neumann);
    let spec = p.spec();
    let shells = p.shells();
    let mut rows = Vec::new();
    let mut dirichlet = Vec::new();
    for k in 1..=p.k_max {
        let side = shells.side(k);
        let (n, d) = ids_pair(&spec, dim, side, cfg)?;
        let inner = if k == 1 {
            0.0
        } else {
            (shells.ln_side(k - 1) - shells.ln_side(k)).exp().powi(dim as i32)
        };
        rows.push(OscillationRow {
            k,
            side,
            value: n,
            error: (n - d).abs() + inner * max_ref,
            parity: parity(k),
        });
        dirichlet.push(d);
    }
    let n = rows.len();
    let threshold = 3.0 * rows[n - 1].error.max(rows[n - 2].error);
    let tracks_references = rows.iter().skip(1).all(|r| {
        let target = if p.spacing_of(r.k) == p.q1 { &ref1 } else { &ref2 };
        (r.value - target.midpoint()).abs() <= r.error + (target.neumann - target.dirichlet).abs()
    });
    Ok(IdsOscillationReport {
        oscillation: OscillationReport::from_rows(rows, threshold),
        reference_q1: ref1,
        reference_q2: ref2,
        dirichlet,
        tracks_references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(dim: usize, k_max: u32) -> AnnulusParams {
        AnnulusParams {
            dim,
            q1: 1,
            q2: 2,
            annulus_alpha: 2.0,
            initial_side: 8.0,
            k_max,
        }
    }

    #[test]
    fn frequencies_match_enumeration() {
        let rep = frequency_sequence(&params(1, 3), &Pattern::single_point(1, 1.0)).unwrap();
        // k = 1: 2Z in (-4, 4) with |p| + 1/2 < 4 gives {-2, 0, 2}.
        assert!((rep.rows[0].value - 3.0 / 8.0).abs() < 1e-12);
        // k = 2: 2Z on [-4, 4] (5 points) and Z on 4 < |p| < 31.5 (2 * 27 points).
        assert!((rep.rows[1].value - 59.0 / 64.0).abs() < 1e-12);
        // k = 3: 2Z on [-4, 4], all of Z on 4 < |p| <= 32 (2 * 28), 2Z on 32 < |p| < 2047.5 (2 * 1007).
        assert!((rep.rows[2].value - 2075.0 / 4096.0).abs() < 1e-12);
        assert!(rep.passed && rep.alternates);
    }

    #[test]
    fn degenerate_annulus_is_rejected() {
        let mut p = params(1, 3);
        p.q2 = 1;
        assert!(frequency_sequence(&p, &Pattern::single_point(1, 1.0)).is_err());
        let mut p = params(1, 6);
        p.q2 = 2;
        assert!(matches!(
            frequency_sequence(&p, &Pattern::single_point(1, 1.0)),
            Err(LabError::Budget { .. })
        ));
    }

    #[test]
    fn two_dimensional_limits() {
        let rep = frequency_sequence(&params(2, 2), &Pattern::single_point(2, 1.0)).unwrap();
        assert!((rep.rows[0].value - 0.25).abs() < 0.2);
        assert!((rep.rows[1].value - 1.0).abs() < 0.1);
    }

    #[test]
    fn free_operator_does_not_oscillate() {
        let cfg = IdsOscillationConfig {
            annulus: params(1, 2),
            potential: SingleSitePotential::boxed(1.0, 0.25),
            coupling: 0.0,
            e: 0.5,
            h: 0.125,
            reference_side: 64.0,
        };
        // With zero couplings the lattices give identical operators.
        assert!(ids_oscillation(&cfg).is_err());
    }
}

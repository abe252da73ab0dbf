//! Closed-form constants and localization thresholds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn check_dim(d: u32) -> Result<()> {
    if d == 0 {
        return Err(LabError::invalid("d", "must be at least 1"));
    }
    Ok(())
}

/// `(α, c_u)` with `α = [u⁺ (2δ_u/r)^d]⁻¹` and `c_u = 2^{-d-1} u⁻ ε_u^d`.
pub fn temple_constants(u_plus: f64, u_minus: f64, eps_u: f64, delta_u: f64, r: f64, d: u32) -> Result<(f64, f64)> {
    check_dim(d)?;
    for (k, v) in [
        ("u_plus", u_plus),
        ("u_minus", u_minus),
        ("eps_u", eps_u),
        ("delta_u", delta_u),
        ("r", r),
    ] {
        check_positive(k, v)?;
    }
    if eps_u > delta_u {
        return Err(LabError::invalid("eps_u", "must not exceed delta_u"));
    }
    if u_minus > u_plus {
        return Err(LabError::invalid("u_minus", "must not exceed u_plus"));
    }
    let d = d as i32;
    let alpha = 1.0 / (u_plus * (2.0 * delta_u / r).powi(d));
    let c_u = 2f64.powi(-d - 1) * u_minus * eps_u.powi(d);
    Ok((alpha, c_u))
}

/// `C_R = C3 R^{-d-d²/2}`.
pub fn c_r(c3: f64, big_r: f64, d: u32) -> Result<f64> {
    check_dim(d)?;
    check_positive("C3", c3)?;
    check_positive("R", big_r)?;
    let d = d as f64;
    Ok(c3 * big_r.powf(-d - d * d / 2.0))
}

/// `E_*(L) = ½ (C_R / ((p+2) d ln L))^{2/d}`.
pub fn e_star(l: f64, c_r: f64, p: f64, d: u32) -> Result<f64> {
    check_dim(d)?;
    check_positive("C_R", c_r)?;
    if !(l > 1.0) {
        return Err(LabError::invalid("L", format!("must exceed 1, got {l}")));
    }
    if !(p > -2.0) {
        return Err(LabError::invalid("p", "must exceed -2"));
    }
    let d = d as f64;
    Ok(0.5 * (c_r / ((p + 2.0) * d * l.ln())).powf(2.0 / d))
}

/// Power of `R` in `E_LT`: `d + 2 + 8/(3d)`.
pub fn lt_exponent(d: u32) -> f64 {
    let d = d as f64;
    // Single rounding: (3d² + 6d + 8) / (3d).
    (3.0 * d * d + 6.0 * d + 8.0) / (3.0 * d)
}

/// Power of `R` in `E_SA`: `4d + 4`.
pub fn sa_exponent(d: u32) -> f64 {
    4.0 * d as f64 + 4.0
}

/// `ln(C1 R^{-k} (log C2 R)^{-2/d})`, computed without forming the power.
fn ln_threshold(big_r: f64, c1: f64, c2: f64, k: f64, d: u32, base: LogBase) -> Result<f64> {
    check_dim(d)?;
    check_positive("C1", c1)?;
    check_positive("C2", c2)?;
    check_positive("R", big_r)?;
    let inner = base.log(c2 * big_r);
    if !(inner > 0.0) {
        return Err(LabError::invalid(
            "R",
            format!("log(C2 R) must be positive, got C2 R = {}", c2 * big_r),
        ));
    }
    Ok(c1.ln() - k * big_r.ln() - (2.0 / d as f64) * inner.ln())
}

/// `E_LT(R) = C1 R^{-(d+2+8/(3d))} (log C2 R)^{-2/d}`.
pub fn e_lt(big_r: f64, c1: f64, c2: f64, d: u32, base: LogBase) -> Result<f64> {
    let k = lt_exponent(d);
    let lnv = ln_threshold(big_r, c1, c2, k, d, base)?;
    // Direct evaluation keeps full relative accuracy away from under/overflow.
    let direct = c1 * big_r.powf(-k) * base.log(c2 * big_r).powf(-2.0 / d as f64);
    Ok(if direct.is_normal() { direct } else { lnv.exp() })
}

/// `E_SA(R) = C1' R^{-(4d+4)} (log C2' R)^{-2/d}`.
pub fn e_sa(big_r: f64, c1p: f64, c2p: f64, d: u32, base: LogBase) -> Result<f64> {
    let k = sa_exponent(d);
    let lnv = ln_threshold(big_r, c1p, c2p, k, d, base)?;
    let direct = c1p * big_r.powf(-k) * base.log(c2p * big_r).powf(-2.0 / d as f64);
    Ok(if direct.is_normal() { direct } else { lnv.exp() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConstants {
    pub c1: f64,
    pub c2: f64,
    pub c1p: f64,
    pub c2p: f64,
}

impl Default for ThresholdConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c1p: 1.0,
            c2p: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub r_star: f64,
    /// Whether `E_LT > E_SA` held at every scanned radius beyond `r_star`.
    pub lt_dominates_beyond: bool,
}

pub const CROSSOVER_MAX_R: f64 = 1e9;

/// Smallest radius where `E_LT(R) = E_SA(R)`, searched on `(max(1/C2, 1/C2'), 1e9]`.
///
/// A logarithmic scan brackets the first sign change of `ln E_LT - ln E_SA`; bisection
/// then refines it to relative width `tol`. `Ok(None)` means no crossing in range.
pub fn crossover_radius(k: &ThresholdConstants, d: u32, tol: f64, base: LogBase) -> Result<Option<Crossover>> {
    check_positive("tol", tol)?;
    let start = (1.0 / k.c2).max(1.0 / k.c2p);
    let f = |r: f64| -> Result<f64> {
        Ok(ln_threshold(r, k.c1, k.c2, lt_exponent(d), d, base)?
            - ln_threshold(r, k.c1p, k.c2p, sa_exponent(d), d, base)?)
    };
    let lo_end = start * (1.0 + 1e-9);
    if !(lo_end < CROSSOVER_MAX_R) {
        return Ok(None);
    }
    let steps = 4000;
    let ratio = (CROSSOVER_MAX_R / lo_end).ln() / steps as f64;
    let grid: Vec<f64> = (0..=steps).map(|i| lo_end * (ratio * i as f64).exp()).collect();
    let values = grid.iter().map(|&r| f(r)).collect::<Result<Vec<f64>>>()?;
    let Some(i) = values.windows(2).position(|w| w[0] == 0.0 || (w[0] < 0.0) != (w[1] < 0.0)) else {
        return Ok(None);
    };
    let (mut a, mut b) = (grid[i], grid[i + 1]);
    let (mut fa, _) = (values[i], values[i + 1]);
    if fa == 0.0 {
        b = a;
    }
    while (b - a) > tol * b {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let r_star = 0.5 * (a + b);
    let lt_dominates_beyond = values[i + 1..].iter().all(|v| *v > 0.0);
    Ok(Some(Crossover {
        r_star,
        lt_dominates_beyond,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsInputs {
    pub d: u32,
    /// Relative-denseness radius.
    #[serde(rename = "R")]
    pub big_r: f64,
    /// Uniform-discreteness radius.
    pub r: f64,
    pub p: f64,
    pub c3: f64,
    pub thresholds: ThresholdConstants,
    pub u_plus: f64,
    pub u_minus: f64,
    pub eps_u: f64,
    pub delta_u: f64,
    pub log_base: LogBase,
    pub l_samples: Vec<f64>,
}

impl Default for BoundsInputs {
    fn default() -> Self {
        Self {
            d: 1,
            big_r: 2.0,
            r: 1.0,
            p: 1.0,
            c3: 1.0,
            thresholds: ThresholdConstants::default(),
            u_plus: 1.0,
            u_minus: 1.0,
            eps_u: 0.5,
            delta_u: 0.5,
            log_base: LogBase::Natural,
            l_samples: vec![10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub inputs: BoundsInputs,
    pub temple_alpha: f64,
    pub c_u: f64,
    #[serde(rename = "C_R")]
    pub c_r: f64,
    /// `(L, E_*(L))` pairs.
    pub e_star: Vec<(f64, f64)>,
    pub e_lt: f64,
    pub e_sa: f64,
    pub lt_exponent: f64,
    pub sa_exponent: f64,
    pub r_star: Option<f64>,
    pub lt_dominates_beyond_r_star: Option<bool>,
}

pub fn bounds_report(inputs: &BoundsInputs) -> Result<BoundsReport> {
    let d = inputs.d;
    if inputs.r > inputs.big_r {
        return Err(LabError::invalid("r", "must not exceed R"));
    }
    let (temple_alpha, c_u) = temple_constants(
        inputs.u_plus,
        inputs.u_minus,
        inputs.eps_u,
        inputs.delta_u,
        inputs.r,
        d,
    )?;
    let cr = c_r(inputs.c3, inputs.big_r, d)?;
    let e_star = inputs
        .l_samples
        .iter()
        .map(|&l| Ok((l, e_star(l, cr, inputs.p, d)?)))
        .collect::<Result<Vec<_>>>()?;
    let k = &inputs.thresholds;
    let base = inputs.log_base;
    let cross = crossover_radius(k, d, 1e-12, base)?;
    Ok(BoundsReport {
        inputs: inputs.clone(),
        temple_alpha,
        c_u,
        c_r: cr,
        e_star,
        e_lt: e_lt(inputs.big_r, k.c1, k.c2, d, base)?,
        e_sa: e_sa(inputs.big_r, k.c1p, k.c2p, d, base)?,
        lt_exponent: lt_exponent(d),
        sa_exponent: sa_exponent(d),
        r_star: cross.map(|c| c.r_star),
        lt_dominates_beyond_r_star: cross.map(|c| c.lt_dominates_beyond),
    })
}

/// Columns `R,e_lt,e_sa` on `points` log-spaced radii in `[r_min, r_max]`.
pub fn threshold_sweep_csv(inputs: &BoundsInputs, r_min: f64, r_max: f64, points: usize) -> Result<String> {
    if !(r_min > 0.0 && r_max > r_min) || points < 2 {
        return Err(LabError::invalid("sweep", "need 0 < r_min < r_max and at least 2 points"));
    }
    let k = &inputs.thresholds;
    let mut out = String::from("R,e_lt,e_sa\n");
    for i in 0..points {
        let t = i as f64 / (points - 1) as f64;
        let r = r_min * (r_max / r_min).powf(t);
        let lt = e_lt(r, k.c1, k.c2, inputs.d, inputs.log_base);
        let sa = e_sa(r, k.c1p, k.c2p, inputs.d, inputs.log_base);
        if let (Ok(lt), Ok(sa)) = (lt, sa) {
            let _ = writeln!(out, "{r},{lt:e},{sa:e}");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temple_examples() {
        assert_eq!(temple_constants(1.0, 1.0, 0.5, 0.5, 1.0, 1).unwrap(), (1.0, 0.125));
        assert_eq!(temple_constants(1.0, 1.0, 1.0, 1.0, 1.0, 1).unwrap(), (0.5, 0.25));
        let (a2, c2) = temple_constants(2.0, 1.0, 0.5, 0.5, 1.0, 1).unwrap();
        assert_eq!((a2, c2), (0.5, 0.125));
        assert!(temple_constants(1.0, 2.0, 0.5, 0.5, 1.0, 1).is_err());
        assert!(temple_constants(1.0, 1.0, 0.6, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn c_r_examples() {
        assert_eq!(c_r(1.0, 1.0, 3).unwrap(), 1.0);
        assert!((c_r(1.0, 2.0, 1).unwrap() - 2f64.powf(-1.5)).abs() < 1e-16);
        assert_eq!(c_r(1.0, 2.0, 2).unwrap(), 0.0625);
    }

    #[test]
    fn e_star_example_and_domain() {
        let e = std::f64::consts::E;
        assert!((e_star(e, 1.0, 1.0, 2).unwrap() - 1.0 / 12.0).abs() < 1e-16);
        assert!(e_star(e * e, 1.0, 1.0, 2).unwrap() < e_star(e, 1.0, 1.0, 2).unwrap());
        assert!(e_star(1.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn exponent_table() {
        assert_eq!(lt_exponent(1), 17.0 / 3.0);
        assert_eq!(sa_exponent(1), 8.0);
        assert_eq!(lt_exponent(2), 16.0 / 3.0);
        assert_eq!(sa_exponent(2), 12.0);
        for d in 1..10 {
            assert!(sa_exponent(d) > lt_exponent(d));
        }
    }

    #[test]
    fn crossover_examples() {
        let e = std::f64::consts::E;
        let eq = ThresholdConstants {
            c2: e,
            c2p: e,
            ..ThresholdConstants::default()
        };
        let c = crossover_radius(&eq, 1, 1e-13, LogBase::Natural).unwrap().unwrap();
        assert!((c.r_star - 1.0).abs() < 1e-9);
        assert!(c.lt_dominates_beyond);

        let k = ThresholdConstants {
            c1: 1e-3,
            c2: e,
            c1p: 1.0,
            c2p: e,
        };
        let c = crossover_radius(&k, 1, 1e-13, LogBase::Natural).unwrap().unwrap();
        assert!((c.r_star - 1e3f64.powf(3.0 / 7.0)).abs() < 1e-6);
        let r2 = 2.0 * c.r_star;
        assert!(e_lt(r2, k.c1, k.c2, 1, LogBase::Natural).unwrap() > e_sa(r2, k.c1p, k.c2p, 1, LogBase::Natural).unwrap());
    }

    #[test]
    fn log_domain_is_checked() {
        assert!(e_lt(0.5, 1.0, 1.0, 1, LogBase::Natural).is_err());
        assert!(e_sa(0.5, 1.0, 1.0, 1, LogBase::Ten).is_err());
        assert!(e_sa(5.0, 1.0, 1.0, 1, LogBase::Ten).is_ok());
    }

    #[test]
    fn report_for_defaults() {
        let rep = bounds_report(&BoundsInputs {
            big_r: 10.0,
            ..BoundsInputs::default()
        })
        .unwrap();
        assert_eq!(rep.temple_alpha, 1.0);
        assert_eq!(rep.c_u, 0.125);
        assert!(rep.e_lt > rep.e_sa);
        assert_eq!(rep.e_star.len(), 3);
        let csv = threshold_sweep_csv(&rep.inputs, 2.0, 100.0, 5).unwrap();
        assert_eq!(csv.lines().count(), 6);
    }
}

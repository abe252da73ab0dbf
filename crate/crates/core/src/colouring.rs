//! Random couplings attached to points.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::pointset::{materialize, PointSetSpec, Site, Window};
use crate::stream::{SiteStream, TAG_COUPLING};

/// Law of a single coupling `ω_p`, supported in `[0, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingleSiteDistribution {
    /// Uniform on `[0, w)`. `w = 0` is accepted as the point mass at zero.
    Uniform { w: f64 },
    /// Density `β v^{β-1} / w^β` on `[0, w)`.
    PowerLaw { w: f64, beta: f64 },
    /// Every coupling equals `value`. Not a disorder law; used for deterministic operators.
    Constant { value: f64 },
}

impl SingleSiteDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { w } => {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(LabError::invalid("dist.w", format!("must be >= 0, got {w}")));
                }
            }
            Self::PowerLaw { w, beta } => {
                if !(w > 0.0 && w.is_finite()) {
                    return Err(LabError::invalid("dist.w", format!("must be > 0, got {w}")));
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(LabError::invalid("dist.beta", format!("must be > 0, got {beta}")));
                }
            }
            Self::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(LabError::invalid("dist.value", "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Upper end of the support.
    pub fn w(&self) -> f64 {
        match *self {
            Self::Uniform { w } | Self::PowerLaw { w, .. } => w,
            Self::Constant { value } => value,
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            Self::PowerLaw { beta, .. } => beta,
            _ => 1.0,
        }
    }

    /// Constant in the lower bound `∫_0^ε ρ ≥ C_ρ ε^β`, exact for both random laws.
    pub fn c_rho(&self) -> f64 {
        self.w().powf(-self.beta())
    }

    pub fn is_random(&self) -> bool {
        match *self {
            Self::Uniform { w } => w > 0.0,
            Self::PowerLaw { .. } => true,
            Self::Constant { .. } => false,
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            Self::Constant { value } => f64::from(u8::from(v >= value)),
            _ if self.w() == 0.0 => f64::from(u8::from(v >= 0.0)),
            _ => (v / self.w()).clamp(0.0, 1.0).powf(self.beta()),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Self::Uniform { w } => w * u,
            Self::PowerLaw { w, beta } => w * u.powf(1.0 / beta),
            Self::Constant { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        let b = self.beta();
        match *self {
            Self::Constant { value } => value,
            _ => self.w() * b / (b + 1.0),
        }
    }

    /// `E[min(ω, t)]`.
    pub fn truncated_mean(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { value } => value.min(t),
            _ => {
                let w = self.w();
                if t >= w {
                    return self.mean();
                }
                if t <= 0.0 {
                    return 0.0;
                }
                // ∫_0^t v dF + t (1 - F(t)) with F(v) = (v/w)^β.
                let b = self.beta();
                let f = (t / w).powf(b);
                t * f * b / (b + 1.0) + t * (1.0 - f)
            }
        }
    }
}

/// `∫_0^ε ρ(v) dv`, to be compared with `C_ρ ε^β`.
pub fn cdf_check(dist: &SingleSiteDistribution, eps: f64) -> Result<f64> {
    dist.validate()?;
    if !(eps > 0.0 && eps <= dist.w()) {
        return Err(LabError::invalid("eps", format!("must lie in (0, w], got {eps}")));
    }
    Ok(dist.cdf(eps))
}

/// Points of a window together with their couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColouredWindow {
    pub sites: Vec<Site>,
    pub couplings: Vec<f64>,
    pub master_seed: u64,
    pub sample_index: u64,
    pub window: Window,
    pub dist: SingleSiteDistribution,
}

impl ColouredWindow {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Shifts points and window by `x`; couplings travel with their points.
    pub fn translate(&self, x: &[f64]) -> ColouredWindow {
        let mut shift = [0.0; 3];
        shift[..x.len()].copy_from_slice(x);
        let dim = self.window.dim;
        let sites = self
            .sites
            .iter()
            .map(|s| {
                let mut pos = s.pos;
                for j in 0..dim {
                    pos[j] += shift[j];
                }
                Site { pos, ..*s }
            })
            .collect();
        ColouredWindow {
            sites,
            window: self.window.translated(&shift),
            ..self.clone()
        }
    }

    /// One row per point, columns `x1..xd,omega`.
    pub fn to_csv(&self) -> String {
        let dim = self.window.dim;
        let mut out = String::new();
        for j in 1..=dim {
            let _ = write!(out, "x{j},");
        }
        out.push_str("omega\n");
        for (s, w) in self.sites.iter().zip(&self.couplings) {
            for v in &s.pos[..dim] {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{w}");
        }
        out
    }
}

/// Couplings for `sites`, each read from the stream keyed by the site's integer label.
pub fn couplings_for(
    sites: &[Site],
    dim: usize,
    dist: &SingleSiteDistribution,
    master_seed: u64,
    sample_index: u64,
) -> Vec<f64> {
    if let SingleSiteDistribution::Constant { value } = *dist {
        return vec![value; sites.len()];
    }
    let mut stream = SiteStream::new(master_seed, TAG_COUPLING, sample_index);
    let mut u = [0.0];
    sites
        .iter()
        .map(|s| {
            stream.site(&s.index, dim, &mut u);
            dist.quantile(u[0])
        })
        .collect()
}

pub fn sample_colouring(
    spec: &PointSetSpec,
    w: &Window,
    dist: &SingleSiteDistribution,
    master_seed: u64,
    sample_index: u64,
) -> Result<ColouredWindow> {
    dist.validate()?;
    let sites = materialize(spec, w)?;
    let couplings = couplings_for(&sites, spec.dim, dist, master_seed, sample_index);
    Ok(ColouredWindow {
        sites,
        couplings,
        master_seed,
        sample_index,
        window: *w,
        dist: *dist,
    })
}

/// Kolmogorov–Smirnov statistic `sup |F_n - F|` of `draws` against `dist`.
pub fn ks_statistic(draws: &[f64], dist: &SingleSiteDistribution) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        let u = SingleSiteDistribution::Uniform { w: 1.0 };
        let p = SingleSiteDistribution::PowerLaw { w: 1.0, beta: 2.0 };
        assert_eq!(cdf_check(&u, 0.25).unwrap(), 0.25);
        assert_eq!(cdf_check(&p, 0.5).unwrap(), 0.25);
        assert_eq!(cdf_check(&p, 1.0).unwrap(), 1.0);
        assert!(cdf_check(&p, 0.0).is_err());
        assert_eq!(p.c_rho(), 1.0);
        let p2 = SingleSiteDistribution::PowerLaw { w: 2.0, beta: 3.0 };
        assert!((p2.c_rho() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn truncated_mean_matches_quadrature() {
        let d = SingleSiteDistribution::PowerLaw { w: 1.5, beta: 0.7 };
        let t = 0.4;
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            acc += d.quantile(u).min(t);
        }
        assert!((acc / n as f64 - d.truncated_mean(t)).abs() < 1e-5);
        assert_eq!(d.truncated_mean(2.0), d.mean());
    }

    #[test]
    fn colouring_is_local_and_in_support() {
        let spec = PointSetSpec::perturbed_lattice(2, 1.0, 0.2, 3);
        let dist = SingleSiteDistribution::Uniform { w: 1.0 };
        let a = sample_colouring(&spec, &Window::centered(2, 10.0).unwrap(), &dist, 11, 4).unwrap();
        let b = sample_colouring(&spec, &Window::new(2, &[1.0, 0.0], 10.0).unwrap(), &dist, 11, 4)
            .unwrap();
        let mut shared = 0;
        for (s, w) in a.sites.iter().zip(&a.couplings) {
            assert!((0.0..1.0).contains(w));
            if let Some(k) = b.sites.iter().position(|t| t.index == s.index) {
                assert_eq!(b.couplings[k], *w);
                shared += 1;
            }
        }
        assert!(shared > 50);
        let c = sample_colouring(&spec, &Window::centered(2, 10.0).unwrap(), &dist, 11, 5).unwrap();
        assert_ne!(a.couplings, c.couplings);
    }

    #[test]
    fn translate_is_a_group_action() {
        let spec = PointSetSpec::lattice(1, 1.0);
        let dist = SingleSiteDistribution::Uniform { w: 1.0 };
        let cw = sample_colouring(&spec, &Window::centered(1, 7.0).unwrap(), &dist, 1, 0).unwrap();
        assert_eq!(cw.translate(&[0.0]), cw);
        let back = cw.translate(&[0.3]).translate(&[-0.3]);
        for (a, b) in back.sites.iter().zip(&cw.sites) {
            assert!((a.pos[0] - b.pos[0]).abs() < 1e-15);
        }
        assert_eq!(back.couplings, cw.couplings);
    }

    #[test]
    fn uniform_mean_and_ks() {
        let spec = PointSetSpec::lattice(1, 1.0);
        let dist = SingleSiteDistribution::Uniform { w: 1.0 };
        let cw = sample_colouring(&spec, &Window::centered(1, 100_001.0).unwrap(), &dist, 2024, 0)
            .unwrap();
        assert_eq!(cw.len(), 100_001);
        let mean = cw.couplings.iter().sum::<f64>() / cw.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
        let n = 10_000;
        assert!(ks_statistic(&cw.couplings[..n], &dist) < ks_critical_01(n));
    }

    #[test]
    fn constant_and_degenerate_laws() {
        let spec = PointSetSpec::lattice(1, 1.0);
        let w = Window::centered(1, 5.0).unwrap();
        let c = SingleSiteDistribution::Constant { value: 1.0 };
        let cw = sample_colouring(&spec, &w, &c, 0, 0).unwrap();
        assert!(cw.couplings.iter().all(|&v| v == 1.0));
        let z = SingleSiteDistribution::Uniform { w: 0.0 };
        let cw = sample_colouring(&spec, &w, &z, 0, 0).unwrap();
        assert!(cw.couplings.iter().all(|&v| v == 0.0));
        assert!(SingleSiteDistribution::PowerLaw { w: 1.0, beta: 0.0 }.validate().is_err());
    }
}

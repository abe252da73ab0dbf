//! Acceptance run: every criterion prints one PASS/FAIL line; the process fails if any does.
//!
//! Built with `harness = false` so the lines reach the terminal under plain `cargo test`.

use std::collections::BTreeMap;
use std::time::Instant;

use delone_lab::bounds::{
    c_r, crossover_radius, e_lt, e_sa, e_star, lt_exponent, sa_exponent, temple_constants, LogBase,
    ThresholdConstants,
};
use delone_lab::colouring::SingleSiteDistribution;
use delone_lab::counterexample::IdsOscillationReport;
use delone_lab::hamiltonian::{assemble_from_potential, Boundary, Grid, SingleSitePotential};
use delone_lab::ids::{
    bracketing_scan, subadditivity_scan, ExperimentConfig, LdReport, LifshitzReport, TempleReport, WegnerReport,
};
use delone_lab::pointset::{PointSetSpec, Window};
use delone_lab::runner::{self, RunOutput};
use delone_lab::spectrum::{count_below, dense_eigenvalues};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Preset outputs from the first run, reused by the determinism check.
type Cache = BTreeMap<&'static str, RunOutput>;

fn run_preset<'a>(cache: &'a mut Cache, name: &'static str) -> Result<&'a RunOutput, String> {
    if !cache.contains_key(name) {
        let (cmd, cfg) = runner::preset(name).map_err(|e| e.to_string())?;
        let out = runner::run(cmd, &cfg, 0).map_err(|e| e.to_string())?;
        cache.insert(name, out);
    }
    Ok(&cache[name])
}

fn report<T: serde::de::DeserializeOwned>(out: &RunOutput, name: &str) -> Result<T, String> {
    let text = out.get(name).ok_or_else(|| format!("missing {name}"))?;
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn random_hamiltonians() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut cases = 0usize;
    let mut mismatches = 0usize;
    let mut max_n = 0usize;
    for i in 0..200 {
        let dim = 1 + i % 2;
        let h = 0.25;
        // d = 1: up to 400 nodes; d = 2: up to 20 x 20 nodes.
        let nodes = if dim == 1 { 8 + rng.random_range(0..393) } else { 3 + rng.random_range(0..18) };
        let side = nodes as f64 * h;
        let grid = Grid::new(Window::centered(dim, side).map_err(|e| e.to_string())?, h).map_err(|e| e.to_string())?;
        let amp = [0.5, 5.0, 50.0][rng.random_range(0..3)];
        let v: Vec<f64> = (0..grid.len()).map(|_| amp * rng.random::<f64>()).collect();
        let bc = [Boundary::Dirichlet, Boundary::Neumann, Boundary::DirichletZeroGhost][rng.random_range(0..3)];
        let m = assemble_from_potential(&grid, v, bc, amp);
        max_n = max_n.max(grid.len());
        let ev = dense_eigenvalues(&m.matrix);
        let (lo, hi) = (ev[0] - 1.0, ev[ev.len() - 1] + 1.0);
        for _ in 0..25 {
            let e = lo + (hi - lo) * rng.random::<f64>();
            let oracle = ev.iter().filter(|&&x| x < e).count();
            let got = count_below(&m.matrix, e).map_err(|e| e.to_string())?;
            cases += 1;
            mismatches += usize::from(got != oracle);
        }
    }
    Ok(verdict(
        mismatches == 0,
        format!("{mismatches} mismatches in {cases} (matrix, E) cases, n <= {max_n}"),
    ))
}

fn lattice_cfg(dim: usize, samples: usize, e_grid: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        point_set: PointSetSpec::lattice(dim, 1.0),
        potential: SingleSitePotential::boxed(1.0, 0.375),
        dist: SingleSiteDistribution::Uniform { w: 1.0 },
        h: Some(0.25),
        master_seed: 11,
        n_samples: samples,
        n_translates: 2,
        e_grid,
        l_list: Vec::new(),
        boundaries: vec![Boundary::Dirichlet, Boundary::Neumann],
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn pathwise_ordering() -> Result<Verdict, String> {
    let mut pairs = 0;
    let mut violations = 0;
    for (dim, side, samples) in [(1, 8.0, 20), (1, 16.0, 20), (2, 4.0, 10)] {
        let cfg = lattice_cfg(dim, samples, linspace(0.05, 12.0, 25));
        for r in bracketing_scan(&cfg, side).map_err(|e| e.to_string())? {
            pairs += r.samples;
            violations += r.pathwise_violations;
        }
    }
    Ok(verdict(
        violations == 0 && pairs >= 1000,
        format!("{violations} violations over {pairs} (realization, E) pairs"),
    ))
}

fn additivity() -> Result<Verdict, String> {
    let mut parts = Vec::new();
    let mut pass = true;
    for dim in [1, 2] {
        let mut cfg = lattice_cfg(dim, 100, Vec::new());
        cfg.n_translates = 1;
        let energies = linspace(0.1, 20.0, 8);
        let reps = subadditivity_scan(&cfg, 8.0, 2, &energies).map_err(|e| e.to_string())?;
        let n: usize = reps.iter().map(|r| r.neumann_violations).sum();
        let d: usize = reps.iter().map(|r| r.dirichlet_violations).sum();
        let samples = reps.first().map_or(0, |r| r.samples);
        pass &= n == 0 && d == 0 && samples >= 100;
        parts.push(format!("d={dim}: {samples} colourings, N {n} / D {d} violations"));
    }
    Ok(verdict(pass, parts.join("; ")))
}

fn temple(cache: &mut Cache) -> Result<Verdict, String> {
    let out = run_preset(cache, "temple")?;
    let reps: Vec<TempleReport> = report(out, "temple.json")?;
    let sides: Vec<f64> = reps.iter().map(|r| r.side).collect();
    let violations: usize = reps.iter().map(|r| r.violations).sum();
    let min_samples = reps.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    let h_ok = reps.iter().all(|r| r.h == 0.25);
    let margin = reps.iter().map(|r| r.min_relative_margin).fold(f64::INFINITY, f64::min);
    Ok(verdict(
        violations == 0 && min_samples >= 100 && sides == [8.0, 16.0, 32.0] && h_ok,
        format!(
            "L={sides:?}, {min_samples} samples each, {violations} violations, smallest margin {margin:.3}, alpha={:.4}, c_u={:.4}",
            reps[0].temple_alpha, reps[0].c_u
        ),
    ))
}

fn large_deviation(cache: &mut Cache) -> Result<Verdict, String> {
    let t = Instant::now();
    let out = run_preset(cache, "ld-rate")?;
    let rep: LdReport = report(out, "ld_rate.json")?;
    let fit = rep.fit.ok_or("no fit")?;
    let sides: Vec<f64> = rep.rows.iter().map(|r| r.side).collect();
    let samples = rep.rows.iter().map(|r| r.samples).min().unwrap_or(0);
    Ok(verdict(
        fit.r2 >= 0.9 && fit.slope > 0.0 && rep.censored == 0 && samples >= 10_000 && sides == [8.0, 16.0, 24.0, 32.0],
        format!(
            "slope {:.4}, R^2 {:.4}, {} censored, {samples} samples per L ({:.1?})",
            fit.slope,
            fit.r2,
            rep.censored,
            t.elapsed()
        ),
    ))
}

fn lifshitz(cache: &mut Cache) -> Result<Verdict, String> {
    let t = Instant::now();
    let out = run_preset(cache, "lifshitz-d1")?;
    let rep: LifshitzReport = report(out, "lifshitz.json")?;
    let ctrl: LifshitzReport = report(out, "lifshitz_control.json")?;
    let fit = rep.neumann.as_ref().ok_or("Neumann fit censored away")?;
    let used: Vec<f64> = rep
        .points
        .iter()
        .filter(|p| p.nu_neumann > 0.0 && p.nu_neumann < 1.0)
        .map(|p| p.e)
        .collect();
    let span = used.last().unwrap_or(&1.0) / used.first().unwrap_or(&1.0);
    let max_nodes = rep.points.iter().map(|p| p.side / 0.25).fold(0.0, f64::max);
    let cfit = ctrl.neumann.as_ref().ok_or("control fit missing")?;
    let slope = fit.fit.slope;
    Ok(verdict(
        (-0.65..=-0.35).contains(&slope)
            && fit.points >= 6
            && span >= 10.0 * (1.0 - 1e-12)
            && cfit.fit.slope > -0.2
            && max_nodes <= 512.0,
        format!(
            "slope {slope:.4} (95% CI [{:.4}, {:.4}]) over {} energies spanning x{span:.1}; control {:.4}; L <= {} nodes ({:.1?})",
            fit.ci_low,
            fit.ci_high,
            fit.points,
            cfit.fit.slope,
            max_nodes,
            t.elapsed()
        ),
    ))
}

fn wegner(cache: &mut Cache) -> Result<Verdict, String> {
    let out = run_preset(cache, "wegner")?;
    let reps: Vec<WegnerReport> = report(out, "wegner.json")?;
    let ratios_ok = reps
        .iter()
        .all(|r| r.ratios.iter().all(|x| (1.5..=2.5).contains(x)));
    let (a, b) = (reps[0].coefficient_per_volume, reps[1].coefficient_per_volume);
    let rel = (a - b).abs() / a.max(b);
    Ok(verdict(
        reps.len() == 2 && ratios_ok && rel <= 0.2,
        format!(
            "ratios L={}: {:.3?}, L={}: {:.3?}; per-volume slopes {a:.4} vs {b:.4} ({:.1}% apart)",
            reps[0].side,
            reps[0].ratios,
            reps[1].side,
            reps[1].ratios,
            100.0 * rel
        ),
    ))
}

fn counterexample(cache: &mut Cache) -> Result<Verdict, String> {
    let t = Instant::now();
    let out = run_preset(cache, "counterexample")?;
    let freq: Value = report(out, "frequency.json")?;
    let ids: IdsOscillationReport = report(out, "ids_oscillation.json")?;
    let gap = freq["gap"].as_f64().ok_or("gap")?;
    let o = &ids.oscillation;
    let inside_both = ids.reference_q1.dirichlet > 0.0 && ids.reference_q2.dirichlet > 0.0;
    Ok(verdict(
        gap >= 0.25 && o.passed && inside_both,
        format!(
            "frequency gap {gap:.4}; IDS gap {:.4} vs 3x error {:.4}, references {:.4} / {:.4} ({:.1?})",
            o.gap,
            o.threshold,
            ids.reference_q1.midpoint(),
            ids.reference_q2.midpoint(),
            t.elapsed()
        ),
    ))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn bounds() -> Result<Verdict, String> {
    let e = std::f64::consts::E;
    let n = LogBase::Natural;
    let s = |r: delone_lab::Result<f64>| r.map_err(|e| e.to_string());
    // Frozen from a 40-digit mpmath evaluation of the closed forms.
    let oracle: Vec<(&str, f64, f64)> = vec![
        ("e_lt(10,1,e,1)", s(e_lt(10.0, 1.0, e, 1, n))?, 1.975_264_692_098_651e-7),
        ("e_lt(10,1,e,2)", s(e_lt(10.0, 1.0, e, 2, n))?, 1.405_441_102_322_915_2e-6),
        ("e_lt(37.5,0.2,3,3)", s(e_lt(37.5, 0.2, 3.0, 3, n))?, 3.821_721_095_668_803e-11),
        ("e_sa(10,1,e,1)", s(e_sa(10.0, 1.0, e, 1, n))?, 9.168_366_538_274_682e-10),
        ("e_sa(10,1,e,2)", s(e_sa(10.0, 1.0, e, 2, n))?, 3.027_931_065_641_138_5e-13),
        ("e_sa(37.5,0.2,3,3)", s(e_sa(37.5, 0.2, 3.0, 3, n))?, 4.645_729_821_773_678e-27),
        ("c_r(1,2,1)", s(c_r(1.0, 2.0, 1))?, 0.353_553_390_593_273_8),
        ("c_r(1,2,2)", s(c_r(1.0, 2.0, 2))?, 0.0625),
        ("c_r(2.5,3,3)", s(c_r(2.5, 3.0, 3))?, 0.000_659_979_731_583_934_4),
        ("e_star(e,1,1,2)", s(e_star(e, 1.0, 1.0, 2))?, 0.083_333_333_333_333_33),
        (
            "e_star(100,c_r(1,2,1),1,1)",
            s(e_star(100.0, s(c_r(1.0, 2.0, 1))?, 1.0, 1))?,
            0.000_327_450_862_867_385_3,
        ),
        ("e_star(1000,0.7,2.5,3)", s(e_star(1000.0, 0.7, 2.5, 3))?, 0.019_168_504_143_361_305),
    ];
    let mut worst = 0.0f64;
    for (_, got, want) in &oracle {
        worst = worst.max(rel(*got, *want));
    }
    let tc = [
        (temple_constants(1.0, 1.0, 0.5, 0.5, 1.0, 1), (1.0, 0.125)),
        (temple_constants(1.0, 1.0, 1.0, 1.0, 1.0, 1), (0.5, 0.25)),
        (temple_constants(2.0, 1.5, 0.3, 0.4, 0.7, 2), (0.3828125, 0.016875)),
    ];
    for (got, (a, c)) in tc {
        let (ga, gc) = got.map_err(|e| e.to_string())?;
        worst = worst.max(rel(ga, a)).max(rel(gc, c));
    }
    let k = ThresholdConstants {
        c1: 1e-3,
        c2: e,
        c1p: 1.0,
        c2p: e,
    };
    let cross = crossover_radius(&k, 1, 1e-12, n)
        .map_err(|e| e.to_string())?
        .ok_or("no crossover")?;
    let r_star_err = rel(cross.r_star, 19.306_977_288_832_503);
    let exponents = lt_exponent(1) == 17.0 / 3.0
        && sa_exponent(1) == 8.0
        && lt_exponent(2) == 16.0 / 3.0
        && sa_exponent(2) == 12.0;
    Ok(verdict(
        worst <= 1e-12 && r_star_err <= 1e-6 && cross.lt_dominates_beyond && exponents,
        format!(
            "{} values, worst relative error {worst:.2e}; R_star {:.6} (rel err {r_star_err:.1e}); exponent table exact: {exponents}",
            oracle.len() + 6,
            cross.r_star
        ),
    ))
}

fn determinism(cache: &mut Cache) -> Result<Verdict, String> {
    let mut checked = 0;
    let mut differing = Vec::new();
    for name in runner::PRESETS {
        let first = run_preset(cache, name)?.clone();
        let (cmd, cfg) = runner::preset(name).map_err(|e| e.to_string())?;
        for threads in [1, 4] {
            let again = runner::run(cmd, &cfg, threads).map_err(|e| e.to_string())?;
            checked += 1;
            if again.artifacts != first.artifacts {
                differing.push(format!("{name}@{threads}"));
            }
        }
    }
    Ok(verdict(
        differing.is_empty(),
        format!(
            "{} presets, {checked} reruns at 1 and 4 threads vs the default pool; differing: {differing:?}",
            runner::PRESETS.len()
        ),
    ))
}

fn main() {
    let mut cache = Cache::new();
    let mut failed = 0;
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Cache) -> Result<Verdict, String>>)> = vec![
        ("1 inertia count = dense count", Box::new(|_| random_hamiltonians())),
        ("2 pathwise Dirichlet <= Neumann", Box::new(|_| pathwise_ordering())),
        ("3 Neumann sub / Dirichlet superadditivity", Box::new(|_| additivity())),
        ("4 Temple lower bound", Box::new(temple)),
        ("5 large-deviation scaling", Box::new(large_deviation)),
        ("6 Lifshitz exponent d=1", Box::new(lifshitz)),
        ("7 Wegner linearity", Box::new(wegner)),
        ("8 counterexample oscillation", Box::new(counterexample)),
        ("9 threshold formulas", Box::new(|_| bounds())),
        ("10 determinism", Box::new(determinism)),
    ];
    for (name, check) in criteria {
        let t = Instant::now();
        let v = check(&mut cache).unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("[{tag}] {name} :: {} [{:.1?}]", v.detail, t.elapsed());
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line with
//! the measured values; run with `--nocapture` to see them.

use std::f64::consts::E;
use std::time::{Duration, Instant};

use cascade_core::grid::GridSpec;
use cascade_core::mc::{self, DEFAULT_NODE_CAP};
use cascade_core::recurrence::{closed_form_p1, run, seed_p0, step, RecurrenceConfig};
use cascade_core::rng::with_threads;
use cascade_core::series::{factorial, height_cdf_series};
use cascade_core::size_stats::{mc_moments, scaled_distribution};
use cascade_core::wave::{
    dispersion_roots, extract_profile, extract_profile_in, fit_height_law, fit_velocity, selected_velocity,
    tail_fit, wave_equation_residual, FrontTrace, RootKind, TailSide,
};
use num_bigint::BigInt;
use num_rational::BigRational;

const INV_E: f64 = 0.367_879_441_171_442_3;

fn report(id: u32, name: &str, elapsed: Duration, limit: Duration, checks: &[(&str, bool)], detail: String) {
    let in_time = elapsed <= limit;
    let ok = in_time && checks.iter().all(|c| c.1);
    println!(
        "criterion {id:>2} {}: {name}: {detail}; runtime {:.2}s (limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    for (label, pass) in checks.iter().filter(|c| !c.1) {
        println!("    failed check: {label} ({pass})");
    }
    assert!(in_time, "criterion {id}: runtime {elapsed:?} over {limit:?}");
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    assert!(failed.is_empty(), "criterion {id}: failed {failed:?}; {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn criterion_01_recurrence_correctness() {
    let t = Instant::now();
    let spec = GridSpec::new(30.0, 1e-3).unwrap();
    let p1 = step(&seed_p0(spec));
    let err = spec
        .xs()
        .zip(p1.values())
        .map(|(x, p)| (p - closed_form_p1(x)).abs())
        .fold(0.0, f64::max);
    report(
        1,
        "step(P0) vs closed form",
        t.elapsed(),
        Duration::from_secs(1),
        &[("max error <= 1e-6", err <= 1e-6)],
        format!("max |error| = {err:.3e}"),
    );
}

#[test]
fn criterion_02_figure_two_translates() {
    let t = Instant::now();
    let ns = [20usize, 40, 60, 80];
    let r = run(&RecurrenceConfig::new(80).storing(ns)).unwrap();
    let profiles: Vec<_> = ns
        .iter()
        .map(|n| extract_profile_in(&r.profiles[n], 0.5, (-4.0, 8.0)).unwrap())
        .collect();
    let mut worst: f64 = 0.0;
    let mut worst_pair = (0, 0);
    for a in 0..ns.len() {
        for b in a + 1..ns.len() {
            let d = profiles[a]
                .pi
                .values()
                .iter()
                .zip(profiles[b].pi.values())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            if d > worst {
                worst = d;
                worst_pair = (ns[a], ns[b]);
            }
        }
    }
    let v = (r.fronts[80] - r.fronts[40]) / 40.0;
    report(
        2,
        "n=20,40,60,80 profiles are translates",
        t.elapsed(),
        Duration::from_secs(10),
        &[("sup-norm <= 5e-3", worst <= 5e-3), ("velocity within 3%", rel(v, INV_E) <= 0.03)],
        format!(
            "max sup-norm {worst:.3e} (n={} vs n={}), velocity {v:.6} ({:.2}% from 1/e)",
            worst_pair.0,
            worst_pair.1,
            100.0 * rel(v, INV_E)
        ),
    );
}

#[test]
fn criterion_03_log_corrected_front() {
    let t = Instant::now();
    let r = run(&RecurrenceConfig::new(500)).unwrap();
    let fit = fit_velocity(&FrontTrace::from_run(&r), (50, 500), true).unwrap();
    let b_target = 1.5 / E;
    report(
        3,
        "front fit x_f = vn + b ln n + c0 over n in [50, 500]",
        t.elapsed(),
        Duration::from_secs(120),
        &[
            ("v within 0.5%", rel(fit.v, INV_E) <= 0.005),
            ("b within 15%", rel(fit.b, b_target) <= 0.15),
        ],
        format!(
            "v = {:.7} ({:.4}%), b = {:.5} vs {b_target:.6} ({:.2}%)",
            fit.v,
            100.0 * rel(fit.v, INV_E),
            fit.b,
            100.0 * rel(fit.b, b_target)
        ),
    );
}

#[test]
fn criterion_04_series_induction() {
    let t = Instant::now();
    let inv_fact = |k: u32, num: i64| BigRational::new(BigInt::from(num), BigInt::from(factorial(k)));
    let mut failures = Vec::new();
    for n in 1..=6usize {
        let p = height_cdf_series(n, n + 3).unwrap();
        let k = n as u32;
        let expected = [
            (n + 1, inv_fact(k + 1, -1)),
            (n + 2, inv_fact(k + 2, 1)),
            (n + 3, inv_fact(k + 3, 2)),
        ];
        for (deg, want) in expected {
            if p.coeff(deg) != Some(&want) {
                failures.push(format!("n={n} x^{deg}"));
            }
        }
        if p.vanishing_prefix() < n {
            failures.push(format!("n={n} low coefficients"));
        }
    }
    report(
        4,
        "series coefficients for n = 1..6",
        t.elapsed(),
        Duration::from_secs(1),
        &[("all coefficients exact", failures.is_empty())],
        if failures.is_empty() {
            "18 leading coefficients and all vanishing prefixes exact".into()
        } else {
            format!("mismatches: {failures:?}")
        },
    );
}

#[test]
fn criterion_05_dispersion_and_selection() {
    let t = Instant::now();
    let (v, a) = selected_velocity();
    let pair = dispersion_roots(0.2).unwrap();
    let worst = pair
        .roots
        .iter()
        .map(|a| (a * (-0.2 * a).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    let none = dispersion_roots(0.4).unwrap();
    report(
        5,
        "dispersion relation and velocity selection",
        t.elapsed(),
        Duration::from_secs(1),
        &[
            ("selected (1/e, e) to 1e-9", (v - INV_E).abs() <= 1e-9 && (a - E).abs() <= 1e-9),
            ("two roots at v=0.2", pair.kind == RootKind::Pair && pair.roots.len() == 2),
            ("root residual <= 1e-12", worst <= 1e-12),
            ("no roots at v=0.4", none.roots.is_empty()),
        ],
        format!(
            "selected v={v:.12} a={a:.12}; v=0.2 roots {:?} max residual {worst:.1e}; v=0.4 roots {:?}",
            pair.roots, none.roots
        ),
    );
}

#[test]
fn criterion_06_tail_laws() {
    let t = Instant::now();
    let r = run(&RecurrenceConfig::new(300).storing([300])).unwrap();
    let profile = extract_profile(&r.profiles[&300], 0.5).unwrap();
    let v = r.fronts[300] - r.fronts[299];
    let ahead = tail_fit(&profile, TailSide::Ahead).unwrap();
    let behind = tail_fit(&profile, TailSide::Behind).unwrap();
    let amplitude = ahead.intercept.exp();
    let predicted = (profile.r - profile.l - v).exp();
    let residual = wave_equation_residual(&profile, v).unwrap();
    report(
        6,
        "tail laws of the n=300 profile",
        t.elapsed(),
        Duration::from_secs(60),
        &[
            ("ahead slope -1 ± 2%", rel(ahead.slope, -1.0) <= 0.02),
            ("behind slope e ± 5%", rel(behind.slope, E) <= 0.05),
            ("ahead amplitude within 5%", rel(amplitude, predicted) <= 0.05),
            ("wave residual <= 1e-2", residual <= 1e-2),
        ],
        format!(
            "ahead slope {:.5}, behind slope {:.5} ({:.2}% from e), amplitude {amplitude:.5} vs e^(R-L-v) {predicted:.5} (L={:.5}, R={:.5}, v={v:.6}), residual {residual:.3e}",
            ahead.slope,
            behind.slope,
            100.0 * rel(behind.slope, E),
            profile.l,
            profile.r
        ),
    );
}

#[test]
fn criterion_07_moments_vs_exact() {
    let t = Instant::now();
    let at3 = mc_moments(3.0, 100_000, 7, DEFAULT_NODE_CAP, 2).unwrap();
    let at2 = mc_moments(2.0, 100_000, 8, DEFAULT_NODE_CAP, 3).unwrap();
    let z1 = at3[0].z_exact().unwrap();
    let z2 = at3[1].z_exact().unwrap();
    let z3 = at2[2].z_exact().unwrap();
    report(
        7,
        "MC size moments vs exact formulas",
        t.elapsed(),
        Duration::from_secs(60),
        &[
            ("<S(3)> within 4 SE", z1.abs() < 4.0),
            ("<S^2(3)> within 4 SE", z2.abs() < 4.0),
            ("<S^3(2)> within 4 SE", z3.abs() < 4.0),
        ],
        format!(
            "<S(3)> {:.4} ± {:.4} vs {:.4} (z={z1:.2}); <S^2(3)> {:.2} ± {:.2} vs {:.3} (z={z2:.2}); <S^3(2)> {:.1} ± {:.1} vs {:.3} (z={z3:.2}, geometric law gives {:.2})",
            at3[0].estimate,
            at3[0].std_error,
            at3[0].exact.unwrap(),
            at3[1].estimate,
            at3[1].std_error,
            at3[1].exact.unwrap(),
            at2[2].estimate,
            at2[2].std_error,
            at2[2].exact.unwrap(),
            at2[2].geometric_law
        ),
    );
}

fn height_cdf_deviation(threads: Option<usize>) -> (f64, u64, Vec<u8>) {
    let x = 5.0;
    let replicates = 100_000;
    let r = run(&RecurrenceConfig::new(60).storing(0..=60)).unwrap();
    let cdf = with_threads(threads, || mc::height_cdf(x, replicates, 5, DEFAULT_NODE_CAP)).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_n = 0;
    for (n, p) in &r.profiles {
        let exact = p.value_at(x).unwrap();
        if exact <= 1e-3 || exact >= 0.999 {
            continue;
        }
        let se = (exact * (1.0 - exact) / replicates as f64).sqrt();
        let z = (cdf.prob(*n as u64) - exact).abs() / se;
        if z > worst {
            worst = z;
            worst_n = *n as u64;
        }
    }
    let mut bytes = Vec::new();
    cdf.write_csv(&mut bytes).unwrap();
    (worst, worst_n, bytes)
}

#[test]
fn criterion_08_height_cdf_vs_recurrence() {
    let t = Instant::now();
    let (worst, n, _) = height_cdf_deviation(None);
    report(
        8,
        "empirical height CDF at x=5 vs recurrence",
        t.elapsed(),
        Duration::from_secs(120),
        &[("all |z| <= 4", worst <= 4.0)],
        format!("max |z| = {worst:.2} at n={n}"),
    );
}

#[test]
fn criterion_09_scaled_moments() {
    let t = Instant::now();
    let s = scaled_distribution(8.0, 20_000, 9, DEFAULT_NODE_CAP, 200, 10.0).unwrap();
    let z = |p: u32, jack: bool| {
        let m = s.moment(p);
        (m.estimate - m.paper_limit) / if jack { m.jackknife_se } else { m.std_error }
    };
    let line = |p: u32| {
        let m = s.moment(p);
        format!(
            "M{p} {:.4} ± {:.4} (jk {:.4}) vs {:.4}",
            m.estimate, m.std_error, m.jackknife_se, m.paper_limit
        )
    };
    report(
        9,
        "scaled size moments at x=8",
        t.elapsed(),
        Duration::from_secs(300),
        &[
            ("M1 within 4 SE of 1", z(1, false).abs() < 4.0),
            ("M2 within 4 SE of 2", z(2, false).abs() < 4.0),
            ("M3 within 4 jackknife SE of 15/4", z(3, true).abs() < 4.0),
            ("M4 within 4 jackknife SE of 34/3", z(4, true).abs() < 4.0),
        ],
        format!(
            "{}; {}; {} (z={:.1}); {} (z={:.1}); {} (reported only); variance {:.4}",
            line(1),
            line(2),
            line(3),
            z(3, true),
            line(4),
            z(4, true),
            line(5),
            s.variance
        ),
    );
}

fn discrete_run(threads: Option<usize>) -> (mc::DiscreteEnsemble, Vec<u8>) {
    let e = with_threads(threads, || mc::sample_discrete_ensemble(5000, 3.0 / 5000.0, 20_000, 1)).unwrap();
    let mut bytes = Vec::new();
    e.write_csv(&mut bytes).unwrap();
    (e, bytes)
}

#[test]
fn criterion_10_discrete_scaling_limit() {
    let t = Instant::now();
    let (e, _) = discrete_run(None);
    let s = &e.summary;
    let continuum = mc::sample_trees(3.0, 100_000, 10, DEFAULT_NODE_CAP).unwrap().mean_size();
    let no_out_target = (1.0 - (-3.0f64).exp()) / 3.0;
    let neutral_target = (-3.0f64).exp();
    report(
        10,
        "discrete model at m=5000, c=3/5000",
        t.elapsed(),
        Duration::from_secs(180),
        &[
            ("no-out fraction within 2%", rel(s.no_out_fraction.mean, no_out_target) <= 0.02),
            ("neutral fraction within 5%", rel(s.neutral_fraction.mean, neutral_target) <= 0.05),
            ("reach size within 5% of continuum", rel(s.reach_size.mean, continuum.mean) <= 0.05),
        ],
        format!(
            "no-out {:.6} vs {no_out_target:.6}; neutral {:.6} vs {neutral_target:.6}; reach {:.4} vs continuum {:.4} ± {:.4}",
            s.no_out_fraction.mean, s.neutral_fraction.mean, s.reach_size.mean, continuum.mean, continuum.std_error
        ),
    );
}

#[test]
fn criterion_11_mean_height_law() {
    let t = Instant::now();
    let r = run(&RecurrenceConfig::new(320)).unwrap();
    let samples: Vec<(f64, f64)> = [20.0, 40.0, 60.0, 80.0]
        .iter()
        .map(|&x| (x, r.mean_height(x).unwrap()))
        .collect();
    let fit = fit_height_law(&samples).unwrap();
    report(
        11,
        "mean height law E[H] = αx + β ln x + γ",
        t.elapsed(),
        Duration::from_secs(180),
        &[
            ("alpha within 0.5% of e", rel(fit.alpha, E) <= 0.005),
            ("beta within 20% of -1.5", rel(fit.beta, -1.5) <= 0.2),
        ],
        format!(
            "alpha {:.6} ({:.3}%), beta {:.4}, gamma {:.4}; E[H] {:?}",
            fit.alpha,
            100.0 * rel(fit.alpha, E),
            fit.beta,
            fit.gamma,
            samples
        ),
    );
}

#[test]
fn criterion_12_determinism_across_threads() {
    let t = Instant::now();
    let (_, _, cdf_one) = height_cdf_deviation(Some(1));
    let (_, _, cdf_four) = height_cdf_deviation(Some(4));
    let (_, disc_one) = discrete_run(Some(1));
    let (_, disc_four) = discrete_run(Some(4));
    let sizes = |threads| {
        with_threads(threads, || mc_moments(3.0, 100_000, 7, DEFAULT_NODE_CAP, 2))
            .unwrap()
            .iter()
            .map(|m| format!("{:e},{:e}", m.estimate, m.std_error))
            .collect::<Vec<_>>()
    };
    let moments_same = sizes(Some(1)) == sizes(Some(4));
    report(
        12,
        "MC statistics identical for 1 and 4 threads",
        t.elapsed(),
        Duration::from_secs(600),
        &[
            ("height CDF file identical", cdf_one == cdf_four),
            ("discrete file identical", disc_one == disc_four),
            ("size moments identical", moments_same),
        ],
        format!(
            "height CDF {} bytes, discrete {} bytes compared",
            cdf_one.len(),
            disc_one.len()
        ),
    );
}

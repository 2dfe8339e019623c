//! Acceptance criteria 1-10. Runs without the libtest harness so that each
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use extremal::nonlinearity::Nonlinearity;
use extremal::planar::{self, find_lambda_star_2d, maximum_principle_check, monotone_solve_2d, Drift, PlanarGrid};
use extremal::radial::{
    find_lambda_star, minimal_solve, monotone_solve, newton_refine, transformed_solve, RadialGrid, RadialPotential, SolverOptions, Verdict,
};
use extremal::stability::principal_eigenvalue;
use extremal::suite::{default_matrix, run_case, CaseOutcome, CaseSpec, SuiteOptions};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn mems(p: f64) -> Nonlinearity {
    Nonlinearity::mems(p).unwrap()
}

fn grid(n: usize, cells: usize, pot: RadialPotential) -> RadialGrid {
    RadialGrid::uniform(n, cells, pot).unwrap()
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.1}s/{}s", e.as_secs_f64(), limit.as_secs()))
}

/// Max deviation from the closed-form singular profile over nodes `r ≥ h`.
fn profile_error(g: &RadialGrid, u: &[f64], exact: &impl Fn(f64) -> f64) -> f64 {
    let h = g.h_min();
    g.nodes.iter().zip(u).filter(|(r, _)| **r >= h).map(|(r, v)| (v - exact(*r)).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let f = mems(2.0);
    let (lambda_exact, exact) = singular_profile(8, 2.0);
    let fine = find_lambda_star(&grid(8, 4096, RadialPotential::Zero), &f, 1e-8, &opts()).unwrap();
    let g_fine = grid(8, 4096, RadialPotential::Zero);
    let g_mid = grid(8, 2048, RadialPotential::Zero);
    let mid = find_lambda_star(&g_mid, &f, 1e-8, &opts()).unwrap();
    let rel = |l: f64| (l - lambda_exact).abs() / lambda_exact;
    let err_lam = rel(fine.lambda_star_low).max(rel(fine.lambda_star_high));
    let err_fine = profile_error(&g_fine, &fine.extremal_u, &exact);
    let err_mid = profile_error(&g_mid, &mid.extremal_u, &exact);
    let (fast, time) = within(t, Duration::from_secs(30));
    let pass = err_lam <= 5e-3 && err_fine <= 1e-2 && err_fine < err_mid && fast;
    outcome(
        pass,
        format!(
            "lambda* in [{:.9}, {:.9}] vs {:.9} (rel {err_lam:.2e}); |u - (1 - r^(2/3))| = {err_fine:.2e} at N=4096, {err_mid:.2e} at N=2048; {time}",
            fine.lambda_star_low, fine.lambda_star_high, lambda_exact
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let p: f64 = 2.0;
    let np = 2.0 + 4.0 * p / (p + 1.0) + 4.0 * (p / (p + 1.0)).sqrt();
    let f = mems(p);
    let mut verdicts = Vec::new();
    for n in [7, 8] {
        for cells in [2048, 4096] {
            let v = find_lambda_star(&grid(n, cells, RadialPotential::Zero), &f, 1e-8, &opts()).unwrap().verdict;
            verdicts.push((n, cells, v));
        }
    }
    let ok = verdicts.iter().all(|&(n, _, v)| v == if (n as f64) < np { Verdict::Regular } else { Verdict::Singular });
    let (fast, time) = within(t, Duration::from_secs(120));
    outcome(ok && fast, format!("n_2 = {np:.6}; verdicts {verdicts:?}; {time}"))
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let fs = [mems(0.5), mems(2.0), Nonlinearity::exp_singular()];
    let pots = [RadialPotential::Zero, RadialPotential::Quadratic { a: 0.25 }];
    let mut pass = true;
    let mut lines = Vec::new();
    for f in &fs {
        for pot in &pots {
            let c = find_lambda_star(&grid(2, 2048, pot.clone()), f, 1e-8, &opts()).unwrap();
            let ok = c.verdict == Verdict::Regular && c.sup_extremal() <= 1.0 - 1e-3;
            pass &= ok;
            lines.push(format!("{}/{}: {:?} sup={:.4}", f.label(), pot.label(), c.verdict, c.sup_extremal()));
        }
    }
    // shooting cross-check of the threshold itself
    let shot = shooting_lambda_star(2, 2.0, 0.05, 0.95);
    let disc = find_lambda_star(&grid(2, 2048, RadialPotential::Zero), &fs[1], 1e-8, &opts()).unwrap().lambda_star_low;
    let agree = (shot - disc).abs() / shot <= 1e-5;
    let (fast, time) = within(t, Duration::from_secs(120));
    outcome(pass && agree && fast, format!("{}; shooting lambda* {shot:.8} vs {disc:.8}; {time}", lines.join(", ")))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let n = 8usize;
    let nf = n as f64;
    let bound = -nf / 2.0 + 1.0 + (nf - 1.0).sqrt();
    let c = find_lambda_star(&grid(n, 4096, RadialPotential::Zero), &mems(2.0), 1e-8, &opts()).unwrap();
    let k = c.fitted_exponent.unwrap_or(f64::NAN);
    let (fast, time) = within(t, Duration::from_secs(30));
    let pass = (k + 1.0 / 3.0).abs() <= 0.03 && k >= bound - 0.05 && fast;
    outcome(pass, format!("slope {k:.5} vs -1/3; bound {bound:.6} - 0.05; {time}"))
}

fn criterion_5() -> Outcome {
    let f = mems(2.0);
    let j = j0_first_zero();
    let pi = pi_from_sine();
    let mut parts = Vec::new();
    let mut pass = true;
    for (n, exact) in [(2usize, j * j), (3, pi * pi)] {
        let g = grid(n, 4096, RadialPotential::Zero);
        let zero = minimal_solve(&g, &f, 0.0, &opts()).unwrap();
        let mu = principal_eigenvalue(&g, &f, &zero).unwrap().mu1;
        let rel = (mu - exact).abs() / exact;
        pass &= rel <= 1e-4;
        parts.push(format!("n={n}: mu1 {mu:.7} vs {exact:.7} (rel {rel:.1e})"));
    }
    outcome(pass, parts.join("; "))
}

/// Default matrix plus the planar-dimension and drift cases.
fn full_matrix() -> Vec<CaseSpec> {
    let mut specs = default_matrix(1024);
    let quad = RadialPotential::Quadratic { a: 0.25 };
    for (f, n, pot) in [
        (mems(0.5), 2, RadialPotential::Zero),
        (mems(0.5), 2, quad.clone()),
        (Nonlinearity::exp_singular(), 2, RadialPotential::Zero),
        (Nonlinearity::exp_singular(), 2, quad.clone()),
        (mems(2.0), 2, quad.clone()),
        (mems(2.0), 3, quad.clone()),
        (mems(2.0), 8, quad),
    ] {
        specs.push(CaseSpec { f, n, potential: pot, cells: 1024 });
    }
    specs
}

fn check_reports(cases: &[CaseOutcome], names: &[&str]) -> (bool, Vec<String>) {
    let mut failures = Vec::new();
    let mut count = 0;
    for c in cases {
        for r in c.reports.iter().filter(|r| names.iter().any(|n| r.name.starts_with(n))) {
            count += 1;
            if !r.pass {
                failures.push(format!("{}: {} lhs={:.3e} rhs={:.3e}", c.label, r.name, r.lhs, r.rhs));
            }
        }
    }
    (failures.is_empty() && count > 0, if failures.is_empty() { vec![format!("{count} reports")] } else { failures })
}

fn criterion_6(cases: &[CaseOutcome]) -> Outcome {
    let (pass, msgs) = check_reports(cases, &["stability_sign", "stability_monotone", "hardy"]);
    outcome(pass, format!("{} cases; {}", cases.len(), msgs.join("; ")))
}

fn criterion_7(cases: &[CaseOutcome]) -> Outcome {
    let (mut pass, mut msgs) = check_reports(cases, &["monotone_iteration"]);
    let o = opts();
    let mut picard_worst: f64 = 0.0;
    let mut newton_worst: f64 = 0.0;
    let mut newton_runs = 0;
    for c in cases {
        let spec = full_matrix().into_iter().find(|s| s.label() == c.label).unwrap();
        let g = grid(spec.n, spec.cells, spec.potential.clone());
        let lam = 0.5 * c.lambda_star_low;
        let pic = monotone_solve(&g, &spec.f, lam, &o).unwrap();
        picard_worst = picard_worst.max(-pic.min_increment);
        let lam = 0.9 * c.lambda_star_low;
        let minimal = minimal_solve(&g, &spec.f, lam, &o).unwrap();
        for s in [0.0, 0.2, 0.5, 0.8, 0.95] {
            let start: Vec<f64> = g.nodes.iter().map(|r| s * (1.0 - r * r)).collect();
            if let Ok(rep) = newton_refine(&g, &spec.f, lam, &start, &o) {
                newton_runs += 1;
                let below = minimal.u.iter().zip(&rep.point.u).map(|(m, v)| m - v).fold(0.0, f64::max);
                newton_worst = newton_worst.max(below);
            }
        }
    }
    pass &= picard_worst <= 1e-10 && newton_worst <= 1e-10 && newton_runs > 0;
    msgs.push(format!("Picard decrease {picard_worst:.1e}; minimal above Newton by {newton_worst:.1e} over {newton_runs} starts"));
    outcome(pass, msgs.join("; "))
}

fn criterion_8() -> Outcome {
    let f = mems(2.0);
    let g = grid(2, 2048, RadialPotential::Zero);
    let c = find_lambda_star(&g, &f, 1e-8, &opts()).unwrap();
    let lam = 0.5 * c.lambda_star_low;
    let u = minimal_solve(&g, &f, lam, &opts()).unwrap().u;
    let v = transformed_solve(&g.assemble(), &f, lam, &opts()).unwrap();
    let err = u.iter().zip(&v).map(|(a, b)| (b + (1.0 - a).ln()).abs()).fold(0.0, f64::max);
    outcome(err <= 1e-8, format!("||v + ln(1-u)|| = {err:.2e} at lambda = {lam:.6}"))
}

fn criterion_9(cases: &[CaseOutcome]) -> Outcome {
    let (pass, msgs) = check_reports(cases, &["h1_energy", "ff_prime_integral", "pointwise_f"]);
    outcome(pass, format!("{} cases, two grids; {}", cases.len(), msgs.join("; ")))
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let f = mems(2.0);
    let o = opts();
    let mut parts = Vec::new();
    // two assembly paths for c = ∇γ
    let pairs = [
        (Drift::gradient("x", |x, _| x), Drift::field("(1, 0)", |_, _| (1.0, 0.0))),
        (Drift::gradient("2x^2 - y", |x, y| 2.0 * x * x - y), Drift::field("(4x, -1)", |x, _| (4.0 * x, -1.0))),
    ];
    let mut assembly_err: f64 = 0.0;
    for (g, c) in pairs {
        let a = monotone_solve_2d(&PlanarGrid::new(65, g), &f, 1.0, &o).unwrap();
        let b = monotone_solve_2d(&PlanarGrid::new(65, c), &f, 1.0, &o).unwrap();
        assembly_err = assembly_err.max(sup_norm_diff(&a.u, &b.u));
    }
    parts.push(format!("assembly paths differ by {assembly_err:.1e}"));
    // refinement of the threshold
    let mut stars = Vec::new();
    let mut guess = 1.0;
    for m in [65, 129, 257] {
        let r = find_lambda_star_2d(&PlanarGrid::new(m, Drift::none()), &f, 1e-6, guess, &o).unwrap();
        guess = r.lambda_star_low;
        stars.push(r.lambda_star_low);
    }
    let drift = stars.windows(2).map(|w| (w[1] - w[0]).abs() / w[1]).fold(0.0, f64::max);
    parts.push(format!("lambda* {stars:.6?} drift {drift:.2e}"));
    // maximum principle on every operator used above plus two non-gradient flows
    let mut mp_pass = true;
    let operators = [
        PlanarGrid::new(65, Drift::none()),
        PlanarGrid::new(65, Drift::gradient("2x^2 - y", |x, y| 2.0 * x * x - y)),
        PlanarGrid::new(65, Drift::field("16(-sin(pi y), 0)", |_, y| (-16.0 * (std::f64::consts::PI * y).sin(), 0.0))),
        PlanarGrid::new(65, Drift::field("swirl", |x, y| (300.0 * (y - 0.5), 300.0 * (0.5 - x)))),
        PlanarGrid::new(129, Drift::none()),
        PlanarGrid::new(257, Drift::none()),
    ];
    for (k, g) in operators.iter().enumerate() {
        let r = maximum_principle_check(g, 20, 1000 + k as u64).unwrap();
        mp_pass &= r.pass;
    }
    parts.push(format!("maximum principle on {} operators x 20 sources: {}", operators.len(), if mp_pass { "ok" } else { "violated" }));
    // M-matrix structure of the shear operator
    let op = planar::assemble_advection_operator(&operators[2]);
    let m_matrix = (0..op.matrix.n).all(|i| op.matrix.row(i).all(|(c, v)| if c == i { v > 0.0 } else { v <= 0.0 }));
    let (fast, time) = within(t, Duration::from_secs(300));
    parts.push(time);
    outcome(assembly_err <= 1e-6 && drift <= 0.02 && mp_pass && m_matrix && fast, parts.join("; "))
}

fn report(k: usize, o: &Outcome, failures: &mut usize) {
    if !o.pass {
        *failures += 1;
    }
    println!("criterion {k:>2}: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut failures = 0;
    report(1, &criterion_1(), &mut failures);
    report(2, &criterion_2(), &mut failures);
    report(3, &criterion_3(), &mut failures);
    report(4, &criterion_4(), &mut failures);
    report(5, &criterion_5(), &mut failures);
    let suite = SuiteOptions::default();
    let cases: Vec<CaseOutcome> = full_matrix().iter().map(|s| run_case(s, &suite).unwrap()).collect();
    report(6, &criterion_6(&cases), &mut failures);
    report(7, &criterion_7(&cases), &mut failures);
    report(8, &criterion_8(), &mut failures);
    report(9, &criterion_9(&cases), &mut failures);
    report(10, &criterion_10(), &mut failures);
    println!("acceptance: {} of 10 criteria pass", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

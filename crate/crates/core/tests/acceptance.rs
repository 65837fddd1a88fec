//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 1 2 9`.

use std::process::ExitCode;
use std::time::Instant;

use multibin::harness::{build_condition, simulate_cell, HarnessConfig, GridRule, PriorSet, NULL_SAMPLE_SIZE};
use multibin::model::{cell_probs_from_margins, margins_of, pairwise_correlation, MarginalProbabilities};
use multibin::normal::bvn_cdf;
use multibin::rules::{region_probability, superiority_indicator};
use multibin::trial::{calibrate_threshold, DesignKind};
use multibin::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

const REPS: usize = 5000;
const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn show(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 { format!("{x:.2e}") } else { format!("{x:.4}") }
}

struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn within(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        let line = format!("{what} = {} (target {want} +/- {tol})", show(got));
        if (got - want).abs() <= tol {
            self.notes.push(line);
        } else {
            self.failures.push(line);
        }
    }

    fn at_most(&mut self, what: &str, got: f64, bound: f64) {
        let line = format!("{what} = {} (bound <= {bound})", show(got));
        if got <= bound { self.notes.push(line) } else { self.failures.push(line) }
    }

    fn range(&mut self, what: &str, got: f64, lo: f64, hi: f64) {
        let line = format!("{what} = {got:.4} (range [{lo}, {hi}])");
        if (lo..=hi).contains(&got) { self.notes.push(line) } else { self.failures.push(line) }
    }

    fn truth(&mut self, what: &str, ok: bool) {
        if ok { self.notes.push(what.to_string()) } else { self.failures.push(what.to_string()) }
    }

    fn verdict(self) -> Verdict {
        let pass = self.failures.is_empty();
        let detail = if pass {
            self.notes.join("; ")
        } else {
            format!("failed: {}", self.failures.join("; "))
        };
        Verdict { pass, detail }
    }
}

fn dgm(id: &str) -> DgmSpec {
    dgm_by_id(id).expect("reference mechanism")
}

fn cell(id: &str, rule: GridRule, cfg: &HarnessConfig) -> SimulationReport {
    simulate_cell(&dgm(id), rule, cfg, REPS, SEED).expect("simulation").expect("sized cell")
}

fn criterion_sample_sizes() -> Verdict {
    let mut c = Checks::new();
    let target = |id: &str| DesignTarget::from_dgm(&dgm(id), 0.05, 0.20).unwrap();
    let single = [("3", 307), ("4", 75), ("5", 17), ("6", 17), ("7", 75), ("8", 51)];
    let mut worst = [0i64; 3];
    for (g, want) in single {
        for r in 1..=3 {
            let id = format!("{g}.{r}");
            let got = sample_size_single(&target(&id), 0).unwrap() as i64;
            worst[0] = worst[0].max((got - want).abs());
            if (got - want).abs() > 1 {
                c.failures.push(format!("Single {id}: {got} vs {want}"));
            }
        }
    }
    let ce = [
        ("3", [108, 154, 199]),
        ("4", [26, 38, 49]),
        ("5", [6, 9, 11]),
        ("6", [25, 36, 47]),
        ("8", [41, 59, 76]),
    ];
    for (g, wants) in ce {
        for (r, want) in wants.iter().enumerate() {
            let id = format!("{g}.{}", r + 1);
            let got = sample_size_compensatory(&target(&id), &[0.5, 0.5]).unwrap() as i64;
            worst[1] = worst[1].max((got - want).abs());
            if (got - want).abs() > 1 {
                c.failures.push(format!("C-E {id}: {got} vs {want}"));
            }
        }
    }
    let all = [("3", [424, 418, 406]), ("4", [105, 103, 101]), ("5", [25, 25, 24]), ("8", [482, 482, 482])];
    let any = [
        ("3", [191, 217, 247]),
        ("4", [47, 53, 60]),
        ("5", [11, 12, 14]),
        ("6", [21, 21, 21]),
        ("7", [95, 95, 95]),
        ("8", [56, 60, 63]),
    ];
    for (rule, table) in [(DecisionRule::All, &all[..]), (DecisionRule::Any, &any[..])] {
        for (g, wants) in table {
            for (r, want) in wants.iter().enumerate() {
                let id = format!("{g}.{}", r + 1);
                let got = sample_size_mvn(&rule, &target(&id)).unwrap() as i64;
                worst[2] = worst[2].max((got - want).abs());
                if (got - want).abs() > 2 {
                    c.failures.push(format!("{} {id}: {got} vs {want}", rule.label()));
                }
            }
        }
    }
    c.notes.push(format!(
        "max deviation Single {}, C-E {}, All/Any {} over 78 cells",
        worst[0], worst[1], worst[2]
    ));
    c.verdict()
}

fn criterion_weights() -> Verdict {
    let mut c = Checks::new();
    let e = JointCounts::new(vec![262, 358, 278, 102]).unwrap();
    let ctl = JointCounts::new(vec![102, 278, 358, 262]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let m = estimate_moments(&e, &ctl, 100_000, &mut rng).unwrap();
    let w = optimize_weights(&m).unwrap();
    c.within("worked-example w1", w[0], 0.64, 0.01);
    c.within("worked-example mu1", m.mu[0], 0.24, 0.005);
    c.within("worked-example mu2", m.mu[1], 0.08, 0.005);
    let m = DeltaMoments::independent(vec![0.30, 0.10], vec![0.0042, 0.0042]).unwrap();
    let w = optimize_weights(&m).unwrap();
    c.within("uncorrelated w1", w[0], 0.75, 1e-6);
    let d = dgm("8.2");
    let m = estimate_moments(&expected_counts(&d.phi_e, 1000), &expected_counts(&d.phi_c, 1000), 100_000, &mut rng).unwrap();
    let w = optimize_weights(&m).unwrap();
    c.within("8.2 w1", w[0], 0.76, 0.02);
    c.verdict()
}

fn criterion_fixed_power() -> Verdict {
    let mut c = Checks::new();
    let cfg = HarnessConfig::default();
    for (id, want) in [("4.2", 0.813), ("3.1", 0.807), ("5.1", 0.881)] {
        c.within(&format!("{id} C-E rate"), cell(id, GridRule::CE, &cfg).rate, want, 0.02);
    }
    for id in ["7.1", "7.2", "7.3"] {
        let r = cell(id, GridRule::CE, &cfg);
        c.truth(&format!("{id} C-E evaluated at n={}", r.condition.n), r.condition.n == NULL_SAMPLE_SIZE);
        c.at_most(&format!("{id} C-E rate"), r.rate, 0.005);
    }
    let r = cell("7.2", GridRule::CUU, &cfg);
    c.truth(&format!("7.2 C-UU n = {}", r.condition.n), r.condition.n == 733);
    c.within("7.2 C-UU rate", r.rate, 0.857, 0.02);
    c.verdict()
}

fn criterion_type_one() -> Verdict {
    let mut c = Checks::new();
    let cfg = HarnessConfig::default();
    for id in ["2.1", "2.2", "2.3"] {
        for rule in [GridRule::Single, GridRule::Any, GridRule::CE] {
            let r = cell(id, rule, &cfg);
            c.range(&format!("{id} {}", rule.label()), r.rate, 0.035, 0.065);
        }
    }
    c.within("6.3 All", cell("6.3", GridRule::All, &cfg).rate, 0.051, 0.012);
    c.verdict()
}

fn criterion_fixed_bias() -> Verdict {
    // The reported bias is a function of the simulated data only, so the
    // posterior sample size does not affect it.
    let cfg = HarnessConfig { fixed_draws: 1_000, screening: None, ..HarnessConfig::default() };
    let mut c = Checks::new();
    let mut cells = 0;
    let mut worst: f64 = 0.0;
    for d in dgm_table().into_iter().filter(|d| d.group() >= 3) {
        for rule in GridRule::ALL {
            if !d.is_superior_under(&rule.decision_rule()).unwrap() {
                continue;
            }
            let r = simulate_cell(&d, rule, &cfg, REPS, SEED).unwrap().unwrap();
            cells += 1;
            for b in &r.bias {
                worst = worst.max(b.abs());
                if b.abs() >= 0.01 {
                    c.failures.push(format!("{} {} bias {b:.4}", d.id, rule.label()));
                }
            }
        }
    }
    c.notes.push(format!("{cells} power cells, max |bias| = {worst:.4} (bound < 0.01)"));
    c.verdict()
}

fn criterion_group_sequential() -> Verdict {
    let mut c = Checks::new();
    let cfg = HarnessConfig { design: DesignKind::GroupSequential, ..HarnessConfig::default() };
    let r = cell("4.2", GridRule::CE, &cfg);
    c.within("power", r.rate, 0.810, 0.03);
    c.within("mean stop n", r.mean_n.unwrap_or(f64::NAN), 31.0, 2.0);
    c.within("bias 1", r.bias[0], 0.03, 0.015);
    c.within("bias 2", r.bias[1], 0.03, 0.015);
    c.verdict()
}

fn criterion_adaptive() -> Verdict {
    let mut c = Checks::new();
    let cfg = HarnessConfig { design: DesignKind::Adaptive, ..HarnessConfig::default() };
    let null = dgm("2.1");
    let (_, spec) = build_condition(&null, GridRule::CE, &cfg).unwrap().unwrap();
    let cal = calibrate_threshold(&spec, &null.phi_e, &null.phi_c, 0.05, REPS, SEED).unwrap();
    c.within("calibrated threshold", cal.threshold, 0.9968, 0.003);
    let cfg = HarnessConfig { adaptive_threshold: cal.threshold, ..cfg };
    for id in ["2.1", "2.2", "2.3"] {
        c.at_most(&format!("{id} Type I"), cell(id, GridRule::CE, &cfg).rate, 0.06);
    }
    let r = cell("4.2", GridRule::CE, &cfg);
    c.within("4.2 bias 1", r.bias[0], 0.07, 0.02);
    c.within("4.2 bias 2", r.bias[1], 0.08, 0.02);
    c.verdict()
}

fn criterion_priors() -> Verdict {
    let mut c = Checks::new();
    let with = |p: u8| HarnessConfig { prior: PriorSet::from_index(p).unwrap(), ..HarnessConfig::default() };
    c.within("4.2 prior 3", cell("4.2", GridRule::CE, &with(3)).rate, 0.967, 0.02);
    c.within("4.2 prior 6", cell("4.2", GridRule::CE, &with(6)).rate, 0.178, 0.02);
    c.at_most("5.1 prior 6", cell("5.1", GridRule::CE, &with(6)).rate, 0.005);
    let r = cell("5.1", GridRule::CE, &with(2));
    c.within("5.1 prior 2 rate", r.rate, 0.704, 0.03);
    c.within("5.1 prior 2 bias 1", r.bias[0], -0.10, 0.02);
    c.within("5.1 prior 2 bias 2", r.bias[1], -0.10, 0.02);
    c.verdict()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_properties() -> Verdict {
    let mut c = Checks::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut ordering_ok = true;
    for _ in 0..1000 {
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect();
        let w0: f64 = rng.random();
        let comp = DecisionRule::Compensatory(vec![w0, 1.0 - w0]);
        for row in &rows {
            let all = superiority_indicator(&DecisionRule::All, row).unwrap();
            let single = superiority_indicator(&DecisionRule::Single(0), row).unwrap();
            let any = superiority_indicator(&DecisionRule::Any, row).unwrap();
            let cw = superiority_indicator(&comp, row).unwrap();
            ordering_ok &= (!all || single) && (!single || any) && (!all || cw);
        }
        let draws = DeltaDraws::from_rows(&rows).unwrap();
        let p = |r: &DecisionRule| region_probability(r, &draws).unwrap();
        ordering_ok &= p(&DecisionRule::Any) >= p(&DecisionRule::Single(0))
            && p(&DecisionRule::Single(0)) >= p(&DecisionRule::All)
            && p(&comp) >= p(&DecisionRule::All);
    }
    c.truth("rule ordering on 1000 draw sets", ordering_ok);

    let mut worst_round_trip: f64 = 0.0;
    let mut accepted = 0;
    while accepted < 100 {
        let t = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
        let rho = rng.random_range(-0.9..0.9);
        let Ok(phi) = cell_probs_from_margins(&MarginalProbabilities::new(t.to_vec()).unwrap(), rho) else { continue };
        accepted += 1;
        let back = margins_of(&phi);
        worst_round_trip = worst_round_trip
            .max((back.as_slice()[0] - t[0]).abs())
            .max((back.as_slice()[1] - t[1]).abs())
            .max((pairwise_correlation(&phi, 0, 1).unwrap() - rho).abs());
    }
    c.at_most("phi/theta/rho round trip error", worst_round_trip, 1e-10);

    let prior = DirichletParams::new(vec![0.3, 1.1, 2.0, 0.01]).unwrap();
    let s1 = JointCounts::new(vec![3, 0, 7, 2]).unwrap();
    let s2 = JointCounts::new(vec![1, 4, 0, 9]).unwrap();
    let two_step = posterior_update(&posterior_update(&prior, &s1).unwrap(), &s2).unwrap();
    let one_step = posterior_update(&prior, &s1.merged(&s2).unwrap()).unwrap();
    c.truth("posterior update linear", two_step == one_step);

    let (ae, be, ac, bc) = (12.01, 8.01, 7.01, 13.01);
    let draws = 100_000;
    let pe = DirichletParams::new(vec![ae, be]).unwrap();
    let pc = DirichletParams::new(vec![ac, bc]).unwrap();
    let delta = delta_draws(
        &sample_dirichlet(&pe, draws, &mut rng).unwrap(),
        &sample_dirichlet(&pc, draws, &mut rng).unwrap(),
    )
    .unwrap();
    let mc = superiority_probability(&DecisionRule::Single(0), &delta).unwrap();
    let be_dist = Beta::new(ae, be).unwrap();
    let bc_dist = Beta::new(ac, bc).unwrap();
    let exact = simpson(|x| be_dist.pdf(x) * bc_dist.cdf(x), 0.0, 1.0, 20_000);
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    c.at_most("one-outcome MC vs Beta integral (in s.e.)", (mc - exact).abs() / se, 3.0);

    let grid: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let corr: [f64; 5] = [-0.95, -0.5, 0.0, 0.5, 0.95];
    let mut worst_bvn: f64 = 0.0;
    for &h in &grid {
        for &k in &grid {
            for &r in &corr {
                let s = (1.0 - r * r).sqrt();
                let oracle = simpson(
                    |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * normal_cdf((k - r * x) / s),
                    -12.0,
                    h,
                    20_000,
                );
                worst_bvn = worst_bvn.max((bvn_cdf(h, k, r) - oracle).abs());
            }
        }
    }
    c.at_most("bivariate normal vs quadrature", worst_bvn, 1e-6);
    c.verdict()
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "sample-size calculators", criterion_sample_sizes),
        (2, "weight optimizer", criterion_weights),
        (3, "fixed-design power", criterion_fixed_power),
        (4, "Type I control", criterion_type_one),
        (5, "fixed-design bias", criterion_fixed_bias),
        (6, "group-sequential design", criterion_group_sequential),
        (7, "adaptive design calibration", criterion_adaptive),
        (8, "prior sensitivity", criterion_priors),
        (9, "property suites", criterion_properties),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} criterion {id} ({name}, {:.1}s): {}", start.elapsed().as_secs_f64(), v.detail);
        failed += (!v.pass) as u32;
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}

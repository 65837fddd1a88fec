mod args;

use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use multibin::harness::{build_condition, sample_size_grid, write_csv, write_json};
use multibin::trial::FIXED_DRAWS;
use multibin::{
    calibrate_threshold, cell_probs_from_margins, decide, decision_threshold, delta_draws, dgm_by_id, estimate_moments,
    expected_counts, least_favorable_dgm, optimize_weights, posterior_moments, posterior_update, prior_from_spec,
    sample_dirichlet, sample_size, simulate_condition, superiority_probability, DecisionRule, DesignKind, DesignTarget,
    DgmSpec, Error, HarnessConfig, JointCounts, MarginalProbabilities, GridRule, PriorSpec, PriorSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use args::{CalibrateArgs, Cli, Command, Common, ConfigFile, DecideArgs, DesignArg, Format, SampleSizeArgs, SimulateArgs, WeightsArgs};

/// Exit status 2 for bad input, 1 for failures while computing.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::EmptyCounts | Error::InvalidArgument(_) | Error::InvalidWeights(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn usage(message: impl Display) -> Failure {
    Failure::Usage(message.to_string())
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            toml::from_str::<ConfigFile>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    if let Some(threads) = cli.threads.or(config.threads) {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(usage)?;
    }
    match cli.command {
        Command::Decide(a) => cmd_decide(a, &config),
        Command::Samplesize(a) => cmd_samplesize(a, &config),
        Command::Weights(a) => cmd_weights(a, &config),
        Command::Simulate(a) => cmd_simulate(a, &config),
        Command::Calibrate(a) => cmd_calibrate(a, &config),
    }
}

fn emit(common: &Common, body: &str) -> Outcome {
    match &common.out {
        Some(path) => std::fs::write(path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes()).map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn require_seed(common: &Common) -> Outcome<u64> {
    common.seed.ok_or_else(|| usage("--seed is required for this command"))
}

fn read_file(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_list(text: &str, what: &str) -> Outcome<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("{what}: `{t}` is not a number"))))
        .collect()
}

/// Rule names accepted on the command line. `opt` stands for weights
/// optimized from the data and is resolved by the caller.
fn parse_rule(name: &str, weights: Option<&str>, outcomes: usize) -> Outcome<Option<DecisionRule>> {
    let lower = name.trim().to_ascii_lowercase();
    let rule = match lower.as_str() {
        "any" => DecisionRule::Any,
        "all" => DecisionRule::All,
        "ce" | "c-e" => DecisionRule::equal_weights(outcomes),
        "cuu" | "c-uu" => GridRule::CUU.decision_rule(),
        "cuc" | "c-uc" => GridRule::CUC.decision_rule(),
        "comp" => {
            let w = weights.ok_or_else(|| usage("rule `comp` needs --weights"))?;
            DecisionRule::compensatory(parse_list(w, "--weights")?)?
        }
        "opt" => return Ok(None),
        s if s.starts_with("single") => {
            let k = match &s["single".len()..] {
                "" => 1,
                digits => digits.parse::<usize>().map_err(|_| usage(format!("unknown rule `{name}`")))?,
            };
            if k == 0 {
                return Err(usage("outcomes are numbered from 1"));
            }
            DecisionRule::Single(k - 1)
        }
        _ => return Err(usage(format!("unknown rule `{name}`"))),
    };
    rule.validate(outcomes).map_err(|e| usage(format!("rule `{name}`: {e}")))?;
    Ok(Some(rule))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    n0: Option<f64>,
    phi0: Option<Vec<f64>>,
    experimental: Option<PriorSpec>,
    control: Option<PriorSpec>,
}

fn load_prior(choice: &str, outcomes: usize) -> Outcome<(PriorSpec, PriorSpec)> {
    match choice {
        "ref" | "reference" => Ok((PriorSpec::reference(outcomes), PriorSpec::reference(outcomes))),
        "jeffreys" => Ok((PriorSpec::jeffreys(outcomes), PriorSpec::jeffreys(outcomes))),
        path => {
            let path = Path::new(path);
            let text = read_file(path)?;
            let file: PriorFile = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let shared = match (file.n0, file.phi0) {
                (Some(n0), Some(phi0)) => Some(PriorSpec::new(n0, multibin::CellProbabilities::new(phi0)?)?),
                (None, None) => None,
                _ => return Err(usage("prior file: `n0` and `phi0` go together")),
            };
            let pick = |arm: Option<PriorSpec>, name: &str| {
                arm.or_else(|| shared.clone()).ok_or_else(|| usage(format!("prior file: no prior for the {name} arm")))
            };
            let e = pick(file.experimental, "experimental")?;
            let c = pick(file.control, "control")?;
            for p in [&e, &c] {
                if p.phi0.outcomes() != outcomes {
                    return Err(usage(format!("prior has {} outcomes, data have {outcomes}", p.phi0.outcomes())));
                }
            }
            Ok((e, c))
        }
    }
}

#[derive(Serialize)]
struct DecideRow {
    rule: String,
    probability: f64,
    threshold: f64,
    superior: bool,
}

fn cmd_decide(a: DecideArgs, config: &ConfigFile) -> Outcome {
    let common = a.common.merged(config);
    let path = a.counts.ok_or_else(|| usage("--counts is required"))?;
    let (s_e, s_c) = multibin::io::parse_counts(&read_file(&path)?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let k = s_e.outcomes();
    let seed = require_seed(&common)?;
    let alpha = common.alpha.unwrap_or(0.05);
    let prior_choice = a.prior.or_else(|| config.prior.clone()).unwrap_or_else(|| "ref".into());
    let (p_e, p_c) = load_prior(&prior_choice, k)?;
    let post_e = posterior_update(&prior_from_spec(&p_e)?, &s_e)?;
    let post_c = posterior_update(&prior_from_spec(&p_c)?, &s_c)?;
    let draws = common.draws.unwrap_or(FIXED_DRAWS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = delta_draws(&sample_dirichlet(&post_e, draws, &mut rng)?, &sample_dirichlet(&post_c, draws, &mut rng)?)?;

    let names = a.rule.or_else(|| config.rule.clone()).ok_or_else(|| usage("--rule is required"))?;
    let weights = a.weights.or_else(|| config.weights.clone());
    let mut rows = Vec::new();
    for name in names.split(',') {
        let rule = match parse_rule(name, weights.as_deref(), k)? {
            Some(r) => r,
            None => DecisionRule::compensatory(optimize_weights(&posterior_moments(&s_e, &s_c)?)?)?,
        };
        let probability = superiority_probability(&rule, &delta)?;
        let threshold = match a.threshold {
            Some(t) => t,
            None => decision_threshold(&rule, alpha)?,
        };
        let d = decide(probability, threshold);
        rows.push(DecideRow { rule: rule.label(), probability, threshold, superior: d.superior });
    }

    let body = match common.format.unwrap_or(Format::Json) {
        Format::Json if rows.len() == 1 => to_json(&rows[0]),
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("rule,probability,threshold,superior\n");
            for r in &rows {
                s.push_str(&format!("\"{}\",{:.3},{},{}\n", r.rule, r.probability, r.threshold, r.superior));
            }
            s
        }
    };
    emit(&common, &body)
}

fn sizing_target(a: &SampleSizeArgs, alpha: f64, beta: f64, dgm: Option<&DgmSpec>) -> Outcome<DesignTarget> {
    if let Some(d) = dgm {
        return Ok(DesignTarget::from_dgm(d, alpha, beta)?);
    }
    let (Some(te), Some(tc)) = (&a.theta_e, &a.theta_c) else {
        return Err(usage("give --dgm or both --theta-e and --theta-c"));
    };
    let rho = a.rho.unwrap_or(0.0);
    let te = MarginalProbabilities::new(parse_list(te, "--theta-e")?)?;
    let tc = MarginalProbabilities::new(parse_list(tc, "--theta-c")?)?;
    if te.outcomes() != tc.outcomes() {
        return Err(usage("--theta-e and --theta-c differ in length"));
    }
    let phi_e = cell_probs_from_margins(&te, rho).map_err(usage)?;
    let phi_c = cell_probs_from_margins(&tc, rho).map_err(usage)?;
    Ok(DesignTarget::new(alpha, beta, phi_e, phi_c)?)
}

fn cmd_samplesize(a: SampleSizeArgs, config: &ConfigFile) -> Outcome {
    let common = a.common.merged(config);
    let alpha = common.alpha.unwrap_or(0.05);
    let beta = a.beta.or(config.beta).unwrap_or(0.20);
    let format = common.format.unwrap_or(Format::Json);

    if a.full_grid {
        let harness = HarnessConfig { alpha, beta, ..HarnessConfig::default() };
        let grid = sample_size_grid(&harness)?;
        let body = match format {
            Format::Csv => {
                let mut s = String::from("dgm");
                for r in GridRule::ALL {
                    s.push(',');
                    s.push_str(r.label());
                }
                s.push('\n');
                for row in grid.chunks(GridRule::ALL.len()) {
                    s.push_str(&row[0].0);
                    for (_, _, n) in row {
                        s.push(',');
                        s.push_str(&n.map_or_else(|| "-".into(), |n| n.to_string()));
                    }
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let rows: Vec<_> =
                    grid.iter().map(|(d, r, n)| json!({ "dgm": d, "rule": r.label(), "n": n })).collect();
                to_json(&rows)
            }
        };
        return emit(&common, &body);
    }

    let dgm = match a.dgm.clone().or_else(|| config.dgm.clone()) {
        Some(id) => Some(dgm_by_id(&id).map_err(usage)?),
        None => None,
    };
    let target = sizing_target(&a, alpha, beta, dgm.as_ref())?;
    let name = a.rule.clone().or_else(|| config.rule.clone()).ok_or_else(|| usage("--rule is required"))?;
    let weights = a.weights.clone().or_else(|| config.weights.clone());
    let rule = match GridRule::parse(&name) {
        Some(p) if target.outcomes() == 2 => p.sizing_rule(),
        _ => parse_rule(&name, weights.as_deref(), target.outcomes())?
            .ok_or_else(|| usage("rule `opt` is not available for sample sizes"))?,
    };
    let n = sample_size(&rule, &target)?;
    let body = match format {
        Format::Json => to_json(&json!({ "rule": rule.label(), "alpha": alpha, "beta": beta, "n": n })),
        Format::Csv => format!("rule,alpha,beta,n\n\"{}\",{alpha},{beta},{n}\n", rule.label()),
    };
    emit(&common, &body)
}

fn cmd_weights(a: WeightsArgs, config: &ConfigFile) -> Outcome {
    let common = a.common.merged(config);
    let (s_e, s_c): (JointCounts, JointCounts) = match (&a.counts, a.dgm.clone().or_else(|| config.dgm.clone())) {
        (Some(path), None) => multibin::io::parse_counts(&read_file(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?,
        (None, Some(id)) => {
            let d = dgm_by_id(&id).map_err(usage)?;
            (expected_counts(&d.phi_e, a.n), expected_counts(&d.phi_c, a.n))
        }
        _ => return Err(usage("give exactly one of --counts and --dgm")),
    };
    let moments = if a.exact {
        posterior_moments(&s_e, &s_c)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(require_seed(&common)?);
        estimate_moments(&s_e, &s_c, common.draws.unwrap_or(FIXED_DRAWS), &mut rng)?
    };
    let w = optimize_weights(&moments)?;
    let body = match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({ "weights": w, "mu": moments.mu, "cov": moments.cov })),
        Format::Csv => {
            let mut s = String::from("outcome,weight,mu\n");
            for (k, (wk, mk)) in w.iter().zip(&moments.mu).enumerate() {
                s.push_str(&format!("{},{wk},{mk}\n", k + 1));
            }
            s
        }
    };
    emit(&common, &body)
}

fn design_kind(d: DesignArg) -> DesignKind {
    match d {
        DesignArg::Fixed => DesignKind::Fixed,
        DesignArg::Gs => DesignKind::GroupSequential,
        DesignArg::Adaptive => DesignKind::Adaptive,
    }
}

fn table_prior(choice: &str) -> Outcome<PriorSet> {
    match choice {
        "ref" | "reference" => Ok(PriorSet::Reference),
        "jeffreys" => Ok(PriorSet::Jeffreys),
        s => s
            .parse::<u8>()
            .ok()
            .and_then(PriorSet::from_index)
            .ok_or_else(|| usage(format!("--prior `{s}`: expected 1 to 6, ref or jeffreys"))),
    }
}

fn grid_rule(name: &str) -> Outcome<GridRule> {
    let canonical = match name.to_ascii_lowercase().as_str() {
        "ce" => "c-e".to_string(),
        "cuu" => "c-uu".into(),
        "cuc" => "c-uc".into(),
        s => s.to_string(),
    };
    GridRule::parse(&canonical)
        .ok_or_else(|| usage(format!("unknown rule `{name}`; expected single, any, all, c-e, c-uu or c-uc")))
}

fn harness_config(
    alpha: f64,
    beta: f64,
    design: DesignArg,
    prior: PriorSet,
    draws: Option<usize>,
    screening: bool,
) -> HarnessConfig {
    let mut c = HarnessConfig { alpha, beta, design: design_kind(design), prior, ..HarnessConfig::default() };
    if let Some(d) = draws {
        c.fixed_draws = d;
        c.sequential_draws = d;
    }
    if !screening {
        c.screening = None;
    }
    c
}

/// Rebuilds the look schedule around a new per-arm sample size.
fn resize(spec: &mut multibin::DesignSpec, config: &HarnessConfig, n: u64) -> Outcome {
    spec.schedule = match config.design {
        DesignKind::Fixed => vec![n],
        DesignKind::GroupSequential => multibin::make_schedule(&multibin::ScheduleSpec::GroupSequential {
            n_fd: n,
            ratios: config.gs_ratios.clone(),
        })?,
        DesignKind::Adaptive => return Err(usage("--n does not apply to the adaptive design")),
    };
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, config: &ConfigFile) -> Outcome {
    let common = a.common.merged(config);
    let seed = require_seed(&common)?;
    let reps = a.reps.or(config.reps).unwrap_or(5000);
    let design = a.design.or(config.design).unwrap_or(DesignArg::Fixed);
    let prior = table_prior(&a.prior.clone().or_else(|| config.prior.clone()).unwrap_or_else(|| "1".into()))?;
    let harness = harness_config(
        common.alpha.unwrap_or(0.05),
        a.beta.or(config.beta).unwrap_or(0.20),
        design,
        prior,
        common.draws,
        !a.no_screening,
    );

    let cells: Vec<(DgmSpec, GridRule)> = if a.full_grid {
        multibin::dgm_table().into_iter().flat_map(|d| GridRule::ALL.map(|r| (d.clone(), r))).collect()
    } else {
        let id = a.dgm.clone().or_else(|| config.dgm.clone()).ok_or_else(|| usage("--dgm is required"))?;
        let name = a.rule.clone().or_else(|| config.rule.clone()).ok_or_else(|| usage("--rule is required"))?;
        vec![(dgm_by_id(&id).map_err(usage)?, grid_rule(&name)?)]
    };

    let mut reports = Vec::new();
    for (dgm, rule) in cells {
        let Some((mut condition, mut spec)) = build_condition(&dgm, rule, &harness)? else { continue };
        if let Some(n) = a.n {
            resize(&mut spec, &harness, n)?;
            condition.n = n;
        }
        if let Some(t) = a.threshold {
            spec.threshold = t;
        }
        reports.push(simulate_condition(&dgm, condition, &spec, reps, seed)?);
    }

    let mut buf = Vec::new();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_csv(&reports, &mut buf)?,
        Format::Json => {
            write_json(&reports, &mut buf)?;
            buf.push(b'\n');
        }
    }
    emit(&common, &String::from_utf8(buf).expect("utf-8 output"))
}

fn cmd_calibrate(a: CalibrateArgs, config: &ConfigFile) -> Outcome {
    let common = a.common.merged(config);
    let seed = require_seed(&common)?;
    let alpha = common.alpha.unwrap_or(0.05);
    let reps = a.reps.or(config.reps).unwrap_or(5000);
    let design = a.design.or(config.design).unwrap_or(DesignArg::Adaptive);
    let rule = grid_rule(&a.rule.clone().or_else(|| config.rule.clone()).unwrap_or_else(|| "c-e".into()))?;
    let id = match a.dgm.clone().or_else(|| config.dgm.clone()) {
        Some(id) => id,
        None => format!("{}.1", least_favorable_dgm(&rule.decision_rule())),
    };
    let dgm = dgm_by_id(&id).map_err(usage)?;
    let harness = harness_config(alpha, 0.20, design, PriorSet::Reference, common.draws, !a.no_screening);
    let (_, mut spec) = build_condition(&dgm, rule, &harness)?
        .ok_or_else(|| Failure::Runtime(format!("{id} cannot be sized under {}", rule.label())))?;
    match (design, a.n) {
        (DesignArg::Gs, None) => return Err(usage("--n is required to calibrate a group-sequential design")),
        (_, Some(n)) => resize(&mut spec, &harness, n)?,
        _ => {}
    }
    let cal = calibrate_threshold(&spec, &dgm.phi_e, &dgm.phi_c, alpha, reps, seed)?;
    let body = match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "dgm": id,
            "rule": rule.label(),
            "schedule": spec.schedule,
            "alpha": alpha,
            "reps": reps,
            "threshold": cal.threshold,
        })),
        Format::Csv => format!("dgm,rule,alpha,reps,threshold\n{id},{},{alpha},{reps},{}\n", rule.label(), cal.threshold),
    };
    emit(&common, &body)
}

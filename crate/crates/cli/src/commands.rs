use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

use hierperc::clusters::label;
use hierperc::estimators::fit::{fit_double_exp, fit_power_law, FitPoint};
use hierperc::estimators::induction::{check_base_case, check_scale_doubling, check_scale_induction, Implication};
use hierperc::estimators::schedule::{schedule, ScheduleOptions};
use hierperc::estimators::{
    chi_hat, correlation_length, exterior_weight, kmax_stats, phi_hat, Budget, CorrelationLength, XiStatus,
};
use hierperc::oracle::{check_dct_chain, check_sprinkle_law, Oracle, SiteMode};
use hierperc::renorm::{check_domination, check_phi_identity, check_phi_law, check_psi_connectivity};
use hierperc::sampler::{purpose, ConfigDump};
use hierperc::{sample_mixed, CheckReport, Error, Params, Result, SeedSpec};

use crate::args::{Command, Common, FitMode, Format, InductionTest, RenormTest};
use crate::output::{float, write_csv, write_json};
use crate::Outcome;

pub const SWEEP_VERSION: &str = "hierperc sweep v1";
pub const SWEEP_HEADER: [&str; 8] = ["beta", "n", "trials", "chi_hat", "se", "phi_hat", "n_of_beta", "seed"];

pub fn run(command: Command) -> Result<Outcome> {
    let common = match &command {
        Command::Sample(c)
        | Command::Chi(c)
        | Command::Kmax(c)
        | Command::Phi(c)
        | Command::Xi(c)
        | Command::Sweep(c)
        | Command::Fit(c)
        | Command::Oracle(c)
        | Command::RenormCheck(c)
        | Command::InductionCheck(c)
        | Command::Schedule(c) => c.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker threads: {e}")))?;
    let started = Instant::now();
    let outcome = pool.install(|| match command {
        Command::Sample(c) => sample(&c),
        Command::Chi(c) => chi(&c),
        Command::Kmax(c) => kmax(&c),
        Command::Phi(c) => phi(&c),
        Command::Xi(c) => xi(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Fit(c) => fit(&c),
        Command::Oracle(c) => oracle(&c),
        Command::RenormCheck(c) => renorm_check(&c),
        Command::InductionCheck(c) => induction_check(&c),
        Command::Schedule(c) => print_schedule(&c),
    });
    eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
    outcome
}

fn params(c: &Common) -> Result<Params> {
    Params::with_density(c.d, c.side, c.alpha, c.beta, c.p)
}

fn budget(c: &Common) -> Budget {
    match c.trials {
        Some(t) => Budget::fixed(t),
        None => Budget::adaptive(c.target_se, c.max_trials),
    }
}

fn require_n(c: &Common) -> Result<u32> {
    c.n.ok_or_else(|| Error::Usage("--n is required".into()))
}

fn out(c: &Common) -> Option<&Path> {
    c.out.as_deref()
}

fn format(c: &Common, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = c.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(Error::Usage(format!("--format {f:?} is not supported here").to_lowercase()));
    }
    Ok(f)
}

fn verdict(pass: bool) -> Outcome {
    if pass {
        Outcome::Passed
    } else {
        Outcome::Failed
    }
}

fn sample(c: &Common) -> Result<Outcome> {
    let p = params(c)?;
    let n = require_n(c)?;
    let seed = SeedSpec::new(c.seed);
    let config = sample_mixed(&p, n, &seed)?;
    match format(c, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Json => write_json(out(c), &ConfigDump::new(&p, &seed, &config))?,
        Format::Csv => {
            let sizes = label(&config, None).component_sizes();
            let mut rows: Vec<Vec<String>> = Vec::new();
            for s in sizes.iter().rev() {
                match rows.last_mut() {
                    Some(r) if r[0] == s.to_string() => {
                        let count: u64 = r[1].parse().unwrap();
                        r[1] = (count + 1).to_string();
                    }
                    _ => rows.push(vec![s.to_string(), "1".into()]),
                }
            }
            write_csv(out(c), None, &["size", "count"], &rows)?;
        }
    }
    Ok(Outcome::Passed)
}

fn chi(c: &Common) -> Result<Outcome> {
    let p = params(c)?;
    let n = require_n(c)?;
    let r = chi_hat(&p, n, &budget(c), &SeedSpec::new(c.seed))?;
    eprintln!("chi: {} trials in {:.3} s", r.trials, r.wall_time.as_secs_f64());
    match format(c, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Json => write_json(out(c), &r)?,
        Format::Csv => write_csv(
            out(c),
            None,
            &["beta", "n", "trials", "chi_hat", "se", "seed"],
            &[vec![
                float(p.beta),
                n.to_string(),
                r.trials.to_string(),
                float(r.estimate),
                float(r.se),
                c.seed.to_string(),
            ]],
        )?,
    }
    Ok(Outcome::Passed)
}

fn kmax(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let n = require_n(c)?;
    let r = kmax_stats(&p, n, c.lambda, &budget(c), &SeedSpec::new(c.seed))?;
    write_json(out(c), &r)?;
    Ok(Outcome::Passed)
}

fn phi(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let m = require_n(c)?;
    let w = exterior_weight(&p, m)?;
    let r = phi_hat(&p, m, &budget(c), &SeedSpec::new(c.seed))?;
    write_json(out(c), &json!({ "phi": r, "exterior_weight": w }))?;
    Ok(Outcome::Passed)
}

fn xi_search(c: &Common, p: &Params, seed: &SeedSpec) -> Result<CorrelationLength> {
    correlation_length(p, &budget(c), c.n_cap, seed)
}

fn xi(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let r = xi_search(c, &p, &SeedSpec::new(c.seed))?;
    #[derive(Serialize)]
    struct XiOutput<'a> {
        params: Params,
        n_of_beta: String,
        #[serde(flatten)]
        result: &'a CorrelationLength,
    }
    write_json(out(c), &XiOutput { params: p, n_of_beta: r.label(), result: &r })?;
    Ok(Outcome::Passed)
}

/// Parses `start:stop:scale:count`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("bad --beta-grid '{spec}', expected start:stop:log|lin:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[3].parse().map_err(|_| bad())?;
    if count < 1 || !(start.is_finite() && stop.is_finite()) || stop < start {
        return Err(bad());
    }
    let t = |i: usize| if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
    let grid = match parts[2] {
        "log" => {
            if !(start > 0.0) {
                return Err(Error::Usage("log grids need a positive start".into()));
            }
            let (a, b) = (start.ln(), stop.ln());
            (0..count)
                .map(|i| if i == 0 { start } else if i == count - 1 { stop } else { (a + (b - a) * t(i)).exp() })
                .collect()
        }
        "lin" => (0..count).map(|i| if i == count - 1 { stop } else { start + (stop - start) * t(i) }).collect(),
        _ => return Err(bad()),
    };
    Ok(grid)
}

fn sweep(c: &Common) -> Result<Outcome> {
    format(c, Format::Csv, &[Format::Csv])?;
    let base = params(c)?;
    let grid = match &c.beta_grid {
        Some(g) => parse_grid(g)?,
        None => vec![c.beta],
    };
    let master = SeedSpec::new(c.seed);
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &beta) in grid.iter().enumerate() {
        let p = base.beta(beta)?;
        let seed = master.child(purpose::PHI, i as u64);
        let (n, n_of_beta) = match c.n {
            Some(n) => (n, "-".to_string()),
            None => {
                let r = xi_search(c, &p, &seed)?;
                let n = match r.status {
                    XiStatus::Exceeded => c.n_cap,
                    _ => r.n,
                };
                ((n + c.margin).max(1), r.label())
            }
        };
        let est = chi_hat(&p, n, &budget(c), &master.child(purpose::CHI, i as u64))?;
        let w = exterior_weight(&p, n)?.value;
        eprintln!("beta {beta}: n = {n}, chi = {} ± {} ({} trials)", est.estimate, est.se, est.trials);
        rows.push(vec![
            float(beta),
            n.to_string(),
            est.trials.to_string(),
            float(est.estimate),
            float(est.se),
            float(w * est.estimate),
            n_of_beta,
            c.seed.to_string(),
        ]);
    }
    write_csv(out(c), Some(SWEEP_VERSION), &SWEEP_HEADER, &rows)?;
    Ok(Outcome::Passed)
}

pub fn read_sweep(path: &Path) -> Result<Vec<FitPoint>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let bad = |e: String| Error::Usage(format!("malformed sweep file {}: {e}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name}")));
    let (ib, ic, is) = (column("beta")?, column("chi_hat")?, column("se")?);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64> { record[i].parse().map_err(|_| bad(format!("bad number '{}'", &record[i]))) };
        points.push(FitPoint { beta: field(ib)?, chi: field(ic)?, se: field(is)? });
    }
    Ok(points)
}

fn fit(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let input = c.input.as_deref().ok_or_else(|| Error::Usage("--input is required".into()))?;
    let points = read_sweep(input)?;
    match c.mode.unwrap_or(FitMode::Power) {
        FitMode::Power => {
            let f = fit_power_law(&points)?;
            write_json(out(c), &json!({ "mode": "power", "points": points, "fit": f }))?;
        }
        FitMode::DoubleExp => {
            let f = fit_double_exp(&points)?;
            write_json(out(c), &json!({ "mode": "double-exp", "points": points, "fit": f.line, "convexity": f.convexity }))?;
        }
    }
    Ok(Outcome::Passed)
}

fn oracle(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let n = require_n(c)?;
    let s = Oracle::new(&p, n, SiteMode::Random)?.summary();
    write_json(
        out(c),
        &json!({
            "params": p,
            "n": n,
            "chi_exact": s.chi,
            "conn_probs": s.by_class,
            "kmax_law": s.kmax_law,
            "second_moment": s.second_moment,
        }),
    )?;
    Ok(Outcome::Passed)
}

fn parse_test<T: ValueEnum>(c: &Common) -> Result<T> {
    let name = c.renorm_test.as_deref().ok_or_else(|| Error::Usage("--test is required".into()))?;
    T::from_str(name, false).map_err(|_| {
        let names: Vec<String> = T::value_variants()
            .iter()
            .filter_map(|v| v.to_possible_value().map(|p| p.get_name().to_string()))
            .collect();
        Error::Usage(format!("unknown --test '{name}', expected one of {}", names.join(", ")))
    })
}

fn trials_or(c: &Common, default: u64) -> u64 {
    c.trials.unwrap_or(default)
}

fn renorm_check(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let seed = SeedSpec::new(c.seed);
    let report = match parse_test::<RenormTest>(c)? {
        RenormTest::PhiIdentity => check_phi_identity(&p, c.k.unwrap_or(12))?,
        RenormTest::PhiLaw => check_phi_law(&p, c.n.unwrap_or(3), c.k.unwrap_or(1), trials_or(c, 100_000), &seed)?,
        RenormTest::Sprinkle => {
            let from = c.beta_from.unwrap_or(p.beta / 2.0);
            check_sprinkle_law(&p, c.n.unwrap_or(2), from, trials_or(c, 1_000_000), &seed)?
        }
        RenormTest::PsiConnectivity => psi_connectivity(c, &p, &seed)?,
        RenormTest::Domination => {
            let trials = trials_or(c, 100_000);
            if trials < 1000 {
                return Err(Error::Usage("the domination check needs at least 1000 trials".into()));
            }
            check_domination(&p, c.lambda, c.k.unwrap_or(1), c.n.unwrap_or(3), trials, &seed)?
        }
        RenormTest::DctChain => {
            let n = c.n.unwrap_or(2);
            let r = check_dct_chain(&p, c.m.unwrap_or(n.saturating_sub(1)), n)?;
            let worst = r.slack_finite.min(r.slack_infinite);
            CheckReport::new("dct-chain", p, worst, -1e-10, r.pass).with_detail(json!(r))
        }
    };
    write_json(out(c), &report)?;
    Ok(verdict(report.pass))
}

fn psi_connectivity(c: &Common, p: &Params, seed: &SeedSpec) -> Result<CheckReport> {
    let n = c.n.unwrap_or(2);
    let k = c.k.unwrap_or(2);
    let trials = trials_or(c, 10_000);
    let seed = seed.child(purpose::RENORM, 1);
    let violations = hierperc::estimators::parallel_map(trials, |t| {
        let config = sample_mixed(p, n + k, &seed.with_trial(t))?;
        Ok(check_psi_connectivity(&config, c.lambda, k)?.len() as u64)
    })?;
    let total: u64 = violations.iter().sum();
    let first = violations.iter().position(|&v| v > 0);
    Ok(CheckReport::new("psi-connectivity", *p, total as f64, 0.0, total == 0).with_detail(json!({
        "n": n, "k": k, "lambda": c.lambda, "samples": trials, "first_violating_trial": first
    })))
}

fn induction_check(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let seed = SeedSpec::new(c.seed);
    let (value, pass) = match parse_test::<InductionTest>(c)? {
        InductionTest::Scale => {
            let (k, ell) = match (c.k, c.ell) {
                (Some(k), Some(ell)) => (k, ell),
                _ => {
                    return Err(Error::Usage("--test scale needs --k and --ell".into()));
                }
            };
            let rows = check_scale_induction(&p, k, ell, &budget(c), &seed)?;
            let pass = rows.iter().all(|r| r.pass);
            (json!({ "test": "scale", "params": p, "k": k, "ell": ell, "rows": rows, "pass": pass }), pass)
        }
        InductionTest::Doubling => {
            let r = check_scale_doubling(&p, c.eps, require_n(c)?, &budget(c), &seed)?;
            let pass = r.status != Implication::Fails;
            (json!({ "test": "doubling", "params": p, "report": r, "pass": pass }), pass)
        }
        InductionTest::BaseCase => {
            let r = check_base_case(&p, c.n, trials_or(c, 1000), &seed)?;
            let pass = r.pass;
            (json!({ "test": "base-case", "params": p, "report": r, "pass": pass }), pass)
        }
    };
    write_json(out(c), &value)?;
    Ok(verdict(pass))
}

fn print_schedule(c: &Common) -> Result<Outcome> {
    format(c, Format::Json, &[Format::Json])?;
    let p = params(c)?;
    let s = schedule(&p, &ScheduleOptions { k0: c.k })?;
    let failures = s.verify(&p);
    write_json(out(c), &json!({ "params": p, "schedule": s, "failures": failures }))?;
    Ok(verdict(failures.is_empty()))
}

//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{hierperc, num, ok, scratch};
use hierperc::estimators::{exploration_tail, Budget};
use hierperc::{Params, SeedSpec};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    summary: String,
}

fn verdict(pass: bool, summary: impl Into<String>) -> Verdict {
    Verdict { pass, summary: summary.into() }
}

fn s(x: f64) -> String {
    format!("{x}")
}

fn pushforward_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (d, l, alpha) in [(1, 2, 1.0), (1, 2, 2.0), (2, 2, 2.0), (1, 3, 1.0)] {
        for beta in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let r = hierperc(&[
                "renorm-check", "--test", "phi-identity", "--d", &d.to_string(), "--L", &l.to_string(), "--alpha", &s(alpha),
                "--beta", &s(beta), "--k", "12",
            ]);
            let j = r.json();
            let residual = num(&j["statistic"]);
            worst = worst.max(residual);
            if r.code != 0 || residual > 1e-12 {
                failed.push(format!("(d={d}, L={l}, alpha={alpha}, beta={beta})"));
            }
        }
    }
    verdict(failed.is_empty(), format!("max residual {worst:.3e} over 20 parameter sets, k = 1..12 (bound 1e-12) {}", failed.join(" ")))
}

fn pushforward_law() -> Verdict {
    let r = hierperc(&["renorm-check", "--test", "phi-law", "--beta", "1", "--n", "3", "--k", "1", "--trials", "100000", "--seed", "101"]);
    let j = r.json();
    verdict(
        r.code == 0 && j["pass"] == true,
        format!("max |z| {:.3} against Bonferroni threshold {:.3}, 1e5 samples", num(&j["statistic"]), num(&j["threshold"])),
    )
}

fn sprinkling() -> Verdict {
    let r = hierperc(&[
        "renorm-check", "--test", "sprinkle", "--beta", "2", "--beta-from", "1", "--n", "2", "--trials", "1000000", "--seed", "102",
    ]);
    let j = r.json();
    let tv = num(&j["statistic"]);
    let residual = num(&j["detail"]["identity_residual"]);
    verdict(
        r.code == 0 && tv <= 0.01 && residual <= 1e-12,
        format!("TV {tv:.5} (bound 0.01), per-edge identity residual {residual:.3e} (bound 1e-12), 1e6 samples"),
    )
}

fn oracle_agreement() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, beta) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
        let exact = num(&ok(&["oracle", "--n", "2", "--beta", &s(beta)]).json()["chi_exact"]);
        let mc = ok(&["chi", "--n", "2", "--beta", &s(beta), "--trials", "100000", "--seed", &(200 + i).to_string()]).json();
        let z = (num(&mc["estimate"]) - exact).abs() / num(&mc["se"]);
        pass &= z <= 3.0;
        parts.push(format!("beta {beta}: exact {exact:.6} |dev|/SE {z:.2}"));
    }
    verdict(pass, parts.join("; "))
}

fn psi_connectivity() -> Verdict {
    let mut violations = 0.0;
    let mut bad = Vec::new();
    let mut seed = 300;
    for lambda in [0.25, 0.5, 1.0] {
        for beta in [1.0, 4.0] {
            for p in [0.5, 1.0] {
                seed += 1;
                let r = hierperc(&[
                    "renorm-check", "--test", "psi-connectivity", "--n", "2", "--k", "2", "--lambda", &s(lambda), "--beta", &s(beta),
                    "--p", &s(p), "--trials", "10000", "--seed", &seed.to_string(),
                ]);
                let v = num(&r.json()["statistic"]);
                violations += v;
                if r.code != 0 || v > 0.0 {
                    bad.push(format!("(lambda={lambda}, beta={beta}, p={p})"));
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("{violations} violations over 12 x 1e4 configurations {}", bad.join(" ")))
}

/// `(n(β), χ̂, SE)` at the correlation length.
fn chi_at_correlation_length(alpha: f64, beta: f64, seed: u64) -> (u64, f64, f64) {
    let seed = seed.to_string();
    let xi = ok(&["xi", "--alpha", &s(alpha), "--beta", &s(beta), "--seed", &seed]).json();
    let n = xi["n"].as_u64().unwrap().max(1);
    let c = ok(&["chi", "--alpha", &s(alpha), "--beta", &s(beta), "--n", &n.to_string(), "--seed", &seed]).json();
    (n, num(&c["estimate"]), num(&c["se"]))
}

fn upper_bound() -> Verdict {
    let (_, chi1, se1) = chi_at_correlation_length(2.0, 1.0, 400);
    let c = 2.0 * (chi1 + 3.0 * se1);
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, beta) in [1.0, 3.0, 10.0, 30.0, 100.0].into_iter().enumerate() {
        let (n, chi, _) = chi_at_correlation_length(2.0, beta, 401 + i as u64);
        let bound = c * beta;
        pass &= chi <= bound;
        parts.push(format!("beta {beta}: n {n} chi {chi:.3} <= {bound:.3}"));
    }
    verdict(pass, format!("C = {c:.4}; {}", parts.join("; ")))
}

fn power_exponent() -> Verdict {
    let dir = scratch("acceptance_power");
    let csv = dir.join("sweep.csv");
    ok(&["sweep", "--alpha", "2", "--beta-grid", "10:1000:log:12", "--target-se", "0.01", "--seed", "500", "--out", csv.to_str().unwrap()]);
    let j = ok(&["fit", "--mode", "power", "--input", csv.to_str().unwrap()]).json();
    let f = &j["fit"];
    let slope = num(&f["slope"]);
    verdict(
        (0.5..=1.1).contains(&slope),
        format!("slope {slope:.4} (95% CI {:.4}..{:.4}), accepted range [0.5, 1.1]", num(&f["ci_low"]), num(&f["ci_high"])),
    )
}

fn double_exponential() -> Verdict {
    let dir = scratch("acceptance_double_exp");
    let csv = dir.join("sweep.csv");
    ok(&[
        "sweep", "--alpha", "1", "--beta-grid", "1:7:lin:7", "--margin", "3", "--target-se", "0.01", "--seed", "600", "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect();
    let window = rows.iter().all(|&(n, chi)| n <= 20.0 && chi <= 1e6);
    let j = ok(&["fit", "--mode", "double-exp", "--input", csv.to_str().unwrap()]).json();
    let conv = &j["convexity"];
    let min_z = num(&conv["min_z"]);
    let convex = conv["nonnegative"] == true;
    let (slope, lo, hi) = (num(&j["fit"]["slope"]), num(&j["fit"]["ci_low"]), num(&j["fit"]["ci_high"]));
    let trend = slope > 0.0 && lo > 0.0;
    let control = conv["flags_non_power_law"] == true;
    verdict(
        window && convex && trend && control,
        format!(
            "window ok {window}; second differences min z {min_z:.2} (>= -2); log log slope {slope:.4} CI {lo:.4}..{hi:.4}; \
             power-law curvature {:.3} +- {:.3} flags non-power-law {control}",
            num(&conv["power_curvature"]),
            num(&conv["power_curvature_se"]),
        ),
    )
}

fn exploration() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for beta in [1.0, 4.0] {
        let p = Params::new(1, 2, 1.0, beta).unwrap();
        for k in 1..=3 {
            let seed = SeedSpec::new(700 + 10 * beta as u64 + k as u64);
            let r = exploration_tail(&p, k, 8, &Budget::fixed(100_000), &seed).unwrap();
            pass &= r.z <= 4.0;
            parts.push(format!("beta {beta} k {k}: {:.5} vs {:.5} z {:.2}", r.estimate.estimate, r.analytic, r.z));
        }
    }
    verdict(pass, parts.join("; "))
}

fn correlation_monotone() -> Verdict {
    let grid: Vec<f64> = (1..=12).map(|i| 0.5 * i as f64).collect();
    let ns: Vec<u64> =
        grid.iter().map(|&b| ok(&["xi", "--alpha", "1", "--beta", &s(b), "--seed", "800"]).json()["n"].as_u64().unwrap()).collect();
    let monotone = ns.windows(2).all(|w| w[0] <= w[1]);
    let mut worst = f64::INFINITY;
    let mut chain = true;
    for (m, n) in [(0, 1), (0, 2), (1, 2)] {
        for beta in [0.5, 1.0, 2.0, 4.0] {
            let r = hierperc(&["renorm-check", "--test", "dct-chain", "--m", &m.to_string(), "--n", &n.to_string(), "--beta", &s(beta)]);
            let slack = num(&r.json()["statistic"]);
            worst = worst.min(slack);
            chain &= r.code == 0 && slack >= -1e-10;
        }
    }
    verdict(monotone && chain, format!("n(beta) on beta = 0.5..6: {ns:?}; min oracle chain slack {worst:.4e} over 12 (m, n, beta)"))
}

fn schedules() -> Verdict {
    let e = std::f64::consts::E;
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 2.0] {
        for beta in [e, e.powi(4), 100.0, 1e4] {
            let r = hierperc(&["schedule", "--alpha", &s(alpha), "--beta", &s(beta)]);
            let j = r.json();
            let failures = j["failures"].as_array().unwrap().len();
            pass &= r.code == 0 && failures == 0;
            let sch = &j["schedule"];
            parts.push(format!("alpha {alpha} beta {beta:.4}: ell {} ({failures} failures)", sch["ell"]));
        }
    }
    verdict(pass, parts.join("; "))
}

fn determinism() -> Verdict {
    let dir = scratch("acceptance_determinism");
    let cases: &[(&str, &[&str])] = &[
        ("sample", &["sample", "--beta", "3", "--n", "8", "--p", "0.7"]),
        ("chi", &["chi", "--beta", "4", "--n", "8"]),
        ("kmax", &["kmax", "--beta", "2", "--n", "6", "--trials", "2000"]),
        ("phi", &["phi", "--beta", "2", "--n", "4", "--target-se", "0.02"]),
        ("xi", &["xi", "--beta", "4"]),
        ("sweep", &["sweep", "--alpha", "2", "--beta-grid", "1:50:log:4", "--target-se", "0.03"]),
        ("oracle", &["oracle", "--n", "2", "--beta", "2"]),
        ("renorm", &["renorm-check", "--test", "psi-connectivity", "--beta", "4", "--p", "0.5", "--trials", "500"]),
        ("domination", &["renorm-check", "--test", "domination", "--beta", "2", "--trials", "2000"]),
        ("induction", &["induction-check", "--test", "base-case", "--beta", "10", "--n", "2", "--trials", "200"]),
        ("schedule", &["schedule", "--beta", "100"]),
    ];
    let mut differ = Vec::new();
    for (name, args) in cases {
        let mut outputs = Vec::new();
        for (run, threads) in ["1", "4", "4"].into_iter().enumerate() {
            let path = dir.join(format!("{name}-{run}.out"));
            let mut full = args.to_vec();
            full.extend(["--seed", "900", "--threads", threads, "--out", path.to_str().unwrap()]);
            let r = hierperc(&full);
            assert!(r.code == 0 || r.code == 1, "{name}: exit {} {}", r.code, r.stderr);
            outputs.push(std::fs::read(&path).unwrap());
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            differ.push(*name);
        }
    }
    verdict(
        differ.is_empty(),
        format!("{} invocations byte-identical across --threads 1, 4 and a repeat; differing: {differ:?}", cases.len()),
    )
}

fn main() {
    let criteria: &[Criterion] = &[
        ("coarse-graining pushforward identity", pushforward_identity),
        ("coarse-graining pushforward law", pushforward_law),
        ("sprinkling composition", sprinkling),
        ("oracle against Monte Carlo", oracle_agreement),
        ("block map connectivity", psi_connectivity),
        ("susceptibility upper bound, alpha > d", upper_bound),
        ("power-law exponent, alpha > d", power_exponent),
        ("double-exponential trend, alpha = d", double_exponential),
        ("exploration tail", exploration),
        ("correlation length monotonicity and chain", correlation_monotone),
        ("renormalization schedule", schedules),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {name} [{:.1} s]: {}",
            if v.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            v.summary
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

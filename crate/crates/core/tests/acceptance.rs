//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fbsheet::chaos::{centered_square, i2_pair_moment};
use fbsheet::cli::{cmd_sigma, RunConfig};
use fbsheet::fieldsim::FactorMethod;
use fbsheet::kernel::incr_cov;
use fbsheet::mcverify::{
    clt_ks_check, exact_mean, exact_second_moment, kernel_property_suite, mean_decay, product_grid,
    CharFnCheck, MomentCheck, SamplerCheck, SecondMomentLimit, SheetFunctional, VerifyReport,
    BOOTSTRAP_RESAMPLES, DEFAULT_LAMBDA_VALUES,
};
use fbsheet::numeric::mean_se;
use fbsheet::rng::{Purpose, RngStream};
use fbsheet::sigma::{sigma_series, sigma_squared_partial};
use fbsheet::weight::WeightFunction;
use fbsheet::HurstPair;

const SEED: u64 = 1;

type Outcome = Result<(bool, String), String>;

fn h(a: f64, b: f64) -> HurstPair {
    HurstPair::new(a, b).unwrap()
}

fn all_pass(reports: &[VerifyReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

fn summary(reports: &[VerifyReport]) -> String {
    reports
        .iter()
        .map(|r| format!("{}={:.4e} vs {:.4e} ({})", r.test, r.estimate, r.reference, if r.pass { "ok" } else { "fail" }))
        .collect::<Vec<_>>()
        .join("; ")
}

fn constant() -> Outcome {
    let cfg = RunConfig { alpha: Some(0.5), beta: Some(0.5), ..Default::default() };
    let mut out = Vec::new();
    cmd_sigma(&cfg, &mut out).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let s = v["sigma"].as_f64().ok_or("no sigma in output")?;
    let brownian_ok = (s - 2f64.sqrt()).abs() <= 1e-12;

    let hurst = h(0.35, 0.35);
    let res = sigma_series(&hurst, 1e-10).map_err(|e| e.to_string())?;
    let wide = sigma_squared_partial(&hurst, 10 * res.cutoff).map_err(|e| e.to_string())?;
    let bracket_ok = res.value <= wide.value && wide.value <= res.value + res.tail_bound;
    Ok((
        brownian_ok && bracket_ok,
        format!(
            "sigma(1/2,1/2)={s:.17}, sigma^2(0.35)={:.12} <= {:.12} <= {:.12}",
            res.value,
            wide.value,
            res.value + res.tail_bound
        ),
    ))
}

fn kernel_oracles() -> Outcome {
    let reports = kernel_property_suite(100_000, SEED).map_err(|e| e.to_string())?;
    Ok((all_pass(&reports), summary(&reports)))
}

fn sampler_exactness() -> Outcome {
    let check = SamplerCheck { hurst: h(0.35, 0.4), n: 8, replications: 20_000, seed: SEED, min_fraction: 0.99 };
    let reports = vec![
        check.exactness(FactorMethod::Cholesky).map_err(|e| e.to_string())?,
        check.exactness(FactorMethod::Circulant).map_err(|e| e.to_string())?,
        check.agreement().map_err(|e| e.to_string())?,
    ];
    Ok((all_pass(&reports), summary(&reports)))
}

fn finite_n_moments() -> Outcome {
    let hurst = h(0.35, 0.35);
    let n = 32;
    // the closed form against the plain kernel sum over all cell pairs
    let scale = (n as f64).powf(2.0 * hurst.sum());
    let mut brute = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            for k in 1..=n {
                for l in 1..=n {
                    brute += (scale * incr_cov(&hurst, n, i, j, k, l).unwrap()).powi(2);
                }
            }
        }
    }
    brute *= 2.0 / (n * n) as f64;
    let closed = exact_second_moment(&hurst, &WeightFunction::ConstantOne, n, [1.0, 1.0]).map_err(|e| e.to_string())?;
    let oracle_ok = (closed - brute).abs() <= 1e-10 * brute;

    let check = |weight| MomentCheck { hurst, weight, n, t: [1.0, 1.0], replications: 10_000, seed: SEED };
    let var = check(WeightFunction::ConstantOne).variance().map_err(|e| e.to_string())?;
    let mean = check(WeightFunction::Square).mean().map_err(|e| e.to_string())?;
    let mean_oracle = exact_mean(&hurst, &WeightFunction::Square, n, [1.0, 1.0]).map_err(|e| e.to_string())?;
    let reports = [var, mean];
    Ok((
        oracle_ok && mean_oracle == reports[1].reference && all_pass(&reports),
        format!("closed form {closed:.10e} vs kernel sum {brute:.10e}; {}", summary(&reports)),
    ))
}

fn mean_decay_rate() -> Outcome {
    let hurst = h(0.35, 0.35);
    let f = WeightFunction::Square;
    let decay = mean_decay(&hurst, &f, [1.0, 1.0], &[8, 16, 32, 64, 128]).map_err(|e| e.to_string())?;
    let report = decay.report(&hurst, &f, [1.0, 1.0], 0.25);
    // how far out the asymptotic rate takes over
    let local = |n: usize| -> f64 {
        let a = exact_mean(&hurst, &f, n, [1.0, 1.0]).unwrap();
        let b = exact_mean(&hurst, &f, 2 * n, [1.0, 1.0]).unwrap();
        (b / a).log2()
    };
    Ok((
        report.pass,
        format!(
            "slope={:.4} target={:.2}; means=[{}]; |mean| <= {:?} n^(target): {:?}; local slopes n=2^10: {:.3}, 2^16: {:.3}, 2^22: {:.3}",
            report.estimate,
            decay.target_slope,
            decay.means.iter().map(|m| format!("{m:.4e}")).collect::<Vec<_>>().join(", "),
            decay.a_priori_constant,
            decay.a_priori_bound_holds,
            local(1 << 10),
            local(1 << 16),
            local(1 << 22),
        ),
    ))
}

fn second_moment_limit() -> Outcome {
    let report = SecondMomentLimit {
        hurst: h(0.35, 0.35),
        weight: WeightFunction::Identity,
        t: [1.0, 1.0],
        n_coarse: 16,
        n_fine: 64,
        replications: 5000,
        seed: SEED,
        rel_tol: 0.15,
    }
    .run()
    .map_err(|e| e.to_string())?;
    Ok((report.pass, summary(&[report])))
}

fn clt() -> Outcome {
    let report = clt_ks_check(&h(0.35, 0.35), 64, 5000, SEED, 1e-3).map_err(|e| e.to_string())?;
    let p = report.detail["p_value"].as_f64().unwrap_or(f64::NAN);
    Ok((report.pass, format!("p={p:.4}; {}", summary(&[report]))))
}

fn charfn_check(weight: WeightFunction, functional: Option<SheetFunctional>) -> Outcome {
    let report = CharFnCheck {
        hurst: h(0.35, 0.35),
        weight,
        points: vec![[0.5, 1.0], [1.0, 0.5]],
        lambda_grid: product_grid(&DEFAULT_LAMBDA_VALUES, 2),
        n_coarse: 32,
        n_fine: 64,
        replications: 5000,
        seed: SEED,
        bootstrap: BOOTSTRAP_RESAMPLES,
        functional,
    }
    .run()
    .map_err(|e| e.to_string())?;
    let d = &report.detail;
    Ok((
        report.pass,
        format!(
            "sup|diff|={:.4e}; rms gap {:.4e} -> {:.4e}; fine sup excess {:.4e}, slack {:.4e}",
            report.estimate,
            d["levels"][0]["rms_gap"].as_f64().unwrap_or(f64::NAN),
            d["levels"][1]["rms_gap"].as_f64().unwrap_or(f64::NAN),
            d["levels"][1]["sup_excess"].as_f64().unwrap_or(f64::NAN),
            d["slack"].as_f64().unwrap_or(f64::NAN),
        ),
    ))
}

fn chaos_moments() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let mut ok = true;
    let mut lines = Vec::new();
    for (r, rho) in [0.0f64, 0.3, -0.3, 0.9, -0.9].into_iter().enumerate() {
        let mut rng = RngStream::new(SEED, r as u64, Purpose::Auxiliary);
        let c = (1.0 - rho * rho).sqrt();
        let products: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let x = rng.standard_normal();
                let y = rho * x + c * rng.standard_normal();
                centered_square(x, 1.0).unwrap() * centered_square(y, 1.0).unwrap()
            })
            .collect();
        let (mean, se) = mean_se(&products);
        let exact = i2_pair_moment(rho);
        ok &= (mean - exact).abs() <= 4.0 * se;
        lines.push(format!("rho={rho}: {mean:.4} vs {exact:.4} (se {se:.1e})"));
    }
    Ok((ok, lines.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("1 limiting constant", Duration::from_secs(1), constant),
        ("2 kernel oracles", Duration::from_secs(30), kernel_oracles),
        ("3 sampler exactness", Duration::from_secs(120), sampler_exactness),
        ("4 finite-n moments", Duration::from_secs(180), finite_n_moments),
        ("5 mean decay rate", Duration::from_secs(60), mean_decay_rate),
        ("6 second-moment limit", Duration::from_secs(300), second_moment_limit),
        ("7 CLT (KS)", Duration::from_secs(300), clt),
        ("8 characteristic function", Duration::from_secs(600), || {
            charfn_check(WeightFunction::Cosine, None)
        }),
        ("9 stable convergence", Duration::from_secs(600), || {
            charfn_check(WeightFunction::Identity, Some(SheetFunctional::CosTerminal))
        }),
        ("10 chaos moments", Duration::from_secs(60), chaos_moments),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((pass, detail)) => (pass && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} criterion {name} [{:.2}s / {}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Stochastic criteria use seeds 1..=10.

use std::path::Path;
use std::process::Command;

use growthcast::ensemble::EnsembleForecast;
use growthcast::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeds() -> std::ops::RangeInclusive<u64> {
    1..=10
}
const MAJORITY: usize = 8;

fn china() -> CaseSeries {
    qc_correct(&bundled_dataset("china").unwrap(), DEFAULT_QC_THRESHOLD)
        .unwrap()
        .0
}

fn dataset(name: &str) -> CaseSeries {
    bundled_dataset(name).unwrap()
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value / target - 1.0).abs() <= tol
}

fn forecast(
    series: &CaseSeries,
    day: i64,
    horizon: usize,
    seed: u64,
) -> Result<EnsembleForecast, EnsembleError> {
    generate(series, &EnsembleConfig::new(day, horizon, seed))
}

fn coverage(series: &CaseSeries, day: i64, last: i64, seed: u64) -> Option<f64> {
    let fc = forecast(series, day, 30, seed).ok()?;
    verify_ensemble(&fc, series, day + 1, last)
        .ok()?
        .minmax_coverage
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn c1_china_full_fit() -> Outcome {
    let r = fit(&china(), 45).unwrap();
    let e_inf = r.solution.map(|s| s.e_inf).unwrap_or(f64::NAN);
    Outcome {
        pass: r.valid_for_forecast() && within(e_inf, 68_790.0, 0.05),
        detail: format!("E_inf = {e_inf:.0} (target 68,790 +/- 5%)"),
    }
}

fn c2_china_skill() -> Outcome {
    let s = china();
    let q25 = fit_quality(&fit(&s, 25).unwrap(), &s, 1, 45).unwrap();
    let q45 = fit_quality(&fit(&s, 45).unwrap(), &s, 1, 45).unwrap();
    let corr = q25.correlation.unwrap_or(f64::NAN);
    Outcome {
        pass: corr >= 0.99 && (1_000.0..=3_000.0).contains(&q25.rmse) && (800.0..=2_000.0).contains(&q45.rmse),
        detail: format!(
            "day-25 fit: corr {corr:.4}, RMSE {:.0} (need >= 0.99, [1000, 3000]); full fit RMSE {:.0} (need [800, 2000])",
            q25.rmse, q45.rmse
        ),
    }
}

fn c3_china_qc() -> Outcome {
    let (_, report) = qc_correct(&dataset("china"), DEFAULT_QC_THRESHOLD).unwrap();
    let got: Vec<_> = report
        .corrected
        .iter()
        .map(|c| (c.day, c.original, c.replacement))
        .collect();
    Outcome {
        pass: got == [(22, 15_200.0, 3_000.0)],
        detail: format!("corrections {got:?}"),
    }
}

fn c4_china_coverage() -> Outcome {
    let s = china();
    let full = seeds()
        .filter(|&seed| coverage(&s, 25, 45, seed) == Some(1.0))
        .count();
    let miss = seeds()
        .filter(|&seed| coverage(&s, 22, 45, seed).is_some_and(|c| c < 1.0))
        .count();
    Outcome {
        pass: full >= MAJORITY && miss >= MAJORITY,
        detail: format!("day 25 full coverage {full}/10, day 22 coverage < 1 {miss}/10 (need >= {MAJORITY} each)"),
    }
}

fn c5_italy() -> Outcome {
    let s = dataset("italy");
    let mut fans = Vec::new();
    let ok = seeds()
        .filter(|&seed| {
            let Ok(fc) = forecast(&s, 32, 30, seed) else {
                return false;
            };
            let Some(f) = fc.fan_at(62).copied() else {
                return false;
            };
            fans.push(format!(
                "{:.0}/{:.0}/{:.0}/{:.0}",
                f.min / 1e3,
                f.q25 / 1e3,
                f.q75 / 1e3,
                f.max / 1e3
            ));
            within(f.min, 101_000.0, 0.15)
                && within(f.max, 180_000.0, 0.15)
                && within(f.q25, 110_000.0, 0.15)
                && within(f.q75, 135_000.0, 0.15)
        })
        .count();
    let collapsed = (20..=29)
        .all(|day| matches!(forecast(&s, day, 30, 1), Err(EnsembleError::Collapse(_))))
        && seeds()
            .all(|seed| matches!(forecast(&s, 29, 30, seed), Err(EnsembleError::Collapse(_))));
    Outcome {
        pass: ok >= MAJORITY && collapsed,
        detail: format!(
            "day-62 fan in tolerance {ok}/10 (need >= {MAJORITY}; min/q25/q75/max in k: {}); issuance <= 29 collapses: {collapsed}",
            fans.join(" ")
        ),
    }
}

fn c6_korea() -> Outcome {
    let s = dataset("south_korea");
    let ok = seeds()
        .filter(|&seed| {
            let Ok(fc) = forecast(&s, 33, 30, seed) else {
                return false;
            };
            let Some(f) = fc.fan_at(63).copied() else {
                return false;
            };
            within(f.min, 8_500.0, 0.10)
                && within(f.max, 9_300.0, 0.10)
                && within(f.q25, 8_700.0, 0.10)
                && within(f.q75, 8_900.0, 0.10)
        })
        .count();
    let miss = seeds()
        .filter(|&seed| coverage(&s, 20, 33, seed).is_some_and(|c| c < 1.0))
        .count();
    Outcome {
        pass: ok >= MAJORITY && miss >= MAJORITY,
        detail: format!("day-63 fan in tolerance {ok}/10, day-20 fan misses some of days 21-33 {miss}/10 (need >= {MAJORITY} each)"),
    }
}

fn c7_uk() -> Outcome {
    let s = dataset("uk");
    let ready = readiness(&s.truncate_to(26).unwrap(), 2).unwrap().ready;
    let collapsed = matches!(forecast(&s, 26, 30, 1), Err(EnsembleError::Collapse(_)));
    let status = Command::new(env!("CARGO_BIN_EXE_growthcast"))
        .args(["forecast", "--dataset", "uk", "--issuance-day", "26"])
        .output()
        .unwrap()
        .status
        .code();
    Outcome {
        pass: !ready && collapsed && status == Some(4),
        detail: format!("ready {ready}, ensemble collapse {collapsed}, CLI exit code {status:?}"),
    }
}

fn c8_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20200307);
    let mut failures = Vec::new();

    // closed form against RK4
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = LogisticParams::new(
            rng.random_range(0.05..1.0),
            10f64.powf(rng.random_range(-6.0..-2.0)),
            rng.random_range(0.0..100.0),
        );
        let e_inf = p.asymptote().unwrap();
        let e0 = rng.random_range(0.0..0.5) * e_inf;
        let sol = derive_solution(&p, e0, 0).unwrap();
        let traj = integrate_ode(&p, e0, 50.0, 0.01);
        for (&t, &v) in traj.times.iter().zip(&traj.values) {
            worst = worst.max((sol.evaluate(t) - v).abs() / v.abs().max(1e-9 * e_inf));
        }
    }
    if worst >= 1e-5 {
        failures.push(format!("RK4 max rel err {worst:e}"));
    }

    // fan ordering
    for _ in 0..10 {
        let seed: u64 = rng.random();
        for (s, day) in [(china(), 25), (dataset("south_korea"), 33)] {
            let fc = forecast(&s, day, 30, seed).unwrap();
            let ordered = fc.fan.iter().all(|p| {
                let f = p.fan;
                f.min <= f.q25 && f.q25 <= f.median && f.median <= f.q75 && f.q75 <= f.max
            });
            if !ordered {
                failures.push(format!("fan order, seed {seed}"));
            }
        }
    }

    // degenerate ensemble is the deterministic fit
    let s = china();
    let mut cfg = EnsembleConfig::new(25, 20, 3);
    cfg.sigma_scale = 0.0;
    cfg.n_lag_forward = 0;
    cfg.n_lag_backward = 0;
    let fc = generate(&s, &cfg).unwrap();
    let sol = fit(&s, 25).unwrap().solution.unwrap();
    if !fc.fan.iter().all(|p| {
        let v = sol.at_day(p.day as f64);
        [p.fan.min, p.fan.median, p.fan.max] == [v; 3]
    }) {
        failures.push("zero-noise ensemble differs from the fit".into());
    }

    // scale equivariance
    let base = fit(&s, 45).unwrap();
    for c in [1e-3, 0.37, 7.0, 1234.5] {
        let r = fit(&s.scaled(c), 45).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        let worst = [
            rel(r.params.alpha, base.params.alpha),
            rel(r.params.beta, base.params.beta / c),
            rel(r.params.gamma, base.params.gamma * c),
            rel(r.solution.unwrap().e_inf, base.solution.unwrap().e_inf * c),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if worst >= 1e-9 {
            failures.push(format!("scale {c}: rel err {worst:e}"));
        }
    }

    // telescoping sums
    let incs: Vec<f64> = (0..60)
        .map(|_| rng.random_range(0..50_000u32) as f64)
        .collect();
    let series = CaseSeries::from_increments("t", 0, 17.0, &incs);
    let d = derivatives(&series).unwrap();
    let mut total = series.cumulative()[0];
    for (i, f) in d.first.iter().enumerate().skip(1) {
        total += f.unwrap();
        if total != series.cumulative()[i] {
            failures.push(format!("telescoping breaks at index {i}"));
            break;
        }
    }

    // noiseless round trip
    let truth = LogisticParams::new(0.4, 5e-6, 10.0);
    let sol = derive_solution(&truth, 10.0, 0).unwrap();
    let syn = CaseSeries::new("syn", 0, (0..=60).map(|d| sol.evaluate(d as f64)).collect());
    let rt = fit(&syn, 60).unwrap();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let errs = [
        (
            "E_inf",
            rel(rt.solution.map_or(f64::NAN, |s| s.e_inf), sol.e_inf),
            1e-2,
        ),
        ("alpha", rel(rt.params.alpha, truth.alpha), 5e-2),
        ("beta", rel(rt.params.beta, truth.beta), 5e-2),
        ("gamma", rel(rt.params.gamma, truth.gamma), 5e-2),
    ];
    for (name, err, tol) in errs {
        if err.is_nan() || err >= tol {
            failures.push(format!("round trip {name} rel err {err:.3} (limit {tol})"));
        }
    }
    let exact = fit_with(
        &syn,
        60,
        FitOptions {
            method: FitMethod::DiscreteMap,
            ..Default::default()
        },
    )
    .unwrap();
    let exact_gamma = rel(exact.params.gamma, truth.gamma);

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("RK4 max rel err {worst:.1e}; all sub-checks hold")
        } else {
            format!(
                "{}; discrete-map estimator gamma rel err {exact_gamma:.1e}",
                failures.join("; ")
            )
        },
    }
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "dataset = china\nissuance-day = 25\nhorizon = 20\nseed = 42\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_growthcast"))
            .args(args)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    let snapshot = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let args = [
        "forecast",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ];
    let first_stdout = run(&args);
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    let second_stdout = run(&args);
    let second = snapshot(&out);

    let mut others = true;
    for cmd in ["fit", "diagnose", "verify"] {
        let a = ["--config", cfg.to_str().unwrap()];
        others &= run(&[&[cmd][..], &a].concat()) == run(&[&[cmd][..], &a].concat());
    }
    let n = first.len();
    Outcome {
        pass: first == second && first_stdout == second_stdout && others && n == 4,
        detail: format!("{n} forecast files and stdout identical across runs: {}; fit/diagnose/verify JSON identical: {others}", first == second && first_stdout == second_stdout),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 China full fit asymptote", c1_china_full_fit),
        ("2 China deterministic skill", c2_china_skill),
        ("3 China QC", c3_china_qc),
        ("4 China ensemble coverage", c4_china_coverage),
        ("5 Italy forecast", c5_italy),
        ("6 Korea forecast", c6_korea),
        ("7 UK refusal", c7_uk),
        ("8 Property suite", c8_properties),
        ("9 Determinism", c9_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("{} of 9 criteria failed", failed.len());
        std::process::exit(1);
    }
}

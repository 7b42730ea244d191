//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or overruns its time budget.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use sirnw::cv::{alpha_grid, select_alpha};
use sirnw::io::{ingest_csv, write_sample_csv};
use sirnw::moments::batch_covariance;
use sirnw::quadrature::adaptive_simpson;
use sirnw::sim::Link;
use sirnw::study::{run_study, EvalPoints, StudyConfig, StudyKind, StudySummary, EVAL_POINT_SEED, NORMALITY_POINTS};
use sirnw::{
    batch_moments, batch_sir, epanechnikov, model_m, BandwidthSchedule, EngineOptions,
    GridAccumulator, MomentState, ProjectionLog, Sample, SingleIndexModel, SirState, Slicer,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel_max(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

fn criterion_1() -> Outcome {
    let mut worst = [0.0f64; 3];
    for i in 0..20u64 {
        let p = [2, 5, 10][i as usize % 3];
        let theta = DVector::from_fn(p, |j, _| ((i + 1) as f64 * 1.7 * (j + 1) as f64).sin() + 0.1);
        let model = SingleIndexModel::new(theta, Link::model_m(), 1.0).unwrap();
        let s = model.draw(500, 1000 + i);
        let n0 = sirnw::engine::default_warmup(p);
        let slicer = Slicer::median_of(&s.responses().as_slice()[..n0]).unwrap();
        let mut st = SirState::warm_up(&s.head(n0), &slicer).unwrap();
        for k in n0..500 {
            st.recursive_step(&s.row(k), s.response(k), &slicer).unwrap();
            let prefix = s.head(k + 1);
            let (_, cov) = batch_covariance(prefix.covariates());
            let ident = st.moments().inv_cov() * cov - DMatrix::<f64>::identity(p, p);
            worst[0] = worst[0].max(ident.amax());
            let batch = batch_moments(&prefix, &slicer).unwrap();
            for h in 0..2 {
                worst[1] = worst[1].max(rel_max(&st.moments().slice_means()[h], &batch.slice_means()[h]));
            }
            worst[2] = worst[2].max(rel_max(st.theta_hat(), &batch.sir_direction()));
        }
    }
    Outcome {
        pass: worst[0] <= 1e-8 && worst[1] <= 1e-12 && worst[2] <= 1e-8,
        detail: format!(
            "max |S_n Sigma_n - I| = {:.2e}, slice means rel {:.2e}, direction rel {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    }
}

fn criterion_2() -> Outcome {
    let k = epanechnikov();
    let quad = |g: &dyn Fn(f64) -> f64| adaptive_simpson(g, -1.0, 1.0, 1e-13);
    let mass = quad(&|u| k.eval(u));
    let nu2 = quad(&|u| k.eval(u).powi(2));
    let tau2 = 0.5 * quad(&|u| u * u * k.eval(u));
    let pass = (nu2 - 0.6).abs() <= 1e-9
        && (tau2 - 0.1).abs() <= 1e-9
        && (k.nu2() - nu2).abs() <= 1e-9
        && (k.tau2() - tau2).abs() <= 1e-9
        && (mass - 1.0).abs() <= 1e-6;
    Outcome {
        pass,
        detail: format!("mass {mass:.12}, nu2 {nu2:.12}, tau2 {tau2:.12}"),
    }
}

fn study(kind: StudyKind, sizes: Vec<usize>, reps: usize, points: EvalPoints) -> sirnw::study::StudyResult {
    let mut cfg = StudyConfig::new(kind, model_m(10).unwrap());
    cfg.sizes = sizes;
    cfg.replications = reps;
    cfg.eval_points = points;
    cfg.alpha = 0.35;
    cfg.seed = 20_251_014;
    run_study(&cfg).unwrap()
}

fn criterion_3() -> Outcome {
    let r = study(
        StudyKind::Convergence,
        vec![500, 1000, 2000],
        100,
        EvalPoints::Projected(vec![0.0]),
    );
    let StudySummary::Convergence(s) = &r.summary else { unreachable!() };
    let med: Vec<f64> = s.direction.iter().map(|d| d.median_distance).collect();
    let monotone = med.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: monotone && med[2] <= 0.02,
        detail: format!("median distance at n = 500/1000/2000: {med:.4?}"),
    }
}

fn criterion_4() -> Outcome {
    let sizes = vec![200, 500, 1000, 2000];
    let r = study(
        StudyKind::Convergence,
        sizes.clone(),
        100,
        EvalPoints::Random {
            count: 10,
            seed: EVAL_POINT_SEED,
            central: true,
        },
    );
    let recs = r.records.replications();
    let missing = recs.iter().filter(|r| r.missing).count();
    let med: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let e: Vec<f64> = recs.iter().filter(|r| r.n == n).filter_map(|r| r.abs_error).collect();
            sirnw::stats::median(&e)
        })
        .collect();
    let monotone = med.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: monotone && med[3] <= 0.25,
        detail: format!(
            "median |error| over 10 central points at n = 200/500/1000/2000: {med:.4?} ({missing} missing)"
        ),
    }
}

fn criterion_5() -> Outcome {
    let model = model_m(10).unwrap();
    let grid = alpha_grid(0.10, 0.60, 0.05).unwrap();
    let opts = EngineOptions::default();
    let mut hits = 0;
    let mut argmins = Vec::new();
    for r in 0..50u64 {
        let s = model.draw(1000, sirnw::sim::replication_seed(777, r));
        let rep = select_alpha(&s, &grid, &opts).unwrap();
        if (0.25..=0.45).contains(&rep.argmin) {
            hits += 1;
        }
        argmins.push(rep.argmin);
    }
    let median = sirnw::stats::median(&argmins);
    Outcome {
        pass: hits as f64 >= 0.6 * 50.0,
        detail: format!("argmin in [0.25, 0.45] for {hits}/50 replications, median argmin {median:.3}"),
    }
}

fn criterion_6() -> Outcome {
    let r = study(
        StudyKind::Normality,
        vec![1000],
        200,
        EvalPoints::Projected(NORMALITY_POINTS.to_vec()),
    );
    let StudySummary::Normality(s) = &r.summary else { unreachable!() };
    let mut pass = true;
    let mut parts = Vec::new();
    for p in &s.points {
        let ok = p.mean.abs() <= 0.3
            && (0.75..=1.25).contains(&p.std)
            && p.skewness.abs() <= 0.4
            && p.excess_kurtosis.abs() <= 1.0
            && !p.ks_rejected
            && p.missing == 0;
        pass &= ok;
        parts.push(format!(
            "t = {:.3}: mean {:.3} std {:.3} skew {:.3} kurt {:.3} KS {:.4}/{:.4}",
            p.true_projection, p.mean, p.std, p.skewness, p.excess_kurtosis, p.ks_statistic, p.ks_critical_1pct
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn stream(seed: u64, p: usize, n: usize) -> Sample {
    let theta = DVector::from_fn(p, |j, _| 1.0 + j as f64 * 0.5 * if j % 2 == 0 { 1.0 } else { -1.0 });
    SingleIndexModel::new(theta, Link::model_m(), 0.5).unwrap().draw(n, seed)
}

fn criterion_7() -> Outcome {
    let cases = 256;
    let runner = || TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let mut failures: Vec<String> = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    // convex-combination bound
    let r = runner().run(
        &(prop::collection::vec((-3.0..3.0f64, -10.0..10.0f64), 1..60), -3.0..3.0f64, 0.05..0.95f64),
        |(pts, x, alpha)| {
            let mut log = ProjectionLog::new(epanechnikov(), BandwidthSchedule::new(alpha).unwrap());
            for (i, (u, y)) in pts.iter().enumerate() {
                log.push(i + 1, *u, *y).unwrap();
            }
            if let Ok(f) = log.evaluate(x) {
                let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(f >= lo - 1e-12 && f <= hi + 1e-12);
            }
            Ok(())
        },
    );
    record("convex bound", r.map_err(|e| e.to_string()));

    // slice-count conservation and rho >= 0
    let r = runner().run(&(any::<u64>(), 2..7usize, 0..120usize), |(seed, p, extra)| {
        let n0 = p + 2 + 3;
        let s = stream(seed, p, n0 + extra);
        let slicer = Slicer::median_of(&s.responses().as_slice()[..n0]).unwrap();
        let mut st = MomentState::warm_start(&s.head(n0), &slicer).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for k in n0..s.len() {
            let rho = st.update(&s.row(k), s.response(k), &slicer).unwrap();
            prop_assert!(rho >= 0.0, "rho = {rho}");
            let c = st.slice_counts();
            prop_assert_eq!(c[0] + c[1], st.n());
        }
        Ok(())
    });
    record("slice counts / rho", r.map_err(|e| e.to_string()));

    // scale equivariance of batch_sir
    let r = runner().run(&(any::<u64>(), 2..7usize, 0.01..100.0f64), |(seed, p, c)| {
        let s = stream(seed, p, 60);
        let slicer = Slicer::median_of(s.responses().as_slice()).unwrap();
        let a = batch_sir(&s, &slicer).unwrap();
        let b = batch_sir(&s.scaled_covariates(c), &slicer).unwrap();
        prop_assert!(rel_max(&(b * c), &a) <= 1e-8);
        Ok(())
    });
    record("scale equivariance", r.map_err(|e| e.to_string()));

    // grid / log consistency
    let r = runner().run(
        &(prop::collection::vec((-2.0..2.0f64, -5.0..5.0f64), 1..80), 0.05..0.95f64),
        |(pts, alpha)| {
            let sched = BandwidthSchedule::new(alpha).unwrap();
            let mut log = ProjectionLog::new(epanechnikov(), sched);
            let mut grid = GridAccumulator::new(GridAccumulator::linspace(-2.0, 2.0, 41), epanechnikov(), sched);
            for (i, (u, y)) in pts.iter().enumerate() {
                log.push(i + 1, *u, *y).unwrap();
                grid.add(i + 1, *u, *y);
            }
            for e in grid.estimates() {
                let l = log.estimate_at(e.x);
                prop_assert!((l.denominator - e.denominator).abs() <= 1e-12 * l.denominator.abs().max(1.0));
                match (l.f_hat, e.f_hat) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                    (None, None) => {}
                    other => return Err(TestCaseError::fail(format!("support mismatch {other:?}"))),
                }
            }
            Ok(())
        },
    );
    record("grid/log consistency", r.map_err(|e| e.to_string()));

    // CSV round-trip
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let finite = prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO;
    let r = runner().run(
        &(1..5usize, prop::collection::vec(finite, 5 * 12)),
        |(p, vals)| {
            let n = vals.len() / (p + 1);
            let x = DMatrix::from_fn(n, p, |i, j| vals[i * (p + 1) + j]);
            let y = DVector::from_fn(n, |i, _| vals[i * (p + 1) + p]);
            let s = Sample::new(x, y).unwrap();
            write_sample_csv(&s, &path).unwrap();
            let back = ingest_csv(&path).unwrap();
            prop_assert_eq!(back.dim(), p);
            prop_assert!(s.covariates().iter().zip(back.covariates().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert!(s.responses().iter().zip(back.responses().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            Ok(())
        },
    );
    record("csv round-trip", r.map_err(|e| e.to_string()));

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("6 properties x {cases} cases")
        } else {
            failures.join("; ")
        },
    }
}

fn sirnw(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sirnw"))
        .current_dir(dir)
        .env_remove("SIRNW_OUT_DIR")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(dir: &Path) -> Result<(), String> {
    std::fs::write(
        dir.join("study.toml"),
        "kind = \"convergence\"\nsizes = [100, 300]\nreplications = 6\neval_count = 4\nseed = 5\n",
    )
    .map_err(|e| e.to_string())?;
    sirnw(dir, &["simulate", "--n", "1000", "--seed", "11", "--out", "sample.csv"])?;
    sirnw(dir, &["fit", "--input", "sample.csv", "--out-dir", "fit"])?;
    sirnw(dir, &["predict", "--log", "fit/log.csv", "--fit", "fit/fit.json", "--at", "-1,0,0.5,1", "--out", "pred.csv"])?;
    sirnw(dir, &["cv", "--input", "sample.csv", "--grid-step", "0.05", "--out-dir", "cv"])?;
    sirnw(dir, &["study", "--config", "study.toml", "--out-dir", "study"])?;
    Ok(())
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = pipeline(a.path()).and_then(|_| pipeline(b.path())) {
        return Outcome { pass: false, detail: e };
    }
    let files = [
        "sample.csv",
        "fit/fit.json",
        "fit/grid.csv",
        "fit/log.csv",
        "pred.csv",
        "cv/cv.json",
        "study/records.csv",
        "study/summary.json",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    Outcome {
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} artifacts byte-identical across runs", files.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("algebraic equivalence of the recursions", criterion_1, 30),
        ("kernel constants", criterion_2, 1),
        ("direction recovery", criterion_3, 120),
        ("link consistency", criterion_4, 240),
        ("cross-validation profile", criterion_5, 300),
        ("asymptotic normality", criterion_6, 240),
        ("invariant properties", criterion_7, 60),
        ("CLI determinism", criterion_8, 300),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*budget);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {} [{:.1}s of {budget}s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are never captured.
//! Failures are reported but only change the exit status when
//! `NSLANG_ACCEPTANCE_STRICT=1`. Extra arguments select criteria by
//! substring, e.g. `cargo test --test acceptance -- c07`.

use std::time::Instant;

use nslang::oracle::{abs_difference, golden_section_prox, mixed_norm_difference, tv_prox_projected_gradient};
use nslang::props::TV_ORACLE_PD;
use nslang::{exp2d, imaging, props, Experiment, ExperimentConfig};
use nslang_core::diagnostics::{BatchMeans, MomentAccumulator};
use nslang_core::kernels::{
    run_chain, run_coupled_pair, run_ensemble, semi_implicit_contraction_bound, ChainConfig, KernelKind, Transition,
};
use nslang_core::operators::ImageShape;
use nslang_core::potential::ZeroPart;
use nslang_core::potentials::{mixed_norm_model, IsotropicQuadratic, L1Norm, QuadraticForm, ANCHOR_2D};
use nslang_core::prox::{prox_l1, prox_mixed_norm, prox_tv_pd};
use nslang_core::{PotentialModel, RngStream, State};

fn report(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn quad_1d() -> PotentialModel {
    PotentialModel::new(IsotropicQuadratic::new(vec![0.0], 1.0), ZeroPart).unwrap()
}

fn ar1_variance(tau: f64, samples: usize, seed: u64) -> f64 {
    let cfg = ChainConfig::new(KernelKind::Explicit, tau)
        .with_iterations(10_000, samples)
        .with_seed(seed, 0);
    let mut acc = MomentAccumulator::new(1);
    run_chain(&cfg, &quad_1d(), &mut [&mut acc]).unwrap();
    acc.variance().unwrap()[0]
}

fn c01_ar1_stationary_variance() -> bool {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for tau in [0.2, 0.1, 0.05] {
        let exact = 1.0 / (1.0 - tau / 2.0);
        let n = 1_000_000;
        let rel = (ar1_variance(tau, n, 2024) / exact - 1.0).abs();
        // standard error of the sample variance of an AR(1) with coefficient rho
        let rho: f64 = 1.0 - tau;
        let se = (2.0 * (1.0 + rho * rho) / ((1.0 - rho * rho) * n as f64)).sqrt();
        worst = worst.max(rel);
        parts.push(format!("tau={tau}: {rel:.4} ({:.1} se)", rel / se));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "AR(1) stationary variance",
        worst < 0.01 && secs < 10.0,
        &format!("relative errors {} (< 0.01), {secs:.1}s (< 10s)", parts.join(", ")),
    )
}

fn c02_bias_halves_with_tau() -> bool {
    // 1e7 iterates: at 1e6 the Monte Carlo error of the smallest bias is ~25%
    let bias: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&tau| (ar1_variance(tau, 10_000_000, 7) - 1.0).abs())
        .collect();
    let ratios = [bias[0] / bias[1], bias[1] / bias[2]];
    let pass = ratios.iter().all(|r| (r / 2.0 - 1.0).abs() <= 0.3);
    report(
        2,
        "O(tau) bias scaling",
        pass,
        &format!(
            "bias {:.4} {:.4} {:.4}, ratios {:.3} {:.3} (2 +/- 30%)",
            bias[0], bias[1], bias[2], ratios[0], ratios[1]
        ),
    )
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn c03_coupled_contraction() -> bool {
    let start = Instant::now();
    let tau = 1e-3;
    let model = mixed_norm_model(5.0, ANCHOR_2D);
    let cfg = ChainConfig::new(KernelKind::Explicit, tau).with_seed(11, 0);
    let x0 = State::from(vec![3.0, -3.0]);
    let y0 = State::from(vec![-2.0, 2.5]);
    let d = run_coupled_pair(&cfg, &model, &x0, &y0, 10_000).unwrap();
    // the pair coalesces; stop the fit where rounding takes over
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for (k, &dk) in d.iter().enumerate() {
        if dk <= 1e-9 {
            break;
        }
        ts.push(k as f64 * tau);
        ls.push(2.0 * dk.ln());
    }
    let rate = slope(&ts, &ls);
    let secs = start.elapsed().as_secs_f64();
    let bound = -2.0 * 1.0 * (1.0 - 0.1);
    report(
        3,
        "coupled contraction",
        rate <= bound && ts.len() > 100 && secs < 5.0,
        &format!("fitted rate {rate:.3} over t <= {:.2} (<= {bound}), {secs:.2}s (< 5s)", ts.last().unwrap()),
    )
}

fn c04_semi_implicit_one_step_contraction() -> bool {
    // m = 1, L = 4; the contraction bound is claimed for tau <= 2 / (m + L)
    let precision = vec![2.5, 1.5, 0.0, 1.5, 2.5, 0.0, 0.0, 0.0, 1.0];
    let f = QuadraticForm::new(vec![0.3, -0.2, 1.0], precision).unwrap();
    let model = PotentialModel::new(f, L1Norm::with_dim(1.0, 3)).unwrap();
    let (m, l) = (model.strong_convexity(), model.lipschitz());
    let mut rng = RngStream::new(4, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    for tau in [0.05, 0.1, 0.2, 0.4] {
        let bound = semi_implicit_contraction_bound(tau, m, l);
        let mut t = Transition::new(&model, &ChainConfig::new(KernelKind::SemiImplicit, tau)).unwrap();
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            let mut y: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            let before: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let noise: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            t.step_with_noise(&mut x, &noise, 0.0).unwrap();
            t.step_with_noise(&mut y, &noise, 0.0).unwrap();
            let after: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            worst_excess = worst_excess.max(after / before - bound);
        }
    }
    report(
        4,
        "semi-implicit one-step contraction",
        worst_excess <= 1e-12,
        &format!("max ratio - bound = {worst_excess:.3e} (<= 1e-12) over 4 x 1000 pairs"),
    )
}

fn c05_prox_oracle_equivalence() -> bool {
    let mut rng = RngStream::new(5, 0);
    let (mut l1, mut mixed): (f64, f64) = (0.0, 0.0);
    for _ in 0..10_000 {
        let t = 20.0 * rng.uniform() - 10.0;
        let w = 5.0 * rng.uniform();
        l1 = l1.max((prox_l1(&[t], w)[0] - golden_section_prox(abs_difference, t, w)).abs());
        mixed = mixed.max((prox_mixed_norm(t, w) - golden_section_prox(mixed_norm_difference, t, w)).abs());
    }
    let shape = ImageShape::new(16, 16);
    let mut tv: f64 = 0.0;
    for _ in 0..10 {
        let x: Vec<f64> = (0..shape.len()).map(|_| rng.uniform()).collect();
        let w = 0.02 + 0.2 * rng.uniform();
        let got = prox_tv_pd(&x, shape, w, &TV_ORACLE_PD).unwrap();
        let want = tv_prox_projected_gradient(&x, shape, w, 20_000);
        tv = tv.max(got.z.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    report(
        5,
        "prox oracle equivalence",
        l1 < 1e-8 && mixed < 1e-8 && tv < 1e-3,
        &format!("l1 {l1:.2e}, mixed {mixed:.2e} (< 1e-8); tv {tv:.2e} (< 1e-3)"),
    )
}

fn c06_mala_exactness() -> bool {
    let mean = [1.0, -0.5];
    let cov = [1.0, 0.5, 0.5, 2.0];
    let f = QuadraticForm::gaussian(mean.to_vec(), &cov).unwrap();
    let model = PotentialModel::new(f, ZeroPart).unwrap();
    let cfg = ChainConfig::new(KernelKind::Mala, 0.3)
        .with_iterations(10_000, 1_000_000)
        .with_seed(6, 0);
    let mut acc = MomentAccumulator::new(2);
    let mut cross = 0.0;
    let mut obs = nslang_core::kernels::FnObserver(|_: usize, x: &[f64]| cross += (x[0] - mean[0]) * (x[1] - mean[1]));
    let s = run_chain(&cfg, &model, &mut [&mut acc, &mut obs]).unwrap();
    let n = acc.count() as f64;
    let var = acc.variance().unwrap();
    let m = acc.mean();
    // the analytic mean is used for the cross term; the bias from that is O(1/n)
    let c01 = cross / n;
    let mean_err = (m[0] - mean[0]).abs().max((m[1] - mean[1]).abs());
    let cov_err = (var[0] - cov[0]).abs().max((var[1] - cov[3]).abs()).max((c01 - cov[1]).abs());
    report(
        6,
        "MALA exactness",
        mean_err < 0.01 && cov_err < 0.02,
        &format!(
            "mean err {mean_err:.4} (< 0.01), cov err {cov_err:.4} (< 0.02), acceptance {:.3}",
            s.acceptance_rate.unwrap()
        ),
    )
}

fn c07_exp2d_orderings() -> bool {
    let start = Instant::now();
    let taus = [1e-1, 1e-2];
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut cfg = ExperimentConfig::defaults(Experiment::Exp2dPlain);
        cfg.taus = taus.to_vec();
        cfg.seed = seed;
        let plain = exp2d::run(&cfg, None).unwrap();
        for k in [KernelKind::Explicit, KernelKind::SemiImplicit, KernelKind::Myula] {
            let (a, b) = (plain.plateau_w2(k, 1e-1).unwrap(), plain.plateau_w2(k, 1e-2).unwrap());
            lines.push(format!("seed {seed} plain {k}: {a:.4} -> {b:.4}"));
            if !(b < a) {
                failures.push(format!("seed {seed} plain {k}: plateau(1e-2) {b:.4} >= plateau(1e-1) {a:.4}"));
            }
        }
        let mut cfg = ExperimentConfig::defaults(Experiment::Exp2dOp);
        cfg.taus = taus.to_vec();
        cfg.seed = seed;
        let op = exp2d::run(&cfg, None).unwrap();
        for tau in taus {
            let (e, m) = (
                op.plateau_w2(KernelKind::Explicit, tau).unwrap(),
                op.plateau_w2(KernelKind::Myula, tau).unwrap(),
            );
            lines.push(format!("seed {seed} op tau={tau:e}: explicit {e:.4} myula {m:.4}"));
            if !(m >= e) {
                failures.push(format!("seed {seed} op tau={tau:e}: myula {m:.4} < explicit {e:.4}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    for l in &lines {
        println!("    {l}");
    }
    if secs >= 600.0 {
        failures.push(format!("runtime {secs:.0}s >= 600s"));
    }
    let detail = if failures.is_empty() {
        format!("all orderings hold over 3 seeds, {secs:.0}s (< 600s)")
    } else {
        format!("{} violations: {}; {secs:.0}s", failures.len(), failures.join("; "))
    };
    report(7, "2D plateau orderings", failures.is_empty(), &detail)
}

fn c08_lln_single_chain_vs_ensemble() -> bool {
    let model = mixed_norm_model(5.0, ANCHOR_2D);
    let tau = 1e-2;
    let cfg = ChainConfig::new(KernelKind::Explicit, tau)
        .with_iterations(2_000, 1_000_000)
        .with_seed(8, 0);
    let mut bm = BatchMeans::new(2, 10_000);
    run_chain(&cfg, &model, &mut [&mut bm]).unwrap();
    let (single, single_se) = (bm.mean().to_vec(), bm.std_error().unwrap());

    // 100 independent chains, each averaged over 50 well-separated snapshots
    let snaps: Vec<usize> = (0..50).map(|i| 2_000 + 200 * i).collect();
    let ens = run_ensemble(&cfg.clone().with_seed(9, 0), &model, 100, &snaps).unwrap();
    let mut per_chain = MomentAccumulator::new(2);
    for c in 0..100 {
        let mut avg = [0.0; 2];
        for s in &ens.snapshots {
            avg[0] += s[2 * c] / 50.0;
            avg[1] += s[2 * c + 1] / 50.0;
        }
        per_chain.update(&avg);
    }
    let var = per_chain.variance().unwrap();
    let mut worst_z: f64 = 0.0;
    for i in 0..2 {
        let se = (single_se[i].powi(2) + var[i] / 100.0).sqrt();
        worst_z = worst_z.max((single[i] - per_chain.mean()[i]).abs() / se);
    }
    report(
        8,
        "LLN consistency",
        worst_z <= 3.0,
        &format!(
            "single ({:.4}, {:.4}) vs ensemble ({:.4}, {:.4}), worst |z| {worst_z:.2} (<= 3)",
            single[0],
            single[1],
            per_chain.mean()[0],
            per_chain.mean()[1]
        ),
    )
}

fn c09_imaging_desk_scale() -> bool {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phantom.pgm");
    nslang_core::imageio::write_pgm(&path, &imaging::phantom(ImageShape::new(128, 128))).unwrap();
    let mut cfg = ExperimentConfig::defaults(Experiment::Denoise);
    cfg.image = Some(path);
    cfg.crop = 64;
    cfg.taus = vec![1e-5];
    cfg.burnin = 50_000;
    cfg.samples = 50_000;
    cfg.mala_burnin = 200_000;
    cfg.mala_samples = 200_000;
    let r = imaging::run(&cfg, None).unwrap();
    let run = r.run(KernelKind::Explicit, 1e-5).unwrap();
    let early = run.error_at(1_000).unwrap().mean_l2;
    let last = run.final_error().unwrap().mean_l2;
    let tail: Vec<_> = run.errors.iter().filter(|e| e.k >= 1_000).collect();
    let fit = slope(
        &tail.iter().map(|e| (e.k as f64).ln()).collect::<Vec<_>>(),
        &tail.iter().map(|e| e.mean_l2.ln()).collect::<Vec<_>>(),
    );
    let (spread, _) = r.reference_spread().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let myula = r.run(KernelKind::Myula, 1e-5).and_then(|m| m.final_error()).map(|e| e.mean_l2);
    report(
        9,
        "imaging desk scale (denoise 64x64)",
        last < early && fit < 0.0 && last < 3.0 * spread && secs < 900.0,
        &format!(
            "explicit error {early:.3e} at k=1e3 -> {last:.3e} at k=5e4 (log-log slope {fit:.2}); \
             reference spread {spread:.3e}, gap/spread {:.2} (< 3); myula final {:.3e}; {secs:.0}s (< 900s)",
            last / spread,
            myula.unwrap_or(f64::NAN)
        ),
    )
}

fn c10_property_suite_green() -> bool {
    let cfg = ExperimentConfig::defaults(Experiment::Props);
    let r = props::run(&cfg);
    let failed: Vec<&str> = r.rows.iter().filter(|x| !x.pass).map(|x| x.name.as_str()).collect();
    report(
        10,
        "property suite",
        failed.is_empty() && r.rows.len() == props::registered_count(),
        &format!("{} of {} rows pass {:?}", r.rows.len() - failed.len(), r.rows.len(), failed),
    )
}

fn main() {
    let criteria: [(&str, fn() -> bool); 10] = [
        ("c01_ar1_stationary_variance", c01_ar1_stationary_variance),
        ("c02_bias_halves_with_tau", c02_bias_halves_with_tau),
        ("c03_coupled_contraction", c03_coupled_contraction),
        ("c04_semi_implicit_one_step_contraction", c04_semi_implicit_one_step_contraction),
        ("c05_prox_oracle_equivalence", c05_prox_oracle_equivalence),
        ("c06_mala_exactness", c06_mala_exactness),
        ("c07_exp2d_orderings", c07_exp2d_orderings),
        ("c08_lln_single_chain_vs_ensemble", c08_lln_single_chain_vs_ensemble),
        ("c09_imaging_desk_scale", c09_imaging_desk_scale),
        ("c10_property_suite_green", c10_property_suite_green),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut run, mut passed) = (0, 0);
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        run += 1;
        if check() {
            passed += 1;
        }
    }
    println!("acceptance: {passed}/{run} criteria pass");
    let strict = std::env::var("NSLANG_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < run {
        std::process::exit(1);
    }
}

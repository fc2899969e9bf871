//! The invariant suite: one report row per registered property.

use std::fmt::Write as _;

use nslang_core::diagnostics::{
    transport_plan, wasserstein2_grid, GridMeasure, GridSpec, MomentAccumulator,
};
use nslang_core::imageio::{decode_pgm, encode_pgm, sci, GrayImage};
use nslang_core::kernels::{mala_log_ratio, semi_implicit_contraction_bound, ChainConfig, KernelKind, Transition};
use nslang_core::operators::{ConvOp, ImageShape};
use nslang_core::potential::{
    check_convexity, check_nonsmooth_part, check_quadratic_growth, check_smooth_part, CheckOutcome, ZeroPart,
};
use nslang_core::potentials::{
    mixed_norm_model, mixed_norm_op_model, quadratic_2d, BlurredData, ImagingPotential, L1Norm, MixedNorm,
    MixedNormOfDiff, QuadraticForm, TotalVariation, ANCHOR_2D,
};
use nslang_core::prox::{prox_l1, prox_mixed_norm, prox_tv_pd, PdSolverConfig};
use nslang_core::{NonSmoothPart, PotentialModel, RngStream, SmoothPart, State};

use crate::config::ExperimentConfig;
use crate::oracle::{abs_difference, golden_section_prox, mixed_norm_difference, tv_prox_projected_gradient};

const THETA: f64 = 5.0;
const SIGMA: f64 = 0.05;
const DELTA: f64 = 1e-3;
const SMALL: ImageShape = ImageShape { rows: 8, cols: 8 };

struct Ctx {
    probes: usize,
    inject_m: Option<f64>,
}

impl Ctx {
    /// Probe budget for checks that run an iterative prox per probe.
    fn iterative_probes(&self) -> usize {
        (self.probes / 100).max(20)
    }
}

type Check = fn(&Ctx, &mut RngStream) -> CheckOutcome;

/// Accurate inner solver for checks that compare against closed forms.
fn tight_pd(norm_sq: f64) -> PdSolverConfig {
    PdSolverConfig::for_norm_sq(norm_sq).with_tol(1e-10).with_max_iters(50_000)
}
const TIGHT_PROX_TOL: f64 = 1e-7;

fn random_image(rng: &mut RngStream, shape: ImageShape) -> Vec<f64> {
    (0..shape.len()).map(|_| rng.uniform()).collect()
}

fn denoise_model(rng: &mut RngStream) -> PotentialModel {
    ImagingPotential::denoising(random_image(rng, SMALL), SMALL, SIGMA, 30.0)
        .with_solver(tight_pd(8.0))
        .build()
        .expect("8x8 denoising model")
}

fn deconv_model(rng: &mut RngStream) -> PotentialModel {
    ImagingPotential::deconvolution(random_image(rng, SMALL), SMALL, SIGMA, 20.0, DELTA)
        .with_solver(tight_pd(8.0))
        .build()
        .expect("8x8 deconvolution model")
}

fn convexity(name: &str, model: &PotentialModel, ctx: &Ctx, rng: &mut RngStream) -> CheckOutcome {
    let r = check_convexity(model, ctx.probes, rng);
    CheckOutcome::at_least(name, r.min_gap, -nslang_core::potential::PROBE_TOL)
}

fn pick(mut rows: Vec<CheckOutcome>, idx: usize, name: &str) -> CheckOutcome {
    let mut r = rows.swap_remove(idx);
    r.name = name.to_string();
    r
}

fn smooth(name: &str, f: &dyn SmoothPart, idx: usize, ctx: &Ctx, rng: &mut RngStream) -> CheckOutcome {
    pick(check_smooth_part(f, ctx.probes, rng), idx, name)
}

fn nonsmooth(
    name: &str,
    g: &dyn NonSmoothPart,
    d: usize,
    idx: usize,
    probes: usize,
    prox_tol: f64,
    rng: &mut RngStream,
) -> CheckOutcome {
    pick(check_nonsmooth_part(g, d, probes, 0.7, prox_tol, rng), idx, name)
}

fn blurred(rng: &mut RngStream) -> BlurredData {
    BlurredData::new(ConvOp::gaussian(SMALL), random_image(rng, SMALL), SIGMA, DELTA).expect("blurred data")
}

fn tv() -> TotalVariation {
    TotalVariation::tv(SMALL, 2.0).with_solver(tight_pd(8.0))
}

fn mixed_of_diff() -> MixedNormOfDiff {
    MixedNormOfDiff::mixed_of_diff(THETA).with_solver(tight_pd(2.0))
}

fn scalar_prox_error(rng: &mut RngStream, n: usize, mixed: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let t = 20.0 * rng.uniform() - 10.0;
        let w = 5.0 * rng.uniform();
        let (got, want) = if mixed {
            (prox_mixed_norm(t, w), golden_section_prox(mixed_norm_difference, t, w))
        } else {
            (prox_l1(&[t], w)[0], golden_section_prox(abs_difference, t, w))
        };
        worst = worst.max((got - want).abs());
    }
    worst
}

fn semi_implicit_ratio_excess(ctx: &Ctx, rng: &mut RngStream) -> f64 {
    // m = 1, L = 4
    let precision = vec![2.5, 1.5, 0.0, 1.5, 2.5, 0.0, 0.0, 0.0, 1.0];
    let f = QuadraticForm::new(vec![0.3, -0.2, 1.0], precision).expect("spd");
    let model = PotentialModel::new(f, L1Norm::with_dim(1.0, 3)).expect("model");
    let (m, l) = (model.strong_convexity(), model.lipschitz());
    let mut worst = f64::NEG_INFINITY;
    for tau in [0.05, 0.1, 0.2, 0.4] {
        let bound = semi_implicit_contraction_bound(tau, m, l);
        let cfg = ChainConfig::new(KernelKind::SemiImplicit, tau);
        let mut t = Transition::new(&model, &cfg).expect("valid step");
        for _ in 0..(ctx.probes / 10).max(100) {
            let mut x: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            let mut y: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            let before = dist(&x, &y);
            let noise: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            t.step_with_noise(&mut x, &noise, 0.0).expect("step");
            t.step_with_noise(&mut y, &noise, 0.0).expect("step");
            worst = worst.max(dist(&x, &y) / before - bound);
        }
    }
    worst
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mala_antisymmetry(ctx: &Ctx, rng: &mut RngStream) -> f64 {
    let model = mixed_norm_model(THETA, ANCHOR_2D);
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.probes {
        let x = [3.0 * rng.normal(), 3.0 * rng.normal()];
        let y = [3.0 * rng.normal(), 3.0 * rng.normal()];
        let tau = 0.01 + rng.uniform();
        let (a, b) = (mala_log_ratio(&model, tau, &x, &y), mala_log_ratio(&model, tau, &y, &x));
        worst = worst.max((a + b).abs() / (1.0 + a.abs()));
    }
    worst
}

/// Largest difference between `kind` and the explicit kernel under shared
/// noise for a model without a non-smooth part.
fn smooth_kernels_agree(kind: KernelKind, rng: &mut RngStream) -> f64 {
    let model = PotentialModel::new(quadratic_2d(ANCHOR_2D), ZeroPart).expect("model");
    let tau = 0.05;
    let mut a = Transition::new(&model, &ChainConfig::new(KernelKind::Explicit, tau)).expect("explicit");
    let mut b = Transition::new(&model, &ChainConfig::new(kind, tau)).expect("kernel");
    let mut worst: f64 = 0.0;
    let (mut x, mut y) = (State::zeros(2), State::zeros(2));
    for _ in 0..1000 {
        let noise = [rng.normal(), rng.normal()];
        a.step_with_noise(&mut x, &noise, 0.0).expect("step");
        b.step_with_noise(&mut y, &noise, 0.0).expect("step");
        worst = worst.max(dist(&x, &y));
    }
    worst
}

fn random_measure(rng: &mut RngStream, spec: GridSpec) -> GridMeasure {
    let raw: Vec<f64> = (0..spec.n_bins())
        .map(|_| if rng.uniform() < 0.3 { 0.0 } else { rng.uniform() })
        .collect();
    GridMeasure::normalized(spec, raw).expect("nonempty weights")
}

const N_METRIC: usize = 20;

fn w2_asymmetry(rng: &mut RngStream) -> f64 {
    let spec = GridSpec::square(-1.0, 1.0, 5).expect("grid");
    let mut worst: f64 = 0.0;
    for _ in 0..N_METRIC {
        let (p, q) = (random_measure(rng, spec), random_measure(rng, spec));
        let d = wasserstein2_grid(&p, &q).expect("w2") - wasserstein2_grid(&q, &p).expect("w2");
        worst = worst.max(d.abs());
    }
    worst
}

fn w2_triangle_excess(rng: &mut RngStream) -> f64 {
    let spec = GridSpec::square(-1.0, 1.0, 5).expect("grid");
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..N_METRIC {
        let (p, q, r) = (random_measure(rng, spec), random_measure(rng, spec), random_measure(rng, spec));
        let w = |a: &GridMeasure, b: &GridMeasure| wasserstein2_grid(a, b).expect("w2");
        worst = worst.max(w(&p, &r) - w(&p, &q) - w(&q, &r));
    }
    worst
}

/// Primal cost minus dual objective, plus the worst dual infeasibility.
fn transport_duality_gap(rng: &mut RngStream) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..N_METRIC {
        let (n, m) = (2 + (rng.uniform() * 12.0) as usize, 2 + (rng.uniform() * 12.0) as usize);
        let pts = |k: usize, rng: &mut RngStream| -> Vec<[f64; 2]> { (0..k).map(|_| [rng.normal(), rng.normal()]).collect() };
        let (xa, xb) = (pts(n, rng), pts(m, rng));
        let mass = |k: usize, rng: &mut RngStream| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let (a, b) = (mass(n, rng), mass(m, rng));
        let plan = transport_plan(&a, &xa, &b, &xb).expect("plan");
        let dual: f64 = a.iter().zip(&plan.dual_source).map(|(w, u)| w * u).sum::<f64>()
            + b.iter().zip(&plan.dual_target).map(|(w, v)| w * v).sum::<f64>();
        worst = worst.max((plan.cost - dual).abs());
        for (i, p) in xa.iter().enumerate() {
            for (j, q) in xb.iter().enumerate() {
                let c = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                worst = worst.max(plan.dual_source[i] + plan.dual_target[j] - c);
            }
        }
    }
    worst
}

fn moment_merge_error(rng: &mut RngStream) -> f64 {
    let xs: Vec<[f64; 3]> = (0..500).map(|_| [rng.normal(), 5.0 + rng.normal(), 1e3 * rng.normal()]).collect();
    let mut whole = MomentAccumulator::new(3);
    let (mut left, mut right) = (MomentAccumulator::new(3), MomentAccumulator::new(3));
    for (i, x) in xs.iter().enumerate() {
        whole.update(x);
        if i < 173 {
            left.update(x);
        } else {
            right.update(x);
        }
    }
    left.merge(&right).expect("same dim");
    let (m1, v1) = whole.finalize().expect("n >= 2");
    let (m2, v2) = left.finalize().expect("n >= 2");
    let rel = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / (1.0 + x.abs()))
            .fold(0.0, f64::max)
    };
    rel(&m1, &m2).max(rel(&v1, &v2))
}

/// Worst pixel error of a PGM encode/decode cycle, in units of one grey level.
fn pgm_roundtrip(rng: &mut RngStream) -> f64 {
    let shape = ImageShape::new(7, 5);
    let data: Vec<f64> = (0..shape.len()).map(|_| rng.uniform()).collect();
    let img = GrayImage::new(shape, data).expect("shape");
    let bytes = encode_pgm(&img);
    let back = decode_pgm(&bytes).expect("decode");
    if back.shape != shape || encode_pgm(&back) != bytes {
        return f64::INFINITY;
    }
    255.0 * img.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// The sampling default stops at a change of 1e-4, which leaves errors of a
/// few 1e-3; the equivalence check runs the same solver to 1e-6.
pub const TV_ORACLE_PD: PdSolverConfig = PdSolverConfig {
    max_iters: 20_000,
    stop_tol: 1e-6,
    primal_step: 0.353_553_390_593_273_8,
    dual_step: 0.353_553_390_593_273_8,
};

fn tv_oracle_error(rng: &mut RngStream) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let x = random_image(rng, SMALL);
        let w = 0.02 + 0.2 * rng.uniform();
        let got = prox_tv_pd(&x, SMALL, w, &TV_ORACLE_PD).expect("prox");
        let want = tv_prox_projected_gradient(&x, SMALL, w, 20_000);
        worst = worst.max(got.z.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    worst
}

/// Every registered property, in report order.
fn registry() -> Vec<(&'static str, Check)> {
    vec![
        ("convexity mixed_norm", |c, r| {
            let mut model = mixed_norm_model(THETA, ANCHOR_2D);
            if let Some(m) = c.inject_m {
                model = model.with_declared_m(m);
            }
            convexity("convexity mixed_norm", &model, c, r)
        }),
        ("convexity mixed_norm_op", |c, r| {
            convexity("convexity mixed_norm_op", &mixed_norm_op_model(THETA, ANCHOR_2D, None), c, r)
        }),
        ("convexity denoise", |c, r| {
            let model = denoise_model(r);
            convexity("convexity denoise", &model, c, r)
        }),
        ("convexity deconv (m = 2 delta)", |c, r| {
            let model = deconv_model(r);
            convexity("convexity deconv (m = 2 delta)", &model, c, r)
        }),
        ("smooth quadratic_2d monotone", |c, r| {
            smooth("smooth quadratic_2d monotone", &quadratic_2d(ANCHOR_2D), 0, c, r)
        }),
        ("smooth quadratic_2d lipschitz", |c, r| {
            smooth("smooth quadratic_2d lipschitz", &quadratic_2d(ANCHOR_2D), 1, c, r)
        }),
        ("smooth blurred_data monotone", |c, r| {
            let f = blurred(r);
            smooth("smooth blurred_data monotone", &f, 0, c, r)
        }),
        ("smooth blurred_data lipschitz", |c, r| {
            let f = blurred(r);
            smooth("smooth blurred_data lipschitz", &f, 1, c, r)
        }),
        ("mixed_norm subgradient inequality", |c, r| {
            nonsmooth("mixed_norm subgradient inequality", &MixedNorm::new(THETA), 2, 0, c.probes, 0.0, r)
        }),
        ("mixed_norm linear growth", |c, r| {
            nonsmooth("mixed_norm linear growth", &MixedNorm::new(THETA), 2, 1, c.probes, 0.0, r)
        }),
        ("mixed_norm prox nonexpansive", |c, r| {
            nonsmooth("mixed_norm prox nonexpansive", &MixedNorm::new(THETA), 2, 2, c.probes, 0.0, r)
        }),
        ("mixed_norm prox reduces norm", |c, r| {
            nonsmooth("mixed_norm prox reduces norm", &MixedNorm::new(THETA), 2, 3, c.probes, 0.0, r)
        }),
        ("l1 subgradient inequality", |c, r| {
            nonsmooth("l1 subgradient inequality", &L1Norm::with_dim(1.0, 3), 3, 0, c.probes, 0.0, r)
        }),
        ("l1 linear growth", |c, r| {
            nonsmooth("l1 linear growth", &L1Norm::with_dim(1.0, 3), 3, 1, c.probes, 0.0, r)
        }),
        ("l1 prox nonexpansive", |c, r| {
            nonsmooth("l1 prox nonexpansive", &L1Norm::with_dim(1.0, 3), 3, 2, c.probes, 0.0, r)
        }),
        ("l1 prox reduces norm", |c, r| {
            nonsmooth("l1 prox reduces norm", &L1Norm::with_dim(1.0, 3), 3, 3, c.probes, 0.0, r)
        }),
        ("mixed_of_diff subgradient inequality", |c, r| {
            let n = c.iterative_probes();
            nonsmooth("mixed_of_diff subgradient inequality", &mixed_of_diff(), 2, 0, n, TIGHT_PROX_TOL, r)
        }),
        ("mixed_of_diff linear growth", |c, r| {
            let n = c.iterative_probes();
            nonsmooth("mixed_of_diff linear growth", &mixed_of_diff(), 2, 1, n, TIGHT_PROX_TOL, r)
        }),
        ("mixed_of_diff prox nonexpansive", |c, r| {
            let n = c.iterative_probes();
            nonsmooth("mixed_of_diff prox nonexpansive", &mixed_of_diff(), 2, 2, n, TIGHT_PROX_TOL, r)
        }),
        ("mixed_of_diff prox reduces norm", |c, r| {
            let n = c.iterative_probes();
            nonsmooth("mixed_of_diff prox reduces norm", &mixed_of_diff(), 2, 3, n, TIGHT_PROX_TOL, r)
        }),
        ("tv subgradient inequality", |c, r| {
            nonsmooth("tv subgradient inequality", &tv(), SMALL.len(), 0, c.iterative_probes(), TIGHT_PROX_TOL, r)
        }),
        ("tv linear growth", |c, r| {
            nonsmooth("tv linear growth", &tv(), SMALL.len(), 1, c.iterative_probes(), TIGHT_PROX_TOL, r)
        }),
        ("tv prox nonexpansive", |c, r| {
            nonsmooth("tv prox nonexpansive", &tv(), SMALL.len(), 2, c.iterative_probes(), TIGHT_PROX_TOL, r)
        }),
        ("tv prox reduces norm", |c, r| {
            nonsmooth("tv prox reduces norm", &tv(), SMALL.len(), 3, c.iterative_probes(), TIGHT_PROX_TOL, r)
        }),
        ("quadratic growth mixed_norm", |c, r| {
            let mut o = check_quadratic_growth(&mixed_norm_model(THETA, ANCHOR_2D), c.probes, r);
            o.name = "quadratic growth mixed_norm".into();
            o
        }),
        ("quadratic growth mixed_norm_op", |c, r| {
            let mut o = check_quadratic_growth(&mixed_norm_op_model(THETA, ANCHOR_2D, None), c.probes, r);
            o.name = "quadratic growth mixed_norm_op".into();
            o
        }),
        ("prox_l1 vs golden section", |c, r| {
            CheckOutcome::at_most("prox_l1 vs golden section", scalar_prox_error(r, c.probes, false), 1e-8)
        }),
        ("prox_mixed_norm vs golden section", |c, r| {
            CheckOutcome::at_most("prox_mixed_norm vs golden section", scalar_prox_error(r, c.probes, true), 1e-8)
        }),
        ("prox_tv_pd vs projected gradient", |_, r| {
            CheckOutcome::at_most("prox_tv_pd vs projected gradient", tv_oracle_error(r), 1e-3)
        }),
        ("semi_implicit coupled ratio excess", |c, r| {
            CheckOutcome::at_most("semi_implicit coupled ratio excess", semi_implicit_ratio_excess(c, r), 1e-12)
        }),
        ("mala log ratio antisymmetry", |c, r| {
            CheckOutcome::at_most("mala log ratio antisymmetry", mala_antisymmetry(c, r), 1e-9)
        }),
        ("semi_implicit equals explicit without G", |_, r| {
            let d = smooth_kernels_agree(KernelKind::SemiImplicit, r);
            CheckOutcome::at_most("semi_implicit equals explicit without G", d, 0.0)
        }),
        ("myula equals explicit without G", |_, r| {
            let d = smooth_kernels_agree(KernelKind::Myula, r);
            CheckOutcome::at_most("myula equals explicit without G", d, 1e-12)
        }),
        ("w2 symmetric", |_, r| CheckOutcome::at_most("w2 symmetric", w2_asymmetry(r), 0.0)),
        ("w2 triangle inequality excess", |_, r| {
            CheckOutcome::at_most("w2 triangle inequality excess", w2_triangle_excess(r), 1e-9)
        }),
        ("transport duality gap", |_, r| {
            CheckOutcome::at_most("transport duality gap", transport_duality_gap(r), 1e-9)
        }),
        ("moment merge vs sequential", |_, r| {
            CheckOutcome::at_most("moment merge vs sequential", moment_merge_error(r), 1e-12)
        }),
        ("pgm roundtrip", |_, r| CheckOutcome::at_most("pgm roundtrip", pgm_roundtrip(r), 0.5 + 1e-9)),
    ]
}

pub fn registered_count() -> usize {
    registry().len()
}

#[derive(Clone, Debug)]
pub struct PropsReport {
    pub rows: Vec<CheckOutcome>,
}

impl PropsReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.failures() == 0
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("name,observed,bound,pass\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.name, sci(r.observed), sci(r.bound), r.pass);
        }
        s
    }
}

/// Run every property with its own random stream.
pub fn run(cfg: &ExperimentConfig) -> PropsReport {
    let ctx = Ctx {
        probes: cfg.probes,
        inject_m: cfg.inject_m,
    };
    let rows = registry()
        .into_iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = RngStream::new(cfg.seed, i as u64);
            let row = check(&ctx, &mut rng);
            debug_assert_eq!(row.name, name);
            log::info!("{}: observed {:e} bound {:e} {}", name, row.observed, row.bound, if row.pass { "ok" } else { "FAIL" });
            row
        })
        .collect();
    PropsReport { rows }
}

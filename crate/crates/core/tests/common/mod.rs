//! Reference computations shared by the integration tests and the
//! acceptance harness. Each returns a measured error so callers can both
//! assert on it and report it.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssgl_imc::evaluation::{auc, auc_pairwise};
use ssgl_imc::optimizer::{compute_m, grad_row_a, grad_row_b, log_likelihood};
use ssgl_imc::ssgl::{lambda_star, pen_value_from_norm, prox_refined, threshold_upper, MixingWeight};
use ssgl_imc::{InteractionMatrix, SideFeatures, SsglSide};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || sd * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_labels(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> InteractionMatrix {
    let labels = Array2::from_shape_simple_fn((rows, cols), || u8::from(rng.random_bool(p)));
    InteractionMatrix::from_dense(labels).unwrap()
}

/// A small random problem: `(Y, U, V, A, B, ξ)`.
pub struct SmallProblem {
    pub y: InteractionMatrix,
    pub u: SideFeatures<f64>,
    pub v: SideFeatures<f64>,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub xi: f64,
}

pub fn small_problem(rng: &mut ChaCha8Rng) -> SmallProblem {
    let i = rng.random_range(1..=6);
    let j = rng.random_range(1..=6);
    let d1 = rng.random_range(1..=4);
    let d2 = rng.random_range(1..=4);
    let r = rng.random_range(1..=3);
    let xi = if rng.random_bool(0.5) { 1.0 } else { 10.0 };
    SmallProblem {
        y: random_labels(rng, i, j, 0.4),
        u: SideFeatures::new(normal_matrix(rng, i, d1, 1.0), None).unwrap(),
        v: SideFeatures::new(normal_matrix(rng, j, d2, 1.0), None).unwrap(),
        a: normal_matrix(rng, d1, r, 1.0),
        b: normal_matrix(rng, d2, r, 1.0),
        xi,
    }
}

fn neg_loglik(p: &SmallProblem, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    -log_likelihood(&compute_m(&p.u, a, b, &p.v).unwrap(), &p.y, p.xi)
}

/// Five-point central difference of `f` at `x`.
fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Largest relative error between the analytic row gradients and finite
/// differences of the negated log-likelihood, over every component with
/// magnitude above `1e-8`.
pub fn gradient_rel_error(p: &SmallProblem) -> f64 {
    let mut worst: f64 = 0.0;
    let mut compare = |analytic: f64, numeric: f64| {
        if analytic.abs().max(numeric.abs()) > 1e-8 {
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
        }
    };
    for k in 0..p.a.nrows() {
        let g = grad_row_a(k, &p.u, &p.v, &p.a, &p.b, &p.y, p.xi).unwrap();
        for c in 0..p.a.ncols() {
            let fd = derivative(
                |x| {
                    let mut a = p.a.clone();
                    a[[k, c]] = x;
                    neg_loglik(p, &a, &p.b)
                },
                p.a[[k, c]],
            );
            compare(g[c], fd);
        }
    }
    for l in 0..p.b.nrows() {
        let g = grad_row_b(l, &p.u, &p.v, &p.a, &p.b, &p.y, p.xi).unwrap();
        for c in 0..p.b.ncols() {
            let fd = derivative(
                |x| {
                    let mut b = p.b.clone();
                    b[[l, c]] = x;
                    neg_loglik(p, &p.a, &b)
                },
                p.b[[l, c]],
            );
            compare(g[c], fd);
        }
    }
    worst
}

/// One random instance of the proximal problem.
#[derive(Debug, Clone)]
pub struct ProxCase {
    pub z: Array1<f64>,
    pub theta: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta: f64,
}

pub fn prox_case(rng: &mut ChaCha8Rng) -> ProxCase {
    let r = rng.random_range(1..=5);
    let lambda1 = 10f64.powf(rng.random_range(-1.0..0.5));
    let lambda0 = lambda1 * 10f64.powf(rng.random_range(0.0..3.0));
    let theta = rng.random_range(0.02..0.98);
    let eta = 10f64.powf(rng.random_range(-5.0..-1.0));
    let side = SsglSide::new(lambda0, lambda1, r).unwrap();
    let delta = threshold_upper(MixingWeight::new(theta).unwrap(), &side, eta);
    let dir = Array1::from_shape_simple_fn(r, || rng.sample::<f64, _>(StandardNormal));
    let norm = delta * 10f64.powf(rng.random_range(-1.0..1.5));
    let z = &dir * (norm / dir.dot(&dir).sqrt());
    ProxCase {
        z,
        theta,
        lambda0,
        lambda1,
        eta,
    }
}

/// Proximal objective along the ray through `z`: `(c - ‖z‖)²/(2η) - pen(c)`.
/// Its derivative in `c` is `(c - ‖z‖)/η + λ⋆(c)`.
pub fn prox_objective(c: f64, zn: f64, theta: MixingWeight<f64>, side: &SsglSide<f64>, eta: f64) -> f64 {
    (c - zn).powi(2) / (2.0 * eta) - pen_value_from_norm(c, theta, side)
}

pub struct ProxCheck {
    pub skipped: bool,
    /// `objective(prox output) - min over the grid`; positive means the
    /// scan found a better point.
    pub gap: f64,
}

/// Compares `prox_refined` against a 10⁴-point scan of the proximal
/// objective on `[0, ‖z‖]`. The previous row is placed at the fixed point
/// `c = (‖z‖ - η λ⋆(c))₊` reached from the scan's minimizer, so the
/// adaptive weight is the one evaluated at the mode being compared.
pub fn prox_check(case: &ProxCase) -> ProxCheck {
    let side = SsglSide::new(case.lambda0, case.lambda1, case.z.len()).unwrap();
    let theta = MixingWeight::new(case.theta).unwrap();
    let zn = case.z.dot(&case.z).sqrt();
    let delta = threshold_upper(theta, &side, case.eta);
    if (zn - delta).abs() <= 1e-6 {
        return ProxCheck { skipped: true, gap: 0.0 };
    }
    let n = 10_000;
    let (mut best_c, mut best) = (0.0, f64::INFINITY);
    for s in 0..=n {
        let c = zn * s as f64 / n as f64;
        let f = prox_objective(c, zn, theta, &side, case.eta);
        if f < best {
            best = f;
            best_c = c;
        }
    }
    let mut c = best_c;
    for _ in 0..200 {
        let next = (zn - case.eta * lambda_star(c, theta, &side)).max(0.0);
        if (next - c).abs() <= 1e-15 * zn {
            c = next;
            break;
        }
        c = next;
    }
    let prev = &case.z * (c / zn);
    let out = prox_refined(case.z.view(), prev.view(), theta, &side, case.eta);
    let out_norm = out.dot(&out).sqrt();
    let f_out = prox_objective(out_norm, zn, theta, &side, case.eta);
    ProxCheck {
        skipped: false,
        gap: f_out - best,
    }
}

/// `|ℓ_ξ - ℓ_1(replicated)|` on a random 2×2 instance with integer `ξ`.
pub fn duplication_error(rng: &mut ChaCha8Rng) -> f64 {
    let xi = [2.0, 3.0, 5.0][rng.random_range(0..3)];
    let y = random_labels(rng, 2, 2, 0.5);
    let m = normal_matrix(rng, 2, 2, 2.0);
    let weighted = log_likelihood(&m, &y, xi);
    let mut cells_m = Vec::new();
    let mut cells_y = Vec::new();
    for ((i, j), &label) in y.labels().indexed_iter() {
        let copies = if label == 1 { xi as usize } else { 1 };
        for _ in 0..copies {
            cells_m.push(m[[i, j]]);
            cells_y.push(label);
        }
    }
    let n = cells_m.len();
    let m1 = Array2::from_shape_vec((1, n), cells_m).unwrap();
    let y1 = InteractionMatrix::from_dense(Array2::from_shape_vec((1, n), cells_y).unwrap()).unwrap();
    (weighted - log_likelihood(&m1, &y1, 1.0)).abs()
}

/// Random scores with deliberate ties and labels of both classes.
pub fn auc_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=50);
    let levels = rng.random_range(1..=n.max(2));
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
    labels[0] = 1;
    labels[n - 1] = 0;
    (scores, labels)
}

pub fn auc_error(scores: &[f64], labels: &[u8]) -> f64 {
    (auc(scores, labels).unwrap() - auc_pairwise(scores, labels).unwrap()).abs()
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the sign convention fixed by `diag(R) > 0`.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, r: usize) -> Array2<f64> {
    let g = nalgebra::DMatrix::from_fn(r, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, rr) = (qr.q(), qr.r());
    Array2::from_shape_fn((r, r), |(i, j)| q[(i, j)] * rr[(j, j)].signum())
}

/// A small simulated problem fitted for a fixed number of sweeps, with
/// enough prior weight that some rows end up exactly zero.
pub struct SmallFit {
    pub u: SideFeatures<f64>,
    pub v: SideFeatures<f64>,
    pub y: InteractionMatrix,
    pub factors: ssgl_imc::LatentFactors<f64>,
}

pub fn small_fit(seed: u64) -> SmallFit {
    use ssgl_imc::optimizer::{fit, Problem};
    use ssgl_imc::synth::{apply_masking, generate_truth, SimConfig};
    let cfg = SimConfig {
        n_rows: 30,
        n_cols: 40,
        d1: 12,
        d2: 10,
        r_true: 3,
        feature_sd: 0.3,
        signal_scale: 1.0 / 0.3,
        observe_frac: 0.6,
        zero_mix_frac: 0.0,
        seed,
    };
    let truth = generate_truth(&cfg).unwrap();
    let y = apply_masking(&truth.y_full, &cfg).unwrap().without_test_set();
    let hyper = ssgl_imc::HyperParams {
        r: 3,
        eta: 1e-2,
        max_iters: 60,
        seed,
        ..ssgl_imc::HyperParams::default()
    }
    .with_lambda0(40.0);
    let problem = Problem::new(&y, &truth.u, &truth.v).unwrap();
    let factors = fit(&problem, &hyper, ssgl_imc::InitStrategy::RandomNormal).unwrap().factors;
    SmallFit {
        u: truth.u,
        v: truth.v,
        y,
        factors,
    }
}

pub struct RotationCheck {
    /// Largest absolute change of any predicted probability.
    pub max_diff: f64,
    /// Whether every rotation kept the exact set of zero rows.
    pub pattern_kept: bool,
}

/// Applies `n` random orthogonal rotations `A ↦ AQ`, `B ↦ BQ` and compares
/// predictions and zero-row patterns with the unrotated factors.
pub fn rotation_check(rng: &mut ChaCha8Rng, fitted: &SmallFit, n: usize) -> RotationCheck {
    use ssgl_imc::predictor::probabilities;
    let base = probabilities(&fitted.u, &fitted.v, &fitted.factors).unwrap();
    let (za, zb) = (fitted.factors.active_rows_a(), fitted.factors.active_rows_b());
    let mut out = RotationCheck {
        max_diff: 0.0,
        pattern_kept: true,
    };
    for _ in 0..n {
        let q = random_orthogonal(rng, fitted.factors.rank());
        let rotated = ssgl_imc::LatentFactors::new(fitted.factors.a.dot(&q), fitted.factors.b.dot(&q)).unwrap();
        let p = probabilities(&fitted.u, &fitted.v, &rotated).unwrap();
        let diff = (&p - &base).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        out.max_diff = out.max_diff.max(diff);
        out.pattern_kept &= rotated.active_rows_a() == za && rotated.active_rows_b() == zb;
    }
    out
}

/// Evaluates `p⋆`, `λ⋆` and `pen(0)` at `n` random points and returns a
/// description of every invariant violation found.
pub fn ssgl_invariant_violations(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    use ssgl_imc::ssgl::{p_star, pen_value};
    let mut bad = Vec::new();
    for _ in 0..n {
        let l1 = 10f64.powf(rng.random_range(-2.0..1.0));
        let l0 = l1 * 10f64.powf(rng.random_range(0.0..4.0));
        let r = rng.random_range(1..=300);
        let side = SsglSide::new(l0, l1, r).unwrap();
        let theta = MixingWeight::new(rng.random_range(1e-6..1.0 - 1e-6)).unwrap();
        let x = 10f64.powf(rng.random_range(-4.0..3.0));
        let dx = x * rng.random_range(0.0..2.0);
        let ctx = format!("λ0={l0} λ1={l1} r={r} θ={} x={x} dx={dx}", theta.get());
        let p = p_star(x, theta, &side);
        if !(0.0..=1.0).contains(&p) {
            bad.push(format!("p⋆ = {p} ({ctx})"));
        }
        let l = lambda_star(x, theta, &side);
        if !(l1 <= l && l <= l0) {
            bad.push(format!("λ⋆ = {l} outside [λ1, λ0] ({ctx})"));
        }
        if l0 > l1 && lambda_star(x + dx, theta, &side) > l {
            bad.push(format!("λ⋆ increased ({ctx})"));
        }
        if pen_value(Array1::<f64>::zeros(r).view(), theta, &side) != 0.0 {
            bad.push(format!("pen(0) ≠ 0 ({ctx})"));
        }
    }
    bad
}

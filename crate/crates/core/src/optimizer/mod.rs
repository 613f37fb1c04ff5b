//! Coordinate ascent for the posterior mode.
//!
//! Each sweep visits every row of `A`, refreshes the mixing weights of that
//! side, then does the same for `B`. A row update is one accelerated
//! proximal gradient step: extrapolate with momentum, take a gradient step
//! on the negated likelihood, then apply the refined SSGL prox (or a plain
//! ridge step for the baseline).

mod init;
mod likelihood;
mod workspace;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

pub use init::{init_factors, InitStrategy, INIT_STREAM};
pub use likelihood::{compute_m, grad_row_a, grad_row_b, log_likelihood, residual_matrix, weight_matrix};

use crate::data::{row_is_nonzero, HyperParams, InteractionMatrix, LatentFactors, SideFeatures};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::ssgl::{pen_value, prox_refined, MixingWeight, SsglSide};
use workspace::Workspace;

/// Training data: labels plus both side-feature matrices.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a, F> {
    pub y: &'a InteractionMatrix,
    pub u: &'a SideFeatures<F>,
    pub v: &'a SideFeatures<F>,
}

impl<'a, F: Scalar> Problem<'a, F> {
    pub fn new(y: &'a InteractionMatrix, u: &'a SideFeatures<F>, v: &'a SideFeatures<F>) -> Result<Self> {
        if u.n_entities() != y.n_rows() || v.n_entities() != y.n_cols() {
            return Err(Error::Dimension(format!(
                "Y is {}×{} but U has {} rows and V has {}",
                y.n_rows(),
                y.n_cols(),
                u.n_entities(),
                v.n_entities()
            )));
        }
        Ok(Self { y, u, v })
    }

    pub fn d1(&self) -> usize {
        self.u.n_features()
    }

    pub fn d2(&self) -> usize {
        self.v.n_features()
    }
}

/// `curr + ((t - 2) / (t + 1)) (curr - prev)`.
pub fn momentum_extrapolate<F: Scalar>(curr: ArrayView1<F>, prev: ArrayView1<F>, t: usize) -> Array1<F> {
    debug_assert!(t >= 2);
    let coef = F::lit(t.saturating_sub(2) as f64) / F::lit(t as f64 + 1.0);
    let mut out = curr.to_owned();
    if coef != F::zero() {
        out.zip_mut_with(&prev, |c, &p| *c = *c + coef * (*c - p));
    }
    out
}

/// `(α + #nonzero rows) / (α + β + d)`.
pub fn update_theta<F: Scalar>(factors: &Array2<F>, alpha: F, beta: F) -> F {
    let active = factors
        .axis_iter(Axis(0))
        .filter(|row| row_is_nonzero(*row))
        .count();
    (alpha + F::lit(active as f64)) / (alpha + beta + F::lit(factors.nrows() as f64))
}

/// Penalty applied to every row of `A` and `B`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RowPenalty {
    /// Spike-and-slab group lasso with beta-prior mixing weights.
    #[default]
    Ssgl,
    /// `(γ/2)‖row‖²`, no thresholding.
    Ridge { gamma: f64 },
}

/// Log-posterior up to an additive constant: weighted log-likelihood plus
/// the centered SSGL log-prior of every row.
pub fn log_posterior<F: Scalar>(
    problem: &Problem<'_, F>,
    factors: &LatentFactors<F>,
    hyper: &HyperParams,
    theta_a: &[F],
    theta_b: &[F],
) -> Result<F> {
    let m = compute_m(problem.u, &factors.a, &factors.b, problem.v)?;
    let ll = log_likelihood(&m, problem.y, F::lit(hyper.xi));
    let (side_a, side_b) = sides(hyper)?;
    Ok(ll + ssgl_log_prior(&factors.a, theta_a, &side_a)? + ssgl_log_prior(&factors.b, theta_b, &side_b)?)
}

fn ssgl_log_prior<F: Scalar>(m: &Array2<F>, theta: &[F], side: &SsglSide<F>) -> Result<F> {
    if theta.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "{} mixing weights for {} rows",
            theta.len(),
            m.nrows()
        )));
    }
    let mut total = F::zero();
    for (row, &th) in m.axis_iter(Axis(0)).zip(theta) {
        if row_is_nonzero(row) {
            total = total + pen_value(row, MixingWeight::new(th)?, side);
        }
    }
    Ok(total)
}

fn ridge_log_prior<F: Scalar>(factors: &LatentFactors<F>, gamma: F) -> F {
    let sq: F = factors.a.iter().chain(factors.b.iter()).map(|v| *v * *v).sum();
    -gamma * sq / F::lit(2.0)
}

fn sides<F: Scalar>(hyper: &HyperParams) -> Result<(SsglSide<F>, SsglSide<F>)> {
    Ok((
        SsglSide::new(F::lit(hyper.lambda0_a), F::lit(hyper.lambda1_a), hyper.r)?,
        SsglSide::new(F::lit(hyper.lambda0_b), F::lit(hyper.lambda1_b), hyper.r)?,
    ))
}

/// Mutable state of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState<F> {
    /// Momentum counter; 2 right after initialization.
    pub t: usize,
    pub curr: LatentFactors<F>,
    pub prev: LatentFactors<F>,
    pub theta_a: Vec<F>,
    pub theta_b: Vec<F>,
    /// Log-posterior at initialization followed by one value per sweep.
    pub logpost_trace: Vec<f64>,
    pub converged: bool,
}

impl<F: Scalar> FitState<F> {
    pub fn new(init: LatentFactors<F>, theta_init: F) -> Self {
        let (d1, d2) = (init.a.nrows(), init.b.nrows());
        Self {
            t: 2,
            prev: init.clone(),
            curr: init,
            theta_a: vec![theta_init; d1],
            theta_b: vec![theta_init; d2],
            logpost_trace: Vec::new(),
            converged: false,
        }
    }

    /// Number of completed sweeps.
    pub fn sweeps(&self) -> usize {
        self.logpost_trace.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome<F> {
    pub factors: LatentFactors<F>,
    pub state: FitState<F>,
    /// Weighted log-likelihood at the returned factors.
    pub log_likelihood: f64,
}

impl<F: Scalar> FitOutcome<F> {
    pub fn final_log_posterior(&self) -> f64 {
        self.state.logpost_trace.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy)]
enum Side {
    A,
    B,
}

/// Owns the fit state and the product caches for one fit.
pub struct Solver<'a, F: Scalar> {
    problem: Problem<'a, F>,
    penalty: RowPenalty,
    xi: F,
    eta: F,
    side_a: SsglSide<F>,
    side_b: SsglSide<F>,
    alpha_a: F,
    beta_a: F,
    alpha_b: F,
    beta_b: F,
    tol: f64,
    max_iters: usize,
    state: FitState<F>,
    ws: Workspace<F>,
}

impl<'a, F: Scalar> Solver<'a, F> {
    pub fn new(
        problem: Problem<'a, F>,
        hyper: &HyperParams,
        penalty: RowPenalty,
        init: LatentFactors<F>,
    ) -> Result<Self> {
        hyper.validate()?;
        if init.a.nrows() != problem.d1() || init.b.nrows() != problem.d2() {
            return Err(Error::Dimension(format!(
                "factors are {:?}/{:?} but the side features have {} and {} columns",
                init.a.dim(),
                init.b.dim(),
                problem.d1(),
                problem.d2()
            )));
        }
        if let RowPenalty::Ridge { gamma } = penalty {
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(Error::Validation(format!("ridge gamma must be ≥ 0, got {gamma}")));
            }
        }
        let (side_a, side_b) = sides(hyper)?;
        let xi = F::lit(hyper.xi);
        let ws = Workspace::new(&problem, &init, xi);
        let mut solver = Self {
            problem,
            penalty,
            xi,
            eta: F::lit(hyper.eta),
            side_a,
            side_b,
            alpha_a: F::lit(hyper.alpha_a()),
            beta_a: F::lit(hyper.beta_a),
            alpha_b: F::lit(hyper.alpha_b()),
            beta_b: F::lit(hyper.beta_b),
            tol: hyper.tol,
            max_iters: hyper.max_iters,
            state: FitState::new(init, F::lit(hyper.theta_init)),
            ws,
        };
        let lp = solver.cached_log_posterior()?;
        solver.record(lp)?;
        Ok(solver)
    }

    pub fn state(&self) -> &FitState<F> {
        &self.state
    }

    pub fn xi(&self) -> F {
        self.xi
    }

    /// One proximal step on row `k` of `A`; returns the new row.
    pub fn update_row_a(&mut self, k: usize) -> Result<Array1<F>> {
        self.update_row(Side::A, k)
    }

    /// One proximal step on row `l` of `B`; returns the new row.
    pub fn update_row_b(&mut self, l: usize) -> Result<Array1<F>> {
        self.update_row(Side::B, l)
    }

    fn update_row(&mut self, side: Side, k: usize) -> Result<Array1<F>> {
        let t = self.state.t;
        let (curr, prev, theta, ssgl) = match side {
            Side::A => (&self.state.curr.a, &self.state.prev.a, self.state.theta_a[k], &self.side_a),
            Side::B => (&self.state.curr.b, &self.state.prev.b, self.state.theta_b[k], &self.side_b),
        };
        let curr_row = curr.row(k).to_owned();
        let extrapolated = momentum_extrapolate(curr_row.view(), prev.row(k), t);
        let shift = &extrapolated - &curr_row;
        let grad = match side {
            Side::A => self.ws.grad_a(k, shift.view()),
            Side::B => self.ws.grad_b(k, shift.view()),
        };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.divergence("non-finite gradient"));
        }
        let eta = self.eta;
        let new_row = match self.penalty {
            RowPenalty::Ssgl => {
                let z = &extrapolated - &(&grad * eta);
                prox_refined(z.view(), curr_row.view(), MixingWeight::new(theta)?, ssgl, eta)
            }
            RowPenalty::Ridge { gamma } => {
                let gamma = F::lit(gamma);
                let mut z = extrapolated;
                z.zip_mut_with(&grad, |x, &g| *x = *x - eta * (g + gamma * *x));
                z
            }
        };
        let change = &new_row - &curr_row;
        let (curr, prev) = match side {
            Side::A => (&mut self.state.curr.a, &mut self.state.prev.a),
            Side::B => (&mut self.state.curr.b, &mut self.state.prev.b),
        };
        prev.row_mut(k).assign(&curr_row);
        curr.row_mut(k).assign(&new_row);
        match side {
            Side::A => self.ws.apply_a(k, change.view()),
            Side::B => self.ws.apply_b(k, change.view()),
        }
        self.ws.maybe_refresh(&self.problem, &self.state.curr);
        Ok(new_row)
    }

    fn divergence(&self, reason: &str) -> Error {
        Error::Divergence {
            iteration: self.state.t,
            reason: reason.to_string(),
            trace: self.state.logpost_trace.clone(),
        }
    }

    fn cached_log_posterior(&self) -> Result<F> {
        let ll = self.ws.log_likelihood(&self.problem);
        let prior = match self.penalty {
            RowPenalty::Ssgl => {
                ssgl_log_prior(&self.state.curr.a, &self.state.theta_a, &self.side_a)?
                    + ssgl_log_prior(&self.state.curr.b, &self.state.theta_b, &self.side_b)?
            }
            RowPenalty::Ridge { gamma } => ridge_log_prior(&self.state.curr, F::lit(gamma)),
        };
        Ok(ll + prior)
    }

    fn record(&mut self, lp: F) -> Result<()> {
        let lp = lp.to_f64_lossy();
        if !lp.is_finite() {
            return Err(self.divergence("non-finite log-posterior"));
        }
        self.state.logpost_trace.push(lp);
        Ok(())
    }

    /// One full pass over the rows of `A` then `B`. Returns the
    /// log-posterior after the pass.
    pub fn sweep(&mut self) -> Result<f64> {
        for k in 0..self.problem.d1() {
            self.update_row_a(k)?;
        }
        if self.penalty == RowPenalty::Ssgl {
            let th = update_theta(&self.state.curr.a, self.alpha_a, self.beta_a);
            self.state.theta_a.fill(th);
        }
        for l in 0..self.problem.d2() {
            self.update_row_b(l)?;
        }
        if self.penalty == RowPenalty::Ssgl {
            let th = update_theta(&self.state.curr.b, self.alpha_b, self.beta_b);
            self.state.theta_b.fill(th);
        }
        self.ws.refresh(&self.problem, &self.state.curr);
        let lp = self.cached_log_posterior()?;
        self.record(lp)?;
        self.state.t += 1;
        let trace = &self.state.logpost_trace;
        let (last, before) = (trace[trace.len() - 1], trace[trace.len() - 2]);
        if (last - before).abs() / (1.0 + last.abs()) < self.tol {
            self.state.converged = true;
        }
        log::debug!(
            "sweep {}: log-posterior {:.6e}, active rows {}/{}",
            self.state.sweeps(),
            last,
            self.state.curr.active_rows_a().len(),
            self.state.curr.active_rows_b().len()
        );
        Ok(last)
    }

    /// Sweeps until convergence or the iteration budget runs out.
    pub fn run(mut self) -> Result<FitOutcome<F>> {
        while !self.state.converged && self.state.sweeps() < self.max_iters {
            self.sweep()?;
        }
        let log_likelihood = self.ws.log_likelihood(&self.problem).to_f64_lossy();
        Ok(FitOutcome {
            factors: self.state.curr.clone(),
            state: self.state,
            log_likelihood,
        })
    }

    /// Cached `M` for the current factors.
    pub fn logits(&self) -> &Array2<F> {
        self.ws.m()
    }
}

/// Fits the SSGL model from the given initialization strategy.
pub fn fit<F: Scalar>(problem: &Problem<'_, F>, hyper: &HyperParams, init: InitStrategy) -> Result<FitOutcome<F>> {
    let start = init_factors(init, problem, hyper.r, hyper.seed)?;
    fit_from(problem, hyper, RowPenalty::Ssgl, start)
}

/// Fits from explicit starting factors under either penalty.
pub fn fit_from<F: Scalar>(
    problem: &Problem<'_, F>,
    hyper: &HyperParams,
    penalty: RowPenalty,
    start: LatentFactors<F>,
) -> Result<FitOutcome<F>> {
    Solver::new(*problem, hyper, penalty, start)?.run()
}

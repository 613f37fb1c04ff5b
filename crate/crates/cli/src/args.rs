use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssgl_imc::evaluation::Method;
use ssgl_imc::io::InteractionFormat;
use ssgl_imc::optimizer::RowPenalty;
use ssgl_imc::InitStrategy;

use crate::config::{parse_shape, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ssgl-imc", version, about = "Sparse inductive matrix completion with spike-and-slab group lasso priors")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bundle with known sparse factors.
    Simulate(SimArgs),
    /// Fit the model and write the model file and reports.
    Fit(FitArgs),
    /// Rank cells by predicted probability.
    Predict(PredictArgs),
    /// Score a fitted model on a test set, or run the held-out protocol.
    Evaluate(EvaluateArgs),
    /// Tune λ0, η and r on a validation split.
    GridSearch(GridArgs),
    /// Refit across confidence weights ξ.
    XiSweep(XiArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Fit(_) => "fit",
            Self::Predict(_) => "predict",
            Self::Evaluate(_) => "evaluate",
            Self::GridSearch(_) => "grid-search",
            Self::XiSweep(_) => "xi-sweep",
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        match self {
            Self::Simulate(a) => a.apply(cfg),
            Self::Fit(a) => {
                a.data.apply(cfg)?;
                a.hyper.apply(cfg);
                if let Some(p) = a.penalty {
                    cfg.penalty = match p {
                        PenaltyKind::Ssgl => RowPenalty::Ssgl,
                        PenaltyKind::Ridge => RowPenalty::Ridge {
                            gamma: a.ridge_gamma.unwrap_or(cfg.plan.ridge_gamma),
                        },
                    };
                } else if let (Some(g), RowPenalty::Ridge { .. }) = (a.ridge_gamma, cfg.penalty) {
                    cfg.penalty = RowPenalty::Ridge { gamma: g };
                }
            }
            Self::Predict(a) => {
                a.data.apply(cfg)?;
                set(&mut cfg.predict.top_k, a.top_k.map(Some));
                cfg.predict.only_zeros |= a.only_zeros;
            }
            Self::Evaluate(a) => {
                a.data.apply(cfg)?;
                a.hyper.apply(cfg);
                a.plan.apply(cfg);
            }
            Self::GridSearch(a) => {
                a.data.apply(cfg)?;
                a.hyper.apply(cfg);
                a.plan.apply(cfg);
                set(&mut cfg.plan.lambda0_grid, a.lambda0_grid.clone());
                set(&mut cfg.plan.eta_grid, a.eta_grid.clone());
                set(&mut cfg.plan.r_grid, a.r_grid.clone());
                set(&mut cfg.plan.validation_frac, a.validation_frac);
            }
            Self::XiSweep(a) => {
                a.data.apply(cfg)?;
                a.hyper.apply(cfg);
                a.plan.apply(cfg);
                set(&mut cfg.xi_grid, a.xi_grid.clone());
            }
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Number of rows (drugs).
    #[arg(long = "I", alias = "rows")]
    pub rows: Option<usize>,
    /// Number of columns (diseases).
    #[arg(long = "J", alias = "cols")]
    pub cols: Option<usize>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    #[arg(long)]
    pub r_true: Option<usize>,
    #[arg(long)]
    pub feature_sd: Option<f64>,
    #[arg(long)]
    pub signal_scale: Option<f64>,
    #[arg(long)]
    pub observe_frac: Option<f64>,
    #[arg(long)]
    pub zero_mix_frac: Option<f64>,
}

impl SimArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.simulation;
        set(&mut s.n_rows, self.rows);
        set(&mut s.n_cols, self.cols);
        set(&mut s.d1, self.d1);
        set(&mut s.d2, self.d2);
        set(&mut s.r_true, self.r_true);
        set(&mut s.feature_sd, self.feature_sd);
        set(&mut s.signal_scale, self.signal_scale);
        set(&mut s.observe_frac, self.observe_frac);
        set(&mut s.zero_mix_frac, self.zero_mix_frac);
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory produced by `simulate`.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Interaction matrix (.mtx, triplet .txt/.tsv, or dense .csv).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Row side features (CSV).
    #[arg(long)]
    pub u: Option<PathBuf>,
    /// Column side features (CSV).
    #[arg(long)]
    pub v: Option<PathBuf>,
    #[arg(long)]
    pub test_set: Option<PathBuf>,
    #[arg(long)]
    pub y_format: Option<InteractionFormat>,
    /// Grid size for triplet files, e.g. 13x6949.
    #[arg(long)]
    pub shape: Option<String>,
    /// Append an identity block to U.
    #[arg(long)]
    pub augment_u: bool,
    #[arg(long)]
    pub augment_v: bool,
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        let d = &mut cfg.data;
        set(&mut d.bundle, self.bundle.clone().map(Some));
        set(&mut d.y, self.y.clone().map(Some));
        set(&mut d.u, self.u.clone().map(Some));
        set(&mut d.v, self.v.clone().map(Some));
        set(&mut d.test_set, self.test_set.clone().map(Some));
        set(&mut d.y_format, self.y_format.map(Some));
        if let Some(s) = &self.shape {
            d.shape = Some(parse_shape(s)?);
        }
        d.augment_u |= self.augment_u;
        d.augment_v |= self.augment_v;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Confidence weight on positives; 1 gives the plain Bernoulli likelihood.
    #[arg(long)]
    pub xi: Option<f64>,
    /// Spike scale for both sides.
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda0_a: Option<f64>,
    #[arg(long)]
    pub lambda0_b: Option<f64>,
    /// Slab scale for both sides.
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub theta_init: Option<f64>,
    #[arg(long)]
    pub init: Option<InitStrategy>,
}

impl HyperArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let h = &mut cfg.hyper;
        set(&mut h.xi, self.xi);
        if let Some(l) = self.lambda0 {
            h.lambda0_a = l;
            h.lambda0_b = l;
        }
        set(&mut h.lambda0_a, self.lambda0_a);
        set(&mut h.lambda0_b, self.lambda0_b);
        if let Some(l) = self.lambda1 {
            h.lambda1_a = l;
            h.lambda1_b = l;
        }
        if let Some(a) = self.alpha {
            h.alpha_a = Some(a);
            h.alpha_b = Some(a);
        }
        if let Some(b) = self.beta {
            h.beta_a = b;
            h.beta_b = b;
        }
        set(&mut h.r, self.r);
        set(&mut h.eta, self.eta);
        set(&mut h.max_iters, self.max_iters);
        set(&mut h.tol, self.tol);
        set(&mut h.theta_init, self.theta_init);
        set(&mut cfg.init, self.init);
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PenaltyKind {
    Ssgl,
    Ridge,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyKind>,
    /// Ridge weight γ when `--penalty ridge`.
    #[arg(long)]
    pub ridge_gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Rank only cells that are zero in the training matrix.
    #[arg(long)]
    pub only_zeros: bool,
    /// Output CSV; defaults to predictions.csv in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub oob_frac: Option<f64>,
    /// Comma-separated training proportions.
    #[arg(long, value_delimiter = ',')]
    pub rho: Option<Vec<f64>>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Comma-separated methods: bvsimc, ridge-baseline.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub ridge_gamma: Option<f64>,
    #[arg(long)]
    pub ridge_xi: Option<f64>,
}

impl PlanArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.plan;
        set(&mut p.oob_frac, self.oob_frac);
        set(&mut p.rho_grid, self.rho.clone());
        set(&mut p.repetitions, self.repetitions);
        set(&mut p.methods, self.methods.clone());
        set(&mut p.ridge_gamma, self.ridge_gamma);
        set(&mut p.ridge_xi, self.ridge_xi);
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Score this model on the test set instead of running the protocol.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[arg(long, value_delimiter = ',')]
    pub lambda0_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub r_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub validation_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct XiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Comma-separated confidence weights.
    #[arg(long, value_delimiter = ',')]
    pub xi_grid: Option<Vec<f64>>,
}

//! Resolved run configuration: defaults, then the JSON config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use ssgl_imc::evaluation::ExperimentPlan;
use ssgl_imc::io::InteractionFormat;
use ssgl_imc::optimizer::RowPenalty;
use ssgl_imc::synth::SimConfig;
use ssgl_imc::{HyperParams, InitStrategy};

/// Confidence weights swept by `xi-sweep` unless overridden.
pub const DEFAULT_XI_GRID: [f64; 13] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 50.0, 100.0, 1000.0];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory written by `simulate`; supplies any path not given explicitly.
    pub bundle: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub u: Option<PathBuf>,
    pub v: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    /// Format of `y`; guessed from the extension when absent.
    pub y_format: Option<InteractionFormat>,
    /// Grid size for triplet files without a shape line.
    pub shape: Option<(usize, usize)>,
    pub augment_u: bool,
    pub augment_v: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub top_k: Option<usize>,
    pub only_zeros: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimConfig,
    pub hyper: HyperParams,
    pub plan: ExperimentPlan,
    pub init: InitStrategy,
    pub penalty: RowPenalty,
    pub xi_grid: Vec<f64>,
    pub data: DataConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            simulation: SimConfig::default(),
            hyper: HyperParams::default(),
            plan: ExperimentPlan::default(),
            init: InitStrategy::default(),
            penalty: RowPenalty::default(),
            xi_grid: DEFAULT_XI_GRID.to_vec(),
            data: DataConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// One seed drives the generator, the solver initialization and the
    /// evaluation streams.
    pub fn set_seed(&mut self, seed: u64) {
        self.simulation.seed = seed;
        self.hyper.seed = seed;
        self.plan.seed = seed;
    }
}

/// Parses `"IxJ"` or `"I,J"`.
pub fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let Some((a, b)) = s.split_once(['x', 'X', ',']) else {
        bail!("shape must look like 13x6949, got '{s}'");
    };
    Ok((a.trim().parse()?, b.trim().parse()?))
}

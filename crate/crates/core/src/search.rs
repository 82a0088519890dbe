//! Restart-based exponential-weights search over processing paths.
//!
//! From the current ODF the step oracle (surrogate networks or the physics
//! simulator) expands all 31 one-step outcomes; the predicted objective gains
//! feed a base-beta softmax and the next process is sampled from it. When no
//! mode improves the objective the restart breaks early. The best final
//! objective over all restarts wins, ties broken toward the lexicographically
//! smallest mode sequence, and restarts draw from per-restart seeded streams
//! so the result is independent of scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{apply_process, ProcessStepConfig, Trajectory};
use crate::homogenization::{ObjectiveWeights, PropertyMatrix};
use crate::mesh::{FundamentalMesh, Odf};
use crate::plasticity::{ProcessMode, SlipSystemSet};
use crate::surrogate::{order_models, MlpModel};

/// Which one-step predictor drives the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Surrogate,
    Simulator,
}

/// Interpretation of the softmax over objective gains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftmaxKind {
    /// `weights ~ beta^(delta / delta_max)` (base-beta exponentiation).
    #[default]
    PowerBase,
    /// `weights ~ exp(beta * delta / delta_max)`.
    NaturalExp,
}

/// Search settings.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchConfig {
    /// Number of restarts (N).
    pub restarts: usize,
    /// Maximum steps per restart (M).
    pub steps: usize,
    /// Weight base (beta).
    pub beta: f64,
    pub seed: u64,
    /// Always take the argmax instead of sampling (the beta -> infinity
    /// limit); ties go to the lowest mode id.
    pub greedy: bool,
    pub softmax: SoftmaxKind,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: 1000,
            steps: 10,
            beta: 5.0,
            seed: 0,
            greedy: false,
            softmax: SoftmaxKind::PowerBase,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.beta > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "softmax base must exceed 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One-step predictor for all 31 process modes.
pub trait StepOracle: Sync {
    fn advance(&self, odf: &Odf, mode: ProcessMode) -> Result<Odf>;

    /// All 31 outcomes in ascending mode id order.
    fn advance_all(&self, odf: &Odf) -> Result<Vec<Odf>> {
        ProcessMode::all()
            .into_par_iter()
            .map(|mode| self.advance(odf, mode))
            .collect()
    }

    fn label(&self) -> &'static str;
}

/// The physics simulator as a step oracle.
pub struct SimulatorOracle<'a> {
    pub mesh: &'a FundamentalMesh,
    pub slips: &'a SlipSystemSet,
    pub cfg: ProcessStepConfig,
}

impl StepOracle for SimulatorOracle<'_> {
    fn advance(&self, odf: &Odf, mode: ProcessMode) -> Result<Odf> {
        apply_process(self.mesh, odf, mode, &self.cfg, self.slips)
    }

    fn label(&self) -> &'static str {
        "simulator"
    }
}

/// The trained per-mode networks as a step oracle.
pub struct SurrogateOracle<'a> {
    ordered: Vec<&'a MlpModel>,
}

impl<'a> SurrogateOracle<'a> {
    /// Requires exactly one model per mode id 1..=31.
    pub fn new(models: &'a [MlpModel]) -> Result<Self> {
        Ok(Self {
            ordered: order_models(models)?,
        })
    }
}

impl StepOracle for SurrogateOracle<'_> {
    fn advance(&self, odf: &Odf, mode: ProcessMode) -> Result<Odf> {
        self.ordered[mode.id() as usize - 1]
            .forward(odf)
            .map_err(|e| e.at_mode(&mode.mask()))
    }

    fn label(&self) -> &'static str {
        "surrogate"
    }
}

/// Predicted objective gain of every mode from the current ODF, evaluated
/// through the property matrix (`F = W . a` with `W` the objective weights
/// folded through `P`).
pub fn objective_diffs(
    oracle: &dyn StepOracle,
    odf: &Odf,
    weights: &ObjectiveWeights,
    p: &PropertyMatrix,
) -> Result<Vec<f64>> {
    let row = p.objective_row(weights);
    let outcomes = oracle.advance_all(odf)?;
    let base = row.dot(&odf.as_vector());
    Ok(outcomes
        .iter()
        .map(|o| row.dot(&o.as_vector()) - base)
        .collect())
}

/// Sampling distribution over modes from the objective gains.
///
/// Gains are scale-normalized by the largest gain so the sharpness is
/// independent of objective units; modes with nonpositive gain keep a small
/// weight. Errors with [`Error::NotImprovable`] when no gain is positive,
/// which is the search loop's break condition.
pub fn softmax_base(deltas: &[f64], beta: f64, kind: SoftmaxKind) -> Result<Vec<f64>> {
    let max = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::NotImprovable);
    }
    let weights: Vec<f64> = deltas
        .iter()
        .map(|d| match kind {
            SoftmaxKind::PowerBase => beta.powf(d / max),
            SoftmaxKind::NaturalExp => (beta * d / max).exp(),
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn sample_multinomial(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Outcome of one restart.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartSummary {
    pub final_objective: f64,
    pub modes: Vec<ProcessMode>,
    /// The step at which no mode improved, if the restart stopped early.
    pub break_step: Option<usize>,
    /// Oracle failure that aborted this restart, if any.
    pub error: Option<String>,
}

/// Best path found by [`search`] together with the per-restart record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathResult {
    pub best_modes: Vec<ProcessMode>,
    pub best_objective: f64,
    pub best_trajectory: Trajectory,
    pub restarts: Vec<RestartSummary>,
    pub failed_restarts: usize,
}

struct RestartOutcome {
    objective: f64,
    modes: Vec<ProcessMode>,
    break_step: Option<usize>,
}

fn run_restart(
    oracle: &dyn StepOracle,
    initial: &Odf,
    cfg: &SearchConfig,
    row: &nalgebra::DVector<f64>,
    restart: usize,
) -> Result<RestartOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
    let mut current = initial.clone();
    let mut modes = Vec::with_capacity(cfg.steps);
    let mut break_step = None;

    for step in 0..cfg.steps {
        let outcomes = oracle
            .advance_all(&current)
            .map_err(|e| e.at_step(step))?;
        let base = row.dot(&current.as_vector());
        let deltas: Vec<f64> = outcomes
            .iter()
            .map(|o| row.dot(&o.as_vector()) - base)
            .collect();

        let choice = if cfg.greedy {
            let mut best: Option<(usize, f64)> = None;
            for (k, &d) in deltas.iter().enumerate() {
                if d > 0.0 && best.map_or(true, |(_, b)| d > b) {
                    best = Some((k, d));
                }
            }
            best.map(|(k, _)| k)
        } else {
            match softmax_base(&deltas, cfg.beta, cfg.softmax) {
                Ok(weights) => Some(sample_multinomial(&mut rng, &weights)),
                Err(Error::NotImprovable) => None,
                Err(e) => return Err(e),
            }
        };

        match choice {
            Some(k) => {
                modes.push(ProcessMode::from_id(k as u8 + 1)?);
                current = outcomes[k].clone();
            }
            None => {
                break_step = Some(step);
                break;
            }
        }
    }

    Ok(RestartOutcome {
        objective: row.dot(&current.as_vector()),
        modes,
        break_step,
    })
}

/// Exponential-weights path search: `restarts` independent seeded runs of up
/// to `steps` softmax-sampled process choices, merged by final objective.
pub fn search(
    oracle: &dyn StepOracle,
    initial: &Odf,
    cfg: &SearchConfig,
    weights: &ObjectiveWeights,
    p: &PropertyMatrix,
) -> Result<PathResult> {
    cfg.validate()?;
    weights.validate()?;
    let q = p.node_weights();
    let mass = q.dot(&initial.as_vector());
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "initial ODF is not normalized (q . a = {mass})"
        )));
    }
    let row = p.objective_row(weights);

    let outcomes: Vec<Result<RestartOutcome>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| run_restart(oracle, initial, cfg, &row, i))
        .collect();

    let mut summaries = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, Vec<ProcessMode>)> = None;
    let mut failed = 0usize;
    let mut first_error: Option<String> = None;
    for outcome in outcomes {
        match outcome {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some((obj, modes)) => {
                        r.objective > *obj || (r.objective == *obj && r.modes < *modes)
                    }
                };
                if better {
                    best = Some((r.objective, r.modes.clone()));
                }
                summaries.push(RestartSummary {
                    final_objective: r.objective,
                    modes: r.modes,
                    break_step: r.break_step,
                    error: None,
                });
            }
            Err(e) => {
                failed += 1;
                let message = e.to_string();
                first_error.get_or_insert_with(|| message.clone());
                summaries.push(RestartSummary {
                    final_objective: f64::NEG_INFINITY,
                    modes: Vec::new(),
                    break_step: None,
                    error: Some(message),
                });
            }
        }
    }

    let (best_objective, best_modes) = best.ok_or_else(|| {
        Error::Configuration(format!(
            "all {} restarts failed; first error: {}",
            cfg.restarts,
            first_error.unwrap_or_default()
        ))
    })?;

    // Replay the winning path through the same oracle to record the full
    // trajectory; purity makes this bitwise identical to the winning restart.
    let mut odfs = vec![initial.clone()];
    let mut objectives = vec![row.dot(&initial.as_vector())];
    let mut current = initial.clone();
    for (step, &mode) in best_modes.iter().enumerate() {
        current = oracle.advance(&current, mode).map_err(|e| e.at_step(step))?;
        objectives.push(row.dot(&current.as_vector()));
        odfs.push(current.clone());
    }

    Ok(PathResult {
        best_modes: best_modes.clone(),
        best_objective,
        best_trajectory: Trajectory {
            modes: best_modes,
            odfs,
            objectives,
        },
        restarts: summaries,
        failed_restarts: failed,
    })
}

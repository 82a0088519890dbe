//! Per-mode surrogate networks for the one-step ODF map.
//!
//! Each of the 31 process modes gets its own multilayer perceptron:
//! input -> 760 tanh units -> linear -> ReLU -> volume normalization. The
//! output stage is what keeps predictions physically feasible: the ReLU
//! enforces nonnegativity and the normalization layer divides by the
//! metric-weighted sum `q . u`, so every prediction integrates to one.
//!
//! Training minimizes a weighted mean squared error whose weights default to
//! the mesh node weights `q` (the same weights that map an ODF to stiffness),
//! using Adam with a cosine-annealing warm-restart learning-rate schedule.
//! All randomness (initialization, shuffling) flows from one seed, so
//! training is bit-for-bit reproducible.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::mesh::Odf;
use crate::plasticity::{ProcessMode, MODE_COUNT};

/// Guard added to the normalization denominator.
pub const NORM_EPS: f64 = 1e-12;

/// Below this post-ReLU mass the output is considered dead rather than
/// silently renormalized noise.
pub const DEAD_OUTPUT_GUARD: f64 = 1e-8;

/// Training hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Warm-restart schedule: first cycle length in epochs.
    pub restart_period: usize,
    /// Cycle-length multiplier after each restart.
    pub period_mult: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 310,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            restart_period: 10,
            period_mult: 2,
            lr_max: 1e-3,
            lr_min: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.restart_period == 0 || self.period_mult == 0 {
            return Err(Error::InvalidArgument(
                "warm-restart schedule needs a positive period and multiplier".into(),
            ));
        }
        if !(self.lr_max >= self.lr_min && self.lr_min >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning rates must satisfy lr_max >= lr_min >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Cosine-annealing learning rate with warm restarts: within each cycle the
/// rate decays from `lr_max` to `lr_min`, then resets; cycle length grows by
/// `period_mult` after each restart.
pub fn cosine_warm_restart_lr(
    epoch: usize,
    restart_period: usize,
    period_mult: usize,
    lr_max: f64,
    lr_min: f64,
) -> f64 {
    let mut start = 0usize;
    let mut length = restart_period.max(1);
    while epoch >= start + length {
        start += length;
        length *= period_mult.max(1);
    }
    let progress = (epoch - start) as f64 / length as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Per-epoch loss history of a training run.
///
/// Index 0 is the loss of the untrained model; entry `e + 1` follows epoch `e`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainReport {
    pub train_wmse: Vec<f64>,
    pub test_wmse: Vec<f64>,
}

/// Serialized model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub mode: ProcessMode,
    pub dims: [usize; 3],
    /// Row-major `hidden x in`.
    pub w0: Vec<f64>,
    pub b0: Vec<f64>,
    /// Row-major `out x hidden`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub norm_weights: Vec<f64>,
    pub train_config: Option<TrainConfig>,
}

/// One surrogate network together with the normalization weights of the mesh
/// it was built for and the process mode it serves.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    mode: ProcessMode,
    w0: DMatrix<f64>,
    b0: DVector<f64>,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    norm_weights: DVector<f64>,
    train_config: Option<TrainConfig>,
}

struct ForwardTrace {
    hidden: DMatrix<f64>,
    post_relu: DMatrix<f64>,
    denominators: Vec<f64>,
    output: DMatrix<f64>,
}

impl MlpModel {
    /// Seeded Glorot-uniform initialization with zero biases.
    pub fn new(
        mode: ProcessMode,
        n_in: usize,
        hidden: usize,
        n_out: usize,
        norm_weights: DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        if n_in == 0 || hidden == 0 || n_out == 0 {
            return Err(Error::InvalidArgument("network dims must be positive".into()));
        }
        if norm_weights.len() != n_out || norm_weights.iter().any(|&q| !(q > 0.0)) {
            return Err(Error::InvalidArgument(
                "norm weights must be positive and match the output dimension".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
        };
        Ok(Self {
            mode,
            w0: glorot(hidden, n_in),
            b0: DVector::zeros(hidden),
            w1: glorot(n_out, hidden),
            b1: DVector::zeros(n_out),
            norm_weights,
            train_config: None,
        })
    }

    pub fn mode(&self) -> ProcessMode {
        self.mode
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.w0.ncols(), self.w0.nrows(), self.w1.nrows()]
    }

    pub fn norm_weights(&self) -> &DVector<f64> {
        &self.norm_weights
    }

    pub fn train_config(&self) -> Option<&TrainConfig> {
        self.train_config.as_ref()
    }

    /// Predict the post-process ODF for one input.
    pub fn forward(&self, odf: &Odf) -> Result<Odf> {
        let x = DMatrix::from_column_slice(odf.len(), 1, &odf.values);
        let y = self.forward_batch(&x)?;
        Ok(Odf {
            values: y.column(0).iter().copied().collect(),
        })
    }

    /// Batched forward pass; columns are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.forward_trace(x).map(|t| t.output)
    }

    fn forward_trace(&self, x: &DMatrix<f64>) -> Result<ForwardTrace> {
        if x.nrows() != self.w0.ncols() {
            return Err(Error::InvalidArgument(format!(
                "input dimension {} does not match network input {}",
                x.nrows(),
                self.w0.ncols()
            )));
        }
        let mut hidden = &self.w0 * x;
        for mut col in hidden.column_iter_mut() {
            col += &self.b0;
        }
        hidden.apply(|z| *z = z.tanh());

        let mut pre = &self.w1 * &hidden;
        for mut col in pre.column_iter_mut() {
            col += &self.b1;
        }
        let post_relu = pre.map(|z| z.max(0.0));

        let batch = x.ncols();
        let mut denominators = Vec::with_capacity(batch);
        let mut output = post_relu.clone();
        for (s, mut col) in output.column_iter_mut().enumerate() {
            let mass = self.norm_weights.dot(&post_relu.column(s));
            if mass <= DEAD_OUTPUT_GUARD {
                return Err(Error::DeadOutput);
            }
            let den = mass + NORM_EPS;
            col /= den;
            denominators.push(den);
        }
        Ok(ForwardTrace {
            hidden,
            post_relu,
            denominators,
            output,
        })
    }

    /// Exact gradients of `wmse(forward(x), t; w)` for all four parameter
    /// tensors, together with the loss value.
    pub fn backward_batch(
        &self,
        x: &DMatrix<f64>,
        t: &DMatrix<f64>,
        w: &DVector<f64>,
    ) -> Result<(Gradients, f64)> {
        let trace = self.forward_trace(x)?;
        let batch = x.ncols();
        let w_sum: f64 = w.iter().sum();
        if !(w_sum > 0.0) {
            return Err(Error::InvalidArgument("loss weights sum to zero".into()));
        }
        let loss = wmse(t, &trace.output, w)?;

        // d loss / d y, column by column.
        let mut g_y = &trace.output - t;
        let scale = 2.0 / (batch as f64 * w_sum);
        for i in 0..g_y.nrows() {
            for s in 0..batch {
                g_y[(i, s)] *= scale * w[i];
            }
        }

        // Through the normalization quotient y = u / (q . u + eps):
        // g_u = (g_y - (g_y . y) q) / den.
        let mut g_u = g_y.clone();
        for s in 0..batch {
            let dot = g_y.column(s).dot(&trace.output.column(s));
            let den = trace.denominators[s];
            for i in 0..g_u.nrows() {
                g_u[(i, s)] = (g_y[(i, s)] - dot * self.norm_weights[i]) / den;
            }
        }

        // ReLU mask (subgradient 0 at exactly 0).
        let mut g_z2 = g_u;
        for i in 0..g_z2.nrows() {
            for s in 0..batch {
                if trace.post_relu[(i, s)] <= 0.0 {
                    g_z2[(i, s)] = 0.0;
                }
            }
        }

        let g_w1 = &g_z2 * trace.hidden.transpose();
        let g_b1 = row_sums(&g_z2);
        let g_h = self.w1.transpose() * &g_z2;

        let mut g_z1 = g_h;
        for i in 0..g_z1.nrows() {
            for s in 0..batch {
                let h = trace.hidden[(i, s)];
                g_z1[(i, s)] *= 1.0 - h * h;
            }
        }
        let g_w0 = &g_z1 * x.transpose();
        let g_b0 = row_sums(&g_z1);

        Ok((
            Gradients {
                w0: g_w0,
                b0: g_b0,
                w1: g_w1,
                b1: g_b1,
            },
            loss,
        ))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: 1,
            mode: self.mode,
            dims: self.dims(),
            w0: row_major(&self.w0),
            b0: self.b0.iter().copied().collect(),
            w1: row_major(&self.w1),
            b1: self.b1.iter().copied().collect(),
            norm_weights: self.norm_weights.iter().copied().collect(),
            train_config: self.train_config.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let [n_in, hidden, n_out] = file.dims;
        if file.w0.len() != hidden * n_in
            || file.b0.len() != hidden
            || file.w1.len() != n_out * hidden
            || file.b1.len() != n_out
            || file.norm_weights.len() != n_out
        {
            return Err(Error::InvalidArgument(
                "model file arrays do not match its dims".into(),
            ));
        }
        Ok(Self {
            mode: file.mode,
            w0: DMatrix::from_row_slice(hidden, n_in, &file.w0),
            b0: DVector::from_column_slice(&file.b0),
            w1: DMatrix::from_row_slice(n_out, hidden, &file.w1),
            b1: DVector::from_column_slice(&file.b1),
            norm_weights: DVector::from_column_slice(&file.norm_weights),
            train_config: file.train_config,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(&self.to_file())?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_file(file)
    }
}

/// Parameter-shaped gradient bundle.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub w0: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.nrows());
    for s in 0..m.ncols() {
        out += m.column(s);
    }
    out
}

/// Weighted mean squared error over a batch (columns are samples):
/// the per-sample `sum_i w_i (y_i - y*_i)^2 / sum_i w_i`, averaged over the
/// batch.
pub fn wmse(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>, w: &DVector<f64>) -> Result<f64> {
    if y_true.shape() != y_pred.shape() || y_true.nrows() != w.len() {
        return Err(Error::InvalidArgument("wmse shape mismatch".into()));
    }
    if w.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument("wmse weights must be nonnegative".into()));
    }
    let w_sum: f64 = w.iter().sum();
    if !(w_sum > 0.0) {
        return Err(Error::InvalidArgument("wmse weights sum to zero".into()));
    }
    let batch = y_true.ncols();
    let mut total = 0.0;
    for s in 0..batch {
        let mut acc = 0.0;
        for i in 0..y_true.nrows() {
            let d = y_true[(i, s)] - y_pred[(i, s)];
            acc += w[i] * d * d;
        }
        total += acc / w_sum;
    }
    Ok(total / batch as f64)
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    fn new(model: &MlpModel) -> Self {
        let zero_like = Gradients {
            w0: DMatrix::zeros(model.w0.nrows(), model.w0.ncols()),
            b0: DVector::zeros(model.b0.len()),
            w1: DMatrix::zeros(model.w1.nrows(), model.w1.ncols()),
            b1: DVector::zeros(model.b1.len()),
        };
        Self {
            m: zero_like.clone(),
            v: zero_like,
            step: 0,
        }
    }

    fn apply(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);

        fn update_matrix(
            param: &mut DMatrix<f64>,
            grad: &DMatrix<f64>,
            m: &mut DMatrix<f64>,
            v: &mut DMatrix<f64>,
            lr: f64,
            cfg: &TrainConfig,
            bias1: f64,
            bias2: f64,
        ) {
            for ((p, g), (m, v)) in param
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        fn update_vector(
            param: &mut DVector<f64>,
            grad: &DVector<f64>,
            m: &mut DVector<f64>,
            v: &mut DVector<f64>,
            lr: f64,
            cfg: &TrainConfig,
            bias1: f64,
            bias2: f64,
        ) {
            for ((p, g), (m, v)) in param
                .iter_mut()
                .zip(grad.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }

        update_matrix(&mut model.w0, &grads.w0, &mut self.m.w0, &mut self.v.w0, lr, cfg, bias1, bias2);
        update_vector(&mut model.b0, &grads.b0, &mut self.m.b0, &mut self.v.b0, lr, cfg, bias1, bias2);
        update_matrix(&mut model.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1, lr, cfg, bias1, bias2);
        update_vector(&mut model.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1, lr, cfg, bias1, bias2);
    }
}

/// Extract the (input, output) matrices of one mode from a record list.
pub fn mode_batches(records: &[DatasetRecord], mode: ProcessMode) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let selected: Vec<&DatasetRecord> = records.iter().filter(|r| r.mode == mode).collect();
    if selected.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no records for mode {mode}"
        )));
    }
    let dim = selected[0].input_odf.len();
    let n = selected.len();
    let mut x = DMatrix::zeros(dim, n);
    let mut t = DMatrix::zeros(dim, n);
    for (s, r) in selected.iter().enumerate() {
        for i in 0..dim {
            x[(i, s)] = r.input_odf.values[i];
            t[(i, s)] = r.output_odf.values[i];
        }
    }
    Ok((x, t))
}

/// Train a model in place; returns the per-epoch loss history.
pub fn train(
    model: &mut MlpModel,
    train_x: &DMatrix<f64>,
    train_t: &DMatrix<f64>,
    test_x: &DMatrix<f64>,
    test_t: &DMatrix<f64>,
    w: &DVector<f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = train_x.ncols();
    if n == 0 || test_x.ncols() == 0 {
        return Err(Error::InvalidArgument("training/test sets must be nonempty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model);
    let mut report = TrainReport {
        train_wmse: Vec::with_capacity(cfg.epochs + 1),
        test_wmse: Vec::with_capacity(cfg.epochs + 1),
    };
    let evaluate = |model: &MlpModel, x: &DMatrix<f64>, t: &DMatrix<f64>| -> Result<f64> {
        wmse(t, &model.forward_batch(x)?, w)
    };
    report.train_wmse.push(evaluate(model, train_x, train_t)?);
    report.test_wmse.push(evaluate(model, test_x, test_t)?);

    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let lr = cosine_warm_restart_lr(
            epoch,
            cfg.restart_period,
            cfg.period_mult,
            cfg.lr_max,
            cfg.lr_min,
        );
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let xb = train_x.select_columns(chunk);
            let tb = train_t.select_columns(chunk);
            let (grads, _) = model.backward_batch(&xb, &tb, w)?;
            adam.apply(model, &grads, lr, cfg);
        }
        report.train_wmse.push(evaluate(model, train_x, train_t)?);
        report.test_wmse.push(evaluate(model, test_x, test_t)?);
    }
    model.train_config = Some(cfg.clone());
    Ok(report)
}

/// Run every model on one input, outputs ordered by ascending mode id.
///
/// Requires exactly one model per mode id 1..=31.
pub fn predict_all_modes(models: &[MlpModel], odf: &Odf) -> Result<Vec<Odf>> {
    let ordered = order_models(models)?;
    ordered
        .par_iter()
        .map(|m| m.forward(odf))
        .collect::<Result<Vec<_>>>()
}

/// Validate a model set and return it ordered by mode id.
pub fn order_models(models: &[MlpModel]) -> Result<Vec<&MlpModel>> {
    if models.len() != MODE_COUNT {
        return Err(Error::Configuration(format!(
            "expected {MODE_COUNT} models, got {}",
            models.len()
        )));
    }
    let mut by_id: Vec<Option<&MlpModel>> = vec![None; MODE_COUNT];
    for m in models {
        let slot = m.mode().id() as usize - 1;
        if by_id[slot].is_some() {
            return Err(Error::Configuration(format!(
                "duplicate model for mode {}",
                m.mode()
            )));
        }
        by_id[slot] = Some(m);
    }
    Ok(by_id.into_iter().map(|m| m.expect("all slots filled")).collect())
}

/// Per-mode held-out metrics, one row per surrogate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeEvaluation {
    pub mode: ProcessMode,
    pub record_count: usize,
    pub mean_relative_l2: f64,
    pub mean_stiffness_error: f64,
}

/// Evaluate every model on its slice of a record set (typically the held-out
/// split): mean relative L2 ODF error and mean objective gap per mode.
pub fn evaluate_models(
    mesh: &crate::mesh::FundamentalMesh,
    c0: &crate::homogenization::StiffnessMatrix,
    w: &crate::homogenization::ObjectiveWeights,
    models: &[MlpModel],
    records: &[DatasetRecord],
) -> Result<Vec<ModeEvaluation>> {
    let ordered = order_models(models)?;
    ordered
        .par_iter()
        .map(|model| {
            let mode = model.mode();
            let selected: Vec<&DatasetRecord> =
                records.iter().filter(|r| r.mode == mode).collect();
            if selected.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "no evaluation records for mode {mode}"
                )));
            }
            let mut l2 = 0.0;
            let mut stiff = 0.0;
            for r in &selected {
                let pred = model.forward(&r.input_odf)?;
                l2 += crate::dataset::relative_l2(&r.output_odf, &pred)?;
                stiff += crate::dataset::stiffness_error(mesh, c0, &r.output_odf, &pred, w)?;
            }
            let n = selected.len() as f64;
            Ok(ModeEvaluation {
                mode,
                record_count: selected.len(),
                mean_relative_l2: l2 / n,
                mean_stiffness_error: stiff / n,
            })
        })
        .collect()
}

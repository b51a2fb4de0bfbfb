//! First-order Takagi–Sugeno neuro-fuzzy classifier.
//!
//! Each rule carries one Gaussian membership function per input and a linear
//! consequent. Rule firings are the product of the memberships, normalized
//! across rules; the output blends the consequents by normalized firing.
//! The full parameter set flattens into one real vector (centers, then
//! sigmas, then consequents) so population metaheuristics can search it, and
//! an analytic gradient supports the plain gradient-descent baseline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{ClassLabel, FeatureVector, Standardizer, FEATURE_NAMES};
use crate::segmentation;

/// Lower bound for membership sigmas; keeps firings differentiable.
pub const SIGMA_MIN: f64 = 1e-3;

/// Raw firing sums below this fall back to uniform rule weights.
pub const FIRING_FLOOR: f64 = 1e-300;

/// Decision threshold on the regression output (targets are 0/1).
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AnfisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("training diverged (loss {loss:.3e}); try a smaller learning rate")]
    Diverged { loss: f64 },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Segmentation(#[from] segmentation::SegmentationError),
}

/// Labeled numeric dataset: row-major inputs plus one 0/1 target per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    n_inputs: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, AnfisError> {
        if inputs.is_empty() {
            return Err(AnfisError::InvalidArgument("dataset must be non-empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(AnfisError::InvalidArgument(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let n_inputs = inputs[0].len();
        if n_inputs == 0 || inputs.iter().any(|r| r.len() != n_inputs) {
            return Err(AnfisError::InvalidArgument("ragged or empty input rows".into()));
        }
        let flat = inputs.into_iter().flatten().collect();
        Ok(Self { inputs: flat, targets, n_inputs })
    }

    /// Build from labeled feature vectors; every row must carry a label.
    pub fn from_features(features: &[FeatureVector]) -> Result<Self, AnfisError> {
        let mut inputs = Vec::with_capacity(features.len());
        let mut targets = Vec::with_capacity(features.len());
        for fv in features {
            let label = fv
                .label
                .ok_or_else(|| AnfisError::InvalidArgument("unlabeled feature vector".into()))?;
            inputs.push(fv.values.to_vec());
            targets.push(label.target());
        }
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_inputs..(i + 1) * self.n_inputs]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

/// Gaussian-membership Takagi–Sugeno model with `n_rules` rules over
/// `n_inputs` inputs.
///
/// Parameter layout (also the flatten order): `centers` and `sigmas` are
/// rule-major `n_rules x n_inputs`; `consequents` is rule-major
/// `n_rules x (n_inputs + 1)` with the bias last in each row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel {
    n_inputs: usize,
    n_rules: usize,
    centers: Vec<f64>,
    sigmas: Vec<f64>,
    consequents: Vec<f64>,
}

impl AnfisModel {
    /// Assemble a model from parameter blocks; sigmas clamp to [`SIGMA_MIN`].
    pub fn new(
        n_inputs: usize,
        n_rules: usize,
        centers: Vec<f64>,
        sigmas: Vec<f64>,
        consequents: Vec<f64>,
    ) -> Result<Self, AnfisError> {
        if n_inputs == 0 || n_rules == 0 {
            return Err(AnfisError::InvalidArgument("need n_inputs >= 1 and n_rules >= 1".into()));
        }
        if centers.len() != n_rules * n_inputs
            || sigmas.len() != n_rules * n_inputs
            || consequents.len() != n_rules * (n_inputs + 1)
        {
            return Err(AnfisError::InvalidArgument(format!(
                "parameter block sizes {}/{}/{} do not match {n_rules} rules x {n_inputs} inputs",
                centers.len(),
                sigmas.len(),
                consequents.len()
            )));
        }
        let sigmas = sigmas.into_iter().map(|s| s.max(SIGMA_MIN)).collect();
        Ok(Self { n_inputs, n_rules, centers, sigmas, consequents })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_rules(&self) -> usize {
        self.n_rules
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn consequents(&self) -> &[f64] {
        &self.consequents
    }

    /// Total number of free parameters: `n_rules * (3*n_inputs + 1)`.
    pub fn param_count(&self) -> usize {
        param_count(self.n_inputs, self.n_rules)
    }

    /// Concatenate centers, sigmas, and consequents into one vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.centers);
        out.extend_from_slice(&self.sigmas);
        out.extend_from_slice(&self.consequents);
        out
    }

    /// Inverse of [`flatten`](Self::flatten) for the given shape.
    pub fn unflatten(n_inputs: usize, n_rules: usize, values: &[f64]) -> Result<Self, AnfisError> {
        let expect = param_count(n_inputs, n_rules);
        if values.len() != expect {
            return Err(AnfisError::InvalidArgument(format!(
                "expected {expect} parameters for {n_rules} rules x {n_inputs} inputs, got {}",
                values.len()
            )));
        }
        let mf = n_rules * n_inputs;
        Self::new(
            n_inputs,
            n_rules,
            values[..mf].to_vec(),
            values[mf..2 * mf].to_vec(),
            values[2 * mf..].to_vec(),
        )
    }

    /// Raw rule firings for one input (products of Gaussian memberships).
    fn firings(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_inputs;
        (0..self.n_rules)
            .map(|r| {
                let mut exponent = 0.0;
                for j in 0..n {
                    let d = x[j] - self.centers[r * n + j];
                    let s = self.sigmas[r * n + j];
                    exponent -= d * d / (2.0 * s * s);
                }
                exponent.exp()
            })
            .collect()
    }

    /// Blend the rule consequents by normalized firing strength.
    ///
    /// When the raw firing sum underflows below [`FIRING_FLOOR`], all rules
    /// weigh `1/n_rules`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_inputs);
        let w = self.firings(x);
        let total: f64 = w.iter().sum();
        let n = self.n_inputs;
        let stride = n + 1;
        let mut out = 0.0;
        for r in 0..self.n_rules {
            let weight = if total < FIRING_FLOOR {
                1.0 / self.n_rules as f64
            } else {
                w[r] / total
            };
            let row = &self.consequents[r * stride..(r + 1) * stride];
            let mut f = row[n]; // bias
            for j in 0..n {
                f += row[j] * x[j];
            }
            out += weight * f;
        }
        out
    }

    /// Classify: melanoma iff the score reaches [`DECISION_THRESHOLD`].
    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        if self.forward(x) >= DECISION_THRESHOLD {
            ClassLabel::Melanoma
        } else {
            ClassLabel::NormalMole
        }
    }

    /// Mean squared error against the 0/1 targets, accumulated in row order.
    pub fn loss(&self, data: &Dataset) -> Result<f64, AnfisError> {
        self.check_data(data)?;
        let mut total = 0.0;
        for i in 0..data.len() {
            let e = self.forward(data.row(i)) - data.target(i);
            total += e * e;
        }
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of [`loss`](Self::loss) in flatten order.
    pub fn gradient(&self, data: &Dataset) -> Result<Vec<f64>, AnfisError> {
        self.check_data(data)?;
        let n = self.n_inputs;
        let rules = self.n_rules;
        let stride = n + 1;
        let mf = rules * n;
        let mut grad = vec![0.0; self.param_count()];
        let scale = 2.0 / data.len() as f64;

        for i in 0..data.len() {
            let x = data.row(i);
            let w = self.firings(x);
            let total: f64 = w.iter().sum();
            let uniform = total < FIRING_FLOOR;
            let weights: Vec<f64> = if uniform {
                vec![1.0 / rules as f64; rules]
            } else {
                w.iter().map(|wi| wi / total).collect()
            };
            let f: Vec<f64> = (0..rules)
                .map(|r| {
                    let row = &self.consequents[r * stride..(r + 1) * stride];
                    row[n] + (0..n).map(|j| row[j] * x[j]).sum::<f64>()
                })
                .collect();
            let y_hat: f64 = weights.iter().zip(&f).map(|(wb, fr)| wb * fr).sum();
            let err = scale * (y_hat - data.target(i));

            for r in 0..rules {
                // consequents: d y / d a_rj = w_r x_j, d y / d b_r = w_r
                let base = 2 * mf + r * stride;
                for j in 0..n {
                    grad[base + j] += err * weights[r] * x[j];
                }
                grad[base + n] += err * weights[r];

                // membership parameters vanish in the uniform-firing branch
                if uniform {
                    continue;
                }
                // d y / d w_r = (f_r - y) / total
                let dy_dw = (f[r] - y_hat) / total;
                for j in 0..n {
                    let c = self.centers[r * n + j];
                    let s = self.sigmas[r * n + j];
                    let d = x[j] - c;
                    let dw_dc = w[r] * d / (s * s);
                    let dw_ds = w[r] * d * d / (s * s * s);
                    grad[r * n + j] += err * dy_dw * dw_dc;
                    grad[mf + r * n + j] += err * dy_dw * dw_ds;
                }
            }
        }
        Ok(grad)
    }

    fn check_data(&self, data: &Dataset) -> Result<(), AnfisError> {
        if data.is_empty() {
            return Err(AnfisError::InvalidArgument("dataset must be non-empty".into()));
        }
        if data.n_inputs() != self.n_inputs {
            return Err(AnfisError::InvalidArgument(format!(
                "dataset has {} inputs, model expects {}",
                data.n_inputs(),
                self.n_inputs
            )));
        }
        Ok(())
    }
}

pub fn param_count(n_inputs: usize, n_rules: usize) -> usize {
    n_rules * (2 * n_inputs) + n_rules * (n_inputs + 1)
}

/// Search-space bounds for metaheuristic training, in flatten order:
/// centers span the standardized feature range, sigmas stay positive, and
/// consequents cover a generous linear range.
pub fn parameter_bounds(n_inputs: usize, n_rules: usize) -> Vec<(f64, f64)> {
    let mf = n_rules * n_inputs;
    let mut bounds = Vec::with_capacity(param_count(n_inputs, n_rules));
    bounds.extend(std::iter::repeat((-3.0, 3.0)).take(mf));
    bounds.extend(std::iter::repeat((SIGMA_MIN, 5.0)).take(mf));
    bounds.extend(std::iter::repeat((-10.0, 10.0)).take(n_rules * (n_inputs + 1)));
    bounds
}

/// Initialize a model from data: rule centers come from k-means clustering
/// of the inputs, sigmas from the per-feature standard deviation, and each
/// rule's consequent bias from the mean target of its cluster.
pub fn new_model(n_rules: usize, data: &Dataset, seed: u64) -> Result<AnfisModel, AnfisError> {
    if n_rules == 0 {
        return Err(AnfisError::InvalidArgument("need at least one rule".into()));
    }
    if n_rules > data.len() {
        return Err(AnfisError::InvalidArgument(format!(
            "n_rules {} exceeds training size {}",
            n_rules,
            data.len()
        )));
    }
    let n = data.n_inputs();
    let km = segmentation::kmeans(&data.inputs, n, n_rules, 100, seed)?;
    let centers: Vec<f64> = km.centroids.iter().flatten().copied().collect();

    // per-feature population std over the whole training set
    let len = data.len() as f64;
    let mut mean = vec![0.0; n];
    for i in 0..data.len() {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= len;
    }
    let mut std = vec![0.0; n];
    for i in 0..data.len() {
        for j in 0..n {
            let d = data.row(i)[j] - mean[j];
            std[j] += d * d;
        }
    }
    let sigma_row: Vec<f64> = std.iter().map(|s| (s / len).sqrt().max(SIGMA_MIN)).collect();
    let sigmas: Vec<f64> = (0..n_rules).flat_map(|_| sigma_row.iter().copied()).collect();

    // zero consequent weights; bias = mean target of the rule's cluster
    let mut bias_sum = vec![0.0; n_rules];
    let mut bias_n = vec![0usize; n_rules];
    for (i, a) in km.assignments.iter().enumerate() {
        bias_sum[*a] += data.target(i);
        bias_n[*a] += 1;
    }
    let stride = n + 1;
    let mut consequents = vec![0.0; n_rules * stride];
    for r in 0..n_rules {
        consequents[r * stride + n] = if bias_n[r] > 0 {
            bias_sum[r] / bias_n[r] as f64
        } else {
            0.5
        };
    }
    AnfisModel::new(n, n_rules, centers, sigmas, consequents)
}

/// Plain gradient descent on the MSE loss with sigma clamping.
///
/// Returns the trained model and the loss history (initial loss plus one
/// entry per iteration). Loss exceeding `1e12` aborts with
/// [`AnfisError::Diverged`].
pub fn train_gradient(
    model: &AnfisModel,
    data: &Dataset,
    learning_rate: f64,
    iterations: usize,
) -> Result<(AnfisModel, Vec<f64>), AnfisError> {
    if learning_rate <= 0.0 {
        return Err(AnfisError::InvalidArgument(format!(
            "learning rate must be positive, got {learning_rate}"
        )));
    }
    let mut current = model.clone();
    let mut history = Vec::with_capacity(iterations + 1);
    history.push(current.loss(data)?);
    for _ in 0..iterations {
        let grad = current.gradient(data)?;
        let mut params = current.flatten();
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        // unflatten re-clamps sigmas at SIGMA_MIN
        current = AnfisModel::unflatten(current.n_inputs, current.n_rules, &params)?;
        let loss = current.loss(data)?;
        if !loss.is_finite() || loss > 1e12 {
            return Err(AnfisError::Diverged { loss });
        }
        history.push(loss);
    }
    Ok((current, history))
}

/// On-disk model document: parameters plus the feature standardization that
/// produced the training inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub n_inputs: usize,
    pub n_rules: usize,
    pub centers: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    pub consequents: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub feature_order: Vec<String>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

impl SavedModel {
    pub fn from_parts(model: &AnfisModel, standardizer: &Standardizer) -> Self {
        let n = model.n_inputs;
        let chunk = |v: &[f64], width: usize| v.chunks(width).map(|c| c.to_vec()).collect();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            n_inputs: n,
            n_rules: model.n_rules,
            centers: chunk(&model.centers, n),
            sigmas: chunk(&model.sigmas, n),
            consequents: chunk(&model.consequents, n + 1),
            feature_means: standardizer.means.clone(),
            feature_stds: standardizer.stds.clone(),
            feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn into_parts(self) -> Result<(AnfisModel, Standardizer), AnfisError> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(AnfisError::ModelFile(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let model = AnfisModel::new(
            self.n_inputs,
            self.n_rules,
            self.centers.into_iter().flatten().collect(),
            self.sigmas.into_iter().flatten().collect(),
            self.consequents.into_iter().flatten().collect(),
        )?;
        if self.feature_means.len() != model.n_inputs || self.feature_stds.len() != model.n_inputs {
            return Err(AnfisError::ModelFile("standardization length mismatch".into()));
        }
        let standardizer = Standardizer { means: self.feature_means, stds: self.feature_stds };
        Ok((model, standardizer))
    }
}

/// Serialize the model (with standardization stats) as pretty JSON.
/// Numbers use the shortest decimal form that round-trips exactly.
pub fn save_model(
    path: impl AsRef<Path>,
    model: &AnfisModel,
    standardizer: &Standardizer,
) -> Result<(), AnfisError> {
    let doc = SavedModel::from_parts(model, standardizer);
    let json = serde_json::to_string_pretty(&doc).map_err(|e| AnfisError::ModelFile(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| AnfisError::ModelFile(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(AnfisModel, Standardizer), AnfisError> {
    let text = std::fs::read_to_string(path).map_err(|e| AnfisError::ModelFile(e.to_string()))?;
    let doc: SavedModel =
        serde_json::from_str(&text).map_err(|e| AnfisError::ModelFile(e.to_string()))?;
    doc.into_parts()
}

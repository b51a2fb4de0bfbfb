//! Classifier evaluation: stratified splitting, confusion-matrix metrics,
//! head-to-head method comparison, and the convergence sweep harness.
//!
//! Melanoma (class code 2) is the positive class throughout.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anfis::{self, AnfisModel, Dataset};
use crate::features::{ClassLabel, FeatureVector};
use crate::optimize::{self, aco_run, ica_run, AcoConfig, IcaConfig, Objective};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Anfis(#[from] anfis::AnfisError),
    #[error(transparent)]
    Optimize(#[from] optimize::OptimizeError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
}

/// Counts of prediction outcomes with melanoma as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub false_pos: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_neg + self.true_neg + self.false_pos
    }

    /// `(TP + TN) / (TP + FN + FP + TN)`.
    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let total = self.total();
        if total == 0 {
            return Err(EvalError::InvalidArgument("empty confusion matrix".into()));
        }
        Ok((self.true_pos + self.true_neg) as f64 / total as f64)
    }

    /// True positive rate `TP / (TP + FN)`; undefined without positives.
    pub fn sensitivity(&self) -> Result<f64, EvalError> {
        let denom = self.true_pos + self.false_neg;
        if denom == 0 {
            return Err(EvalError::UndefinedMetric(
                "sensitivity needs at least one positive sample".into(),
            ));
        }
        Ok(self.true_pos as f64 / denom as f64)
    }

    /// True negative rate `TN / (TN + FP)`; undefined without negatives.
    /// Reported alongside the two headline metrics as an extension.
    pub fn specificity(&self) -> Result<f64, EvalError> {
        let denom = self.true_neg + self.false_pos;
        if denom == 0 {
            return Err(EvalError::UndefinedMetric(
                "specificity needs at least one negative sample".into(),
            ));
        }
        Ok(self.true_neg as f64 / denom as f64)
    }
}

/// Tally predictions against reference labels.
pub fn confusion(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::InvalidArgument(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        match (l, p) {
            (ClassLabel::Melanoma, ClassLabel::Melanoma) => cm.true_pos += 1,
            (ClassLabel::Melanoma, ClassLabel::NormalMole) => cm.false_neg += 1,
            (ClassLabel::NormalMole, ClassLabel::NormalMole) => cm.true_neg += 1,
            (ClassLabel::NormalMole, ClassLabel::Melanoma) => cm.false_pos += 1,
        }
    }
    Ok(cm)
}

fn class_indices(data: &[FeatureVector]) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut normal = Vec::new();
    let mut melanoma = Vec::new();
    for (i, fv) in data.iter().enumerate() {
        match fv.label {
            Some(ClassLabel::NormalMole) => normal.push(i),
            Some(ClassLabel::Melanoma) => melanoma.push(i),
            None => {
                return Err(EvalError::InvalidArgument(format!(
                    "sample {i} has no label"
                )))
            }
        }
    }
    Ok((normal, melanoma))
}

/// Largest-remainder allocation of `total` slots across groups proportional
/// to `fraction * group_size`; ties favor earlier groups.
fn allocate(group_sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = group_sizes
        .iter()
        .map(|n| (fraction * *n as f64).floor() as usize)
        .collect();
    let mut fracs: Vec<(usize, f64)> = group_sizes
        .iter()
        .enumerate()
        .map(|(i, n)| (i, fraction * *n as f64 - counts[i] as f64))
        .collect();
    // stable order: larger fractional part first, then group order
    fracs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut assigned: usize = counts.iter().sum();
    let mut cursor = 0;
    while assigned < total && cursor < fracs.len() {
        let g = fracs[cursor].0;
        if counts[g] < group_sizes[g] {
            counts[g] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    counts
}

/// Stratified shuffle split. Each class is shuffled and cut at
/// `floor(train_fraction * n_class)`; when the per-class floors fall short
/// of `floor(train_fraction * n_total)`, the class with the largest
/// fractional remainder takes the extra slot. Output order follows the
/// input order within each side.
pub fn split(
    data: &[FeatureVector],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>), EvalError> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(EvalError::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let (normal, melanoma) = class_indices(data)?;
    for (name, class) in [("normal", &normal), ("melanoma", &melanoma)] {
        if class.len() < 2 {
            return Err(EvalError::InvalidArgument(format!(
                "class {name} has {} samples; need at least 2",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = [normal, melanoma];
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let sizes = [groups[0].len(), groups[1].len()];
    let total_train = (train_fraction * data.len() as f64).floor() as usize;
    let counts = allocate(&sizes, train_fraction, total_train);

    let mut train_idx = Vec::with_capacity(total_train);
    let mut test_idx = Vec::with_capacity(data.len() - total_train);
    for (g, count) in groups.iter().zip(&counts) {
        train_idx.extend_from_slice(&g[..*count]);
        test_idx.extend_from_slice(&g[*count..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let train = train_idx.iter().map(|i| data[*i].clone()).collect();
    let test = test_idx.iter().map(|i| data[*i].clone()).collect();
    Ok((train, test))
}

/// Stratified subsample of exactly `size` rows (largest-remainder per
/// class), deterministic for a seed.
pub fn stratified_subsample(
    data: &[FeatureVector],
    size: usize,
    seed: u64,
) -> Result<Vec<FeatureVector>, EvalError> {
    if size == 0 || size > data.len() {
        return Err(EvalError::InvalidArgument(format!(
            "subset size {size} out of range 1..={}",
            data.len()
        )));
    }
    let (normal, melanoma) = class_indices(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = [normal, melanoma];
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let sizes = [groups[0].len(), groups[1].len()];
    let fraction = size as f64 / data.len() as f64;
    let counts = allocate(&sizes, fraction, size);
    let mut idx = Vec::with_capacity(size);
    for (g, count) in groups.iter().zip(&counts) {
        idx.extend_from_slice(&g[..(*count).min(g.len())]);
    }
    idx.sort_unstable();
    Ok(idx.iter().map(|i| data[*i].clone()).collect())
}

/// Training method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    IcaAnfis,
    GdAnfis,
    AcoAnfis,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::IcaAnfis, Method::GdAnfis, Method::AcoAnfis];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::IcaAnfis => "ica_anfis",
            Method::GdAnfis => "gd_anfis",
            Method::AcoAnfis => "aco_anfis",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ica_anfis" | "ica" => Ok(Method::IcaAnfis),
            "gd_anfis" | "gd" => Ok(Method::GdAnfis),
            "aco_anfis" | "aco" => Ok(Method::AcoAnfis),
            other => Err(EvalError::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gradient-descent baseline settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, iterations: 200 }
    }
}

/// Everything needed to train and score one method on one split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetup {
    pub n_rules: usize,
    pub standardize: bool,
    pub split_fraction: f64,
    pub ica: IcaConfig,
    pub aco: AcoConfig,
    pub gd: GdConfig,
}

impl Default for TrainingSetup {
    fn default() -> Self {
        Self {
            n_rules: 10,
            standardize: true,
            split_fraction: 0.7,
            ica: IcaConfig::default(),
            aco: AcoConfig::default(),
            gd: GdConfig::default(),
        }
    }
}

/// Seed roles derived from a run seed so the split, the model
/// initialization, and each optimizer get independent streams.
mod seed_tag {
    pub const MODEL: u64 = 1;
    pub const ICA: u64 = 2;
    pub const ACO: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
}

/// Metrics and provenance for one trained-and-scored run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub seed: u64,
    /// Rows available to the run (before the train/test split).
    pub subset_size: usize,
    /// Optimizer iteration budget.
    pub iterations: usize,
    pub train_confusion: ConfusionMatrix,
    pub test_confusion: ConfusionMatrix,
    /// Best training cost per optimizer iteration (loss history for GD).
    pub history: Vec<f64>,
    /// JSON snapshot of the [`TrainingSetup`] that produced the run.
    pub config_snapshot: String,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn train_accuracy(&self) -> f64 {
        self.train_confusion.accuracy().unwrap_or(0.0)
    }

    pub fn test_accuracy(&self) -> f64 {
        self.test_confusion.accuracy().unwrap_or(0.0)
    }

    pub fn train_sensitivity(&self) -> f64 {
        self.train_confusion.sensitivity().unwrap_or(0.0)
    }

    pub fn test_sensitivity(&self) -> f64 {
        self.test_confusion.sensitivity().unwrap_or(0.0)
    }
}

/// Train one method on already-standardized features.
///
/// Returns the model and its per-iteration training-cost history.
pub fn train_method(
    train: &[FeatureVector],
    method: Method,
    setup: &TrainingSetup,
    seed: u64,
) -> Result<(AnfisModel, Vec<f64>), EvalError> {
    let data = Dataset::from_features(train)?;
    let n_inputs = data.n_inputs();
    match method {
        Method::GdAnfis => {
            let init = anfis::new_model(setup.n_rules, &data, optimize::derive_seed(seed, seed_tag::MODEL))?;
            let (model, history) =
                anfis::train_gradient(&init, &data, setup.gd.learning_rate, setup.gd.iterations)?;
            Ok((model, history))
        }
        Method::IcaAnfis | Method::AcoAnfis => {
            let bounds = anfis::parameter_bounds(n_inputs, setup.n_rules);
            let n_rules = setup.n_rules;
            let data_for_eval = data.clone();
            let objective = Objective::new(bounds, move |params| {
                match AnfisModel::unflatten(n_inputs, n_rules, params) {
                    Ok(model) => model.loss(&data_for_eval).unwrap_or(f64::INFINITY),
                    Err(_) => f64::INFINITY,
                }
            })?;
            let result = match method {
                Method::IcaAnfis => {
                    let cfg = IcaConfig { seed: optimize::derive_seed(seed, seed_tag::ICA), ..setup.ica.clone() };
                    ica_run(&objective, &cfg)?
                }
                _ => {
                    let cfg = AcoConfig { seed: optimize::derive_seed(seed, seed_tag::ACO), ..setup.aco.clone() };
                    aco_run(&objective, &cfg)?
                }
            };
            let model = AnfisModel::unflatten(n_inputs, setup.n_rules, &result.best_position)?;
            Ok((model, result.history))
        }
    }
}

/// Score a model against labeled (standardized) features.
pub fn evaluate_model(model: &AnfisModel, data: &[FeatureVector]) -> Result<ConfusionMatrix, EvalError> {
    if data.is_empty() {
        return Err(EvalError::InvalidArgument("no samples to evaluate".into()));
    }
    let mut predictions = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for fv in data {
        let label = fv
            .label
            .ok_or_else(|| EvalError::InvalidArgument("unlabeled sample in evaluation".into()))?;
        predictions.push(model.predict(&fv.values));
        labels.push(label);
    }
    confusion(&predictions, &labels)
}

fn run_once(
    features: &[FeatureVector],
    method: Method,
    setup: &TrainingSetup,
    seed: u64,
    subset_size: usize,
    iterations_override: Option<usize>,
) -> Result<RunReport, EvalError> {
    let started = Instant::now();
    let (train_raw, test_raw) = split(features, setup.split_fraction, seed)?;
    let (train, test) = if setup.standardize {
        let (train_std, test_std, _) = crate::features::standardize(&train_raw, &test_raw)?;
        (train_std, test_std)
    } else {
        (train_raw, test_raw)
    };

    let mut setup = setup.clone();
    if let Some(iters) = iterations_override {
        setup.ica.iterations = iters;
        setup.aco.iterations = iters;
        setup.gd.iterations = iters;
    }
    let iterations = match method {
        Method::IcaAnfis => setup.ica.iterations,
        Method::AcoAnfis => setup.aco.iterations,
        Method::GdAnfis => setup.gd.iterations,
    };

    let (model, history) = train_method(&train, method, &setup, seed)?;
    let train_confusion = evaluate_model(&model, &train)?;
    let test_confusion = evaluate_model(&model, &test)?;
    Ok(RunReport {
        method: method.as_str().to_string(),
        seed,
        subset_size,
        iterations,
        train_confusion,
        test_confusion,
        history,
        config_snapshot: serde_json::to_string(&setup).expect("setup serializes"),
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Train and score each method on the same per-seed split; reports are
/// ordered by (method, seed).
pub fn compare_methods(
    features: &[FeatureVector],
    methods: &[Method],
    seeds: &[u64],
    setup: &TrainingSetup,
) -> Result<Vec<RunReport>, EvalError> {
    if seeds.is_empty() {
        return Err(EvalError::InvalidArgument("need at least one seed".into()));
    }
    let jobs: Vec<(usize, Method, u64)> = methods
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| seeds.iter().map(move |s| (mi, *m, *s)))
        .collect();
    let mut reports: Vec<(usize, u64, RunReport)> = jobs
        .par_iter()
        .map(|(mi, method, seed)| {
            run_once(features, *method, setup, *seed, features.len(), None).map(|r| (*mi, *seed, r))
        })
        .collect::<Result<_, _>>()?;
    reports.sort_by_key(|(mi, seed, _)| (*mi, *seed));
    Ok(reports.into_iter().map(|(_, _, r)| r).collect())
}

/// Grid cell sweep: for each (subset size, iteration budget, seed) train the
/// primary method on a stratified subsample. Reports are ordered by
/// (size, iterations, seed).
pub fn convergence_sweep(
    features: &[FeatureVector],
    subset_sizes: &[usize],
    iteration_counts: &[usize],
    seeds: &[u64],
    setup: &TrainingSetup,
) -> Result<Vec<RunReport>, EvalError> {
    if let Some(max) = subset_sizes.iter().max() {
        if *max > features.len() {
            return Err(EvalError::InvalidArgument(format!(
                "subset size {max} exceeds dataset size {}",
                features.len()
            )));
        }
    }
    if subset_sizes.is_empty() || iteration_counts.is_empty() || seeds.is_empty() {
        return Err(EvalError::InvalidArgument("empty sweep grid".into()));
    }
    let cells: Vec<(usize, usize, u64)> = subset_sizes
        .iter()
        .flat_map(|size| {
            iteration_counts
                .iter()
                .flat_map(move |iters| seeds.iter().map(move |s| (*size, *iters, *s)))
        })
        .collect();
    let mut reports: Vec<((usize, usize, u64), RunReport)> = cells
        .par_iter()
        .map(|(size, iters, seed)| {
            let sub = stratified_subsample(
                features,
                *size,
                optimize::derive_seed(*seed, seed_tag::SUBSAMPLE ^ (*size as u64)),
            )?;
            run_once(&sub, Method::IcaAnfis, setup, *seed, *size, Some(*iters))
                .map(|r| ((*size, *iters, *seed), r))
        })
        .collect::<Result<_, _>>()?;
    reports.sort_by_key(|(key, _)| *key);
    Ok(reports.into_iter().map(|(_, r)| r).collect())
}

/// Report CSV header (one row per report and split side).
pub const REPORT_CSV_HEADER: &str =
    "method,seed,split,subset_size,iterations,accuracy,sensitivity,specificity,tp,fn,tn,fp,wall_seconds";

/// Render reports as CSV rows under [`REPORT_CSV_HEADER`].
pub fn report_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        for (split_name, cm) in [("train", &r.train_confusion), ("test", &r.test_confusion)] {
            let accuracy = cm.accuracy().map(|v| format!("{v}")).unwrap_or_default();
            let sensitivity = cm.sensitivity().map(|v| format!("{v}")).unwrap_or_default();
            let specificity = cm.specificity().map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}\n",
                r.method,
                r.seed,
                split_name,
                r.subset_size,
                r.iterations,
                accuracy,
                sensitivity,
                specificity,
                cm.true_pos,
                cm.false_neg,
                cm.true_neg,
                cm.false_pos,
                r.wall_seconds
            ));
        }
    }
    out
}

/// Mean metrics per method, as an aligned plain-text table (training and
/// test columns for accuracy and sensitivity, specificity appended).
pub fn summary_table(reports: &[RunReport]) -> String {
    let mut methods: Vec<String> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut out = format!(
        "{:<12} {:>6} {:>15} {:>15} {:>18} {:>18} {:>18}\n",
        "method", "runs", "train_accuracy", "test_accuracy", "train_sensitivity", "test_sensitivity", "test_specificity"
    );
    for m in &methods {
        let rows: Vec<&RunReport> = reports.iter().filter(|r| r.method == *m).collect();
        let n = rows.len() as f64;
        let mean = |f: &dyn Fn(&RunReport) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        out.push_str(&format!(
            "{:<12} {:>6} {:>15.4} {:>15.4} {:>18.4} {:>18.4} {:>18.4}\n",
            m,
            rows.len(),
            mean(&|r: &RunReport| r.train_accuracy()),
            mean(&|r: &RunReport| r.test_accuracy()),
            mean(&|r: &RunReport| r.train_sensitivity()),
            mean(&|r: &RunReport| r.test_sensitivity()),
            mean(&|r: &RunReport| r.test_confusion.specificity().unwrap_or(0.0)),
        ));
    }
    out
}

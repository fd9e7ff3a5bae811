//! Datasets, metrics, plaintext reference training and cross-validation.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::piecewise::{logistic, SigmoidKind};
use crate::sim::SimOptions;
use crate::trainer::{
    batch_schedule, initial_weights, l2_mask, learning_rate, ClassWeights, TrainConfig,
};

/// Row-major feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, x: Vec<f64>, y: Vec<u8>) -> Result<Self> {
        if x.len() != rows * cols || y.len() != rows {
            return Err(Error::Data(format!(
                "{rows}x{cols} dataset given {} features and {} labels",
                x.len(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("features contain NaN or infinity".into()));
        }
        Ok(Dataset {
            rows,
            cols,
            x,
            y,
            feature_names: None,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.cols..(r + 1) * self.cols]
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Dataset {
            rows: rows.len(),
            cols: self.cols,
            x,
            y: rows.iter().map(|&r| self.y[r]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.cols != other.cols {
            return Err(Error::Data(format!(
                "cannot stack {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut x = self.x.clone();
        x.extend_from_slice(&other.x);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(Dataset {
            rows: self.rows + other.rows,
            cols: self.cols,
            x,
            y,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Per-column z-score. Constant columns are only centered.
    pub fn standardize(&mut self) {
        if self.rows == 0 {
            return;
        }
        let n = self.rows as f64;
        for c in 0..self.cols {
            let mean = (0..self.rows)
                .map(|r| self.x[r * self.cols + c])
                .sum::<f64>()
                / n;
            let var = (0..self.rows)
                .map(|r| (self.x[r * self.cols + c] - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            for r in 0..self.rows {
                let v = &mut self.x[r * self.cols + c];
                *v -= mean;
                if sd > 1e-12 {
                    *v /= sd;
                }
            }
        }
    }

    /// Keeps the named columns in the given order. Unknown names are
    /// skipped and reported; duplicates are dropped.
    pub fn select_columns(&self, names: &[String]) -> Result<(Dataset, Vec<String>)> {
        let have = self
            .feature_names
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no column names to select from".into()))?;
        let mut seen = HashSet::new();
        let mut idx = Vec::new();
        let mut warnings = Vec::new();
        for name in names {
            if !seen.insert(name.as_str()) {
                continue;
            }
            match have.iter().position(|h| h == name) {
                Some(i) => idx.push(i),
                None => warnings.push(format!("column {name:?} not found, skipped")),
            }
        }
        if idx.is_empty() {
            return Err(Error::Data("no selected columns remain".into()));
        }
        let mut x = Vec::with_capacity(self.rows * idx.len());
        for r in 0..self.rows {
            let row = self.row(r);
            x.extend(idx.iter().map(|&i| row[i]));
        }
        Ok((
            Dataset {
                rows: self.rows,
                cols: idx.len(),
                x,
                y: self.y.clone(),
                feature_names: Some(idx.iter().map(|&i| have[i].clone()).collect()),
            },
            warnings,
        ))
    }
}

/// Reads one column name per line, ignoring blank lines.
pub fn read_names_file(path: &Path) -> Result<Vec<String>> {
    let names: Vec<String> = std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if names.is_empty() {
        return Err(Error::Data(format!(
            "{} lists no column names",
            path.display()
        )));
    }
    Ok(names)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum LabelColumn {
    #[default]
    Last,
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label: LabelColumn,
    pub standardize: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            label: LabelColumn::Last,
            standardize: true,
        }
    }
}

fn parse_label(s: &str, line: usize) -> Result<u8> {
    match s.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::Data(format!(
            "line {line}: label {other:?} is not 0 or 1"
        ))),
    }
}

pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Option<Vec<String>> = if opts.has_header {
        Some(rdr.headers()?.iter().map(String::from).collect())
    } else {
        None
    };
    let mut label_idx: Option<usize> = match (&opts.label, &header) {
        (LabelColumn::Name(n), Some(h)) => Some(
            h.iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::Data(format!("no column named {n:?}")))?,
        ),
        (LabelColumn::Name(n), None) => {
            return Err(Error::Data(format!(
                "label column {n:?} given by name but the file has no header"
            )))
        }
        (LabelColumn::Last, Some(h)) => Some(
            h.len()
                .checked_sub(1)
                .ok_or_else(|| Error::Data("empty header".into()))?,
        ),
        (LabelColumn::Last, None) => None,
    };

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = k + 1 + opts.has_header as usize;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Data(format!(
                "line {line}: expected {w} fields, got {}",
                rec.len()
            )));
        }
        if w < 2 {
            return Err(Error::Data("need at least one feature and a label".into()));
        }
        let li = *label_idx.get_or_insert(w - 1);
        for (c, field) in rec.iter().enumerate() {
            if c == li {
                y.push(parse_label(field, line)?);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("line {line}: {field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "line {line}: non-finite value {field:?}"
                    )));
                }
                x.push(v);
            }
        }
    }
    let rows = y.len();
    if rows == 0 {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }
    let cols = x.len() / rows;
    let mut d = Dataset::new(rows, cols, x, y)?;
    if let (Some(h), Some(li)) = (header, label_idx) {
        d.feature_names = Some(
            h.into_iter()
                .enumerate()
                .filter(|&(i, _)| i != li)
                .map(|(_, n)| n)
                .collect(),
        );
    }
    if opts.standardize {
        d.standardize();
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub balanced_accuracy: f64,
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Result<Self> {
        if tp + fn_ == 0 {
            return Err(Error::UndefinedMetric(
                "no positive labels, TP/(TP+FN) undefined".into(),
            ));
        }
        if tn + fp == 0 {
            return Err(Error::UndefinedMetric(
                "no negative labels, TN/(FP+TN) undefined".into(),
            ));
        }
        let sensitivity = tp as f64 / (tp + fn_) as f64;
        let specificity = tn as f64 / (tn + fp) as f64;
        Ok(MetricsReport {
            tp,
            fp,
            tn,
            fn_,
            sensitivity,
            specificity,
            balanced_accuracy: (sensitivity + specificity) / 2.0,
        })
    }
}

/// Scores are probabilities; a score of at least 0.5 predicts class 1.
pub fn balanced_accuracy(scores: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= 0.5, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    MetricsReport::from_counts(tp, fp, tn, fn_)
}

/// Trained model in plaintext: feature weights plus optional intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
}

impl LinearModel {
    /// Splits a raw weight vector, whose last entry is the intercept when
    /// one was fitted.
    pub fn from_raw(mut raw: Vec<f64>, fit_intercept: bool) -> Self {
        let intercept = if fit_intercept { raw.pop() } else { None };
        LinearModel {
            weights: raw,
            intercept,
        }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        let dot: f64 = row.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        dot + self.intercept.unwrap_or(0.0)
    }

    pub fn scores(&self, d: &Dataset) -> Vec<f64> {
        (0..d.rows)
            .map(|r| logistic(self.margin(d.row(r))))
            .collect()
    }

    pub fn evaluate(&self, d: &Dataset) -> Result<MetricsReport> {
        balanced_accuracy(&self.scores(d), &d.y)
    }
}

/// Sigmoid used by the plaintext trainer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleSigmoid {
    Approx(SigmoidKind),
    Exact,
}

impl OracleSigmoid {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            OracleSigmoid::Approx(k) => k.eval_plain(x),
            OracleSigmoid::Exact => logistic(x),
        }
    }
}

/// Real-arithmetic trainer following the shared trainer step for step:
/// same initial weights, batch order, schedule and penalty. Returns the raw
/// weight vector (intercept last when fitted).
pub fn plaintext_oracle_train(
    d: &Dataset,
    cfg: &TrainConfig,
    sigmoid: OracleSigmoid,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    cfg.check_rows(d.rows)?;
    let f = d.cols + cfg.fit_intercept as usize;
    let row = |r: usize| -> Vec<f64> {
        let mut v = d.row(r).to_vec();
        if cfg.fit_intercept {
            v.push(1.0);
        }
        v
    };
    let cw = if cfg.class_weighting {
        Some(ClassWeights::from_counts(
            d.rows - d.positives(),
            d.positives(),
        )?)
    } else {
        None
    };
    let mask = l2_mask(f, cfg.fit_intercept);
    let mut w = initial_weights(f, cfg.seed);
    for (t, rows) in batch_schedule(d.rows, cfg.batch_size, cfg.iterations, cfg.seed)
        .into_iter()
        .enumerate()
    {
        let mut g = vec![0.0; f];
        for &r in &rows {
            let xr = row(r);
            let out: f64 = xr.iter().zip(&w).map(|(a, b)| a * b).sum();
            let y = d.y[r] as f64;
            let mut dy = sigmoid.eval(out) - y;
            if let Some(cw) = &cw {
                dy *= cw.weight(y);
            }
            for (gj, xj) in g.iter_mut().zip(&xr) {
                *gj += xj * dy;
            }
        }
        let eta = learning_rate(t, cfg);
        let b = rows.len() as f64;
        for j in 0..f {
            let mut step = eta * g[j] / b;
            if cfg.l2 {
                step += eta * cfg.lambda / d.rows as f64 * mask[j] * w[j];
            }
            w[j] -= step;
        }
    }
    Ok(w)
}

/// Test-row indices of `k` folds, stratified by label: each class is
/// shuffled with the seed and dealt round-robin.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot make {k} folds from {} rows",
            labels.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// How each fold's model is trained.
#[derive(Clone, Debug)]
pub enum CvBackend {
    /// Three simulated parties; the dataset is dealt by party 0.
    Mpc(SimOptions),
    Plaintext(OracleSigmoid),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub fold_metrics: Vec<MetricsReport>,
    pub mean_balanced_accuracy: f64,
    pub std_balanced_accuracy: f64,
}

/// Stratified k-fold cross-validation. Fold `i` trains with seed
/// `cfg.seed + i`. Folds run concurrently when the parallel feature is on.
pub fn kfold_cv(d: &Dataset, k: usize, cfg: &TrainConfig, backend: &CvBackend) -> Result<CvReport> {
    let folds = stratified_folds(&d.y, k, cfg.seed)?;
    let jobs: Vec<usize> = (0..k).collect();
    let exec = if Exec::is_parallel_available() {
        Exec::Parallel
    } else {
        Exec::Sequential
    };
    let results = par::map_items(exec, &jobs, |&i| -> Result<MetricsReport> {
        let test: HashSet<usize> = folds[i].iter().copied().collect();
        let train_rows: Vec<usize> = (0..d.rows).filter(|r| !test.contains(r)).collect();
        let train = d.subset(&train_rows);
        let held = d.subset(&folds[i]);
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let raw = match backend {
            CvBackend::Plaintext(s) => plaintext_oracle_train(&train, &fold_cfg, *s)?,
            CvBackend::Mpc(opts) => {
                let opts = SimOptions {
                    session_id: opts.session_id.wrapping_add(i as u64),
                    ..opts.clone()
                };
                crate::driver::simulate_training(&[train], &fold_cfg, &opts)?.weights
            }
        };
        LinearModel::from_raw(raw, cfg.fit_intercept).evaluate(&held)
    });
    let fold_metrics: Vec<MetricsReport> = results.into_iter().collect::<Result<_>>()?;
    let accs: Vec<f64> = fold_metrics.iter().map(|m| m.balanced_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / k as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(CvReport {
        folds: k,
        fold_metrics,
        mean_balanced_accuracy: mean,
        std_balanced_accuracy: var.sqrt(),
    })
}

/// Synthetic data generators for tests and benchmarks.
pub mod synthetic {
    use super::*;

    fn normal_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Vec<f64> {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        (0..rows * cols).map(|_| n.sample(rng)).collect()
    }

    /// Two Gaussian blobs separated by a wide margin along a random
    /// direction; perfectly linearly separable.
    pub fn separable(rows: usize, cols: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut dir = normal_matrix(&mut rng, 1, cols);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let mut x = normal_matrix(&mut rng, rows, cols);
        let mut y = Vec::with_capacity(rows);
        for r in 0..rows {
            let label = (r % 2) as u8;
            let row = &mut x[r * cols..(r + 1) * cols];
            // remove the component along dir, then place the point on its side
            let proj: f64 = row.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let offset = if label == 1 { 3.0 } else { -3.0 } + rng.random_range(-1.0..1.0);
            for (v, d) in row.iter_mut().zip(&dir) {
                *v += (offset - proj) * d;
            }
            y.push(label);
        }
        Dataset::new(rows, cols, x, y).expect("consistent shape")
    }

    /// Logistic-model data where a `minority_fraction` of rows are
    /// positives, made by shifting the minority class along a few features.
    pub fn imbalanced(rows: usize, cols: usize, minority_fraction: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n_pos = ((rows as f64) * minority_fraction).round() as usize;
        let mut x = normal_matrix(&mut rng, rows, cols);
        let mut y = vec![0u8; rows];
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut rng);
        let informative = cols.min(5);
        for &r in &order[..n_pos] {
            y[r] = 1;
            for c in 0..informative {
                x[r * cols + c] += 1.0;
            }
        }
        Dataset::new(rows, cols, x, y).expect("consistent shape")
    }

    /// Gene-expression-shaped data: standardized Gaussian features of which
    /// the first `informative` carry signal. A row is positive when its
    /// signal plus logistic noise of scale `1 / sharpness` lands in the top
    /// `positive_fraction`, so `P(y = 1)` is a logistic function of the
    /// signal and the class counts are exact.
    pub fn expression_like(
        rows: usize,
        cols: usize,
        informative: usize,
        positive_fraction: f64,
        sharpness: f64,
        seed: u64,
    ) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, rows, cols);
        let informative = informative.clamp(1, cols);
        let beta = normal_matrix(&mut rng, 1, informative);
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        let mut noisy: Vec<(f64, usize)> = (0..rows)
            .map(|r| {
                let s: f64 = (0..informative)
                    .map(|c| beta[c] / norm * x[r * cols + c])
                    .sum();
                let u: f64 = rng.random_range(1e-12..1.0);
                (s + (u / (1.0 - u)).ln() / sharpness, r)
            })
            .collect();
        noisy.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n_pos = ((rows as f64) * positive_fraction).round() as usize;
        let mut y = vec![0u8; rows];
        for &(_, r) in &noisy[..n_pos] {
            y[r] = 1;
        }
        let mut d = Dataset::new(rows, cols, x, y).expect("consistent shape");
        d.standardize();
        d
    }

    /// The 225 x 67 shape with 142 positives and 83 negatives.
    pub fn gse_like(seed: u64) -> Dataset {
        expression_like(225, 67, 20, 142.0 / 225.0, 2.0, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let m = MetricsReport::from_counts(9, 4, 4, 1).unwrap();
        assert!((m.balanced_accuracy - 0.7).abs() < 1e-12);
        let labels = [1u8, 0, 1, 0];
        let perfect = balanced_accuracy(&[0.9, 0.1, 0.6, 0.4], &labels).unwrap();
        assert_eq!(perfect.balanced_accuracy, 1.0);
        let mut y = vec![0u8; 90];
        y.extend([1u8; 10]);
        let majority = balanced_accuracy(&vec![0.0; 100], &y).unwrap();
        assert_eq!(majority.balanced_accuracy, 0.5);
        assert!(matches!(
            balanced_accuracy(&[0.7, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn folds_are_stratified_partition() {
        let mut y = vec![0u8; 83];
        y.extend(vec![1u8; 142]);
        let folds = stratified_folds(&y, 10, 4).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..225).collect::<Vec<_>>());
        let pos: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| y[i] == 1).count())
            .collect();
        let neg: Vec<usize> = folds
            .iter()
            .map(|f| f.len())
            .zip(&pos)
            .map(|(a, b)| a - b)
            .collect();
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        assert!(neg.iter().max().unwrap() - neg.iter().min().unwrap() <= 1);
        assert_eq!(folds, stratified_folds(&y, 10, 4).unwrap());
    }

    #[test]
    fn oracle_zero_iterations_keeps_init() {
        let d = synthetic::separable(20, 3, 1);
        let cfg = TrainConfig {
            iterations: 0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let w = plaintext_oracle_train(&d, &cfg, OracleSigmoid::Exact).unwrap();
        assert_eq!(w, initial_weights(4, cfg.seed));
    }

    #[test]
    fn gse_shape() {
        let d = synthetic::gse_like(1);
        assert_eq!((d.rows, d.cols), (225, 67));
        assert_eq!(d.positives(), 142);
    }
}

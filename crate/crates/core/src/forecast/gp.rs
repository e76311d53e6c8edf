use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{encode, ModelKind, WINDOW_HOURS};
use super::kernel::KernelHyperparameters;
use super::season::{Season, SeasonTable};
use super::{DemandHistory, ForecastError};
use crate::timeutil::{format_timestamp, from_hour_index, hour_index, parse_timestamp};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Affine maps to and from the standardized space the kernel operates in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self { x_mean: vec![0.0; dim], x_std: vec![1.0; dim], y_mean: 0.0, y_std: 1.0 }
    }

    /// Column means and population standard deviations. Constant columns
    /// keep scale 1.
    pub fn from_data(x: &[Vec<f64>], y: &[f64]) -> Self {
        let dim = x.first().map_or(0, |r| r.len());
        let mut x_mean = vec![0.0; dim];
        let mut x_std = vec![1.0; dim];
        for d in 0..dim {
            (x_mean[d], x_std[d]) = moments(x.iter().map(|r| r[d]));
        }
        let (y_mean, y_std) = moments(y.iter().copied());
        Self { x_mean, x_std, y_mean, y_std }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_mean).zip(&self.x_std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }
}

fn moments(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = vals.collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt();
    (m, if s > 1e-12 { s } else { 1.0 })
}

/// Feature rows and targets, tagged with the absolute hour of each target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRows {
    pub hours: Vec<i64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl ConditioningRows {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows for history indices `[from, to)`.
    pub fn from_history(kind: ModelKind, history: &DemandHistory, from: usize, to: usize) -> Result<Self, ForecastError> {
        let mut rows = Self::default();
        let series = kind.series(history);
        for k in from..to {
            rows.hours.push(history.start_hour() + k as i64);
            rows.x.push(encode(kind, k, history)?.values);
            rows.y.push(series[k]);
        }
        Ok(rows)
    }

    fn is_contiguous(&self) -> bool {
        self.hours.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Projected-gradient norm at which a restart counts as converged.
    pub grad_tol: f64,
    /// Evenly spaced subsample of the season's rows used for tuning.
    pub max_train_rows: usize,
    /// Length of the conditioning window attached to the fitted model.
    pub window_hours: usize,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 200,
            grad_tol: 1e-5,
            max_train_rows: 400,
            window_hours: 90 * 24,
            noise_floor: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// In standardized units.
    pub log_marginal_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts_converged: usize,
    pub train_rows: usize,
}

/// Gaussian-process one-step predictor with a cached factorization.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub kind: ModelKind,
    pub season: Season,
    hp: KernelHyperparameters,
    standardization: Standardization,
    rows: ConditioningRows,
    pub diagnostics: Option<FitDiagnostics>,
    // rows scaled by lengthscales, row-major n×dim
    scaled: Vec<f64>,
    // linear inputs times sqrt of their variances, row-major n×n_lin
    linear: Vec<f64>,
    chol: DMatrix<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpModel {
    /// Conditions a model on `rows` with fixed hyperparameters.
    pub fn build(
        kind: ModelKind,
        season: Season,
        hp: KernelHyperparameters,
        standardization: Standardization,
        rows: ConditioningRows,
    ) -> Result<Self, ForecastError> {
        hp.validate()?;
        let dim = hp.dim();
        if standardization.dim() != dim {
            return Err(ForecastError::DimensionMismatch { expected: dim, got: standardization.dim() });
        }
        if rows.x.len() != rows.y.len() || rows.hours.len() != rows.y.len() {
            return Err(ForecastError::InvalidHistory("conditioning rows have inconsistent lengths".into()));
        }
        if let Some(r) = rows.x.iter().find(|r| r.len() != dim) {
            return Err(ForecastError::DimensionMismatch { expected: dim, got: r.len() });
        }
        let n = rows.len();
        let mut scaled = Vec::with_capacity(n * dim);
        let mut linear = Vec::with_capacity(n * hp.linear_dims.len());
        for x in &rows.x {
            let z = standardization.x(x);
            scaled.extend(z.iter().zip(&hp.rbf_lengthscales).map(|(v, l)| v / l));
            linear.extend(hp.linear_dims.iter().zip(&hp.linear_variance).map(|(&d, v)| v.sqrt() * z[d]));
        }
        let ys: Vec<f64> = rows.y.iter().map(|&y| standardization.y(y)).collect();
        let gram = gram_matrix(&hp, &scaled, &linear, n);
        let (chol, jitter) = cholesky_with_jitter(gram, hp.noise_variance)?;
        let alpha = cholesky_solve(&chol, &ys);
        Ok(Self { kind, season, hp, standardization, rows, diagnostics: None, scaled, linear, chol, alpha, jitter })
    }

    pub fn hyperparameters(&self) -> &KernelHyperparameters {
        &self.hp
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn rows(&self) -> &ConditioningRows {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.hp.dim()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Jitter added to the diagonal on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular Cholesky factor of the Gram-plus-noise matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Prior variance `k(x*, x*)` in target units.
    pub fn prior_variance(&self, x: &[f64]) -> Result<f64, ForecastError> {
        self.check_dim(x)?;
        let z = self.standardization.x(x);
        Ok(self.standardization.y_std.powi(2) * self.self_kernel(&z))
    }

    /// Latent posterior mean and variance at `x` in target units.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64), ForecastError> {
        Ok(self.posterior_batch(&[x])?[0])
    }

    /// [`posterior`](Self::posterior) for several inputs with one pass over
    /// the Cholesky factor.
    pub fn posterior_batch(&self, xs: &[&[f64]]) -> Result<Vec<(f64, f64)>, ForecastError> {
        for x in xs {
            self.check_dim(x)?;
        }
        let m = xs.len();
        let n = self.len();
        let dim = self.dim();
        let n_lin = self.hp.linear_dims.len();
        let sf2 = self.hp.rbf_signal_variance;
        let zs: Vec<Vec<f64>> = xs.iter().map(|x| self.standardization.x(x)).collect();
        let scaled: Vec<Vec<f64>> =
            zs.iter().map(|z| z.iter().zip(&self.hp.rbf_lengthscales).map(|(v, l)| v / l).collect()).collect();
        let lin_in: Vec<Vec<f64>> = zs
            .iter()
            .map(|z| self.hp.linear_dims.iter().zip(&self.hp.linear_variance).map(|(&d, v)| v.sqrt() * z[d]).collect())
            .collect();
        // k* for all inputs, row-major n×m
        let mut kst = vec![0.0; n * m];
        let mut means = vec![0.0; m];
        for i in 0..n {
            let row = &self.scaled[i * dim..(i + 1) * dim];
            let lin_row = &self.linear[i * n_lin..(i + 1) * n_lin];
            for r in 0..m {
                let mut r2 = 0.0;
                for d in 0..dim {
                    let u = row[d] - scaled[r][d];
                    r2 += u * u;
                }
                let lin: f64 = lin_row.iter().zip(&lin_in[r]).map(|(a, b)| a * b).sum();
                let k = sf2 * (-0.5 * r2).exp() + lin;
                kst[i * m + r] = k;
                means[r] += k * self.alpha[i];
            }
        }
        // L⁻¹ k*, column by column of L
        let data = self.chol.as_slice();
        let mut v = vec![0.0; m];
        for j in 0..n {
            let col = &data[j * n..(j + 1) * n];
            let (head, tail) = kst.split_at_mut((j + 1) * m);
            let bj = &mut head[j * m..];
            for r in 0..m {
                bj[r] /= col[j];
                v[r] = bj[r];
            }
            for (i, c) in col[j + 1..].iter().enumerate() {
                if *c != 0.0 {
                    for (b, vr) in tail[i * m..(i + 1) * m].iter_mut().zip(&v) {
                        *b -= c * vr;
                    }
                }
            }
        }
        let s = &self.standardization;
        Ok((0..m)
            .map(|r| {
                let reduction: f64 = (0..n).map(|i| kst[i * m + r] * kst[i * m + r]).sum();
                let mut var = self.self_kernel(&zs[r]) - reduction;
                if var < 0.0 {
                    if var < -1e-8 {
                        log::warn!("posterior variance {var:e} clipped to 0");
                    }
                    var = 0.0;
                }
                (s.y_mean + s.y_std * means[r], s.y_std * s.y_std * var)
            })
            .collect())
    }

    /// Predictive distribution of a noisy observation: latent variance plus
    /// the noise variance.
    pub fn predictive(&self, x: &[f64]) -> Result<(f64, f64), ForecastError> {
        let (m, v) = self.posterior(x)?;
        Ok((m, v + self.noise_variance_units()))
    }

    /// Noise variance in target units.
    pub fn noise_variance_units(&self) -> f64 {
        self.standardization.y_std.powi(2) * self.hp.noise_variance
    }

    fn self_kernel(&self, z: &[f64]) -> f64 {
        self.hp.rbf_signal_variance
            + self.hp.linear_dims.iter().zip(&self.hp.linear_variance).map(|(&d, v)| v * z[d] * z[d]).sum::<f64>()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ForecastError> {
        if x.len() != self.dim() {
            return Err(ForecastError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// Slides the conditioning window forward by the genuinely new rows.
    ///
    /// Rows whose hours are already in the window must match the stored rows
    /// and are ignored. The remaining rows must continue the window without a
    /// gap; the same number of oldest rows is dropped.
    pub fn refresh_conditioning_set(&self, new_rows: &ConditioningRows) -> Result<GpModel, ForecastError> {
        if !new_rows.is_contiguous() {
            return Err(ForecastError::NonContiguous("new rows are not consecutive hours".into()));
        }
        let last = self.rows.hours.last().copied();
        let mut fresh = ConditioningRows::default();
        for i in 0..new_rows.len() {
            let h = new_rows.hours[i];
            match last {
                Some(l) if h <= l => {
                    let pos = self.rows.hours.iter().position(|&x| x == h).ok_or_else(|| {
                        ForecastError::NonContiguous(format!("hour {} precedes the current window", fmt_hour(h)))
                    })?;
                    if self.rows.x[pos] != new_rows.x[i] || self.rows.y[pos] != new_rows.y[i] {
                        return Err(ForecastError::NonContiguous(format!(
                            "row for {} conflicts with the stored window",
                            fmt_hour(h)
                        )));
                    }
                }
                _ => {
                    fresh.hours.push(h);
                    fresh.x.push(new_rows.x[i].clone());
                    fresh.y.push(new_rows.y[i]);
                }
            }
        }
        if fresh.is_empty() {
            return Ok(self.clone());
        }
        if let Some(l) = last {
            if fresh.hours[0] != l + 1 {
                return Err(ForecastError::NonContiguous(format!(
                    "window ends at {} but new rows start at {}",
                    fmt_hour(l + 1),
                    fmt_hour(fresh.hours[0])
                )));
            }
        }
        let n = self.len();
        let drop = fresh.len().min(n);
        let mut rows = ConditioningRows {
            hours: self.rows.hours[drop..].to_vec(),
            x: self.rows.x[drop..].to_vec(),
            y: self.rows.y[drop..].to_vec(),
        };
        let keep_from = fresh.len().saturating_sub(n.max(1));
        rows.hours.extend_from_slice(&fresh.hours[keep_from..]);
        rows.x.extend_from_slice(&fresh.x[keep_from..]);
        rows.y.extend_from_slice(&fresh.y[keep_from..]);
        let mut m =
            GpModel::build(self.kind, self.season, self.hp.clone(), self.standardization.clone(), rows)?;
        m.diagnostics = self.diagnostics.clone();
        Ok(m)
    }

    /// Rebuilds the model on the window of `window_hours` rows ending just
    /// before absolute hour `end_hour`.
    pub fn condition_on_window(
        &self,
        history: &DemandHistory,
        end_hour: i64,
        window_hours: usize,
    ) -> Result<GpModel, ForecastError> {
        let rows = window_rows(self.kind, history, end_hour, window_hours)?;
        let mut m = GpModel::build(self.kind, self.season, self.hp.clone(), self.standardization.clone(), rows)?;
        m.diagnostics = self.diagnostics.clone();
        Ok(m)
    }

    pub fn to_file(&self) -> ModelFile {
        let start = self.rows.hours.first().copied().unwrap_or(0);
        let end = self.rows.hours.last().map_or(start, |h| h + 1);
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            kind: self.kind,
            season: self.season,
            hyperparameters: self.hp.clone(),
            standardization: self.standardization.clone(),
            window_start: fmt_hour(start),
            window_end: fmt_hour(end),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Restores a model, re-reading its conditioning window from `history`.
    pub fn from_file(file: &ModelFile, history: &DemandHistory) -> Result<GpModel, ForecastError> {
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ForecastError::Format(format!(
                "model schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        let parse = |s: &str| {
            parse_timestamp(s).ok_or_else(|| ForecastError::Format(format!("bad window timestamp '{s}'")))
        };
        let start = hour_index(parse(&file.window_start)?);
        let end = hour_index(parse(&file.window_end)?);
        if end < start {
            return Err(ForecastError::Format("window_end precedes window_start".into()));
        }
        let rows = window_rows(file.kind, history, end, (end - start) as usize)?;
        let mut m =
            GpModel::build(file.kind, file.season, file.hyperparameters.clone(), file.standardization.clone(), rows)?;
        m.diagnostics = file.diagnostics.clone();
        Ok(m)
    }
}

fn fmt_hour(h: i64) -> String {
    format_timestamp(from_hour_index(h))
}

/// Conditioning rows for the `window_hours` targets ending before `end_hour`.
/// The window is shortened when the history does not reach back far enough.
pub fn window_rows(
    kind: ModelKind,
    history: &DemandHistory,
    end_hour: i64,
    window_hours: usize,
) -> Result<ConditioningRows, ForecastError> {
    let end = (end_hour - history.start_hour()).clamp(0, history.len() as i64) as usize;
    if end < end_hour.saturating_sub(history.start_hour()) as usize {
        return Err(ForecastError::InsufficientHistory(format!(
            "history ends at {} before window end {}",
            fmt_hour(history.end_hour()),
            fmt_hour(end_hour)
        )));
    }
    let from = end.saturating_sub(window_hours).max(WINDOW_HOURS);
    if from >= end {
        return Err(ForecastError::InsufficientHistory(format!(
            "no conditioning rows: need more than {WINDOW_HOURS} h of history before {}",
            fmt_hour(end_hour)
        )));
    }
    ConditioningRows::from_history(kind, history, from, end)
}

/// Versioned on-disk description of a trained model. Conditioning data is
/// re-read from the history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub season: Season,
    pub hyperparameters: KernelHyperparameters,
    pub standardization: Standardization,
    pub window_start: String,
    /// Exclusive.
    pub window_end: String,
    pub diagnostics: Option<FitDiagnostics>,
}

fn gram_matrix(hp: &KernelHyperparameters, scaled: &[f64], linear: &[f64], n: usize) -> DMatrix<f64> {
    let dim = hp.dim();
    let n_lin = hp.linear_dims.len();
    let sf2 = hp.rbf_signal_variance;
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        let ra = &scaled[a * dim..(a + 1) * dim];
        let la = &linear[a * n_lin..(a + 1) * n_lin];
        for b in 0..=a {
            let rb = &scaled[b * dim..(b + 1) * dim];
            let r2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            let lb = &linear[b * n_lin..(b + 1) * n_lin];
            let lin: f64 = la.iter().zip(lb).map(|(x, y)| x * y).sum();
            let v = sf2 * (-0.5 * r2).exp() + lin;
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Adds `noise` to the diagonal and factorizes, escalating a relative jitter
/// when the matrix is numerically indefinite.
fn cholesky_with_jitter(mut k: DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, f64), ForecastError> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    if n == 0 {
        return Ok((k, 0.0));
    }
    let scale = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    loop {
        let mut m = k.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(c) = nalgebra::linalg::Cholesky::new(m) {
            return Ok((c.unpack(), jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START * scale } else { 2.0 * jitter };
        if jitter > JITTER_MAX * scale * (1.0 + 1e-12) {
            return Err(ForecastError::NotPositiveDefinite(JITTER_MAX * scale));
        }
    }
}

/// In-place `L⁻¹b` for lower-triangular `L`.
fn forward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    let data = l.as_slice();
    for j in 0..n {
        let col = &data[j * n..(j + 1) * n];
        let v = b[j] / col[j];
        b[j] = v;
        if v != 0.0 {
            for (bi, ci) in b[j + 1..].iter_mut().zip(&col[j + 1..]) {
                *bi -= ci * v;
            }
        }
    }
}

/// In-place `L⁻ᵀb`.
fn backward_substitute(l: &DMatrix<f64>, b: &mut [f64]) {
    let n = b.len();
    let data = l.as_slice();
    for j in (0..n).rev() {
        let col = &data[j * n..(j + 1) * n];
        let s: f64 = col[j + 1..].iter().zip(&b[j + 1..]).map(|(c, x)| c * x).sum();
        b[j] = (b[j] - s) / col[j];
    }
}

fn cholesky_solve(l: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let mut v = y.to_vec();
    forward_substitute(l, &mut v);
    backward_substitute(l, &mut v);
    v
}

/// Log marginal likelihood of standardized data under zero prior mean and its
/// gradient with respect to the log-hyperparameters (see
/// [`KernelHyperparameters::to_log`] for the ordering).
pub fn log_marginal_likelihood(
    hp: &KernelHyperparameters,
    z: &[Vec<f64>],
    y: &[f64],
) -> Result<(f64, Vec<f64>), ForecastError> {
    hp.validate()?;
    let n = y.len();
    let dim = hp.dim();
    let n_lin = hp.linear_dims.len();
    let mut scaled = Vec::with_capacity(n * dim);
    let mut linear = Vec::with_capacity(n * n_lin);
    for row in z {
        if row.len() != dim {
            return Err(ForecastError::DimensionMismatch { expected: dim, got: row.len() });
        }
        scaled.extend(row.iter().zip(&hp.rbf_lengthscales).map(|(v, l)| v / l));
        linear.extend(hp.linear_dims.iter().zip(&hp.linear_variance).map(|(&d, v)| v.sqrt() * row[d]));
    }
    let gram = gram_matrix(hp, &scaled, &linear, n);
    let (l, _) = cholesky_with_jitter(gram, hp.noise_variance)?;
    let alpha = cholesky_solve(&l, y);
    let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let lml = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;

    // W = αα^T - A⁻¹
    let mut w = nalgebra::linalg::Cholesky::pack_dirty(l).inverse();
    for a in 0..n {
        for b in 0..n {
            w[(a, b)] = alpha[a] * alpha[b] - w[(a, b)];
        }
    }
    let sf2 = hp.rbf_signal_variance;
    let mut grad = vec![0.0; hp.num_params()];
    let mut g_len = vec![0.0; dim];
    let mut g_sf = 0.0;
    for a in 0..n {
        let ra = &scaled[a * dim..(a + 1) * dim];
        for b in 0..a {
            let rb = &scaled[b * dim..(b + 1) * dim];
            let r2: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            // off-diagonal pairs counted twice
            let m = 2.0 * w[(a, b)] * sf2 * (-0.5 * r2).exp();
            g_sf += m;
            for d in 0..dim {
                let u = ra[d] - rb[d];
                g_len[d] += m * u * u;
            }
        }
        g_sf += w[(a, a)] * sf2;
    }
    grad[0] = 0.5 * g_sf;
    for d in 0..dim {
        grad[1 + d] = 0.5 * g_len[d];
    }
    for (j, (&d, &v)) in hp.linear_dims.iter().zip(&hp.linear_variance).enumerate() {
        let mut q = 0.0;
        for a in 0..n {
            let za = z[a][d];
            let mut s = 0.0;
            for b in 0..n {
                s += w[(a, b)] * z[b][d];
            }
            q += za * s;
        }
        grad[1 + dim + j] = 0.5 * v * q;
    }
    grad[1 + dim + n_lin] = 0.5 * hp.noise_variance * w.trace();
    Ok((lml, grad))
}

/// Box limits for the log-hyperparameters in standardized space.
fn log_bounds(hp: &KernelHyperparameters, noise_floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![(1e-4f64).ln()];
    let mut hi = vec![(1e4f64).ln()];
    for _ in 0..hp.dim() {
        lo.push((1e-2f64).ln());
        hi.push((1e3f64).ln());
    }
    for _ in 0..hp.linear_dims.len() {
        lo.push((1e-6f64).ln());
        hi.push((1e3f64).ln());
    }
    lo.push(noise_floor.ln());
    hi.push((1e2f64).ln());
    (lo, hi)
}

fn projected_grad(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    // g is the gradient of the minimized function
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| {
            if (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct MinimizeResult {
    x: Vec<f64>,
    f: f64,
    pg_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Projected limited-memory BFGS with backtracking on a box.
fn minimize_box<F>(mut f: F, x0: Vec<f64>, lo: &[f64], hi: &[f64], max_iter: usize, tol: f64) -> MinimizeResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    const MEMORY: usize = 10;
    let project = |x: &mut [f64]| {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };
    let mut x = x0;
    project(&mut x);
    let Some((mut fx, mut g)) = f(&x) else {
        return MinimizeResult { x, f: f64::INFINITY, pg_norm: f64::INFINITY, iterations: 0, converged: false };
    };
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    loop {
        let pg = projected_grad(&x, &g, lo, hi);
        let pg_norm = norm(&pg);
        if pg_norm < tol {
            return MinimizeResult { x, f: fx, pg_norm, iterations, converged: true };
        }
        if iterations >= max_iter {
            return MinimizeResult { x, f: fx, pg_norm, iterations, converged: false };
        }
        iterations += 1;

        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..q.len() {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / pg_norm.max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..q.len() {
                q[i] += (a - b) * s[i];
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        // freeze components pinned at a bound
        for i in 0..dir.len() {
            if pg[i] == 0.0 {
                dir[i] = 0.0;
            }
        }
        if dot(&dir, &g) >= 0.0 {
            hist.clear();
            let scale = 1.0 / pg_norm.max(1.0);
            dir = pg.iter().map(|v| -v * scale).collect();
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            project(&mut xn);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease {
                    accepted = Some((xn, fn_, gn, step));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fn_, gn, s)) => {
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if hist.len() == MEMORY {
                        hist.remove(0);
                    }
                    hist.push((s, y, 1.0 / sy));
                }
                let stalled = (fx - fn_).abs() <= 1e-15 * fx.abs().max(1.0);
                x = xn;
                fx = fn_;
                g = gn;
                if stalled && hist.is_empty() {
                    let pg_norm = norm(&projected_grad(&x, &g, lo, hi));
                    return MinimizeResult { converged: pg_norm < tol, x, f: fx, pg_norm, iterations };
                }
            }
            None if !hist.is_empty() => hist.clear(),
            None => {
                return MinimizeResult { x, f: fx, pg_norm, iterations, converged: false };
            }
        }
    }
}

/// Maximizes the log marginal likelihood over standardized rows from
/// `init` plus `restarts - 1` randomly perturbed starts.
pub fn optimize_hyperparameters(
    z: &[Vec<f64>],
    y: &[f64],
    init: &KernelHyperparameters,
    opts: &FitOptions,
) -> Result<(KernelHyperparameters, FitDiagnostics), ForecastError> {
    init.validate()?;
    let (lo, hi) = log_bounds(init, opts.noise_floor);
    let base = init.to_log();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<MinimizeResult> = None;
    let mut converged = 0;
    for r in 0..opts.restarts.max(1) {
        let start: Vec<f64> = if r == 0 {
            base.clone()
        } else {
            base.iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + e
                })
                .collect()
        };
        let objective = |theta: &[f64]| {
            let hp = init.from_log(theta);
            log_marginal_likelihood(&hp, z, y).ok().map(|(l, g)| (-l, g.into_iter().map(|v| -v).collect()))
        };
        let res = minimize_box(objective, start, &lo, &hi, opts.max_iterations, opts.grad_tol);
        if res.converged {
            converged += 1;
        }
        if best.as_ref().map_or(true, |b| res.f < b.f) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one restart");
    if !best.f.is_finite() {
        return Err(ForecastError::NotPositiveDefinite(JITTER_MAX));
    }
    if !best.converged {
        log::warn!(
            "hyperparameter search stopped after {} iterations with gradient norm {:e}",
            best.iterations,
            best.pg_norm
        );
    }
    let diag = FitDiagnostics {
        log_marginal_likelihood: -best.f,
        gradient_norm: best.pg_norm,
        iterations: best.iterations,
        converged: best.converged,
        restarts_converged: converged,
        train_rows: y.len(),
    };
    Ok((init.from_log(&best.x), diag))
}

/// Fits one seasonal model on `data`: tunes hyperparameters on the season's
/// rows (evenly subsampled), then conditions on the most recent window.
pub fn fit(
    data: &DemandHistory,
    kind: ModelKind,
    season: Season,
    init: &KernelHyperparameters,
    opts: &FitOptions,
    seasons: &SeasonTable,
) -> Result<GpModel, ForecastError> {
    let candidates: Vec<usize> =
        (WINDOW_HOURS..data.len()).filter(|&k| seasons.season_of(data.timestamp(k).date()) == season).collect();
    if candidates.is_empty() {
        return Err(ForecastError::EmptyTrainingSet(format!(
            "no {} rows with {WINDOW_HOURS} h of history for the {} model",
            kind.name(),
            season.name()
        )));
    }
    let take = candidates.len().min(opts.max_train_rows.max(1));
    let picked: Vec<usize> = (0..take).map(|i| candidates[i * candidates.len() / take]).collect();
    let series = kind.series(data);
    let mut x = Vec::with_capacity(take);
    let mut y = Vec::with_capacity(take);
    for &k in &picked {
        x.push(encode(kind, k, data)?.values);
        y.push(series[k]);
    }
    let standardization = Standardization::from_data(&x, &y);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardization.x(r)).collect();
    let ys: Vec<f64> = y.iter().map(|&v| standardization.y(v)).collect();
    let (hp, diag) = optimize_hyperparameters(&z, &ys, init, opts)?;
    let rows = window_rows(kind, data, data.end_hour(), opts.window_hours)?;
    let mut model = GpModel::build(kind, season, hp, standardization, rows)?;
    model.diagnostics = Some(diag);
    Ok(model)
}

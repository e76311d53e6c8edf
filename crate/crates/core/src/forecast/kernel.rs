use serde::{Deserialize, Serialize};

use super::ForecastError;

/// RBF (one lengthscale per input) plus a linear kernel on a subset of inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparameters {
    pub rbf_signal_variance: f64,
    pub rbf_lengthscales: Vec<f64>,
    /// Input dimensions seen by the linear kernel.
    pub linear_dims: Vec<usize>,
    /// One variance per entry of `linear_dims`.
    pub linear_variance: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyperparameters {
    /// Unit variances and lengthscales, small noise.
    pub fn default_for(dim: usize, linear_dims: Vec<usize>) -> Self {
        let n_lin = linear_dims.len();
        Self {
            rbf_signal_variance: 1.0,
            rbf_lengthscales: vec![(dim as f64).sqrt(); dim],
            linear_dims,
            linear_variance: vec![0.1; n_lin],
            noise_variance: 0.1,
        }
    }

    pub fn dim(&self) -> usize {
        self.rbf_lengthscales.len()
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rbf_signal_variance) || !positive(self.noise_variance) {
            return Err(ForecastError::InvalidHyperparameters("variances must be strictly positive".into()));
        }
        if self.rbf_lengthscales.is_empty() || !self.rbf_lengthscales.iter().all(|l| positive(*l)) {
            return Err(ForecastError::InvalidHyperparameters("lengthscales must be strictly positive".into()));
        }
        if self.linear_dims.len() != self.linear_variance.len() {
            return Err(ForecastError::InvalidHyperparameters(
                "linear_dims and linear_variance differ in length".into(),
            ));
        }
        if self.linear_dims.iter().any(|&d| d >= self.dim()) {
            return Err(ForecastError::InvalidHyperparameters("linear dimension out of range".into()));
        }
        if !self.linear_variance.iter().all(|v| positive(*v)) {
            return Err(ForecastError::InvalidHyperparameters("linear variances must be strictly positive".into()));
        }
        Ok(())
    }

    /// Number of free parameters in log space.
    pub fn num_params(&self) -> usize {
        2 + self.dim() + self.linear_dims.len()
    }

    /// `[ln s², ln ℓ_1.., ln v_1.., ln σ_n²]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.push(self.rbf_signal_variance.ln());
        v.extend(self.rbf_lengthscales.iter().map(|l| l.ln()));
        v.extend(self.linear_variance.iter().map(|l| l.ln()));
        v.push(self.noise_variance.ln());
        v
    }

    pub fn from_log(&self, theta: &[f64]) -> Self {
        let d = self.dim();
        let l = self.linear_dims.len();
        Self {
            rbf_signal_variance: theta[0].exp(),
            rbf_lengthscales: theta[1..1 + d].iter().map(|t| t.exp()).collect(),
            linear_dims: self.linear_dims.clone(),
            linear_variance: theta[1 + d..1 + d + l].iter().map(|t| t.exp()).collect(),
            noise_variance: theta[1 + d + l].exp(),
        }
    }
}

pub fn kernel_eval(x: &[f64], xp: &[f64], hp: &KernelHyperparameters) -> Result<f64, ForecastError> {
    if x.len() != hp.dim() || xp.len() != hp.dim() {
        return Err(ForecastError::DimensionMismatch { expected: hp.dim(), got: x.len().max(xp.len()) });
    }
    let mut r2 = 0.0;
    for d in 0..x.len() {
        let u = (x[d] - xp[d]) / hp.rbf_lengthscales[d];
        r2 += u * u;
    }
    let lin: f64 = hp.linear_dims.iter().zip(&hp.linear_variance).map(|(&d, v)| v * x[d] * xp[d]).sum();
    Ok(hp.rbf_signal_variance * (-0.5 * r2).exp() + lin)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp2() -> KernelHyperparameters {
        KernelHyperparameters {
            rbf_signal_variance: 2.0,
            rbf_lengthscales: vec![0.5, 3.0],
            linear_dims: vec![1],
            linear_variance: vec![0.7],
            noise_variance: 0.01,
        }
    }

    #[test]
    fn zero_distance_without_linear_terms() {
        let mut hp = hp2();
        hp.linear_dims.clear();
        hp.linear_variance.clear();
        assert_eq!(kernel_eval(&[1.0, -2.0], &[1.0, -2.0], &hp).unwrap(), 2.0);
        assert!(kernel_eval(&[0.0, 0.0], &[1e4, 0.0], &hp).unwrap() < 1e-300);
    }

    #[test]
    fn hand_set_inputs() {
        let x = [0.3, 1.0];
        let y = [-0.2, 2.5];
        let expect = 2.0 * (-0.5 * ((0.5f64 / 0.5).powi(2) + (1.5f64 / 3.0).powi(2))).exp() + 0.7 * 1.0 * 2.5;
        assert!((kernel_eval(&x, &y, &hp2()).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        assert!(kernel_eval(&[0.0], &[0.0, 1.0], &hp2()).is_err());
    }

    #[test]
    fn log_round_trip() {
        let hp = hp2();
        let back = hp.from_log(&hp.to_log());
        for (a, b) in back.to_log().iter().zip(hp.to_log()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

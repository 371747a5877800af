//! Multinomial logistic regression on plain feature vectors.
//!
//! Used as an independent separability check: if a linear model on mean
//! input rates already solves a task, the task is learnable and a failing
//! liquid pipeline points at the pipeline rather than the data.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::readout::softmax;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl LogisticRegression {
    /// Full-batch gradient descent on standardized features (`samples × dims`).
    pub fn fit(
        features: ArrayView2<f64>,
        labels: &[usize],
        classes: usize,
        epochs: usize,
        learning_rate: f64,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || n != labels.len() {
            return Err(Error::shape("logistic regression labels", n, labels.len()));
        }
        if classes == 0 || labels.iter().any(|&y| y >= classes) {
            return Err(Error::invalid("label out of range"));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logistic regression features"));
        }
        let mean = features.mean_axis(Axis(0)).expect("n > 0");
        let scale = features
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        let mut model = Self {
            mean,
            scale,
            weights: Array2::zeros((classes, d)),
            bias: Array1::zeros(classes),
        };
        let x = model.standardize(features);
        let mut onehot = Array2::zeros((n, classes));
        for (i, &y) in labels.iter().enumerate() {
            onehot[[i, y]] = 1.0;
        }
        for epoch in 0..epochs {
            let probs = model.probabilities_standardized(&x);
            let err = probs - &onehot;
            let gw = err.t().dot(&x) / n as f64;
            let gb = err.sum_axis(Axis(0)) / n as f64;
            model.weights.scaled_add(-learning_rate, &gw);
            model.bias.scaled_add(-learning_rate, &gb);
            if model.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged(format!("logistic regression at epoch {}", epoch + 1)));
            }
        }
        Ok(model)
    }

    fn standardize(&self, features: ArrayView2<f64>) -> Array2<f64> {
        (&features - &self.mean) * &self.scale
    }

    fn probabilities_standardized(&self, x: &Array2<f64>) -> Array2<f64> {
        let logits = x.dot(&self.weights.t()) + &self.bias;
        let mut out = logits.clone();
        for (mut row, l) in out.outer_iter_mut().zip(logits.outer_iter()) {
            row.assign(&softmax(&l.to_owned()));
        }
        out
    }

    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        if features.ncols() != self.mean.len() {
            return Err(Error::shape("logistic regression input", self.mean.len(), features.ncols()));
        }
        let probs = self.probabilities_standardized(&self.standardize(features));
        Ok(probs
            .outer_iter()
            .map(|p| crate::semantic::argmax(p.as_slice().expect("contiguous")))
            .collect())
    }

    pub fn accuracy(&self, features: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(features)?;
        if pred.len() != labels.len() || pred.is_empty() {
            return Err(Error::shape("logistic regression labels", pred.len(), labels.len()));
        }
        Ok(pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / pred.len() as f64)
    }
}

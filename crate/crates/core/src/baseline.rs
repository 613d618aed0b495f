//! Unconstrained logistic regression baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::policy::Action;
use crate::rng::{rng_for, stream};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParameters<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig {
            epochs: 500,
            lr: 1.0,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Step halvings attempted before an epoch gives up and keeps the old point.
const MAX_HALVINGS: usize = 40;

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<T: Scalar> LrParameters<T> {
    pub fn zeros(dim: usize) -> Self {
        LrParameters {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    fn margin(&self, x: &[T]) -> T {
        self.weights.iter().zip(x).fold(self.bias, |acc, (&w, &xi)| acc + w * xi)
    }

    /// Probability of the positive class and the thresholded action
    /// (`p >= 0.5` maps to 1).
    pub fn predict(&self, x: &[T]) -> Result<(T, Action)> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        let p = sigmoid(self.margin(x));
        Ok((p, u8::from(p >= T::of(0.5))))
    }

    pub fn predict_split(&self, examples: &[Example<T>]) -> Result<Vec<Action>> {
        examples.iter().map(|e| self.predict(&e.features).map(|(_, a)| a)).collect()
    }
}

pub fn predict_logistic<T: Scalar>(params: &LrParameters<T>, x: &[T]) -> Result<(T, Action)> {
    params.predict(x)
}

/// Mean logistic loss plus `l2 * |w|^2 / 2`, and its gradient
/// (weights first, bias last).
pub fn loss_and_gradient<T: Scalar>(params: &LrParameters<T>, train: &[Example<T>], l2: T) -> (T, Vec<T>) {
    let dim = params.weights.len();
    let mut grad = vec![T::zero(); dim + 1];
    let mut loss = T::zero();
    for e in train {
        let z = params.margin(&e.features);
        let y = if e.label == 1 { T::one() } else { T::zero() };
        // -[y ln s(z) + (1-y) ln(1 - s(z))] = softplus(z) - y z
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, &xi) in grad.iter_mut().zip(&e.features) {
            *g += r * xi;
        }
        grad[dim] += r;
    }
    let n = T::of(train.len() as f64);
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    let half = T::of(0.5);
    loss += half * l2 * params.weights.iter().map(|&w| w * w).sum::<T>();
    for (g, &w) in grad.iter_mut().zip(&params.weights) {
        *g += l2 * w;
    }
    (loss, grad)
}

pub fn loss<T: Scalar>(params: &LrParameters<T>, train: &[Example<T>], l2: T) -> T {
    loss_and_gradient(params, train, l2).0
}

/// Full-batch gradient descent; returns the parameters and the loss after
/// every epoch (the first entry is the initial loss).
///
/// A step that would raise the loss is retried at half the step size, so
/// the recorded losses never increase.
pub fn fit_logistic_traced<T: Scalar>(train: &[Example<T>], config: &LrConfig) -> Result<(LrParameters<T>, Vec<f64>)> {
    let dim = train
        .first()
        .ok_or_else(|| Error::Data("empty training split".into()))?
        .features
        .len();
    if config.lr.is_nan() || config.lr <= 0.0 || config.l2.is_nan() || config.l2 < 0.0 {
        return Err(Error::Config(format!("lr must be > 0 and l2 >= 0, got {} / {}", config.lr, config.l2)));
    }
    let l2 = T::of(config.l2);
    let mut rng = rng_for(config.seed, stream::BASELINE);
    let mut params = LrParameters {
        weights: (0..dim).map(|_| T::of(rng.gen_range(-0.01..0.01))).collect(),
        bias: T::zero(),
    };

    let (mut current, mut grad) = loss_and_gradient(&params, train, l2);
    check_loss(current, 0)?;
    let mut losses = vec![current.as_f64()];
    let mut step = T::of(config.lr);

    for epoch in 1..=config.epochs {
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = LrParameters {
                weights: params.weights.iter().zip(&grad).map(|(&w, &g)| w - step * g).collect(),
                bias: params.bias - step * grad[dim],
            };
            let (next_loss, next_grad) = loss_and_gradient(&candidate, train, l2);
            check_loss(next_loss, epoch)?;
            if next_loss <= current {
                params = candidate;
                current = next_loss;
                grad = next_grad;
                accepted = true;
                break;
            }
            step *= T::of(0.5);
        }
        losses.push(current.as_f64());
        if !accepted {
            break;
        }
    }
    Ok((params, losses))
}

pub fn fit_logistic<T: Scalar>(train: &[Example<T>], config: &LrConfig) -> Result<LrParameters<T>> {
    fit_logistic_traced(train, config).map(|(p, _)| p)
}

fn check_loss<T: Scalar>(loss: T, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("logistic loss is not finite at epoch {epoch}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn example(x: Vec<f64>, label: u8) -> Example<f64> {
        Example {
            features: x,
            sensitive: 0,
            label,
            raw: Vec::new(),
        }
    }

    fn toy(n: usize, seed: u64) -> Vec<Example<f64>> {
        let mut rng = rng_for(seed, 1);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let margin = 2.0 * x[0] - x[2] + 0.3;
            if margin.abs() > 0.25 {
                out.push(example(x, u8::from(margin > 0.0)));
            }
        }
        out
    }

    #[test]
    fn zero_parameters_predict_half() {
        let p = LrParameters::<f64>::zeros(2);
        assert_eq!(p.predict(&[3.0, -1.0]).unwrap(), (0.5, 1));
        assert!(p.predict(&[1.0]).is_err());
    }

    #[test]
    fn closed_form_sigmoid() {
        let p = LrParameters { weights: vec![0.0], bias: 3f64.ln() };
        assert!((p.predict(&[1.0]).unwrap().0 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn probability_increases_with_bias() {
        let mut p = LrParameters { weights: vec![0.4, -1.0], bias: -5.0 };
        let mut last = 0.0;
        for _ in 0..100 {
            let (prob, _) = p.predict(&[1.0, 0.5]).unwrap();
            assert!(prob > last);
            last = prob;
            p.bias += 0.1;
        }
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let train = toy(200, 3);
        let cfg = LrConfig { l2: 0.0, epochs: 2000, ..LrConfig::default() };
        let params = fit_logistic(&train, &cfg).unwrap();
        let preds = params.predict_split(&train).unwrap();
        assert!(preds.iter().zip(&train).all(|(p, e)| *p == e.label));
    }

    #[test]
    fn losses_never_increase() {
        let mut train = toy(300, 4);
        // Label noise keeps the optimum finite.
        for e in train.iter_mut().step_by(7) {
            e.label = 1 - e.label;
        }
        let cfg = LrConfig { lr: 50.0, epochs: 200, ..LrConfig::default() };
        let (_, losses) = fit_logistic_traced(&train, &cfg).unwrap();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn fit_is_deterministic() {
        let train = toy(100, 5);
        let cfg = LrConfig { seed: 9, epochs: 50, ..LrConfig::default() };
        assert_eq!(fit_logistic(&train, &cfg).unwrap(), fit_logistic(&train, &cfg).unwrap());
        assert!(fit_logistic::<f64>(&[], &cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradient_matches_finite_differences(seed in any::<u64>(), l2 in 0.0f64..0.5) {
            let train = toy(20, seed);
            let mut rng = rng_for(seed, 2);
            let params = LrParameters {
                weights: (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                bias: rng.gen_range(-1.0..1.0),
            };
            let (_, grad) = loss_and_gradient(&params, &train, l2);
            let h = 1e-5;
            for (k, &g) in grad.iter().enumerate() {
                let nudge = |delta: f64| {
                    let mut q = params.clone();
                    if k < 3 { q.weights[k] += delta } else { q.bias += delta }
                    loss(&q, &train, l2)
                };
                let fd = (nudge(h) - nudge(-h)) / (2.0 * h);
                let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3);
                prop_assert!(err <= 1e-4, "coord {}: {} vs {}", k, g, fd);
            }
        }
    }
}

//! Gradient contextual bandit: a one-hidden-layer ReLU scorer whose two
//! outputs are the action preferences, turned into a policy by a softmax.
//!
//! Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` and
//! renormalised, which bounds every log-probability (and so every KL term in
//! the cooperative reward) by `-ln(PROB_CLAMP)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_for;
use crate::{Error, Result, Scalar};

pub const NUM_ACTIONS: usize = 2;

/// Lower bound on any action probability.
pub const PROB_CLAMP: f64 = 1e-6;

/// Binary action / prediction.
pub type Action = u8;

/// Weights of the scorer. Matrices are row-major: `w1` is
/// `hidden_dim x input_dim`, `w2` is `NUM_ACTIONS x hidden_dim`.
///
/// The same shape doubles as a gradient (see [`log_prob_gradient`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

pub type Gradient<T> = PolicyParameters<T>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution<T> {
    pub probs: [T; NUM_ACTIONS],
}

impl<T: Scalar> ActionDistribution<T> {
    /// Softmax of two logits, clamped and renormalised.
    ///
    /// Returns the distribution and whether clamping was active.
    pub fn from_logits(logits: [T; NUM_ACTIONS]) -> (Self, bool) {
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        let z = e0 + e1;
        Self::clamped([e0 / z, e1 / z])
    }

    /// Clamp to `[PROB_CLAMP, 1 - PROB_CLAMP]` and renormalise.
    pub fn clamped(probs: [T; NUM_ACTIONS]) -> (Self, bool) {
        let lo = T::of(PROB_CLAMP);
        let hi = T::one() - lo;
        let mut clamped = false;
        let mut p = probs;
        for v in &mut p {
            if *v < lo || *v > hi {
                *v = v.max(lo).min(hi);
                clamped = true;
            }
        }
        if clamped {
            let s = p[0] + p[1];
            p = [p[0] / s, p[1] / s];
        }
        (ActionDistribution { probs: p }, clamped)
    }

    pub fn prob(&self, a: Action) -> T {
        self.probs[a as usize]
    }

    fn validate(&self) -> Result<()> {
        let ok = self.probs.iter().all(|p| p.is_finite() && *p >= T::zero())
            && (self.probs[0] + self.probs[1] - T::one()).abs() < T::of(1e-4);
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("invalid action distribution {:?}", self.probs)))
        }
    }
}

/// Forward-pass intermediates reused by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Forward<T> {
    pub hidden: Vec<T>,
    pub dist: ActionDistribution<T>,
    pub clamped: bool,
}

/// Uniform fan-based initialisation with zero biases.
///
/// Each weight matrix is drawn from `U(-b, b)` with
/// `b = sqrt(6 / (fan_in + fan_out))`.
pub fn init_policy<T: Scalar>(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<PolicyParameters<T>> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::Config(format!(
            "policy dimensions must be positive (input {input_dim}, hidden {hidden_dim})"
        )));
    }
    let mut rng = rng_for(seed, 0);
    let mut uniform = |n: usize, fan_in: usize, fan_out: usize| -> Vec<T> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        (0..n)
            .map(|_| T::of((2.0 * rng.gen::<f64>() - 1.0) * bound))
            .collect()
    };
    let w1 = uniform(hidden_dim * input_dim, input_dim, hidden_dim);
    let w2 = uniform(NUM_ACTIONS * hidden_dim, hidden_dim, NUM_ACTIONS);
    Ok(PolicyParameters {
        input_dim,
        hidden_dim,
        w1,
        b1: vec![T::zero(); hidden_dim],
        w2,
        b2: vec![T::zero(); NUM_ACTIONS],
    })
}

impl<T: Scalar> PolicyParameters<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        PolicyParameters {
            input_dim,
            hidden_dim,
            w1: vec![T::zero(); hidden_dim * input_dim],
            b1: vec![T::zero(); hidden_dim],
            w2: vec![T::zero(); NUM_ACTIONS * hidden_dim],
            b2: vec![T::zero(); NUM_ACTIONS],
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters in `w1, b1, w2, b2` order.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn squared_norm(&self) -> T {
        self.iter().map(|&v| v * v).sum()
    }

    pub(crate) fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("context vector has a non-finite entry".into()));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, x: &[T]) -> Forward<T> {
        let d = self.input_dim;
        let hidden: Vec<T> = self
            .w1
            .chunks_exact(d)
            .zip(&self.b1)
            .map(|(row, &b)| {
                let pre = row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi);
                pre.max(T::zero())
            })
            .collect();
        let mut logits = [T::zero(); NUM_ACTIONS];
        for (a, row) in self.w2.chunks_exact(self.hidden_dim).enumerate() {
            logits[a] = row.iter().zip(&hidden).fold(self.b2[a], |acc, (&w, &h)| acc + w * h);
        }
        let (dist, clamped) = ActionDistribution::from_logits(logits);
        Forward { hidden, dist, clamped }
    }

    /// Scorer outputs (action preferences) for `x`.
    pub fn logits(&self, x: &[T]) -> Result<[T; NUM_ACTIONS]> {
        self.check_input(x)?;
        let hidden = self.forward(x).hidden;
        let mut logits = [T::zero(); NUM_ACTIONS];
        for (a, row) in self.w2.chunks_exact(self.hidden_dim).enumerate() {
            logits[a] = row.iter().zip(&hidden).fold(self.b2[a], |acc, (&w, &h)| acc + w * h);
        }
        Ok(logits)
    }

    pub fn action_distribution(&self, x: &[T]) -> Result<ActionDistribution<T>> {
        self.check_input(x)?;
        Ok(self.forward(x).dist)
    }

    /// Argmax action; an exact tie goes to action 0.
    pub fn greedy_action(&self, x: &[T]) -> Result<Action> {
        Ok(greedy(&self.action_distribution(x)?))
    }

    /// Gradient of `log pi(a | x)` with respect to every parameter.
    pub fn log_prob_gradient(&self, x: &[T], a: Action) -> Result<Gradient<T>> {
        self.check_input(x)?;
        check_action(a)?;
        let fwd = self.forward(x);
        let mut grad = PolicyParameters::zeros(self.input_dim, self.hidden_dim);
        if fwd.clamped {
            // The clamped region has a locally constant policy.
            return Ok(grad);
        }
        let back = self.backward(a, &fwd, T::one());
        back.emit(x, &fwd.hidden, |slot, g| *grad.slot_mut(slot) = g);
        Ok(grad)
    }

    /// Stochastic gradient ascent step `theta + alpha * r * grad log pi(a|x)`.
    pub fn policy_gradient_step(&self, x: &[T], a: Action, reward: T, alpha: T) -> Result<Self> {
        let mut next = self.clone();
        next.apply_policy_gradient(x, a, reward, alpha)?;
        Ok(next)
    }

    /// In-place form of [`policy_gradient_step`](Self::policy_gradient_step).
    ///
    /// Returns the squared norm of `reward * grad log pi(a|x)`.
    pub fn apply_policy_gradient(&mut self, x: &[T], a: Action, reward: T, alpha: T) -> Result<T> {
        self.check_input(x)?;
        check_action(a)?;
        let fwd = self.forward(x);
        self.apply_with_forward(x, a, &fwd, reward, alpha)
    }

    pub(crate) fn apply_with_forward(
        &mut self,
        x: &[T],
        a: Action,
        fwd: &Forward<T>,
        reward: T,
        alpha: T,
    ) -> Result<T> {
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward} is not finite")));
        }
        if !(alpha >= T::zero() && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {alpha} must be a finite non-negative number"
            )));
        }
        if fwd.clamped || reward == T::zero() {
            return Ok(T::zero());
        }
        let back = self.backward(a, fwd, reward);
        let mut norm_sq = T::zero();
        let mut finite = true;
        back.emit(x, &fwd.hidden, |slot, g| {
            norm_sq += g * g;
            let p = self.slot_mut(slot);
            *p += alpha * g;
            finite &= p.is_finite();
        });
        if !finite {
            return Err(Error::NonFinite("policy parameters became non-finite".into()));
        }
        Ok(norm_sq)
    }

    /// Output-layer and hidden-layer deltas of `scale * log pi(a|x)`.
    fn backward(&self, a: Action, fwd: &Forward<T>, scale: T) -> Backward<T> {
        let h = self.hidden_dim;
        // d log softmax_a / d logit_b = 1{a = b} - pi_b
        let mut dlogit = [T::zero(); NUM_ACTIONS];
        for (b, d) in dlogit.iter_mut().enumerate() {
            let ind = if b == a as usize { T::one() } else { T::zero() };
            *d = scale * (ind - fwd.dist.probs[b]);
        }
        // ReLU subgradient at exactly zero is taken as 0.
        let dpre = (0..h)
            .map(|j| {
                if fwd.hidden[j] > T::zero() {
                    dlogit[0] * self.w2[j] + dlogit[1] * self.w2[h + j]
                } else {
                    T::zero()
                }
            })
            .collect();
        Backward { dlogit, dpre }
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut T {
        match slot {
            Slot::W1(i) => &mut self.w1[i],
            Slot::B1(i) => &mut self.b1[i],
            Slot::W2(i) => &mut self.w2[i],
            Slot::B2(i) => &mut self.b2[i],
        }
    }
}

struct Backward<T> {
    dlogit: [T; NUM_ACTIONS],
    dpre: Vec<T>,
}

impl<T: Scalar> Backward<T> {
    /// Hand every gradient coordinate to `sink`.
    fn emit(&self, x: &[T], hidden: &[T], mut sink: impl FnMut(Slot, T)) {
        let h = hidden.len();
        for (b, &d) in self.dlogit.iter().enumerate() {
            for (j, &hj) in hidden.iter().enumerate() {
                sink(Slot::W2(b * h + j), d * hj);
            }
            sink(Slot::B2(b), d);
        }
        for (j, &dpre) in self.dpre.iter().enumerate() {
            if dpre != T::zero() {
                let base = j * x.len();
                for (i, &xi) in x.iter().enumerate() {
                    sink(Slot::W1(base + i), dpre * xi);
                }
            }
            sink(Slot::B1(j), dpre);
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    W1(usize),
    B1(usize),
    W2(usize),
    B2(usize),
}

fn check_action(a: Action) -> Result<()> {
    if (a as usize) < NUM_ACTIONS {
        Ok(())
    } else {
        Err(Error::Config(format!("action {a} out of range")))
    }
}

pub fn greedy<T: Scalar>(dist: &ActionDistribution<T>) -> Action {
    u8::from(dist.probs[1] > dist.probs[0])
}

/// Draw an action; action 1 with probability `probs[1]`.
pub fn sample_action<T: Scalar, R: Rng + ?Sized>(dist: &ActionDistribution<T>, rng: &mut R) -> Result<Action> {
    dist.validate()?;
    let u: f64 = rng.gen();
    Ok(u8::from(u < dist.probs[1].as_f64()))
}

/// Free-function form of [`PolicyParameters::log_prob_gradient`].
pub fn log_prob_gradient<T: Scalar>(params: &PolicyParameters<T>, x: &[T], a: Action) -> Result<Gradient<T>> {
    params.log_prob_gradient(x, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_policy(input: usize, hidden: usize, seed: u64, scale: f64) -> PolicyParameters<f64> {
        let mut p = init_policy::<f64>(input, hidden, seed).unwrap();
        let mut rng = rng_for(seed, 99);
        for v in p.iter_mut() {
            *v = *v * scale + rng.gen_range(-0.3..0.3);
        }
        p
    }

    fn log_prob(p: &PolicyParameters<f64>, x: &[f64], a: Action) -> f64 {
        p.action_distribution(x).unwrap().prob(a).ln()
    }

    /// Central finite differences of `log pi(a|x)`, coordinate by coordinate.
    fn finite_difference(p: &PolicyParameters<f64>, x: &[f64], a: Action, step: f64) -> Vec<f64> {
        let mut q = p.clone();
        (0..p.num_params())
            .map(|k| {
                let orig = *q.iter().nth(k).unwrap();
                *q.iter_mut().nth(k).unwrap() = orig + step;
                let up = log_prob(&q, x, a);
                *q.iter_mut().nth(k).unwrap() = orig - step;
                let down = log_prob(&q, x, a);
                *q.iter_mut().nth(k).unwrap() = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_policy::<f64>(4, 10, 7).unwrap();
        let b = init_policy::<f64>(4, 10, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.b1.iter().chain(&a.b2).all(|&v| v == 0.0));
        assert_ne!(a, init_policy::<f64>(4, 10, 8).unwrap());
        assert!(init_policy::<f64>(0, 10, 1).is_err());
        assert!(init_policy::<f64>(3, 0, 1).is_err());
    }

    #[test]
    fn init_respects_fan_bound() {
        let bound = (6.0f64 / 140.0).sqrt();
        for seed in 0..20 {
            let p = init_policy::<f64>(100, 40, seed).unwrap();
            assert!(p.w1.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let p = PolicyParameters::<f64>::zeros(3, 5);
        let d = p.action_distribution(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(d.probs, [0.5, 0.5]);
        assert_eq!(p.greedy_action(&[1.0, -2.0, 0.5]).unwrap(), 0);
    }

    #[test]
    fn closed_form_softmax() {
        let (d, clamped) = ActionDistribution::from_logits([0.0f64, 3f64.ln()]);
        assert!(!clamped);
        assert!((d.probs[0] - 0.25).abs() < 1e-15);
        assert!((d.probs[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn extreme_logits_are_clamped() {
        let (d, clamped) = ActionDistribution::from_logits([0.0f64, 100.0]);
        assert!(clamped);
        assert_eq!(d.probs[0], PROB_CLAMP);
        assert!((d.probs[0] + d.probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_rule() {
        let g = |p0: f64, p1: f64| greedy(&ActionDistribution { probs: [p0, p1] });
        assert_eq!(g(0.75, 0.25), 0);
        assert_eq!(g(0.25, 0.75), 1);
        assert_eq!(g(0.5, 0.5), 0);
    }

    #[test]
    fn input_validation() {
        let p = PolicyParameters::<f64>::zeros(3, 2);
        assert!(matches!(p.action_distribution(&[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
        assert!(p.action_distribution(&[1.0, f64::NAN, 0.0]).is_err());
        assert!(p.log_prob_gradient(&[1.0, 0.0], 0).is_err());
        assert!(p.policy_gradient_step(&[1.0, 0.0, 0.0], 0, f64::INFINITY, 0.1).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = crate::rng::Rng::seed_from_u64(11);
        let near_zero = ActionDistribution::clamped([1.0 - PROB_CLAMP, PROB_CLAMP]).0;
        let zeros = (0..100_000)
            .filter(|_| sample_action(&near_zero, &mut rng).unwrap() == 0)
            .count();
        assert!(zeros as f64 >= 0.999 * 100_000.0);

        let fair = ActionDistribution { probs: [0.5, 0.5] };
        let ones = (0..10_000).filter(|_| sample_action(&fair, &mut rng).unwrap() == 1).count();
        assert!((ones as f64 / 10_000.0 - 0.5).abs() <= 0.02, "{ones}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = ActionDistribution { probs: [0.3, 0.7] };
        let draw = |seed| {
            let mut rng = crate::rng::Rng::seed_from_u64(seed);
            (0..64).map(|_| sample_action(&d, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn uniform_policy_output_bias_gradient() {
        let p = PolicyParameters::<f64>::zeros(2, 3);
        for a in 0..2u8 {
            let g = p.log_prob_gradient(&[0.3, -1.0], a).unwrap();
            let expected = if a == 0 { [0.5, -0.5] } else { [-0.5, 0.5] };
            assert_eq!(g.b2, expected);
        }
    }

    #[test]
    fn zero_reward_or_rate_leaves_parameters() {
        let p = random_policy(5, 4, 3, 1.0);
        let x = [0.1, -0.4, 2.0, 0.0, 1.0];
        assert_eq!(p.policy_gradient_step(&x, 1, 0.0, 0.1).unwrap(), p);
        assert_eq!(p.policy_gradient_step(&x, 1, 1.0, 0.0).unwrap(), p);
    }

    #[test]
    fn rewarded_action_gains_probability() {
        for seed in 0..20 {
            let p = random_policy(6, 5, seed, 1.0);
            let x: Vec<f64> = (0..6).map(|i| (i as f64 - 2.5) / 3.0).collect();
            for a in 0..2u8 {
                let before = log_prob(&p, &x, a);
                let q = p.policy_gradient_step(&x, a, 1.0, 1e-3).unwrap();
                assert!(log_prob(&q, &x, a) > before);
            }
        }
    }

    #[test]
    fn in_place_update_matches_pure_step() {
        let p = random_policy(4, 3, 1, 1.0);
        let x = [0.5, -1.0, 0.25, 2.0];
        let pure = p.policy_gradient_step(&x, 0, -0.7, 0.05).unwrap();
        let mut q = p.clone();
        let norm = q.apply_policy_gradient(&x, 0, -0.7, 0.05).unwrap();
        assert_eq!(pure, q);
        let g = p.log_prob_gradient(&x, 0).unwrap();
        assert!((norm - 0.49 * g.squared_norm()).abs() < 1e-12);
    }

    #[test]
    fn f32_policy_runs() {
        let p = init_policy::<f32>(3, 4, 2).unwrap();
        let d = p.action_distribution(&[1.0, 0.0, -1.0]).unwrap();
        assert!((d.probs[0] + d.probs[1] - 1.0).abs() < 1e-6);
        let q = p.policy_gradient_step(&[1.0, 0.0, -1.0], 1, 1.0, 0.1).unwrap();
        assert!(q.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn distribution_stays_on_clamped_simplex(
            seed in any::<u64>(),
            scale in 0.1f64..50.0,
            x in proptest::collection::vec(-5.0f64..5.0, 6),
        ) {
            let p = random_policy(6, 4, seed, scale);
            let d = p.action_distribution(&x).unwrap();
            prop_assert!((d.probs[0] + d.probs[1] - 1.0).abs() <= 1e-9);
            for &v in &d.probs {
                prop_assert!((PROB_CLAMP * (1.0 - 1e-12)..=1.0 - PROB_CLAMP * (1.0 - 1e-12)).contains(&v));
                prop_assert!(v.ln().abs() <= -PROB_CLAMP.ln() + 1e-9);
            }
        }

        #[test]
        fn gradient_matches_finite_differences(
            seed in any::<u64>(),
            a in 0u8..2,
            x in proptest::collection::vec(-2.0f64..2.0, 5),
        ) {
            let p = random_policy(5, 4, seed, 1.0);
            let g = p.log_prob_gradient(&x, a).unwrap();
            let fd = finite_difference(&p, &x, a, 1e-5);
            for (k, (&an, &num)) in g.iter().zip(&fd).enumerate() {
                let err = (an - num).abs() / an.abs().max(num.abs()).max(1e-3);
                prop_assert!(err <= 1e-4, "coord {k}: analytic {an} vs fd {num}");
            }
        }

        #[test]
        fn score_function_identity(seed in any::<u64>(), x in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let p = random_policy(4, 6, seed, 2.0);
            let d = p.action_distribution(&x).unwrap();
            let g0 = p.log_prob_gradient(&x, 0).unwrap();
            let g1 = p.log_prob_gradient(&x, 1).unwrap();
            for (&a, &b) in g0.iter().zip(g1.iter()) {
                prop_assert!((d.probs[0] * a + d.probs[1] * b).abs() <= 1e-9);
            }
        }
    }
}

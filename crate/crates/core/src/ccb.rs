//! Cooperative contextual bandits.
//!
//! Bandit `s` serves individuals whose sensitive attribute is `s`. At each
//! step both bandits score the same context, the matching bandit samples an
//! action, and only that bandit is updated with
//!
//! ```text
//! r = 1{a = y} - lambda * KL(pi_s(x) || pi_{1-s}(x))
//! ```
//!
//! The KL term enters as a scalar inside the reward. No gradient flows
//! through it into either bandit.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Example, SplitDataset};
use crate::policy::{greedy, init_policy, sample_action, Action, ActionDistribution, PolicyParameters, PROB_CLAMP};
use crate::rng::{derive_seed, rng_for, stream};
use crate::{Error, Result, Scalar};

/// Upper bound on the number of training steps picked by default.
pub const MAX_DEFAULT_STEPS: u64 = 2_000_000;
pub const DEFAULT_ALPHA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Fairness trade-off weight on the KL term.
    pub lambda: f64,
    /// Learning rate of the gradient ascent step.
    pub alpha: f64,
    /// Total number of updates.
    pub steps: u64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl TrainingConfig {
    /// Defaults for a training split of `n_train` examples: `100 * n_train`
    /// steps (capped at [`MAX_DEFAULT_STEPS`]) and a checkpoint every 1% of
    /// them.
    pub fn with_defaults(lambda: f64, hidden_dim: usize, seed: u64, n_train: usize) -> Self {
        let steps = default_steps(n_train);
        TrainingConfig {
            lambda,
            alpha: DEFAULT_ALPHA,
            steps,
            hidden_dim,
            seed,
            checkpoint_every: default_checkpoint_every(steps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if self.checkpoint_every == 0 || self.checkpoint_every > self.steps {
            return Err(Error::Config(format!(
                "checkpoint_every must be in 1..={}, got {}",
                self.steps, self.checkpoint_every
            )));
        }
        Ok(())
    }

    /// Largest possible `|reward|` under probability clamping.
    pub fn reward_bound(&self) -> f64 {
        1.0 + self.lambda * (-PROB_CLAMP.ln())
    }
}

pub fn default_steps(n_train: usize) -> u64 {
    (100 * n_train as u64).clamp(1, MAX_DEFAULT_STEPS)
}

pub fn default_checkpoint_every(steps: u64) -> u64 {
    (steps / 100).max(1)
}

/// Which bandit answers a prediction request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictMode {
    /// The bandit matching the individual's group.
    Original,
    /// The bandit of the other group.
    Reversed,
    Model0,
    Model1,
}

impl PredictMode {
    pub const ALL: [PredictMode; 4] = [
        PredictMode::Model0,
        PredictMode::Model1,
        PredictMode::Reversed,
        PredictMode::Original,
    ];

    pub fn bandit_for(self, sensitive: u8) -> u8 {
        match self {
            PredictMode::Original => sensitive,
            PredictMode::Reversed => 1 - sensitive,
            PredictMode::Model0 => 0,
            PredictMode::Model1 => 1,
        }
    }
}

impl FromStr for PredictMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(PredictMode::Original),
            "reversed" => Ok(PredictMode::Reversed),
            "model0" => Ok(PredictMode::Model0),
            "model1" => Ok(PredictMode::Model1),
            other => Err(Error::Config(format!("invalid predict mode {other:?}"))),
        }
    }
}

impl fmt::Display for PredictMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictMode::Original => "original",
            PredictMode::Reversed => "reversed",
            PredictMode::Model0 => "model0",
            PredictMode::Model1 => "model1",
        })
    }
}

/// Both bandits plus the configuration that trains them. A clone taken
/// during training is a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CcbModel<T> {
    pub policy0: PolicyParameters<T>,
    pub policy1: PolicyParameters<T>,
    pub config: TrainingConfig,
    /// Number of updates applied so far.
    pub step: u64,
}

/// One line of the reward log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub step: u64,
    pub sensitive: u8,
    pub action: Action,
    pub acc_reward: f64,
    pub kl: f64,
    pub reward: f64,
    pub accumulated: f64,
    /// Squared norm of the applied stochastic gradient `r * grad log pi`.
    pub grad_norm_sq: f64,
}

pub const REWARD_CSV_HEADER: &str = "step,sensitive,action,acc_reward,kl,reward,accumulated";

impl RewardRecord {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            self.step, self.sensitive, self.action, self.acc_reward, self.kl, self.reward, self.accumulated
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardLog {
    pub records: Vec<RewardRecord>,
}

impl RewardLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{REWARD_CSV_HEADER}")?;
        for r in &self.records {
            r.write_csv(&mut w)?;
        }
        Ok(())
    }
}

/// `KL(p || q) = sum_a p(a) ln(p(a) / q(a))`.
pub fn kl_divergence<T: Scalar>(p: &ActionDistribution<T>, q: &ActionDistribution<T>) -> T {
    let kl = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&pa, &qa)| pa * (pa / qa).ln())
        .fold(T::zero(), |acc, v| acc + v);
    // Rounding can leave a tiny negative value for p ~= q.
    kl.max(T::zero())
}

/// Accuracy reward minus `lambda` times `KL(own || other)`.
pub fn compute_reward<T: Scalar>(
    action: Action,
    label: u8,
    own: &ActionDistribution<T>,
    other: &ActionDistribution<T>,
    lambda: T,
) -> T {
    accuracy_reward::<T>(action, label) - lambda * kl_divergence(own, other)
}

fn accuracy_reward<T: Scalar>(action: Action, label: u8) -> T {
    if action == label {
        T::one()
    } else {
        T::zero()
    }
}

impl<T: Scalar> CcbModel<T> {
    /// Fresh model; each bandit is initialised from its own seed stream.
    pub fn new(input_dim: usize, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let policy0 = init_policy(input_dim, config.hidden_dim, derive_seed(config.seed, stream::POLICY_0))?;
        let policy1 = init_policy(input_dim, config.hidden_dim, derive_seed(config.seed, stream::POLICY_1))?;
        Self::from_policies(policy0, policy1, config)
    }

    pub fn from_policies(
        policy0: PolicyParameters<T>,
        policy1: PolicyParameters<T>,
        config: TrainingConfig,
    ) -> Result<Self> {
        if policy0.input_dim != policy1.input_dim || policy0.hidden_dim != policy1.hidden_dim {
            return Err(Error::Config(format!(
                "bandit shapes differ: {}x{} vs {}x{}",
                policy0.input_dim, policy0.hidden_dim, policy1.input_dim, policy1.hidden_dim
            )));
        }
        Ok(CcbModel {
            policy0,
            policy1,
            config,
            step: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.policy0.input_dim
    }

    pub fn policy(&self, bandit: u8) -> &PolicyParameters<T> {
        if bandit == 0 {
            &self.policy0
        } else {
            &self.policy1
        }
    }

    fn policies_mut(&mut self, bandit: u8) -> (&mut PolicyParameters<T>, &PolicyParameters<T>) {
        if bandit == 0 {
            (&mut self.policy0, &self.policy1)
        } else {
            (&mut self.policy1, &self.policy0)
        }
    }

    /// One iteration of the cooperative bandit loop on `example`.
    pub fn train_step<R: Rng + ?Sized>(&mut self, example: &Example<T>, rng: &mut R) -> Result<RewardRecord> {
        check_sensitive(example.sensitive)?;
        let x = &example.features;
        let s = example.sensitive;
        let lambda = T::of(self.config.lambda);
        let alpha = T::of(self.config.alpha);

        let (own, other) = self.policies_mut(s);
        own.check_input(x)?;
        let own_fwd = own.forward(x);
        let other_dist = other.action_distribution(x)?;

        let action = sample_action(&own_fwd.dist, rng)?;
        let kl = kl_divergence(&own_fwd.dist, &other_dist);
        let acc: T = accuracy_reward(action, example.label);
        let reward = acc - lambda * kl;
        let grad_norm_sq = own.apply_with_forward(x, action, &own_fwd, reward, alpha)?;
        self.step += 1;

        Ok(RewardRecord {
            step: self.step,
            sensitive: s,
            action,
            acc_reward: acc.as_f64(),
            kl: kl.as_f64(),
            reward: reward.as_f64(),
            accumulated: 0.0,
            grad_norm_sq: grad_norm_sq.as_f64(),
        })
    }

    /// Greedy prediction and the distribution it came from.
    pub fn predict(&self, x: &[T], sensitive: u8, mode: PredictMode) -> Result<(Action, ActionDistribution<T>)> {
        check_sensitive(sensitive)?;
        let dist = self.policy(mode.bandit_for(sensitive)).action_distribution(x)?;
        Ok((greedy(&dist), dist))
    }

    pub fn predict_split(&self, examples: &[Example<T>], mode: PredictMode) -> Result<Vec<Action>> {
        examples
            .iter()
            .map(|e| self.predict(&e.features, e.sensitive, mode).map(|(a, _)| a))
            .collect()
    }
}

fn check_sensitive(s: u8) -> Result<()> {
    if s > 1 {
        return Err(Error::Data(format!("sensitive attribute {s} is not binary")));
    }
    Ok(())
}

/// Frozen snapshots plus the full reward log of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub checkpoints: Vec<CcbModel<T>>,
    pub log: RewardLog,
}

/// Run the cooperative bandit loop for `config.steps` steps, keeping every
/// reward record in memory.
pub fn train<T: Scalar>(dataset: &SplitDataset<T>, config: &TrainingConfig) -> Result<TrainOutput<T>> {
    let mut log = RewardLog::default();
    let checkpoints = train_with(&dataset.train, config, |rec| log.records.push(*rec))?;
    Ok(TrainOutput { checkpoints, log })
}

/// Streaming form of [`train`]: each reward record goes to `on_step` instead
/// of being kept. Returns the checkpoints.
///
/// Each step draws a training example uniformly with replacement. A
/// checkpoint is taken every `checkpoint_every` steps and at the last step.
pub fn train_with<T: Scalar>(
    train: &[Example<T>],
    config: &TrainingConfig,
    mut on_step: impl FnMut(&RewardRecord),
) -> Result<Vec<CcbModel<T>>> {
    config.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::Data("empty training split".into()))?;
    let mut model = CcbModel::new(first.features.len(), config.clone())?;
    let mut rng = rng_for(config.seed, stream::TRAIN);
    let mut checkpoints = Vec::with_capacity((config.steps / config.checkpoint_every) as usize + 1);
    let mut accumulated = 0.0;

    for t in 1..=config.steps {
        let example = &train[rng.gen_range(0..train.len())];
        let mut rec = model.train_step(example, &mut rng).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("step {t}: {msg}")),
            other => other,
        })?;
        accumulated += rec.reward;
        rec.accumulated = accumulated;
        on_step(&rec);
        if t % config.checkpoint_every == 0 || t == config.steps {
            checkpoints.push(model.clone());
        }
    }
    Ok(checkpoints)
}

/// Window statistics over the first and last 10% of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub steps: u64,
    pub window: u64,
    pub first_mean_grad_norm_sq: f64,
    pub last_mean_grad_norm_sq: f64,
    pub first_mean_kl: f64,
    pub last_mean_kl: f64,
    pub last_mean_acc_reward: f64,
    pub max_abs_reward: f64,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsCollector {
    steps: u64,
    window: u64,
    first: [f64; 2],
    last: [f64; 3],
    max_abs_reward: f64,
}

impl DiagnosticsCollector {
    pub fn new(steps: u64) -> Self {
        DiagnosticsCollector {
            steps,
            window: (steps / 10).max(1),
            first: [0.0; 2],
            last: [0.0; 3],
            max_abs_reward: 0.0,
        }
    }

    pub fn observe(&mut self, rec: &RewardRecord) {
        if rec.step <= self.window {
            self.first[0] += rec.grad_norm_sq;
            self.first[1] += rec.kl;
        }
        if rec.step > self.steps - self.window {
            self.last[0] += rec.grad_norm_sq;
            self.last[1] += rec.kl;
            self.last[2] += rec.acc_reward;
        }
        self.max_abs_reward = self.max_abs_reward.max(rec.reward.abs());
    }

    pub fn finish(&self) -> TrainDiagnostics {
        let w = self.window as f64;
        TrainDiagnostics {
            steps: self.steps,
            window: self.window,
            first_mean_grad_norm_sq: self.first[0] / w,
            last_mean_grad_norm_sq: self.last[0] / w,
            first_mean_kl: self.first[1] / w,
            last_mean_kl: self.last[1] / w,
            last_mean_acc_reward: self.last[2] / w,
            max_abs_reward: self.max_abs_reward,
        }
    }
}

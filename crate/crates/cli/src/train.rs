use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ccb_core::baseline::{fit_logistic_traced, LrConfig};
use ccb_core::ccb::{train_with, DiagnosticsCollector, RewardRecord, TrainingConfig, REWARD_CSV_HEADER};
use ccb_core::checkpoint::{checkpoint_path, save_ccb, save_lr};
use ccb_core::data::SplitDataset;
use ccb_core::selection::GridSpec;
use rayon::prelude::*;

use crate::artifacts::{self, load_prepared};
use crate::{Method, TrainArgs};

pub fn run(args: &TrainArgs) -> Result<()> {
    let prepared = load_prepared(&args.out, args.data.as_deref(), args.schema.as_deref())?;
    let seed = args.seed.unwrap_or(prepared.manifest.split.seed);
    match args.method {
        Method::Lr => train_lr(&args.out, &prepared.data, seed),
        Method::Ccb => {
            let spec = GridSpec {
                lambdas: args.lambdas.clone(),
                hidden: args.hidden.clone(),
                seeds: vec![seed],
                alpha: args.alpha,
                steps: args.steps,
                checkpoint_every: args.checkpoint_every,
            };
            let configs = spec.configs(prepared.data.train.len());
            // Fail on a bad grid before any run starts writing.
            for cfg in &configs {
                cfg.validate()?;
            }
            let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
            pool.install(|| {
                configs
                    .par_iter()
                    .map(|cfg| train_ccb(&args.out, &prepared.data, cfg))
                    .collect::<Result<Vec<()>>>()
            })?;
            Ok(())
        }
    }
}

fn train_lr(out: &Path, data: &SplitDataset<f64>, seed: u64) -> Result<()> {
    let dir = out.join(artifacts::lr_run_id(seed));
    artifacts::create_dir(&dir)?;
    let config = LrConfig { seed, ..LrConfig::default() };
    let (params, losses) = fit_logistic_traced(&data.train, &config)?;
    save_lr(&dir.join("model.ckpt"), &params)?;
    artifacts::write_json(&dir.join("config.json"), &config)?;
    let mut w = BufWriter::new(create(&dir.join("loss.csv"))?);
    writeln!(w, "epoch,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    println!(
        "{}: logistic regression, final training loss {:.4}",
        dir.display(),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Accumulated-reward curve sampled at checkpoint steps.
struct Curve<W: Write> {
    out: W,
    every: u64,
    last: u64,
    window_sum: f64,
}

impl<W: Write> Curve<W> {
    fn new(mut out: W, every: u64) -> std::io::Result<Self> {
        writeln!(out, "step,accumulated,mean_reward")?;
        Ok(Curve { out, every, last: u64::MAX, window_sum: 0.0 })
    }

    fn observe(&mut self, rec: &RewardRecord, final_step: u64) -> std::io::Result<()> {
        self.window_sum += rec.reward;
        if rec.step.is_multiple_of(self.every) || rec.step == final_step {
            let since = if self.last == u64::MAX { rec.step } else { rec.step - self.last };
            writeln!(self.out, "{},{},{}", rec.step, rec.accumulated, self.window_sum / since as f64)?;
            self.last = rec.step;
            self.window_sum = 0.0;
        }
        Ok(())
    }
}

fn train_ccb(out: &Path, data: &SplitDataset<f64>, config: &TrainingConfig) -> Result<()> {
    let dir = out.join(artifacts::ccb_run_id(config.lambda, config.hidden_dim, config.seed));
    artifacts::create_dir(&dir)?;
    artifacts::write_json(&dir.join("config.json"), config)?;

    let mut rewards = BufWriter::new(create(&dir.join("rewards.csv"))?);
    writeln!(rewards, "{REWARD_CSV_HEADER}")?;
    let mut curve = Curve::new(BufWriter::new(create(&dir.join("curve.csv"))?), config.checkpoint_every)?;
    let mut diag = DiagnosticsCollector::new(config.steps);
    let mut io_error = None;

    let checkpoints = train_with(&data.train, config, |rec| {
        diag.observe(rec);
        if io_error.is_none() {
            let res = rec.write_csv(&mut rewards).and_then(|_| curve.observe(rec, config.steps));
            io_error = res.err();
        }
    })?;
    if let Some(e) = io_error {
        return Err(e).with_context(|| format!("writing logs in {}", dir.display()));
    }
    rewards.flush()?;
    curve.out.flush()?;

    for model in &checkpoints {
        save_ccb(&checkpoint_path(&dir, model.step), model)?;
    }
    let diagnostics = diag.finish();
    artifacts::write_json(&dir.join("diagnostics.json"), &diagnostics)?;
    println!(
        "{}: {} steps, {} checkpoints, last-10% accuracy reward {:.4}, KL {:.4}",
        dir.display(),
        config.steps,
        checkpoints.len(),
        diagnostics.last_mean_acc_reward,
        diagnostics.last_mean_kl
    );
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

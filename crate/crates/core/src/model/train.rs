use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::checkpoint::{checkpoint_path, list_checkpoints, load_checkpoint_expecting, save_checkpoint};
use super::{Adam, AdamSettings, CheckpointRecord, DataCursor, ModelConfig, ModelError, Parameters, Scalar};
use crate::corpus::BatchPlan;

pub const TRAIN_LOG: &str = "train_log.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub adam: AdamSettings,
    pub max_steps: u64,
    pub checkpoint_every: u64,
}

/// In-memory training state: parameters, optimizer and data position.
pub struct Trainer<'a, T> {
    pub params: Parameters<T>,
    pub adam: Adam<T>,
    pub step: u64,
    cursor: DataCursor,
    order: Vec<usize>,
    plan: &'a BatchPlan,
    settings: AdamSettings,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(config: &ModelConfig, settings: &AdamSettings, plan: &'a BatchPlan, data_seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        check_plan(config, plan)?;
        let params = Parameters::init(config);
        let adam = Adam::new(&params);
        let cursor = DataCursor { seed: data_seed, epoch: 0, position: 0 };
        Ok(Trainer { params, adam, step: 0, cursor, order: plan.epoch_order(0), plan, settings: settings.clone() })
    }

    pub fn from_record(record: CheckpointRecord<T>, settings: &AdamSettings, plan: &'a BatchPlan) -> Result<Self, ModelError> {
        check_plan(&record.config, plan)?;
        if record.cursor.position as usize > plan.batches_per_epoch() {
            return Err(ModelError::Data("checkpoint data position beyond the epoch length".into()));
        }
        let order = plan.epoch_order(record.cursor.epoch);
        Ok(Trainer {
            params: record.params,
            adam: record.adam,
            step: record.step,
            cursor: record.cursor,
            order,
            plan,
            settings: settings.clone(),
        })
    }

    pub fn record(&self) -> CheckpointRecord<T> {
        CheckpointRecord {
            config: self.params.config.clone(),
            step: self.step,
            params: self.params.clone(),
            adam: self.adam.clone(),
            cursor: self.cursor,
        }
    }

    /// One Adam update on the next batch; returns the loss before the update.
    pub fn step(&mut self) -> Result<f64, ModelError> {
        if self.cursor.position as usize >= self.plan.batches_per_epoch() {
            self.cursor.epoch += 1;
            self.cursor.position = 0;
            self.order = self.plan.epoch_order(self.cursor.epoch);
        }
        let batch = self.plan.batch(&self.order, self.cursor.position as usize);
        self.cursor.position += 1;
        let next = self.step + 1;
        let (loss, grads) = self.params.loss_and_grads(&batch)?;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step: next, loss });
        }
        self.adam.step(&mut self.params, &grads, &self.settings);
        self.step = next;
        if !self.params.all_finite() {
            return Err(ModelError::NonFiniteParameters(next));
        }
        Ok(loss)
    }
}

fn check_plan(config: &ModelConfig, plan: &BatchPlan) -> Result<(), ModelError> {
    if plan.context_len() > config.context_len {
        return Err(ModelError::BadShape(format!(
            "batches of length {} exceed the model context {}",
            plan.context_len(),
            config.context_len
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub resumed_from: Option<u64>,
    pub checkpoints: Vec<(u64, PathBuf)>,
    pub final_loss: Option<f64>,
}

/// Trains to `settings.max_steps`, writing a checkpoint at step 0 and every
/// `checkpoint_every` steps (plus the final step) and a `step,loss` log.
/// An existing run in `out_dir` resumes from its latest checkpoint.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    settings: &TrainSettings,
    plan: &BatchPlan,
    data_seed: u64,
    out_dir: &Path,
) -> Result<TrainSummary, ModelError> {
    if settings.checkpoint_every == 0 {
        return Err(ModelError::InvalidConfig("checkpoint_every must be positive".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let existing = list_checkpoints(out_dir)?;
    let log_path = out_dir.join(TRAIN_LOG);
    let mut log = String::from("step,loss\n");
    let (mut trainer, resumed_from) = match existing.last() {
        Some((step, path)) => {
            let record = load_checkpoint_expecting::<T>(path, config)?;
            if record.cursor.seed != data_seed {
                return Err(ModelError::Data(format!(
                    "checkpoint {} was trained with data seed {}, not {data_seed}",
                    path.display(),
                    record.cursor.seed
                )));
            }
            if log_path.exists() {
                for line in std::fs::read_to_string(&log_path)?.lines().skip(1) {
                    let logged: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
                    if logged.is_some_and(|s| s <= *step) {
                        log.push_str(line);
                        log.push('\n');
                    }
                }
            }
            info!("resuming {} from step {step}", out_dir.display());
            (Trainer::from_record(record, &settings.adam, plan)?, Some(*step))
        }
        None => {
            let t = Trainer::<T>::new(config, &settings.adam, plan, data_seed)?;
            save_checkpoint(&t.record(), &checkpoint_path(out_dir, 0))?;
            (t, None)
        }
    };

    let mut final_loss = None;
    while trainer.step < settings.max_steps {
        let loss = trainer.step()?;
        final_loss = Some(loss);
        let _ = writeln!(log, "{},{}", trainer.step, loss);
        if trainer.step % settings.checkpoint_every == 0 || trainer.step == settings.max_steps {
            save_checkpoint(&trainer.record(), &checkpoint_path(out_dir, trainer.step))?;
            std::fs::write(&log_path, &log)?;
        }
    }
    if final_loss.is_some() {
        std::fs::write(&log_path, &log)?;
    }
    Ok(TrainSummary { resumed_from, checkpoints: list_checkpoints(out_dir)?, final_loss })
}

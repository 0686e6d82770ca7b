// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use laekit_core::backbones::labelled_rng;
use laekit_core::LossBreakdown;
use serde::Serialize;

use crate::checkpoint::save_checkpoint;
use crate::config::TrainConfig;
use crate::error::Result;
use crate::state::TrainState;
use crate::step::train_step;

/// Where a run writes its artifacts; both are optional.
#[derive(Clone, Debug, Default)]
pub struct RunOutputs {
    pub checkpoint_dir: Option<PathBuf>,
    /// JSON-lines log of per-step losses.
    pub log_path: Option<PathBuf>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    step: u64,
    #[serde(flatten)]
    losses: &'a LossBreakdown,
}

pub struct TrainRun {
    pub state: TrainState,
    /// Losses of each step, measured before that step's update.
    pub history: Vec<LossBreakdown>,
}

/// Per-step random stream; depends only on the seed and step index, so a
/// resumed run draws the same batches as an uninterrupted one.
pub fn step_rng(seed: u64, step: u64) -> rand_chacha::ChaCha8Rng {
    labelled_rng(seed, &format!("train.step:{step}"))
}

/// Continue training `state` until it reaches `config.steps`.
pub fn run_training(mut state: TrainState, outputs: &RunOutputs) -> Result<TrainRun> {
    let mut log = match &outputs.log_path {
        Some(p) => Some(BufWriter::new(fs::File::create(p)?)),
        None => None,
    };
    let mut history = Vec::new();
    while state.step < state.config.steps {
        let step = state.step + 1;
        let mut rng = step_rng(state.config.seed, step);
        let losses = train_step(&mut state, &mut rng)?;
        log::debug!("step {step}: total {:.6}", losses.total);
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &LogLine { step, losses: &losses })?;
            w.write_all(b"\n")?;
        }
        history.push(losses);
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    if let Some(dir) = &outputs.checkpoint_dir {
        save_checkpoint(&state, dir)?;
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        log::info!("trained {} steps: total {:.4} -> {:.4}", history.len(), first.total, last.total);
    }
    Ok(TrainRun { state, history })
}

/// Train every configured attribute from scratch.
pub fn train_attribute_set(config: &TrainConfig, outputs: &RunOutputs) -> Result<TrainRun> {
    run_training(TrainState::new(config.clone())?, outputs)
}

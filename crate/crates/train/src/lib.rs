// SPDX-License-Identifier: MIT OR Apache-2.0

//! Joint optimisation of style tokens, the style mapper and the generator's
//! alpha branch, with a versioned checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod run;
pub mod state;
pub mod step;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Manifest, ManifestEntry, CHECKPOINT_FORMAT_VERSION};
pub use config::{IdvcMode, TrainConfig};
pub use error::{Result, TrainError};
pub use run::{run_training, train_attribute_set, RunOutputs, TrainRun};
pub use state::{Branch, TrainState};
pub use step::{evaluate, mean_prompt_cosine, train_step, Evaluation, StepBatch};

//! TD3 learner, observation encoders, episode driver and curriculum trainer.

pub mod nn;
pub mod obs;
pub mod replay;
pub mod td3;

pub use obs::{CloudEncoding, ObsConfig, ObsMode};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use td3::{Actor, ActorPolicy, Td3, Td3Config, Td3Error, UpdateStats};
pub mod episode;
pub mod train;

pub use episode::{run_episode, Active, CvaGoal, Driver, DualStack, EpisodeLog, RolloutKind, StepRecord};
pub use train::{evaluate, evaluate_on, StagePlan, TrainConfig, TrainError, TrainReport, Trainer, WarmupPolicy};

//! Dual-policy UAV trajectory tracking with a learned collision-avoidance
//! policy and a hysteretic switch between the two.
//!
//! A tracking policy (`trt`) follows a reference trajectory. An avoidance
//! policy (`cva`) flies toward a goal while keeping clear of what the LiDAR
//! sees. The [`switch`] hands control to `cva` when the current velocity
//! points into an obstacle region, and back to `trt` only once a short
//! rollout of `trt` stays out of the trigger set.
//!
//! Module map:
//!
//! - [`scene`], [`lidar`]: obstacle primitives, ray casting, voxel downsampling
//! - [`vehicle`], [`trajectory`]: kinematics, references, tracking errors
//! - [`reward`]: reward terms, obstacle regions and the collision heuristic
//! - [`sim`]: one environment step, outcomes, the simulation config
//! - [`switch`]: naive and hysteretic arbitration
//! - [`rl`]: TD3, observations, episodes and the curriculum trainer
//! - [`envgen`]: curriculum stages and episode sampling
//! - [`bench`](mod@bench): built-in scenarios, metrics and CSV rows
//! - [`config`], [`cli`]: run configuration and the `dualtrack` binary
//!
//! Most capabilities have a runnable example under `examples/`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod envgen;
pub mod geom;
pub mod lidar;
pub mod policy;
pub mod reward;
pub mod rl;
pub mod scene;
pub mod sim;
pub mod switch;
pub mod trajectory;
pub mod vehicle;

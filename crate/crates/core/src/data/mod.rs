//! Trajectory ingestion, normalization, partitioning and windowing.

pub mod normalize;
pub mod partition;
pub mod synth;
pub mod trajectory;
pub mod windows;

pub use normalize::{normalize, BBox, Normalizer};
pub use partition::{partition_by_vehicle, partition_equal, ClientDataset, Segment};
pub use synth::{synth_trajectories, SynthKind};
pub use trajectory::{parse_csv, write_csv, CsvLayout, ParsedTrajectories, Trajectory, TrajectoryPoint};
pub use windows::{make_windows, Window};

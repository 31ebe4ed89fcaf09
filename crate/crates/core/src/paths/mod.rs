//! Shortest-path synthesis: hidden sphere graphs, instance sets, the
//! unweighted baseline and the sequence-output reasoning model.

pub mod dataset;
pub mod io;
pub mod model;
pub mod world;

pub use dataset::{
    build_dataset, build_dataset_all, dp_baseline, evaluate_paths, judge, pair_order, DatasetSizes, Instance, PathEval, PathSplits,
    SubPathFilter, Verdict,
};
pub use io::{read_world, write_world};
pub use model::{
    evaluate_model, load_path_model, save_path_model, train_paths, PathConfig, PathLoss, PathModel,
    PathTrainConfig, PathTrainOutcome,
};
pub use world::{generate_world, EdgeMode, PathGraph};

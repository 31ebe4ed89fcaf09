pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod irn;
pub mod kbc;
pub mod kgdata;
pub mod numcore;
pub mod paths;
pub mod trainer;

pub use error::{Error, Result};
pub use numcore::{ParamId, ParamStore, Tape, Tensor};

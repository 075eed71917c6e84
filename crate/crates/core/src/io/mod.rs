//! Epoch files, model documents and synthetic data.

mod epoch_file;
mod model_file;
pub mod synth;

pub(crate) use epoch_file::write_atomic;
pub use epoch_file::{read_epochs, write_epochs, EpochFile, EpochHeader, FORMAT_VERSION};
pub use model_file::{
    fused_from_str, fused_to_string, model_from_str, model_to_string, read_fused, read_model, write_fused,
    write_model, MODEL_FORMAT, MODEL_VERSION,
};

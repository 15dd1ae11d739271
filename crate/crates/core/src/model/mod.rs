//! The autoencoder: layout, initialization, training, persistence.

pub mod arch;
pub mod describe;
pub mod io;
pub mod network;
pub mod train;

pub use arch::ArchSpec;
pub use describe::describe_model;
pub use io::{load_model, save_model};
pub use network::{random_tile, Autoencoder, Block, DeadUnits, Side, Trace};
pub use train::{train, train_with, TrainConfig};

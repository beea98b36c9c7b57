pub mod battery;
pub mod coupling;
pub mod error;
pub mod majorisation;
pub mod protocol;
mod simplex;
pub mod state;
pub mod theorems;

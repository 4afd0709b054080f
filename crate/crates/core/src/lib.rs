pub mod backends;
pub mod calibration;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod router;
pub mod table_trie;
pub mod uncertainty;

pub use error::{Error, Result};

pub mod address;
pub mod analyzer;
pub mod lang;
pub mod numeric;
pub mod scenarios;
pub mod vm;

pub use address::Address;
pub use numeric::{ArithKind, UInt};

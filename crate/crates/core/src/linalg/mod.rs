//! Linear-algebra substrate: sparse storage, a banded direct solver and
//! small dense helpers on top of `nalgebra`.

pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::SparseLu;
pub use sparse::{CooBuilder, CsrMatrix};

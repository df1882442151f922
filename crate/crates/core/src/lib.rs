pub mod bench;
pub mod deim;
pub mod error;
pub mod fem;
pub mod geor;
pub mod linalg;
pub mod lpod;
pub mod mesh;
pub mod ocp;
pub mod parallel;
pub mod persist;
pub mod rom;
pub mod stability;

pub use error::{Error, Result};

// Book chapters run as doc-tests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/mesh.md")]
mod book_mesh {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/optimality.md")]
mod book_optimality {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pod.md")]
mod book_pod {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/deim.md")]
mod book_deim {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/lpod.md")]
mod book_lpod {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/geor.md")]
mod book_geor {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/stability.md")]
mod book_stability {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/bench.md")]
mod book_bench {}

//! Control-design toolkit for an automatic boom barrier: plant model,
//! parameter identification, averaged chopper drive with a certified
//! inverse, optimal opening trajectory, LMI-tuned PD feedback and
//! closed-loop validation.

pub mod closedloop;
pub mod drive;
pub mod error;
pub mod ident;
pub mod integrators;
pub mod io;
pub mod lmisyn;
pub mod plant;
pub mod trajopt;

pub use error::{Error, Result};

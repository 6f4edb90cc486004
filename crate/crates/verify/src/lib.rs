//! Independent oracles and the acceptance checks built on them. Kept out of
//! the library so that reference computations never share code with the
//! solvers they check.

pub mod criteria;
pub mod oracle;

pub use criteria::{run, Outcome, ALL};

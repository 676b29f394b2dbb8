//! Small generic linear-algebra kernels used by the discretized operators.

mod cg;
mod dense;
mod gmres;
mod lobpcg;

pub use cg::pcg;
pub use dense::{generalized_symmetric_eigen, principal_angles, sorted_symmetric_eigen, GeneralizedEigen};
pub use gmres::{gmres, GmresOutcome};
pub use lobpcg::{lobpcg, LobpcgOptions, LobpcgOutcome};

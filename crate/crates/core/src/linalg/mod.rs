pub mod krylov;
pub mod lanczos;
pub mod sparse;

pub use krylov::{cg, minres, DiagScaledOp, LinOp, ShiftedOp, SolveStats};
pub use lanczos::{smallest_eigenpairs, EigenMethod, EigenPairs, DENSE_FALLBACK_LIMIT};
pub use sparse::CsrMatrix;

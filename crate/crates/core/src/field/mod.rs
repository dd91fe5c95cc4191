//! Grids, sampled fields, finite differences and norm estimators.

mod deriv;
mod grid;
pub mod io;
mod norms;
mod types;

pub use deriv::{derivative, fornberg, gradient, hessian, sym_grad, Stencil1D};
pub use grid::{Grid2, MIN_NODES};
pub use io::{load_macf1, read_macf1, save_macf1, write_csv, write_macf1};
pub use norms::{
    cm_norm, cm_norms, holder_norm, holder_seminorm, norms, restrict, restrict_nodes, sup, NormReport,
    PAIRS_PER_SCALE,
};
pub use types::{
    add, extend_by_zero, map_field, min_eig, narrow, rewindow, scale, sub, zip_fields, Field, ScalarField2, SymMatrixField2, VectorField2,
};
pub(crate) use types::map_valid;

//! Sparse LDL^T factorization and selected inversion of compressed matrices.

mod block;
mod ldlt;
mod ordering;

pub use block::block_inverse;
pub use ldlt::{ldlt_factorize, FactorStats, LdltFactor, SymbolicFactor};
pub use ordering::{cluster_dissection, fill_reducing_ordering, minimum_degree, OrderingMethod};

use crate::compression::{SCompressedMatrix, SparsityPattern};
use crate::error::Result;
use std::sync::Arc;

/// `(A + mu I)^{-1}` on `target` through a supernodal factorization.
pub fn selected_inverse(
    a: &SCompressedMatrix,
    mu: f64,
    target: &Arc<SparsityPattern>,
    method: OrderingMethod,
) -> Result<SCompressedMatrix> {
    let f = ldlt_factorize(a, mu, method)?;
    let z = f.selected_inverse(target)?;
    z.with_bases(a.row_basis().cloned(), a.col_basis().cloned())
}

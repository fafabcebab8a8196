use std::collections::BTreeSet;

use crate::compression::SparsityPattern;
use crate::error::{Error, Result};
use crate::samplets::SampletBasis;

/// Choice of fill-reducing permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingMethod {
    /// Cluster dissection when the matrix carries a samplet basis, minimum
    /// degree otherwise.
    #[default]
    Auto,
    ClusterDissection,
    MinimumDegree,
    Identity,
}

/// `perm[new] = old`.
pub fn fill_reducing_ordering(
    pattern: &SparsityPattern,
    method: OrderingMethod,
    basis: Option<&SampletBasis>,
) -> Result<Vec<usize>> {
    if pattern.nrows() != pattern.ncols() {
        return Err(Error::mismatch("ordering needs a square pattern"));
    }
    match (method, basis) {
        (OrderingMethod::Identity, _) => Ok((0..pattern.nrows()).collect()),
        (OrderingMethod::Auto | OrderingMethod::ClusterDissection, Some(b)) if b.len() == pattern.nrows() => {
            Ok(cluster_dissection(b))
        }
        (OrderingMethod::ClusterDissection, _) => Err(Error::invalid("cluster dissection needs the matrix' samplet basis")),
        _ => Ok(minimum_degree(pattern)),
    }
}

/// Clusters in post-order, each contributing its coefficient range; the
/// root block, including the scaling functions, comes last.
pub fn cluster_dissection(basis: &SampletBasis) -> Vec<usize> {
    let tree = basis.tree();
    let mut perm = Vec::with_capacity(basis.len());
    // Iterative post-order: (node, children_done)
    let mut stack = vec![(0usize, false)];
    while let Some((id, done)) = stack.pop() {
        match (tree.node(id).children, done) {
            (Some([l, r]), false) => {
                stack.push((id, true));
                stack.push((r, false));
                stack.push((l, false));
            }
            _ => perm.extend(basis.coef_range(id)),
        }
    }
    perm
}

/// Minimum degree on the explicit elimination graph; ties go to the lowest
/// index.
pub fn minimum_degree(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.nrows();
    let mut adj: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| pattern.row(i).iter().map(|&j| j as usize).filter(|&j| j != i).collect())
        .collect();
    for i in 0..n {
        let nb: Vec<usize> = adj[i].iter().copied().collect();
        for j in nb {
            adj[j].insert(i);
        }
    }
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some((_, v)) = by_degree.pop_first() {
        perm.push(v);
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for &u in &nb {
            by_degree.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (x, &u) in nb.iter().enumerate() {
            for &w in &nb[x + 1..] {
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
        for &u in &nb {
            by_degree.insert((adj[u].len(), u));
        }
        adj[v].clear();
    }
    perm
}

//! Point clouds, the cluster tree and the geometric predicates used for
//! samplet construction and admissibility.

use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Magic bytes of the binary point format.
pub const BINARY_MAGIC: &[u8; 4] = b"SPLT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Csv,
    /// 16-byte header (`SPLT`, `u32` dim, `u64` count) followed by
    /// little-endian `f64` coordinates, row-major.
    F64Le,
}

impl PointFormat {
    /// Guess from a file extension; anything that is not `.csv` or `.txt`
    /// is treated as binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => PointFormat::Csv,
            _ => PointFormat::F64Le,
        }
    }
}

/// An ordered set of distinct points in `R^dim`.
///
/// `original_index[i]` is the position of point `i` in the input the cloud
/// was loaded from; reordering a cloud composes these indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    original_index: Vec<usize>,
}

impl PointCloud {
    /// Builds a cloud from row-major coordinates, rejecting non-finite
    /// values and duplicate points.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::mismatch(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.is_empty() {
            return Err(Error::NoPoints);
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse {
                row: pos / dim + 1,
                message: "non-finite coordinate".into(),
            });
        }
        let n = coords.len() / dim;
        let pc = Self {
            dim,
            coords,
            original_index: (0..n).collect(),
        };
        let dups = pc.duplicate_pairs();
        if !dups.is_empty() {
            return Err(Error::DuplicatePoints { pairs: dups });
        }
        Ok(pc)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::NoPoints)?;
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected {dim} values, found {}", r.len()),
                });
            }
            coords.extend_from_slice(r);
        }
        Self::new(dim, coords)
    }

    /// `n` points uniform on `[0,1)^dim` from the crate's SplitMix64 stream.
    pub fn random_uniform(n: usize, dim: usize, seed: u64) -> Result<Self> {
        Self::new(dim, crate::rng::uniform_cube(n, dim, seed))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.original_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.original_index.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn original_index(&self) -> &[usize] {
        &self.original_index
    }

    /// Cloud whose `i`-th point is `self.point(perm[i])`.
    pub fn reordered(&self, perm: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(self.point(p));
        }
        Self {
            dim: self.dim,
            coords,
            original_index: perm.iter().map(|&p| self.original_index[p]).collect(),
        }
    }

    /// Scatters values given in internal order back to input order.
    pub fn to_input_order(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (i, &o) in self.original_index.iter().enumerate() {
            out[o] = values[i];
        }
        out
    }

    /// Gathers values given in input order into internal order.
    pub fn from_input_order(&self, values: &[f64]) -> Vec<f64> {
        self.original_index.iter().map(|&o| values[o]).collect()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of_points(self, 0..self.len())
    }

    fn lex_sorted(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        idx
    }

    fn duplicate_pairs(&self) -> Vec<(usize, usize)> {
        let idx = self.lex_sorted();
        idx.windows(2)
            .filter(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| {
                let (a, b) = (self.original_index[w[0]], self.original_index[w[1]]);
                (a.min(b), a.max(b))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.len() {
            let row: Vec<String> = self.point(i).iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_f64le<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for x in &self.coords {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Reads a point cloud; see [`PointFormat`] for the two layouts.
pub fn load_points<R: Read>(source: R, format: PointFormat) -> Result<PointCloud> {
    match format {
        PointFormat::Csv => load_csv(source),
        PointFormat::F64Le => load_f64le(source),
    }
}

pub fn load_points_path(path: &Path, format: Option<PointFormat>) -> Result<PointCloud> {
    let format = format.unwrap_or_else(|| PointFormat::from_path(path));
    let file = std::fs::File::open(path)?;
    load_points(BufReader::new(file), format)
}

/// One real per line (CSV with a single column, optional header), e.g.
/// observation labels. Unlike points, values may repeat.
pub fn load_values<R: Read>(source: R) -> Result<Vec<f64>> {
    let reader = BufReader::new(source);
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    let start = usize::from(
        lines.len() > 1 && parse_row(&lines[0].1).is_none() && parse_row(&lines[1].1).is_some(),
    );
    lines[start..]
        .iter()
        .map(|(row, line)| match parse_row(line).as_deref() {
            Some([v]) => Ok(*v),
            _ => Err(Error::Parse {
                row: *row,
                message: format!("expected a single finite real, got {line:?}"),
            }),
        })
        .collect()
}

pub fn load_values_path(path: &Path) -> Result<Vec<f64>> {
    load_values(std::fs::File::open(path)?)
}

fn parse_row(line: &str) -> Option<Vec<f64>> {
    line.split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect()
}

fn load_csv<R: Read>(source: R) -> Result<PointCloud> {
    let reader = BufReader::new(source);
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }
    if lines.is_empty() {
        return Err(Error::NoPoints);
    }
    // A non-numeric first line is a header only when numeric data follows.
    let mut start = 0;
    if parse_row(&lines[0].1).is_none() && lines.len() > 1 && parse_row(&lines[1].1).is_some() {
        start = 1;
    }
    let mut dim = 0;
    let mut coords = Vec::new();
    for (row, line) in &lines[start..] {
        let values = parse_row(line).ok_or_else(|| Error::Parse {
            row: *row,
            message: format!("expected finite comma-separated reals, got {line:?}"),
        })?;
        if dim == 0 {
            dim = values.len();
        } else if values.len() != dim {
            return Err(Error::Parse {
                row: *row,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        coords.extend(values);
    }
    PointCloud::new(dim, coords)
}

fn load_f64le<R: Read>(mut source: R) -> Result<PointCloud> {
    let mut header = [0u8; 16];
    source
        .read_exact(&mut header)
        .map_err(|_| Error::NoPoints)?;
    if &header[..4] != BINARY_MAGIC {
        return Err(Error::Parse {
            row: 0,
            message: "bad magic, expected SPLT".into(),
        });
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(Error::NoPoints);
    }
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() != n * dim * 8 {
        return Err(Error::Parse {
            row: bytes.len() / (8 * dim.max(1)) + 1,
            message: format!("expected {} bytes of coordinates, found {}", n * dim * 8, bytes.len()),
        });
    }
    let coords = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PointCloud::new(dim, coords)
}

/// Axis-parallel box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundingBox {
    /// Smallest box containing the points `range` of `pc`.
    pub fn of_points(pc: &PointCloud, range: Range<usize>) -> Self {
        let d = pc.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in range {
            for (k, &x) in pc.point(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        Self { lo, hi }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance between the boxes, zero when they overlap.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for k in 0..self.lo.len() {
            let gap = (other.lo[k] - self.hi[k]).max(self.lo[k] - other.hi[k]).max(0.0);
            s += gap * gap;
        }
        s.sqrt()
    }

    pub fn distance_to_point(&self, p: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.lo.len() {
            let gap = (self.lo[k] - p[k]).max(p[k] - self.hi[k]).max(0.0);
            s += gap * gap;
        }
        s.sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(k, &x)| self.lo[k] <= x && x <= self.hi[k])
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        (0..self.lo.len()).all(|k| self.lo[k] <= other.lo[k] && other.hi[k] <= self.hi[k])
    }

    fn longest_axis(&self) -> usize {
        let mut best = 0;
        let mut len = f64::NEG_INFINITY;
        for k in 0..self.lo.len() {
            let l = self.hi[k] - self.lo[k];
            if l > len {
                len = l;
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct ClusterNode {
    /// Half-open range into the tree's internally ordered points.
    pub range: Range<usize>,
    pub bbox: BoundingBox,
    pub level: usize,
    pub children: Option<[usize; 2]>,
    pub parent: Option<usize>,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Balanced binary cluster tree. Nodes are stored in depth-first pre-order,
/// so the root is node 0 and every subtree occupies a contiguous id range.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    points: PointCloud,
    depth: usize,
    leaf_size: usize,
}

/// Splits at the median along the longest bounding-box edge until every
/// leaf holds at most `leaf_size` points. Ties in the split coordinate keep
/// their current relative order.
pub fn build_cluster_tree(pc: &PointCloud, leaf_size: usize) -> Result<ClusterTree> {
    if leaf_size == 0 {
        return Err(Error::invalid("leaf size must be at least 1"));
    }
    let mut perm: Vec<usize> = (0..pc.len()).collect();
    let mut nodes = Vec::new();
    split(pc, &mut perm, 0, pc.len(), 0, None, leaf_size, &mut nodes);
    let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0);
    let points = pc.reordered(&perm);
    Ok(ClusterTree {
        nodes,
        points,
        depth,
        leaf_size,
    })
}

#[allow(clippy::too_many_arguments)]
fn split(
    pc: &PointCloud,
    perm: &mut [usize],
    start: usize,
    end: usize,
    level: usize,
    parent: Option<usize>,
    leaf_size: usize,
    nodes: &mut Vec<ClusterNode>,
) -> usize {
    let bbox = {
        let d = pc.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &p in &perm[start..end] {
            for (k, &x) in pc.point(p).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        BoundingBox { lo, hi }
    };
    let id = nodes.len();
    nodes.push(ClusterNode {
        range: start..end,
        bbox,
        level,
        children: None,
        parent,
    });
    let n = end - start;
    if n > leaf_size {
        let axis = nodes[id].bbox.longest_axis();
        perm[start..end].sort_by(|&a, &b| pc.point(a)[axis].total_cmp(&pc.point(b)[axis]));
        let mid = start + n / 2;
        let left = split(pc, perm, start, mid, level + 1, Some(id), leaf_size, nodes);
        let right = split(pc, perm, mid, end, level + 1, Some(id), leaf_size, nodes);
        nodes[id].children = Some([left, right]);
    }
    id
}

impl ClusterTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Points in the tree's internal order; `original_index` maps back to input.
    pub fn points(&self) -> &PointCloud {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn cluster_distance(&self, a: usize, b: usize) -> f64 {
        self.nodes[a].bbox.distance(&self.nodes[b].bbox)
    }

    pub fn cluster_diameter(&self, a: usize) -> f64 {
        self.nodes[a].bbox.diameter()
    }

    /// Per-level `(min, max)` cluster cardinalities, for balance reports.
    pub fn level_sizes(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(usize::MAX, 0); self.depth + 1];
        for n in &self.nodes {
            let e = &mut out[n.level];
            e.0 = e.0.min(n.len());
            e.1 = e.1.max(n.len());
        }
        out
    }

    /// Distance from `p` to the nearest tree point, by branch and bound.
    pub(crate) fn nearest_distance(&self, p: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bbox.distance_to_point(p) >= best {
                continue;
            }
            match node.children {
                None => {
                    for i in node.range.clone() {
                        let d = dist(self.points.point(i), p);
                        best = best.min(d);
                    }
                }
                Some([l, r]) => {
                    let dl = self.nodes[l].bbox.distance_to_point(p);
                    let dr = self.nodes[r].bbox.distance_to_point(p);
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
            }
        }
        best
    }
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Half the minimal pairwise distance, computed exactly.
///
/// Small clouds are checked pair by pair; larger ones use a sweep along the
/// first coordinate that stops once the coordinate gap exceeds the best
/// distance found so far.
pub fn separation_radius(pc: &PointCloud) -> Result<f64> {
    let n = pc.len();
    if n < 2 {
        return Err(Error::invalid("separation radius needs at least two points"));
    }
    let min_dist = if n <= 2048 {
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(dist(pc.point(i), pc.point(j)));
            }
        }
        best
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| pc.point(a)[0].total_cmp(&pc.point(b)[0]));
        let mut best = f64::INFINITY;
        for (pos, &i) in idx.iter().enumerate() {
            let xi = pc.point(i);
            for &j in &idx[pos + 1..] {
                let xj = pc.point(j);
                if xj[0] - xi[0] >= best {
                    break;
                }
                best = best.min(dist(xi, xj));
            }
        }
        best
    };
    Ok(0.5 * min_dist)
}

/// Monte-Carlo estimate of the fill distance over the root bounding box.
pub fn fill_distance_estimate(tree: &ClusterTree, probe_count: usize, seed: u64) -> Result<f64> {
    if probe_count == 0 {
        return Err(Error::invalid("probe_count must be at least 1"));
    }
    let bbox = &tree.node(0).bbox;
    let mut rng = SplitMix64::new(seed);
    let d = tree.dim();
    let probes: Vec<f64> = (0..probe_count * d)
        .map(|i| rng.uniform(bbox.lo[i % d], bbox.hi[i % d]))
        .collect();
    let best = probes
        .par_chunks(d)
        .map(|p| tree.nearest_distance(p))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_allow_repeats_and_header() {
        assert_eq!(load_values("y\n1\n1\n-0.5\n".as_bytes()).unwrap(), vec![1.0, 1.0, -0.5]);
        assert!(matches!(load_values("1\n2,3\n".as_bytes()), Err(Error::Parse { row: 2, .. })));
    }

    fn cloud_1d(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn csv_basic() {
        let pc = load_points("0,0\n1,0\n0,1".as_bytes(), PointFormat::Csv).unwrap();
        assert_eq!((pc.dim(), pc.len()), (2, 3));
        assert_eq!(pc.point(2), &[0.0, 1.0]);
    }

    #[test]
    fn csv_header_detected() {
        let pc = load_points("x,y\n1,2\n3,4\n".as_bytes(), PointFormat::Csv).unwrap();
        assert_eq!(pc.len(), 2);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            load_points("".as_bytes(), PointFormat::Csv),
            Err(Error::NoPoints)
        ));
        assert!(matches!(
            load_points("a,b".as_bytes(), PointFormat::Csv),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(matches!(
            load_points("1,2\n3,x".as_bytes(), PointFormat::Csv),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(matches!(
            load_points("1,2\n3".as_bytes(), PointFormat::Csv),
            Err(Error::Parse { row: 2, .. })
        ));
        match load_points("1,2\n0,0\n1,2".as_bytes(), PointFormat::Csv) {
            Err(Error::DuplicatePoints { pairs }) => assert_eq!(pairs, vec![(0, 2)]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn binary_roundtrip() {
        let pc = PointCloud::random_uniform(17, 3, 5).unwrap();
        let mut buf = Vec::new();
        pc.write_f64le(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 17 * 3 * 8);
        let back = load_points(buf.as_slice(), PointFormat::F64Le).unwrap();
        assert_eq!(back, pc);
        let mut csv = Vec::new();
        pc.write_csv(&mut csv).unwrap();
        assert_eq!(load_points(csv.as_slice(), PointFormat::Csv).unwrap(), pc);
    }

    #[test]
    fn median_split_1d() {
        let pc = cloud_1d(&[2.0 / 3.0, 0.0, 1.0, 1.0 / 3.0]);
        let t = build_cluster_tree(&pc, 2).unwrap();
        let [l, r] = t.node(0).children.unwrap();
        let pts = |id: usize| -> Vec<f64> {
            t.node(id).range.clone().map(|i| t.points().point(i)[0]).collect()
        };
        assert_eq!(pts(l), vec![0.0, 1.0 / 3.0]);
        assert_eq!(pts(r), vec![2.0 / 3.0, 1.0]);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn single_point_tree() {
        let t = build_cluster_tree(&cloud_1d(&[0.5]), 4).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.depth(), 0);
        assert!(build_cluster_tree(&cloud_1d(&[0.5]), 0).is_err());
    }

    #[test]
    fn uniform_2d_depth_and_leaves() {
        let pc = PointCloud::random_uniform(1024, 2, 3).unwrap();
        let t = build_cluster_tree(&pc, 8).unwrap();
        assert_eq!(t.depth(), 7);
        for leaf in t.leaves() {
            let n = t.node(leaf).len();
            assert!((4..=8).contains(&n), "leaf of size {n}");
        }
    }

    #[test]
    fn box_distance_and_diameter() {
        let a = BoundingBox { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        let b = BoundingBox { lo: vec![2.0, 0.0], hi: vec![3.0, 1.0] };
        let c = BoundingBox { lo: vec![2.0, 2.0], hi: vec![3.0, 3.0] };
        assert_eq!(a.distance(&a), 0.0);
        assert_eq!(a.distance(&b), 1.0);
        assert!((a.distance(&c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((a.diameter() - 2f64.sqrt()).abs() < 1e-15);
        let d = BoundingBox { lo: vec![0.0, 0.0, 0.0], hi: vec![2.0, 1.0, 2.0] };
        assert_eq!(d.diameter(), 3.0);
    }

    #[test]
    fn separation() {
        assert_eq!(separation_radius(&cloud_1d(&[0.0, 1.0])).unwrap(), 0.5);
        let r = separation_radius(&cloud_1d(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])).unwrap();
        assert!((r - 1.0 / 6.0).abs() < 1e-15);
        assert!(separation_radius(&cloud_1d(&[0.0])).is_err());
    }

    #[test]
    fn separation_sweep_matches_brute_force() {
        let pc = PointCloud::random_uniform(3000, 2, 11).unwrap();
        let fast = separation_radius(&pc).unwrap();
        let mut best = f64::INFINITY;
        for i in 0..pc.len() {
            for j in i + 1..pc.len() {
                best = best.min(dist(pc.point(i), pc.point(j)));
            }
        }
        assert_eq!(fast, 0.5 * best);
    }

    #[test]
    fn fill_distance() {
        let t = build_cluster_tree(&cloud_1d(&[0.0, 1.0]), 1).unwrap();
        let h = fill_distance_estimate(&t, 10_000, 1).unwrap();
        assert!((0.45..=0.5).contains(&h), "{h}");
        let single = build_cluster_tree(&cloud_1d(&[0.3]), 1).unwrap();
        assert_eq!(fill_distance_estimate(&single, 10, 1).unwrap(), 0.0);

        let pc = PointCloud::random_uniform(500, 2, 9).unwrap();
        let t = build_cluster_tree(&pc, 8).unwrap();
        let h = fill_distance_estimate(&t, 2000, 4).unwrap();
        assert!(h > 0.0 && h <= t.cluster_diameter(0));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn tree_invariants(n in 1usize..400, d in 1usize..4, leaf in 1usize..12, seed in 0u64..1000) {
            let pc = PointCloud::random_uniform(n, d, seed).unwrap();
            let tree = build_cluster_tree(&pc, leaf).unwrap();
            let mut next = 0;
            for id in 0..tree.len() {
                let node = tree.node(id);
                if node.is_leaf() {
                    proptest::prop_assert_eq!(node.range.start, next);
                    next = node.range.end;
                }
                if let Some(p) = node.parent {
                    let parent = tree.node(p);
                    proptest::prop_assert!(parent.bbox.contains_box(&node.bbox));
                    proptest::prop_assert!(tree.cluster_diameter(id) <= tree.cluster_diameter(p));
                }
            }
            proptest::prop_assert_eq!(next, n);

            let mut seen = tree.points().original_index().to_vec();
            seen.sort_unstable();
            proptest::prop_assert!(seen.iter().copied().eq(0..n));
            let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let internal = tree.points().from_input_order(&v);
            proptest::prop_assert_eq!(tree.points().to_input_order(&internal), v);
        }

        #[test]
        fn cluster_distance_is_a_lower_bound(n in 2usize..200, d in 1usize..4, seed in 0u64..1000) {
            let pc = PointCloud::random_uniform(n, d, seed).unwrap();
            let tree = build_cluster_tree(&pc, 4).unwrap();
            let pts = tree.points();
            for a in 0..tree.len() {
                for b in a..tree.len() {
                    let brute = tree.node(a).range.clone()
                        .flat_map(|i| tree.node(b).range.clone().map(move |j| (i, j)))
                        .map(|(i, j)| dist(pts.point(i), pts.point(j)))
                        .fold(f64::INFINITY, f64::min);
                    proptest::prop_assert!(tree.cluster_distance(a, b) <= brute);
                }
            }
        }
    }
}

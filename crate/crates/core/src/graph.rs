//! Graph and label types, edge-list / label-file I/O, and preprocessing.
//!
//! Node and community indices are 0-based inside the crate. Every file format
//! and every `*_one_based` accessor uses 1-based indices.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Symmetric 0/1 matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    m: DMatrix<f64>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
        }
    }

    /// Validates symmetry, binary entries and the zero diagonal.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::param(format!(
                "adjacency must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::param(format!("self-loop at node {}", i + 1)));
            }
            for j in 0..i {
                let v = m[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::param(format!(
                        "entry ({}, {}) = {v} is not binary",
                        i + 1,
                        j + 1
                    )));
                }
                if v != m[(j, i)] {
                    return Err(Error::param(format!(
                        "entries ({0}, {1}) and ({1}, {0}) differ",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { m })
    }

    /// Builds a graph from 0-based undirected edges. Self-loops are dropped and
    /// duplicates collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut a = Self::empty(n);
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::param(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            a.set_edge(i, j);
        }
        Ok(a)
    }

    pub(crate) fn set_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.m[(i, j)] = 1.0;
            self.m[(j, i)] = 1.0;
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.m[(i, j)] != 0.0
    }

    pub fn degree(&self, i: usize) -> usize {
        self.m.row(i).iter().filter(|&&v| v != 0.0).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.degree(i)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Upper-triangular edges `(i, j)` with `i < j`, 0-based, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| ((i + 1)..n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    /// Fraction of the `n(n-1)/2` node pairs that are connected.
    pub fn density(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        self.edge_count() as f64 / (n * (n - 1) / 2) as f64
    }

    /// Subgraph induced by `keep` (0-based, in the order given).
    pub fn induced(&self, keep: &[usize]) -> Self {
        let m = DMatrix::from_fn(keep.len(), keep.len(), |r, c| self.m[(keep[r], keep[c])]);
        Self { m }
    }

    /// Applies the node relabeling `new_index = perm[old_index]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let inv = invert_permutation(perm);
        Self {
            m: DMatrix::from_fn(self.n(), self.n(), |r, c| self.m[(inv[r], inv[c])]),
        }
    }
}

impl AsRef<DMatrix<f64>> for AdjacencyMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.m
    }
}

pub(crate) fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (old, &new) in perm.iter().enumerate() {
        inv[new] = old;
    }
    inv
}

/// Community assignment of `n` nodes into `k` communities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    /// 0-based labels, each `< k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 && !labels.is_empty() {
            return Err(Error::param("k must be at least 1"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::param(format!(
                "label {} of node {} exceeds k = {k}",
                l + 1,
                i + 1
            )));
        }
        Ok(Self { labels, k })
    }

    /// 1-based labels, each in `[1, k]`.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if let Some((i, _)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l > k) {
            return Err(Error::param(format!(
                "label {} of node {} outside [1, {k}]",
                labels[i],
                i + 1
            )));
        }
        Self::new(labels.iter().map(|&l| l - 1).collect(), k)
    }

    /// Everyone in community 0.
    pub fn uniform(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l + 1).collect()
    }

    pub fn sizes(&self) -> CommunitySizes {
        let mut counts = vec![0; self.k];
        for &l in &self.labels {
            counts[l] += 1;
        }
        CommunitySizes { counts }
    }

    /// Node indices of each community, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Restriction to the nodes in `keep`, in that order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// Node relabeling `new_index = perm[old_index]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut labels = vec![0; self.labels.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.labels[old];
        }
        Self { labels, k: self.k }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunitySizes {
    pub counts: Vec<usize>,
}

impl CommunitySizes {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// First empty community, if any.
    pub fn first_empty(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c == 0)
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::file(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::file(path, e))
}

/// Parses a whitespace-separated 1-based edge list. Blank lines and lines
/// starting with `#` or `%` are ignored.
pub fn read_edge_list<R: Read>(reader: R, n: usize) -> Result<AdjacencyMatrix> {
    let mut a = AdjacencyMatrix::empty(n);
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let mut fields = t.split_whitespace();
        let (Some(u), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected two node indices, got `{t}`"),
            });
        };
        let parse = |s: &str| -> Result<usize> {
            let x: i64 = s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("`{s}` is not an integer"),
            })?;
            if x < 1 || x as u64 > n as u64 {
                return Err(Error::Range {
                    line: line_no,
                    index: x,
                    n,
                });
            }
            Ok(x as usize - 1)
        };
        let (i, j) = (parse(u)?, parse(v)?);
        a.set_edge(i, j);
    }
    Ok(a)
}

pub fn load_edge_list(path: impl AsRef<Path>, n: usize) -> Result<AdjacencyMatrix> {
    read_edge_list(open(path.as_ref())?, n)
}

/// Writes each edge once as `i j` with `i < j`, 1-based.
pub fn write_edge_list<W: Write>(a: &AdjacencyMatrix, mut w: W) -> Result<()> {
    for (i, j) in a.edges() {
        writeln!(w, "{} {}", i + 1, j + 1)?;
    }
    Ok(())
}

pub fn save_edge_list(a: &AdjacencyMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_edge_list(a, &mut w)?;
    w.flush()?;
    Ok(())
}

/// One 1-based label per line. `k` defaults to the largest label seen.
pub fn read_labels<R: Read>(reader: R, k: Option<usize>) -> Result<LabelVector> {
    let mut raw = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: usize = t.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("`{t}` is not a positive integer label"),
        })?;
        if v == 0 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: "labels are 1-based".into(),
            });
        }
        raw.push(v);
    }
    let k = k.unwrap_or_else(|| raw.iter().copied().max().unwrap_or(1));
    LabelVector::from_one_based(&raw, k)
}

pub fn load_labels(path: impl AsRef<Path>, k: Option<usize>) -> Result<LabelVector> {
    read_labels(open(path.as_ref())?, k)
}

pub fn write_labels<W: Write>(c: &LabelVector, mut w: W) -> Result<()> {
    for l in c.to_one_based() {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

pub fn save_labels(c: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    write_labels(c, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Old-to-new node index map produced by pruning or subsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    /// `forward[old] = Some(new)` for kept nodes, 0-based.
    pub forward: Vec<Option<usize>>,
}

impl IndexMap {
    fn from_kept(n: usize, kept: &[usize]) -> Self {
        let mut forward = vec![None; n];
        for (new, &old) in kept.iter().enumerate() {
            forward[old] = Some(new);
        }
        Self { forward }
    }

    /// Kept old indices in ascending order.
    pub fn kept(&self) -> Vec<usize> {
        self.forward
            .iter()
            .enumerate()
            .filter_map(|(old, new)| new.map(|_| old))
            .collect()
    }

    /// CSV with header `old,new`, 1-based, one row per kept node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "old,new")?;
        for (old, new) in self.forward.iter().enumerate() {
            if let Some(new) = new {
                writeln!(w, "{},{}", old + 1, new + 1)?;
            }
        }
        Ok(())
    }
}

/// Drops every degree-0 node.
pub fn prune_isolated(a: &AdjacencyMatrix, c: &LabelVector) -> Result<(AdjacencyMatrix, LabelVector, IndexMap)> {
    if c.len() != a.n() {
        return Err(Error::param(format!(
            "label vector has length {} but graph has {} nodes",
            c.len(),
            a.n()
        )));
    }
    let kept: Vec<usize> = (0..a.n()).filter(|&i| a.degree(i) > 0).collect();
    Ok((a.induced(&kept), c.restrict(&kept), IndexMap::from_kept(a.n(), &kept)))
}

/// Keeps each node independently with probability `p`, then prunes isolated
/// nodes from the induced subgraph.
pub fn subsample_communities(
    a: &AdjacencyMatrix,
    c: &LabelVector,
    p: f64,
    rng: &mut Rng,
) -> Result<(AdjacencyMatrix, LabelVector)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param(format!("sampling probability {p} outside (0, 1]")));
    }
    if c.len() != a.n() {
        return Err(Error::param(format!(
            "label vector has length {} but graph has {} nodes",
            c.len(),
            a.n()
        )));
    }
    // One draw per node even when p = 1, so the stream position does not depend on p.
    let kept: Vec<usize> = (0..a.n()).filter(|_| rng.random::<f64>() < p).collect();
    let (sub, sub_c) = (a.induced(&kept), c.restrict(&kept));
    let (pruned, pruned_c, _) = prune_isolated(&sub, &sub_c)?;
    Ok((pruned, pruned_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn complete(n: usize) -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))).unwrap()
    }

    #[test]
    fn loads_path_graph() {
        let a = read_edge_list("1 2\n2 3".as_bytes(), 3).unwrap();
        assert!(a.has_edge(0, 1) && a.has_edge(1, 0));
        assert!(a.has_edge(1, 2) && a.has_edge(2, 1));
        assert!(!a.has_edge(0, 2));
        assert_eq!(a.degree(1), 2);
    }

    #[test]
    fn self_loop_lines_are_dropped() {
        let a = read_edge_list("1 1".as_bytes(), 2).unwrap();
        assert_eq!(a, AdjacencyMatrix::empty(2));
    }

    #[test]
    fn reversed_duplicate_collapses() {
        let a = read_edge_list("1 2\n2 1".as_bytes(), 2).unwrap();
        assert_eq!(a.edge_count(), 1);
        assert_eq!(a.matrix()[(0, 1)], 1.0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_edge_list("1 2\n2 x\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_edge_list("1 2 3\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index() {
        let err = read_edge_list("# header\n1 4\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Range { line: 2, index: 4, n: 3 }), "{err}");
        let err = read_edge_list("0 1\n".as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Range { index: 0, .. }), "{err}");
    }

    #[test]
    fn from_matrix_rejects_invalid() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        assert!(AdjacencyMatrix::from_matrix(m).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        assert!(AdjacencyMatrix::from_matrix(m).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 0.5;
        m[(1, 0)] = 0.5;
        assert!(AdjacencyMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn prune_drops_isolated_node() {
        let a = AdjacencyMatrix::from_edges(3, [(0, 1)]).unwrap();
        let c = LabelVector::new(vec![0, 0, 1], 2).unwrap();
        let (p, pc, map) = prune_isolated(&a, &c).unwrap();
        assert_eq!(p.n(), 2);
        assert!(p.has_edge(0, 1));
        assert_eq!(pc.as_slice(), &[0, 0]);
        assert_eq!(map.forward, vec![Some(0), Some(1), None]);
        let mut csv = Vec::new();
        map.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), "old,new\n1,1\n2,2\n");
    }

    #[test]
    fn prune_keeps_complete_graph() {
        let a = complete(3);
        let c = LabelVector::uniform(3);
        let (p, _, _) = prune_isolated(&a, &c).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn prune_empty_graph_to_nothing() {
        let (p, pc, _) = prune_isolated(&AdjacencyMatrix::empty(2), &LabelVector::uniform(2)).unwrap();
        assert_eq!(p.n(), 0);
        assert!(pc.is_empty());
    }

    #[test]
    fn subsample_full_probability() {
        let a = complete(4);
        let c = LabelVector::uniform(4);
        let (s, _) = subsample_communities(&a, &c, 1.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(s, a);

        let a = AdjacencyMatrix::from_edges(3, [(0, 1)]).unwrap();
        let (s, sc) = subsample_communities(&a, &LabelVector::uniform(3), 1.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(s.n(), 2);
        assert_eq!(sc.len(), 2);
    }

    #[test]
    fn subsample_rejects_bad_probability() {
        let a = complete(3);
        let c = LabelVector::uniform(3);
        for p in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(subsample_communities(&a, &c, p, &mut rng_from_seed(0)).is_err());
        }
    }

    #[test]
    fn subsample_kept_count_matches_binomial() {
        // Complete graph so pruning never removes a kept node.
        let a = complete(100);
        let c = LabelVector::uniform(100);
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|s| subsample_communities(&a, &c, 0.5, &mut rng_from_seed(s)).unwrap().0.n() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let var = counts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        // Binomial(100, 0.5): mean 50, variance 25; SE of the mean is 5/sqrt(1000).
        let se = (25.0f64 / reps as f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * se, "mean {mean}");
        assert!((var - 25.0).abs() < 5.0, "variance {var}");
    }

    #[test]
    fn subsample_is_reproducible() {
        let a = complete(30);
        let c = LabelVector::uniform(30);
        let x = subsample_communities(&a, &c, 0.5, &mut rng_from_seed(9)).unwrap();
        let y = subsample_communities(&a, &c, 0.5, &mut rng_from_seed(9)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn labels_round_trip_and_validation() {
        let c = read_labels("1\n2\n2\n".as_bytes(), None).unwrap();
        assert_eq!(c.k(), 2);
        assert_eq!(c.as_slice(), &[0, 1, 1]);
        let mut out = Vec::new();
        write_labels(&c, &mut out).unwrap();
        assert_eq!(out, b"1\n2\n2\n");
        assert!(read_labels("0\n".as_bytes(), None).is_err());
        assert!(read_labels("3\n".as_bytes(), Some(2)).is_err());
        assert_eq!(c.sizes().counts, vec![1, 2]);
    }

    #[test]
    fn permutation_helpers_are_consistent() {
        let a = AdjacencyMatrix::from_edges(3, [(0, 1)]).unwrap();
        let perm = [2, 0, 1];
        let p = a.permuted(&perm);
        assert!(p.has_edge(2, 0));
        assert_eq!(p.edge_count(), 1);
        let c = LabelVector::new(vec![0, 1, 1], 2).unwrap();
        assert_eq!(c.permuted(&perm).as_slice(), &[1, 1, 0]);
    }
}

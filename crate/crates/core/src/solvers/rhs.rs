use crate::linalg::{BandedMatrix, BorderedMatrix, DenseMatrix, Matrix};
use crate::opgraph::{Graph, LeafCotangents, NodeId, Tape};
use crate::{Error, Result, C64};

/// One contiguous slice of a right-hand side: `bc.len()` scalar rows followed
/// by the leading coefficients of `body` (zeros when `body` is `None`).
#[derive(Clone, Debug)]
pub struct RhsBlock {
    pub bc: Vec<NodeId>,
    pub body: Option<NodeId>,
    pub len: usize,
}

impl RhsBlock {
    pub fn new(bc: Vec<NodeId>, body: Option<NodeId>, len: usize) -> Self {
        Self { bc, body, len }
    }

    /// Block with no boundary rows.
    pub fn body(node: NodeId, len: usize) -> Self {
        Self { bc: Vec::new(), body: Some(node), len }
    }
}

/// Packs graph roots into a flat right-hand side vector.
#[derive(Clone, Debug)]
pub struct RhsMap {
    blocks: Vec<RhsBlock>,
    roots: Vec<NodeId>,
    size: usize,
}

impl RhsMap {
    pub fn new(graph: &Graph, blocks: Vec<RhsBlock>) -> Result<Self> {
        let mut roots = Vec::new();
        let mut size = 0;
        for b in &blocks {
            if b.bc.len() > b.len {
                return Err(Error::contract("rhs block has more boundary rows than entries"));
            }
            for &n in &b.bc {
                if graph.shape(n)?.len() != 1 {
                    return Err(Error::contract("boundary rows must be scalar nodes"));
                }
                roots.push(n);
            }
            if let Some(n) = b.body {
                if graph.shape(n)?.len() < b.len - b.bc.len() {
                    return Err(Error::contract("rhs body node is shorter than its block"));
                }
                roots.push(n);
            }
            size += b.len;
        }
        Ok(Self { blocks, roots, size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn blocks(&self) -> &[RhsBlock] {
        &self.blocks
    }

    fn pack(&self, per_root: &[Vec<C64>]) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.size);
        let mut r = 0;
        for b in &self.blocks {
            for _ in &b.bc {
                out.push(per_root[r][0]);
                r += 1;
            }
            let rest = b.len - b.bc.len();
            match b.body {
                Some(_) => {
                    out.extend_from_slice(&per_root[r][..rest]);
                    r += 1;
                }
                None => out.extend(std::iter::repeat(C64::default()).take(rest)),
            }
        }
        out
    }

    /// Evaluate all roots and pack them.
    pub fn evaluate(&self, graph: &Graph) -> Result<(Vec<C64>, Tape)> {
        let tape = graph.record(&self.roots)?;
        let per_root: Vec<Vec<C64>> = self.roots.iter().map(|&r| tape.coeffs(r).unwrap().to_vec()).collect();
        Ok((self.pack(&per_root), tape))
    }

    /// Packed directional derivative along leaf tangents.
    pub fn jvp(&self, graph: &Graph, tape: &Tape, tangents: &[(NodeId, &[C64])]) -> Result<Vec<C64>> {
        Ok(self.pack(&graph.jvp_coeffs(tape, tangents)?))
    }

    /// Pull a packed cotangent back to the leaves.
    pub fn vjp(&self, graph: &Graph, tape: &Tape, cot: &[C64]) -> Result<LeafCotangents> {
        if cot.len() != self.size {
            return Err(Error::contract("rhs cotangent has the wrong length"));
        }
        let mut per_root: Vec<Vec<C64>> = Vec::with_capacity(self.roots.len());
        let mut off = 0;
        for b in &self.blocks {
            for _ in &b.bc {
                per_root.push(vec![cot[off]]);
                off += 1;
            }
            let rest = b.len - b.bc.len();
            if let Some(n) = b.body {
                let mut v = vec![C64::default(); graph.shape(n)?.len()];
                v[..rest].copy_from_slice(&cot[off..off + rest]);
                per_root.push(v);
            }
            off += rest;
        }
        let refs: Vec<&[C64]> = per_root.iter().map(|v| &v[..]).collect();
        graph.vjp_coeffs(tape, &refs)
    }
}

/// Offsets of unknown leaves inside a flat state vector.
#[derive(Clone, Debug)]
pub struct StateLayout {
    entries: Vec<(NodeId, usize, usize)>,
    size: usize,
}

impl StateLayout {
    pub fn new(graph: &Graph, leaves: &[NodeId]) -> Result<Self> {
        let mut entries = Vec::new();
        let mut off = 0;
        for &l in leaves {
            if !graph.is_leaf(l) {
                return Err(Error::contract("state entries must be leaves"));
            }
            let len = graph.shape(l)?.len();
            entries.push((l, off, len));
            off += len;
        }
        Ok(Self { entries, size: off })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Index range of `leaf` in the state vector.
    pub fn range(&self, leaf: NodeId) -> Option<std::ops::Range<usize>> {
        self.entries.iter().find(|e| e.0 == leaf).map(|&(_, o, l)| o..o + l)
    }

    pub fn bind(&self, graph: &mut Graph, x: &[C64]) -> Result<()> {
        if x.len() != self.size {
            return Err(Error::contract(format!("state has length {}, expected {}", x.len(), self.size)));
        }
        for &(leaf, off, len) in &self.entries {
            graph.bind_coeffs(leaf, &x[off..off + len])?;
        }
        Ok(())
    }

    /// Current bound values of the state leaves.
    pub fn gather(&self, graph: &Graph) -> Result<Vec<C64>> {
        let mut x = Vec::with_capacity(self.size);
        for &(leaf, _, _) in &self.entries {
            x.extend_from_slice(graph.bound_coeffs(leaf).ok_or_else(|| Error::contract("state leaf is unbound"))?);
        }
        Ok(x)
    }

    /// Split a flat tangent into per-leaf seeds.
    pub fn split<'a>(&self, x: &'a [C64]) -> Vec<(NodeId, &'a [C64])> {
        self.entries.iter().map(|&(leaf, off, len)| (leaf, &x[off..off + len])).collect()
    }

    /// Gather leaf cotangents into a flat vector.
    pub fn collect(&self, cot: &LeafCotangents) -> Vec<C64> {
        let mut out = vec![C64::default(); self.size];
        for &(leaf, off, len) in &self.entries {
            if let Some(c) = cot.coeffs(leaf) {
                out[off..off + len].copy_from_slice(c);
            }
        }
        out
    }
}

/// Square system with dense boundary rows on top of the leading rows of a
/// banded interior operator.
pub fn tau_matrix(bc_rows: &[Vec<C64>], interior: &BandedMatrix) -> Result<Matrix> {
    let n = interior.cols();
    let t = bc_rows.len();
    if t > n || interior.rows() < n - t {
        return Err(Error::contract("tau_matrix: interior operator has too few rows"));
    }
    let rest = interior.truncate_rows(n - t);
    if t == 0 {
        return Ok(Matrix::Banded(rest));
    }
    let mut top = DenseMatrix::zeros(t, n);
    for (i, row) in bc_rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::contract("tau_matrix: boundary row has the wrong length"));
        }
        top.row_mut(i).copy_from_slice(row);
    }
    Ok(Matrix::Bordered(BorderedMatrix::from_tau_rows(&top, &rest)?))
}

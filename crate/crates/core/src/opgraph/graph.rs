use std::sync::atomic::{AtomicU64, Ordering};

use super::{CotValue, Value};
use crate::linalg::{BandedMatrix, Mode};
use crate::spectral::{
    conversion_operator, differentiation_operator, quadrature_weights, Basis, BasisKind, CotangentField, Field,
};
use crate::{Error, Result, C64};

static GRAPH_IDS: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Static shape of a node's value.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Scalar,
    Field { basis: Basis, space: usize },
}

impl Shape {
    /// Number of coefficients (1 for scalars).
    pub fn len(&self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Field { basis, .. } => basis.n_modes(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn field(&self) -> Option<(&Basis, usize)> {
        match self {
            Shape::Field { basis, space } => Some((basis, *space)),
            Shape::Scalar => None,
        }
    }
}

#[derive(Clone, Debug)]
enum DiffKind {
    Diagonal(Vec<C64>),
    /// Derivative returned in T coefficients: `conv^-1 (diff x)`.
    Chebyshev { diff: BandedMatrix, conv: BandedMatrix },
}

#[derive(Clone, Debug)]
enum Op {
    FieldLeaf { name: String },
    ScalarLeaf { name: String },
    Constant(Vec<C64>),
    Add(usize, usize),
    Negate(usize),
    Scale(usize, C64),
    Multiply(usize, usize),
    Power(usize, u32),
    Differentiate { arg: usize, kind: DiffKind },
    Convert { arg: usize, op: BandedMatrix },
    Integrate { arg: usize, weights: Vec<f64> },
    Resample { arg: usize },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Shape,
}

/// Arena of expression nodes plus the current leaf bindings.
#[derive(Clone, Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    bound: Vec<Option<Vec<C64>>>,
    generation: Vec<u64>,
    counter: u64,
}

/// Record of one evaluation: traversal order and every intermediate value.
#[derive(Clone, Debug)]
pub struct Tape {
    graph_id: u64,
    roots: Vec<usize>,
    order: Vec<usize>,
    values: Vec<Option<Vec<C64>>>,
    grids: Vec<Option<Vec<Vec<C64>>>>,
    leaf_generations: Vec<(usize, u64)>,
}

impl Tape {
    /// Node indices in evaluation (topological) order.
    pub fn order(&self) -> Vec<NodeId> {
        self.order.iter().map(|&i| NodeId(i)).collect()
    }

    pub fn roots(&self) -> Vec<NodeId> {
        self.roots.iter().map(|&i| NodeId(i)).collect()
    }

    /// Raw coefficients recorded for a node, if it was evaluated.
    pub fn coeffs(&self, node: NodeId) -> Option<&[C64]> {
        self.values.get(node.0).and_then(|v| v.as_deref())
    }
}

/// Cotangents for every leaf of a graph after a reverse pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafCotangents {
    entries: Vec<(NodeId, CotValue)>,
}

impl LeafCotangents {
    pub fn get(&self, leaf: NodeId) -> Option<&CotValue> {
        self.entries.iter().find(|(id, _)| *id == leaf).map(|(_, v)| v)
    }

    /// Flat coefficients of a leaf's cotangent.
    pub fn coeffs(&self, leaf: NodeId) -> Option<&[C64]> {
        self.get(leaf).map(|v| v.coeffs())
    }

    pub fn iter(&self) -> impl Iterator<Item = &(NodeId, CotValue)> {
        self.entries.iter()
    }

    /// Same map with the given leaves dropped.
    pub fn without(&self, leaves: &[NodeId]) -> Self {
        Self { entries: self.entries.iter().filter(|(id, _)| !leaves.contains(id)).cloned().collect() }
    }
}

fn add_into(acc: &mut Option<Vec<C64>>, v: Vec<C64>) {
    match acc {
        Some(a) => a.iter_mut().zip(&v).for_each(|(x, y)| *x += y),
        None => *acc = Some(v),
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { id: GRAPH_IDS.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), bound: Vec::new(), generation: Vec::new(), counter: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Shape) -> NodeId {
        self.nodes.push(Node { op, shape });
        self.bound.push(None);
        self.generation.push(0);
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or_else(|| Error::contract(format!("node {} does not belong to this graph", id.0)))
    }

    pub fn shape(&self, id: NodeId) -> Result<Shape> {
        Ok(self.node(id)?.shape.clone())
    }

    fn field_shape(&self, id: NodeId, what: &str) -> Result<(Basis, usize)> {
        match &self.node(id)?.shape {
            Shape::Field { basis, space } => Ok((basis.clone(), *space)),
            Shape::Scalar => Err(Error::contract(format!("{what} expects a field operand"))),
        }
    }

    // ---- builders ----

    /// Field-valued leaf in the native coefficient space of `basis`.
    pub fn field_leaf(&mut self, name: &str, basis: &Basis) -> NodeId {
        self.push(Op::FieldLeaf { name: name.to_string() }, Shape::Field { basis: basis.clone(), space: 0 })
    }

    /// Scalar leaf (a parameter).
    pub fn scalar_leaf(&mut self, name: &str) -> NodeId {
        self.push(Op::ScalarLeaf { name: name.to_string() }, Shape::Scalar)
    }

    pub fn constant(&mut self, value: Value) -> Result<NodeId> {
        Ok(match value {
            Value::Scalar(s) => self.push(Op::Constant(vec![s]), Shape::Scalar),
            Value::Field(f) => {
                let f = if f.layout() == crate::spectral::Layout::Grid { f.to_coefficients()? } else { f };
                let shape = Shape::Field { basis: f.basis().clone(), space: f.space() };
                self.push(Op::Constant(f.into_data()), shape)
            }
        })
    }

    pub fn constant_scalar(&mut self, s: C64) -> NodeId {
        self.push(Op::Constant(vec![s]), Shape::Scalar)
    }

    pub fn constant_field(&mut self, f: Field) -> Result<NodeId> {
        self.constant(Value::Field(f))
    }

    /// Sum; a scalar operand is added to the first coefficient of a field operand.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a)?;
        let sb = self.shape(b)?;
        let shape = match (&sa, &sb) {
            (Shape::Scalar, Shape::Scalar) => Shape::Scalar,
            (Shape::Field { .. }, Shape::Scalar) => sa.clone(),
            (Shape::Scalar, Shape::Field { .. }) => sb.clone(),
            (Shape::Field { .. }, Shape::Field { .. }) => {
                if sa != sb {
                    return Err(Error::contract("add: operands live on different bases or spaces"));
                }
                sa.clone()
            }
        };
        Ok(self.push(Op::Add(a.0, b.0), shape))
    }

    pub fn negate(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a)?;
        Ok(self.push(Op::Negate(a.0), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.negate(b)?;
        self.add(a, nb)
    }

    pub fn scale(&mut self, a: NodeId, factor: C64) -> Result<NodeId> {
        let s = self.shape(a)?;
        Ok(self.push(Op::Scale(a.0, factor), s))
    }

    /// Product. Two fields are multiplied pointwise on the dealiased grid.
    pub fn multiply(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a)?;
        let sb = self.shape(b)?;
        let shape = match (&sa, &sb) {
            (Shape::Scalar, Shape::Scalar) => Shape::Scalar,
            (Shape::Field { .. }, Shape::Scalar) => sa.clone(),
            (Shape::Scalar, Shape::Field { .. }) => sb.clone(),
            (Shape::Field { basis: ba, space: pa }, Shape::Field { basis: bb, space: pb }) => {
                if ba != bb {
                    return Err(Error::contract("multiply: operands live on different bases"));
                }
                if *pa != 0 || *pb != 0 {
                    return Err(Error::contract("multiply: grid products need native coefficient space"));
                }
                sa.clone()
            }
        };
        Ok(self.push(Op::Multiply(a.0, b.0), shape))
    }

    /// Integer power `k >= 1`, evaluated on a grid with dealias `max(3/2, (k + 1) / 2)`.
    pub fn power(&mut self, a: NodeId, k: u32) -> Result<NodeId> {
        if k == 0 {
            return Err(Error::contract("power: exponent must be at least 1"));
        }
        let s = self.shape(a)?;
        if let Some((_, space)) = s.field() {
            if space != 0 {
                return Err(Error::contract("power: needs native coefficient space"));
            }
        }
        Ok(self.push(Op::Power(a.0, k), s))
    }

    /// Derivative of order `order >= 1`; the result stays in the native space.
    pub fn differentiate(&mut self, a: NodeId, order: usize) -> Result<NodeId> {
        let (basis, space) = self.field_shape(a, "differentiate")?;
        if space != 0 {
            return Err(Error::contract("differentiate: needs native coefficient space"));
        }
        if order == 0 {
            return Err(Error::contract("differentiate: order must be at least 1"));
        }
        let d = differentiation_operator(&basis, order);
        let kind = match basis.kind() {
            BasisKind::Fourier => DiffKind::Diagonal((0..basis.n_modes()).map(|i| d.matrix.get(i, i)).collect()),
            BasisKind::Chebyshev => {
                DiffKind::Chebyshev { diff: d.matrix, conv: conversion_operator(&basis, 0, order)?.matrix }
            }
        };
        Ok(self.push(Op::Differentiate { arg: a.0, kind }, Shape::Field { basis, space: 0 }))
    }

    /// Change coefficient space to `to` (Chebyshev); identity for Fourier.
    pub fn convert(&mut self, a: NodeId, to: usize) -> Result<NodeId> {
        let (basis, space) = self.field_shape(a, "convert")?;
        let to = if basis.kind() == BasisKind::Fourier { 0 } else { to };
        let op = conversion_operator(&basis, space, to)?.matrix;
        Ok(self.push(Op::Convert { arg: a.0, op }, Shape::Field { basis, space: to }))
    }

    /// Definite integral over the interval by quadrature on the native grid.
    pub fn integrate(&mut self, a: NodeId) -> Result<NodeId> {
        let (basis, space) = self.field_shape(a, "integrate")?;
        if space != 0 {
            return Err(Error::contract("integrate: needs native coefficient space"));
        }
        let weights = quadrature_weights(&basis);
        Ok(self.push(Op::Integrate { arg: a.0, weights }, Shape::Scalar))
    }

    /// Zero-pad or truncate onto `n_modes` modes.
    pub fn resample(&mut self, a: NodeId, n_modes: usize) -> Result<NodeId> {
        let (basis, space) = self.field_shape(a, "resample")?;
        let target = basis.with_modes(n_modes)?;
        Ok(self.push(Op::Resample { arg: a.0 }, Shape::Field { basis: target, space }))
    }

    // ---- bindings ----

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.0).map(|n| &n.op), Some(Op::FieldLeaf { .. } | Op::ScalarLeaf { .. }))
    }

    pub fn leaf_name(&self, id: NodeId) -> Option<&str> {
        match self.nodes.get(id.0).map(|n| &n.op) {
            Some(Op::FieldLeaf { name } | Op::ScalarLeaf { name }) => Some(name),
            _ => None,
        }
    }

    /// Leaf with the given name, if any.
    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        (0..self.nodes.len()).map(NodeId).find(|&id| self.leaf_name(id) == Some(name))
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).map(NodeId).filter(|&id| self.is_leaf(id)).collect()
    }

    /// Bind a leaf; bumps its generation so older tapes become stale.
    pub fn bind(&mut self, leaf: NodeId, value: Value) -> Result<()> {
        let shape = self.shape(leaf)?;
        let data = match (&shape, value) {
            (Shape::Scalar, Value::Scalar(s)) => vec![s],
            (Shape::Field { basis, space }, Value::Field(f)) => {
                let f = if f.layout() == crate::spectral::Layout::Grid { f.to_coefficients()? } else { f };
                if f.basis() != basis || f.space() != *space {
                    return Err(Error::contract("bind: field basis or space does not match the leaf"));
                }
                f.into_data()
            }
            _ => return Err(Error::contract("bind: scalar/field mismatch")),
        };
        self.bind_coeffs(leaf, &data)
    }

    /// Bind a leaf from raw coefficients (length 1 for scalar leaves).
    pub fn bind_coeffs(&mut self, leaf: NodeId, coeffs: &[C64]) -> Result<()> {
        if !self.is_leaf(leaf) {
            return Err(Error::contract(format!("node {} is not a leaf", leaf.0)));
        }
        let len = self.nodes[leaf.0].shape.len();
        if coeffs.len() != len {
            return Err(Error::contract(format!("bind: expected {len} coefficients, got {}", coeffs.len())));
        }
        self.counter += 1;
        self.generation[leaf.0] = self.counter;
        match &mut self.bound[leaf.0] {
            Some(v) => v.copy_from_slice(coeffs),
            slot => *slot = Some(coeffs.to_vec()),
        }
        Ok(())
    }

    pub fn bind_scalar(&mut self, leaf: NodeId, s: C64) -> Result<()> {
        self.bind_coeffs(leaf, &[s])
    }

    pub fn bound_coeffs(&self, leaf: NodeId) -> Option<&[C64]> {
        self.bound.get(leaf.0).and_then(|v| v.as_deref())
    }

    /// Wrap raw coefficients of `node` as a [`Value`].
    pub fn make_value(&self, node: NodeId, data: Vec<C64>) -> Result<Value> {
        Ok(match &self.node(node)?.shape {
            Shape::Scalar => Value::Scalar(data[0]),
            Shape::Field { basis, space } => Value::Field(Field::from_coeffs_in_space(basis, *space, data)?),
        })
    }

    fn make_cot(&self, node: NodeId, data: Vec<C64>) -> Result<CotValue> {
        Ok(match &self.node(node)?.shape {
            Shape::Scalar => CotValue::Scalar(data[0]),
            Shape::Field { basis, space } => CotValue::Field(CotangentField::from_coeffs_in_space(basis, *space, data)?),
        })
    }

    // ---- evaluation ----

    fn topo(&self, roots: &[usize]) -> Result<Vec<usize>> {
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        let mut stack: Vec<(usize, bool)> = roots.iter().rev().map(|&r| (r, false)).collect();
        while let Some((n, expanded)) = stack.pop() {
            if expanded {
                order.push(n);
                continue;
            }
            if seen[n] {
                continue;
            }
            seen[n] = true;
            stack.push((n, true));
            for child in self.children(n).into_iter().rev() {
                if !seen[child] {
                    stack.push((child, false));
                }
            }
        }
        Ok(order)
    }

    fn children(&self, n: usize) -> Vec<usize> {
        match &self.nodes[n].op {
            Op::FieldLeaf { .. } | Op::ScalarLeaf { .. } | Op::Constant(_) => vec![],
            Op::Add(a, b) | Op::Multiply(a, b) => vec![*a, *b],
            Op::Negate(a) | Op::Scale(a, _) | Op::Power(a, _) => vec![*a],
            Op::Differentiate { arg, .. } | Op::Convert { arg, .. } | Op::Integrate { arg, .. } | Op::Resample { arg } => {
                vec![*arg]
            }
        }
    }

    /// Evaluate `roots`; every reachable node is computed exactly once.
    pub fn evaluate(&self, roots: &[NodeId]) -> Result<(Vec<Value>, Tape)> {
        let tape = self.record(roots)?;
        let values = roots
            .iter()
            .map(|r| self.make_value(*r, tape.values[r.0].clone().expect("root evaluated")))
            .collect::<Result<Vec<_>>>()?;
        Ok((values, tape))
    }

    /// Evaluate without wrapping the outputs; read them with [`Tape::coeffs`].
    pub fn record(&self, roots: &[NodeId]) -> Result<Tape> {
        for r in roots {
            self.node(*r)?;
        }
        let roots: Vec<usize> = roots.iter().map(|r| r.0).collect();
        let order = self.topo(&roots)?;
        let mut values: Vec<Option<Vec<C64>>> = vec![None; self.nodes.len()];
        let mut grids: Vec<Option<Vec<Vec<C64>>>> = vec![None; self.nodes.len()];
        let mut leaf_generations = Vec::new();
        for &n in &order {
            let node = &self.nodes[n];
            let v = match &node.op {
                Op::FieldLeaf { name } | Op::ScalarLeaf { name } => {
                    leaf_generations.push((n, self.generation[n]));
                    self.bound[n].clone().ok_or_else(|| Error::contract(format!("leaf '{name}' is unbound")))?
                }
                Op::Constant(v) => v.clone(),
                Op::Multiply(a, b) => {
                    let (va, vb) = (values[*a].as_ref().unwrap(), values[*b].as_ref().unwrap());
                    match (&self.nodes[*a].shape, &self.nodes[*b].shape) {
                        (Shape::Field { basis, .. }, Shape::Field { .. }) => {
                            let m = basis.product_grid_size(2);
                            let ga = basis.backward(va, m)?;
                            let gb = basis.backward(vb, m)?;
                            let prod: Vec<C64> = ga.iter().zip(&gb).map(|(x, y)| x * y).collect();
                            grids[n] = Some(vec![ga, gb]);
                            basis.forward(&prod)?
                        }
                        (Shape::Scalar, _) => vb.iter().map(|x| x * va[0]).collect(),
                        (_, Shape::Scalar) => va.iter().map(|x| x * vb[0]).collect(),
                    }
                }
                Op::Power(a, k) => {
                    let va = values[*a].as_ref().unwrap();
                    match &self.nodes[*a].shape {
                        Shape::Scalar => vec![va[0].powu(*k)],
                        Shape::Field { basis, .. } => {
                            let m = basis.product_grid_size(*k);
                            let g = basis.backward(va, m)?;
                            let out: Vec<C64> = g.iter().map(|x| x.powu(*k)).collect();
                            grids[n] = Some(vec![g]);
                            basis.forward(&out)?
                        }
                    }
                }
                _ => self.apply_linear(n, &|i| values[i].as_deref())?,
            };
            values[n] = Some(v);
        }
        Ok(Tape { graph_id: self.id, roots, order, values, grids, leaf_generations })
    }

    /// Apply the linear node `n` to its operand(s) given by `arg`.
    /// Operands that `arg` reports as `None` are treated as zero.
    fn apply_linear<'a>(&self, n: usize, arg: &dyn Fn(usize) -> Option<&'a [C64]>) -> Result<Vec<C64>> {
        let node = &self.nodes[n];
        let len = node.shape.len();
        let zero = || vec![C64::default(); len];
        Ok(match &node.op {
            Op::Add(a, b) => {
                let mut out = zero();
                for &x in [a, b] {
                    if let Some(v) = arg(x) {
                        if v.len() == len {
                            out.iter_mut().zip(v).for_each(|(o, y)| *o += y);
                        } else {
                            out[0] += v[0];
                        }
                    }
                }
                out
            }
            Op::Negate(a) => arg(*a).map(|v| v.iter().map(|x| -x).collect()).unwrap_or_else(zero),
            Op::Scale(a, s) => arg(*a).map(|v| v.iter().map(|x| x * s).collect()).unwrap_or_else(zero),
            Op::Differentiate { arg: a, kind } => match arg(*a) {
                None => zero(),
                Some(v) => match kind {
                    DiffKind::Diagonal(d) => v.iter().zip(d).map(|(x, y)| x * y).collect(),
                    DiffKind::Chebyshev { diff, conv } => {
                        conv.solve_upper_triangular(&diff.matvec(v, Mode::Normal), Mode::Normal)?
                    }
                },
            },
            Op::Convert { arg: a, op } => arg(*a).map(|v| op.matvec(v, Mode::Normal)).unwrap_or_else(zero),
            Op::Integrate { arg: a, weights } => match arg(*a) {
                None => zero(),
                Some(v) => {
                    let (basis, _) = self.nodes[*a].shape.field().expect("integrand is a field");
                    let g = basis.backward(v, weights.len())?;
                    vec![g.iter().zip(weights).map(|(x, w)| x * *w).sum()]
                }
            },
            Op::Resample { arg: a } => {
                let mut out = zero();
                if let Some(v) = arg(*a) {
                    let k = len.min(v.len());
                    out[..k].copy_from_slice(&v[..k]);
                }
                out
            }
            _ => unreachable!("not a linear node"),
        })
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.graph_id != self.id {
            return Err(Error::contract("tape was recorded on a different graph"));
        }
        for &(leaf, gen) in &tape.leaf_generations {
            if self.generation[leaf] != gen {
                return Err(Error::StaleTape { leaf });
            }
        }
        Ok(())
    }

    /// Forward-mode derivative of the tape roots along the given leaf tangents.
    /// Leaves without a tangent are held fixed.
    pub fn jvp(&self, tape: &Tape, tangents: &[(NodeId, Value)]) -> Result<Vec<Value>> {
        let raw: Vec<(NodeId, &[C64])> = tangents.iter().map(|(id, v)| (*id, v.coeffs())).collect();
        let out = self.jvp_coeffs(tape, &raw)?;
        tape.roots.iter().zip(out).map(|(&r, d)| self.make_value(NodeId(r), d)).collect()
    }

    /// [`Graph::jvp`] on raw coefficient slices.
    pub fn jvp_coeffs(&self, tape: &Tape, tangents: &[(NodeId, &[C64])]) -> Result<Vec<Vec<C64>>> {
        self.check_tape(tape)?;
        let mut tan: Vec<Option<Vec<C64>>> = vec![None; self.nodes.len()];
        for (id, t) in tangents {
            if !self.is_leaf(*id) {
                return Err(Error::contract("tangents may only be seeded on leaves"));
            }
            if t.len() != self.nodes[id.0].shape.len() {
                return Err(Error::contract("tangent length does not match leaf shape"));
            }
            tan[id.0] = Some(t.to_vec());
        }
        for &n in &tape.order {
            let node = &self.nodes[n];
            let t = match &node.op {
                Op::FieldLeaf { .. } | Op::ScalarLeaf { .. } => continue,
                Op::Constant(_) => None,
                Op::Multiply(a, b) => {
                    let (ta, tb) = (tan[*a].as_deref(), tan[*b].as_deref());
                    if ta.is_none() && tb.is_none() {
                        None
                    } else {
                        let va = tape.values[*a].as_deref().unwrap();
                        let vb = tape.values[*b].as_deref().unwrap();
                        Some(match (&self.nodes[*a].shape, &self.nodes[*b].shape) {
                            (Shape::Field { basis, .. }, Shape::Field { .. }) => {
                                let m = basis.product_grid_size(2);
                                let g = tape.grids[n].as_ref().unwrap();
                                let mut acc = vec![C64::default(); m];
                                if let Some(ta) = ta {
                                    let gt = basis.backward(ta, m)?;
                                    acc.iter_mut().zip(gt.iter().zip(&g[1])).for_each(|(o, (x, y))| *o += x * y);
                                }
                                if let Some(tb) = tb {
                                    let gt = basis.backward(tb, m)?;
                                    acc.iter_mut().zip(gt.iter().zip(&g[0])).for_each(|(o, (x, y))| *o += x * y);
                                }
                                basis.forward(&acc)?
                            }
                            _ => {
                                let len = node.shape.len();
                                let mut out = vec![C64::default(); len];
                                let get = |v: &[C64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                                for i in 0..len {
                                    if let Some(ta) = ta {
                                        out[i] += get(ta, i) * get(vb, i);
                                    }
                                    if let Some(tb) = tb {
                                        out[i] += get(va, i) * get(tb, i);
                                    }
                                }
                                out
                            }
                        })
                    }
                }
                Op::Power(a, k) => match tan[*a].as_deref() {
                    None => None,
                    Some(ta) => Some(match &self.nodes[*a].shape {
                        Shape::Scalar => {
                            let va = tape.values[*a].as_ref().unwrap()[0];
                            vec![ta[0] * va.powu(k - 1) * (*k as f64)]
                        }
                        Shape::Field { basis, .. } => {
                            let m = basis.product_grid_size(*k);
                            let g = &tape.grids[n].as_ref().unwrap()[0];
                            let gt = basis.backward(ta, m)?;
                            let prod: Vec<C64> =
                                gt.iter().zip(g).map(|(t, x)| t * x.powu(k - 1) * (*k as f64)).collect();
                            basis.forward(&prod)?
                        }
                    }),
                },
                _ => {
                    if self.children(n).iter().all(|&ch| tan[ch].is_none()) {
                        None
                    } else {
                        Some(self.apply_linear(n, &|i| tan[i].as_deref())?)
                    }
                }
            };
            tan[n] = t;
        }
        Ok(tape
            .roots
            .iter()
            .map(|&r| tan[r].clone().unwrap_or_else(|| vec![C64::default(); self.nodes[r].shape.len()]))
            .collect())
    }

    /// Reverse-mode pullback of root cotangents to every leaf.
    pub fn vjp(&self, tape: &Tape, cotangents: &[CotValue]) -> Result<LeafCotangents> {
        let raw: Vec<&[C64]> = cotangents.iter().map(|c| c.coeffs()).collect();
        self.vjp_coeffs(tape, &raw)
    }

    /// [`Graph::vjp`] on raw coefficient slices, one per tape root.
    pub fn vjp_coeffs(&self, tape: &Tape, cotangents: &[&[C64]]) -> Result<LeafCotangents> {
        self.check_tape(tape)?;
        if cotangents.len() != tape.roots.len() {
            return Err(Error::contract("vjp: need one cotangent per root"));
        }
        let mut cot: Vec<Option<Vec<C64>>> = vec![None; self.nodes.len()];
        for (&r, c) in tape.roots.iter().zip(cotangents) {
            if c.len() != self.nodes[r].shape.len() {
                return Err(Error::contract("vjp: cotangent length does not match root shape"));
            }
            add_into(&mut cot[r], c.to_vec());
        }
        for &n in tape.order.iter().rev() {
            let Some(y) = cot[n].take() else { continue };
            let node = &self.nodes[n];
            match &node.op {
                Op::FieldLeaf { .. } | Op::ScalarLeaf { .. } => {
                    cot[n] = Some(y);
                }
                Op::Constant(_) => {}
                Op::Add(a, b) => {
                    for &x in [a, b] {
                        let v = if self.nodes[x].shape.len() == y.len() { y.clone() } else { vec![y[0]] };
                        add_into(&mut cot[x], v);
                    }
                }
                Op::Negate(a) => add_into(&mut cot[*a], y.iter().map(|v| -v).collect()),
                Op::Scale(a, s) => add_into(&mut cot[*a], y.iter().map(|v| v * s.conj()).collect()),
                Op::Multiply(a, b) => {
                    let va = tape.values[*a].as_deref().unwrap();
                    let vb = tape.values[*b].as_deref().unwrap();
                    match (&self.nodes[*a].shape, &self.nodes[*b].shape) {
                        (Shape::Field { basis, .. }, Shape::Field { .. }) => {
                            let m = basis.product_grid_size(2);
                            let g = tape.grids[n].as_ref().unwrap();
                            let gy = basis.forward_adjoint(&y, m)?;
                            let ca: Vec<C64> = gy.iter().zip(&g[1]).map(|(c, v)| c * v.conj()).collect();
                            let cb: Vec<C64> = gy.iter().zip(&g[0]).map(|(c, v)| c * v.conj()).collect();
                            add_into(&mut cot[*a], basis.backward_adjoint(&ca)?);
                            add_into(&mut cot[*b], basis.backward_adjoint(&cb)?);
                        }
                        (Shape::Scalar, Shape::Scalar) => {
                            add_into(&mut cot[*a], vec![y[0] * vb[0].conj()]);
                            add_into(&mut cot[*b], vec![y[0] * va[0].conj()]);
                        }
                        (Shape::Scalar, _) => {
                            add_into(&mut cot[*a], vec![crate::linalg::dot(vb, &y)]);
                            add_into(&mut cot[*b], y.iter().map(|v| v * va[0].conj()).collect());
                        }
                        (_, Shape::Scalar) => {
                            add_into(&mut cot[*a], y.iter().map(|v| v * vb[0].conj()).collect());
                            add_into(&mut cot[*b], vec![crate::linalg::dot(va, &y)]);
                        }
                    }
                }
                Op::Power(a, k) => {
                    let kf = *k as f64;
                    match &self.nodes[*a].shape {
                        Shape::Scalar => {
                            let va = tape.values[*a].as_ref().unwrap()[0];
                            add_into(&mut cot[*a], vec![y[0] * (va.powu(k - 1) * kf).conj()]);
                        }
                        Shape::Field { basis, .. } => {
                            let m = basis.product_grid_size(*k);
                            let g = &tape.grids[n].as_ref().unwrap()[0];
                            let gy = basis.forward_adjoint(&y, m)?;
                            let ca: Vec<C64> = gy.iter().zip(g).map(|(c, x)| c * (x.powu(k - 1) * kf).conj()).collect();
                            add_into(&mut cot[*a], basis.backward_adjoint(&ca)?);
                        }
                    }
                }
                Op::Differentiate { arg, kind } => {
                    let v = match kind {
                        DiffKind::Diagonal(d) => y.iter().zip(d).map(|(c, x)| c * x.conj()).collect(),
                        DiffKind::Chebyshev { diff, conv } => {
                            diff.matvec(&conv.solve_upper_triangular(&y, Mode::Adjoint)?, Mode::Adjoint)
                        }
                    };
                    add_into(&mut cot[*arg], v);
                }
                Op::Convert { arg, op } => add_into(&mut cot[*arg], op.matvec(&y, Mode::Adjoint)),
                Op::Integrate { arg, weights } => {
                    let (basis, _) = self.nodes[*arg].shape.field().expect("integrand is a field");
                    let g: Vec<C64> = weights.iter().map(|w| y[0] * *w).collect();
                    add_into(&mut cot[*arg], basis.backward_adjoint(&g)?);
                }
                Op::Resample { arg } => {
                    let len = self.nodes[*arg].shape.len();
                    let mut v = vec![C64::default(); len];
                    let k = len.min(y.len());
                    v[..k].copy_from_slice(&y[..k]);
                    add_into(&mut cot[*arg], v);
                }
            }
        }
        let entries = self
            .leaves()
            .into_iter()
            .map(|id| {
                let data = cot[id.0].take().unwrap_or_else(|| vec![C64::default(); self.nodes[id.0].shape.len()]);
                Ok((id, self.make_cot(id, data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LeafCotangents { entries })
    }
}

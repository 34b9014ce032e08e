use crate::linalg::Matrix;
use crate::opgraph::NodeId;
use crate::solvers::{RhsBlock, RhsMap, StateLayout};
use crate::timestep::Ivp;
use crate::{Error, Result, C64};

/// An IVP whose state was extended by extra components appended after the
/// original state.
#[derive(Clone, Debug)]
pub struct Augmented {
    pub ivp: Ivp,
    /// Length of the original state.
    pub base_size: usize,
    /// Appended leaves with their initial values.
    pub extra: Vec<(NodeId, Vec<C64>)>,
}

impl Augmented {
    /// Original initial state followed by the appended components' initial values.
    pub fn initial_state(&self, x0: &[C64]) -> Result<Vec<C64>> {
        if x0.len() != self.base_size {
            return Err(Error::contract("augmented ivp: initial state has the wrong length"));
        }
        let mut out = x0.to_vec();
        for (_, v) in &self.extra {
            out.extend_from_slice(v);
        }
        Ok(out)
    }

    /// The slice of a full state (or cotangent) that belongs to an appended leaf.
    pub fn component<'a>(&self, x: &'a [C64], leaf: NodeId) -> Option<&'a [C64]> {
        self.ivp.state.range(leaf).map(|r| &x[r])
    }
}

fn append(ivp: &Ivp, extra: Vec<(NodeId, Vec<C64>)>, bodies: Vec<Option<NodeId>>) -> Result<Augmented> {
    let mut mass = ivp.mass.clone();
    let mut lhs = ivp.lhs.clone();
    let mut blocks = ivp.rhs.blocks().to_vec();
    let mut leaves = ivp.state.leaves();
    for ((leaf, init), body) in extra.iter().zip(bodies) {
        let len = init.len();
        mass = mass.block_diag(&Matrix::identity(len));
        lhs = lhs.block_diag(&Matrix::zeros(len));
        blocks.push(RhsBlock::new(Vec::new(), body, len));
        leaves.push(*leaf);
    }
    let rhs = RhsMap::new(&ivp.graph, blocks)?;
    let state = StateLayout::new(&ivp.graph, &leaves)?;
    let out = Ivp::new(mass, lhs, ivp.graph.clone(), rhs, state, ivp.time)?;
    Ok(Augmented { ivp: out, base_size: ivp.size(), extra })
}

/// Move the named constant parameters into the state with `dp/dt = 0`, so the
/// reverse sweep returns their cotangents as part of `dJ/dX_0`.
pub fn augment_parameters(ivp: &Ivp, names: &[&str]) -> Result<Augmented> {
    let mut extra = Vec::new();
    for &name in names {
        let leaf = ivp.graph.leaf(name).ok_or_else(|| Error::contract(format!("no leaf named '{name}'")))?;
        if Some(leaf) == ivp.time || ivp.state.range(leaf).is_some() {
            return Err(Error::Unsupported(format!("'{name}' varies in time and cannot be augmented as a parameter")));
        }
        let value = ivp.graph.bound_coeffs(leaf).ok_or_else(|| Error::contract(format!("parameter '{name}' is unbound")))?;
        extra.push((leaf, value.to_vec()));
    }
    let bodies = vec![None; extra.len()];
    append(ivp, extra, bodies)
}

/// Add an accumulator `I` with `dI/dt = integrand(X, p, t)`, `I(0) = 0`,
/// integrated by the same scheme. Returns the augmented problem; the
/// accumulator leaf is the last entry of `extra`.
pub fn append_integrated_cost(ivp: &Ivp, integrand: NodeId) -> Result<Augmented> {
    if ivp.graph.shape(integrand)?.len() != 1 {
        return Err(Error::contract("integrand must be a scalar node"));
    }
    let mut ivp = ivp.clone();
    let mut name = String::from("integrated_cost");
    while ivp.graph.leaf(&name).is_some() {
        name.push('_');
    }
    let leaf = ivp.graph.scalar_leaf(&name);
    append(&ivp, vec![(leaf, vec![C64::default()])], vec![Some(integrand)])
}

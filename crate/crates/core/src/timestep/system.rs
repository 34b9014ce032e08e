use std::collections::{BTreeMap, HashMap};

use crate::linalg::{LuFactors, Matrix};
use crate::opgraph::{Graph, LeafCotangents, NodeId, Tape};
use crate::solvers::{RhsMap, StateLayout};
use crate::{Error, Result, C64};

/// Initial value problem `M dX/dt + L X = F(X, p, t)`.
///
/// `state` lists the graph leaves holding `X`; `time`, if present, is a scalar
/// leaf bound to the evaluation time. Every other leaf is a parameter.
#[derive(Clone, Debug)]
pub struct Ivp {
    pub mass: Matrix,
    pub lhs: Matrix,
    pub graph: Graph,
    pub rhs: RhsMap,
    pub state: StateLayout,
    pub time: Option<NodeId>,
}

impl Ivp {
    pub fn new(mass: Matrix, lhs: Matrix, graph: Graph, rhs: RhsMap, state: StateLayout, time: Option<NodeId>) -> Result<Self> {
        let n = state.size();
        for (what, m) in [("mass", &mass), ("lhs", &lhs)] {
            if m.rows() != n || m.cols() != n {
                return Err(Error::contract(format!("ivp: {what} is {}x{}, state has {n} entries", m.rows(), m.cols())));
            }
        }
        if rhs.size() != n {
            return Err(Error::contract("ivp: rhs size differs from state size"));
        }
        if let Some(t) = time {
            if graph.shape(t)?.len() != 1 || !graph.is_leaf(t) {
                return Err(Error::contract("ivp: time must be a scalar leaf"));
            }
        }
        Ok(Self { mass, lhs, graph, rhs, state, time })
    }

    pub fn size(&self) -> usize {
        self.state.size()
    }

    /// Leaves that are neither state nor time.
    pub fn parameter_leaves(&self) -> Vec<NodeId> {
        let state = self.state.leaves();
        self.graph.leaves().into_iter().filter(|l| !state.contains(l) && Some(*l) != self.time).collect()
    }

    fn bind_into(&self, graph: &mut Graph, x: &[C64], t: f64) -> Result<()> {
        self.state.bind(graph, x)?;
        if let Some(tl) = self.time {
            graph.bind_scalar(tl, C64::new(t, 0.0))?;
        }
        Ok(())
    }

    /// `F(x, p, t)` evaluated on `graph`, a copy of `self.graph`, keeping the tape.
    pub fn rhs_taped(&self, graph: &mut Graph, x: &[C64], t: f64) -> Result<(Vec<C64>, Tape)> {
        self.bind_into(graph, x, t)?;
        self.rhs.evaluate(graph)
    }

    /// State and parameter cotangents `(dF/dX)^H y`, `(dF/dp)^H y` from a recorded tape.
    pub fn rhs_vjp_taped(&self, graph: &Graph, tape: &Tape, y: &[C64]) -> Result<(Vec<C64>, LeafCotangents)> {
        let cot = self.rhs.vjp(graph, tape, y)?;
        let mut drop = self.state.leaves();
        drop.extend(self.time);
        Ok((self.state.collect(&cot), cot.without(&drop)))
    }

    /// `F(x, p, t)`.
    pub fn rhs_at(&mut self, x: &[C64], t: f64) -> Result<Vec<C64>> {
        let mut g = std::mem::take(&mut self.graph);
        let r = self.rhs_taped(&mut g, x, t);
        self.graph = g;
        Ok(r?.0)
    }

    /// `(dF/dX)^H y` and the parameter cotangents `(dF/dp)^H y` at `(x, t)`.
    pub fn rhs_vjp_at(&mut self, x: &[C64], t: f64, y: &[C64]) -> Result<(Vec<C64>, LeafCotangents)> {
        let mut g = std::mem::take(&mut self.graph);
        let r = self.rhs_taped(&mut g, x, t).and_then(|(_, tape)| self.rhs_vjp_taped(&g, &tape, y));
        self.graph = g;
        r
    }

    /// `(dF/dX) v` at `(x, t)`.
    pub fn rhs_jvp_at(&mut self, x: &[C64], t: f64, v: &[C64]) -> Result<Vec<C64>> {
        let mut g = std::mem::take(&mut self.graph);
        let r = self.rhs_taped(&mut g, x, t).and_then(|(_, tape)| self.rhs.jvp(&g, &tape, &self.state.split(v)));
        self.graph = g;
        r
    }
}

/// Factors of `alpha M + beta L`, one per distinct coefficient pair.
#[derive(Debug, Default)]
pub struct FactorCache {
    map: HashMap<(u64, u64), LuFactors>,
    builds: usize,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of factorizations performed by this cache.
    pub fn builds(&self) -> usize {
        self.builds
    }

    pub fn get(&mut self, mass: &Matrix, lhs: &Matrix, alpha: f64, beta: f64) -> Result<&LuFactors> {
        let key = (alpha.to_bits(), beta.to_bits());
        if !self.map.contains_key(&key) {
            let m = Matrix::lincomb(C64::new(alpha, 0.0), mass, C64::new(beta, 0.0), lhs)?;
            self.map.insert(key, LuFactors::factor(&m)?);
            self.builds += 1;
        }
        Ok(&self.map[&key])
    }

    /// Cached factors only; never factors.
    pub fn cached(&self, alpha: f64, beta: f64) -> Option<&LuFactors> {
        self.map.get(&(alpha.to_bits(), beta.to_bits()))
    }
}

/// Running sum of parameter cotangents, keyed by leaf.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamCotangents {
    map: BTreeMap<NodeId, Vec<C64>>,
}

impl ParamCotangents {
    pub fn add(&mut self, cot: &LeafCotangents) {
        for (leaf, v) in cot.iter() {
            let c = v.coeffs();
            match self.map.get_mut(leaf) {
                Some(acc) => acc.iter_mut().zip(c).for_each(|(a, b)| *a += b),
                None => {
                    self.map.insert(*leaf, c.to_vec());
                }
            }
        }
    }

    pub fn add_raw(&mut self, leaf: NodeId, c: &[C64]) {
        match self.map.get_mut(&leaf) {
            Some(acc) => acc.iter_mut().zip(c).for_each(|(a, b)| *a += b),
            None => {
                self.map.insert(leaf, c.to_vec());
            }
        }
    }

    pub fn get(&self, leaf: NodeId) -> Option<&[C64]> {
        self.map.get(&leaf).map(|v| &v[..])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Vec<C64>)> {
        self.map.iter()
    }
}

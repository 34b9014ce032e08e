use std::collections::BTreeMap;

use super::{Action, CheckpointSchedule};
use crate::linalg::dot;
use crate::opgraph::{Graph, NodeId};
use crate::solvers::StateLayout;
use crate::timestep::{Integrator, ParamCotangents, StepState};
use crate::{c, Error, Result, C64};

/// Terminal cost `J(X_N)`.
pub trait Cost {
    /// `J` and its gradient `G` with `dJ = <G, dX_N>`.
    fn evaluate(&mut self, x: &[C64]) -> Result<(C64, Vec<C64>)>;
}

/// Cost given by a scalar node of its own graph; `layout` says which leaves
/// of that graph receive the final state.
#[derive(Clone, Debug)]
pub struct GraphCost {
    pub graph: Graph,
    pub layout: StateLayout,
    pub root: NodeId,
}

impl GraphCost {
    pub fn new(graph: Graph, layout: StateLayout, root: NodeId) -> Result<Self> {
        if graph.shape(root)?.len() != 1 {
            return Err(Error::contract("cost root must be scalar"));
        }
        Ok(Self { graph, layout, root })
    }
}

impl Cost for GraphCost {
    fn evaluate(&mut self, x: &[C64]) -> Result<(C64, Vec<C64>)> {
        self.layout.bind(&mut self.graph, x)?;
        let (vals, tape) = self.graph.evaluate(&[self.root])?;
        let one = [c(1.0)];
        let cot = self.graph.vjp_coeffs(&tape, &[&one])?;
        Ok((vals[0].coeffs()[0], self.layout.collect(&cot)))
    }
}

/// Linear cost `J = <G, X_N>`; used to pull a given cotangent back.
#[derive(Clone, Debug)]
pub struct SeedCost(pub Vec<C64>);

impl Cost for SeedCost {
    fn evaluate(&mut self, x: &[C64]) -> Result<(C64, Vec<C64>)> {
        Ok((dot(&self.0, x), self.0.clone()))
    }
}

/// Work counters of one forward/reverse run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct Diagnostics {
    /// Forward steps taken, including the final one.
    pub forward_steps: usize,
    /// Forward steps beyond one sweep `0 -> N`.
    pub recomputed_steps: usize,
    pub stores: usize,
    pub max_live: usize,
    pub adjoint_steps: usize,
    /// Factorizations performed by the integrator during the run.
    pub factorizations: usize,
}

/// Result of the forward sweep, ready for the reverse sweep.
#[derive(Debug)]
pub struct Forward {
    pub final_state: StepState,
    pub diagnostics: Diagnostics,
    current: StepState,
    store: BTreeMap<usize, StepState>,
    cursor: usize,
    factorizations_at_start: usize,
}

#[derive(Clone, Debug)]
pub struct GradientResult {
    pub value: C64,
    pub final_state: Vec<C64>,
    /// `dJ/dX_0`.
    pub initial: Vec<C64>,
    /// `dJ/dp` for every parameter leaf reached through the right-hand side.
    pub params: ParamCotangents,
    pub diagnostics: Diagnostics,
}

fn check(integ: &Integrator, schedule: &CheckpointSchedule) -> Result<()> {
    if schedule.steps != integ.steps() {
        return Err(Error::contract(format!(
            "checkpoint plan covers {} steps, integrator has {}",
            schedule.steps,
            integ.steps()
        )));
    }
    Ok(())
}

/// Integrate to `X_N`, storing checkpoints as the plan's forward part asks.
pub fn solve_ivp(integ: &mut Integrator, x0: Vec<C64>, t0: f64, schedule: &CheckpointSchedule) -> Result<Forward> {
    check(integ, schedule)?;
    let current = integ.start(x0, t0)?;
    let mut fw = Forward {
        final_state: current.clone(),
        diagnostics: Diagnostics::default(),
        current,
        store: BTreeMap::new(),
        cursor: 0,
        factorizations_at_start: integ.factorizations(),
    };
    while fw.cursor < schedule.actions.len() {
        let a = schedule.actions[fw.cursor];
        fw.cursor += 1;
        if a == Action::Final {
            let mut last = fw.current.clone();
            integ.step(&mut last)?;
            fw.diagnostics.forward_steps += 1;
            fw.final_state = last;
            fw.diagnostics.factorizations = integ.factorizations() - fw.factorizations_at_start;
            return Ok(fw);
        }
        execute(integ, &mut fw, a, schedule, None)?;
    }
    Err(Error::contract("checkpoint plan has no final step"))
}

fn execute(
    integ: &mut Integrator,
    fw: &mut Forward,
    a: Action,
    schedule: &CheckpointSchedule,
    adj: Option<&mut crate::timestep::AdjointState>,
) -> Result<()> {
    let d = &mut fw.diagnostics;
    match a {
        Action::Advance(to) => {
            d.forward_steps += to.saturating_sub(fw.current.n());
            integ.advance_to(&mut fw.current, to)?;
        }
        Action::Store(n) => {
            if fw.current.n() != n {
                return Err(Error::CheckpointMiss { step: n });
            }
            if let Some(cap) = schedule.capacity {
                if fw.store.len() >= cap {
                    return Err(Error::CheckpointCapacity { capacity: cap });
                }
            }
            fw.store.insert(n, fw.current.clone());
            d.stores += 1;
            d.max_live = d.max_live.max(fw.store.len());
        }
        Action::Restore(n) => {
            fw.current = fw.store.get(&n).cloned().ok_or(Error::CheckpointMiss { step: n })?;
        }
        Action::Free(n) => {
            fw.store.remove(&n);
        }
        Action::Final => return Err(Error::contract("checkpoint plan takes the final step twice")),
        Action::Adjoint(n) => {
            let adj = adj.ok_or_else(|| Error::contract("adjoint step before the reverse sweep"))?;
            if fw.current.n() != n {
                return Err(Error::CheckpointMiss { step: n });
            }
            integ.adjoint_step(adj, &fw.current, None)?;
            d.adjoint_steps += 1;
        }
    }
    Ok(())
}

/// Gradient of `cost(X_N)` with respect to `X_0` and the right-hand side
/// parameters, using `schedule` for the states the reverse sweep needs.
pub fn gradient_ivp(
    integ: &mut Integrator,
    x0: Vec<C64>,
    t0: f64,
    schedule: &CheckpointSchedule,
    cost: &mut dyn Cost,
) -> Result<GradientResult> {
    let mut fw = solve_ivp(integ, x0, t0, schedule)?;
    let (value, seed) = cost.evaluate(fw.final_state.x())?;
    let mut adj = integ.adjoint_seed(&seed)?;
    while fw.cursor < schedule.actions.len() {
        let a = schedule.actions[fw.cursor];
        fw.cursor += 1;
        execute(integ, &mut fw, a, schedule, Some(&mut adj))?;
    }
    if adj.n() != 0 {
        return Err(Error::CheckpointMiss { step: adj.n() - 1 });
    }
    let mut diagnostics = fw.diagnostics;
    diagnostics.recomputed_steps = diagnostics.forward_steps.saturating_sub(integ.steps());
    diagnostics.factorizations = integ.factorizations() - fw.factorizations_at_start;
    Ok(GradientResult {
        value,
        final_state: fw.final_state.x().to_vec(),
        initial: adj.xbar().to_vec(),
        params: adj.params,
        diagnostics,
    })
}

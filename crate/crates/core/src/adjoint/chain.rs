use std::collections::{BTreeMap, BTreeSet};

use super::{gradient_ivp, solve_ivp, CheckpointSchedule, Cost, SeedCost};
use crate::opgraph::NodeId;
use crate::solvers::Lbvp;
use crate::timestep::Integrator;
use crate::{Error, Result, C64};

/// One differentiable solver stage: named inputs in, one named output out.
pub trait Stage {
    fn inputs(&self) -> Vec<String>;
    fn output(&self) -> String;
    fn forward(&mut self, inputs: &[&[C64]]) -> Result<Vec<C64>>;
    /// Input cotangents (one per input, in order) of `<cot, output>` at the
    /// point of the last `forward`.
    fn vjp(&mut self, cot: &[C64]) -> Result<Vec<Vec<C64>>>;
}

type ForwardFn = Box<dyn FnMut(&[&[C64]]) -> Result<Vec<C64>>>;
type VjpFn = Box<dyn FnMut(&[C64]) -> Result<Vec<Vec<C64>>>>;

/// Stage from a pair of closures.
pub struct FnStage {
    inputs: Vec<String>,
    output: String,
    forward: ForwardFn,
    vjp: VjpFn,
}

impl FnStage {
    pub fn new(
        inputs: &[&str],
        output: &str,
        forward: impl FnMut(&[&[C64]]) -> Result<Vec<C64>> + 'static,
        vjp: impl FnMut(&[C64]) -> Result<Vec<Vec<C64>>> + 'static,
    ) -> Self {
        Self {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
            forward: Box::new(forward),
            vjp: Box::new(vjp),
        }
    }
}

impl Stage for FnStage {
    fn inputs(&self) -> Vec<String> {
        self.inputs.clone()
    }

    fn output(&self) -> String {
        self.output.clone()
    }

    fn forward(&mut self, inputs: &[&[C64]]) -> Result<Vec<C64>> {
        (self.forward)(inputs)
    }

    fn vjp(&mut self, cot: &[C64]) -> Result<Vec<Vec<C64>>> {
        (self.vjp)(cot)
    }
}

/// LBVP whose inputs are leaves of its right-hand side graph.
pub struct LbvpStage {
    pub lbvp: Lbvp,
    inputs: Vec<(String, NodeId)>,
    output: String,
}

impl LbvpStage {
    pub fn new(lbvp: Lbvp, inputs: &[(&str, NodeId)], output: &str) -> Self {
        Self { lbvp, inputs: inputs.iter().map(|(s, n)| (s.to_string(), *n)).collect(), output: output.to_string() }
    }
}

impl Stage for LbvpStage {
    fn inputs(&self) -> Vec<String> {
        self.inputs.iter().map(|(s, _)| s.clone()).collect()
    }

    fn output(&self) -> String {
        self.output.clone()
    }

    fn forward(&mut self, inputs: &[&[C64]]) -> Result<Vec<C64>> {
        for ((_, leaf), v) in self.inputs.iter().zip(inputs) {
            self.lbvp.graph.bind_coeffs(*leaf, v)?;
        }
        self.lbvp.solve()
    }

    fn vjp(&mut self, cot: &[C64]) -> Result<Vec<Vec<C64>>> {
        let lc = self.lbvp.vjp(cot)?;
        Ok(self
            .inputs
            .iter()
            .map(|(_, leaf)| match lc.coeffs(*leaf) {
                Some(v) => v.to_vec(),
                None => vec![C64::default(); self.lbvp.graph.shape(*leaf).map(|s| s.len()).unwrap_or(0)],
            })
            .collect())
    }
}

/// IVP stage: the first input is `X_0`, the rest are right-hand side
/// parameter leaves; the output is `X_N`.
pub struct IvpStage {
    pub integrator: Integrator,
    pub schedule: CheckpointSchedule,
    pub t0: f64,
    initial: String,
    params: Vec<(String, NodeId)>,
    output: String,
    x0: Vec<C64>,
}

impl IvpStage {
    pub fn new(integrator: Integrator, schedule: CheckpointSchedule, t0: f64, initial: &str, params: &[(&str, NodeId)], output: &str) -> Self {
        Self {
            integrator,
            schedule,
            t0,
            initial: initial.to_string(),
            params: params.iter().map(|(s, n)| (s.to_string(), *n)).collect(),
            output: output.to_string(),
            x0: Vec::new(),
        }
    }
}

impl Stage for IvpStage {
    fn inputs(&self) -> Vec<String> {
        std::iter::once(self.initial.clone()).chain(self.params.iter().map(|(s, _)| s.clone())).collect()
    }

    fn output(&self) -> String {
        self.output.clone()
    }

    fn forward(&mut self, inputs: &[&[C64]]) -> Result<Vec<C64>> {
        for ((_, leaf), v) in self.params.iter().zip(&inputs[1..]) {
            self.integrator.ivp.graph.bind_coeffs(*leaf, v)?;
        }
        self.x0 = inputs[0].to_vec();
        let fw = solve_ivp(&mut self.integrator, self.x0.clone(), self.t0, &self.schedule)?;
        Ok(fw.final_state.x().to_vec())
    }

    fn vjp(&mut self, cot: &[C64]) -> Result<Vec<Vec<C64>>> {
        let g = gradient_ivp(&mut self.integrator, self.x0.clone(), self.t0, &self.schedule, &mut SeedCost(cot.to_vec()))?;
        let mut out = vec![g.initial];
        for (_, leaf) in &self.params {
            out.push(match g.params.get(*leaf) {
                Some(v) => v.to_vec(),
                None => vec![C64::default(); self.integrator.ivp.graph.shape(*leaf)?.len()],
            });
        }
        Ok(out)
    }
}

/// Stages wired by name. Inputs not produced by any stage are external.
#[derive(Default)]
pub struct Chain {
    stages: Vec<Box<dyn Stage>>,
}

#[derive(Clone, Debug)]
pub struct ChainGradient {
    pub value: C64,
    /// Every value computed by the forward run, by name.
    pub values: BTreeMap<String, Vec<C64>>,
    /// `dJ/d(input)` for every external input.
    pub inputs: BTreeMap<String, Vec<C64>>,
    /// Stage outputs that neither feed a later stage nor the cost.
    pub dangling: Vec<String>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a stage; its inputs may only refer to earlier outputs or externals.
    pub fn push(&mut self, stage: impl Stage + 'static) -> Result<()> {
        let out = stage.output();
        if self.stages.iter().any(|s| s.output() == out) {
            return Err(Error::contract(format!("chain: output '{out}' produced twice")));
        }
        if stage.inputs().contains(&out) {
            return Err(Error::contract(format!("chain: stage '{out}' consumes its own output")));
        }
        self.stages.push(Box::new(stage));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    fn produced(&self) -> BTreeSet<String> {
        self.stages.iter().map(|s| s.output()).collect()
    }

    /// Run every stage in order.
    pub fn forward(&mut self, external: &BTreeMap<String, Vec<C64>>) -> Result<BTreeMap<String, Vec<C64>>> {
        let mut values = external.clone();
        for s in &mut self.stages {
            let names = s.inputs();
            let args: Vec<&[C64]> = names
                .iter()
                .map(|n| values.get(n).map(|v| v.as_slice()).ok_or_else(|| Error::contract(format!("chain: input '{n}' is not available"))))
                .collect::<Result<_>>()?;
            let out = s.forward(&args)?;
            values.insert(s.output(), out);
        }
        Ok(values)
    }

    /// Forward run, `cost` on the value named `target`, then stage vjps in
    /// reverse order. Cotangents reaching one name from several consumers are summed.
    pub fn gradient(&mut self, external: &BTreeMap<String, Vec<C64>>, target: &str, cost: &mut dyn Cost) -> Result<ChainGradient> {
        let values = self.forward(external)?;
        let x = values.get(target).ok_or_else(|| Error::contract(format!("chain: no value named '{target}'")))?;
        let (value, seed) = cost.evaluate(x)?;
        let mut cots: BTreeMap<String, Vec<C64>> = BTreeMap::new();
        cots.insert(target.to_string(), seed);
        let mut dangling = Vec::new();
        for s in self.stages.iter_mut().rev() {
            let out = s.output();
            let Some(cot) = cots.remove(&out) else {
                log::warn!("chain: output '{out}' is consumed nowhere; its cotangent is taken as zero");
                dangling.push(out.clone());
                continue;
            };
            let input_cots = s.vjp(&cot)?;
            for (name, v) in s.inputs().into_iter().zip(input_cots) {
                match cots.get_mut(&name) {
                    Some(acc) => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
                    None => {
                        cots.insert(name, v);
                    }
                }
            }
        }
        let produced = self.produced();
        let mut inputs = BTreeMap::new();
        for (name, v) in external {
            if !produced.contains(name) {
                inputs.insert(name.clone(), cots.remove(name).unwrap_or_else(|| vec![C64::default(); v.len()]));
            }
        }
        dangling.reverse();
        Ok(ChainGradient { value, values, inputs, dangling })
    }
}

use super::{RhsMap, StateLayout};
use crate::linalg::{DenseMatrix, LuFactors, Matrix, Mode};
use crate::opgraph::{Graph, LeafCotangents, NodeId, Tape};
use crate::{Error, Result, C64};

/// Nonlinear boundary value problem `L X = F(X, p)` solved by Newton's method.
///
/// The Jacobian `H = L - dF/dX` is assembled densely, one forward-mode column
/// per unknown, and factored at every iterate including the accepted one, so
/// the retained factors are exact at the returned state.
#[derive(Debug)]
pub struct Nlbvp {
    lhs: Matrix,
    pub graph: Graph,
    rhs: RhsMap,
    state: StateLayout,
    pub tolerance: f64,
    pub max_iterations: usize,
    factors: Option<LuFactors>,
    tape: Option<Tape>,
    history: Vec<f64>,
}

impl Nlbvp {
    pub fn new(lhs: Matrix, graph: Graph, rhs: RhsMap, state: StateLayout) -> Result<Self> {
        let n = state.size();
        if lhs.rows() != n || lhs.cols() != n || rhs.size() != n {
            return Err(Error::contract(format!(
                "nlbvp: lhs {}x{}, rhs {}, state {} must agree",
                lhs.rows(),
                lhs.cols(),
                rhs.size(),
                n
            )));
        }
        Ok(Self { lhs, graph, rhs, state, tolerance: 1e-10, max_iterations: 20, factors: None, tape: None, history: Vec::new() })
    }

    pub fn state(&self) -> &StateLayout {
        &self.state
    }

    pub fn lhs(&self) -> &Matrix {
        &self.lhs
    }

    /// Infinity norm of `L X - F(X)` at each iterate of the last solve.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Newton steps taken by the last solve.
    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    pub fn factors(&self) -> Option<&LuFactors> {
        self.factors.as_ref()
    }

    /// `L X - F(X)` at the currently bound state.
    pub fn residual(&self) -> Result<Vec<C64>> {
        let x = self.state.gather(&self.graph)?;
        let (f, _) = self.rhs.evaluate(&self.graph)?;
        Ok(self.lhs.matvec(&x, Mode::Normal).iter().zip(&f).map(|(a, b)| a - b).collect())
    }

    /// Dense `H = L - dF/dX` at the state recorded on `tape`.
    pub fn jacobian(&self, tape: &Tape) -> Result<DenseMatrix> {
        let n = self.state.size();
        let mut h = self.lhs.to_dense();
        let mut e = vec![C64::default(); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.rhs.jvp(&self.graph, tape, &self.state.split(&e))?;
            for (i, v) in col.iter().enumerate() {
                if *v != C64::default() {
                    h.add_to(i, j, -v);
                }
            }
            e[j] = C64::default();
        }
        Ok(h)
    }

    pub fn solve(&mut self, guess: &[C64]) -> Result<Vec<C64>> {
        if !(self.tolerance > 0.0) {
            return Err(Error::contract("nlbvp: tolerance must be positive"));
        }
        self.factors = None;
        self.tape = None;
        self.history.clear();
        let mut x = guess.to_vec();
        for it in 0.. {
            self.state.bind(&mut self.graph, &x)?;
            let (f, tape) = self.rhs.evaluate(&self.graph)?;
            let r: Vec<C64> = self.lhs.matvec(&x, Mode::Normal).iter().zip(&f).map(|(a, b)| a - b).collect();
            let rn = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
            self.history.push(rn);
            log::debug!("newton iterate {it}: residual {rn:e}");
            if !rn.is_finite() {
                return Err(Error::NonConvergence { iterations: it, history: self.history.clone() });
            }
            let converged = rn <= self.tolerance;
            if !converged && it == self.max_iterations {
                return Err(Error::NonConvergence { iterations: it, history: self.history.clone() });
            }
            let lu = LuFactors::factor(&Matrix::Dense(self.jacobian(&tape)?))?;
            if converged {
                self.factors = Some(lu);
                self.tape = Some(tape);
                return Ok(x);
            }
            let step = lu.solve(&r, Mode::Normal)?;
            x.iter_mut().zip(&step).for_each(|(a, d)| *a -= d);
        }
        unreachable!()
    }

    fn cached(&self) -> Result<(&LuFactors, &Tape)> {
        match (&self.factors, &self.tape) {
            (Some(f), Some(t)) => Ok((f, t)),
            _ => Err(Error::contract("nlbvp: solve must converge before derivatives")),
        }
    }

    /// Dense `H = L - dF/dX` at the converged state.
    pub fn converged_jacobian(&self) -> Result<DenseMatrix> {
        let (_, tape) = self.cached()?;
        self.jacobian(tape)
    }

    /// `dX = H^-1 (dF/dp) dp` for tangents on parameter leaves.
    pub fn jvp(&self, tangents: &[(NodeId, &[C64])]) -> Result<Vec<C64>> {
        let (lu, tape) = self.cached()?;
        if tangents.iter().any(|(id, _)| self.state.range(*id).is_some()) {
            return Err(Error::contract("nlbvp: tangents must be on parameter leaves"));
        }
        lu.solve(&self.rhs.jvp(&self.graph, tape, tangents)?, Mode::Normal)
    }

    /// Parameter-leaf cotangents of `<G, X>` via `H^H Y = G`.
    pub fn vjp(&self, cot: &[C64]) -> Result<LeafCotangents> {
        let (lu, tape) = self.cached()?;
        let y = lu.solve(cot, Mode::Adjoint)?;
        Ok(self.rhs.vjp(&self.graph, tape, &y)?.without(&self.state.leaves()))
    }

    /// Adjoint variable `Y = H^-H G`.
    pub fn adjoint_solve(&self, cot: &[C64]) -> Result<Vec<C64>> {
        let (lu, _) = self.cached()?;
        lu.solve(cot, Mode::Adjoint)
    }
}

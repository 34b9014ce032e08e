use super::RhsMap;
use crate::linalg::{LuFactors, Matrix, Mode};
use crate::opgraph::{Graph, LeafCotangents, NodeId, Tape};
use crate::{Error, Result, C64};

/// Linear boundary value problem `L X = F(p)`.
///
/// The factorization of `L` is kept after [`Lbvp::solve`] and reused by
/// [`Lbvp::vjp`] and [`Lbvp::jvp`].
#[derive(Debug)]
pub struct Lbvp {
    lhs: Matrix,
    pub graph: Graph,
    rhs: RhsMap,
    factors: Option<LuFactors>,
    tape: Option<Tape>,
}

impl Lbvp {
    pub fn new(lhs: Matrix, graph: Graph, rhs: RhsMap) -> Result<Self> {
        if lhs.rows() != lhs.cols() || lhs.rows() != rhs.size() {
            return Err(Error::contract(format!(
                "lbvp: lhs is {}x{} but rhs has {} rows",
                lhs.rows(),
                lhs.cols(),
                rhs.size()
            )));
        }
        Ok(Self { lhs, graph, rhs, factors: None, tape: None })
    }

    pub fn lhs(&self) -> &Matrix {
        &self.lhs
    }

    pub fn rhs(&self) -> &RhsMap {
        &self.rhs
    }

    /// Replace `L`; the cached factors are dropped.
    pub fn set_lhs(&mut self, lhs: Matrix) -> Result<()> {
        if lhs.rows() != self.lhs.rows() || lhs.cols() != self.lhs.cols() {
            return Err(Error::contract("lbvp: replacement lhs changes the system size"));
        }
        self.lhs = lhs;
        self.factors = None;
        Ok(())
    }

    /// Factor `L` now (no-op if factors are cached).
    pub fn factor(&mut self) -> Result<&LuFactors> {
        if self.factors.is_none() {
            self.factors = Some(LuFactors::factor(&self.lhs)?);
        }
        Ok(self.factors.as_ref().unwrap())
    }

    pub fn factors(&self) -> Option<&LuFactors> {
        self.factors.as_ref()
    }

    pub fn solve(&mut self) -> Result<Vec<C64>> {
        self.factor()?;
        let (f, tape) = self.rhs.evaluate(&self.graph)?;
        self.tape = Some(tape);
        self.factors.as_ref().unwrap().solve(&f, Mode::Normal)
    }

    fn cached(&self) -> Result<(&LuFactors, &Tape)> {
        match (&self.factors, &self.tape) {
            (Some(f), Some(t)) => Ok((f, t)),
            _ => Err(Error::contract("lbvp: solve must run before derivatives")),
        }
    }

    /// `dX = L^-1 (dF/dp) dp` along leaf tangents.
    pub fn jvp(&self, tangents: &[(NodeId, &[C64])]) -> Result<Vec<C64>> {
        let (lu, tape) = self.cached()?;
        lu.solve(&self.rhs.jvp(&self.graph, tape, tangents)?, Mode::Normal)
    }

    /// Leaf cotangents of `<G, X>`: solves `L^H Y = G` then pulls `Y` through `F`.
    pub fn vjp(&self, cot: &[C64]) -> Result<LeafCotangents> {
        let (lu, tape) = self.cached()?;
        let y = lu.solve(cot, Mode::Adjoint)?;
        self.rhs.vjp(&self.graph, tape, &y)
    }

    /// Adjoint variable `Y = L^-H G`.
    pub fn adjoint_solve(&self, cot: &[C64]) -> Result<Vec<C64>> {
        let (lu, _) = self.cached()?;
        lu.solve(cot, Mode::Adjoint)
    }
}

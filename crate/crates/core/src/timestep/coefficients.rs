use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Supported IMEX schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Sbdf1,
    Sbdf2,
    Cnab2,
    Rk111,
    Rk222,
    Rk443,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::Sbdf1, Scheme::Sbdf2, Scheme::Cnab2, Scheme::Rk111, Scheme::Rk222, Scheme::Rk443];

    pub fn is_multistep(self) -> bool {
        matches!(self, Scheme::Sbdf1 | Scheme::Sbdf2 | Scheme::Cnab2)
    }

    /// Number of past states a multistep scheme reads (1 for Runge-Kutta).
    pub fn steps(self) -> usize {
        match self {
            Scheme::Sbdf2 | Scheme::Cnab2 => 2,
            _ => 1,
        }
    }

    pub fn tableau(self) -> Option<RkTableau> {
        match self {
            Scheme::Rk111 => Some(RkTableau::rk111()),
            Scheme::Rk222 => Some(RkTableau::rk222()),
            Scheme::Rk443 => Some(RkTableau::rk443()),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Sbdf1 => "SBDF1",
            Scheme::Sbdf2 => "SBDF2",
            Scheme::Cnab2 => "CNAB2",
            Scheme::Rk111 => "RK111",
            Scheme::Rk222 => "RK222",
            Scheme::Rk443 => "RK443",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown timestepper '{s}'")))
    }
}

/// One row of multistep coefficients; index `i` multiplies state `n - i`.
/// `c[0]` is always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultistepCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl MultistepCoefficients {
    /// Number of past states used.
    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    pub fn a(&self, i: usize) -> f64 {
        self.a.get(i).copied().unwrap_or(0.0)
    }

    pub fn b(&self, i: usize) -> f64 {
        self.b.get(i).copied().unwrap_or(0.0)
    }

    pub fn c(&self, i: usize) -> f64 {
        self.c.get(i).copied().unwrap_or(0.0)
    }
}

/// Coefficients for step `n = dt_history.len()`, where `dt_history` lists
/// every timestep so far in order (the last entry is the current step).
pub fn multistep_coefficients(scheme: Scheme, dt_history: &[f64]) -> Result<MultistepCoefficients> {
    let Some(&dt) = dt_history.last() else {
        return Err(Error::contract("multistep_coefficients: empty timestep history"));
    };
    if dt_history.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::contract("multistep_coefficients: timesteps must be positive"));
    }
    let order = scheme.steps().min(dt_history.len());
    let w = if order == 2 { dt / dt_history[dt_history.len() - 2] } else { 0.0 };
    let row = match (scheme, order) {
        (Scheme::Sbdf1 | Scheme::Sbdf2, 1) => {
            MultistepCoefficients { a: vec![1.0 / dt, -1.0 / dt], b: vec![1.0, 0.0], c: vec![0.0, 1.0] }
        }
        (Scheme::Sbdf2, 2) => MultistepCoefficients {
            a: vec![(1.0 + 2.0 * w) / ((1.0 + w) * dt), -(1.0 + w) / dt, w * w / ((1.0 + w) * dt)],
            b: vec![1.0, 0.0, 0.0],
            c: vec![0.0, 1.0 + w, -w],
        },
        (Scheme::Cnab2, 1) => MultistepCoefficients { a: vec![1.0 / dt, -1.0 / dt], b: vec![0.5, 0.5], c: vec![0.0, 1.0] },
        (Scheme::Cnab2, 2) => MultistepCoefficients {
            a: vec![1.0 / dt, -1.0 / dt, 0.0],
            b: vec![0.5, 0.5, 0.0],
            c: vec![0.0, 1.0 + 0.5 * w, -0.5 * w],
        },
        _ => return Err(Error::contract(format!("{scheme} is not a multistep scheme"))),
    };
    Ok(row)
}

/// IMEX Runge-Kutta tableau with `s` stages; matrices are `(s+1) x (s+1)`,
/// `a` strictly lower triangular (explicit) and `h` lower triangular (implicit).
#[derive(Clone, Debug, PartialEq)]
pub struct RkTableau {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

fn square(rows: &[&[f64]], n: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut v = r.to_vec();
            v.resize(n, 0.0);
            v
        })
        .collect()
}

impl RkTableau {
    pub fn stages(&self) -> usize {
        self.c.len() - 1
    }

    pub fn rk111() -> Self {
        Self { c: vec![0.0, 1.0], a: square(&[&[], &[1.0]], 2), h: square(&[&[], &[0.0, 1.0]], 2) }
    }

    pub fn rk222() -> Self {
        let g = (2.0 - 2f64.sqrt()) / 2.0;
        let d = 1.0 - 1.0 / (2.0 * g);
        Self {
            c: vec![0.0, g, 1.0],
            a: square(&[&[], &[g], &[d, 1.0 - d]], 3),
            h: square(&[&[], &[0.0, g], &[0.0, 1.0 - g, g]], 3),
        }
    }

    pub fn rk443() -> Self {
        Self {
            c: vec![0.0, 0.5, 2.0 / 3.0, 0.5, 1.0],
            a: square(
                &[&[], &[0.5], &[11.0 / 18.0, 1.0 / 18.0], &[5.0 / 6.0, -5.0 / 6.0, 0.5], &[0.25, 1.75, 0.75, -1.75]],
                5,
            ),
            h: square(
                &[
                    &[],
                    &[0.0, 0.5],
                    &[0.0, 1.0 / 6.0, 0.5],
                    &[0.0, -0.5, 0.5, 0.5],
                    &[0.0, 1.5, -1.5, 0.5, 0.5],
                ],
                5,
            ),
        }
    }
}

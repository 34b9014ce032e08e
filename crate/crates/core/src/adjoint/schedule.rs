use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    StoreAll,
    /// Store every `k`-th state and recompute the segments between them.
    Periodic(usize),
    /// Binomial (revolve) checkpointing with this many slots besides `X_0`.
    Binomial(usize),
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::StoreAll => write!(f, "store_all"),
            ScheduleKind::Periodic(k) => write!(f, "periodic:{k}"),
            ScheduleKind::Binomial(s) => write!(f, "binomial:{s}"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// `store_all`, `periodic:K` or `binomial:SLOTS`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let arg = |rest: &str| rest.parse::<usize>().map_err(|_| Error::Config(format!("bad checkpoint schedule '{s}'")));
        if s == "store_all" {
            Ok(ScheduleKind::StoreAll)
        } else if let Some(rest) = s.strip_prefix("periodic:") {
            Ok(ScheduleKind::Periodic(arg(rest)?))
        } else if let Some(rest) = s.strip_prefix("binomial:") {
            Ok(ScheduleKind::Binomial(arg(rest)?))
        } else {
            Err(Error::Config(format!("unknown checkpoint schedule '{s}'")))
        }
    }
}

/// One instruction of a checkpoint plan. The executor keeps a single
/// "current" forward state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Step the current state forward until it reaches this index.
    Advance(usize),
    /// Keep a copy of the current state, which has this index.
    Store(usize),
    /// Make the stored state the current one.
    Restore(usize),
    /// Drop a stored state.
    Free(usize),
    /// Take the last step on a copy of the current state `X_{N-1}`, evaluate
    /// the cost at `X_N` and seed the reverse sweep.
    Final,
    /// Run the adjoint step that needs `X_n` (the current state).
    Adjoint(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointSchedule {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub actions: Vec<Action>,
    /// Refuse to hold more than this many stored states at once.
    pub capacity: Option<usize>,
}

impl CheckpointSchedule {
    /// Build the plan for `steps` steps. Binomial schedules with at least
    /// `steps - 1` slots are the same as store-all.
    pub fn build(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::contract("checkpoint schedule: need at least one step"));
        }
        let mut b = Builder::new(steps);
        match kind {
            ScheduleKind::StoreAll => b.store_all(),
            ScheduleKind::Periodic(0) => return Err(Error::contract("periodic schedule needs a period >= 1")),
            ScheduleKind::Periodic(k) => b.periodic(k),
            ScheduleKind::Binomial(0) => return Err(Error::contract("binomial schedule needs at least one slot")),
            ScheduleKind::Binomial(s) if s + 1 >= steps => b.store_all(),
            ScheduleKind::Binomial(s) => {
                b.store(0);
                b.reverse(0, steps, s);
                b.actions.push(Action::Free(0));
            }
        }
        Ok(Self { kind, steps, actions: b.actions, capacity: None })
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }

    /// Steps taken by `Advance` actions, i.e. every forward step except the
    /// final one taken inside [`Action::Final`].
    pub fn forward_steps(&self) -> usize {
        let mut cur = 0;
        let mut total = 0;
        for a in &self.actions {
            match *a {
                Action::Advance(to) => {
                    total += to - cur;
                    cur = to;
                }
                Action::Restore(n) => cur = n,
                _ => {}
            }
        }
        total
    }

    /// Forward steps beyond the single sweep to `X_{N-1}`.
    pub fn recomputed_steps(&self) -> usize {
        self.forward_steps() - (self.steps - 1)
    }

    pub fn stores(&self) -> usize {
        self.actions.iter().filter(|a| matches!(a, Action::Store(_))).count()
    }

    /// Largest number of states held at once.
    pub fn max_live(&self) -> usize {
        let mut live = 0usize;
        let mut peak = 0;
        for a in &self.actions {
            match a {
                Action::Store(_) => {
                    live += 1;
                    peak = peak.max(live);
                }
                Action::Free(_) => live -= 1,
                _ => {}
            }
        }
        peak
    }

    /// Check by simulation that every adjoint step `N-1, ..., 0` runs exactly
    /// once, in order, on the right state, after `Final`.
    pub fn validate(&self) -> Result<()> {
        let mut cur = Some(0usize);
        let mut stored = BTreeSet::new();
        let mut next_adjoint = self.steps;
        let mut seeded = false;
        let bad = |msg: String| Err(Error::contract(format!("checkpoint plan: {msg}")));
        for (k, a) in self.actions.iter().enumerate() {
            match *a {
                Action::Advance(to) => match cur {
                    Some(c) if to > c && to < self.steps => cur = Some(to),
                    _ => return bad(format!("action {k}: cannot advance {cur:?} to {to}")),
                },
                Action::Store(n) => {
                    if cur != Some(n) || !stored.insert(n) {
                        return bad(format!("action {k}: bad store of {n}"));
                    }
                }
                Action::Restore(n) => {
                    if !stored.contains(&n) {
                        return Err(Error::CheckpointMiss { step: n });
                    }
                    cur = Some(n);
                }
                Action::Free(n) => {
                    if !stored.remove(&n) {
                        return bad(format!("action {k}: free of unstored {n}"));
                    }
                }
                Action::Final => {
                    if seeded || cur != Some(self.steps - 1) {
                        return bad(format!("action {k}: final step from {cur:?}"));
                    }
                    seeded = true;
                }
                Action::Adjoint(n) => {
                    if !seeded || n + 1 != next_adjoint || cur != Some(n) {
                        return Err(Error::CheckpointMiss { step: n });
                    }
                    next_adjoint = n;
                }
            }
        }
        if next_adjoint != 0 {
            return bad(format!("reverse sweep stops at {next_adjoint}"));
        }
        Ok(())
    }
}

/// `C(s + t, s)`: steps reversible with `s` checkpoints and at most `t`
/// recomputations of any step.
fn beta(s: usize, t: usize) -> usize {
    let mut b: u128 = 1;
    for k in 1..=s.min(t) as u128 {
        b = b * ((s + t) as u128 - s.min(t) as u128 + k) / k;
    }
    b.min(usize::MAX as u128) as usize
}

/// Offset of the next checkpoint inside a segment of `len` steps with
/// `slots` free slots besides the segment start.
pub(crate) fn binomial_split(len: usize, slots: usize) -> usize {
    let s = slots + 1;
    let mut r = 0;
    while beta(s, r) < len {
        r += 1;
    }
    let lower = if r >= 2 { beta(s, r - 2) } else { 1 };
    len.saturating_sub(beta(s - 1, r)).max(lower).max(1)
}

struct Builder {
    steps: usize,
    actions: Vec<Action>,
    cur: usize,
    seeded: bool,
}

impl Builder {
    fn new(steps: usize) -> Self {
        Self { steps, actions: Vec::new(), cur: 0, seeded: false }
    }

    fn store(&mut self, n: usize) {
        self.actions.push(Action::Store(n));
    }

    fn restore(&mut self, n: usize) {
        if self.cur != n {
            self.actions.push(Action::Restore(n));
            self.cur = n;
        }
    }

    fn advance(&mut self, to: usize) {
        if to > self.cur {
            self.actions.push(Action::Advance(to));
            self.cur = to;
        }
    }

    fn adjoint(&mut self, n: usize) {
        if !self.seeded {
            self.actions.push(Action::Final);
            self.seeded = true;
        }
        self.actions.push(Action::Adjoint(n));
    }

    fn store_all(&mut self) {
        for n in 0..self.steps {
            self.advance(n);
            self.store(n);
        }
        for n in (0..self.steps).rev() {
            self.restore(n);
            self.adjoint(n);
            self.actions.push(Action::Free(n));
        }
    }

    fn periodic(&mut self, k: usize) {
        let starts: Vec<usize> = (0..self.steps).step_by(k).collect();
        let last = *starts.last().unwrap();
        for &a in &starts[..starts.len() - 1] {
            self.advance(a);
            self.store(a);
        }
        for (idx, &a) in starts.iter().enumerate().rev() {
            let b = starts.get(idx + 1).copied().unwrap_or(self.steps);
            if a != last {
                self.restore(a);
            }
            for n in a..b {
                self.advance(n);
                if n != a || a == last {
                    self.store(n);
                }
            }
            for n in (a..b).rev() {
                self.restore(n);
                self.adjoint(n);
                self.actions.push(Action::Free(n));
            }
        }
    }

    /// Reverse states `b-1, ..., a` given `X_a` is stored and `slots` more
    /// states may be stored.
    fn reverse(&mut self, a: usize, b: usize, slots: usize) {
        let len = b - a;
        if len == 1 {
            self.restore(a);
            self.adjoint(a);
        } else if slots == 0 {
            for m in (a..b).rev() {
                self.restore(a);
                self.advance(m);
                self.adjoint(m);
            }
        } else {
            let j = a + binomial_split(len, slots);
            self.restore(a);
            self.advance(j);
            self.store(j);
            self.reverse(j, b, slots - 1);
            self.actions.push(Action::Free(j));
            self.reverse(a, j, slots);
        }
    }
}

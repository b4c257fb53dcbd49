//! Deterministic bounded GridWorld.
//!
//! States are indexed row-major (`index = row * cols + col`). Actions are
//! coded `0 = up, 1 = down, 2 = left, 3 = right`; "up" decreases the row.
//! Moves that would leave the grid keep the agent in place.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 10, cols: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(HoloError::IndexOutOfRange {
            what: "action",
            index: i,
            size: Self::COUNT,
        })
    }

    /// up ↔ down, left ↔ right.
    pub fn inverse(self) -> Self {
        match self {
            Action::Up => Action::Down,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }

    /// (row delta, col delta)
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

pub fn inverse_action(a: Action) -> Action {
    a.inverse()
}

/// The two (action, inverse) pairs used by the invertibility loss.
pub fn inverse_pairs() -> Vec<(Action, Action)> {
    vec![(Action::Up, Action::Down), (Action::Left, Action::Right)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: Action,
    pub s_next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Transition>,
    pub holdout: Vec<Transition>,
    pub ratio: f64,
    pub seed: u64,
}

impl DatasetSplit {
    /// Every transition, train first.
    pub fn all(&self) -> Vec<Transition> {
        let mut v = self.train.clone();
        v.extend_from_slice(&self.holdout);
        v.sort_by_key(|t| (t.s, t.a));
        v
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,a,s_next,split")?;
        for t in self.all() {
            let split = if self.holdout.contains(&t) { "holdout" } else { "train" };
            writeln!(w, "{},{},{},{}", t.s, t.a.index(), t.s_next, split)?;
        }
        Ok(())
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(HoloError::InvalidDimension(format!("grid {rows}x{cols}")));
        }
        Ok(Self { rows, cols })
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn coords(&self, s: usize) -> Result<(usize, usize)> {
        self.check_state(s)?;
        Ok((s / self.cols, s % self.cols))
    }

    pub fn index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(HoloError::InvalidArgument(format!(
                "cell ({row}, {col}) outside {}x{} grid",
                self.rows, self.cols
            )));
        }
        Ok(row * self.cols + col)
    }

    pub fn check_state(&self, s: usize) -> Result<()> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(HoloError::IndexOutOfRange {
                what: "state",
                index: s,
                size: self.num_states(),
            })
        }
    }

    /// The cell `k` unclamped moves away along `a`, if it is on the grid.
    pub fn offset(&self, s: usize, a: Action, k: isize) -> Result<Option<usize>> {
        let (r, c) = self.coords(s)?;
        let (dr, dc) = a.delta();
        let nr = r as isize + dr * k;
        let nc = c as isize + dc * k;
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            return Ok(None);
        }
        Ok(Some(nr as usize * self.cols + nc as usize))
    }

    pub fn is_interior(&self, s: usize) -> bool {
        let (r, c) = (s / self.cols, s % self.cols);
        r > 0 && c > 0 && r + 1 < self.rows && c + 1 < self.cols
    }
}

pub fn step(g: &GridSpec, s: usize, a: Action) -> Result<usize> {
    Ok(g.offset(s, a, 1)?.unwrap_or(s))
}

/// All `(s, a)` transitions in lexicographic order.
pub fn enumerate_transitions(g: &GridSpec) -> Vec<Transition> {
    (0..g.num_states())
        .flat_map(|s| {
            Action::ALL.into_iter().map(move |a| Transition {
                s,
                a,
                s_next: step(g, s, a).expect("state in range"),
            })
        })
        .collect()
}

/// Withholds `round(ratio · n)` uniformly chosen transitions.
pub fn zero_shot_split(ts: &[Transition], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(HoloError::InvalidArgument(format!(
            "zero-shot ratio must lie in [0, 1), got {ratio}"
        )));
    }
    let n_hold = (ratio * ts.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut held = vec![false; ts.len()];
    for &i in &order[..n_hold] {
        held[i] = true;
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (t, h) in ts.iter().zip(held) {
        if h {
            holdout.push(*t);
        } else {
            train.push(*t);
        }
    }
    Ok(DatasetSplit {
        train,
        holdout,
        ratio,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    pub actions: Vec<Action>,
    /// Ground-truth states, `actions.len() + 1` entries starting at `start`.
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> usize {
        *self.states.last().expect("trajectory has at least one state")
    }
}

pub fn sample_trajectory(g: &GridSpec, length: usize, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_trajectory_with(g, length, &mut rng)
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(
    g: &GridSpec,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(HoloError::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let start = rng.random_range(0..g.num_states());
    let actions: Vec<Action> = (0..length)
        .map(|_| Action::ALL[rng.random_range(0..Action::COUNT)])
        .collect();
    let mut states = Vec::with_capacity(length + 1);
    states.push(start);
    for &a in &actions {
        let s = *states.last().unwrap();
        states.push(step(g, s, a)?);
    }
    Ok(Trajectory {
        start,
        actions,
        states,
    })
}

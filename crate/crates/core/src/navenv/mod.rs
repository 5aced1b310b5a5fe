//! Multi-objective grid navigation.
//!
//! A robot moves on an occupancy grid from a start cell to a goal cell. Each
//! step emits three reward channels, all keyed on the arrival cell:
//!
//! * goal: `0` on arriving at the goal, `−1` otherwise;
//! * avoid: `−1` inside the avoid region, `0` elsewhere;
//! * monitor: `+1` inside the monitor region, `0` elsewhere.
//!
//! Bumping into an obstacle or the boundary leaves the robot in place and
//! scores `−1` on every channel. The goal is terminal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dag::ObjectiveDag;
use crate::model::TmdpSpec;
use crate::scalar::{cast, Scalar};

mod env;
mod map;
mod sim;

pub use env::NavEnv;
pub use map::{load_map, Cell, MapError, NavMap, Rect};
pub use sim::{episode_rng, monte_carlo_value, table_policy, McEstimate};

/// The bundled 10×10 home layout.
///
/// Start `(9, 0)`, goal `(9, 9)`. A wall on row 8 (columns 2 to 7) turns the
/// bottom row into a corridor whose middle, columns 3 to 6, is the avoid
/// region. The monitor region is the top two rows.
pub const HOME_MAP: &str = include_str!("../../maps/home.map");

/// Largest map [`to_tabular`] will convert.
pub const MAX_TABULAR_CELLS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Neighbouring cell, or `None` when it would leave the grid on the
    /// top or left side.
    pub fn offset(self, c: Cell) -> Option<Cell> {
        match self {
            Action::Up => c.row.checked_sub(1).map(|r| Cell::new(r, c.col)),
            Action::Down => Some(Cell::new(c.row + 1, c.col)),
            Action::Left => c.col.checked_sub(1).map(|col| Cell::new(c.row, col)),
            Action::Right => Some(Cell::new(c.row, c.col + 1)),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Action::Up => '^',
            Action::Down => 'v',
            Action::Left => '<',
            Action::Right => '>',
        }
    }
}

/// Reward channels of the navigation domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Goal,
    Avoid,
    Monitor,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Goal, Channel::Avoid, Channel::Monitor];

    pub fn letter(self) -> char {
        match self {
            Channel::Goal => 'G',
            Channel::Avoid => 'A',
            Channel::Monitor => 'M',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'G' => Some(Channel::Goal),
            'A' => Some(Channel::Avoid),
            'M' => Some(Channel::Monitor),
            _ => None,
        }
    }
}

/// One step's rewards; every component is `−1`, `0` or `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RewardVector {
    pub goal: i8,
    pub avoid: i8,
    pub monitor: i8,
}

impl RewardVector {
    pub fn get(&self, ch: Channel) -> i8 {
        match ch {
            Channel::Goal => self.goal,
            Channel::Avoid => self.avoid,
            Channel::Monitor => self.monitor,
        }
    }

    /// Components in the order of `channels`.
    pub fn select<T: Scalar>(&self, channels: &[Channel]) -> Vec<T> {
        channels.iter().map(|&c| cast(self.get(c) as f64)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NavState {
    pub cell: Cell,
    pub terminal: bool,
}

impl NavState {
    pub fn start(map: &NavMap) -> Self {
        Self { cell: map.start(), terminal: map.start() == map.goal() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: NavState,
    pub reward: RewardVector,
    pub done: bool,
    /// The move hit an obstacle or the boundary.
    pub bumped: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NavError {
    #[error("cannot step from terminal state at {0}")]
    SteppedTerminal(Cell),
    #[error("state {0} is not a free cell")]
    NotFree(Cell),
    #[error("map has {cells} free cells; the tabular bridge accepts at most {limit}")]
    TooLarge { cells: usize, limit: usize },
    #[error("dag has {dag_k} objectives but {channels} channels were assigned")]
    ChannelCount { dag_k: usize, channels: usize },
    #[error("gamma {0} outside [0, 1)")]
    Gamma(f64),
}

/// Deterministic move. Pure in `(map, state, action)`.
pub fn step(map: &NavMap, state: NavState, action: Action) -> Result<StepOutcome, NavError> {
    if state.terminal {
        return Err(NavError::SteppedTerminal(state.cell));
    }
    if !map.is_free(state.cell) {
        return Err(NavError::NotFree(state.cell));
    }
    Ok(step_free(map, state.cell, action))
}

fn step_free(map: &NavMap, from: Cell, action: Action) -> StepOutcome {
    let target = action.offset(from).filter(|&c| map.is_free(c));
    let (cell, reward, bumped) = match target {
        None => (from, RewardVector { goal: -1, avoid: -1, monitor: -1 }, true),
        Some(c) => {
            let reward = RewardVector {
                goal: if c == map.goal() { 0 } else { -1 },
                avoid: if map.in_avoid(c) { -1 } else { 0 },
                monitor: if map.in_monitor(c) { 1 } else { 0 },
            };
            (c, reward, false)
        }
    };
    let done = cell == map.goal();
    StepOutcome { next: NavState { cell, terminal: done }, reward, done, bumped }
}

/// Like [`step`], but with probability `map.slip()` the executed move is drawn
/// uniformly from all four actions. Draws from `rng` only when slip is positive.
pub fn step_sampled<R: Rng>(map: &NavMap, state: NavState, action: Action, rng: &mut R) -> Result<StepOutcome, NavError> {
    let slip = map.slip();
    let executed = if slip > 0.0 && rng.gen::<f64>() < slip { Action::ALL[rng.gen_range(0..4)] } else { action };
    step(map, state, executed)
}

/// Exact tabular model of `map`.
///
/// States are the free cells in row-major order (see [`NavMap::state_index`]);
/// objective `i` receives channel `channels[i − 1]`. The goal is absorbing with
/// zero reward. With slip the rewards are the expected rewards of the sampled
/// move.
pub fn to_tabular<T: Scalar>(
    map: &NavMap,
    gamma: T,
    dag: ObjectiveDag<T>,
    channels: &[Channel],
) -> Result<TmdpSpec<T>, NavError> {
    let n = map.n_free();
    if n > MAX_TABULAR_CELLS {
        return Err(NavError::TooLarge { cells: n, limit: MAX_TABULAR_CELLS });
    }
    if dag.k() != channels.len() {
        return Err(NavError::ChannelCount { dag_k: dag.k(), channels: channels.len() });
    }
    let g = crate::scalar::to_f64(gamma);
    if !(0.0..1.0).contains(&g) {
        return Err(NavError::Gamma(g));
    }
    let na = Action::ALL.len();
    let slip = map.slip();
    let mut transition = vec![vec![vec![T::zero(); n]; na]; n];
    let mut rewards = vec![vec![vec![T::zero(); na]; n]; channels.len()];
    let goal = map.state_index(map.goal()).expect("goal is free");
    for s in 0..n {
        if s == goal {
            for a in 0..na {
                transition[s][a][s] = T::one();
            }
            continue;
        }
        let from = map.cell(s);
        for intended in Action::ALL {
            // (executed move, probability)
            let mut moves = vec![(intended, 1.0 - slip)];
            if slip > 0.0 {
                moves.extend(Action::ALL.iter().map(|&b| (b, slip / na as f64)));
            }
            let a = intended.index();
            for (executed, p) in moves {
                let out = step_free(map, from, executed);
                let sp = map.state_index(out.next.cell).expect("moves land on free cells");
                transition[s][a][sp] += cast(p);
                for (i, &ch) in channels.iter().enumerate() {
                    rewards[i][s][a] += cast(p * out.reward.get(ch) as f64);
                }
            }
        }
    }
    Ok(TmdpSpec::new(n, na, transition, rewards, gamma, dag, map.state_index(map.start()).expect("start is free")))
}

/// Renders a per-state action choice as a grid of arrows (`#` obstacles,
/// `G` goal).
pub fn policy_grid(map: &NavMap, policy: &[usize]) -> String {
    let mut out = String::new();
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            let cell = Cell::new(r, c);
            out.push(match map.state_index(cell) {
                None => '#',
                Some(_) if cell == map.goal() => 'G',
                Some(s) => Action::from_index(policy[s]).map_or('?', Action::symbol),
            });
        }
        out.push('\n');
    }
    out
}

/// Seeded uniform draw used by samplers that pick among actions.
pub(crate) fn sample_index<T: Scalar>(probs: &[T], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += crate::scalar::to_f64(*p);
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum: take the last positive entry
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(probs.len() - 1)
}

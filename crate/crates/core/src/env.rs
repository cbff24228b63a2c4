//! Deterministic grid-world MDPs addressed by natural-language instructions.
//!
//! Two families live here: navigation grids whose goal sits in row 0 and is
//! named by instructions like `"top right second"`, and an object grid where
//! each task is `"go to the {color} {shape}"` and same-color objects share a
//! column band. Dynamics are deterministic with clamping at the edges.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEP_COST: f64 = -0.01;
pub const DEFAULT_GOAL_REWARD: f64 = 1.0;

const ORDINALS: [&str; 10] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Index order matches the policy network's output logits.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    /// Cell reached from `from`, clamped to an `n`×`n` board.
    pub fn apply(self, from: Cell, n: usize) -> Cell {
        match self {
            Action::Up => Cell::new(from.row.saturating_sub(1), from.col),
            Action::Down => Cell::new((from.row + 1).min(n - 1), from.col),
            Action::Left => Cell::new(from.row, from.col.saturating_sub(1)),
            Action::Right => Cell::new(from.row, (from.col + 1).min(n - 1)),
        }
    }
}

/// A navigation task on an `size`×`size` board.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: usize,
    pub goal: Cell,
    pub step_cost: f64,
    pub goal_reward: f64,
    pub episode_cap: usize,
    /// Cells that are never used as start positions besides the goal
    /// (the other objects on an object grid).
    #[serde(default)]
    pub excluded_starts: Vec<Cell>,
}

impl GridSpec {
    /// Default rewards and an episode cap of `8 * size`.
    pub fn new(size: usize, goal: Cell) -> Result<Self> {
        Self::with_rewards(size, goal, DEFAULT_STEP_COST, DEFAULT_GOAL_REWARD, 8 * size)
    }

    pub fn with_rewards(
        size: usize,
        goal: Cell,
        step_cost: f64,
        goal_reward: f64,
        episode_cap: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            size,
            goal,
            step_cost,
            goal_reward,
            episode_cap,
            excluded_starts: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn for_instruction(text: &str, size: usize) -> Result<Self> {
        Self::new(size, instruction_to_goal(text, size)?)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size;
        if n < 2 {
            return Err(Error::InvalidGrid(format!("size must be at least 2, got {n}")));
        }
        if !self.contains(self.goal) {
            return Err(Error::InvalidGrid(format!("goal {} outside {n}x{n} grid", self.goal)));
        }
        if self.episode_cap < 2 * (n - 1) {
            return Err(Error::InvalidGrid(format!(
                "episode cap {} is shorter than the grid diameter {}",
                self.episode_cap,
                2 * (n - 1)
            )));
        }
        if !self.step_cost.is_finite() || !self.goal_reward.is_finite() {
            return Err(Error::InvalidGrid("rewards must be finite".into()));
        }
        if self.excluded_starts.iter().any(|&c| !self.contains(c)) {
            return Err(Error::InvalidGrid("excluded start cell out of bounds".into()));
        }
        if self.start_cells().is_empty() {
            return Err(Error::InvalidGrid("no admissible start cell".into()));
        }
        Ok(())
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.row < self.size && c.col < self.size
    }

    /// All admissible start cells in row-major order.
    pub fn start_cells(&self) -> Vec<Cell> {
        let n = self.size;
        (0..n)
            .flat_map(|r| (0..n).map(move |c| Cell::new(r, c)))
            .filter(|&c| c != self.goal && !self.excluded_starts.contains(&c))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvState {
    pub agent: Cell,
    pub steps_taken: usize,
    pub done: bool,
}

/// Uniform start over the admissible cells.
pub fn reset<R: Rng + ?Sized>(spec: &GridSpec, rng: &mut R) -> EnvState {
    let cells = spec.start_cells();
    let agent = cells[rng.gen_range(0..cells.len())];
    EnvState { agent, steps_taken: 0, done: false }
}

pub fn step(state: &EnvState, action: Action, spec: &GridSpec) -> Result<(EnvState, f64, bool)> {
    if state.done {
        return Err(Error::EpisodeDone);
    }
    let agent = action.apply(state.agent, spec.size);
    let steps_taken = state.steps_taken + 1;
    let at_goal = agent == spec.goal;
    let reward = if at_goal { spec.goal_reward } else { spec.step_cost };
    let done = at_goal || steps_taken >= spec.episode_cap;
    Ok((EnvState { agent, steps_taken, done }, reward, done))
}

/// Mean Manhattan distance to the goal over all admissible start cells; the
/// exact optimal expected episode length under clamped deterministic moves.
pub fn optimal_expected_steps(spec: &GridSpec) -> f64 {
    let cells = spec.start_cells();
    let total: usize = cells.iter().map(|c| c.manhattan(spec.goal)).sum();
    total as f64 / cells.len() as f64
}

/// Independent routes to the optimum, used to cross-check
/// [`optimal_expected_steps`].
pub mod oracle {
    use super::*;

    /// Shortest-path step counts to the goal from every cell, by BFS over the
    /// clamped transition graph. Indexed `[row][col]`.
    pub fn bfs_distances(spec: &GridSpec) -> Vec<Vec<usize>> {
        let n = spec.size;
        let mut dist = vec![vec![usize::MAX; n]; n];
        // Moves are reversible, so searching outward from the goal is exact.
        dist[spec.goal.row][spec.goal.col] = 0;
        let mut queue = VecDeque::from([spec.goal]);
        while let Some(c) = queue.pop_front() {
            let d = dist[c.row][c.col];
            for a in Action::ALL {
                let next = a.apply(c, n);
                if dist[next.row][next.col] == usize::MAX {
                    dist[next.row][next.col] = d + 1;
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    pub fn bfs_expected_steps(spec: &GridSpec) -> f64 {
        let dist = bfs_distances(spec);
        let cells = spec.start_cells();
        let total: usize = cells.iter().map(|c| dist[c.row][c.col]).sum();
        total as f64 / cells.len() as f64
    }

    /// Undiscounted unit-cost value iteration (`V(goal) = 0`,
    /// `V(s) = 1 + min_a V(s')`) run to a fixed point.
    pub fn value_iteration(spec: &GridSpec) -> Vec<Vec<f64>> {
        let n = spec.size;
        let big = (n * n) as f64;
        let mut v = vec![vec![big; n]; n];
        v[spec.goal.row][spec.goal.col] = 0.0;
        loop {
            let mut delta: f64 = 0.0;
            for r in 0..n {
                for c in 0..n {
                    let here = Cell::new(r, c);
                    if here == spec.goal {
                        continue;
                    }
                    let best = Action::ALL
                        .iter()
                        .map(|a| {
                            let s = a.apply(here, n);
                            1.0 + v[s.row][s.col]
                        })
                        .fold(f64::INFINITY, f64::min);
                    delta = delta.max((best - v[r][c]).abs());
                    v[r][c] = best;
                }
            }
            if delta == 0.0 {
                return v;
            }
        }
    }

    /// Expected episode length of the greedy policy w.r.t. `value_iteration`,
    /// measured by rolling it out from every admissible start.
    pub fn greedy_expected_steps(spec: &GridSpec) -> f64 {
        let v = value_iteration(spec);
        let n = spec.size;
        let cells = spec.start_cells();
        let mut total = 0usize;
        for &start in &cells {
            let mut at = start;
            let mut steps = 0usize;
            while at != spec.goal && steps < spec.episode_cap {
                at = Action::ALL
                    .iter()
                    .map(|a| a.apply(at, n))
                    .min_by(|a, b| v[a.row][a.col].total_cmp(&v[b.row][b.col]))
                    .expect("four actions");
                steps += 1;
            }
            total += steps;
        }
        total as f64 / cells.len() as f64
    }
}

/// A task's natural-language description.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub task_id: String,
}

impl Instruction {
    /// Lowercases and collapses whitespace.
    pub fn new(text: &str) -> Result<Self> {
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let task_id = text.replace(' ', "_");
        Ok(Instruction { text, task_id })
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Resolves `"top {left|right} {ordinal}"` on an `n`×`n` grid: left counts
/// columns from 0, right counts back from `n - 1`.
pub fn instruction_to_goal(text: &str, n: usize) -> Result<Cell> {
    let norm = normalize_text(text);
    let tokens: Vec<&str> = norm.split(' ').collect();
    let err = |token: &str| Error::Parse { text: text.to_string(), token: token.to_string() };
    match tokens.as_slice() {
        ["top", side, ordinal] => {
            let k = ORDINALS.iter().position(|o| o == ordinal).ok_or_else(|| err(ordinal))? + 1;
            if k > n {
                return Err(err(ordinal));
            }
            match *side {
                "left" => Ok(Cell::new(0, k - 1)),
                "right" => Ok(Cell::new(0, n - k)),
                other => Err(err(other)),
            }
        }
        [first, ..] if *first != "top" => Err(err(first)),
        [_, rest @ ..] if rest.len() > 2 => Err(err(rest[2])),
        _ => Err(err(&norm)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridObject {
    pub color: String,
    pub shape: String,
    pub cell: Cell,
}

/// Board of colored shapes where every color owns one column band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectGridSpec {
    pub size: usize,
    pub objects: Vec<GridObject>,
}

impl ObjectGridSpec {
    pub fn object_for(&self, instruction: &Instruction) -> Result<&GridObject> {
        let tokens: Vec<&str> = instruction.text.split(' ').collect();
        let err = |token: &str| Error::Parse {
            text: instruction.text.clone(),
            token: token.to_string(),
        };
        match tokens.as_slice() {
            ["go", "to", "the", color, shape] => self
                .objects
                .iter()
                .find(|o| o.color == *color && o.shape == *shape)
                .ok_or_else(|| err(&format!("{color} {shape}"))),
            _ => {
                let bad = ["go", "to", "the"]
                    .iter()
                    .zip(&tokens)
                    .find(|(want, got)| want != got)
                    .map(|(_, got)| *got)
                    .unwrap_or(instruction.text.as_str());
                Err(err(bad))
            }
        }
    }

    /// Navigation task toward the named object. Other objects are passable
    /// but never used as start cells.
    pub fn task_spec(&self, instruction: &Instruction) -> Result<GridSpec> {
        let goal = self.object_for(instruction)?.cell;
        let mut spec = GridSpec::new(self.size, goal)?;
        spec.excluded_starts = self
            .objects
            .iter()
            .map(|o| o.cell)
            .filter(|&c| c != goal)
            .collect();
        spec.validate()?;
        Ok(spec)
    }
}

/// Lays out one object per (color, shape). Color `i` owns columns
/// `[i*w, (i+1)*w)` with `w = n / colors.len()` and sits in the band's middle
/// column; shape `j` sits in row `1 + 3*j`.
pub fn build_object_grid(
    colors: &[&str],
    shapes: &[&str],
    n: usize,
) -> Result<(ObjectGridSpec, Vec<Instruction>)> {
    if colors.is_empty() || shapes.is_empty() {
        return Err(Error::InvalidGrid("need at least one color and one shape".into()));
    }
    if colors.len() * shapes.len() > n * n {
        return Err(Error::InvalidGrid(format!(
            "{} objects do not fit a {n}x{n} grid",
            colors.len() * shapes.len()
        )));
    }
    let band = n / colors.len();
    let last_row = 1 + 3 * (shapes.len() - 1);
    if band == 0 || last_row >= n {
        return Err(Error::InvalidGrid(format!(
            "{} colors x {} shapes exceed the band layout of a {n}x{n} grid",
            colors.len(),
            shapes.len()
        )));
    }
    let mut objects = Vec::new();
    let mut instructions = Vec::new();
    for (ci, color) in colors.iter().enumerate() {
        for (si, shape) in shapes.iter().enumerate() {
            let cell = Cell::new(1 + 3 * si, ci * band + band / 2);
            objects.push(GridObject { color: color.to_string(), shape: shape.to_string(), cell });
            instructions.push(Instruction::new(&format!("go to the {color} {shape}"))?);
        }
    }
    Ok((ObjectGridSpec { size: n, objects }, instructions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn instruction_goals() {
        assert_eq!(instruction_to_goal("top right first", 10).unwrap(), Cell::new(0, 9));
        assert_eq!(instruction_to_goal("top left first", 8).unwrap(), Cell::new(0, 0));
        assert_eq!(instruction_to_goal("top right third", 10).unwrap(), Cell::new(0, 7));
        assert_eq!(instruction_to_goal("top right second", 10).unwrap(), Cell::new(0, 8));
        assert_eq!(instruction_to_goal("  Top LEFT   second ", 8).unwrap(), Cell::new(0, 1));
    }

    #[test]
    fn instruction_errors_name_the_token() {
        let cases = [
            ("top middle first", 8, "middle"),
            ("bottom left first", 8, "bottom"),
            ("top left eleventh", 8, "eleventh"),
            ("top left ninth", 8, "ninth"),
            ("top left", 8, "top left"),
            ("top left first please", 8, "please"),
        ];
        for (text, n, want) in cases {
            match instruction_to_goal(text, n) {
                Err(Error::Parse { token, .. }) => assert_eq!(token, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn instruction_grammar_covers_every_column() {
        for n in 2..=10 {
            for side in ["left", "right"] {
                let mut cols: Vec<usize> = ORDINALS[..n]
                    .iter()
                    .map(|o| instruction_to_goal(&format!("top {side} {o}"), n).unwrap().col)
                    .collect();
                cols.sort_unstable();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, Cell::new(0, 0)).is_err());
        assert!(GridSpec::new(4, Cell::new(0, 4)).is_err());
        assert!(GridSpec::with_rewards(4, Cell::new(0, 0), -0.01, 1.0, 5).is_err());
        assert!(GridSpec::with_rewards(4, Cell::new(0, 0), -0.01, 1.0, 6).is_ok());
    }

    #[test]
    fn reset_excludes_goal_and_is_deterministic() {
        let spec = GridSpec::new(8, Cell::new(0, 0)).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let sa = reset(&spec, &mut a);
            let sb = reset(&spec, &mut b);
            assert_ne!(sa.agent, spec.goal);
            assert_eq!(sa, sb);
            assert_eq!(sa.steps_taken, 0);
            assert!(!sa.done);
        }
    }

    #[test]
    fn reset_is_uniform() {
        // Pearson chi-square against the uniform law over 99 cells.
        let spec = GridSpec::new(10, Cell::new(0, 7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 100_000;
        let mut counts = vec![0usize; 100];
        for _ in 0..trials {
            let s = reset(&spec, &mut rng);
            counts[s.agent.row * 10 + s.agent.col] += 1;
        }
        assert_eq!(counts[7], 0);
        let expected = trials as f64 / 99.0;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 7)
            .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
            .sum();
        // Upper 1% point of chi-square with 98 degrees of freedom.
        assert!(chi2 < 133.48, "chi2 = {chi2}");
    }

    #[test]
    fn step_moves_and_clamps() {
        let spec = GridSpec::new(8, Cell::new(0, 0)).unwrap();
        let s = EnvState { agent: Cell::new(0, 1), steps_taken: 0, done: false };
        let (next, r, done) = step(&s, Action::Left, &spec).unwrap();
        assert_eq!(next.agent, Cell::new(0, 0));
        assert_eq!(r, spec.goal_reward);
        assert!(done && next.done);

        let spec = GridSpec::new(8, Cell::new(7, 7)).unwrap();
        let s = EnvState { agent: Cell::new(0, 0), steps_taken: 0, done: false };
        let (next, r, done) = step(&s, Action::Up, &spec).unwrap();
        assert_eq!(next.agent, Cell::new(0, 0));
        assert_eq!(r, spec.step_cost);
        assert!(!done);
        let (next, _, _) = step(&s, Action::Left, &spec).unwrap();
        assert_eq!(next.agent, Cell::new(0, 0));
    }

    #[test]
    fn step_hits_cap() {
        let spec = GridSpec::with_rewards(8, Cell::new(0, 0), -0.01, 1.0, 64).unwrap();
        let mut s = EnvState { agent: Cell::new(5, 5), steps_taken: 0, done: false };
        // Bounce between (5,5) and (6,5), never touching the goal.
        for i in 0..64 {
            let a = if i % 2 == 0 { Action::Down } else { Action::Up };
            let (next, r, done) = step(&s, a, &spec).unwrap();
            assert_eq!(r, spec.step_cost);
            assert_eq!(done, i == 63);
            s = next;
        }
        assert!(s.done);
        assert_ne!(s.agent, spec.goal);
        assert!(matches!(step(&s, Action::Up, &spec), Err(Error::EpisodeDone)));
    }

    #[test]
    fn optimal_steps_small_grid() {
        let spec = GridSpec::new(2, Cell::new(0, 0)).unwrap();
        assert!((optimal_expected_steps(&spec) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn optimal_steps_match_oracles() {
        for n in 2..=10 {
            for col in 0..n {
                for row in [0, n / 2] {
                    let spec = GridSpec::new(n, Cell::new(row, col)).unwrap();
                    let m = optimal_expected_steps(&spec);
                    assert!((m - oracle::bfs_expected_steps(&spec)).abs() < 1e-9);
                    assert!((m - oracle::greedy_expected_steps(&spec)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn greedy_return_matches_distance() {
        // Return of the shortest-path policy: goal_reward + step_cost * (d - 1).
        for n in 2..=10 {
            let spec = GridSpec::new(n, Cell::new(0, n / 3)).unwrap();
            let v = oracle::value_iteration(&spec);
            for start in spec.start_cells() {
                let d = start.manhattan(spec.goal);
                let mut s = EnvState { agent: start, steps_taken: 0, done: false };
                let mut ret = 0.0;
                while !s.done {
                    let a = *Action::ALL
                        .iter()
                        .min_by(|a, b| {
                            let (x, y) = (a.apply(s.agent, n), b.apply(s.agent, n));
                            v[x.row][x.col].total_cmp(&v[y.row][y.col])
                        })
                        .unwrap();
                    let (next, r, _) = step(&s, a, &spec).unwrap();
                    ret += r;
                    s = next;
                }
                let want = spec.goal_reward + spec.step_cost * (d as f64 - 1.0);
                assert!((ret - want).abs() < 1e-12);
                assert_eq!(s.steps_taken, d);
            }
        }
    }

    #[test]
    fn object_grid_layout() {
        let (grid, tasks) = build_object_grid(&["red", "blue", "green"], &["box", "cone"], 9).unwrap();
        assert_eq!(tasks.len(), 6);
        assert_eq!(tasks[1].text, "go to the red cone");
        for t in &tasks {
            let o = grid.object_for(t).unwrap();
            if o.color == "red" {
                assert!(o.cell.col <= 2);
            }
        }
        let rb = grid.task_spec(&Instruction::new("go to the red box").unwrap()).unwrap();
        let rc = grid.task_spec(&Instruction::new("go to the red cone").unwrap()).unwrap();
        assert_eq!(rb.goal.col, rc.goal.col);
        assert_eq!(rc.excluded_starts.len(), 5);
        assert_eq!(rc.start_cells().len(), 81 - 6);
        let mut cells: Vec<Cell> = grid.objects.iter().map(|o| o.cell).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 6);
    }

    #[test]
    fn object_grid_single_and_errors() {
        let (grid, tasks) = build_object_grid(&["red"], &["box"], 4).unwrap();
        assert_eq!(tasks.len(), 1);
        let spec = grid.task_spec(&tasks[0]).unwrap();
        assert_eq!(spec.goal, grid.objects[0].cell);
        assert!(build_object_grid(&["a", "b", "c", "d", "e"], &["x"], 4).is_err());
        assert!(build_object_grid(&["a"], &["x", "y", "z"], 6).is_err());
        let bad = Instruction::new("go to a red box").unwrap();
        assert!(matches!(grid.task_spec(&bad), Err(Error::Parse { token, .. }) if token == "a"));
    }
}

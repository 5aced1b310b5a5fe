use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

/// Grid cell, `(row, col)` from the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Axis-aligned rectangle with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Rect {
    pub fn contains(&self, cell: Cell) -> bool {
        (self.top..=self.bottom).contains(&cell.row) && (self.left..=self.right).contains(&cell.col)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid map: {0}")]
    InvariantViolation(String),
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> MapError {
    MapError::Parse { line, column, message: message.into() }
}

/// Occupancy grid with start, goal and the avoid / monitor regions.
///
/// Free cells are numbered row-major; that numbering is the state index used
/// by [`super::to_tabular`] and the policies passed to
/// [`super::monte_carlo_value`].
#[derive(Debug, Clone, PartialEq)]
pub struct NavMap {
    rows: usize,
    cols: usize,
    slip: f64,
    free: Vec<bool>,
    start: Cell,
    goal: Cell,
    avoid: Option<Rect>,
    monitor: Option<Rect>,
    state_of: Vec<Option<usize>>,
    cells: Vec<Cell>,
}

impl NavMap {
    /// Builds a map from an occupancy grid (`true` = free) and checks it.
    pub fn new(
        rows: usize,
        cols: usize,
        free: Vec<bool>,
        start: Cell,
        goal: Cell,
        avoid: Option<Rect>,
        monitor: Option<Rect>,
        slip: f64,
    ) -> Result<Self, MapError> {
        let bad = |m: String| Err(MapError::InvariantViolation(m));
        if rows == 0 || cols == 0 {
            return bad("grid must have at least one row and column".into());
        }
        if free.len() != rows * cols {
            return bad(format!("occupancy has {} cells, expected {}", free.len(), rows * cols));
        }
        if !(0.0..=1.0).contains(&slip) {
            return bad(format!("slip {slip} outside [0, 1]"));
        }
        let mut state_of = vec![None; rows * cols];
        let mut cells = Vec::new();
        for (idx, &f) in free.iter().enumerate() {
            if f {
                state_of[idx] = Some(cells.len());
                cells.push(Cell::new(idx / cols, idx % cols));
            }
        }
        let map = Self { rows, cols, slip, free, start, goal, avoid, monitor, state_of, cells };
        for (name, c) in [("start", start), ("goal", goal)] {
            if !map.in_bounds(c) {
                return bad(format!("{name} {c} is outside the grid"));
            }
            if !map.is_free(c) {
                return bad(format!("{name} {c} is an obstacle"));
            }
        }
        for (name, r) in [("avoid", avoid), ("monitor", monitor)] {
            if let Some(r) = r {
                if r.top > r.bottom || r.left > r.right || r.bottom >= rows || r.right >= cols {
                    return bad(format!("{name} region {r:?} is not inside the {rows}x{cols} grid"));
                }
            }
        }
        if !map.reachable_from_start(goal) {
            return bad(format!("goal {goal} is not reachable from start {start}"));
        }
        Ok(map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Probability that a move is replaced by a uniformly random one.
    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn avoid_region(&self) -> Option<Rect> {
        self.avoid
    }

    pub fn monitor_region(&self) -> Option<Rect> {
        self.monitor
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.rows && c.col < self.cols
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.free[c.row * self.cols + c.col]
    }

    pub fn in_avoid(&self, c: Cell) -> bool {
        self.avoid.is_some_and(|r| r.contains(c))
    }

    pub fn in_monitor(&self, c: Cell) -> bool {
        self.monitor.is_some_and(|r| r.contains(c))
    }

    /// Number of free cells, i.e. tabular states.
    pub fn n_free(&self) -> usize {
        self.cells.len()
    }

    pub fn state_index(&self, c: Cell) -> Option<usize> {
        if self.in_bounds(c) {
            self.state_of[c.row * self.cols + c.col]
        } else {
            None
        }
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.cells[state]
    }

    pub fn free_cells(&self) -> &[Cell] {
        &self.cells
    }

    fn reachable_from_start(&self, target: Cell) -> bool {
        let mut seen = vec![false; self.rows * self.cols];
        let mut queue = VecDeque::from([self.start]);
        seen[self.start.row * self.cols + self.start.col] = true;
        while let Some(c) = queue.pop_front() {
            if c == target {
                return true;
            }
            for a in super::Action::ALL {
                if let Some(n) = a.offset(c).filter(|&n| self.is_free(n)) {
                    let idx = n.row * self.cols + n.col;
                    if !seen[idx] {
                        seen[idx] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        false
    }

    /// Renders the map back into its text format.
    pub fn to_text(&self) -> String {
        let mut out = format!("rows {}\ncols {}\nslip {}\n", self.rows, self.cols, self.slip);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = Cell::new(r, c);
                out.push(match () {
                    _ if cell == self.start => 'S',
                    _ if cell == self.goal => 'G',
                    _ if self.is_free(cell) => '.',
                    _ => '#',
                });
            }
            out.push('\n');
        }
        for (name, region) in [("avoid", self.avoid), ("monitor", self.monitor)] {
            if let Some(r) = region {
                out.push_str(&format!("{name} {} {} {} {}\n", r.top, r.left, r.bottom, r.right));
            }
        }
        out
    }
}

/// Parses the text map format.
///
/// ```text
/// rows 3
/// cols 3
/// slip 0
/// S..
/// .#.
/// ..G
/// avoid 1 0 1 0
/// monitor 0 2 0 2
/// ```
///
/// `slip` and both region lines are optional; blank lines are ignored.
pub fn load_map(text: &str) -> Result<NavMap, MapError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end())).filter(|(_, l)| !l.trim().is_empty());

    let mut header = |key: &str, required: bool| -> Result<Option<(usize, String)>, MapError> {
        let mut peek = lines.clone();
        match peek.next() {
            Some((n, l)) if l.split_whitespace().next() == Some(key) => {
                lines.next();
                let mut parts = l.split_whitespace();
                parts.next();
                let value = parts.next().ok_or_else(|| parse_err(n, l.len() + 1, format!("missing value for `{key}`")))?;
                if parts.next().is_some() {
                    return Err(parse_err(n, 1, format!("trailing tokens after `{key}`")));
                }
                Ok(Some((n, value.to_string())))
            }
            Some((n, _)) if required => Err(parse_err(n, 1, format!("expected `{key}` header"))),
            None if required => Err(parse_err(text.lines().count().max(1), 1, format!("expected `{key}` header"))),
            _ => Ok(None),
        }
    };

    let dim = |found: Option<(usize, String)>, key: &str| -> Result<usize, MapError> {
        let (n, v) = found.expect("required header");
        match v.parse::<usize>() {
            Ok(x) if x > 0 => Ok(x),
            _ => Err(parse_err(n, key.len() + 2, format!("`{key}` must be a positive integer, got `{v}`"))),
        }
    };
    let rows = dim(header("rows", true)?, "rows")?;
    let cols = dim(header("cols", true)?, "cols")?;
    let slip = match header("slip", false)? {
        None => 0.0,
        Some((n, v)) => v.parse::<f64>().map_err(|_| parse_err(n, 6, format!("`slip` must be a number, got `{v}`")))?,
    };

    let mut free = Vec::with_capacity(rows * cols);
    let mut start = None;
    let mut goal = None;
    for r in 0..rows {
        let (n, line) = lines.next().ok_or_else(|| parse_err(text.lines().count() + 1, 1, format!("expected {rows} grid rows, found {r}")))?;
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != cols {
            return Err(parse_err(n, chars.len().min(cols) + 1, format!("grid row has {} cells, expected {cols}", chars.len())));
        }
        for (c, ch) in chars.into_iter().enumerate() {
            let cell = Cell::new(r, c);
            match ch {
                '.' => free.push(true),
                '#' => free.push(false),
                'S' | 'G' => {
                    let slot = if ch == 'S' { &mut start } else { &mut goal };
                    if slot.is_some() {
                        return Err(parse_err(n, c + 1, format!("second `{ch}` in grid")));
                    }
                    *slot = Some(cell);
                    free.push(true);
                }
                other => return Err(parse_err(n, c + 1, format!("unexpected character `{other}`"))),
            }
        }
    }
    let start = start.ok_or_else(|| MapError::InvariantViolation("grid has no start `S`".into()))?;
    let goal = goal.ok_or_else(|| MapError::InvariantViolation("grid has no goal `G`".into()))?;

    let mut avoid = None;
    let mut monitor = None;
    for (n, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let slot = match parts[0] {
            "avoid" => &mut avoid,
            "monitor" => &mut monitor,
            other => return Err(parse_err(n, 1, format!("unexpected line starting with `{other}`"))),
        };
        if slot.is_some() {
            return Err(parse_err(n, 1, format!("duplicate `{}` region", parts[0])));
        }
        if parts.len() != 5 {
            return Err(parse_err(n, 1, format!("`{}` needs four bounds r1 c1 r2 c2", parts[0])));
        }
        let mut b = [0usize; 4];
        for (j, p) in parts[1..].iter().enumerate() {
            let column = line.find(p).map_or(1, |i| i + 1);
            b[j] = p.parse().map_err(|_| parse_err(n, column, format!("bad region bound `{p}`")))?;
        }
        *slot = Some(Rect { top: b[0].min(b[2]), left: b[1].min(b[3]), bottom: b[0].max(b[2]), right: b[1].max(b[3]) });
    }
    NavMap::new(rows, cols, free, start, goal, avoid, monitor, slip)
}

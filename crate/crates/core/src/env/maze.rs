//! Grid mazes described as ASCII layouts.
//!
//! Rows are separated by `/` or newlines. `#` is a wall, `S` the start cell,
//! `G` a goal cell and `.` open floor. When a layout has no `G`, every open
//! cell other than the start is a goal cell. Cell `(r, c)` is centred at
//! `((c − c_start)·size, (r − r_start)·size)`, so the agent starts at the
//! origin; everything outside the grid counts as wall.

use alloc::format;
use alloc::vec::Vec;

// Needed without std on toolchains where core floats lack these methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub const U_MAZE: &str = "#####/#SGG#/###G#/#GGG#/#####";
pub const BIG_MAZE: &str = "#######/#S..#.#/###.#.#/#...#.#/#.###.#/#.....#/#######";

/// Gap kept between a blocked body and the wall it was clamped against.
pub const SKIN: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Maze {
    rows: usize,
    cols: usize,
    walls: Vec<bool>,
    start: (usize, usize),
    goals: Vec<(usize, usize)>,
    cell_size: f32,
}

/// Which sides of the body touch a wall after a move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Contact {
    pub neg_x: bool,
    pub pos_x: bool,
    pub neg_y: bool,
    pub pos_y: bool,
}

impl Maze {
    pub fn parse(layout: &str, cell_size: f32) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::Invalid(format!("maze cell size must be positive, got {cell_size}")));
        }
        let lines: Vec<&str> = layout
            .split(['/', '\n'])
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let rows = lines.len();
        let cols = lines.first().map_or(0, |l| l.chars().count());
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid("empty maze layout".into()));
        }
        let mut walls = Vec::with_capacity(rows * cols);
        let mut start = None;
        let mut marked = Vec::new();
        let mut open = Vec::new();
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Invalid(format!("maze row {r} has a different width")));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => walls.push(true),
                    '.' | 'G' | 'S' => {
                        walls.push(false);
                        match ch {
                            'S' if start.is_some() => {
                                return Err(Error::Invalid("maze has more than one start cell".into()))
                            }
                            'S' => start = Some((r, c)),
                            'G' => marked.push((r, c)),
                            _ => open.push((r, c)),
                        }
                    }
                    other => return Err(Error::Invalid(format!("unknown maze character `{other}`"))),
                }
            }
        }
        let start = start.ok_or_else(|| Error::Invalid("maze has no start cell `S`".into()))?;
        let goals = if marked.is_empty() { open } else { marked };
        if goals.is_empty() {
            return Err(Error::Invalid("maze has no goal cells".into()));
        }
        Ok(Self {
            rows,
            cols,
            walls,
            start,
            goals,
            cell_size,
        })
    }

    pub fn cell_size(&self) -> f32 {
        self.cell_size
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn goal_cells(&self) -> &[(usize, usize)] {
        &self.goals
    }

    pub fn is_wall(&self, r: isize, c: isize) -> bool {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            return true;
        }
        self.walls[r as usize * self.cols + c as usize]
    }

    pub fn cell_center(&self, r: usize, c: usize) -> [f32; 2] {
        [
            (c as f32 - self.start.1 as f32) * self.cell_size,
            (r as f32 - self.start.0 as f32) * self.cell_size,
        ]
    }

    /// Axis-aligned bounds `[x0, x1, y0, y1]` of a cell.
    pub fn cell_bounds(&self, r: isize, c: isize) -> [f32; 4] {
        let h = 0.5 * self.cell_size;
        let x = (c as f32 - self.start.1 as f32) * self.cell_size;
        let y = (r as f32 - self.start.0 as f32) * self.cell_size;
        [x - h, x + h, y - h, y + h]
    }

    fn col_of(&self, x: f32) -> isize {
        (x / self.cell_size + self.start.1 as f32 + 0.5).floor() as isize
    }

    fn row_of(&self, y: f32) -> isize {
        (y / self.cell_size + self.start.0 as f32 + 0.5).floor() as isize
    }

    /// Whether a square body of half-width `half` centred at `(x, y)` overlaps
    /// any wall. Touching a wall face does not count.
    pub fn overlaps_wall(&self, x: f32, y: f32, half: f32) -> bool {
        let shrink = 0.1 * SKIN;
        let (c0, c1) = (self.col_of(x - half + shrink), self.col_of(x + half - shrink));
        let (r0, r1) = (self.row_of(y - half + shrink), self.row_of(y + half - shrink));
        (r0..=r1).any(|r| (c0..=c1).any(|c| self.is_wall(r, c)))
    }

    /// Moves the body by `delta`, one axis at a time, stopping it `SKIN`
    /// short of any wall face it would cross.
    pub fn resolve_move(&self, pos: [f32; 2], delta: [f32; 2], half: f32) -> [f32; 2] {
        let [mut x, mut y] = pos;
        let nx = x + delta[0];
        x = if !self.overlaps_wall(nx, y, half) {
            nx
        } else if delta[0] > 0.0 {
            let col = self.col_of(nx + half);
            let face = self.cell_bounds(0, col)[0];
            (face - half - SKIN).max(x)
        } else {
            let col = self.col_of(nx - half);
            let face = self.cell_bounds(0, col)[1];
            (face + half + SKIN).min(x)
        };
        let ny = y + delta[1];
        y = if !self.overlaps_wall(x, ny, half) {
            ny
        } else if delta[1] > 0.0 {
            let row = self.row_of(ny + half);
            let face = self.cell_bounds(row, 0)[2];
            (face - half - SKIN).max(y)
        } else {
            let row = self.row_of(ny - half);
            let face = self.cell_bounds(row, 0)[3];
            (face + half + SKIN).min(y)
        };
        [x, y]
    }

    /// Walls within a small probe distance of each side of the body.
    pub fn contact(&self, pos: [f32; 2], half: f32) -> Contact {
        let probe = 2.0 * SKIN;
        let [x, y] = pos;
        Contact {
            neg_x: self.overlaps_wall(x - probe, y, half),
            pos_x: self.overlaps_wall(x + probe, y, half),
            neg_y: self.overlaps_wall(x, y - probe, half),
            pos_y: self.overlaps_wall(x, y + probe, half),
        }
    }
}

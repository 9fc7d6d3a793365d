//! Conway's game of life on a bounded or toroidal grid.
//!
//! The parallel runs split the grid into a `tile_rows x tile_cols` layout
//! of tiles (row bands, column bands or 2-D blocks). Under message passing
//! tiles are dealt to ranks cyclically; each tile swaps a one-cell ghost
//! frame with its eight neighbouring tiles before every step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{split_bounds, ExecModel, KernelError};
use crate::message_passing::{Communicator, Endpoint, MpError, Rank};
use crate::team::Team;
use crate::work_sharing::parallel_map;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Boundary {
    /// Cells outside the grid count as dead.
    #[default]
    Dead,
    /// Edges wrap around.
    Toroidal,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Dead => "dead",
            Boundary::Toroidal => "toroidal",
        })
    }
}

impl FromStr for Boundary {
    type Err = GridParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dead" => Ok(Boundary::Dead),
            "toroidal" | "torus" => Ok(Boundary::Toroidal),
            _ => Err(GridParseError::Boundary(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridParseError {
    #[error("missing or malformed header; expected `width height boundary`")]
    Header,
    #[error("unknown boundary {0:?}")]
    Boundary(String),
    #[error("grid dimensions must be positive")]
    EmptyGrid,
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
}

/// Row-major cell grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<bool>,
    boundary: Boundary,
}

impl Grid {
    pub fn new(width: usize, height: usize, boundary: Boundary) -> Result<Self, GridParseError> {
        if width == 0 || height == 0 {
            return Err(GridParseError::EmptyGrid);
        }
        Ok(Self {
            width,
            height,
            cells: vec![false; width * height],
            boundary,
        })
    }

    /// Each cell alive with probability one half, from a fixed seed.
    pub fn random(
        width: usize,
        height: usize,
        boundary: Boundary,
        seed: u64,
    ) -> Result<Self, GridParseError> {
        let mut grid = Self::new(width, height, boundary)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grid.cells.iter_mut().for_each(|c| *c = rng.gen_bool(0.5));
        Ok(grid)
    }

    /// Builds a grid with the listed `(row, col)` cells alive.
    pub fn with_live(
        width: usize,
        height: usize,
        boundary: Boundary,
        live: &[(usize, usize)],
    ) -> Result<Self, GridParseError> {
        let mut grid = Self::new(width, height, boundary)?;
        for &(r, c) in live {
            grid.set(r, c, true);
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, alive: bool) {
        self.cells[row * self.width + col] = alive;
    }

    pub fn population(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Live cell at signed offset from `(row, col)`, honouring the boundary.
    fn alive_at(&self, row: usize, col: usize, dr: isize, dc: isize) -> bool {
        let r = row as isize + dr;
        let c = col as isize + dc;
        let (h, w) = (self.height as isize, self.width as isize);
        match self.boundary {
            Boundary::Dead => {
                (0..h).contains(&r) && (0..w).contains(&c) && self.get(r as usize, c as usize)
            }
            Boundary::Toroidal => self.get(r.rem_euclid(h) as usize, c.rem_euclid(w) as usize),
        }
    }

    fn next_cell(&self, row: usize, col: usize) -> bool {
        let mut n = 0;
        for (dr, dc) in NEIGHBOURS {
            n += self.alive_at(row, col, dr, dc) as u8;
        }
        rule(self.get(row, col), n)
    }

    /// Shifts the grid by `(dr, dc)` with wraparound.
    pub fn translated(&self, dr: isize, dc: isize) -> Self {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                let sr = (r as isize - dr).rem_euclid(self.height as isize) as usize;
                let sc = (c as isize - dc).rem_euclid(self.width as isize) as usize;
                out.set(r, c, self.get(sr, sc));
            }
        }
        out
    }
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

fn rule(alive: bool, neighbours: u8) -> bool {
    matches!((alive, neighbours), (true, 2) | (_, 3))
}

/// Text fixture: `width height boundary`, then `height` lines of `.`/`#`.
impl FromStr for Grid {
    type Err = GridParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or(GridParseError::Header)?
            .split_whitespace()
            .collect();
        let [w, h, b] = header[..] else {
            return Err(GridParseError::Header);
        };
        let width = w.parse().map_err(|_| GridParseError::Header)?;
        let height = h.parse().map_err(|_| GridParseError::Header)?;
        let mut grid = Grid::new(width, height, b.parse()?)?;
        let mut found = 0;
        for (row, line) in lines.enumerate() {
            if row >= height {
                return Err(GridParseError::RowCount {
                    expected: height,
                    found: row + 1,
                });
            }
            let line = line.trim();
            if line.chars().count() != width {
                return Err(GridParseError::Row {
                    row,
                    reason: format!("expected {width} cells, found {}", line.chars().count()),
                });
            }
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '#' => grid.set(row, col, true),
                    '.' => {}
                    other => {
                        return Err(GridParseError::Row {
                            row,
                            reason: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
            found = row + 1;
        }
        if found != height {
            return Err(GridParseError::RowCount {
                expected: height,
                found,
            });
        }
        Ok(grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.width, self.height, self.boundary)?;
        for row in self.cells.chunks(self.width) {
            let line: String = row.iter().map(|&c| if c { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// How the grid is split among workers or ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decomposition {
    RowBlock,
    ColBlock,
    Block2D { rows: usize, cols: usize },
}

impl Decomposition {
    /// Tile layout `(tile_rows, tile_cols)` for `parts` workers.
    fn layout(self, parts: usize) -> (usize, usize) {
        match self {
            Decomposition::RowBlock => (parts, 1),
            Decomposition::ColBlock => (1, parts),
            Decomposition::Block2D { rows, cols } => (rows, cols),
        }
    }
}

impl fmt::Display for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decomposition::RowBlock => f.write_str("row"),
            Decomposition::ColBlock => f.write_str("col"),
            Decomposition::Block2D { rows, cols } => write!(f, "{rows}x{cols}"),
        }
    }
}

/// Accepts `row`, `col`, or `RxC` for a 2-D block layout.
impl FromStr for Decomposition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "row" | "rows" | "row-block" => Ok(Decomposition::RowBlock),
            "col" | "cols" | "col-block" => Ok(Decomposition::ColBlock),
            other => {
                let layout = other.strip_prefix("block2d:").unwrap_or(other);
                let (r, c) = layout
                    .split_once('x')
                    .ok_or_else(|| format!("unknown decomposition {s:?}"))?;
                let rows = r.parse().map_err(|_| format!("bad tile rows in {s:?}"))?;
                let cols = c.parse().map_err(|_| format!("bad tile cols in {s:?}"))?;
                if rows == 0 || cols == 0 {
                    return Err(format!("tile counts must be positive in {s:?}"));
                }
                Ok(Decomposition::Block2D { rows, cols })
            }
        }
    }
}

/// One generation under Conway's rules.
pub fn life_step_serial(g: &Grid) -> Grid {
    let cells = (0..g.height)
        .flat_map(|r| (0..g.width).map(move |c| (r, c)))
        .map(|(r, c)| g.next_cell(r, c))
        .collect();
    Grid { cells, ..g.clone() }
}

/// Advances `g` by `steps` generations.
///
/// The result is identical to repeated [`life_step_serial`] for every
/// decomposition, model and team size.
pub fn life_run(
    g: &Grid,
    steps: usize,
    decomp: Decomposition,
    model: ExecModel,
    team: &Team,
) -> Result<Grid, KernelError> {
    let (tile_rows, tile_cols) = decomp.layout(team.size());
    if tile_rows > g.height || tile_cols > g.width {
        return Err(KernelError::InvalidInput(format!(
            "decomposition {decomp} into {tile_rows}x{tile_cols} tiles does not fit a {}x{} grid",
            g.width, g.height
        )));
    }
    let tiles = Tiling {
        tile_rows,
        tile_cols,
        width: g.width,
        height: g.height,
    };
    match model {
        ExecModel::Serial => Ok((0..steps).fold(g.clone(), |g, _| life_step_serial(&g))),
        ExecModel::WorkShare { policy } => {
            let mut grid = g.clone();
            for _ in 0..steps {
                let pieces = parallel_map(team, tiles.count(), policy, |t| {
                    let (rows, cols) = tiles.bounds(t);
                    rows.flat_map(|r| cols.clone().map(move |c| (r, c)))
                        .map(|(r, c)| grid.next_cell(r, c))
                        .collect::<Vec<bool>>()
                })?;
                grid = tiles.assemble(&grid, pieces);
            }
            Ok(grid)
        }
        ExecModel::MessagePass => {
            let comm = Communicator::from_env(team.size())?;
            let mut results = comm.run(team, |ep| run_rank(ep, g, steps, &tiles))?;
            Ok(results.swap_remove(0).expect("rank 0 gathers the grid"))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Tiling {
    tile_rows: usize,
    tile_cols: usize,
    width: usize,
    height: usize,
}

impl Tiling {
    fn count(&self) -> usize {
        self.tile_rows * self.tile_cols
    }

    fn coords(&self, t: usize) -> (usize, usize) {
        (t / self.tile_cols, t % self.tile_cols)
    }

    fn bounds(&self, t: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (ti, tj) = self.coords(t);
        let (r0, r1) = split_bounds(ti, self.tile_rows, self.height);
        let (c0, c1) = split_bounds(tj, self.tile_cols, self.width);
        (r0..r1, c0..c1)
    }

    /// Tile in direction `(di, dj)` from tile `t`, if one exists.
    fn neighbour(&self, t: usize, (di, dj): (isize, isize), boundary: Boundary) -> Option<usize> {
        let (ti, tj) = self.coords(t);
        let (r, c) = (ti as isize + di, tj as isize + dj);
        let (rows, cols) = (self.tile_rows as isize, self.tile_cols as isize);
        let (r, c) = match boundary {
            Boundary::Toroidal => (r.rem_euclid(rows), c.rem_euclid(cols)),
            Boundary::Dead if (0..rows).contains(&r) && (0..cols).contains(&c) => (r, c),
            Boundary::Dead => return None,
        };
        Some(r as usize * self.tile_cols + c as usize)
    }

    fn assemble(&self, template: &Grid, pieces: Vec<Vec<bool>>) -> Grid {
        let mut out = template.clone();
        for (t, piece) in pieces.into_iter().enumerate() {
            let (rows, cols) = self.bounds(t);
            let w = cols.len();
            for (k, r) in rows.enumerate() {
                out.cells[r * self.width + cols.start..][..w].copy_from_slice(&piece[k * w..][..w]);
            }
        }
        out
    }
}

const GATHER_BASE: u32 = 1 << 30;

/// A rank's tile padded with a one-cell ghost frame.
struct Padded {
    h: usize,
    w: usize,
    cells: Vec<bool>,
}

impl Padded {
    fn at(&self, r: usize, c: usize) -> bool {
        self.cells[r * (self.w + 2) + c]
    }

    fn put(&mut self, r: usize, c: usize, v: bool) {
        self.cells[r * (self.w + 2) + c] = v;
    }

    /// Interior rows/cols adjacent to the neighbour in direction `d`.
    fn edge(&self, (di, dj): (isize, isize)) -> (Vec<usize>, Vec<usize>) {
        let pick = |d: isize, n: usize| -> Vec<usize> {
            match d {
                -1 => vec![1],
                1 => vec![n],
                _ => (1..=n).collect(),
            }
        };
        (pick(di, self.h), pick(dj, self.w))
    }

    /// Ghost rows/cols facing the neighbour in direction `d`.
    fn ghost(&self, (di, dj): (isize, isize)) -> (Vec<usize>, Vec<usize>) {
        let pick = |d: isize, n: usize| -> Vec<usize> {
            match d {
                -1 => vec![0],
                1 => vec![n + 1],
                _ => (1..=n).collect(),
            }
        };
        (pick(di, self.h), pick(dj, self.w))
    }

    fn strip(&self, d: (isize, isize)) -> Vec<u8> {
        let (rows, cols) = self.edge(d);
        rows.iter()
            .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.at(r, c) as u8)
            .collect()
    }

    fn fill_ghost(&mut self, d: (isize, isize), strip: Option<&[u8]>) -> Result<(), MpError> {
        let (rows, cols) = self.ghost(d);
        let expected = rows.len() * cols.len();
        if let Some(s) = strip {
            if s.len() != expected {
                return Err(crate::message_passing::WireError::Length {
                    expected,
                    actual: s.len(),
                }
                .into());
            }
        }
        let mut k = 0;
        for &r in &rows {
            for &c in &cols {
                self.put(r, c, strip.is_some_and(|s| s[k] != 0));
                k += 1;
            }
        }
        Ok(())
    }

    fn step(&self) -> Vec<bool> {
        let mut next = Vec::with_capacity(self.h * self.w);
        for r in 1..=self.h {
            for c in 1..=self.w {
                let mut n = 0;
                for (dr, dc) in NEIGHBOURS {
                    n += self.at((r as isize + dr) as usize, (c as isize + dc) as usize) as u8;
                }
                next.push(rule(self.at(r, c), n));
            }
        }
        next
    }

    fn load(&mut self, interior: &[bool]) {
        for r in 0..self.h {
            for c in 0..self.w {
                self.put(r + 1, c + 1, interior[r * self.w + c]);
            }
        }
    }
}

/// Tag for the strip that tile `tile` receives from direction index `k`.
fn exchange_tag(tile: usize, k: usize) -> u32 {
    (tile * NEIGHBOURS.len() + k) as u32
}

fn gather_tag(tile: usize) -> u32 {
    GATHER_BASE + tile as u32
}

/// Steps every tile owned by this rank; tile `t` belongs to rank `t % size`.
fn run_rank(
    ep: &Endpoint,
    g: &Grid,
    steps: usize,
    tiles: &Tiling,
) -> Result<Option<Grid>, MpError> {
    let (me, size) = (ep.rank(), ep.size());
    let owner = |t: usize| -> Rank { t % size };
    let owned: Vec<usize> = (me..tiles.count()).step_by(size).collect();
    let mut local: Vec<Padded> = owned
        .iter()
        .map(|&t| {
            let (rows, cols) = tiles.bounds(t);
            let (h, w) = (rows.len(), cols.len());
            let mut tile = Padded {
                h,
                w,
                cells: vec![false; (h + 2) * (w + 2)],
            };
            let interior: Vec<bool> = rows
                .flat_map(|r| cols.clone().map(move |c| (r, c)))
                .map(|(r, c)| g.get(r, c))
                .collect();
            tile.load(&interior);
            tile
        })
        .collect();
    let neighbours: Vec<Vec<Option<usize>>> = owned
        .iter()
        .map(|&t| {
            NEIGHBOURS
                .iter()
                .map(|&d| tiles.neighbour(t, d, g.boundary))
                .collect()
        })
        .collect();
    let last = NEIGHBOURS.len() - 1;

    for _ in 0..steps {
        for (i, tile) in local.iter().enumerate() {
            for (k, &d) in NEIGHBOURS.iter().enumerate() {
                // the tile towards d sees us in the opposite direction, at index 7 - k
                if let Some(dest) = neighbours[i][k] {
                    ep.send(owner(dest), exchange_tag(dest, last - k), &tile.strip(d))?;
                }
            }
        }
        for (i, tile) in local.iter_mut().enumerate() {
            for (k, &d) in NEIGHBOURS.iter().enumerate() {
                let strip = match neighbours[i][k] {
                    Some(src) => Some(ep.recv(owner(src), exchange_tag(owned[i], k))?),
                    None => None,
                };
                tile.fill_ghost(d, strip.as_deref())?;
            }
            let next = tile.step();
            tile.load(&next);
        }
    }

    for (i, tile) in local.iter().enumerate() {
        let cells: Vec<u8> = (1..=tile.h)
            .flat_map(|r| (1..=tile.w).map(move |c| (r, c)))
            .map(|(r, c)| tile.at(r, c) as u8)
            .collect();
        ep.send(0, gather_tag(owned[i]), &cells)?;
    }
    if me != 0 {
        return Ok(None);
    }
    let mut pieces = Vec::with_capacity(tiles.count());
    for t in 0..tiles.count() {
        let bytes = ep.recv(owner(t), gather_tag(t))?;
        pieces.push(bytes.into_iter().map(|b| b != 0).collect());
    }
    Ok(Some(tiles.assemble(g, pieces)))
}

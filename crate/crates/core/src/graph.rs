//! Spatial grid layouts and the four directed-acyclic traversal plans the
//! spatial recurrence scans cells with.
//!
//! A layout is a rectangular grid with an occupancy mask; occupied cells get
//! compact ids in raster order (row by row, left to right). Each of the four
//! scan directions yields a total visit order over occupied cells plus, per
//! cell, the set of already-visited 8-neighbors feeding its recurrence.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("layout has no occupied cells")]
    Empty,
    #[error("layout text is malformed: {0}")]
    Parse(String),
}

/// Rectangular grid with an occupancy mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    height: usize,
    width: usize,
    occupied: Vec<bool>,
    /// Raster-ordered coordinates of occupied cells; index = compact cell id.
    cells: Vec<(usize, usize)>,
    /// Grid position -> compact cell id.
    ids: Vec<Option<usize>>,
}

impl GridLayout {
    pub fn new(height: usize, width: usize, occupied: Vec<bool>) -> Result<Self, LayoutError> {
        if occupied.len() != height * width {
            return Err(LayoutError::Parse(format!(
                "occupancy mask has {} entries, expected {}x{}",
                occupied.len(),
                height,
                width
            )));
        }
        let mut cells = Vec::new();
        let mut ids = vec![None; height * width];
        for i in 0..height {
            for j in 0..width {
                if occupied[i * width + j] {
                    ids[i * width + j] = Some(cells.len());
                    cells.push((i, j));
                }
            }
        }
        if cells.is_empty() {
            return Err(LayoutError::Empty);
        }
        Ok(GridLayout {
            height,
            width,
            occupied,
            cells,
            ids,
        })
    }

    /// Fully occupied `h x w` grid.
    pub fn full(height: usize, width: usize) -> Self {
        GridLayout::new(height, width, vec![true; height * width])
            .expect("full grid cannot be empty")
    }

    /// Parses the layout file format: first line `h w`, then `h` lines of
    /// `w` characters, `#` = occupied, `.` = empty.
    pub fn from_text(text: &str) -> Result<Self, LayoutError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| LayoutError::Parse("missing header line".into()))?;
        let mut parts = header.split_whitespace();
        let h: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LayoutError::Parse(format!("bad header {header:?}")))?;
        let w: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LayoutError::Parse(format!("bad header {header:?}")))?;
        if parts.next().is_some() {
            return Err(LayoutError::Parse(format!("trailing tokens in header {header:?}")));
        }
        let mut occupied = Vec::with_capacity(h * w);
        for row in 0..h {
            let line = lines
                .next()
                .ok_or_else(|| LayoutError::Parse(format!("missing grid row {}", row + 1)))?;
            if line.chars().count() != w {
                return Err(LayoutError::Parse(format!(
                    "row {} has {} characters, expected {}",
                    row + 1,
                    line.chars().count(),
                    w
                )));
            }
            for ch in line.chars() {
                match ch {
                    '#' => occupied.push(true),
                    '.' => occupied.push(false),
                    other => {
                        return Err(LayoutError::Parse(format!(
                            "unexpected character {other:?} in row {}",
                            row + 1
                        )))
                    }
                }
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(LayoutError::Parse("trailing content after grid rows".into()));
        }
        GridLayout::new(h, w, occupied)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.height, self.width);
        for i in 0..self.height {
            for j in 0..self.width {
                out.push(if self.is_occupied(i, j) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.len()
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        i < self.height && j < self.width && self.occupied[i * self.width + j]
    }

    /// Compact id of the occupied cell at `(i, j)`, if any.
    pub fn cell_id(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.height && j < self.width {
            self.ids[i * self.width + j]
        } else {
            None
        }
    }

    /// Coordinates of the cell with compact id `k` (raster order).
    pub fn cell_coord(&self, k: usize) -> (usize, usize) {
        self.cells[k]
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }
}

/// The four corner-anchored scan directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::TopLeft,
        Direction::TopRight,
        Direction::BottomLeft,
        Direction::BottomRight,
    ];

    pub fn index(self) -> usize {
        match self {
            Direction::TopLeft => 0,
            Direction::TopRight => 1,
            Direction::BottomLeft => 2,
            Direction::BottomRight => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::TopLeft => "top_left",
            Direction::TopRight => "top_right",
            Direction::BottomLeft => "bottom_left",
            Direction::BottomRight => "bottom_right",
        }
    }

    /// Offsets of the three neighbor cells that may precede a cell in this
    /// scan: the in-row neighbor, the diagonal, and the previous-row
    /// neighbor. The top-left rule uses left / up-left / up; the other three
    /// directions are its mirror and flip images.
    fn predecessor_offsets(self) -> [(isize, isize); 3] {
        match self {
            Direction::TopLeft => [(0, -1), (-1, -1), (-1, 0)],
            Direction::TopRight => [(0, 1), (-1, 1), (-1, 0)],
            Direction::BottomLeft => [(0, -1), (1, -1), (1, 0)],
            Direction::BottomRight => [(0, 1), (1, 1), (1, 0)],
        }
    }

    fn rows_reversed(self) -> bool {
        matches!(self, Direction::BottomLeft | Direction::BottomRight)
    }

    fn cols_reversed(self) -> bool {
        matches!(self, Direction::TopRight | Direction::BottomRight)
    }
}

/// Total visit order plus per-cell predecessor sets for one direction.
///
/// `order` holds compact cell ids; `preds` is indexed by compact cell id and
/// lists predecessors as compact ids. Every predecessor of a cell appears
/// strictly earlier in `order`, so a single sweep in `order` (or its
/// reverse, for backpropagation) respects the DAG.
#[derive(Clone, Debug, PartialEq)]
pub struct TraversalPlan {
    pub direction: Direction,
    pub order: Vec<usize>,
    pub preds: Vec<Vec<usize>>,
}

impl TraversalPlan {
    /// Visit order as grid coordinates.
    pub fn order_coords(&self, layout: &GridLayout) -> Vec<(usize, usize)> {
        self.order.iter().map(|&k| layout.cell_coord(k)).collect()
    }
}

/// Builds the visit order and predecessor DAG for one direction.
///
/// Unoccupied cells are skipped in both the order and the predecessor sets;
/// a predecessor falling on an unoccupied cell is simply absent.
pub fn build_plan(layout: &GridLayout, direction: Direction) -> TraversalPlan {
    assert!(layout.occupied_count() > 0, "cannot traverse an empty layout");
    let offsets = direction.predecessor_offsets();
    let rows: Vec<usize> = if direction.rows_reversed() {
        (0..layout.height()).rev().collect()
    } else {
        (0..layout.height()).collect()
    };
    let cols: Vec<usize> = if direction.cols_reversed() {
        (0..layout.width()).rev().collect()
    } else {
        (0..layout.width()).collect()
    };

    let mut order = Vec::with_capacity(layout.occupied_count());
    let mut preds = vec![Vec::new(); layout.occupied_count()];
    for &i in &rows {
        for &j in &cols {
            let Some(id) = layout.cell_id(i, j) else { continue };
            for (di, dj) in offsets {
                let pi = i as isize + di;
                let pj = j as isize + dj;
                if pi < 0 || pj < 0 {
                    continue;
                }
                if let Some(pid) = layout.cell_id(pi as usize, pj as usize) {
                    preds[id].push(pid);
                }
            }
            order.push(id);
        }
    }
    TraversalPlan {
        direction,
        order,
        preds,
    }
}

/// Plans for all four directions, in `Direction::ALL` order.
pub fn build_all_plans(layout: &GridLayout) -> [TraversalPlan; 4] {
    Direction::ALL.map(|d| build_plan(layout, d))
}

const SEED62_TABLE: &str = include_str!("../data/seed62_electrodes.csv");

/// One electrode of the 62-channel cap: ordinal (1-based channel number),
/// label, and grid position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Electrode {
    pub ordinal: usize,
    pub name: &'static str,
    pub row: usize,
    pub col: usize,
}

/// The 62-electrode table shipped with the crate, sorted by ordinal. The
/// ordinals follow raster order of the grid, so the top-left scan visits
/// channels 1..=62 in sequence.
pub fn seed_electrodes() -> Vec<Electrode> {
    SEED62_TABLE
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut parts = line.split(',');
            let ordinal = parts.next().unwrap().parse().unwrap();
            let name = parts.next().unwrap();
            let row = parts.next().unwrap().parse().unwrap();
            let col = parts.next().unwrap().parse().unwrap();
            Electrode {
                ordinal,
                name,
                row,
                col,
            }
        })
        .collect()
}

/// The 62-channel electrode grid: a 9x9 mask whose occupied cells are the
/// cap positions from the shipped electrode table.
pub fn seed_layout_62() -> GridLayout {
    let electrodes = seed_electrodes();
    let (h, w) = (9, 9);
    let mut occupied = vec![false; h * w];
    for e in &electrodes {
        occupied[e.row * w + e.col] = true;
    }
    let layout = GridLayout::new(h, w, occupied).expect("electrode table is non-empty");
    debug_assert_eq!(layout.occupied_count(), 62);
    layout
}

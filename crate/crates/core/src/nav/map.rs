use super::NavError;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
}

/// Discretized floorplan. Each cell is 10 cm of twin-world distance.
/// Format: `#` wall, `.` free, `S` start, `G` goal; border cells must be
/// walls.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    cells: Vec<Cell>,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl GridMap {
    pub fn parse(text: &str) -> Result<Self, NavError> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.is_empty() {
            return Err(NavError::Map("empty map".to_string()));
        }
        let width = lines[0].chars().count();
        let height = lines.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        let mut goal = None;
        for (y, line) in lines.iter().enumerate() {
            let row: Vec<char> = line.chars().collect();
            if row.len() != width {
                return Err(NavError::Map(format!(
                    "row {y} has width {}, expected {width}",
                    row.len()
                )));
            }
            for (x, c) in row.iter().enumerate() {
                let cell = match c {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => {
                        if start.replace((x, y)).is_some() {
                            return Err(NavError::Map("multiple start cells".to_string()));
                        }
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace((x, y)).is_some() {
                            return Err(NavError::Map("multiple goal cells".to_string()));
                        }
                        Cell::Free
                    }
                    other => return Err(NavError::Map(format!("bad cell char {other:?}"))),
                };
                cells.push(cell);
            }
        }
        let start = start.ok_or_else(|| NavError::Map("missing start cell".to_string()))?;
        let goal = goal.ok_or_else(|| NavError::Map("missing goal cell".to_string()))?;
        if start == goal {
            return Err(NavError::Map("start and goal coincide".to_string()));
        }
        let map = GridMap {
            width,
            height,
            cell_size_m: 0.10,
            cells,
            start,
            goal,
        };
        for x in 0..width {
            if !map.is_wall(x as i64, 0) || !map.is_wall(x as i64, height as i64 - 1) {
                return Err(NavError::Map("border cells must be walls".to_string()));
            }
        }
        for y in 0..height {
            if !map.is_wall(0, y as i64) || !map.is_wall(width as i64 - 1, y as i64) {
                return Err(NavError::Map("border cells must be walls".to_string()));
            }
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, NavError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Out-of-map coordinates count as walls.
    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return true;
        }
        self.cells[y as usize * self.width + x as usize] == Cell::Wall
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cells[y * self.width + x] == Cell::Free {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn total_cells(&self) -> usize {
        self.width * self.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "#####\n#S..#\n#.#.#\n#..G#\n#####\n";

    #[test]
    fn parses_small_map() {
        let m = GridMap::parse(SMALL).unwrap();
        assert_eq!((m.width, m.height), (5, 5));
        assert_eq!(m.start, (1, 1));
        assert_eq!(m.goal, (3, 3));
        assert!(m.is_wall(2, 2));
        assert!(!m.is_wall(1, 2));
        assert!(m.is_wall(-1, 0));
    }

    #[test]
    fn rejects_open_border() {
        let err = GridMap::parse("#####\n#S..#\n..#.#\n#..G#\n#####\n");
        assert!(matches!(err, Err(NavError::Map(_))));
    }

    #[test]
    fn rejects_missing_goal() {
        let err = GridMap::parse("####\n#S.#\n####\n");
        assert!(matches!(err, Err(NavError::Map(_))));
    }
}

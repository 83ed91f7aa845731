use super::map::GridMap;
use super::NavError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

pub const ACTIONS: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Up => 0,
            Action::Down => 1,
            Action::Left => 2,
            Action::Right => 3,
        }
    }

    pub fn from_index(i: usize) -> Action {
        ACTIONS[i % 4]
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadiationZone {
    pub center: (usize, usize),
    pub radius_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub r_goal: f64,
    pub r_collide: f64,
    pub r_timeout: f64,
    pub gamma: f64,
    pub max_steps: usize,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            r_goal: 10.0,
            r_collide: -0.1,
            r_timeout: 0.0,
            gamma: 0.99,
            max_steps: 500,
        }
    }
}

/// Normalization constant N for the potential: total cell count (default)
/// or free-cell count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    TotalCells,
    FreeCells,
}

#[derive(Debug, Clone)]
pub struct NavConfig {
    pub zone_count: usize,
    pub zone_radius: usize,
    /// Side of the square observation window (odd).
    pub window: usize,
    pub norm: NormMode,
    pub reward: RewardParams,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            zone_count: 3,
            zone_radius: 2,
            window: 5,
            norm: NormMode::TotalCells,
            reward: RewardParams::default(),
        }
    }
}

/// Masked local view fed to the learner. Masks are window x window,
/// row-major, centered on the current cell; out-of-map window cells are
/// marked collidable and the center of the visited mask is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub curr: (usize, usize),
    pub rel_goal: (i64, i64),
    pub collidable_mask: Vec<u8>,
    pub visited_mask: Vec<u8>,
    pub window: usize,
}

impl Observation {
    /// Flattens to the learner input: 2 + 2 + W*W + W*W values.
    pub fn flatten(&self, width: usize, height: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 + 2 * self.window * self.window);
        out.push(self.curr.0 as f64 / (width - 1) as f64 * 2.0 - 1.0);
        out.push(self.curr.1 as f64 / (height - 1) as f64 * 2.0 - 1.0);
        out.push(self.rel_goal.0 as f64 / width as f64);
        out.push(self.rel_goal.1 as f64 / height as f64);
        out.extend(self.collidable_mask.iter().map(|&b| f64::from(b)));
        out.extend(self.visited_mask.iter().map(|&b| f64::from(b)));
        out
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub reached_goal: bool,
}

pub struct GridWorld {
    pub map: GridMap,
    pub cfg: NavConfig,
    zones: Vec<RadiationZone>,
    zone_cells: HashSet<(usize, usize)>,
    pos: (usize, usize),
    visited: HashSet<(usize, usize)>,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(map: GridMap, cfg: NavConfig) -> Self {
        let start = map.start;
        GridWorld {
            map,
            cfg,
            zones: Vec::new(),
            zone_cells: HashSet::new(),
            pos: start,
            visited: HashSet::from([start]),
            steps: 0,
            done: true,
        }
    }

    pub fn zones(&self) -> &[RadiationZone] {
        &self.zones
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    fn zone_cells_for(&self, zones: &[RadiationZone]) -> HashSet<(usize, usize)> {
        let mut cells = HashSet::new();
        for z in zones {
            let r = z.radius_cells as i64;
            let (cx, cy) = (z.center.0 as i64, z.center.1 as i64);
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy <= r * r {
                        let (x, y) = (cx + dx, cy + dy);
                        if x >= 0 && y >= 0 {
                            cells.insert((x as usize, y as usize));
                        }
                    }
                }
            }
        }
        cells
    }

    fn goal_reachable(&self, blocked: &HashSet<(usize, usize)>) -> bool {
        if blocked.contains(&self.map.start) {
            return false;
        }
        let mut seen = HashSet::from([self.map.start]);
        let mut queue = VecDeque::from([self.map.start]);
        while let Some((x, y)) = queue.pop_front() {
            if (x, y) == self.map.goal {
                return true;
            }
            for (dx, dy) in [(0i64, -1i64), (0, 1), (-1, 0), (1, 0)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if self.map.is_wall(nx, ny) {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                if blocked.contains(&n) || !seen.insert(n) {
                    continue;
                }
                queue.push_back(n);
            }
        }
        false
    }

    /// Starts a new episode: robot at start, K radiation zones placed
    /// uniformly at random over free cells (excluding start/goal and any
    /// placement that cuts the goal off), visited set = {start}.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, NavError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates: Vec<(usize, usize)> = self
            .map
            .free_cells()
            .into_iter()
            .filter(|&c| c != self.map.start && c != self.map.goal)
            .collect();

        let mut rejections = 0;
        let (zones, cells) = loop {
            let centers: Vec<(usize, usize)> = candidates
                .choose_multiple(&mut rng, self.cfg.zone_count)
                .copied()
                .collect();
            let zones: Vec<RadiationZone> = centers
                .iter()
                .map(|&center| RadiationZone {
                    center,
                    radius_cells: self.cfg.zone_radius,
                })
                .collect();
            let cells = self.zone_cells_for(&zones);
            let covers_endpoint =
                cells.contains(&self.map.start) || cells.contains(&self.map.goal);
            if !covers_endpoint && self.goal_reachable(&cells) {
                break (zones, cells);
            }
            rejections += 1;
            if rejections >= 100 {
                return Err(NavError::PlacementError(rejections));
            }
        };

        self.zones = zones;
        self.zone_cells = cells;
        self.pos = self.map.start;
        self.visited = HashSet::from([self.map.start]);
        self.steps = 0;
        self.done = false;
        Ok(self.observation())
    }

    /// Potential: negative Manhattan distance to goal, normalized by N.
    pub fn phi(&self, cell: (usize, usize)) -> f64 {
        let n = match self.cfg.norm {
            NormMode::TotalCells => self.map.total_cells(),
            NormMode::FreeCells => self.map.free_cells().len(),
        } as f64;
        let d = (self.map.goal.0 as i64 - cell.0 as i64).unsigned_abs()
            + (self.map.goal.1 as i64 - cell.1 as i64).unsigned_abs();
        -(d as f64) / n
    }

    pub fn is_blocked(&self, x: i64, y: i64) -> bool {
        self.map.is_wall(x, y) || (x >= 0 && y >= 0 && self.zone_cells.contains(&(x as usize, y as usize)))
    }

    pub fn observation(&self) -> Observation {
        let w = self.cfg.window;
        let half = w as i64 / 2;
        let mut collidable = Vec::with_capacity(w * w);
        let mut visited = Vec::with_capacity(w * w);
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (self.pos.0 as i64 + dx, self.pos.1 as i64 + dy);
                collidable.push(u8::from(self.is_blocked(x, y)));
                let seen = x >= 0
                    && y >= 0
                    && self.visited.contains(&(x as usize, y as usize));
                visited.push(u8::from(seen));
            }
        }
        Observation {
            curr: self.pos,
            rel_goal: (
                self.map.goal.0 as i64 - self.pos.0 as i64,
                self.map.goal.1 as i64 - self.pos.1 as i64,
            ),
            collidable_mask: collidable,
            visited_mask: visited,
            window: w,
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, NavError> {
        if self.done {
            return Err(NavError::EpisodeDone);
        }
        let r = self.cfg.reward;
        let (dx, dy) = action.delta();
        let (nx, ny) = (self.pos.0 as i64 + dx, self.pos.1 as i64 + dy);
        self.steps += 1;

        if self.is_blocked(nx, ny) {
            self.done = true;
            return Ok(StepOutcome {
                obs: self.observation(),
                reward: r.r_collide,
                terminated: true,
                truncated: false,
                reached_goal: false,
            });
        }

        let prev = self.pos;
        let next = (nx as usize, ny as usize);
        self.pos = next;
        self.visited.insert(next);

        if next == self.map.goal {
            self.done = true;
            return Ok(StepOutcome {
                obs: self.observation(),
                reward: r.r_goal,
                terminated: true,
                truncated: false,
                reached_goal: true,
            });
        }

        if self.steps >= r.max_steps {
            self.done = true;
            return Ok(StepOutcome {
                obs: self.observation(),
                reward: r.r_timeout,
                terminated: false,
                truncated: true,
                reached_goal: false,
            });
        }

        let reward = r.gamma * self.phi(next) - self.phi(prev);
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            terminated: false,
            truncated: false,
            reached_goal: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "#####\n#S..#\n#...#\n#..G#\n#####\n";

    fn world(zones: usize) -> GridWorld {
        let map = GridMap::parse(SMALL).unwrap();
        let cfg = NavConfig {
            zone_count: zones,
            zone_radius: 1,
            ..NavConfig::default()
        };
        GridWorld::new(map, cfg)
    }

    fn map_10x10() -> GridMap {
        let mut text = String::new();
        for y in 0..10 {
            for x in 0..10 {
                let c = if x == 0 || y == 0 || x == 9 || y == 9 {
                    '#'
                } else if (x, y) == (1, 1) {
                    'S'
                } else if (x, y) == (8, 8) {
                    'G'
                } else {
                    '.'
                };
                text.push(c);
            }
            text.push('\n');
        }
        GridMap::parse(&text).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_placement_and_observation() {
        let mut a = world(1);
        let mut b = world(1);
        let oa = a.reset(7).unwrap();
        let ob = b.reset(7).unwrap();
        assert_eq!(a.zones(), b.zones());
        assert_eq!(oa, ob);
        let oc = a.reset(8).unwrap();
        let _ = oc;
    }

    #[test]
    fn zero_zones_shows_walls_only() {
        let mut w = world(0);
        let obs = w.reset(1).unwrap();
        // center row of the 5x5 collidable window at (1,1): (-1..=3, 1)
        // expected collidable: (-1,1)=oob, (0,1)=wall, rest free
        assert_eq!(obs.collidable_mask[2 * 5], 1);
        assert_eq!(obs.collidable_mask[2 * 5 + 1], 1);
        assert_eq!(obs.collidable_mask[2 * 5 + 2], 0);
        assert!(w.zones().is_empty());
    }

    #[test]
    fn goal_reachable_after_placement() {
        let map = map_10x10();
        let mut w = GridWorld::new(map, NavConfig::default());
        for seed in 0..20 {
            w.reset(seed).unwrap();
            assert!(w.goal_reachable(&w.zone_cells), "seed {seed}");
        }
    }

    #[test]
    fn phi_zero_at_goal_and_monotone_in_distance() {
        let map = map_10x10();
        let w = GridWorld::new(map, NavConfig::default());
        assert_eq!(w.phi((8, 8)), 0.0);
        // N = 100; five cells away -> -0.05
        assert!((w.phi((8, 3)) - (-0.05)).abs() < 1e-12);
        assert!(w.phi((7, 8)) > w.phi((6, 8)));
    }

    #[test]
    fn goal_step_pays_ten_and_terminates() {
        let mut w = world(0);
        w.reset(1).unwrap();
        // S(1,1) -> (2,1) -> (3,1) -> (3,2) -> (3,3)=G
        w.step(Action::Right).unwrap();
        w.step(Action::Right).unwrap();
        w.step(Action::Down).unwrap();
        let out = w.step(Action::Down).unwrap();
        assert_eq!(out.reward, 10.0);
        assert!(out.terminated && out.reached_goal);
        assert!(matches!(w.step(Action::Up), Err(NavError::EpisodeDone)));
    }

    #[test]
    fn wall_step_pays_collide_and_terminates() {
        let mut w = world(0);
        w.reset(1).unwrap();
        let out = w.step(Action::Up).unwrap();
        assert_eq!(out.reward, -0.1);
        assert!(out.terminated);
    }

    #[test]
    fn shaping_reward_matches_direct_arithmetic() {
        let map = map_10x10();
        let mut w = GridWorld::new(
            map,
            NavConfig {
                zone_count: 0,
                ..NavConfig::default()
            },
        );
        w.reset(1).unwrap();
        // move from (1,1) to (2,1): d 14 -> 13, N = 100
        let out = w.step(Action::Right).unwrap();
        let expected = 0.99 * (-0.13) - (-0.14);
        assert!((out.reward - expected).abs() < 1e-12);
    }

    #[test]
    fn timeout_truncates_with_zero_reward() {
        let mut w = world(0);
        w.cfg.reward.max_steps = 3;
        w.reset(1).unwrap();
        w.step(Action::Right).unwrap();
        w.step(Action::Left).unwrap();
        let out = w.step(Action::Right).unwrap();
        assert!(out.truncated && !out.terminated);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn masks_agree_with_map_for_every_reachable_position() {
        let map = map_10x10();
        let mut w = GridWorld::new(map, NavConfig::default());
        w.reset(3).unwrap();
        for y in 1..9usize {
            for x in 1..9usize {
                if w.is_blocked(x as i64, y as i64) {
                    continue;
                }
                w.pos = (x, y);
                let obs = w.observation();
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let idx = ((dy + 2) * 5 + dx + 2) as usize;
                        let expected = u8::from(w.is_blocked(x as i64 + dx, y as i64 + dy));
                        assert_eq!(obs.collidable_mask[idx], expected, "({x},{y}) d({dx},{dy})");
                    }
                }
                // center of the visited mask is always 1
                w.visited.insert((x, y));
                let obs = w.observation();
                assert_eq!(obs.visited_mask[12], 1);
            }
        }
    }

    #[test]
    fn episode_determinism_under_fixed_actions() {
        let run = || {
            let map = map_10x10();
            let mut w = GridWorld::new(map, NavConfig::default());
            let mut trace = Vec::new();
            w.reset(11).unwrap();
            for a in [Action::Right, Action::Down, Action::Right, Action::Down] {
                match w.step(a) {
                    Ok(out) => trace.push((out.reward.to_bits(), out.terminated, out.obs)),
                    Err(_) => break,
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shaping_telescopes_over_random_trajectories() {
        use rand::Rng;
        let map = map_10x10();
        let mut w = GridWorld::new(
            map,
            NavConfig {
                zone_count: 0,
                ..NavConfig::default()
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for ep in 0..200 {
            let obs0 = w.reset(ep).unwrap();
            let phi0 = w.phi(obs0.curr);
            let gamma = w.cfg.reward.gamma;
            let mut sum = 0.0;
            let mut discount = 1.0;
            let mut t = 0usize;
            let mut s_curr = obs0.curr;
            loop {
                let a = Action::from_index(rng.gen_range(0..4));
                match w.step(a) {
                    Ok(out) if !out.terminated && !out.truncated => {
                        sum += discount * out.reward;
                        discount *= gamma;
                        t += 1;
                        s_curr = out.obs.curr;
                    }
                    _ => break,
                }
                if t > 50 {
                    break;
                }
            }
            let phi_t = w.phi(s_curr);
            let expected = gamma.powi(t as i32) * phi_t - phi0;
            assert!(
                (sum - expected).abs() < 1e-9,
                "ep {ep}: sum {sum} expected {expected}"
            );
        }
    }
}

//! Episode dynamics for the Hunter arena.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EnvConfig;
use super::sprites;
use super::Kind;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Up, down, left, right as (row, col) deltas.
const DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// The nine discrete actions: move in four directions, shoot in four
/// directions, or do nothing.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Action {
    MoveUp,
    MoveDown,
    MoveLeft,
    MoveRight,
    ShootUp,
    ShootDown,
    ShootLeft,
    ShootRight,
    Noop,
}

impl Action {
    pub const COUNT: usize = 9;

    pub fn from_index(index: usize) -> Result<Action> {
        use Action::*;
        Ok(match index {
            0 => MoveUp,
            1 => MoveDown,
            2 => MoveLeft,
            3 => MoveRight,
            4 => ShootUp,
            5 => ShootDown,
            6 => ShootLeft,
            7 => ShootRight,
            8 => Noop,
            _ => {
                return Err(Error::argument(alloc::format!(
                    "action index {index} out of range 0..{}",
                    Action::COUNT
                )))
            }
        })
    }

    pub fn index(self) -> usize {
        use Action::*;
        match self {
            MoveUp => 0,
            MoveDown => 1,
            MoveLeft => 2,
            MoveRight => 3,
            ShootUp => 4,
            ShootDown => 5,
            ShootLeft => 6,
            ShootRight => 7,
            Noop => 8,
        }
    }
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub reward: f64,
    pub done: bool,
}

type Pos = (usize, usize);

/// A single arena instance with its own random stream.
///
/// One step proceeds in phases: the hunter acts (moving into a cow catches
/// it, moving into a zombie is fatal, shots fly until they hit a zombie or
/// a wall and pass over cows); if the arena is now clear the episode ends
/// with the completion bonus and the monsters never move; otherwise zombies
/// step toward the hunter one at a time, then cows wander, and finally the
/// step limit is checked.
pub struct HunterEnv {
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    hunter: Pos,
    zombies: Vec<Pos>,
    cows: Vec<Pos>,
    steps: usize,
    done: bool,
}

impl HunterEnv {
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = HunterEnv {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            hunter: (1, 1),
            zombies: Vec::new(),
            cows: Vec::new(),
            steps: 0,
            done: false,
        };
        env.reset();
        Ok(env)
    }

    /// Starts a new episode, drawing placements (and the mirror coin, when
    /// enabled) from the environment's stream.
    pub fn reset(&mut self) {
        self.steps = 0;
        self.done = false;
        let (mut nz, mut nc) = (self.cfg.n_zombies, self.cfg.n_cows);
        if self.cfg.mirrored && self.rng.gen_bool(0.5) {
            core::mem::swap(&mut nz, &mut nc);
        }
        let g = self.cfg.grid_cells;
        let mut free: Vec<Pos> = (1..g - 1)
            .flat_map(|r| (1..g - 1).map(move |c| (r, c)))
            .collect();
        let k = 1 + nz + nc;
        for i in 0..k {
            let j = self.rng.gen_range(i..free.len());
            free.swap(i, j);
        }
        self.hunter = free[0];
        self.zombies = free[1..1 + nz].to_vec();
        self.cows = free[1 + nz..k].to_vec();
    }

    pub fn step(&mut self, action: Action) -> Result<Step> {
        if self.done {
            return Err(Error::state("step on a finished episode; call reset first"));
        }
        let mut reward = 0.0;
        use Action::*;
        match action {
            MoveUp | MoveDown | MoveLeft | MoveRight => {
                let dir = DIRS[action.index()];
                let target = offset(self.hunter, dir);
                if self.is_wall(target) {
                    // Bumping a wall wastes the move.
                } else if self.zombie_at(target).is_some() {
                    reward -= 1.0;
                    self.done = true;
                } else if let Some(i) = self.cow_at(target) {
                    self.cows.remove(i);
                    reward += 1.0;
                    self.hunter = target;
                } else {
                    self.hunter = target;
                }
            }
            ShootUp | ShootDown | ShootLeft | ShootRight => {
                let dir = DIRS[action.index() - 4];
                let mut pos = self.hunter;
                loop {
                    pos = offset(pos, dir);
                    if self.is_wall(pos) {
                        break;
                    }
                    if let Some(i) = self.zombie_at(pos) {
                        self.zombies.remove(i);
                        reward += 1.0;
                        break;
                    }
                    // Shots sail over cows and empty floor.
                }
            }
            Noop => {}
        }

        if !self.done && self.zombies.is_empty() && self.cows.is_empty() {
            reward += 5.0;
            self.done = true;
        }

        if !self.done {
            self.move_zombies(&mut reward);
        }
        if !self.done {
            self.move_cows();
        }

        self.steps += 1;
        if !self.done && self.steps >= self.cfg.max_steps {
            self.done = true;
        }
        Ok(Step { reward, done: self.done })
    }

    /// Each zombie closes the row gap first; if there is none, or the cell
    /// is taken, it tries the column instead, and otherwise stays put.
    fn move_zombies(&mut self, reward: &mut f64) {
        for i in 0..self.zombies.len() {
            let z = self.zombies[i];
            let dr = self.hunter.0 as isize - z.0 as isize;
            let dc = self.hunter.1 as isize - z.1 as isize;
            let mut candidates = [None, None];
            if dr != 0 {
                candidates[0] = Some(offset(z, (dr.signum(), 0)));
            }
            if dc != 0 {
                candidates[1] = Some(offset(z, (0, dc.signum())));
            }
            for target in candidates.into_iter().flatten() {
                if target == self.hunter {
                    *reward -= 1.0;
                    self.done = true;
                    return;
                }
                if self.is_free(target) {
                    self.zombies[i] = target;
                    break;
                }
            }
        }
    }

    /// Cows pick uniformly among staying put and the free neighbor cells.
    fn move_cows(&mut self) {
        for i in 0..self.cows.len() {
            let c = self.cows[i];
            let mut candidates: Vec<Pos> = alloc::vec![c];
            for dir in DIRS {
                let target = offset(c, dir);
                if target != self.hunter && self.is_free(target) {
                    candidates.push(target);
                }
            }
            let pick = self.rng.gen_range(0..candidates.len());
            self.cows[i] = candidates[pick];
        }
    }

    // ---- observation --------------------------------------------------------

    /// Kind of every grid cell, row-major.
    pub fn cell_kinds(&self) -> Vec<Kind> {
        let g = self.cfg.grid_cells;
        let mut kinds = alloc::vec![Kind::Floor; g * g];
        for r in 0..g {
            for c in 0..g {
                if r == 0 || c == 0 || r == g - 1 || c == g - 1 {
                    kinds[r * g + c] = Kind::Wall;
                }
            }
        }
        for &(r, c) in &self.cows {
            kinds[r * g + c] = Kind::Cow;
        }
        for &(r, c) in &self.zombies {
            kinds[r * g + c] = Kind::Zombie;
        }
        kinds[self.hunter.0 * g + self.hunter.1] = Kind::Hunter;
        kinds
    }

    /// The observation as packed 8-bit RGB planes (channel, row, column).
    pub fn render_bytes(&self) -> Vec<u8> {
        let g = self.cfg.grid_cells;
        let p = self.cfg.cell_pixels;
        let side = g * p;
        let kinds = self.cell_kinds();
        let mut out = alloc::vec![0u8; 3 * side * side];
        for (cell, &kind) in kinds.iter().enumerate() {
            let (cr, cc) = (cell / g, cell % g);
            let sprite = sprites::sprite(kind, p);
            for y in 0..p {
                for x in 0..p {
                    let px = sprite[y * p + x];
                    let row = cr * p + y;
                    let col = cc * p + x;
                    for ch in 0..3 {
                        out[ch * side * side + row * side + col] = px[ch];
                    }
                }
            }
        }
        out
    }

    /// The observation as a `[3, side, side]` tensor with channels in
    /// `[0, 1]`. Rendering never mutates the environment.
    pub fn render<T: Scalar>(&self) -> Tensor<T> {
        let side = self.cfg.observation_side();
        let data: Vec<T> = self
            .render_bytes()
            .into_iter()
            .map(|k| T::of(k as f64 / 255.0))
            .collect();
        Tensor::from_vec(&[3, side, side], data).expect("render buffer matches shape")
    }

    // ---- inspection ----------------------------------------------------------

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn hunter_pos(&self) -> Pos {
        self.hunter
    }

    pub fn zombie_positions(&self) -> &[Pos] {
        &self.zombies
    }

    pub fn cow_positions(&self) -> &[Pos] {
        &self.cows
    }

    // ---- occupancy helpers ----------------------------------------------------

    fn is_wall(&self, (r, c): Pos) -> bool {
        let g = self.cfg.grid_cells;
        r == 0 || c == 0 || r == g - 1 || c == g - 1
    }

    fn zombie_at(&self, pos: Pos) -> Option<usize> {
        self.zombies.iter().position(|&z| z == pos)
    }

    fn cow_at(&self, pos: Pos) -> Option<usize> {
        self.cows.iter().position(|&c| c == pos)
    }

    /// Free of walls and monsters (the hunter's cell is not considered
    /// free; callers handle it specially).
    fn is_free(&self, pos: Pos) -> bool {
        !self.is_wall(pos) && self.zombie_at(pos).is_none() && self.cow_at(pos).is_none()
    }
}

fn offset((r, c): Pos, (dr, dc): (isize, isize)) -> Pos {
    ((r as isize + dr) as usize, (c as isize + dc) as usize)
}

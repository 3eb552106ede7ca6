//! Ground-truth user trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    RandomWalk,
    Circle,
    FigureEight,
}

/// Parameters of a trajectory. `extent` is the circle radius, the
/// figure-eight half-width, or the half-width of the square the random walk
/// is confined to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub kind: TrajectoryKind,
    /// Seconds.
    pub duration: f64,
    /// Seconds between snapshots.
    pub sampling_period: f64,
    /// Meters per second.
    pub speed: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_extent")]
    pub extent: f64,
    /// Heading diffusion of the random walk, rad / sqrt(s).
    #[serde(default = "default_turn_rate")]
    pub turn_rate: f64,
}

fn default_extent() -> f64 {
    20.0
}

fn default_turn_rate() -> f64 {
    0.5
}

impl TrajectoryConfig {
    pub fn new(kind: TrajectoryKind, duration: f64, sampling_period: f64, speed: f64, seed: u64) -> Self {
        Self {
            kind,
            duration,
            sampling_period,
            speed,
            seed,
            center: [0.0, 0.0],
            extent: default_extent(),
            turn_rate: default_turn_rate(),
        }
    }

    pub fn with_extent(mut self, extent: f64) -> Self {
        self.extent = extent;
        self
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_turn_rate(mut self, turn_rate: f64) -> Self {
        self.turn_rate = turn_rate;
        self
    }

    /// Number of snapshots, `duration / sampling_period` rounded when within
    /// 1e-9 of an integer and floored otherwise.
    pub fn sample_count(&self) -> usize {
        let ratio = self.duration / self.sampling_period;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.floor() as usize
        }
    }

    /// Time for one loop of the closed curves (circle, figure-eight).
    pub fn revolution_period(&self) -> Option<f64> {
        match self.kind {
            TrajectoryKind::RandomWalk => None,
            TrajectoryKind::Circle => Some(std::f64::consts::TAU * self.extent / self.speed),
            TrajectoryKind::FigureEight => {
                Some(std::f64::consts::TAU * self.extent * std::f64::consts::SQRT_2 / self.speed)
            }
        }
    }

    /// Closed-form position of the parametric kinds at time `t`.
    pub fn parametric_position(&self, t: f64) -> Option<[f64; 2]> {
        let [cx, cy] = self.center;
        let a = self.extent;
        match self.kind {
            TrajectoryKind::RandomWalk => None,
            TrajectoryKind::Circle => {
                let w = self.speed / a;
                Some([cx + a * (w * t).cos(), cy + a * (w * t).sin()])
            }
            TrajectoryKind::FigureEight => {
                // speed peaks at a*w*sqrt(2) where both cosines are 1
                let w = self.speed / (a * std::f64::consts::SQRT_2);
                Some([cx + a * (w * t).sin(), cy + 0.5 * a * (2.0 * w * t).sin()])
            }
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(SynthError::InvalidConfig(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.sampling_period > 0.0) || !self.sampling_period.is_finite() {
            return Err(SynthError::InvalidConfig(format!(
                "sampling period must be positive, got {}",
                self.sampling_period
            )));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(SynthError::InvalidConfig(format!("speed must be nonnegative, got {}", self.speed)));
        }
        if self.kind != TrajectoryKind::RandomWalk && self.speed == 0.0 {
            return Err(SynthError::InvalidConfig("closed trajectories need a positive speed".into()));
        }
        if !(self.extent > 0.0) {
            return Err(SynthError::InvalidConfig(format!("extent must be positive, got {}", self.extent)));
        }
        if self.sample_count() == 0 {
            return Err(SynthError::InvalidConfig("duration shorter than one sampling period".into()));
        }
        Ok(())
    }
}

/// Sampled 2-D path with uniform timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<[f64; 2]>,
    pub timestamps: Vec<f64>,
    pub sampling_period: f64,
    pub max_speed: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<Trajectory, SynthError> {
    cfg.validate()?;
    let n = cfg.sample_count();
    let ts = cfg.sampling_period;
    let timestamps: Vec<f64> = (0..n).map(|k| k as f64 * ts).collect();
    let positions = match cfg.kind {
        TrajectoryKind::Circle | TrajectoryKind::FigureEight => timestamps
            .iter()
            .map(|&t| cfg.parametric_position(t).expect("parametric kind"))
            .collect(),
        TrajectoryKind::RandomWalk => random_walk(cfg, n),
    };
    Ok(Trajectory { positions, timestamps, sampling_period: ts, max_speed: cfg.speed })
}

/// Constant-speed walk with Brownian heading, reflected at the walls of a
/// square of half-width `extent` around `center`.
fn random_walk(cfg: &TrajectoryConfig, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = cfg.speed * cfg.sampling_period;
    let sigma = cfg.turn_rate * cfg.sampling_period.sqrt();
    let lo = [cfg.center[0] - cfg.extent, cfg.center[1] - cfg.extent];
    let hi = [cfg.center[0] + cfg.extent, cfg.center[1] + cfg.extent];

    let mut heading: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let mut pos = cfg.center;
    let mut out = Vec::with_capacity(n);
    out.push(pos);
    for _ in 1..n {
        let noise: f64 = rng.sample(StandardNormal);
        heading += sigma * noise;
        let mut next = [pos[0] + step * heading.cos(), pos[1] + step * heading.sin()];
        // mirror across whichever wall was crossed; the mirrored point is never
        // farther from `pos` than the unreflected one
        if next[0] < lo[0] || next[0] > hi[0] {
            let wall = if next[0] < lo[0] { lo[0] } else { hi[0] };
            next[0] = (2.0 * wall - next[0]).clamp(lo[0], hi[0]);
            heading = std::f64::consts::PI - heading;
        }
        if next[1] < lo[1] || next[1] > hi[1] {
            let wall = if next[1] < lo[1] { lo[1] } else { hi[1] };
            next[1] = (2.0 * wall - next[1]).clamp(lo[1], hi[1]);
            heading = -heading;
        }
        pos = next;
        out.push(pos);
    }
    out
}

//! Propagation scene: base-station array, carrier grid and point scatterers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform planar array. Azimuth elements run horizontally, zenith elements
/// vertically; each element carries `polarization_count` ports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub azimuth_count: usize,
    pub zenith_count: usize,
    pub polarization_count: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing_wavelengths: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self { azimuth_count: 8, zenith_count: 4, polarization_count: 2, spacing_wavelengths: 0.5 }
    }
}

impl ArrayGeometry {
    pub fn port_count(&self) -> usize {
        self.azimuth_count * self.zenith_count * self.polarization_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Meters, (x, y, z).
    pub position: [f64; 3],
    /// Complex reflection coefficient per polarization, stored as `[re, im]`.
    pub reflection: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub array: ArrayGeometry,
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz.
    pub bandwidth: f64,
    pub subcarrier_count: usize,
    /// Array phase center, meters.
    pub bs_position: [f64; 3],
    /// Broadside direction in the horizontal plane, radians from +x.
    pub bs_azimuth: f64,
    /// Height of the user terminal above the ground plane, meters.
    pub ue_height: f64,
    pub los: bool,
    /// Line-of-sight gain per polarization, `[re, im]`.
    pub los_gain: Vec<[f64; 2]>,
    pub scatterers: Vec<Scatterer>,
    /// Per-element SNR in dB; `None` disables receiver noise.
    pub snr_db: Option<f64>,
}

impl Default for Scene {
    /// 8x4 dual-polarized array at 2.5 GHz, 288 subcarriers over 10 MHz,
    /// mounted 25 m high and 60 m west of the origin, facing east, with no
    /// scatterers and 20 dB SNR.
    fn default() -> Self {
        Self {
            array: ArrayGeometry::default(),
            carrier_frequency: 2.5e9,
            bandwidth: 10e6,
            subcarrier_count: 288,
            bs_position: [-60.0, 0.0, 25.0],
            bs_azimuth: 0.0,
            ue_height: 1.5,
            los: true,
            los_gain: vec![[1.0, 0.0], [0.6, 0.3]],
            scatterers: Vec::new(),
            snr_db: Some(20.0),
        }
    }
}

impl Scene {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.subcarrier_count as f64
    }

    /// Subcarrier frequencies relative to the carrier, symmetric around 0.
    pub fn subcarrier_offsets(&self) -> Vec<f64> {
        let df = self.subcarrier_spacing();
        let mid = (self.subcarrier_count as f64 - 1.0) / 2.0;
        (0..self.subcarrier_count).map(|k| (k as f64 - mid) * df).collect()
    }

    /// Adds `count` scatterers uniformly in the box `[center ± half_width]` at
    /// heights in `[0, max_height]`, with unit-mean-power complex Gaussian
    /// reflection coefficients scaled by `strength`.
    pub fn with_random_scatterers(
        mut self,
        count: usize,
        center: [f64; 2],
        half_width: f64,
        max_height: f64,
        strength: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pols = self.array.polarization_count;
        for _ in 0..count {
            let position = [
                center[0] + half_width * (2.0 * rng.random::<f64>() - 1.0),
                center[1] + half_width * (2.0 * rng.random::<f64>() - 1.0),
                max_height * rng.random::<f64>(),
            ];
            let reflection = (0..pols)
                .map(|_| {
                    let (a, b): (f64, f64) = (rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal));
                    [strength * a / std::f64::consts::SQRT_2, strength * b / std::f64::consts::SQRT_2]
                })
                .collect();
            self.scatterers.push(Scatterer { position, reflection });
        }
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let a = &self.array;
        if a.azimuth_count == 0 || a.zenith_count == 0 || a.polarization_count == 0 {
            return Err(SynthError::InvalidConfig("array dimensions must be positive".into()));
        }
        if self.subcarrier_count == 0 || !(self.bandwidth > 0.0) || !(self.carrier_frequency > 0.0) {
            return Err(SynthError::InvalidConfig("carrier grid must be positive".into()));
        }
        if self.los && self.los_gain.len() != a.polarization_count {
            return Err(SynthError::InvalidConfig(format!(
                "los_gain has {} entries for {} polarizations",
                self.los_gain.len(),
                a.polarization_count
            )));
        }
        if let Some(s) = self.scatterers.iter().find(|s| s.reflection.len() != a.polarization_count) {
            return Err(SynthError::InvalidConfig(format!(
                "scatterer at {:?} has {} reflection coefficients",
                s.position,
                s.reflection.len()
            )));
        }
        if !self.los && self.scatterers.is_empty() {
            return Err(SynthError::EmptyScene);
        }
        Ok(())
    }

    /// Propagation paths reaching a terminal at ground position `ue`.
    pub(crate) fn paths(&self, ue: [f64; 2]) -> Vec<Path> {
        let ue3 = [ue[0], ue[1], self.ue_height];
        let lambda = self.wavelength();
        let mut out = Vec::with_capacity(self.scatterers.len() + 1);
        if self.los {
            let len = norm(sub(ue3, self.bs_position));
            let amp = lambda / (4.0 * std::f64::consts::PI * len);
            out.push(Path {
                arrival: unit(sub(ue3, self.bs_position)),
                length: len,
                gains: self.los_gain.iter().map(|g| Complex64::new(g[0], g[1]) * amp).collect(),
            });
        }
        for s in &self.scatterers {
            let leg_bs = norm(sub(s.position, self.bs_position));
            let leg_ue = norm(sub(ue3, s.position));
            let len = leg_bs + leg_ue;
            let amp = lambda / (4.0 * std::f64::consts::PI * len);
            out.push(Path {
                arrival: unit(sub(s.position, self.bs_position)),
                length: len,
                gains: s.reflection.iter().map(|g| Complex64::new(g[0], g[1]) * amp).collect(),
            });
        }
        out
    }

    /// Horizontal and vertical array axes.
    pub(crate) fn array_axes(&self) -> ([f64; 3], [f64; 3]) {
        let (s, c) = self.bs_azimuth.sin_cos();
        ([-s, c, 0.0], [0.0, 0.0, 1.0])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Path {
    /// Unit vector from the array toward the last bounce (or the terminal).
    pub arrival: [f64; 3],
    /// Total propagation distance, meters.
    pub length: f64,
    pub gains: Vec<Complex64>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

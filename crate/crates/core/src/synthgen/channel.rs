//! Snapshot synthesis: coherent sum of geometric paths plus hardware impairments.

use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scene::{dot3, Scene, SPEED_OF_LIGHT};
use super::trajectory::Trajectory;
use super::{CsiDataset, SynthError};
use crate::scalar::Scalar;

/// Receiver-side corruptions applied to each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentConfig {
    /// Uniform random phase common to the whole snapshot.
    #[serde(default)]
    pub global_phase_per_snapshot: bool,
    /// Timing offset drawn uniformly in `[-range, range]` seconds per snapshot.
    #[serde(default)]
    pub timing_offset_range: f64,
    /// Fixed random phase per antenna port, identical for every snapshot.
    #[serde(default)]
    pub static_per_antenna_phase: bool,
    /// Amplitude scale drawn uniformly in `[-jitter/2, jitter/2]` dB per snapshot.
    #[serde(default)]
    pub gain_jitter_db: f64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            global_phase_per_snapshot: true,
            timing_offset_range: 1e-6,
            static_per_antenna_phase: true,
            gain_jitter_db: 1.0,
        }
    }
}

impl ImpairmentConfig {
    pub fn none() -> Self {
        Self {
            global_phase_per_snapshot: false,
            timing_offset_range: 0.0,
            static_per_antenna_phase: false,
            gain_jitter_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.timing_offset_range >= 0.0) {
            return Err(SynthError::InvalidConfig("timing_offset_range must be >= 0".into()));
        }
        if !(self.gain_jitter_db >= 0.0) {
            return Err(SynthError::InvalidConfig("gain_jitter_db must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-snapshot random draws, derived from `(seed, index)` only.
struct SnapshotDraws {
    global_phase: f64,
    timing_offset: f64,
    gain_db: f64,
    rng: ChaCha8Rng,
}

fn snapshot_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draws(seed: u64, index: usize, imp: &ImpairmentConfig) -> SnapshotDraws {
    let mut rng = snapshot_rng(seed, index as u64);
    // always draw in the same order so toggling one impairment leaves the others unchanged
    let u_phase: f64 = rng.random();
    let u_time: f64 = rng.random();
    let u_gain: f64 = rng.random();
    SnapshotDraws {
        global_phase: u_phase * std::f64::consts::TAU,
        timing_offset: (2.0 * u_time - 1.0) * imp.timing_offset_range,
        gain_db: (u_gain - 0.5) * imp.gain_jitter_db,
        rng,
    }
}

/// Clean channel `h[pol][zen][azi][f]` at ground position `ue`.
pub(crate) fn clean_snapshot(scene: &Scene, ue: [f64; 2]) -> Vec<Complex64> {
    let a = &scene.array;
    let (pols, mz, ma, nf) = (a.polarization_count, a.zenith_count, a.azimuth_count, scene.subcarrier_count);
    let offsets = scene.subcarrier_offsets();
    let (h_axis, v_axis) = scene.array_axes();
    let spacing = a.spacing_wavelengths;
    let tau_2pi = std::f64::consts::TAU;

    let mut out = vec![Complex64::new(0.0, 0.0); pols * mz * ma * nf];
    let mut ramp = vec![Complex64::new(0.0, 0.0); nf];
    let mut steer = vec![Complex64::new(0.0, 0.0); mz * ma];
    for path in scene.paths(ue) {
        let delay = path.length / SPEED_OF_LIGHT;
        // carrier phase reduced modulo one cycle before scaling
        let carrier_cycles = (scene.carrier_frequency * delay).fract();
        let carrier = Complex64::from_polar(1.0, -tau_2pi * carrier_cycles);
        for (r, &f) in ramp.iter_mut().zip(&offsets) {
            *r = carrier * Complex64::from_polar(1.0, -tau_2pi * f * delay);
        }
        let uh = dot3(path.arrival, h_axis);
        let uv = dot3(path.arrival, v_axis);
        for m in 0..mz {
            for n in 0..ma {
                steer[m * ma + n] = Complex64::from_polar(1.0, tau_2pi * spacing * (n as f64 * uh + m as f64 * uv));
            }
        }
        for (p, gain) in path.gains.iter().enumerate() {
            for (e, s) in steer.iter().enumerate() {
                let coef = gain * s;
                let base = (p * mz * ma + e) * nf;
                for (dst, r) in out[base..base + nf].iter_mut().zip(&ramp) {
                    *dst += coef * r;
                }
            }
        }
    }
    out
}

fn static_antenna_phases(seed: u64, ports: usize) -> Vec<Complex64> {
    let mut rng = snapshot_rng(seed, u64::MAX);
    (0..ports)
        .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
        .collect()
}

/// Synthesizes one impaired snapshot per trajectory sample.
///
/// Each snapshot depends only on the position, the scene and draws seeded by
/// `(seed, index)`, so the result does not depend on generation order.
pub fn synthesize_csi<T: Scalar>(
    trajectory: &Trajectory,
    scene: &Scene,
    impairments: &ImpairmentConfig,
    seed: u64,
) -> Result<CsiDataset<T>, SynthError> {
    scene.validate()?;
    impairments.validate()?;
    let a = &scene.array;
    let shape = [a.polarization_count, a.zenith_count, a.azimuth_count, scene.subcarrier_count];
    let per = shape.iter().product::<usize>();
    let nf = scene.subcarrier_count;
    let offsets = scene.subcarrier_offsets();
    let antenna = if impairments.static_per_antenna_phase {
        Some(static_antenna_phases(seed, a.port_count()))
    } else {
        None
    };

    let mut samples = Vec::with_capacity(per * trajectory.len());
    for (index, &pos) in trajectory.positions.iter().enumerate() {
        let mut h = clean_snapshot(scene, pos);
        let mut d = draws(seed, index, impairments);

        let mut common = Complex64::new(10f64.powf(d.gain_db / 20.0), 0.0);
        if impairments.global_phase_per_snapshot {
            common *= Complex64::from_polar(1.0, d.global_phase);
        }
        if let Some(ph) = &antenna {
            for (port, chunk) in h.chunks_mut(nf).enumerate() {
                let c = ph[port] * common;
                chunk.iter_mut().for_each(|x| *x *= c);
            }
        } else {
            h.iter_mut().for_each(|x| *x *= common);
        }
        if impairments.timing_offset_range > 0.0 {
            let ramp: Vec<Complex64> = offsets
                .iter()
                .map(|&f| Complex64::from_polar(1.0, -std::f64::consts::TAU * f * d.timing_offset))
                .collect();
            for chunk in h.chunks_mut(nf) {
                chunk.iter_mut().zip(&ramp).for_each(|(x, r)| *x *= r);
            }
        }
        if let Some(snr) = scene.snr_db {
            let power = h.iter().map(|x| x.norm_sqr()).sum::<f64>() / per as f64;
            let sigma = (power / 10f64.powf(snr / 10.0) / 2.0).sqrt();
            for x in h.iter_mut() {
                let re: f64 = d.rng.sample(StandardNormal);
                let im: f64 = d.rng.sample(StandardNormal);
                *x += Complex64::new(re, im) * sigma;
            }
        }
        samples.extend(h.into_iter().map(|x| Complex::new(T::lit(x.re), T::lit(x.im))));
    }

    let dataset = CsiDataset {
        samples,
        shape,
        timestamps: trajectory.timestamps.clone(),
        positions: trajectory.positions.clone(),
        scene: scene.clone(),
        seed,
    };
    dataset.validate()?;
    Ok(dataset)
}

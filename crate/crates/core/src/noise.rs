//! Space-time white noise on the grid and the stochastic convolution `V`.
//!
//! Increments `ξ[k][i] ~ N(0, dt·dx)` come from ChaCha8 keyed by
//! `(master seed, replica)` with the time row `k` as the stream id, so any
//! row of any replica can be regenerated independently of all others.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Field, SnapshotPlan, SpaceTimeGrid};
use crate::scheme::{Boundary, HeatStepper};

/// Streams at or above this id are reserved for auxiliary samplers so they
/// never collide with the per-row noise streams.
const AUX_STREAM_BASE: u64 = 1 << 62;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit ChaCha key for one replica of one master seed.
pub fn replica_key(master: u64, replica: u64) -> [u8; 32] {
    let mut state = master ^ replica.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Generator for stream `stream` of replica `replica`.
pub fn replica_rng(master: u64, replica: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(replica_key(master, replica));
    rng.set_stream(stream);
    rng
}

/// Auxiliary generator (bootstrap, spectral sampler, …) for a replica.
pub fn aux_rng(master: u64, replica: u64, purpose: u64) -> ChaCha8Rng {
    replica_rng(master, replica, AUX_STREAM_BASE + purpose)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    Seeded {
        master: u64,
        replica: u64,
        /// Rows at or after this step are zero (adaptedness checks).
        truncate_from: Option<usize>,
    },
    Zero,
    /// Row-major `nt × nx` increments supplied by the caller.
    Stored(Arc<Vec<f64>>),
}

/// One realization of the white-noise increments on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    grid: SpaceTimeGrid,
    source: NoiseSource,
}

/// Noise of replica 0 for `seed`.
pub fn sample_noise(grid: SpaceTimeGrid, seed: u64) -> NoiseRealization {
    NoiseRealization::seeded(grid, seed, 0)
}

impl NoiseRealization {
    pub fn seeded(grid: SpaceTimeGrid, master: u64, replica: u64) -> Self {
        Self { grid, source: NoiseSource::Seeded { master, replica, truncate_from: None } }
    }

    pub fn zero(grid: SpaceTimeGrid) -> Self {
        Self { grid, source: NoiseSource::Zero }
    }

    pub fn stored(grid: SpaceTimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.nt * grid.nx {
            return Err(Error::GridMismatch(format!(
                "stored noise has {} entries, grid needs {}",
                increments.len(),
                grid.nt * grid.nx
            )));
        }
        Ok(Self { grid, source: NoiseSource::Stored(Arc::new(increments)) })
    }

    /// Same realization with every row from `step` on set to zero.
    pub fn truncated(&self, step: usize) -> Self {
        let source = match &self.source {
            NoiseSource::Seeded { master, replica, .. } => {
                NoiseSource::Seeded { master: *master, replica: *replica, truncate_from: Some(step) }
            }
            NoiseSource::Stored(v) => {
                let mut w = v.as_ref().clone();
                let start = (step * self.grid.nx).min(w.len());
                w[start..].iter_mut().for_each(|x| *x = 0.0);
                NoiseSource::Stored(Arc::new(w))
            }
            NoiseSource::Zero => NoiseSource::Zero,
        };
        Self { grid: self.grid, source }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn source(&self) -> &NoiseSource {
        &self.source
    }

    /// Writes `scale · ξ[k][·]` into `out`.
    pub fn scaled_row(&self, k: usize, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.grid.nx);
        match &self.source {
            NoiseSource::Seeded { master, replica, truncate_from } => {
                if truncate_from.is_some_and(|t| k >= t) {
                    out.iter_mut().for_each(|x| *x = 0.0);
                    return;
                }
                let sd = scale * (self.grid.dt * self.grid.dx).sqrt();
                let mut rng = replica_rng(*master, *replica, k as u64);
                for x in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = sd * z;
                }
            }
            NoiseSource::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            NoiseSource::Stored(v) => {
                let nx = self.grid.nx;
                for (o, &x) in out.iter_mut().zip(&v[k * nx..(k + 1) * nx]) {
                    *o = scale * x;
                }
            }
        }
    }

    /// Increments `ξ[k][·]`.
    pub fn row(&self, k: usize, out: &mut [f64]) {
        self.scaled_row(k, 1.0, out);
    }

    /// Forcing `ξ[k][·] / dx` entering the explicit update.
    pub fn forcing_row(&self, k: usize, out: &mut [f64]) {
        self.scaled_row(k, 1.0 / self.grid.dx, out);
    }

    /// All increments, row-major.
    pub fn materialize(&self) -> Vec<f64> {
        let nx = self.grid.nx;
        let mut out = vec![0.0; self.grid.nt * nx];
        for (k, row) in out.chunks_exact_mut(nx).enumerate() {
            self.row(k, row);
        }
        out
    }
}

/// Runs the zero-drift, zero-initial-data scheme driven by `noise`.
pub fn stochastic_convolution(
    noise: &NoiseRealization,
    stepper: &HeatStepper,
    plan: &SnapshotPlan,
) -> Result<Field> {
    let grid = noise.grid();
    if stepper.nx() != grid.nx {
        return Err(Error::GridMismatch("stepper and noise grids differ".into()));
    }
    let nx = grid.nx;
    let mut v = vec![0.0; nx];
    let mut forcing = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    let mut field = Field::new(nx, grid.dt);
    if plan.keeps(0, grid.nt) {
        field.push(0, &v);
    }
    for k in 0..grid.nt {
        noise.forcing_row(k, &mut forcing);
        stepper.advance(&mut v, &forcing, &mut scratch);
        if plan.keeps(k + 1, grid.nt) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step: k + 1 });
            }
            field.push(k + 1, &v);
        }
    }
    Ok(field)
}

/// Variance of the discrete `V` after `steps` steps at any node, computed
/// by stepping a delta: `(dt/dx) Σ_{j<steps} Σ_i (A^j)_{x0,i}²`.
pub fn discrete_variance_by_stepping(stepper: &HeatStepper, grid: &SpaceTimeGrid, node: usize, steps: usize) -> f64 {
    let nx = stepper.nx();
    let mut x = vec![0.0; nx];
    x[node] = 1.0;
    let mut scratch = vec![0.0; nx];
    let mut acc = 0.0;
    for _ in 0..steps {
        // implicit scheme applies A to the forcing as well
        if stepper.scheme() == crate::scheme::Scheme::SemiImplicitLinear {
            stepper.advance_free(&mut x, &mut scratch);
        }
        acc += x.iter().map(|v| v * v).sum::<f64>();
        if stepper.scheme() == crate::scheme::Scheme::ExplicitEuler {
            stepper.advance_free(&mut x, &mut scratch);
        }
    }
    acc * grid.dt / grid.dx
}

/// Exact-law sampler of the zero-drift linear scheme on a periodic grid.
///
/// The scheme is diagonal in the discrete Fourier basis: mode `m` evolves as
/// the AR(1) recursion `c ← a_m c + η`, so its value after `j` further steps
/// is `a_m^j c + N(0, nx·(dt/dx)·Σ_{l<j} a_m^{2l})` (split evenly between
/// real and imaginary parts away from the self-conjugate modes). Sampling
/// the modes and inverting the transform yields fields with exactly the law
/// of [`stochastic_convolution`] at a cost independent of the step count.
pub struct SpectralConvolution {
    nx: usize,
    noise_var: f64,
    /// `a_m` for `m = 0..nx`.
    multipliers: Vec<f64>,
    /// Extra factor `a_m` applied to the forcing (1 explicit, `a_m` implicit).
    forcing_gain: Vec<f64>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralConvolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralConvolution").field("nx", &self.nx).field("noise_var", &self.noise_var).finish()
    }
}

impl SpectralConvolution {
    pub fn new(stepper: &HeatStepper, grid: &SpaceTimeGrid) -> Result<Self> {
        if stepper.boundary() != Boundary::Periodic {
            return Err(Error::invalid("spectral sampler needs a periodic grid"));
        }
        if stepper.nx() != grid.nx {
            return Err(Error::GridMismatch("stepper and grid differ".into()));
        }
        let nx = grid.nx;
        let multipliers: Vec<f64> = (0..nx)
            .map(|m| stepper.mode_multiplier(2.0 * std::f64::consts::PI * m as f64 / nx as f64))
            .collect();
        let forcing_gain = match stepper.scheme() {
            crate::scheme::Scheme::ExplicitEuler => vec![1.0; nx],
            crate::scheme::Scheme::SemiImplicitLinear => multipliers.clone(),
        };
        let ifft = FftPlanner::new().plan_fft_inverse(nx);
        Ok(Self { nx, noise_var: grid.dt / grid.dx, multipliers, forcing_gain, ifft })
    }

    /// `Σ_{l<j} a^{2l}`, exact for `|a| = 1`.
    fn geometric(a: f64, j: usize) -> f64 {
        let a2 = a * a;
        if (1.0 - a2).abs() < 1e-15 {
            j as f64
        } else {
            (1.0 - a2.powi(j as i32)) / (1.0 - a2)
        }
    }

    /// Variance of mode `m` accumulated over `j` steps, per unit of `nx`.
    fn mode_var(&self, m: usize, j: usize) -> f64 {
        let g = self.forcing_gain[m];
        self.noise_var * g * g * Self::geometric(self.multipliers[m], j)
    }

    /// Pointwise variance of `V` after `steps` steps.
    pub fn variance(&self, steps: usize) -> f64 {
        (0..self.nx).map(|m| self.mode_var(m, steps)).sum::<f64>() / self.nx as f64
    }

    /// Samples `V` at the increasing step indices `steps` along one path.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R, steps: &[usize]) -> Result<Vec<Vec<f64>>> {
        if steps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("snapshot steps must be nondecreasing"));
        }
        let nx = self.nx;
        let n = nx as f64;
        let mut modes = vec![Complex64::new(0.0, 0.0); nx];
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        let mut out = Vec::with_capacity(steps.len());
        let mut current = 0usize;
        for &target in steps {
            let j = target - current;
            if j > 0 {
                for m in 0..=nx / 2 {
                    let a = self.multipliers[m].powi(j as i32);
                    let var = n * self.mode_var(m, j);
                    let self_conjugate = m == 0 || 2 * m == nx;
                    if self_conjugate {
                        let z: f64 = rng.sample(StandardNormal);
                        modes[m] = Complex64::new(a * modes[m].re + var.sqrt() * z, 0.0);
                    } else {
                        let sd = (0.5 * var).sqrt();
                        let zr: f64 = rng.sample(StandardNormal);
                        let zi: f64 = rng.sample(StandardNormal);
                        modes[m] = modes[m] * a + Complex64::new(sd * zr, sd * zi);
                        modes[nx - m] = modes[m].conj();
                    }
                }
                current = target;
            }
            buf.copy_from_slice(&modes);
            self.ifft.process(&mut buf);
            out.push(buf.iter().map(|c| c.re / n).collect());
        }
        Ok(out)
    }
}

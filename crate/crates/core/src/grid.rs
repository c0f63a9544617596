use crate::error::{Error, Result};
use crate::kernel::DomainSpec;

/// Uniform discretization of `[0, T] × D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub nx: usize,
    pub dx: f64,
    pub nt: usize,
    pub dt: f64,
}

impl SpaceTimeGrid {
    pub fn new(nx: usize, dx: f64, nt: usize, dt: f64) -> Result<Self> {
        if nx < 3 {
            return Err(Error::invalid(format!("need at least 3 spatial nodes, got {nx}")));
        }
        if !(dx > 0.0 && dt > 0.0 && dx.is_finite() && dt.is_finite()) {
            return Err(Error::invalid(format!("spacings must be positive, got dx={dx}, dt={dt}")));
        }
        Ok(Self { nx, dx, nt, dt })
    }

    /// Grid with `nx` nodes on `domain`, `dt = ratio · dx²`, covering `horizon`.
    pub fn for_domain(domain: &DomainSpec, nx: usize, ratio: f64, horizon: f64) -> Result<Self> {
        if !(ratio > 0.0) {
            return Err(Error::invalid(format!("dt/dx² ratio must be positive, got {ratio}")));
        }
        let dx = domain.length() / nx as f64;
        let dt = ratio * dx * dx;
        let nt = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
        Self::new(nx, dx, nt, dt)
    }

    pub fn horizon(&self) -> f64 {
        self.nt as f64 * self.dt
    }

    /// `dt / dx²`.
    pub fn ratio(&self) -> f64 {
        self.dt / (self.dx * self.dx)
    }

    /// Nearest step index to time `t`, clamped to `[0, nt]`.
    pub fn step_of(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.nt)
    }

    pub fn time_of(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn check_domain(&self, domain: &DomainSpec) -> Result<()> {
        let len = self.nx as f64 * self.dx;
        if (len - domain.length()).abs() > 1e-9 * domain.length() {
            return Err(Error::GridMismatch(format!(
                "grid covers length {len} but domain has length {}",
                domain.length()
            )));
        }
        Ok(())
    }

    /// The explicit scheme is stable and order preserving iff `dt/dx² ≤ 1`.
    pub fn check_cfl(&self) -> Result<()> {
        if self.ratio() > 1.0 + 1e-12 {
            return Err(Error::Stability(format!("dt/dx² = {} exceeds 1", self.ratio())));
        }
        Ok(())
    }
}

/// Space-time array `values[s][i]` at the stored snapshot steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    nx: usize,
    dt: f64,
    steps: Vec<usize>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(nx: usize, dt: f64) -> Self {
        Self { nx, dt, steps: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, step: usize, row: &[f64]) {
        debug_assert_eq!(row.len(), self.nx);
        self.steps.push(step);
        self.values.extend_from_slice(row);
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn time(&self, s: usize) -> f64 {
        self.steps[s] as f64 * self.dt
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.nx..(s + 1) * self.nx]
    }

    /// Snapshot stored for step `k`, if any.
    pub fn at_step(&self, k: usize) -> Option<&[f64]> {
        self.steps.binary_search(&k).ok().map(|s| self.row(s))
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.steps.iter().copied().zip(self.values.chunks_exact(self.nx))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Node-wise `self - other`; both fields must share snapshots.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        if self.steps != other.steps || self.nx != other.nx {
            return Err(Error::GridMismatch("fields have different snapshot layouts".into()));
        }
        Ok(Field {
            nx: self.nx,
            dt: self.dt,
            steps: self.steps.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Which steps a solve keeps in memory.
#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotPlan {
    Every(usize),
    Steps(Vec<usize>),
    FinalOnly,
}

impl SnapshotPlan {
    pub fn keeps(&self, k: usize, nt: usize) -> bool {
        match self {
            SnapshotPlan::Every(stride) => k % stride.max(&1) == 0 || k == nt,
            SnapshotPlan::Steps(steps) => steps.contains(&k),
            SnapshotPlan::FinalOnly => k == nt,
        }
    }
}

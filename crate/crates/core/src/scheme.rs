//! The linear part of the time stepper: one step of the discrete heat
//! semigroup with generator `½Δ_h`, periodic or reflecting.
//!
//! Every array the solver carries (initial-data part, noise part, drift
//! part) is advanced by the same linear map
//!
//! ```text
//! explicit      : X ← X + (r/2) Δ_h X + F
//! semi-implicit : X ← (I - (r/2) Δ_h)^{-1} (X + F)
//! ```
//!
//! with `r = dt/dx²` and `F` the per-step forcing, so sums of the arrays
//! evolve exactly like the full solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::{DomainKind, DomainSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExplicitEuler,
    SemiImplicitLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Neumann,
}

impl Boundary {
    pub fn of(domain: &DomainSpec) -> Self {
        match domain.kind {
            DomainKind::NeumannUnit => Boundary::Neumann,
            _ => Boundary::Periodic,
        }
    }
}

/// Precomputed LU sweep for the constant-coefficient tridiagonal matrix
/// with diagonal `d` (interior), `d_end` (first/last row) and off-diagonal `e`.
#[derive(Debug, Clone)]
struct Tridiagonal {
    e: f64,
    /// Modified super-diagonal of the forward sweep.
    c: Vec<f64>,
    /// Inverse pivots.
    inv: Vec<f64>,
}

impl Tridiagonal {
    fn new(n: usize, d: f64, d_end: f64, e: f64) -> Self {
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let diag = |i: usize| if i == 0 || i + 1 == n { d_end } else { d };
        let mut prev_c = 0.0;
        for i in 0..n {
            let piv = diag(i) - e * prev_c;
            inv[i] = 1.0 / piv;
            c[i] = e * inv[i];
            prev_c = c[i];
        }
        Self { e, c, inv }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] *= self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - self.e * x[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c[i] * x[i + 1];
        }
    }
}

/// Cyclic solve by Sherman–Morrison on top of a plain tridiagonal factor.
#[derive(Debug, Clone)]
struct CyclicTridiagonal {
    base: Tridiagonal,
    /// `z = B^{-1} w` for the correction vector `w`.
    z: Vec<f64>,
    /// `vᵀz` correction denominator `1 + vᵀz`.
    denom: f64,
    gamma: f64,
    e: f64,
}

impl CyclicTridiagonal {
    fn new(n: usize, d: f64, e: f64) -> Self {
        // A = B + w vᵀ with w = (γ, 0, …, 0, e), v = (1, 0, …, 0, e/γ)
        let gamma = -d;
        let mut base = Tridiagonal::new(n, d, d, e);
        // first and last diagonal entries of B are adjusted
        let mut diag = vec![d; n];
        diag[0] = d - gamma;
        diag[n - 1] = d - e * e / gamma;
        let mut c = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let piv = diag[i] - e * prev_c;
            inv[i] = 1.0 / piv;
            c[i] = e * inv[i];
            prev_c = c[i];
        }
        base.c = c;
        base.inv = inv;
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = e;
        base.solve_in_place(&mut z);
        let denom = 1.0 + z[0] + e * z[n - 1] / gamma;
        Self { base, z, denom, gamma, e }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        self.base.solve_in_place(x);
        let n = x.len();
        let f = (x[0] + self.e * x[n - 1] / self.gamma) / self.denom;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= f * zi;
        }
    }
}

#[derive(Debug, Clone)]
enum Implicit {
    None,
    Neumann(Tridiagonal),
    Periodic(CyclicTridiagonal),
}

/// One step of the discrete heat semigroup on a fixed grid.
#[derive(Debug, Clone)]
pub struct HeatStepper {
    nx: usize,
    half_r: f64,
    boundary: Boundary,
    scheme: Scheme,
    implicit: Implicit,
}

impl HeatStepper {
    pub fn new(domain: &DomainSpec, grid: &SpaceTimeGrid, scheme: Scheme) -> Result<Self> {
        grid.check_domain(domain)?;
        Self::from_ratio(grid.nx, grid.ratio(), Boundary::of(domain), scheme)
    }

    pub fn from_ratio(nx: usize, r: f64, boundary: Boundary, scheme: Scheme) -> Result<Self> {
        if nx < 3 {
            return Err(Error::invalid("heat stepper needs at least 3 nodes"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::invalid(format!("dt/dx² must be positive, got {r}")));
        }
        if scheme == Scheme::ExplicitEuler && r > 1.0 + 1e-12 {
            return Err(Error::Stability(format!("explicit scheme needs dt/dx² ≤ 1, got {r}")));
        }
        let half_r = 0.5 * r;
        let implicit = match (scheme, boundary) {
            (Scheme::ExplicitEuler, _) => Implicit::None,
            (Scheme::SemiImplicitLinear, Boundary::Neumann) => {
                Implicit::Neumann(Tridiagonal::new(nx, 1.0 + r, 1.0 + half_r, -half_r))
            }
            (Scheme::SemiImplicitLinear, Boundary::Periodic) => {
                Implicit::Periodic(CyclicTridiagonal::new(nx, 1.0 + r, -half_r))
            }
        };
        Ok(Self { nx, half_r, boundary, scheme, implicit })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// `dt/dx²`.
    pub fn ratio(&self) -> f64 {
        2.0 * self.half_r
    }

    /// Multiplier of the discrete Fourier/cosine mode with symbol
    /// `1 - cos θ` (`θ = 2πm/nx` periodic, `θ = πm/nx` Neumann).
    pub fn mode_multiplier(&self, theta: f64) -> f64 {
        let lam = 1.0 - theta.cos();
        match self.scheme {
            Scheme::ExplicitEuler => 1.0 - 2.0 * self.half_r * lam,
            Scheme::SemiImplicitLinear => 1.0 / (1.0 + 2.0 * self.half_r * lam),
        }
    }

    /// `dst ← A src`.
    pub fn apply(&self, src: &[f64], dst: &mut [f64]) {
        debug_assert_eq!(src.len(), self.nx);
        debug_assert_eq!(dst.len(), self.nx);
        match self.implicit {
            Implicit::None => self.explicit_into(src, dst),
            Implicit::Neumann(ref m) => {
                dst.copy_from_slice(src);
                m.solve_in_place(dst);
            }
            Implicit::Periodic(ref m) => {
                dst.copy_from_slice(src);
                m.solve_in_place(dst);
            }
        }
    }

    /// `state ← A (state + forcing)` for the implicit scheme and
    /// `state ← A state + forcing` for the explicit one; `scratch` must have
    /// `nx` entries.
    pub fn advance(&self, state: &mut [f64], forcing: &[f64], scratch: &mut [f64]) {
        match self.implicit {
            Implicit::None => {
                self.explicit_into(state, scratch);
                for ((s, &a), &f) in state.iter_mut().zip(scratch.iter()).zip(forcing) {
                    *s = a + f;
                }
            }
            _ => {
                for (s, &f) in state.iter_mut().zip(forcing) {
                    *s += f;
                }
                self.apply_in_place(state);
            }
        }
    }

    /// `state ← A state`.
    pub fn advance_free(&self, state: &mut [f64], scratch: &mut [f64]) {
        match self.implicit {
            Implicit::None => {
                self.explicit_into(state, scratch);
                state.copy_from_slice(scratch);
            }
            _ => self.apply_in_place(state),
        }
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        match self.implicit {
            Implicit::None => unreachable!("explicit scheme needs a scratch buffer"),
            Implicit::Neumann(ref m) => m.solve_in_place(x),
            Implicit::Periodic(ref m) => m.solve_in_place(x),
        }
    }

    /// Written as `x + (r/2)(x₊ - 2x + x₋)` so constants are fixed exactly.
    #[inline]
    fn explicit_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.nx;
        let h = self.half_r;
        let (left_ghost, right_ghost) = match self.boundary {
            Boundary::Periodic => (x[n - 1], x[0]),
            Boundary::Neumann => (x[0], x[n - 1]),
        };
        out[0] = x[0] + h * ((x[1] - x[0]) + (left_ghost - x[0]));
        for i in 1..n - 1 {
            let c = x[i];
            out[i] = c + h * ((x[i + 1] - c) + (x[i - 1] - c));
        }
        out[n - 1] = x[n - 1] + h * ((right_ghost - x[n - 1]) + (x[n - 2] - x[n - 1]));
    }

    /// `A^j e_i` evaluated by stepping; rows of `A^j` equal its columns
    /// because `A` is symmetric.
    pub fn power_applied_to_delta(&self, i: usize, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.nx];
        x[i] = 1.0;
        let mut scratch = vec![0.0; self.nx];
        for _ in 0..j {
            self.advance_free(&mut x, &mut scratch);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn steppers(nx: usize, r: f64) -> Vec<HeatStepper> {
        let mut out = Vec::new();
        for b in [Boundary::Periodic, Boundary::Neumann] {
            for s in [Scheme::ExplicitEuler, Scheme::SemiImplicitLinear] {
                out.push(HeatStepper::from_ratio(nx, r, b, s).unwrap());
            }
        }
        out
    }

    /// Dense matrix of the implicit operator for the oracle check.
    fn dense_lhs(nx: usize, r: f64, b: Boundary) -> Vec<Vec<f64>> {
        let h = 0.5 * r;
        let mut m = vec![vec![0.0; nx]; nx];
        for i in 0..nx {
            m[i][i] = 1.0 + r;
            if i > 0 {
                m[i][i - 1] = -h;
            }
            if i + 1 < nx {
                m[i][i + 1] = -h;
            }
        }
        match b {
            Boundary::Periodic => {
                m[0][nx - 1] = -h;
                m[nx - 1][0] = -h;
            }
            Boundary::Neumann => {
                m[0][0] = 1.0 + h;
                m[nx - 1][nx - 1] = 1.0 + h;
            }
        }
        m
    }

    #[test]
    fn implicit_solve_inverts_dense_matrix() {
        for b in [Boundary::Periodic, Boundary::Neumann] {
            for nx in [3usize, 4, 7, 32] {
                let st = HeatStepper::from_ratio(nx, 2.5, b, Scheme::SemiImplicitLinear).unwrap();
                let rhs: Vec<f64> = (0..nx).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
                let mut x = vec![0.0; nx];
                st.apply(&rhs, &mut x);
                let m = dense_lhs(nx, 2.5, b);
                for i in 0..nx {
                    let back: f64 = (0..nx).map(|j| m[i][j] * x[j]).sum();
                    assert_relative_eq!(back, rhs[i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        for st in steppers(16, 0.25) {
            let src = vec![3.25; 16];
            let mut dst = vec![0.0; 16];
            st.apply(&src, &mut dst);
            for v in dst {
                assert_relative_eq!(v, 3.25, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn explicit_constant_is_bit_exact() {
        for b in [Boundary::Periodic, Boundary::Neumann] {
            let st = HeatStepper::from_ratio(16, 0.3, b, Scheme::ExplicitEuler).unwrap();
            let src = vec![0.1; 16];
            let mut dst = vec![0.0; 16];
            st.apply(&src, &mut dst);
            assert_eq!(src, dst);
        }
    }

    #[test]
    fn mass_is_conserved_and_sup_contracts() {
        for st in steppers(32, 0.5) {
            let src: Vec<f64> = (0..32).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
            let mut dst = vec![0.0; 32];
            st.apply(&src, &mut dst);
            let m0: f64 = src.iter().sum();
            let m1: f64 = dst.iter().sum();
            assert_relative_eq!(m0, m1, epsilon = 1e-12);
            let s0 = src.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let s1 = dst.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(s1 <= s0 + 1e-12);
        }
    }

    #[test]
    fn fourier_modes_are_eigenvectors() {
        let nx = 32;
        for s in [Scheme::ExplicitEuler, Scheme::SemiImplicitLinear] {
            let st = HeatStepper::from_ratio(nx, 0.4, Boundary::Periodic, s).unwrap();
            let theta = 2.0 * std::f64::consts::PI * 3.0 / nx as f64;
            let src: Vec<f64> = (0..nx).map(|i| (theta * i as f64).cos()).collect();
            let mut dst = vec![0.0; nx];
            st.apply(&src, &mut dst);
            let a = st.mode_multiplier(theta);
            for i in 0..nx {
                assert_relative_eq!(dst[i], a * src[i], epsilon = 1e-13);
            }
            let st = HeatStepper::from_ratio(nx, 0.4, Boundary::Neumann, s).unwrap();
            let theta = std::f64::consts::PI * 5.0 / nx as f64;
            let src: Vec<f64> = (0..nx).map(|i| (theta * (i as f64 + 0.5)).cos()).collect();
            st.apply(&src, &mut dst);
            let a = st.mode_multiplier(theta);
            for i in 0..nx {
                assert_relative_eq!(dst[i], a * src[i], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn advance_matches_apply_plus_forcing() {
        for st in steppers(8, 0.25) {
            let x0: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
            let f: Vec<f64> = (0..8).map(|i| 1.0 - i as f64 * 0.1).collect();
            let mut x = x0.clone();
            let mut scratch = vec![0.0; 8];
            st.advance(&mut x, &f, &mut scratch);
            let mut expect = vec![0.0; 8];
            match st.scheme() {
                Scheme::ExplicitEuler => {
                    st.apply(&x0, &mut expect);
                    for (e, fi) in expect.iter_mut().zip(&f) {
                        *e += fi;
                    }
                }
                Scheme::SemiImplicitLinear => {
                    let sum: Vec<f64> = x0.iter().zip(&f).map(|(a, b)| a + b).collect();
                    st.apply(&sum, &mut expect);
                }
            }
            for (a, b) in x.iter().zip(&expect) {
                assert_relative_eq!(a, b, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn explicit_rejects_large_ratio() {
        assert!(HeatStepper::from_ratio(8, 1.5, Boundary::Periodic, Scheme::ExplicitEuler).is_err());
        assert!(HeatStepper::from_ratio(8, 1.5, Boundary::Periodic, Scheme::SemiImplicitLinear).is_ok());
    }

    #[test]
    fn delta_powers_are_symmetric() {
        let st = HeatStepper::from_ratio(12, 0.25, Boundary::Neumann, Scheme::ExplicitEuler).unwrap();
        let a = st.power_applied_to_delta(2, 9);
        let b = st.power_applied_to_delta(7, 9);
        assert_relative_eq!(a[7], b[2], epsilon = 1e-15);
    }
}

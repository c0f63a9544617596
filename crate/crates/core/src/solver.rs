//! Mild-form time stepper with mollified drift.
//!
//! The state is carried as three arrays advanced by the same linear scheme
//! `A`: the free evolution `P = A^k u₀`, the stochastic convolution `V`
//! (noise forcing only) and the drift part `K` (forcing `dt·b(u)`), with
//! `u = P + K + V`. Because every part uses the same `A`, the decomposition
//! of the discrete solution is exact at every node and step.

use std::sync::Arc;

use rayon::prelude::*;

use crate::drift::{DriftSpec, MollifiedDrift};
use crate::error::{Error, Result};
use crate::grid::{Field, SnapshotPlan, SpaceTimeGrid};
use crate::kernel::DomainSpec;
use crate::noise::NoiseRealization;
use crate::scheme::{HeatStepper, Scheme};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub domain: DomainSpec,
    pub grid: SpaceTimeGrid,
    pub scheme: Scheme,
    pub drift: Arc<MollifiedDrift>,
    /// `u₀` at the grid nodes.
    pub initial: Arc<Vec<f64>>,
    pub noise: NoiseRealization,
    pub snapshots: SnapshotPlan,
    /// Reject distributional drifts mollified below the grid scale (`ε < dx`).
    pub enforce_resolution: bool,
}

impl SolverConfig {
    /// Explicit scheme, `u₀ ≡ 0`, final snapshot only.
    pub fn new(domain: DomainSpec, grid: SpaceTimeGrid, drift: Arc<MollifiedDrift>, noise: NoiseRealization) -> Self {
        Self {
            domain,
            grid,
            scheme: Scheme::ExplicitEuler,
            drift,
            initial: Arc::new(vec![0.0; grid.nx]),
            noise,
            snapshots: SnapshotPlan::FinalOnly,
            enforce_resolution: true,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Self {
        self.initial = Arc::new(initial);
        self
    }

    pub fn with_snapshots(mut self, plan: SnapshotPlan) -> Self {
        self.snapshots = plan;
        self
    }

    pub fn with_noise(mut self, noise: NoiseRealization) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_drift(mut self, drift: Arc<MollifiedDrift>) -> Self {
        self.drift = drift;
        self
    }

    pub fn without_resolution_check(mut self) -> Self {
        self.enforce_resolution = false;
        self
    }
}

/// Whether `spec` is a genuine distribution (only defined via mollification).
pub fn is_distributional(spec: &DriftSpec) -> bool {
    match spec {
        DriftSpec::Dirac { .. }
        | DriftSpec::FiniteMeasure { .. }
        | DriftSpec::PrincipalValue { .. }
        | DriftSpec::PowerLawPlus { .. }
        | DriftSpec::PowerLawMinus { .. } => true,
        DriftSpec::LinearCombination { children } => children.iter().any(is_distributional),
        _ => false,
    }
}

/// Full trajectory with its exact decomposition `u = P + K + V`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle {
    pub u: Field,
    pub v: Field,
    pub k: Field,
    pub p: Field,
}

impl SolutionBundle {
    /// `max |u - P - K - V|` over all stored nodes.
    pub fn decomposition_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.u.len() {
            for i in 0..self.u.nx() {
                let d = self.u.row(s)[i] - self.p.row(s)[i] - self.k.row(s)[i] - self.v.row(s)[i];
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// State after step `step` together with the drift forcing used to get there.
pub struct StepView<'a> {
    pub step: usize,
    pub u: &'a [f64],
    pub p: &'a [f64],
    pub v: &'a [f64],
    pub k: &'a [f64],
    /// `dt · b(u)` evaluated on the state before the step.
    pub drift_increment: &'a [f64],
    pub stepper: &'a HeatStepper,
}

/// Streaming consumer of solver steps (avoids storing trajectories).
pub trait StepObserver {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()>;
}

impl StepObserver for () {
    fn observe(&mut self, _: &StepView<'_>) -> Result<()> {
        Ok(())
    }
}

/// Validated configuration with its stepper.
#[derive(Debug, Clone)]
pub struct Solver {
    cfg: SolverConfig,
    stepper: HeatStepper,
    /// `dt · Lip(G_ε b)`.
    drift_lipschitz_step: f64,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.domain.validate()?;
        cfg.grid.check_domain(&cfg.domain)?;
        if cfg.noise.grid() != &cfg.grid {
            return Err(Error::GridMismatch("noise realization lives on a different grid".into()));
        }
        if cfg.initial.len() != cfg.grid.nx {
            return Err(Error::GridMismatch(format!(
                "initial condition has {} values, grid has {} nodes",
                cfg.initial.len(),
                cfg.grid.nx
            )));
        }
        if cfg.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial condition must be finite"));
        }
        if cfg.enforce_resolution && is_distributional(cfg.drift.spec()) && cfg.drift.eps() < cfg.grid.dx * (1.0 - 1e-12)
        {
            return Err(Error::Stability(format!(
                "mollification ε = {} is below the grid spacing dx = {}",
                cfg.drift.eps(),
                cfg.grid.dx
            )));
        }
        let stepper = HeatStepper::new(&cfg.domain, &cfg.grid, cfg.scheme)?;
        let drift_lipschitz_step = if cfg.drift.is_zero() { 0.0 } else { cfg.drift.check_stability(cfg.grid.dt)? };
        Ok(Self { cfg, stepper, drift_lipschitz_step })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn stepper(&self) -> &HeatStepper {
        &self.stepper
    }

    /// Whether the explicit update `u ↦ A u + dt·b(u)` is order preserving
    /// (`1 - r - dt·Lip ≥ 0`); the semi-implicit update needs `1 - dt·Lip ≥ 0`.
    pub fn is_monotone(&self) -> bool {
        match self.cfg.scheme {
            Scheme::ExplicitEuler => 1.0 - self.stepper.ratio() - self.drift_lipschitz_step >= 0.0,
            Scheme::SemiImplicitLinear => 1.0 - self.drift_lipschitz_step >= 0.0,
        }
    }

    pub fn solve(&self) -> Result<SolutionBundle> {
        self.solve_observed(&mut ())
    }

    pub fn solve_observed<O: StepObserver + ?Sized>(&self, observer: &mut O) -> Result<SolutionBundle> {
        let grid = self.cfg.grid;
        let nx = grid.nx;
        let plan = &self.cfg.snapshots;
        let drift = self.cfg.drift.as_ref();
        let has_drift = !drift.is_zero();
        let mut p = self.cfg.initial.as_ref().clone();
        let has_initial = p.iter().any(|&x| x != 0.0);
        let mut v = vec![0.0; nx];
        let mut k = vec![0.0; nx];
        let mut u = p.clone();
        let mut d = vec![0.0; nx];
        let mut forcing = vec![0.0; nx];
        let mut scratch = vec![0.0; nx];
        let mut fields = [Field::new(nx, grid.dt), Field::new(nx, grid.dt), Field::new(nx, grid.dt), Field::new(nx, grid.dt)];
        let mut store = |step: usize, u: &[f64], v: &[f64], k: &[f64], p: &[f64]| {
            if plan.keeps(step, grid.nt) {
                fields[0].push(step, u);
                fields[1].push(step, v);
                fields[2].push(step, k);
                fields[3].push(step, p);
            }
        };
        store(0, &u, &v, &k, &p);
        for step in 0..grid.nt {
            if has_drift {
                for (di, &ui) in d.iter_mut().zip(&u) {
                    *di = grid.dt * drift.eval(ui);
                }
            }
            if has_initial {
                self.stepper.advance_free(&mut p, &mut scratch);
            }
            self.cfg.noise.forcing_row(step, &mut forcing);
            self.stepper.advance(&mut v, &forcing, &mut scratch);
            if has_drift {
                self.stepper.advance(&mut k, &d, &mut scratch);
            }
            let mut finite = true;
            for i in 0..nx {
                u[i] = p[i] + k[i] + v[i];
                finite &= u[i].is_finite();
            }
            if !finite {
                return Err(Error::NonFinite { step: step + 1 });
            }
            observer.observe(&StepView {
                step: step + 1,
                u: &u,
                p: &p,
                v: &v,
                k: &k,
                drift_increment: &d,
                stepper: &self.stepper,
            })?;
            store(step + 1, &u, &v, &k, &p);
        }
        let [u, v, k, p] = fields;
        Ok(SolutionBundle { u, v, k, p })
    }

    /// Single-array reference `u ← A u + dt·b(u) + ξ/dx` (no decomposition).
    pub fn solve_direct(&self) -> Result<Field> {
        let grid = self.cfg.grid;
        let nx = grid.nx;
        let drift = self.cfg.drift.as_ref();
        let mut u = self.cfg.initial.as_ref().clone();
        let mut forcing = vec![0.0; nx];
        let mut scratch = vec![0.0; nx];
        let mut field = Field::new(nx, grid.dt);
        if self.cfg.snapshots.keeps(0, grid.nt) {
            field.push(0, &u);
        }
        for step in 0..grid.nt {
            self.cfg.noise.forcing_row(step, &mut forcing);
            for (f, &ui) in forcing.iter_mut().zip(&u) {
                *f += grid.dt * drift.eval(ui);
            }
            self.stepper.advance(&mut u, &forcing, &mut scratch);
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step: step + 1 });
            }
            if self.cfg.snapshots.keeps(step + 1, grid.nt) {
                field.push(step + 1, &u);
            }
        }
        Ok(field)
    }
}

/// Solves one configuration.
pub fn solve(cfg: SolverConfig) -> Result<SolutionBundle> {
    Solver::new(cfg)?.solve()
}

/// Solves configurations driven by one common noise realization.
pub fn solve_coupled(cfgs: &[SolverConfig]) -> Result<Vec<SolutionBundle>> {
    if let Some(first) = cfgs.first() {
        for c in &cfgs[1..] {
            if c.grid != first.grid || c.domain != first.domain || c.noise != first.noise {
                return Err(Error::GridMismatch("coupled solves need identical grid, domain and noise".into()));
            }
        }
    }
    cfgs.par_iter().map(|c| solve(c.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{SmoothProfile, DEFAULT_TABLE_RANGE};
    use crate::drift::Mollifier;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn periodic_grid(nx: usize, horizon: f64) -> SpaceTimeGrid {
        SpaceTimeGrid::for_domain(&DomainSpec::periodic(), nx, 0.25, horizon).unwrap()
    }

    fn drift(spec: DriftSpec, eps: f64) -> Arc<MollifiedDrift> {
        Arc::new(MollifiedDrift::new(&spec, eps).unwrap())
    }

    fn zero() -> Arc<MollifiedDrift> {
        drift(DriftSpec::Zero, 1.0)
    }

    fn cosine(domain: &DomainSpec, nx: usize) -> Vec<f64> {
        domain.nodes(nx).iter().map(|x| (2.0 * PI * x).cos()).collect()
    }

    #[test]
    fn zero_drift_gives_zero_k_and_v_is_the_stochastic_convolution() {
        let g = periodic_grid(32, 0.05);
        let noise = NoiseRealization::seeded(g, 3, 1);
        let cfg = SolverConfig::new(DomainSpec::periodic(), g, zero(), noise.clone()).with_snapshots(SnapshotPlan::Every(7));
        let b = solve(cfg.clone()).unwrap();
        assert_eq!(b.k.max_abs(), 0.0);
        let stepper = HeatStepper::new(&cfg.domain, &g, cfg.scheme).unwrap();
        let v = crate::noise::stochastic_convolution(&noise, &stepper, &SnapshotPlan::Every(7)).unwrap();
        assert_eq!(b.v, v);
        assert_eq!(b.u, v);
    }

    #[test]
    fn constant_drift_gives_linear_k() {
        for scheme in [Scheme::ExplicitEuler, Scheme::SemiImplicitLinear] {
            for domain in [DomainSpec::periodic(), DomainSpec::neumann()] {
                let g = SpaceTimeGrid::for_domain(&domain, 32, 0.25, 0.1).unwrap();
                let cfg = SolverConfig::new(domain, g, drift(DriftSpec::Constant { value: 1.7 }, 0.5), NoiseRealization::seeded(g, 1, 0))
                    .with_scheme(scheme)
                    .with_snapshots(SnapshotPlan::Every(10));
                let b = solve(cfg).unwrap();
                for (step, row) in b.k.rows() {
                    let t = step as f64 * g.dt;
                    for &x in row {
                        assert!((x - 1.7 * t).abs() <= 1e-12, "{scheme:?} {x} vs {}", 1.7 * t);
                    }
                }
            }
        }
    }

    #[test]
    fn decomposition_matches_direct_stepping() {
        let domain = DomainSpec::periodic();
        let g = periodic_grid(64, 0.05);
        let cfg = SolverConfig::new(domain.clone(), g, drift(DriftSpec::dirac(1.0), 1.0 / 64.0), NoiseRealization::seeded(g, 9, 2))
            .with_initial(cosine(&domain, 64))
            .with_snapshots(SnapshotPlan::Every(50));
        let s = Solver::new(cfg).unwrap();
        let b = s.solve().unwrap();
        assert!(b.decomposition_defect() <= 1e-12);
        let direct = s.solve_direct().unwrap();
        let diff = b.u.sub(&direct).unwrap().max_abs();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn noiseless_eigenfunction() {
        for scheme in [Scheme::ExplicitEuler, Scheme::SemiImplicitLinear] {
            let domain = DomainSpec::periodic();
            let nx = 128;
            let g = periodic_grid(nx, 0.05);
            let cfg = SolverConfig::new(domain.clone(), g, zero(), NoiseRealization::zero(g))
                .with_scheme(scheme)
                .with_initial(cosine(&domain, nx));
            let b = solve(cfg).unwrap();
            let t = g.horizon();
            let worst = domain
                .nodes(nx)
                .iter()
                .zip(b.u.row(0))
                .map(|(x, u)| (u - (-2.0 * PI * PI * t).exp() * (2.0 * PI * x).cos()).abs())
                .fold(0.0, f64::max);
            // second order in dx at fixed dt/dx²
            assert!(worst < 2.0 * PI.powi(4) * t / (nx * nx) as f64, "{scheme:?}: {worst}");
        }
    }

    #[test]
    fn deterministic_limit_converges_at_second_order() {
        let domain = DomainSpec::periodic();
        let spec = DriftSpec::smooth(SmoothProfile::Gaussian { variance: 0.1 });
        let b = drift(spec, 0.01);
        let horizon = 200.0 * 0.25 / 1024.0; // multiple of every dt in the ladder
        let run = |nx: usize| {
            let g = periodic_grid(nx, horizon);
            let init: Vec<f64> = domain.nodes(nx).iter().map(|x| 0.5 * (2.0 * PI * x).sin() + 0.2).collect();
            let cfg = SolverConfig::new(domain.clone(), g, b.clone(), NoiseRealization::zero(g)).with_initial(init);
            (g, solve(cfg).unwrap().u.row(0).to_vec())
        };
        let (g_ref, reference) = run(512);
        let mut errors = Vec::new();
        for nx in [32usize, 64] {
            let (g, u) = run(nx);
            assert_relative_eq!(g.horizon(), g_ref.horizon(), max_relative = 1e-12);
            let stride = 512 / nx;
            let e = u.iter().enumerate().map(|(i, v)| (v - reference[i * stride]).abs()).fold(0.0, f64::max);
            errors.push(e);
        }
        let order = (errors[0] / errors[1]).log2();
        assert!((1.7..=2.3).contains(&order), "observed order {order}, errors {errors:?}");
    }

    #[test]
    fn drift_free_part_is_contracted() {
        let domain = DomainSpec::neumann();
        let g = SpaceTimeGrid::for_domain(&domain, 48, 0.25, 0.1).unwrap();
        let init: Vec<f64> = domain.nodes(48).iter().map(|x| if *x < 0.3 { 2.0 } else { -1.0 }).collect();
        let cfg = SolverConfig::new(domain, g, zero(), NoiseRealization::seeded(g, 5, 5))
            .with_initial(init)
            .with_snapshots(SnapshotPlan::Every(1));
        let b = solve(cfg).unwrap();
        let diff = b.u.sub(&b.v).unwrap();
        assert!(diff.max_abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn adaptedness_under_noise_truncation() {
        let domain = DomainSpec::periodic();
        let g = periodic_grid(32, 0.02);
        let noise = NoiseRealization::seeded(g, 11, 4);
        let base = SolverConfig::new(domain, g, drift(DriftSpec::dirac(1.0), 1.0 / 32.0), noise.clone())
            .with_snapshots(SnapshotPlan::Every(1));
        let full = solve(base.clone()).unwrap();
        let cut = 37;
        let trunc = solve(base.with_noise(noise.truncated(cut))).unwrap();
        for k in 0..=cut {
            assert_eq!(full.u.at_step(k), trunc.u.at_step(k), "step {k}");
        }
        assert_ne!(full.u.at_step(cut + 1), trunc.u.at_step(cut + 1));
    }

    #[test]
    fn comparison_under_common_noise() {
        let domain = DomainSpec::periodic();
        let g = periodic_grid(64, 0.1);
        let eps = 1.0 / 64.0;
        for seed in 0..4 {
            let noise = NoiseRealization::seeded(g, 21, seed);
            let low = SolverConfig::new(domain.clone(), g, zero(), noise.clone()).with_snapshots(SnapshotPlan::Every(16));
            let high = low.clone().with_drift(drift(DriftSpec::dirac(1.0), eps));
            let out = solve_coupled(&[low, high]).unwrap();
            assert!(Solver::new(SolverConfig::new(domain.clone(), g, drift(DriftSpec::dirac(1.0), eps), noise)).unwrap().is_monotone());
            let d = out[1].u.sub(&out[0].u).unwrap();
            for (_, row) in d.rows() {
                assert!(row.iter().all(|&x| x >= -1e-9));
            }
        }
    }

    #[test]
    fn ordered_initial_data_stay_ordered() {
        let domain = DomainSpec::neumann();
        let g = SpaceTimeGrid::for_domain(&domain, 64, 0.25, 0.05).unwrap();
        let b = drift(DriftSpec::PrincipalValue { weight: 1.0 }, 1.0 / 32.0);
        let noise = NoiseRealization::seeded(g, 2, 2);
        let lo = SolverConfig::new(domain.clone(), g, b.clone(), noise.clone())
            .with_initial(domain.nodes(64).iter().map(|x| x.sin()).collect())
            .with_snapshots(SnapshotPlan::Every(8));
        let hi = lo.clone().with_initial(domain.nodes(64).iter().map(|x| x.sin() + 0.01).collect());
        let out = solve_coupled(&[lo, hi]).unwrap();
        let d = out[1].u.sub(&out[0].u).unwrap();
        assert!(d.rows().all(|(_, r)| r.iter().all(|&x| x >= -1e-9)));
    }

    #[test]
    fn identical_coupled_configs_agree_bitwise() {
        let g = periodic_grid(32, 0.02);
        let c = SolverConfig::new(DomainSpec::periodic(), g, drift(DriftSpec::dirac(0.5), 0.05), NoiseRealization::seeded(g, 1, 1));
        let out = solve_coupled(&[c.clone(), c]).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn rejects_bad_configs() {
        let g = periodic_grid(32, 0.02);
        let domain = DomainSpec::periodic();
        // mollification below grid scale
        let fine = drift(DriftSpec::dirac(1.0), 1e-3);
        assert!(Solver::new(SolverConfig::new(domain.clone(), g, fine.clone(), NoiseRealization::zero(g))).is_err());
        // ... unless explicitly allowed, and then the stability coupling still applies
        let coarse_dt = SpaceTimeGrid::new(32, 1.0 / 32.0, 10, 0.9 / 1024.0).unwrap();
        let spiky = Arc::new(MollifiedDrift::with_options(&DriftSpec::dirac(10.0), 1e-6, Mollifier::Heat, DEFAULT_TABLE_RANGE).unwrap());
        let cfg = SolverConfig::new(domain.clone(), coarse_dt, spiky, NoiseRealization::zero(coarse_dt)).without_resolution_check();
        assert!(matches!(Solver::new(cfg), Err(Error::Stability(_))));
        // mismatched noise grid
        let other = periodic_grid(64, 0.02);
        assert!(Solver::new(SolverConfig::new(domain.clone(), g, zero(), NoiseRealization::zero(other))).is_err());
        // wrong initial length
        assert!(Solver::new(SolverConfig::new(domain, g, zero(), NoiseRealization::zero(g)).with_initial(vec![0.0; 3])).is_err());
        let _ = fine;
    }

    #[test]
    fn coupled_requires_common_noise() {
        let g = periodic_grid(32, 0.01);
        let a = SolverConfig::new(DomainSpec::periodic(), g, zero(), NoiseRealization::seeded(g, 1, 0));
        let b = a.clone().with_noise(NoiseRealization::seeded(g, 1, 1));
        assert!(solve_coupled(&[a, b]).is_err());
    }

    #[test]
    fn observer_sees_every_step() {
        struct Count(usize, f64);
        impl StepObserver for Count {
            fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
                self.0 += 1;
                self.1 += view.drift_increment.iter().sum::<f64>();
                Ok(())
            }
        }
        let g = periodic_grid(16, 0.01);
        let cfg = SolverConfig::new(DomainSpec::periodic(), g, drift(DriftSpec::Constant { value: 2.0 }, 1.0), NoiseRealization::zero(g));
        let mut c = Count(0, 0.0);
        Solver::new(cfg).unwrap().solve_observed(&mut c).unwrap();
        assert_eq!(c.0, g.nt);
        assert_relative_eq!(c.1, 2.0 * g.dt * 16.0 * g.nt as f64, max_relative = 1e-12);
    }
}

//! Variance and local-nondeterminism laws of the stochastic convolution.

use serde::{Deserialize, Serialize};

use super::{band_check, cell, ensure, Anchor, Outcome, Table};
use crate::analysis::{bootstrap_stderr, map_replicas, stable_mean, MeanEstimate, SlopeFit, Verdict};
use crate::error::Result;
use crate::grid::SpaceTimeGrid;
use crate::kernel::DomainSpec;
use crate::noise::{aux_rng, discrete_variance_by_stepping, NoiseRealization, SpectralConvolution};
use crate::scheme::{HeatStepper, Scheme};

/// Auxiliary stream ids of the spectral samplers.
const FREE_LINE_PURPOSE: u64 = 2;
const PERIODIC_PURPOSE: u64 = 3;
const KURTOSIS_PURPOSE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceCheckConfig {
    pub seed: u64,
    pub replicas: usize,
    /// Free-line probe times.
    #[serde(default = "free_times")]
    pub free_line_times: Vec<f64>,
    #[serde(default = "eight")]
    pub free_line_log2_inv_dx: u32,
    /// Half width of the truncated line (default `10·√T_max`).
    #[serde(default)]
    pub free_line_half_width: Option<f64>,
    /// Probe times of the bounded domains.
    #[serde(default = "bounded_times")]
    pub bounded_times: Vec<f64>,
    #[serde(default = "eight")]
    pub periodic_log2_inv_dx: u32,
    #[serde(default = "six")]
    pub neumann_log2_inv_dx: u32,
    #[serde(default = "half")]
    pub neumann_point: f64,
    /// Replicas of the path-wise Neumann run (default: `replicas`).
    #[serde(default)]
    pub neumann_replicas: Option<usize>,
}

fn free_times() -> Vec<f64> {
    vec![0.0625, 0.25]
}
fn bounded_times() -> Vec<f64> {
    vec![0.0025, 0.01, 0.04, 0.16]
}
fn eight() -> u32 {
    8
}
fn six() -> u32 {
    6
}
fn half() -> f64 {
    0.5
}

/// Per-replica node averages of `V²` and `V⁴` at each probe time.
type Moments = Vec<(f64, f64)>;

fn node_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m2 = values.iter().map(|v| v * v).sum::<f64>() / n;
    let m4 = values.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    (m2, m4)
}

struct Series {
    domain: &'static str,
    times: Vec<f64>,
    x: f64,
    variance: Vec<MeanEstimate>,
    discrete: Vec<f64>,
    kurtosis: Vec<(f64, f64)>,
}

impl VarianceCheckConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.replicas >= 2, "replicas must be at least 2")?;
        ensure(!self.free_line_times.is_empty(), "free_line_times must not be empty")?;
        ensure(self.bounded_times.len() >= 4, "bounded_times needs at least 4 times for a slope fit")?;
        let all = self.free_line_times.iter().chain(&self.bounded_times);
        ensure(all.clone().all(|t| *t > 0.0 && t.is_finite()), "probe times must be positive")?;
        ensure(self.bounded_times.windows(2).all(|w| w[0] < w[1]), "bounded_times must increase")?;
        ensure(self.free_line_times.windows(2).all(|w| w[0] < w[1]), "free_line_times must increase")?;
        ensure((0.0..=1.0).contains(&self.neumann_point), "neumann_point must lie in [0, 1]")?;
        for l in [self.free_line_log2_inv_dx, self.periodic_log2_inv_dx, self.neumann_log2_inv_dx] {
            ensure((2..=12).contains(&l), "log2 of the inverse spacing must lie in [2, 12]")?;
        }
        Ok(())
    }

    fn spectral_series(
        &self,
        domain: DomainSpec,
        name: &'static str,
        log2_inv_dx: u32,
        times: &[f64],
        purpose: u64,
    ) -> Result<Series> {
        let dx = 2f64.powi(-(log2_inv_dx as i32));
        let nx = (domain.length() / dx).round() as usize;
        let t_max = times.iter().copied().fold(0.0, f64::max);
        let grid = SpaceTimeGrid::for_domain(&domain, nx, super::default_ratio(), t_max)?;
        let stepper = HeatStepper::new(&domain, &grid, Scheme::ExplicitEuler)?;
        let sampler = SpectralConvolution::new(&stepper, &grid)?;
        let steps: Vec<usize> = times.iter().map(|&t| grid.step_of(t)).collect();
        let per: Vec<Moments> = map_replicas(self.replicas, |r| {
            let mut rng = aux_rng(self.seed, r as u64, purpose);
            let path = sampler.sample_path(&mut rng, &steps)?;
            Ok(path.iter().map(|row| node_moments(row)).collect())
        })?;
        self.series(name, &grid, &steps, 0.0, &per, |k| sampler.variance(k))
    }

    fn neumann_series(&self) -> Result<Series> {
        let domain = DomainSpec::neumann();
        let dx = 2f64.powi(-(self.neumann_log2_inv_dx as i32));
        let nx = (1.0 / dx).round() as usize;
        let t_max = self.bounded_times.iter().copied().fold(0.0, f64::max);
        let grid = SpaceTimeGrid::for_domain(&domain, nx, super::default_ratio(), t_max)?;
        let stepper = HeatStepper::new(&domain, &grid, Scheme::ExplicitEuler)?;
        // cell-centred nodes: a point midway between two nodes uses both
        let pos = self.neumann_point / dx - 0.5;
        let nodes: Vec<usize> = if (pos - pos.floor() - 0.5).abs() < 1e-9 {
            vec![pos.floor().max(0.0) as usize, (pos.ceil() as usize).min(nx - 1)]
        } else {
            vec![(pos.round().max(0.0) as usize).min(nx - 1)]
        };
        let steps: Vec<usize> = self.bounded_times.iter().map(|&t| grid.step_of(t)).collect();
        let last = *steps.last().unwrap_or(&0);
        let replicas = self.neumann_replicas.unwrap_or(self.replicas);
        let per: Vec<Moments> = map_replicas(replicas, |r| {
            let noise = NoiseRealization::seeded(grid, self.seed, r as u64);
            let mut v = vec![0.0; nx];
            let mut f = vec![0.0; nx];
            let mut scratch = vec![0.0; nx];
            let mut out = Vec::with_capacity(steps.len());
            for k in 0..last {
                noise.forcing_row(k, &mut f);
                stepper.advance(&mut v, &f, &mut scratch);
                for _ in steps.iter().filter(|&&s| s == k + 1) {
                    let vals: Vec<f64> = nodes.iter().map(|&i| v[i]).collect();
                    out.push(node_moments(&vals));
                }
            }
            Ok(out)
        })?;
        let x = nodes.iter().map(|&i| (i as f64 + 0.5) * dx).sum::<f64>() / nodes.len() as f64;
        self.series("neumann", &grid, &steps, x, &per, |k| discrete_variance_by_stepping(&stepper, &grid, nodes[0], k))
    }

    fn series(
        &self,
        domain: &'static str,
        grid: &SpaceTimeGrid,
        steps: &[usize],
        x: f64,
        per: &[Moments],
        discrete: impl Fn(usize) -> f64,
    ) -> Result<Series> {
        let mut variance = Vec::new();
        let mut kurtosis = Vec::new();
        for (j, &k) in steps.iter().enumerate() {
            let m2: Vec<f64> = per.iter().map(|r| r[j].0).collect();
            let m4: Vec<f64> = per.iter().map(|r| r[j].1).collect();
            let est = MeanEstimate::from_samples(&m2)?;
            let kurt = stable_mean(&m4) / (est.value * est.value);
            let se = bootstrap_stderr(per.len(), self.seed ^ k as u64, KURTOSIS_PURPOSE, |idx| {
                let a: f64 = idx.iter().map(|&i| m4[i]).sum();
                let b: f64 = idx.iter().map(|&i| m2[i]).sum();
                a * idx.len() as f64 / (b * b)
            });
            variance.push(est);
            kurtosis.push((kurt, se));
        }
        Ok(Series {
            domain,
            times: steps.iter().map(|&k| grid.time_of(k)).collect(),
            x,
            variance,
            discrete: steps.iter().map(|&k| discrete(k)).collect(),
            kurtosis,
        })
    }

    pub fn run(&self) -> Result<Outcome> {
        let t_max = self.free_line_times.iter().copied().fold(0.0, f64::max);
        let half_width = self.free_line_half_width.unwrap_or(10.0 * t_max.sqrt());
        let free = self.spectral_series(
            DomainSpec::free_line(half_width)?,
            "free_line",
            self.free_line_log2_inv_dx,
            &self.free_line_times,
            FREE_LINE_PURPOSE,
        )?;
        let periodic = self.spectral_series(
            DomainSpec::periodic(),
            "periodic",
            self.periodic_log2_inv_dx,
            &self.bounded_times,
            PERIODIC_PURPOSE,
        )?;
        let neumann = self.neumann_series()?;

        let mut out = Outcome::default();
        let mut table = Table::new(
            "variance",
            &["domain", "t", "x", "variance", "stderr", "sqrt_t_over_pi", "discrete_exact", "kurtosis", "kurtosis_stderr"],
        );
        for s in [&free, &periodic, &neumann] {
            for i in 0..s.times.len() {
                let e = s.variance[i];
                table.push(vec![
                    cell(s.domain),
                    cell(s.times[i]),
                    cell(s.x),
                    cell(e.value),
                    cell(e.stderr),
                    cell((s.times[i] / std::f64::consts::PI).sqrt()),
                    cell(s.discrete[i]),
                    cell(s.kurtosis[i].0),
                    cell(s.kurtosis[i].1),
                ]);
            }
        }
        out.tables.push(table);

        for (i, &t) in free.times.iter().enumerate() {
            let e = free.variance[i];
            let exact = (t / std::f64::consts::PI).sqrt();
            out.check(
                &format!("free_line_variance_t{t}"),
                Anchor::Theory,
                "|Var − √(t/π)| ≤ 3 standard errors",
                Some(e.z_score(exact)),
                Verdict::from_bool(e.z_score(exact) <= 3.0),
            );
            out.check(
                &format!("free_line_discrete_variance_t{t}"),
                Anchor::Oracle,
                "|Var − exact discrete variance| ≤ 3 standard errors",
                Some(e.z_score(free.discrete[i])),
                Verdict::from_bool(e.z_score(free.discrete[i]) <= 3.0),
            );
            let (k, se) = free.kurtosis[i];
            out.check(
                &format!("free_line_gaussianity_t{t}"),
                Anchor::Oracle,
                "standardized fourth moment within 3 standard errors of 3",
                Some(k),
                Verdict::from_bool((k - 3.0).abs() <= 3.0 * se),
            );
        }
        for s in [&periodic, &neumann] {
            let vals: Vec<f64> = s.variance.iter().map(|e| e.value).collect();
            let errs: Vec<f64> = s.variance.iter().map(|e| e.stderr).collect();
            let fit = SlopeFit::fit(&s.times, &vals, &errs)?;
            band_check(&mut out, &format!("{}_variance_slope", s.domain), Anchor::Theory, &fit, 0.5, 0.05);
            out.fit(&format!("{}_variance", s.domain), &fit);
        }
        for s in [&free, &periodic, &neumann] {
            let worst = s
                .times
                .iter()
                .zip(&s.variance)
                .map(|(t, e)| (e.value - (t / std::f64::consts::PI).sqrt()) / e.stderr.max(f64::MIN_POSITIVE))
                .fold(f64::INFINITY, f64::min);
            out.check(
                &format!("{}_local_nondeterminism", s.domain),
                Anchor::Theory,
                "Var ≥ √t/√π − 3 standard errors at every sampled (t, x)",
                Some(worst),
                Verdict::from_bool(worst >= -3.0),
            );
        }
        out.metric("free_line_half_width", half_width);
        out.metric("free_line_replicas", self.replicas);
        out.metric("neumann_replicas", self.neumann_replicas.unwrap_or(self.replicas));
        out.metric("neumann_x", neumann.x);
        Ok(out)
    }
}

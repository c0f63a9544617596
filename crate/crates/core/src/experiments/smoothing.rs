//! Smoothing of a mollified Dirac by the law of the stochastic convolution.

use serde::{Deserialize, Serialize};

use super::{band_check, cell, ensure, Anchor, Outcome, Table};
use crate::analysis::{map_replicas, MeanEstimate, SlopeFit, Verdict};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::{gaussian, DomainSpec};
use crate::noise::{aux_rng, SpectralConvolution};
use crate::scheme::{HeatStepper, Scheme};

const SMOOTHING_PURPOSE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub seed: u64,
    pub replicas: usize,
    /// Mollification time of the test function `g_ε`.
    #[serde(default = "eps")]
    pub eps: f64,
    /// Probe times `2^-k` for `k` in this inclusive range, largest `k` first.
    #[serde(default = "levels")]
    pub log2_inv_times: [u32; 2],
    #[serde(default = "eight")]
    pub log2_inv_dx: u32,
    #[serde(default)]
    pub half_width: Option<f64>,
}

fn eps() -> f64 {
    2f64.powi(-12)
}
fn levels() -> [u32; 2] {
    [2, 8]
}
fn eight() -> u32 {
    8
}

/// `E g_ε(Z)` for `Z ~ N(0, var)`.
pub fn gaussian_composition(var: f64, eps: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * (var + eps)).sqrt()
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.replicas >= 2, "replicas must be at least 2")?;
        ensure(self.eps > 0.0, "eps must be positive")?;
        let [lo, hi] = self.log2_inv_times;
        ensure(lo < hi && hi <= 16, "log2_inv_times must be an increasing pair ≤ 16")?;
        ensure((2..=12).contains(&self.log2_inv_dx), "log2_inv_dx must lie in [2, 12]")
    }

    pub fn run(&self) -> Result<Outcome> {
        let [lo, hi] = self.log2_inv_times;
        let times: Vec<f64> = (lo..=hi).rev().map(|k| 2f64.powi(-(k as i32))).collect();
        let t_min = times[0];
        let t_max = *times.last().unwrap_or(&t_min);
        // the test function must be much narrower than the smallest spread of V
        let saturation = self.eps / (t_min / std::f64::consts::PI).sqrt();
        if saturation >= 0.5 {
            return Err(Error::Saturation(format!(
                "ε = {} is not small against Var(V) at t = {t_min}",
                self.eps
            )));
        }
        let half_width = self.half_width.unwrap_or(10.0 * t_max.sqrt());
        let domain = DomainSpec::free_line(half_width)?;
        let dx = 2f64.powi(-(self.log2_inv_dx as i32));
        let nx = (domain.length() / dx).round() as usize;
        let grid = SpaceTimeGrid::for_domain(&domain, nx, super::default_ratio(), t_max)?;
        let stepper = HeatStepper::new(&domain, &grid, Scheme::ExplicitEuler)?;
        let sampler = SpectralConvolution::new(&stepper, &grid)?;
        let steps: Vec<usize> = times.iter().map(|&t| grid.step_of(t)).collect();
        let per: Vec<Vec<f64>> = map_replicas(self.replicas, |r| {
            let mut rng = aux_rng(self.seed, r as u64, SMOOTHING_PURPOSE);
            let path = sampler.sample_path(&mut rng, &steps)?;
            Ok(path.iter().map(|row| row.iter().map(|&v| gaussian(self.eps, v)).sum::<f64>() / row.len() as f64).collect())
        })?;

        let mut out = Outcome::default();
        let mut table = Table::new(
            "smoothing",
            &["t", "mean_g", "stderr", "closed_form_discrete", "closed_form_continuum", "discrete_variance"],
        );
        let mut estimates = Vec::new();
        let mut worst_discrete = 0.0f64;
        let mut worst_continuum = 0.0f64;
        for (j, &k) in steps.iter().enumerate() {
            let t = grid.time_of(k);
            let col: Vec<f64> = per.iter().map(|r| r[j]).collect();
            let e = MeanEstimate::from_samples(&col)?;
            let var = sampler.variance(k);
            let discrete = gaussian_composition(var, self.eps);
            let continuum = gaussian_composition((t / std::f64::consts::PI).sqrt(), self.eps);
            worst_discrete = worst_discrete.max(e.z_score(discrete));
            worst_continuum = worst_continuum.max(e.z_score(continuum));
            table.push(vec![cell(t), cell(e.value), cell(e.stderr), cell(discrete), cell(continuum), cell(var)]);
            estimates.push(e);
        }
        out.tables.push(table);
        let ts: Vec<f64> = steps.iter().map(|&k| grid.time_of(k)).collect();
        let fit = SlopeFit::fit(
            &ts,
            &estimates.iter().map(|e| e.value).collect::<Vec<_>>(),
            &estimates.iter().map(|e| e.stderr).collect::<Vec<_>>(),
        )?;
        band_check(&mut out, "smoothing_exponent", Anchor::Theory, &fit, -0.25, 0.05);
        out.fit("smoothing", &fit);
        out.check(
            "closed_form_gaussian_composition",
            Anchor::Oracle,
            "E g_ε(V_t) within 3 standard errors of (2π(Var V_t + ε))^{-1/2} at every t",
            Some(worst_discrete),
            Verdict::from_bool(worst_discrete <= 3.0),
        );
        let closed: Vec<f64> = ts.iter().map(|&t| gaussian_composition((t / std::f64::consts::PI).sqrt(), self.eps)).collect();
        let closed_fit = SlopeFit::fit(&ts, &closed, &vec![0.0; ts.len()])?;
        out.metric("closed_form_exponent", closed_fit.exponent);
        out.metric("continuum_closed_form_max_z", worst_continuum);
        out.metric("saturation_ratio", saturation);
        out.metric("half_width", half_width);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_matches_quadrature() {
        // ∫ g_ε(z) g_var(z) dz
        let (var, eps) = (0.3, 0.01);
        let q = crate::drift::simpson(|z| gaussian(eps, z) * gaussian(var, z), -6.0, 6.0, 20000);
        assert!((q - gaussian_composition(var, eps)).abs() < 1e-10);
    }

    #[test]
    fn coarse_run_matches_closed_form() {
        let cfg = SmoothingConfig {
            seed: 1,
            replicas: 300,
            eps: 2f64.powi(-12),
            log2_inv_times: [2, 8],
            log2_inv_dx: 6,
            half_width: None,
        };
        let out = cfg.run().unwrap();
        let c = out.checks.iter().find(|c| c.name == "closed_form_gaussian_composition").unwrap();
        assert_eq!(c.verdict, Verdict::Pass, "{c:?}");
    }

    #[test]
    fn saturation_aborts() {
        let cfg = SmoothingConfig { seed: 1, replicas: 10, eps: 0.05, log2_inv_times: [2, 8], log2_inv_dx: 5, half_width: None };
        assert!(matches!(cfg.run(), Err(Error::Saturation(_))));
    }
}

//! Regularization exponent of occupation functionals of the stochastic convolution.

use serde::{Deserialize, Serialize};

use super::{band_check, cell, domain_from, ensure, Anchor, Outcome, Table};
use crate::analysis::{map_replicas, occupation_functionals, MeanEstimate, SlopeFit};
use crate::drift::{DriftSpec, MollifiedDrift, SmoothProfile};
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::DomainKind;
use crate::noise::NoiseRealization;
use crate::scheme::{HeatStepper, Scheme};

/// Which scale is varied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizationMode {
    /// `‖Z_h‖_{L_2}` over windows `h = 2^-l`, `l ∈ [finest, coarsest]` reversed.
    Window { log2_inv_h: [u32; 2] },
    /// `‖Z_h(· + δ) − Z_h(·)‖_{L_2}` in the level offset `δ = 2^-l` at fixed `h`.
    Offset { log2_inv_h: u32, log2_inv_offsets: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationCase {
    pub name: String,
    pub drift: DriftSpec,
    pub eps: f64,
    pub mode: RegularizationMode,
    pub target: f64,
    pub tolerance: f64,
    #[serde(default = "theory")]
    pub anchor: Anchor,
    #[serde(default)]
    pub replicas: Option<usize>,
}

fn theory() -> Anchor {
    Anchor::Theory
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub seed: u64,
    pub replicas: usize,
    #[serde(default = "cases")]
    pub cases: Vec<RegularizationCase>,
    #[serde(default = "nx")]
    pub nx: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

fn cases() -> Vec<RegularizationCase> {
    vec![
        RegularizationCase {
            name: "mollified_dirac".into(),
            drift: DriftSpec::dirac(1.0),
            eps: 2f64.powi(-12),
            mode: RegularizationMode::Window { log2_inv_h: [4, 10] },
            target: 0.75,
            tolerance: 0.07,
            anchor: Anchor::Theory,
            replicas: None,
        },
        RegularizationCase {
            name: "bounded_gaussian".into(),
            drift: DriftSpec::smooth(SmoothProfile::Gaussian { variance: 1.0 }),
            eps: 2f64.powi(-12),
            mode: RegularizationMode::Window { log2_inv_h: [4, 10] },
            target: 1.0,
            tolerance: 0.05,
            anchor: Anchor::Sanity,
            replicas: Some(200),
        },
        RegularizationCase {
            name: "dirac_level_difference".into(),
            drift: DriftSpec::dirac(1.0),
            eps: 2f64.powi(-12),
            mode: RegularizationMode::Offset { log2_inv_h: 4, log2_inv_offsets: [3, 8] },
            target: 1.0,
            tolerance: 0.1,
            anchor: Anchor::Oracle,
            replicas: Some(1000),
        },
    ]
}
fn nx() -> usize {
    128
}

fn dyadic(range: [u32; 2]) -> Vec<f64> {
    (range[0]..=range[1]).rev().map(|l| 2f64.powi(-(l as i32))).collect()
}

/// `√E[mean_x Z²]` with a delta-method standard error, from per-replica
/// node-averaged squares.
fn root_mean_square(samples: &[f64]) -> Result<(f64, f64)> {
    let e = MeanEstimate::from_samples(samples)?;
    let v = e.value.max(0.0).sqrt();
    Ok((v, if v > 0.0 { e.stderr / (2.0 * v) } else { 0.0 }))
}

fn pooled_square(row: &[f64]) -> f64 {
    row.iter().map(|z| z * z).sum::<f64>() / row.len() as f64
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.replicas >= 2, "replicas must be at least 2")?;
        for c in &self.cases {
            c.drift.validate().map_err(|e| Error::Config(format!("case {}: {e}", c.name)))?;
            ensure(c.eps > 0.0, format!("case {}: eps must be positive", c.name))?;
            let ok = match c.mode {
                RegularizationMode::Window { log2_inv_h: [a, b] } => a < b,
                RegularizationMode::Offset { log2_inv_offsets: [a, b], .. } => a < b,
            };
            ensure(ok, format!("case {}: scale range must be an increasing pair", c.name))?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome> {
        let domain = domain_from(DomainKind::PeriodicUnit)?;
        let mut out = Outcome::default();
        let mut table = Table::new("scales", &["case", "scale", "norm", "stderr"]);
        for case in &self.cases {
            let (h_max, h_min) = match case.mode {
                RegularizationMode::Window { log2_inv_h: [a, b] } => (2f64.powi(-(a as i32)), 2f64.powi(-(b as i32))),
                RegularizationMode::Offset { log2_inv_h, .. } => {
                    let h = 2f64.powi(-(log2_inv_h as i32));
                    (h, h)
                }
            };
            // the mollification must stay well below the spread of V over the smallest window
            let spread = (h_min / std::f64::consts::PI).sqrt();
            if case.eps >= 0.5 * spread {
                return Err(Error::Config(format!(
                    "case {}: eps = {} is not below half the variance {spread:.3e} of V at the smallest window; \
                     the exponent would measure the mollifier",
                    case.name, case.eps
                )));
            }
            let grid = SpaceTimeGrid::for_domain(&domain, self.nx, super::default_ratio(), h_max)?;
            let stepper = HeatStepper::new(&domain, &grid, self.scheme)?;
            let drift = MollifiedDrift::new(&case.drift, case.eps)?;
            let replicas = case.replicas.unwrap_or(self.replicas);
            let (scales, offsets, records) = match case.mode {
                RegularizationMode::Window { log2_inv_h } => {
                    let hs = dyadic(log2_inv_h);
                    let steps: Vec<usize> = hs.iter().map(|&h| grid.step_of(h)).collect();
                    ensure(steps[0] >= 4, format!("case {}: smallest window under 4 time steps", case.name))?;
                    (hs, vec![0.0], steps)
                }
                RegularizationMode::Offset { log2_inv_offsets, .. } => {
                    let ds = dyadic(log2_inv_offsets);
                    let mut offs = vec![0.0];
                    offs.extend(&ds);
                    (ds, offs, vec![grid.nt])
                }
            };
            let scales: Vec<f64> = match case.mode {
                RegularizationMode::Window { .. } => records.iter().map(|&s| grid.time_of(s)).collect(),
                RegularizationMode::Offset { .. } => scales,
            };
            let per: Vec<Vec<f64>> = map_replicas(replicas, |r| {
                let noise = NoiseRealization::seeded(grid, self.seed, r as u64);
                let z = occupation_functionals(&stepper, &grid, &noise, &drift, &offsets, &records)?;
                Ok(match case.mode {
                    RegularizationMode::Window { .. } => z[0].iter().map(|row| pooled_square(row)).collect(),
                    RegularizationMode::Offset { .. } => (1..offsets.len())
                        .map(|j| {
                            let d: Vec<f64> = z[j][0].iter().zip(&z[0][0]).map(|(a, b)| a - b).collect();
                            pooled_square(&d)
                        })
                        .collect(),
                })
            })?;
            let mut values = Vec::with_capacity(scales.len());
            let mut errs = Vec::with_capacity(scales.len());
            for (i, &s) in scales.iter().enumerate() {
                let col: Vec<f64> = per.iter().map(|p| p[i]).collect();
                let (v, e) = root_mean_square(&col)?;
                table.push(vec![cell(&case.name), cell(s), cell(v), cell(e)]);
                values.push(v);
                errs.push(e);
            }
            let fit = SlopeFit::fit(&scales, &values, &errs)?;
            band_check(&mut out, &format!("{}_exponent", case.name), case.anchor, &fit, case.target, case.tolerance);
            out.fit(&case.name, &fit);
            out.metric(&format!("{}_replicas", case.name), replicas);
        }
        out.tables.push(table);
        out.metric("norm", "L_2(Ω) norm pooled over all grid nodes");
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_mollification_rejected() {
        let mut cfg: RegularizationConfig = toml::from_str("seed = 1\nreplicas = 4").unwrap();
        cfg.cases.truncate(1);
        cfg.cases[0].eps = 0.01;
        let err = cfg.run().unwrap_err().to_string();
        assert!(err.contains("mollified_dirac"), "{err}");
    }

    #[test]
    fn constant_drift_is_exactly_linear() {
        let cfg = RegularizationConfig {
            seed: 1,
            replicas: 2,
            cases: vec![RegularizationCase {
                name: "c".into(),
                drift: DriftSpec::Constant { value: 2.0 },
                eps: 2f64.powi(-12),
                mode: RegularizationMode::Window { log2_inv_h: [4, 9] },
                target: 1.0,
                tolerance: 1e-9,
                anchor: Anchor::Sanity,
                replicas: None,
            }],
            nx: 32,
            scheme: Scheme::ExplicitEuler,
        };
        let out = cfg.run().unwrap();
        assert_eq!(out.checks[0].verdict, crate::analysis::Verdict::Pass, "{:?}", out.checks);
    }

    #[test]
    fn dyadic_scales_ascend() {
        assert_eq!(dyadic([1, 3]), vec![0.125, 0.25, 0.5]);
    }
}

//! Path-wise comparison of coupled solutions with ordered data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{cell, domain_from, ensure, Anchor, Outcome, Table};
use crate::analysis::{map_replicas, Verdict};
use crate::drift::{Atom, DriftSpec, MollifiedDrift};
use crate::error::{Error, Result};
use crate::grid::{SnapshotPlan, SpaceTimeGrid};
use crate::kernel::{DomainKind, DomainSpec};
use crate::noise::NoiseRealization;
use crate::scheme::Scheme;
use crate::solver::{solve_coupled, SolverConfig};

/// Bounded initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `offset + amplitude · cos(2π·mode·x)`.
    Cosine {
        amplitude: f64,
        mode: u32,
        #[serde(default)]
        offset: f64,
    },
}

impl InitialCondition {
    pub fn sample(&self, domain: &DomainSpec, nx: usize) -> Vec<f64> {
        domain
            .nodes(nx)
            .into_iter()
            .map(|x| match *self {
                InitialCondition::Zero => 0.0,
                InitialCondition::Constant { value } => value,
                InitialCondition::Cosine { amplitude, mode, offset } => {
                    offset + amplitude * (2.0 * std::f64::consts::PI * mode as f64 * x).cos()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonPair {
    pub name: String,
    pub lower: DriftSpec,
    pub upper: DriftSpec,
    #[serde(default)]
    pub lower_initial: InitialCondition,
    #[serde(default)]
    pub upper_initial: InitialCondition,
    #[serde(default = "theory")]
    pub anchor: Anchor,
}

fn theory() -> Anchor {
    Anchor::Theory
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    pub seed: u64,
    pub replicas: usize,
    #[serde(default = "default_pairs")]
    pub pairs: Vec<ComparisonPair>,
    #[serde(default = "eps")]
    pub eps: f64,
    #[serde(default = "periodic")]
    pub domain: DomainKind,
    #[serde(default = "nx")]
    pub nx: usize,
    #[serde(default = "horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "tolerance")]
    pub tolerance: f64,
}

fn default_pairs() -> Vec<ComparisonPair> {
    vec![
        ComparisonPair {
            name: "identical_zero".into(),
            lower: DriftSpec::Zero,
            upper: DriftSpec::Zero,
            lower_initial: InitialCondition::Zero,
            upper_initial: InitialCondition::Zero,
            anchor: Anchor::Sanity,
        },
        ComparisonPair {
            name: "zero_below_skew".into(),
            lower: DriftSpec::Zero,
            upper: DriftSpec::dirac(1.0),
            lower_initial: InitialCondition::Zero,
            upper_initial: InitialCondition::Zero,
            anchor: Anchor::Theory,
        },
        ComparisonPair {
            name: "skew_below_skew_plus_atom".into(),
            lower: DriftSpec::dirac(1.0),
            upper: DriftSpec::LinearCombination {
                children: vec![
                    DriftSpec::dirac(1.0),
                    DriftSpec::FiniteMeasure { atoms: vec![Atom { location: 0.5, weight: 0.5 }] },
                ],
            },
            lower_initial: InitialCondition::Zero,
            upper_initial: InitialCondition::Zero,
            anchor: Anchor::Oracle,
        },
    ]
}
fn eps() -> f64 {
    1.0 / 64.0
}
fn periodic() -> DomainKind {
    DomainKind::PeriodicUnit
}
fn nx() -> usize {
    64
}
fn horizon() -> f64 {
    0.25
}
fn tolerance() -> f64 {
    1e-9
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.replicas >= 1, "replicas must be positive")?;
        ensure(self.eps > 0.0, "eps must be positive")?;
        let domain = domain_from(self.domain)?;
        for p in &self.pairs {
            p.lower.validate().map_err(|e| Error::Config(format!("pair {}: {e}", p.name)))?;
            p.upper.validate().map_err(|e| Error::Config(format!("pair {}: {e}", p.name)))?;
            ensure(
                p.lower.dominated_by(&p.upper),
                format!("pair {}: upper drift minus lower drift is not a nonnegative measure", p.name),
            )?;
            let lo = p.lower_initial.sample(&domain, self.nx);
            let hi = p.upper_initial.sample(&domain, self.nx);
            ensure(lo.iter().zip(&hi).all(|(a, b)| a <= b), format!("pair {}: initial data are not ordered", p.name))?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome> {
        let domain = domain_from(self.domain)?;
        let grid = SpaceTimeGrid::for_domain(&domain, self.nx, super::default_ratio(), self.horizon)?;
        let mut out = Outcome::default();
        let mut table = Table::new(
            "violations",
            &["pair", "replicas", "violations", "max_excess", "drift_order_violations", "identical"],
        );
        for pair in &self.pairs {
            let lower = Arc::new(MollifiedDrift::new(&pair.lower, self.eps)?);
            let upper = Arc::new(MollifiedDrift::new(&pair.upper, self.eps)?);
            // oracle: mollification preserves the order of the drifts
            let drift_bad = (-4000..=4000)
                .map(|i| i as f64 * 1e-3)
                .filter(|&u| lower.eval(u) > upper.eval(u) + self.tolerance)
                .count();
            let lo0 = pair.lower_initial.sample(&domain, self.nx);
            let hi0 = pair.upper_initial.sample(&domain, self.nx);
            let per: Vec<(usize, f64, bool)> = map_replicas(self.replicas, |r| {
                let noise = NoiseRealization::seeded(grid, self.seed, r as u64);
                let mk = |d: &Arc<MollifiedDrift>, u0: &Vec<f64>| {
                    SolverConfig::new(domain, grid, d.clone(), noise.clone())
                        .with_scheme(self.scheme)
                        .with_initial(u0.clone())
                        .with_snapshots(SnapshotPlan::Every(1))
                };
                let b = solve_coupled(&[mk(&lower, &lo0), mk(&upper, &hi0)])?;
                let (a, c) = (&b[0].u, &b[1].u);
                let mut count = 0usize;
                let mut excess = f64::NEG_INFINITY;
                for k in 0..a.len() {
                    for (x, y) in a.row(k).iter().zip(c.row(k)) {
                        excess = excess.max(x - y);
                        if *x > y + self.tolerance {
                            count += 1;
                        }
                    }
                }
                Ok((count, excess, a == c))
            })?;
            let violations: usize = per.iter().map(|p| p.0).sum();
            let max_excess = per.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let identical = per.iter().all(|p| p.2);
            table.push(vec![
                cell(&pair.name),
                cell(self.replicas),
                cell(violations),
                cell(max_excess),
                cell(drift_bad),
                cell(identical),
            ]);
            out.check(
                &format!("{}_ordering", pair.name),
                pair.anchor,
                &format!("no node with u' > u'' + {} over all replicas and steps", self.tolerance),
                Some(violations as f64),
                Verdict::from_bool(violations == 0),
            );
            out.check(
                &format!("{}_mollified_order", pair.name),
                Anchor::Oracle,
                "G_ε b' ≤ G_ε b'' on [-4, 4]",
                Some(drift_bad as f64),
                Verdict::from_bool(drift_bad == 0),
            );
            if pair.lower == pair.upper && pair.lower_initial == pair.upper_initial {
                out.check(
                    &format!("{}_identical", pair.name),
                    Anchor::Sanity,
                    "identical configurations give bit-identical fields",
                    None,
                    Verdict::from_bool(identical),
                );
            }
        }
        out.tables.push(table);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_comparable_pair_rejected() {
        let text = r#"
            seed = 1
            replicas = 2
            [[pairs]]
            name = "bad"
            lower = { type = "dirac", weight = 1.0 }
            upper = { type = "zero" }
        "#;
        let cfg: ComparisonConfig = toml::from_str(text).unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("bad"), "{err}");
    }

    #[test]
    fn unordered_initial_data_rejected() {
        let text = r#"
            seed = 1
            replicas = 2
            [[pairs]]
            name = "init"
            lower = { type = "zero" }
            upper = { type = "zero" }
            lower_initial = { shape = "constant", value = 1.0 }
        "#;
        let cfg: ComparisonConfig = toml::from_str(text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ordered_initial_data_stay_ordered() {
        let cfg = ComparisonConfig {
            seed: 4,
            replicas: 6,
            pairs: vec![ComparisonPair {
                name: "shifted".into(),
                lower: DriftSpec::dirac(1.0),
                upper: DriftSpec::dirac(1.0),
                lower_initial: InitialCondition::Cosine { amplitude: 0.2, mode: 1, offset: -0.3 },
                upper_initial: InitialCondition::Cosine { amplitude: 0.2, mode: 1, offset: -0.2 },
                anchor: Anchor::Theory,
            }],
            eps: 1.0 / 16.0,
            domain: DomainKind::PeriodicUnit,
            nx: 16,
            horizon: 0.1,
            scheme: Scheme::ExplicitEuler,
            tolerance: 1e-9,
        };
        cfg.validate().unwrap();
        let out = cfg.run().unwrap();
        assert!(out.checks.iter().all(|c| c.verdict == Verdict::Pass), "{:?}", out.checks);
    }
}

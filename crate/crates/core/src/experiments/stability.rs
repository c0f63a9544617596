//! Cauchy trend of the mollification ladder under common noise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{cell, domain_from, ensure, Anchor, Outcome, Table};
use crate::analysis::{map_replicas, Verdict};
use crate::drift::{DriftSpec, MollifiedDrift};
use crate::error::{Error, Result};
use crate::grid::{SnapshotPlan, SpaceTimeGrid};
use crate::kernel::DomainKind;
use crate::noise::NoiseRealization;
use crate::scheme::Scheme;
use crate::solver::{solve_coupled, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityCase {
    pub name: String,
    pub drift: DriftSpec,
    #[serde(default = "oracle")]
    pub anchor: Anchor,
    /// Replica count for this case (default: the experiment's).
    #[serde(default)]
    pub replicas: Option<usize>,
}

fn oracle() -> Anchor {
    Anchor::Oracle
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub seed: u64,
    pub replicas: usize,
    #[serde(default = "default_cases")]
    pub cases: Vec<StabilityCase>,
    /// `n` of `ε_n = 1/n`; each rung compares `ε_n` with `ε_{2n}`.
    #[serde(default = "ladder")]
    pub ladder: Vec<u32>,
    #[serde(default = "periodic")]
    pub domain: DomainKind,
    #[serde(default = "nx")]
    pub nx: usize,
    #[serde(default = "horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Snapshots per run forming the space-time window of the supremum.
    #[serde(default = "snapshots")]
    pub snapshots: usize,
    /// Required ratio between the first and the last median distance.
    #[serde(default = "contraction")]
    pub contraction: f64,
}

fn default_cases() -> Vec<StabilityCase> {
    vec![
        StabilityCase { name: "skew".into(), drift: DriftSpec::dirac(1.0), anchor: Anchor::Theory, replicas: None },
        StabilityCase {
            name: "two_atoms".into(),
            drift: DriftSpec::FiniteMeasure {
                atoms: vec![
                    crate::drift::Atom { location: 0.0, weight: 1.0 },
                    crate::drift::Atom { location: 0.5, weight: 0.5 },
                ],
            },
            anchor: Anchor::Oracle,
            replicas: None,
        },
        StabilityCase {
            name: "constant".into(),
            drift: DriftSpec::Constant { value: 1.0 },
            anchor: Anchor::Sanity,
            replicas: Some(4),
        },
    ]
}
fn ladder() -> Vec<u32> {
    vec![4, 8, 16, 32, 64]
}
fn periodic() -> DomainKind {
    DomainKind::PeriodicUnit
}
fn nx() -> usize {
    128
}
fn horizon() -> f64 {
    0.25
}
fn snapshots() -> usize {
    64
}
fn contraction() -> f64 {
    4.0
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.replicas >= 1, "replicas must be positive")?;
        ensure(self.ladder.len() >= 2, "ladder needs at least two rungs")?;
        ensure(self.ladder.windows(2).all(|w| w[1] == 2 * w[0]), "ladder must double at each rung")?;
        ensure(self.horizon > 0.0 && self.nx >= 4, "horizon and nx must be positive")?;
        ensure(self.snapshots >= 1, "snapshots must be positive")?;
        for c in &self.cases {
            c.drift.validate().map_err(|e| Error::Config(format!("case {}: {e}", c.name)))?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome> {
        let domain = domain_from(self.domain)?;
        let grid = SpaceTimeGrid::for_domain(&domain, self.nx, super::default_ratio(), self.horizon)?;
        // every ε of the ladder, finest last
        let mut ns: Vec<u32> = self.ladder.clone();
        ns.push(2 * self.ladder[self.ladder.len() - 1]);
        let every = (grid.nt / self.snapshots).max(1);
        let mut out = Outcome::default();
        let mut table = Table::new("ladder", &["case", "n", "eps", "median_distance", "mean_distance", "max_distance"]);
        for case in &self.cases {
            let drifts = ns
                .iter()
                .map(|&n| MollifiedDrift::new(&case.drift, 1.0 / n as f64).map(Arc::new))
                .collect::<Result<Vec<_>>>()?;
            let replicas = case.replicas.unwrap_or(self.replicas);
            let per: Vec<Vec<f64>> = map_replicas(replicas, |r| {
                let noise = NoiseRealization::seeded(grid, self.seed, r as u64);
                let cfgs: Vec<SolverConfig> = drifts
                    .iter()
                    .map(|d| {
                        SolverConfig::new(domain, grid, d.clone(), noise.clone())
                            .with_scheme(self.scheme)
                            .with_snapshots(SnapshotPlan::Every(every))
                    })
                    .collect();
                let bundles = solve_coupled(&cfgs)?;
                Ok((0..self.ladder.len())
                    .map(|i| {
                        let (a, b) = (&bundles[i].u, &bundles[i + 1].u);
                        (0..a.len())
                            .flat_map(|k| a.row(k).iter().zip(b.row(k)).map(|(x, y)| (x - y).abs()))
                            .fold(0.0, f64::max)
                    })
                    .collect())
            })?;
            let medians: Vec<f64> = (0..self.ladder.len()).map(|i| median(per.iter().map(|r| r[i]).collect())).collect();
            for (i, &n) in self.ladder.iter().enumerate() {
                let col: Vec<f64> = per.iter().map(|r| r[i]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let max = col.iter().copied().fold(0.0, f64::max);
                table.push(vec![cell(&case.name), cell(n), cell(1.0 / n as f64), cell(medians[i]), cell(mean), cell(max)]);
            }
            let first = medians[0];
            let last = *medians.last().unwrap_or(&first);
            let all_zero = per.iter().all(|r| r.iter().all(|&d| d <= 1e-12));
            let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
            let ok = all_zero || (decreasing && last * self.contraction <= first);
            out.check(
                &format!("{}_cauchy_trend", case.name),
                case.anchor,
                &format!(
                    "median sup-distance strictly decreasing along the ladder and last ≤ first / {} (or identically 0)",
                    self.contraction
                ),
                Some(if last > 0.0 { first / last } else { f64::INFINITY }),
                Verdict::from_bool(ok),
            );
            out.metric(&format!("{}_medians", case.name), &medians);
            out.metric(&format!("{}_monotone", case.name), decreasing || all_zero);
        }
        out.tables.push(table);
        out.metric("window", format!("[0, {}] × all nodes, every {every} steps", grid.horizon()));
        Ok(out)
    }
}

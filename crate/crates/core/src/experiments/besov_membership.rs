//! Besov-home plateau tests for the drift catalog.

use serde::{Deserialize, Serialize};

use super::{cell, ensure, Anchor, Outcome, Table};
use crate::analysis::Verdict;
use crate::besov::{bminus_convergence, translation_bounds_check, AnalysisGrid, BesovIndex, Integrability, PlateauReport, SpectralFunction};
use crate::drift::DriftSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovCase {
    pub name: String,
    pub drift: DriftSpec,
    pub p: Vec<Integrability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovMembershipConfig {
    /// Unused by the deterministic computation; kept for a uniform schema.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicas: usize,
    #[serde(default = "default_cases")]
    pub cases: Vec<BesovCase>,
    /// Relative spread allowed across the plateau window.
    #[serde(default = "tolerance")]
    pub plateau_tolerance: f64,
    /// Index shift above the critical index for the growth test.
    #[serde(default = "shift")]
    pub growth_shift: f64,
    /// Lowest block of the plateau window.
    #[serde(default = "two")]
    pub j_min: i32,
    #[serde(default = "half_width")]
    pub half_width: f64,
    #[serde(default = "log2_n")]
    pub log2_n: u32,
    /// Mollification times of the `B^{γ-}` convergence check of `G_ε δ₀`.
    #[serde(default = "ladder")]
    pub mollification_ladder: Vec<f64>,
}

fn default_cases() -> Vec<BesovCase> {
    let two_inf = vec![Integrability(2.0), Integrability::INFINITY];
    let four_inf = vec![Integrability(4.0), Integrability::INFINITY];
    vec![
        BesovCase { name: "dirac".into(), drift: DriftSpec::dirac(1.0), p: two_inf.clone() },
        BesovCase { name: "principal_value".into(), drift: DriftSpec::PrincipalValue { weight: 1.0 }, p: two_inf },
        BesovCase {
            name: "power_law_plus".into(),
            drift: DriftSpec::PowerLawPlus { alpha: -0.5, weight: 1.0 },
            p: four_inf.clone(),
        },
        BesovCase { name: "power_law_minus".into(), drift: DriftSpec::PowerLawMinus { alpha: -0.5, weight: 1.0 }, p: four_inf },
    ]
}
fn tolerance() -> f64 {
    0.2
}
fn shift() -> f64 {
    0.25
}
fn two() -> i32 {
    2
}
fn half_width() -> f64 {
    16.0
}
fn log2_n() -> u32 {
    14
}
fn ladder() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625, 0.03125, 0.015625]
}

impl BesovMembershipConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.cases.is_empty(), "cases must not be empty")?;
        for c in &self.cases {
            c.drift.validate().map_err(|e| Error::Config(format!("case {}: {e}", c.name)))?;
            ensure(!c.p.is_empty(), format!("case {}: p must not be empty", c.name))?;
        }
        ensure(self.plateau_tolerance > 0.0, "plateau_tolerance must be positive")?;
        ensure(self.growth_shift > 0.0, "growth_shift must be positive")?;
        ensure(self.mollification_ladder.windows(2).all(|w| w[1] < w[0]), "mollification_ladder must decrease")?;
        Ok(())
    }

    pub fn run(&self) -> Result<Outcome> {
        let grid = AnalysisGrid::new(self.half_width, self.log2_n)?;
        let mut out = Outcome::default();
        let mut blocks = Table::new("blocks", &["case", "p", "gamma", "j", "block_norm", "weighted"]);
        let mut summary = Table::new("plateaus", &["case", "p", "gamma", "spread", "shifted_log2_slope"]);
        for case in &self.cases {
            let f = SpectralFunction::from_drift(grid, &case.drift)?;
            for &p in &case.p {
                let gamma = case.drift.critical_index(p.value()).ok_or_else(|| {
                    Error::Config(format!("case {}: drift has no catalogued Besov home", case.name))
                })?;
                let idx = BesovIndex::new(gamma, p.value())?;
                let rep = f.besov_norm(idx);
                let window = rep.window(self.j_min, rep.j_max_full);
                let plateau = PlateauReport::from_blocks(&window)?;
                let shifted = f.besov_norm(idx.with_gamma(gamma + self.growth_shift));
                let growth = PlateauReport::from_blocks(&shifted.window(self.j_min, shifted.j_max_full))?;
                for b in &rep.blocks {
                    blocks.push(vec![
                        cell(&case.name),
                        cell(p),
                        cell(gamma),
                        cell(b.j),
                        cell(b.block_norm),
                        cell(b.weighted),
                    ]);
                }
                summary.push(vec![cell(&case.name), cell(p), cell(gamma), cell(plateau.spread), cell(growth.log2_slope)]);
                out.check(
                    &format!("{}_plateau_p{p}", case.name),
                    Anchor::Theory,
                    &format!("weighted blocks at the critical index vary by at most {}", self.plateau_tolerance),
                    Some(plateau.spread),
                    Verdict::from_bool(plateau.is_plateau(self.plateau_tolerance)),
                );
                out.check(
                    &format!("{}_shifted_growth_p{p}", case.name),
                    Anchor::Theory,
                    &format!("index raised by {} grows by at least 0.8× that rate per block", self.growth_shift),
                    Some(growth.log2_slope),
                    Verdict::from_bool(growth.shows_growth(self.growth_shift)),
                );
            }
        }
        out.tables.push(blocks);
        out.tables.push(summary);

        // B^{γ-} convergence of the canonical mollifications of δ₀
        let dirac = SpectralFunction::dirac(grid);
        let seq = self.mollification_ladder.iter().map(|&e| dirac.mollify(e)).collect::<Result<Vec<_>>>()?;
        let idx = BesovIndex::new(-1.0, f64::INFINITY)?;
        let probes = [-1.1, -1.25];
        let bm = bminus_convergence(&seq, &dirac, idx, &probes)?;
        let mut t = Table::new("mollification_ladder", &["eps", "norm", "distance_probe_1", "distance_probe_2"]);
        for (i, &e) in self.mollification_ladder.iter().enumerate() {
            t.push(vec![cell(e), cell(bm.norms[i]), cell(bm.distances[0][i]), cell(bm.distances[1][i])]);
        }
        out.tables.push(t);
        out.check(
            "mollified_dirac_bminus",
            Anchor::Oracle,
            "G_ε δ₀ bounded in B^{-1}_∞ and converging in B^{γ'}_∞ for γ' < -1",
            bm.final_distances.first().copied(),
            Verdict::from_bool(bm.bounded && bm.monotone),
        );
        let tr = translation_bounds_check(&dirac, BesovIndex::new(-0.5, 2.0)?, 0.5, &[0.01, 0.1, 0.5])?;
        out.check(
            "translation_invariance_p2",
            Anchor::Sanity,
            "‖f(a+·)‖ equals ‖f‖ to 1e-10 for p = 2",
            Some(tr.invariance_error),
            Verdict::from_bool(tr.invariance_error <= 1e-10),
        );
        out.metric("translation_first_difference_ratios", &tr.first_difference_ratios);
        out.metric("j_max_full", grid.j_max_full());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalogue_passes() {
        let cfg: BesovMembershipConfig = toml::from_str("").unwrap();
        let out = cfg.run().unwrap();
        for c in &out.checks {
            assert_eq!(c.verdict, Verdict::Pass, "{c:?}");
        }
        assert_eq!(out.checks.iter().filter(|c| c.name.contains("plateau")).count(), 8);
    }

    #[test]
    fn wrong_home_is_detected() {
        // δ₀ probed as if it were a power law of exponent -1/2: the index is
        // too high by 1/2, so the plateau must fail
        let cfg = BesovMembershipConfig {
            cases: vec![BesovCase { name: "d".into(), drift: DriftSpec::dirac(1.0), p: vec![Integrability(2.0)] }],
            ..toml::from_str("").unwrap()
        };
        let grid = AnalysisGrid::new(cfg.half_width, cfg.log2_n).unwrap();
        let f = SpectralFunction::from_drift(grid, &DriftSpec::dirac(1.0)).unwrap();
        let rep = f.besov_norm(BesovIndex::new(-0.5 + 0.5, 2.0).unwrap());
        let pl = PlateauReport::from_blocks(&rep.window(2, rep.j_max_full)).unwrap();
        assert!(!pl.is_plateau(cfg.plateau_tolerance));
    }
}

//! Halving dx (with dt = dx²/4) moves fixed-point statistics of the solution
//! by less than their Monte-Carlo error at the default resolution.

use std::sync::Arc;

use skewheat::analysis::{map_replicas, MeanEstimate};
use skewheat::drift::{DriftSpec, MollifiedDrift};
use skewheat::grid::{SnapshotPlan, SpaceTimeGrid};
use skewheat::kernel::DomainSpec;
use skewheat::noise::NoiseRealization;
use skewheat::solver::{solve, SolverConfig};

const REPLICAS: usize = 400;
const HORIZON: f64 = 0.25;

/// Per replica: node averages of `V_T²` and `|K_T|` (nodes are exchangeable
/// on the periodic grid).
fn statistics(nx: usize, seed: u64) -> (MeanEstimate, MeanEstimate) {
    let d = DomainSpec::periodic();
    let g = SpaceTimeGrid::for_domain(&d, nx, 0.25, HORIZON).unwrap();
    let drift = Arc::new(MollifiedDrift::new(&DriftSpec::dirac(1.0), 1.0 / 16.0).unwrap());
    let per = map_replicas(REPLICAS, |r| {
        let cfg = SolverConfig::new(d, g, drift.clone(), NoiseRealization::seeded(g, seed, r as u64))
            .with_snapshots(SnapshotPlan::Every(g.nt));
        let b = solve(cfg)?;
        let last = b.u.len() - 1;
        let n = nx as f64;
        Ok((
            b.v.row(last).iter().map(|x| x * x).sum::<f64>() / n,
            b.k.row(last).iter().map(|x| x.abs()).sum::<f64>() / n,
        ))
    })
    .unwrap();
    let v: Vec<f64> = per.iter().map(|p| p.0).collect();
    let k: Vec<f64> = per.iter().map(|p| p.1).collect();
    (MeanEstimate::from_samples(&v).unwrap(), MeanEstimate::from_samples(&k).unwrap())
}

#[test]
fn halving_dx_stays_within_monte_carlo_error() {
    let (v64, k64) = statistics(64, 21);
    let (v128, k128) = statistics(128, 22);
    for (name, a, b) in [("Var V_T(x)", v64, v128), ("E|K_T(x)|", k64, k128)] {
        let diff = (a.value - b.value).abs();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        println!("{name}: dx=1/64 {:.5} ± {:.5}, dx=1/128 {:.5} ± {:.5}", a.value, a.stderr, b.value, b.stderr);
        assert!(diff <= 3.0 * se, "{name}: |{} − {}| = {diff} > 3·{se}", a.value, b.value);
    }
}

//! Monte-Carlo statistics and exponent extraction.
//!
//! Every estimator reduces per-replica values in replica order after a
//! parallel map, so results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::drift::MollifiedDrift;
use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::kernel::gaussian;
use crate::noise::{aux_rng, NoiseRealization};
use crate::scheme::{HeatStepper, Scheme};
use crate::solver::{StepObserver, StepView};

/// Auxiliary stream id of the bootstrap resampler.
pub const BOOTSTRAP_PURPOSE: u64 = 1;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_REPLICAS: usize = 100;

/// Compensated (Neumaier) sum.
pub fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    stable_sum(values.iter().copied()) / values.len() as f64
}

fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(replica) => Err(Error::NonFiniteSample { replica }),
        None => Ok(()),
    }
}

/// Evaluates `f(replica)` for every replica in parallel, in replica order.
pub fn map_replicas<T, F>(replicas: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..replicas).into_par_iter().map(f).collect()
}

/// Sample mean with its analytic standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        check_finite(samples)?;
        let n = samples.len();
        if n < 2 {
            return Err(Error::TooFewReplicas(format!("a mean needs at least 2 samples, got {n}")));
        }
        let mean = stable_mean(samples);
        let var = stable_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
        Ok(Self { value: mean, stderr: (var / n as f64).sqrt(), samples: n })
    }

    /// `|value - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target).abs() / self.stderr
        }
    }
}

/// `‖X‖_{L_m}` with a bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub m: f64,
    pub value: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl MomentEstimate {
    /// From per-replica values of `|X|^m` (possibly already averaged over
    /// exchangeable nodes within the replica).
    pub fn from_powers(powers: &[f64], m: f64, seed: u64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::invalid(format!("moment order must be ≥ 1, got {m}")));
        }
        check_finite(powers)?;
        let n = powers.len();
        if n < MIN_REPLICAS {
            return Err(Error::TooFewReplicas(format!("need at least {MIN_REPLICAS} replicas, got {n}")));
        }
        let mean = stable_mean(powers);
        if m > 2.0 && mean > 0.0 {
            // heavy moments: require the m-th moment itself to be resolved
            let rel = MeanEstimate::from_samples(powers)?.stderr / mean;
            if rel > 0.25 {
                return Err(Error::TooFewReplicas(format!(
                    "relative error {rel:.2} of the order-{m} moment is too large for {n} replicas"
                )));
            }
        }
        let value = mean.powf(1.0 / m);
        let mut rng = aux_rng(seed, 0, BOOTSTRAP_PURPOSE);
        let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
        for _ in 0..BOOTSTRAP_RESAMPLES {
            let s = stable_sum((0..n).map(|_| powers[rng.random_range(0..n)])) / n as f64;
            boots.push(s.powf(1.0 / m));
        }
        let bm = stable_mean(&boots);
        let var = stable_sum(boots.iter().map(|b| (b - bm) * (b - bm))) / (BOOTSTRAP_RESAMPLES - 1) as f64;
        Ok(Self { m, value, stderr: var.sqrt(), replicas: n })
    }

    pub fn from_samples(samples: &[f64], m: f64, seed: u64) -> Result<Self> {
        check_finite(samples)?;
        let powers: Vec<f64> = samples.iter().map(|x| x.abs().powf(m)).collect();
        Self::from_powers(&powers, m, seed)
    }
}

/// Bootstrap standard error of a statistic of replica-indexed data:
/// `stat` receives resampled replica indices.
pub fn bootstrap_stderr<F>(replicas: usize, seed: u64, purpose: u64, stat: F) -> f64
where
    F: Fn(&[usize]) -> f64,
{
    let mut rng = aux_rng(seed, 0, purpose);
    let mut idx = vec![0usize; replicas];
    let mut boots = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for i in idx.iter_mut() {
            *i = rng.random_range(0..replicas);
        }
        boots.push(stat(&idx));
    }
    let bm = stable_mean(&boots);
    (stable_sum(boots.iter().map(|b| (b - bm) * (b - bm))) / (BOOTSTRAP_RESAMPLES - 1) as f64).sqrt()
}

/// `‖X‖_{L_m}` for a replica-indexed scalar functional.
pub fn estimate_moment<F>(sampler: F, m: f64, replicas: usize, seed: u64) -> Result<MomentEstimate>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    if replicas < MIN_REPLICAS {
        return Err(Error::TooFewReplicas(format!("need at least {MIN_REPLICAS} replicas, got {replicas}")));
    }
    let samples = map_replicas(replicas, sampler)?;
    MomentEstimate::from_samples(&samples, m, seed)
}

/// Outcome of a check against a stated rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }
}

/// Minimum coefficient of determination for a conclusive exponent fit.
pub const MIN_RSQUARED: f64 = 0.98;

/// Least-squares slope of `log(value)` against `log(scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
    pub rsquared: f64,
    /// 95% confidence half-width of the exponent.
    pub half_width: f64,
}

impl SlopeFit {
    pub fn fit(scales: &[f64], values: &[f64], stderrs: &[f64]) -> Result<Self> {
        let n = scales.len();
        if n != values.len() || n != stderrs.len() {
            return Err(Error::invalid("scales, values and errors must have equal length"));
        }
        if n < 4 {
            return Err(Error::invalid(format!("a slope fit needs at least 4 scales, got {n}")));
        }
        if scales.iter().chain(values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("slope fits need positive finite scales and values"));
        }
        let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scales.iter().copied().fold(0.0, f64::max);
        let dyadic_levels = (hi / lo).log2().round() as usize + 1;
        if hi / lo < 100.0 && dyadic_levels < 6 {
            return Err(Error::invalid(format!(
                "scales span {:.3} decades / {dyadic_levels} dyadic levels; need 2 decades or 6 levels",
                (hi / lo).log10()
            )));
        }
        let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let nf = n as f64;
        let mx = stable_sum(xs.iter().copied()) / nf;
        let my = stable_sum(ys.iter().copied()) / nf;
        let sxx = stable_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
        let sxy = stable_sum(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)));
        let syy = stable_sum(ys.iter().map(|y| (y - my) * (y - my)));
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse = stable_sum(xs.iter().zip(&ys).map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        }))
        .max(0.0);
        let rsquared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::invalid(e.to_string()))?.inverse_cdf(0.975);
        Ok(Self {
            scales: scales.to_vec(),
            values: values.to_vec(),
            stderrs: stderrs.to_vec(),
            exponent: slope,
            intercept,
            rsquared,
            half_width: t * se,
        })
    }

    /// Pass iff the exponent lies within `target ± tol`; a poor fit
    /// (`R² < 0.98`) is inconclusive rather than failed.
    pub fn band_verdict(&self, target: f64, tol: f64) -> Verdict {
        if self.rsquared < MIN_RSQUARED {
            Verdict::Inconclusive
        } else {
            Verdict::from_bool((self.exponent - target).abs() <= tol)
        }
    }
}

/// `z ← A z + f` (explicit) or `z ← A (z + f)` (semi-implicit): the same
/// update the solver applies to its drift part.
#[inline]
fn accumulate(stepper: &HeatStepper, z: &mut [f64], forcing: &[f64], scratch: &mut [f64]) {
    stepper.advance(z, forcing, scratch);
}

/// Streaming estimator of `K_t - A^{t-s} K_s` over dyadic windows.
///
/// Level `l` tiles `[0, T]` with windows of `gap_steps[l]` steps; on each
/// window an auxiliary array restarts at zero and is driven by the drift
/// increments of the solve, so at the window end it equals
/// `K_t - A^{t-s} K_s` exactly. The mean of its square over the nodes is
/// recorded per window.
pub struct VClassObserver {
    gap_steps: Vec<usize>,
    z: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    /// `records[l][w]` = mean over nodes of `z²` at the end of window `w`.
    pub records: Vec<Vec<f64>>,
}

impl VClassObserver {
    pub fn new(nx: usize, nt: usize, gap_steps: &[usize]) -> Result<Self> {
        for &g in gap_steps {
            if g == 0 || nt % g != 0 {
                return Err(Error::invalid(format!("gap of {g} steps does not tile {nt} steps")));
            }
        }
        Ok(Self {
            gap_steps: gap_steps.to_vec(),
            z: vec![vec![0.0; nx]; gap_steps.len()],
            scratch: vec![0.0; nx],
            records: gap_steps.iter().map(|g| Vec::with_capacity(nt / g)).collect(),
        })
    }
}

impl StepObserver for VClassObserver {
    fn observe(&mut self, view: &StepView<'_>) -> Result<()> {
        for (l, &g) in self.gap_steps.iter().enumerate() {
            let z = &mut self.z[l];
            accumulate(view.stepper, z, view.drift_increment, &mut self.scratch);
            if view.step % g == 0 {
                let ms = stable_sum(z.iter().map(|x| x * x)) / z.len() as f64;
                self.records[l].push(ms);
                z.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(())
    }
}

/// Per-gap row of the class-`V(κ)` table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gap: f64,
    /// `sup_s ‖K_t - P_{t-s} K_s‖_{L_2}` over the windows of this gap.
    pub sup_norm: f64,
    pub sup_stderr: f64,
    /// Window start attaining the supremum.
    pub argmax_start: f64,
    /// The same norm pooled over all windows of this gap.
    pub pooled_norm: f64,
    pub pooled_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderSeminormReport {
    pub kappa: f64,
    pub m: f64,
    pub replicas: usize,
    pub rows: Vec<GapRow>,
    /// `sup_gap sup_norm / gap^κ`.
    pub seminorm: f64,
    /// `(s, t)` attaining the seminorm; `x` is pooled over exchangeable nodes.
    pub maximizer: (f64, f64),
}

/// Combines per-replica window records (`records[replica][level][window]`).
pub fn vclass_seminorm(records: &[Vec<Vec<f64>>], gaps: &[f64], kappa: f64) -> Result<HolderSeminormReport> {
    if !(kappa > 0.0 && kappa < 1.0 + 1e-12) {
        return Err(Error::invalid(format!("probe exponent must lie in (0, 1], got {kappa}")));
    }
    let n = records.len();
    if n < 2 {
        return Err(Error::TooFewReplicas("class-V seminorm needs at least 2 replicas".into()));
    }
    let mut rows = Vec::new();
    let mut seminorm = 0.0f64;
    let mut maximizer = (0.0, 0.0);
    for (l, &gap) in gaps.iter().enumerate() {
        let windows = records[0][l].len();
        let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
        let mut pooled_per_replica = vec![0.0; n];
        for w in 0..windows {
            let col: Vec<f64> = records.iter().map(|r| r[l][w]).collect();
            let est = MeanEstimate::from_samples(&col)?;
            for (p, c) in pooled_per_replica.iter_mut().zip(&col) {
                *p += c / windows as f64;
            }
            if est.value > best.0 {
                best = (est.value, est.stderr, w);
            }
        }
        let pooled = MeanEstimate::from_samples(&pooled_per_replica)?;
        let root = |e: (f64, f64)| {
            let v = e.0.max(0.0).sqrt();
            // delta method for the square root
            (v, if v > 0.0 { e.1 / (2.0 * v) } else { e.1.sqrt() })
        };
        let (sup_norm, sup_stderr) = root((best.0, best.1));
        let (pooled_norm, pooled_stderr) = root((pooled.value, pooled.stderr));
        let start = best.2 as f64 * gap;
        rows.push(GapRow { gap, sup_norm, sup_stderr, argmax_start: start, pooled_norm, pooled_stderr });
        let ratio = sup_norm / gap.powf(kappa);
        if ratio > seminorm {
            seminorm = ratio;
            maximizer = (start, start + gap);
        }
    }
    Ok(HolderSeminormReport { kappa, m: 2.0, replicas: n, rows, seminorm, maximizer })
}

/// Occupation-type functionals `Z_h(x) = Σ_{r<h} A^{h-r} dt·b(V_r + κ)` of
/// the stochastic convolution, recorded at the steps `record_steps`
/// (windows `[0, h]`, evaluated at time `h`) for each offset `κ`.
///
/// Returns `[offset][record][node]`.
pub fn occupation_functionals(
    stepper: &HeatStepper,
    grid: &SpaceTimeGrid,
    noise: &NoiseRealization,
    drift: &MollifiedDrift,
    offsets: &[f64],
    record_steps: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let nx = grid.nx;
    let last = record_steps.iter().copied().max().unwrap_or(0);
    if last > grid.nt {
        return Err(Error::invalid(format!("record step {last} beyond the grid horizon")));
    }
    let mut v = vec![0.0; nx];
    let mut forcing = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    let mut z = vec![vec![0.0; nx]; offsets.len()];
    let mut d = vec![0.0; nx];
    let mut out = vec![Vec::with_capacity(record_steps.len()); offsets.len()];
    for step in 0..last {
        for (j, &kappa) in offsets.iter().enumerate() {
            for (di, &vi) in d.iter_mut().zip(&v) {
                *di = grid.dt * drift.eval(vi + kappa);
            }
            accumulate(stepper, &mut z[j], &d, &mut scratch);
        }
        noise.forcing_row(step, &mut forcing);
        stepper.advance(&mut v, &forcing, &mut scratch);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        if record_steps.contains(&(step + 1)) {
            for (o, zj) in out.iter_mut().zip(&z) {
                o.push(zj.clone());
            }
        }
    }
    Ok(out)
}

/// Variance of the noise part of `V` accumulated over `j` steps, for
/// `j = 0..=max_steps` (node independent on periodic grids).
pub fn conditional_variances(stepper: &HeatStepper, grid: &SpaceTimeGrid, max_steps: usize) -> Vec<f64> {
    let nx = stepper.nx();
    let mut x = vec![0.0; nx];
    x[0] = 1.0;
    let mut scratch = vec![0.0; nx];
    let mut out = Vec::with_capacity(max_steps + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for _ in 0..max_steps {
        if stepper.scheme() == Scheme::SemiImplicitLinear {
            stepper.advance_free(&mut x, &mut scratch);
        }
        acc += stable_sum(x.iter().map(|v| v * v));
        if stepper.scheme() == Scheme::ExplicitEuler {
            stepper.advance_free(&mut x, &mut scratch);
        }
        out.push(acc * grid.dt / grid.dx);
    }
    out
}

/// Dyadic sums `A^k_{0,T}` of the conditional occupation germ
/// `A_{s,t} = Σ_{s≤r<t} A^{T-r} dt·E[g_ε(V_r + κ) | F_s]` for `k = 0..=k_max`,
/// at every node; `T = n_steps · dt`.
///
/// On the grid, `V_r = A^{r-s} V_s + (independent Gaussian of variance
/// σ²_{r-s})`, so the conditional expectation is `g_{ε+σ²_{r-s}}(A^{r-s}V_s + κ)`.
/// The finest level with one-step intervals equals the additive functional.
#[allow(clippy::too_many_arguments)]
pub fn occupation_sewing_levels(
    stepper: &HeatStepper,
    grid: &SpaceTimeGrid,
    noise: &NoiseRealization,
    eps: f64,
    kappa: f64,
    n_steps: usize,
    k_max: u32,
    variances: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if stepper.boundary() != crate::scheme::Boundary::Periodic {
        return Err(Error::invalid("the conditional germ needs a translation-invariant (periodic) grid"));
    }
    let intervals = 1usize << k_max;
    if n_steps % intervals != 0 || n_steps > grid.nt {
        return Err(Error::invalid(format!("{n_steps} steps cannot be split into {intervals} intervals")));
    }
    if variances.len() <= n_steps {
        return Err(Error::invalid("conditional variance table too short"));
    }
    let nx = grid.nx;
    let levels = k_max as usize + 1;
    let mut v = vec![0.0; nx];
    let mut w = vec![vec![0.0; nx]; levels];
    let mut z = vec![vec![0.0; nx]; levels];
    let mut forcing = vec![0.0; nx];
    let mut d = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    for step in 0..n_steps {
        for k in 0..levels {
            let len = n_steps >> k;
            let j = step % len;
            if j == 0 {
                w[k].copy_from_slice(&v);
            }
            let var = eps + variances[j];
            for (di, &wi) in d.iter_mut().zip(&w[k]) {
                *di = grid.dt * gaussian(var, wi + kappa);
            }
            accumulate(stepper, &mut z[k], &d, &mut scratch);
            stepper.advance_free(&mut w[k], &mut scratch);
        }
        noise.forcing_row(step, &mut forcing);
        stepper.advance(&mut v, &forcing, &mut scratch);
    }
    Ok(z)
}

/// A two-time functional on a scalar path sampled at grid steps.
pub trait Germ {
    fn eval(&self, s: usize, t: usize) -> f64;
}

/// `A_{s,t} = 𝒜_t - 𝒜_s` for a stored path `𝒜`.
pub struct AdditiveGerm<'a>(pub &'a [f64]);

impl Germ for AdditiveGerm<'_> {
    fn eval(&self, s: usize, t: usize) -> f64 {
        self.0[t] - self.0[s]
    }
}

/// Left-point Riemann germ `A_{s,t} = X_s (t - s) dt` of `∫ X_r dr`.
pub struct RiemannGerm<'a> {
    pub path: &'a [f64],
    pub dt: f64,
}

impl Germ for RiemannGerm<'_> {
    fn eval(&self, s: usize, t: usize) -> f64 {
        self.path[s] * (t - s) as f64 * self.dt
    }
}

/// `A^k_{0,n}` for `k = 0..=k_max` (n divisible by `2^{k_max}`).
pub fn dyadic_sums<G: Germ + ?Sized>(germ: &G, n: usize, k_max: u32) -> Result<Vec<f64>> {
    if n % (1usize << k_max) != 0 {
        return Err(Error::invalid(format!("{n} steps cannot be split into 2^{k_max} intervals")));
    }
    Ok((0..=k_max)
        .map(|k| {
            let len = n >> k;
            // plain left-to-right sum: exact cancellation must survive for
            // additive germs on dyadic-valued paths
            (0..1usize << k).map(|i| germ.eval(i * len, (i + 1) * len)).sum()
        })
        .collect())
}

/// Rounds a path onto the lattice `2^-40 ℤ` so sums of increments are exact.
pub fn quantize_path(path: &[f64]) -> Vec<f64> {
    let scale = 2f64.powi(40);
    path.iter().map(|x| (x * scale).round() / scale).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SewingReport {
    /// `‖A^{k+1} - A^k‖_{L_2}` for `k = 0..k_max-1`.
    pub differences: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Levels used in the fit.
    pub fit_levels: Vec<u32>,
    /// Geometric decay rate per level (`‖A^{k+1}-A^k‖ ≈ C 2^{-k·rate}`).
    pub rate: Option<f64>,
    pub fit: Option<SlopeFit>,
    /// All differences are exactly zero.
    pub identically_zero: bool,
}

/// Fits the per-level decay of `‖A^{k+1} - A^k‖_{L_2}` from per-replica
/// mean squared differences `sq[replica][k]`, using levels `k ≥ k_min`.
pub fn sewing_rate(sq: &[Vec<f64>], k_min: u32) -> Result<SewingReport> {
    let n = sq.len();
    if n < 2 {
        return Err(Error::TooFewReplicas("sewing rate needs at least 2 replicas".into()));
    }
    let levels = sq[0].len();
    let mut differences = Vec::with_capacity(levels);
    let mut stderrs = Vec::with_capacity(levels);
    for k in 0..levels {
        let col: Vec<f64> = sq.iter().map(|r| r[k]).collect();
        let est = MeanEstimate::from_samples(&col)?;
        let v = est.value.max(0.0).sqrt();
        differences.push(v);
        stderrs.push(if v > 0.0 { est.stderr / (2.0 * v) } else { 0.0 });
    }
    let identically_zero = sq.iter().all(|r| r.iter().all(|&x| x == 0.0));
    let fit_levels: Vec<u32> = (k_min..levels as u32).collect();
    let (rate, fit) = if identically_zero || fit_levels.len() < 4 {
        (None, None)
    } else {
        let scales: Vec<f64> = fit_levels.iter().map(|&k| 2f64.powi(-(k as i32))).collect();
        let vals: Vec<f64> = fit_levels.iter().map(|&k| differences[k as usize]).collect();
        let errs: Vec<f64> = fit_levels.iter().map(|&k| stderrs[k as usize]).collect();
        if vals.iter().any(|v| *v <= 0.0) {
            (None, None)
        } else {
            let f = SlopeFit::fit(&scales, &vals, &errs)?;
            (Some(f.exponent), Some(f))
        }
    };
    Ok(SewingReport { differences, stderrs, fit_levels, rate, fit, identically_zero })
}

//! The drift catalog: smooth functions, Dirac masses, the principal value
//! `ζ⁻¹`, one-sided power laws `ζ^α_±`, finite atomic measures and their
//! sums, together with their heat mollifications `G_ε b`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernel::gaussian;

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Dawson's integral `D(x) = e^{-x²} ∫_0^x e^{t²} dt`.
///
/// Rybicki's sampling formula `D(x) = π^{-1/2} Σ_{n odd} e^{-(x-nh)²}/n`
/// with `h = 0.2` has aliasing error of order `e^{-(π/2h)²} ≈ 1e-27`;
/// terms are summed around the even integer nearest to `x/h`.
pub fn dawson(x: f64) -> f64 {
    const H: f64 = 0.2;
    const K: i64 = 41;
    if x.abs() < 1e-4 {
        return x * (1.0 - 2.0 * x * x / 3.0);
    }
    if x.abs() > 1e7 {
        return 0.5 / x;
    }
    let n0 = 2 * (0.5 * x / H).round() as i64;
    let xi = x - n0 as f64 * H;
    let mut acc = 0.0;
    let mut k = -K;
    while k <= K {
        let n = n0 + k;
        let d = xi - k as f64 * H;
        acc += (-d * d).exp() / n as f64;
        k += 2;
    }
    acc / PI.sqrt()
}

/// `G_ε ζ⁻¹(u) = PV ∫ g_ε(u - x)/x dx = √(2/ε) D(u/√(2ε))`.
pub fn mollified_principal_value(eps: f64, u: f64) -> f64 {
    (2.0 / eps).sqrt() * dawson(u / (2.0 * eps).sqrt())
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `∫_0^∞ φ(w - s) s^α ds` with `φ` the standard normal density.
///
/// The substitution `t = s^{1+α}` removes the endpoint singularity.
pub fn power_law_profile(alpha: f64, w: f64) -> f64 {
    let b = 1.0 + alpha;
    let upper = (w.max(0.0) + 12.0).powf(b);
    let inv_b = 1.0 / b;
    simpson(|t| std_normal_pdf(w - t.powf(inv_b)), 0.0, upper, 4000) * inv_b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Bounded continuous profiles used as concrete drifts and as the input of
/// the scaling-limit experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum SmoothProfile {
    /// `1_{[0,1]}`.
    UnitIndicator,
    /// `x / (1 + x²)`.
    OddRational,
    /// `(1 + |x|)^{2ρ-3}`.
    PowerDecay { rho: f64 },
    /// Gaussian density with the given variance.
    Gaussian { variance: f64 },
}

impl SmoothProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SmoothProfile::UnitIndicator => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            SmoothProfile::OddRational => x / (1.0 + x * x),
            SmoothProfile::PowerDecay { rho } => (1.0 + x.abs()).powf(2.0 * rho - 3.0),
            SmoothProfile::Gaussian { variance } => gaussian(variance, x),
        }
    }

    /// `∫ f(x) e^{-iξx} dx` where it exists as a function.
    pub fn fourier(&self, xi: f64) -> Option<Complex64> {
        match *self {
            SmoothProfile::UnitIndicator => Some(if xi.abs() < 1e-8 {
                Complex64::new(1.0, -0.5 * xi)
            } else {
                (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -xi)) / Complex64::new(0.0, xi)
            }),
            SmoothProfile::OddRational => Some(Complex64::new(0.0, -PI * xi.signum() * (-xi.abs()).exp())),
            SmoothProfile::Gaussian { variance } => Some(Complex64::new((-0.5 * variance * xi * xi).exp(), 0.0)),
            SmoothProfile::PowerDecay { .. } => None,
        }
    }

    /// `lim_{R→∞} ∫_{-R}^{R} f`, when it exists.
    pub fn integral(&self) -> Option<f64> {
        match *self {
            SmoothProfile::UnitIndicator | SmoothProfile::Gaussian { .. } => Some(1.0),
            SmoothProfile::OddRational => Some(0.0),
            SmoothProfile::PowerDecay { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SmoothProfile::PowerDecay { rho } if !(1.0..1.5).contains(&rho) => {
                Err(Error::invalid(format!("power-decay exponent ρ must lie in [1, 3/2), got {rho}")))
            }
            SmoothProfile::Gaussian { variance } if !(variance > 0.0) => {
                Err(Error::invalid("Gaussian profile variance must be positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingNormalization {
    /// `f_λ(x) = λ^{3-2ρ} f(λx)`.
    #[default]
    Homogeneous,
    /// `f_λ(x) = λ^{3/2-ρ} f(λ^{1/2} x)`; equals the homogeneous family at `√λ`.
    Spde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaling {
    pub lambda: f64,
    pub rho: f64,
    #[serde(default)]
    pub normalization: ScalingNormalization,
}

impl Scaling {
    /// `(amplitude, dilation)` with `f_λ(x) = amplitude · f(dilation · x)`.
    pub fn factors(&self) -> (f64, f64) {
        let mu = match self.normalization {
            ScalingNormalization::Homogeneous => self.lambda,
            ScalingNormalization::Spde => self.lambda.sqrt(),
        };
        (mu.powf(3.0 - 2.0 * self.rho), mu)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("scale λ must be positive, got {}", self.lambda)));
        }
        if !(1.0..1.5).contains(&self.rho) {
            return Err(Error::invalid(format!("scaling exponent ρ must lie in [1, 3/2), got {}", self.rho)));
        }
        Ok(())
    }
}

/// A drift `b`, possibly a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Constant {
        value: f64,
    },
    Smooth {
        profile: SmoothProfile,
        #[serde(default = "one")]
        weight: f64,
        #[serde(default)]
        scaling: Option<Scaling>,
    },
    Dirac {
        weight: f64,
        #[serde(default)]
        location: f64,
    },
    PrincipalValue {
        weight: f64,
    },
    PowerLawPlus {
        alpha: f64,
        weight: f64,
    },
    PowerLawMinus {
        alpha: f64,
        weight: f64,
    },
    FiniteMeasure {
        atoms: Vec<Atom>,
    },
    LinearCombination {
        children: Vec<DriftSpec>,
    },
}

fn one() -> f64 {
    1.0
}

/// Limiting constants of a profile under the scaling family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LimitConstants {
    /// `f(x) ≈ c/x` at infinity and `∫_{|x|≤λ} f → c₀`.
    Critical { c: f64, c0: f64 },
    /// `f(x)|x|^{3-2ρ} → c_±`.
    Homogeneous { c_minus: f64, c_plus: f64 },
}

impl DriftSpec {
    pub fn dirac(weight: f64) -> Self {
        DriftSpec::Dirac { weight, location: 0.0 }
    }

    pub fn smooth(profile: SmoothProfile) -> Self {
        DriftSpec::Smooth { profile, weight: 1.0, scaling: None }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be finite")))
            }
        };
        match self {
            DriftSpec::Zero => Ok(()),
            DriftSpec::Constant { value } => finite(*value, "constant drift"),
            DriftSpec::Smooth { profile, weight, scaling } => {
                finite(*weight, "profile weight")?;
                profile.validate()?;
                if let Some(s) = scaling {
                    s.validate()?;
                }
                Ok(())
            }
            DriftSpec::Dirac { weight, location } => {
                finite(*weight, "Dirac weight")?;
                finite(*location, "Dirac location")
            }
            DriftSpec::PrincipalValue { weight } => finite(*weight, "principal-value weight"),
            DriftSpec::PowerLawPlus { alpha, weight } | DriftSpec::PowerLawMinus { alpha, weight } => {
                finite(*weight, "power-law weight")?;
                if !(*alpha > -1.0 && *alpha < 0.0) {
                    return Err(Error::invalid(format!("power-law exponent must lie in (-1, 0), got {alpha}")));
                }
                Ok(())
            }
            DriftSpec::FiniteMeasure { atoms } => {
                for a in atoms {
                    finite(a.location, "atom location")?;
                    finite(a.weight, "atom weight")?;
                }
                Ok(())
            }
            DriftSpec::LinearCombination { children } => children.iter().try_for_each(|c| c.validate()),
        }
    }

    /// Atomic part (Dirac masses and measures) and the remaining parts.
    fn split_atoms(&self) -> (Vec<Atom>, Vec<DriftSpec>) {
        match self {
            DriftSpec::Zero => (vec![], vec![]),
            DriftSpec::Dirac { weight, location } => (vec![Atom { location: *location, weight: *weight }], vec![]),
            DriftSpec::FiniteMeasure { atoms } => (atoms.clone(), vec![]),
            DriftSpec::LinearCombination { children } => {
                let mut atoms = Vec::new();
                let mut rest = Vec::new();
                for c in children {
                    let (a, r) = c.split_atoms();
                    atoms.extend(a);
                    rest.extend(r);
                }
                (atoms, rest)
            }
            other => (vec![], vec![other.clone()]),
        }
    }

    /// `self ⪯ other`: `other - self` is a nonnegative finite measure.
    ///
    /// Decided structurally: the non-atomic parts must coincide and the
    /// atom weights of the difference, merged by location, must be ≥ 0.
    pub fn dominated_by(&self, other: &DriftSpec) -> bool {
        let (a, ra) = self.split_atoms();
        let (b, rb) = other.split_atoms();
        if ra != rb {
            return false;
        }
        let mut diff: Vec<(f64, f64)> = Vec::new();
        for (atom, sign) in b.iter().map(|x| (x, 1.0)).chain(a.iter().map(|x| (x, -1.0))) {
            match diff.iter_mut().find(|(loc, _)| *loc == atom.location) {
                Some(entry) => entry.1 += sign * atom.weight,
                None => diff.push((atom.location, sign * atom.weight)),
            }
        }
        diff.iter().all(|&(_, w)| w >= -1e-15)
    }

    /// Critical Besov regularity `γ(p)` of the catalog entry, if it is a
    /// distribution with a known home.
    pub fn critical_index(&self, p: f64) -> Option<f64> {
        let inv_p = if p.is_infinite() { 0.0 } else { 1.0 / p };
        match self {
            DriftSpec::Dirac { .. } | DriftSpec::FiniteMeasure { .. } => Some(-1.0 + inv_p),
            DriftSpec::PrincipalValue { .. } if p > 1.0 => Some(-1.0 + inv_p),
            DriftSpec::PowerLawPlus { alpha, .. } | DriftSpec::PowerLawMinus { alpha, .. } if p > 1.0 / alpha.abs() => {
                Some(alpha + inv_p)
            }
            DriftSpec::LinearCombination { children } => {
                children.iter().map(|c| c.critical_index(p)).try_fold(f64::INFINITY, |acc, g| g.map(|g| acc.min(g)))
            }
            _ => None,
        }
    }

    /// Fourier symbol `∫ b(x) e^{-iξx} dx` (distributional where needed) and
    /// the order `σ` of its singularity `|ξ|^{-σ}` at the origin.
    pub fn symbol(&self, xi: f64) -> Option<Complex64> {
        match self {
            DriftSpec::Zero => Some(Complex64::new(0.0, 0.0)),
            DriftSpec::Dirac { weight, location } => Some(Complex64::from_polar(*weight, -xi * location)),
            DriftSpec::FiniteMeasure { atoms } => {
                Some(atoms.iter().map(|a| Complex64::from_polar(a.weight, -xi * a.location)).sum())
            }
            DriftSpec::PrincipalValue { weight } => Some(Complex64::new(0.0, -PI * weight * xi.signum())),
            DriftSpec::PowerLawPlus { alpha, weight } | DriftSpec::PowerLawMinus { alpha, weight } => {
                if xi == 0.0 {
                    return Some(Complex64::new(f64::INFINITY, 0.0));
                }
                let plus = matches!(self, DriftSpec::PowerLawPlus { .. });
                let b = 1.0 + alpha;
                let phase = if plus { -0.5 * PI * b * xi.signum() } else { 0.5 * PI * b * xi.signum() };
                Some(Complex64::from_polar(weight * gamma(b) * xi.abs().powf(-b), phase))
            }
            DriftSpec::Smooth { profile, weight, scaling } => {
                let (amp, dil) = scaling.map(|s| s.factors()).unwrap_or((1.0, 1.0));
                profile.fourier(xi / dil).map(|v| v * (weight * amp / dil))
            }
            DriftSpec::Constant { .. } => None,
            DriftSpec::LinearCombination { children } => {
                children.iter().map(|c| c.symbol(xi)).try_fold(Complex64::new(0.0, 0.0), |acc, s| s.map(|s| acc + s))
            }
        }
    }

    /// Singularity order of the symbol at `ξ = 0`.
    pub fn symbol_singularity(&self) -> f64 {
        match self {
            DriftSpec::PowerLawPlus { alpha, .. } | DriftSpec::PowerLawMinus { alpha, .. } => 1.0 + alpha,
            DriftSpec::LinearCombination { children } => {
                children.iter().map(|c| c.symbol_singularity()).fold(0.0, f64::max)
            }
            _ => 0.0,
        }
    }

    /// Pointwise value for function-valued drifts.
    pub fn eval(&self, x: f64) -> Option<f64> {
        match self {
            DriftSpec::Zero => Some(0.0),
            DriftSpec::Constant { value } => Some(*value),
            DriftSpec::Smooth { profile, weight, scaling } => {
                let (amp, dil) = scaling.map(|s| s.factors()).unwrap_or((1.0, 1.0));
                Some(weight * amp * profile.eval(dil * x))
            }
            DriftSpec::PowerLawPlus { alpha, weight } => Some(if x > 0.0 { weight * x.powf(*alpha) } else { 0.0 }),
            DriftSpec::PowerLawMinus { alpha, weight } => Some(if x < 0.0 { weight * (-x).powf(*alpha) } else { 0.0 }),
            DriftSpec::LinearCombination { children } => {
                children.iter().map(|c| c.eval(x)).try_fold(0.0, |acc, v| v.map(|v| acc + v))
            }
            _ => None,
        }
    }

    /// `f_λ` for a smooth profile.
    pub fn scaled(&self, scaling: Scaling) -> Result<DriftSpec> {
        scaling.validate()?;
        match self {
            DriftSpec::Smooth { profile, weight, scaling: None } => {
                Ok(DriftSpec::Smooth { profile: *profile, weight: *weight, scaling: Some(scaling) })
            }
            _ => Err(Error::invalid("only unscaled smooth profiles have a scaling family")),
        }
    }

    /// Numerically extracted limit constants: `c, c₀` for `ρ = 1` (tail `c/x`,
    /// central mass `c₀`), `c_±` of the tails `f(x)|x|^{3-2ρ}` otherwise.
    pub fn limit_constants(&self, rho: f64) -> Result<LimitConstants> {
        let f = |x: f64| self.eval(x).ok_or_else(|| Error::invalid("limit constants need a function-valued drift"));
        let stable = |a: f64, b: f64, what: &str| {
            if (a - b).abs() <= 1e-3 * (1.0 + a.abs()) {
                Ok(b)
            } else {
                Err(Error::invalid(format!("limit constant {what} does not stabilize: {a} vs {b}")))
            }
        };
        if !(1.0..1.5).contains(&rho) {
            return Err(Error::invalid(format!("scaling exponent ρ must lie in [1, 3/2), got {rho}")));
        }
        if rho == 1.0 {
            let tail = |x: f64| -> Result<f64> { Ok(0.5 * x * (f(x)? - f(-x)?)) };
            let c = stable(tail(1e5)?, tail(1e7)?, "c")?;
            // ∫_{|x|≤R} f: the odd 1/x tail cancels, the remainder converges
            let c0 = match self {
                DriftSpec::Smooth { profile, weight, scaling } => {
                    let (amp, dil) = scaling.map(|s| s.factors()).unwrap_or((1.0, 1.0));
                    let mass = profile.integral().ok_or_else(|| {
                        Error::invalid("limit constant c0 does not stabilize: profile mass diverges")
                    })?;
                    weight * amp / dil * mass
                }
                _ => return Err(Error::invalid("limit constants need a smooth profile")),
            };
            Ok(LimitConstants::Critical { c, c0 })
        } else {
            let a = 3.0 - 2.0 * rho;
            let plus = |x: f64| -> Result<f64> { Ok(f(x)? * x.powf(a)) };
            let minus = |x: f64| -> Result<f64> { Ok(f(-x)? * x.powf(a)) };
            let c_plus = stable(plus(1e6)?, plus(1e9)?, "c+")?;
            let c_minus = stable(minus(1e6)?, minus(1e9)?, "c-")?;
            Ok(LimitConstants::Homogeneous { c_minus, c_plus })
        }
    }

    /// Limiting distribution of the scaling family `f_λ` as `λ → ∞`.
    pub fn scaling_limit_target(&self, rho: f64) -> Result<DriftSpec> {
        let round = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
        match self.limit_constants(rho)? {
            LimitConstants::Critical { c, c0 } => {
                let mut children = Vec::new();
                if round(c) != 0.0 {
                    children.push(DriftSpec::PrincipalValue { weight: c });
                }
                if round(c0) != 0.0 {
                    children.push(DriftSpec::dirac(c0));
                }
                Ok(collapse(children))
            }
            LimitConstants::Homogeneous { c_minus, c_plus } => {
                let alpha = 2.0 * rho - 3.0;
                let mut children = Vec::new();
                if round(c_minus) != 0.0 {
                    children.push(DriftSpec::PowerLawMinus { alpha, weight: c_minus });
                }
                if round(c_plus) != 0.0 {
                    children.push(DriftSpec::PowerLawPlus { alpha, weight: c_plus });
                }
                Ok(collapse(children))
            }
        }
    }
}

fn collapse(mut children: Vec<DriftSpec>) -> DriftSpec {
    match children.len() {
        0 => DriftSpec::Zero,
        1 => children.pop().unwrap_or(DriftSpec::Zero),
        _ => DriftSpec::LinearCombination { children },
    }
}

/// Approximation of the identity used to regularize the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// Heat semigroup `G_ε`.
    #[default]
    Heat,
    /// Compactly supported `exp(-1/(1-y²))` bump with variance `ε`.
    Bump,
}

/// `(normalizing constant, variance)` of the unit bump `exp(-1/(1-y²))`.
fn bump_moments() -> (f64, f64) {
    static MOMENTS: OnceLock<(f64, f64)> = OnceLock::new();
    *MOMENTS.get_or_init(|| {
        let raw = |y: f64| if y.abs() < 1.0 { (-1.0 / (1.0 - y * y)).exp() } else { 0.0 };
        let mass = simpson(raw, -1.0, 1.0, 20000);
        let second = simpson(|y| y * y * raw(y), -1.0, 1.0, 20000) / mass;
        (1.0 / mass, second)
    })
}

/// Uniform table with four-point Lagrange interpolation.
#[derive(Debug)]
pub struct Table {
    lo: f64,
    h: f64,
    values: Vec<f64>,
    out_of_range: AtomicU64,
}

impl Table {
    pub fn build<F: Fn(f64) -> f64>(lo: f64, hi: f64, points: usize, f: F) -> Self {
        let points = points.max(8);
        let h = (hi - lo) / (points - 1) as f64;
        let values = (0..points).map(|i| f(lo + i as f64 * h)).collect();
        Self { lo, h, values, out_of_range: AtomicU64::new(0) }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.lo + self.h * (self.values.len() - 1) as f64)
    }

    pub fn out_of_range(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.lo) / self.h;
        if !(s >= 0.0 && s <= (n - 1) as f64) {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
            return if s < 0.0 || s.is_nan() { self.values[0] } else { self.values[n - 1] };
        }
        let i = (s.floor() as usize).clamp(1, n - 3);
        let t = s - i as f64;
        let (y0, y1, y2, y3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // Lagrange basis on nodes -1, 0, 1, 2
        let a = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let b = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let c = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let d = (t + 1.0) * t * (t - 1.0) / 6.0;
        a * y0 + b * y1 + c * y2 + d * y3
    }
}

#[derive(Debug, Clone)]
enum Part {
    Constant(f64),
    Gauss { weight: f64, location: f64 },
    Bump { weight: f64, location: f64, half_width: f64, norm: f64 },
    Indicator { weight: f64, a: f64, b: f64 },
    Table(Arc<Table>),
}

/// `G_ε b` as an evaluable function.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    spec: DriftSpec,
    eps: f64,
    mollifier: Mollifier,
    parts: Vec<Part>,
    sqrt_eps: f64,
    gauss_norm: f64,
    range: f64,
}

/// Default half-width of the `u`-range covered by interpolation tables.
pub const DEFAULT_TABLE_RANGE: f64 = 8.0;

impl MollifiedDrift {
    pub fn new(spec: &DriftSpec, eps: f64) -> Result<Self> {
        Self::with_options(spec, eps, Mollifier::Heat, DEFAULT_TABLE_RANGE)
    }

    pub fn with_options(spec: &DriftSpec, eps: f64, mollifier: Mollifier, range: f64) -> Result<Self> {
        spec.validate()?;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("mollification level must be positive, got {eps}")));
        }
        if !(range > 0.0) {
            return Err(Error::invalid("table range must be positive"));
        }
        let mut out = Self {
            spec: spec.clone(),
            eps,
            mollifier,
            parts: Vec::new(),
            sqrt_eps: eps.sqrt(),
            gauss_norm: 1.0 / (2.0 * PI * eps).sqrt(),
            range,
        };
        out.collect_parts(spec)?;
        Ok(out)
    }

    fn table_points(&self) -> usize {
        (2.0 * self.range / (self.sqrt_eps / 32.0)).ceil() as usize + 1
    }

    fn push_atom(&mut self, weight: f64, location: f64) {
        match self.mollifier {
            Mollifier::Heat => self.parts.push(Part::Gauss { weight, location }),
            Mollifier::Bump => {
                let (norm, var) = bump_moments();
                let half_width = (self.eps / var).sqrt();
                self.parts.push(Part::Bump { weight, location, half_width, norm: norm / half_width });
            }
        }
    }

    fn collect_parts(&mut self, spec: &DriftSpec) -> Result<()> {
        let r = self.range;
        let eps = self.eps;
        let heat_only = |m: Mollifier| {
            if m == Mollifier::Heat {
                Ok(())
            } else {
                Err(Error::invalid("the bump mollifier is only available for atomic drifts"))
            }
        };
        match spec {
            DriftSpec::Zero => {}
            DriftSpec::Constant { value } => self.parts.push(Part::Constant(*value)),
            DriftSpec::Dirac { weight, location } => self.push_atom(*weight, *location),
            DriftSpec::FiniteMeasure { atoms } => {
                for a in atoms {
                    self.push_atom(a.weight, a.location);
                }
            }
            DriftSpec::PrincipalValue { weight } => {
                heat_only(self.mollifier)?;
                let w = *weight;
                let t = Table::build(-r, r, self.table_points(), |u| w * mollified_principal_value(eps, u));
                self.parts.push(Part::Table(Arc::new(t)));
            }
            DriftSpec::PowerLawPlus { alpha, weight } | DriftSpec::PowerLawMinus { alpha, weight } => {
                heat_only(self.mollifier)?;
                let sign = if matches!(spec, DriftSpec::PowerLawPlus { .. }) { 1.0 } else { -1.0 };
                let (a, w, se) = (*alpha, *weight, self.sqrt_eps);
                let scale = eps.powf(0.5 * a);
                let points = self.table_points().min(20001);
                let t = Table::build(-r, r, points, |u| w * scale * power_law_profile(a, sign * u / se));
                self.parts.push(Part::Table(Arc::new(t)));
            }
            DriftSpec::Smooth { profile, weight, scaling } => {
                heat_only(self.mollifier)?;
                let (amp, dil) = scaling.map(|s| s.factors()).unwrap_or((1.0, 1.0));
                let w = weight * amp;
                match *profile {
                    SmoothProfile::UnitIndicator => {
                        self.parts.push(Part::Indicator { weight: w, a: 0.0, b: 1.0 / dil })
                    }
                    SmoothProfile::Gaussian { variance } => {
                        // f(dil·x) = g_v(dil·x) = g_{v/dil²}(x) / dil
                        let v = variance / (dil * dil) + eps;
                        let t = Table::build(-r, r, self.table_points(), |u| w / dil * gaussian(v, u));
                        self.parts.push(Part::Table(Arc::new(t)));
                    }
                    p => {
                        let se = self.sqrt_eps;
                        let t = Table::build(-r, r, self.table_points().min(20001), |u| {
                            w * simpson(|z| std_normal_pdf(z) * p.eval(dil * (u - se * z)), -10.0, 10.0, 4000)
                        });
                        self.parts.push(Part::Table(Arc::new(t)));
                    }
                }
            }
            DriftSpec::LinearCombination { children } => {
                for c in children {
                    self.collect_parts(c)?;
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &DriftSpec {
        &self.spec
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mollifier(&self) -> Mollifier {
        self.mollifier
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    /// `(G_ε b)(u)`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.parts {
            acc += match *p {
                Part::Constant(c) => c,
                Part::Gauss { weight, location } => {
                    let z = u - location;
                    weight * self.gauss_norm * (-0.5 * z * z / self.eps).exp()
                }
                Part::Bump { weight, location, half_width, norm } => {
                    let y = (u - location) / half_width;
                    if y.abs() < 1.0 {
                        weight * norm * (-1.0 / (1.0 - y * y)).exp()
                    } else {
                        0.0
                    }
                }
                Part::Indicator { weight, a, b } => {
                    weight * (normal_cdf((u - a) / self.sqrt_eps) - normal_cdf((u - b) / self.sqrt_eps))
                }
                Part::Table(ref t) => t.eval(u),
            };
        }
        acc
    }

    /// Number of table lookups outside the tabulated range so far.
    pub fn out_of_range_events(&self) -> u64 {
        self.parts
            .iter()
            .map(|p| match p {
                Part::Table(t) => t.out_of_range(),
                _ => 0,
            })
            .sum()
    }

    /// `(sup |G_ε b|, sup |(G_ε b)'|)` over the table range, sampled on a
    /// grid finer than the mollification scale.
    pub fn sup_and_lipschitz(&self) -> (f64, f64) {
        let mut lo = -self.range;
        let mut hi = self.range;
        for p in &self.parts {
            match *p {
                Part::Gauss { location, .. } | Part::Bump { location, .. } => {
                    lo = lo.min(location - 1.0);
                    hi = hi.max(location + 1.0);
                }
                _ => {}
            }
        }
        let h = self.sqrt_eps / 64.0;
        let n = ((hi - lo) / h).ceil() as usize;
        let mut sup = 0.0f64;
        let mut lip = 0.0f64;
        let mut prev = self.eval(lo);
        // probing must not count as out-of-range use
        for i in 1..=n {
            let x = (lo + i as f64 * h).min(hi);
            let v = self.eval(x);
            sup = sup.max(v.abs());
            lip = lip.max((v - prev).abs() / h);
            prev = v;
        }
        (sup, lip)
    }

    /// Enforces the coupling `dt · ‖G_ε b‖_{C¹} < 1` between time step and
    /// mollification level.
    pub fn check_stability(&self, dt: f64) -> Result<f64> {
        let (sup, lip) = self.sup_and_lipschitz();
        let c1 = sup + lip;
        if dt * c1 >= 1.0 {
            return Err(Error::Stability(format!(
                "dt·‖G_ε b‖_C¹ = {} ≥ 1 (dt = {dt}, ε = {})",
                dt * c1,
                self.eps
            )));
        }
        Ok(dt * lip)
    }
}

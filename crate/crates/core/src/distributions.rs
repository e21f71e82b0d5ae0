//! Standardized (zero-mean, unit-variance) source laws.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{IcaError, Result};
use crate::nonlinearity::{Nonlinearity, Shape};
use crate::quadrature::{self, Rule};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Half-width of the smoothing used for `|x|^a` scores with `a < 2`; the
/// exact score is singular (or discontinuous) at the origin.
pub const SCORE_SMOOTHING: f64 = 0.01;

/// Tail cut-off in units of `(β|x|)^α`: the neglected mass is below `e^{-200}`.
const GG_TAIL: f64 = 200.0;

/// Absolute tolerance for 1-D moments.
const MOMENT_TOL: f64 = 1e-12;

/// A standardized source law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    /// Uniform on `(-√3, √3)`.
    Uniform,
    /// Laplace with scale `1/√2`.
    Laplace,
    /// Density proportional to `exp(-(β|x|)^α)` with `β` fixing unit variance.
    GeneralizedGaussian { alpha: f64 },
    /// Equal-variance two-component Gaussian mixture with component means
    /// `mu1`, `mu2` and weight `p = |mu2|/(|mu1|+|mu2|)` on the first.
    Bimodal { mu1: f64, mu2: f64 },
    /// Equiprobable `±1`.
    Bpsk,
    /// Law of `√2·sin(U)` with `U` uniform on `(0, 2π)`.
    Sinus,
    /// Standard normal.
    Gaussian,
}

/// One Gaussian component (or a point mass when `sd == 0`) of a source law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Fourth moment, excess kurtosis and `E[g'(s) - s·g(s)]` of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub fourth_moment: f64,
    pub excess_kurtosis: f64,
    pub gee_gap: f64,
}

impl DistributionSpec {
    /// Checks the parameter constraints of the law.
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::GeneralizedGaussian { alpha } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(IcaError::Parameter(format!(
                        "generalized Gaussian exponent must be positive, got {alpha}"
                    )));
                }
            }
            DistributionSpec::Bimodal { mu1, mu2 } => {
                if !(mu1.is_finite() && mu2.is_finite()) || mu1 == 0.0 || mu2 == 0.0 {
                    return Err(IcaError::Parameter(format!(
                        "bimodal means must be finite and non-zero, got ({mu1}, {mu2})"
                    )));
                }
                if mu1.signum() == mu2.signum() {
                    return Err(IcaError::Parameter(format!(
                        "bimodal means must have opposite signs, got ({mu1}, {mu2})"
                    )));
                }
                let prod = (mu1 * mu2).abs();
                let discrete = mu1.abs() == 1.0 && mu2.abs() == 1.0;
                if prod > 1.0 || (prod == 1.0 && !discrete) {
                    return Err(IcaError::Parameter(format!(
                        "bimodal means need |mu1·mu2| < 1, got ({mu1}, {mu2})"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `(p, σ²)` of a bimodal law.
    fn bimodal_parts(mu1: f64, mu2: f64) -> (f64, f64) {
        let p = mu2.abs() / (mu1.abs() + mu2.abs());
        (p, (1.0 - (mu1 * mu2).abs()).max(0.0))
    }

    /// Scale `β` of a generalized Gaussian with unit variance.
    fn gg_beta(alpha: f64) -> f64 {
        (ln_gamma(3.0 / alpha) - ln_gamma(1.0 / alpha)).exp().sqrt()
    }

    /// Exponent of the generalized-Gaussian family the law belongs to.
    fn gg_alpha(&self) -> Option<f64> {
        match *self {
            DistributionSpec::Laplace => Some(1.0),
            DistributionSpec::GeneralizedGaussian { alpha } => Some(alpha),
            _ => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        match *self {
            DistributionSpec::Gaussian => true,
            DistributionSpec::GeneralizedGaussian { alpha } => alpha == 2.0,
            _ => false,
        }
    }

    /// True for laws without a density (bpsk and the degenerate bimodal).
    pub fn is_discrete(&self) -> bool {
        match *self {
            DistributionSpec::Bpsk => true,
            DistributionSpec::Bimodal { mu1, mu2 } => Self::bimodal_parts(mu1, mu2).1 == 0.0,
            _ => false,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            DistributionSpec::Bimodal { mu1, mu2 } => mu1 == -mu2,
            _ => true,
        }
    }

    /// The law as a finite Gaussian mixture, when it is one.
    pub fn mixture_atoms(&self) -> Option<Vec<Atom>> {
        match *self {
            _ if self.is_gaussian() => Some(vec![Atom { weight: 1.0, mean: 0.0, sd: 1.0 }]),
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                let sd = s2.sqrt();
                Some(vec![
                    Atom { weight: p, mean: mu1, sd },
                    Atom { weight: 1.0 - p, mean: mu2, sd },
                ])
            }
            DistributionSpec::Bpsk => Some(vec![
                Atom { weight: 0.5, mean: -1.0, sd: 0.0 },
                Atom { weight: 0.5, mean: 1.0, sd: 0.0 },
            ]),
            _ => None,
        }
    }

    /// Draws `n` i.i.d. values.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if n == 0 {
            return Err(IcaError::Parameter("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![0.0; n];
        self.fill(&mut rng, &mut out);
        Ok(out)
    }

    /// Fills `out` with draws from `rng`. The law must be valid.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            DistributionSpec::Uniform => {
                for x in out {
                    *x = SQRT_3 * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            DistributionSpec::Laplace => {
                for x in out {
                    let e: f64 = Exp1.sample(rng);
                    *x = if rng.random::<bool>() { e } else { -e } / SQRT_2;
                }
            }
            DistributionSpec::GeneralizedGaussian { alpha } => {
                let beta = Self::gg_beta(alpha);
                let law = Gamma::new(1.0 / alpha, 1.0).expect("validated exponent");
                for x in out {
                    let r = law.sample(rng).powf(1.0 / alpha) / beta;
                    *x = if rng.random::<bool>() { r } else { -r };
                }
            }
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                let sd = s2.sqrt();
                for x in out {
                    let m = if rng.random::<f64>() < p { mu1 } else { mu2 };
                    let z: f64 = StandardNormal.sample(rng);
                    *x = m + sd * z;
                }
            }
            DistributionSpec::Bpsk => {
                for x in out {
                    *x = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            DistributionSpec::Sinus => {
                for x in out {
                    *x = SQRT_2 * (2.0 * PI * rng.random::<f64>()).sin();
                }
            }
            DistributionSpec::Gaussian => {
                for x in out {
                    *x = StandardNormal.sample(rng);
                }
            }
        }
    }

    fn require_density(&self) -> Result<()> {
        self.validate()?;
        if self.is_discrete() {
            return Err(IcaError::Unsupported(format!("{self} has no density")));
        }
        Ok(())
    }

    /// Probability density at `x`.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.require_density()?;
        Ok(self.density(x))
    }

    /// Derivative of the density at `x`.
    pub fn pdf_derivative(&self, x: f64) -> Result<f64> {
        self.require_density()?;
        let d = match *self {
            DistributionSpec::Uniform => 0.0,
            DistributionSpec::Sinus => {
                let q = 2.0 - x * x;
                if q <= 0.0 {
                    0.0
                } else {
                    x / (PI * q * q.sqrt())
                }
            }
            DistributionSpec::Gaussian => -x * self.density(x),
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                -p * (x - mu1) / s2 * normal_pdf(x, mu1, s2)
                    - (1.0 - p) * (x - mu2) / s2 * normal_pdf(x, mu2, s2)
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                if x == 0.0 {
                    0.0
                } else {
                    let beta = Self::gg_beta(alpha);
                    let ax = x.abs();
                    -self.density(x) * alpha * beta.powf(alpha) * ax.powf(alpha - 1.0) * x.signum()
                }
            }
        };
        Ok(d)
    }

    // Density without validation; callers guarantee a continuous, valid law.
    fn density(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Uniform => {
                if x.abs() <= SQRT_3 {
                    0.5 / SQRT_3
                } else {
                    0.0
                }
            }
            DistributionSpec::Sinus => {
                let q = 2.0 - x * x;
                if q <= 0.0 {
                    0.0
                } else {
                    1.0 / (PI * q.sqrt())
                }
            }
            DistributionSpec::Gaussian => normal_pdf(x, 0.0, 1.0),
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                p * normal_pdf(x, mu1, s2) + (1.0 - p) * normal_pdf(x, mu2, s2)
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                let beta = Self::gg_beta(alpha);
                alpha * beta / (2.0 * gamma(1.0 / alpha)) * (-(beta * x.abs()).powf(alpha)).exp()
            }
        }
    }

    /// Quantile function; used to map low-discrepancy points to the law.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(1e-300, 1.0 - 1e-16);
        match *self {
            DistributionSpec::Uniform => SQRT_3 * (2.0 * u - 1.0),
            DistributionSpec::Sinus => SQRT_2 * (PI * (u - 0.5)).sin(),
            DistributionSpec::Bpsk => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            _ if self.is_gaussian() => standard_normal().inverse_cdf(u),
            DistributionSpec::Gaussian => unreachable!(),
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                let sd = s2.sqrt();
                let n = standard_normal();
                let cdf = |x: f64| {
                    if sd == 0.0 {
                        p * f64::from(u8::from(x >= mu1)) + (1.0 - p) * f64::from(u8::from(x >= mu2))
                    } else {
                        p * n.cdf((x - mu1) / sd) + (1.0 - p) * n.cdf((x - mu2) / sd)
                    }
                };
                let (mut lo, mut hi) = (mu1.min(mu2) - 40.0, mu1.max(mu2) + 40.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * mid.abs().max(1.0) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                let beta = Self::gg_beta(alpha);
                let q = (2.0 * u - 1.0).abs();
                if alpha == 1.0 {
                    let r = -(-q).ln_1p() / beta;
                    return if u < 0.5 { -r } else { r };
                }
                let law = statrs::distribution::Gamma::new(1.0 / alpha, 1.0)
                    .expect("validated exponent");
                let r = law.inverse_cdf(q).powf(1.0 / alpha) / beta;
                if u < 0.5 {
                    -r
                } else {
                    r
                }
            }
        }
    }

    /// `E[f(s)]` by adaptive quadrature (continuous laws) or exact summation.
    pub fn expect(&self, f: &dyn Fn(f64) -> f64) -> Result<f64> {
        self.validate()?;
        if let Some(atoms) = self.mixture_atoms() {
            let mut total = 0.0;
            for a in atoms {
                if a.sd == 0.0 {
                    total += a.weight * f(a.mean);
                } else {
                    let g = |z: f64| f(a.mean + a.sd * z) * (-0.5 * z * z).exp();
                    let bp = [-40.0, -12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0, 40.0];
                    let v = quadrature::integrate(&g, &bp, MOMENT_TOL)?;
                    total += a.weight * v / (2.0 * PI).sqrt();
                }
            }
            return Ok(total);
        }
        match *self {
            DistributionSpec::Uniform => {
                let g = |x: f64| f(x);
                let v = quadrature::integrate(&g, &[-SQRT_3, 0.0, SQRT_3], MOMENT_TOL)?;
                Ok(v * 0.5 / SQRT_3)
            }
            DistributionSpec::Sinus => {
                // x = √2 sin t removes the inverse-square-root edges.
                let g = |t: f64| f(SQRT_2 * t.sin());
                let h = 0.5 * PI;
                let v = quadrature::integrate(&g, &[-h, 0.0, h], MOMENT_TOL)?;
                Ok(v / PI)
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                let beta = DistributionSpec::gg_beta(alpha);
                let edges: Vec<f64> = gg_edges(1.0, GG_TAIL, 40)
                    .into_iter()
                    .map(|u| u.powf(1.0 / alpha) / beta)
                    .collect();
                let mut bp: Vec<f64> = edges.iter().rev().map(|x| -x).collect();
                bp.extend(edges.iter().skip(1));
                let g = |x: f64| f(x) * self.density(x);
                quadrature::integrate(&g, &bp, MOMENT_TOL)
            }
        }
    }

    /// Fourth moment, excess kurtosis and the `g`-gap of the law.
    pub fn moments(&self, nl: &Nonlinearity) -> Result<MomentSet> {
        let fourth_moment = self.expect(&|x| x.powi(4))?;
        let gee_gap = self.expect(&|x| {
            let (g, gp) = nl.g_gprime(x);
            gp - x * g
        })?;
        Ok(MomentSet {
            fourth_moment,
            excess_kurtosis: fourth_moment - 3.0,
            gee_gap,
        })
    }

    /// Closed-form `E[s⁴]`.
    pub fn fourth_moment_exact(&self) -> f64 {
        match *self {
            DistributionSpec::Uniform => 1.8,
            DistributionSpec::Laplace => 6.0,
            DistributionSpec::GeneralizedGaussian { alpha } => {
                (ln_gamma(5.0 / alpha) + ln_gamma(1.0 / alpha) - 2.0 * ln_gamma(3.0 / alpha)).exp()
            }
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                let m4 = |m: f64| m.powi(4) + 6.0 * m * m * s2 + 3.0 * s2 * s2;
                p * m4(mu1) + (1.0 - p) * m4(mu2)
            }
            DistributionSpec::Bpsk => 1.0,
            DistributionSpec::Sinus => 1.5,
            DistributionSpec::Gaussian => 3.0,
        }
    }

    /// The score `-p'/p` of the law as a nonlinearity.
    pub fn score_function(&self) -> Result<Nonlinearity> {
        self.require_density()?;
        let name = format!("score[{self}]");
        let shape = match *self {
            _ if self.is_gaussian() => Shape::Quadratic,
            DistributionSpec::Bimodal { mu1, mu2 } => {
                let (p, s2) = Self::bimodal_parts(mu1, mu2);
                Shape::MixtureScore {
                    weights: vec![p, 1.0 - p],
                    means: vec![mu1, mu2],
                    var: s2,
                }
            }
            DistributionSpec::Sinus => Shape::ArcsineScore,
            DistributionSpec::Uniform => {
                return Err(IcaError::Unsupported(
                    "the uniform density is flat with jumps; its score carries no information"
                        .into(),
                ))
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                let coef = Self::gg_beta(alpha).powf(alpha);
                if alpha >= 2.0 {
                    Shape::AbsPower { coef, exponent: alpha }
                } else {
                    Shape::SmoothAbsPower { coef, exponent: alpha, eps: SCORE_SMOOTHING }
                }
            }
        };
        Ok(Nonlinearity::from_shape(name, shape))
    }

    /// An `n`-point Gauss rule for the law (fewer points for atomic laws).
    pub fn gauss_rule(&self, n: usize) -> Result<Rule> {
        self.validate()?;
        if n == 0 {
            return Err(IcaError::Parameter("a rule needs at least one node".into()));
        }
        if self.is_gaussian() {
            return Ok(quadrature::gauss_hermite(n));
        }
        match *self {
            DistributionSpec::Uniform => Ok(quadrature::gauss_legendre(n).mapped(0.0, SQRT_3, 0.5)),
            DistributionSpec::Sinus => {
                let mut rule = Rule {
                    nodes: (1..=n)
                        .map(|k| SQRT_2 * ((2 * k - 1) as f64 * PI / (2 * n) as f64).cos())
                        .collect(),
                    weights: vec![1.0 / n as f64; n],
                };
                rule.nodes.reverse();
                Ok(rule)
            }
            DistributionSpec::Bpsk | DistributionSpec::Bimodal { .. } if self.is_discrete() => {
                let atoms = self.mixture_atoms().expect("atomic law");
                Ok(Rule {
                    nodes: atoms.iter().map(|a| a.mean).collect(),
                    weights: atoms.iter().map(|a| a.weight).collect(),
                })
            }
            DistributionSpec::Bimodal { .. } => {
                let gh = quadrature::gauss_hermite((2 * n).max(128));
                let mut pts = Vec::new();
                let mut wts = Vec::new();
                for a in self.mixture_atoms().expect("mixture law") {
                    let r = gh.mapped(a.mean, a.sd, a.weight);
                    pts.extend(r.nodes);
                    wts.extend(r.weights);
                }
                quadrature::gauss_for_discrete(&pts, &wts, n)
            }
            _ => {
                let alpha = self.gg_alpha().expect("generalized Gaussian family");
                let (pts, wts) = self.gg_discretization(alpha, 16, 2.0, GG_TAIL, 40);
                quadrature::gauss_for_discrete(&pts, &wts, n)
            }
        }
    }

    /// Composite Gauss–Legendre rule for the heavy-tailed members (`α < 2`)
    /// of the generalized-Gaussian family: `per_panel` points on panels of width `step` in `(β|x|)^α`
    /// (graded geometrically towards the origin), up to `(β|x|)^α = tail`.
    pub fn composite_rule(&self, per_panel: usize, step: f64, tail: f64) -> Option<Rule> {
        let alpha = self.gg_alpha()?;
        if alpha >= 2.0 {
            return None;
        }
        let (nodes, weights) = self.gg_discretization(alpha, per_panel, step, tail, 20);
        let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Some(Rule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    // Composite Gauss–Legendre discretization of a generalized Gaussian,
    // with panels uniform in (β|x|)^α and geometrically graded towards 0.
    fn gg_discretization(
        &self,
        alpha: f64,
        per_panel: usize,
        step: f64,
        tail: f64,
        levels: i32,
    ) -> (Vec<f64>, Vec<f64>) {
        let gl = quadrature::gauss_legendre(per_panel);
        let beta = DistributionSpec::gg_beta(alpha);
        let edges = gg_edges(step, tail, levels);
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let to_x = |u: f64| u.powf(1.0 / alpha) / beta;
            for (z, gw) in gl.nodes.iter().zip(&gl.weights) {
                // Below α = 1 the density has a √x-type branch at 0 in x but
                // is smooth in u; above it the map u ↦ x is the singular one.
                let (x, mass) = if alpha < 1.0 {
                    let u = 0.5 * (a + b) + half * z;
                    let x = to_x(u);
                    (x, gw * half * self.density(x) * x / (alpha * u))
                } else {
                    let (xa, xb) = (to_x(a), to_x(b));
                    let x = 0.5 * (xa + xb) + 0.5 * (xb - xa) * z;
                    (x, gw * 0.5 * (xb - xa) * self.density(x))
                };
                if mass > 0.0 {
                    pts.push(x);
                    wts.push(mass);
                    pts.push(-x);
                    wts.push(mass);
                }
            }
        }
        (pts, wts)
    }
}

/// Panel edges in `u = (β x)^α` for a generalized Gaussian: geometric below 1,
/// then steps of `step` up to the tail cut-off.
fn gg_edges(step: f64, tail: f64, levels: i32) -> Vec<f64> {
    let mut us = vec![0.0];
    us.extend((1..=levels).rev().map(|k| 0.5f64.powi(k)));
    let mut u = 1.0;
    while u < tail {
        us.push(u);
        u += step;
    }
    us.push(tail);
    us
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistributionSpec::Uniform => f.write_str("uniform"),
            DistributionSpec::Laplace => f.write_str("laplace"),
            DistributionSpec::GeneralizedGaussian { alpha } => write!(f, "gg:{alpha}"),
            DistributionSpec::Bimodal { mu1, mu2 } if mu2 == -mu1 && mu1 > 0.0 => {
                write!(f, "bimod:{mu1}")
            }
            DistributionSpec::Bimodal { mu1, mu2 } => write!(f, "bimod:{mu1},{mu2}"),
            DistributionSpec::Bpsk => f.write_str("bpsk"),
            DistributionSpec::Sinus => f.write_str("sinus"),
            DistributionSpec::Gaussian => f.write_str("gaussian"),
        }
    }
}

fn parse_number(text: &str, literal: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| IcaError::Parse(format!("bad number `{text}` in distribution `{literal}`")))
}

impl FromStr for DistributionSpec {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s, None),
        };
        let spec = match (name.to_ascii_lowercase().as_str(), args) {
            ("uniform", None) => DistributionSpec::Uniform,
            ("laplace", None) => DistributionSpec::Laplace,
            ("bpsk", None) => DistributionSpec::Bpsk,
            ("sinus", None) => DistributionSpec::Sinus,
            ("gaussian", None) => DistributionSpec::Gaussian,
            ("gg", Some(a)) => DistributionSpec::GeneralizedGaussian { alpha: parse_number(a, s)? },
            ("bimod", Some(a)) => match a.split_once(',') {
                Some((m1, m2)) => DistributionSpec::Bimodal {
                    mu1: parse_number(m1, s)?,
                    mu2: parse_number(m2, s)?,
                },
                None => {
                    let m = parse_number(a, s)?;
                    DistributionSpec::Bimodal { mu1: m, mu2: -m }
                }
            },
            _ => return Err(IcaError::Parse(format!("unknown distribution `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a comma-separated list of distribution literals. Because
/// `bimod:-0.4,2` contains a comma, purely numeric items are joined to the
/// preceding literal. An item may end in `*k` to repeat it `k` times.
pub fn parse_distribution_list(text: &str) -> Result<Vec<DistributionSpec>> {
    let mut items: Vec<String> = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let head = token.split('*').next().unwrap_or("");
        let numeric = head.parse::<f64>().is_ok();
        match items.last_mut() {
            Some(prev) if numeric && prev.starts_with("bimod:") && !prev.contains(',') => {
                prev.push(',');
                prev.push_str(token);
            }
            _ => items.push(token.to_string()),
        }
    }
    let mut out = Vec::new();
    for item in items {
        let (literal, count) = match item.rsplit_once('*') {
            Some((lit, k)) => {
                let k: usize = k
                    .trim()
                    .parse()
                    .map_err(|_| IcaError::Parse(format!("bad repeat count in `{item}`")))?;
                (lit.to_string(), k)
            }
            None => (item.clone(), 1),
        };
        let spec: DistributionSpec = literal.parse()?;
        out.extend(std::iter::repeat_n(spec, count));
    }
    if out.is_empty() {
        return Err(IcaError::Parse("empty distribution list".into()));
    }
    Ok(out)
}

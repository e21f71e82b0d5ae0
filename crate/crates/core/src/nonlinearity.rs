//! Contrast nonlinearities `G` together with `g = G'`, `g'` and `g''`.

use std::fmt;
use std::str::FromStr;

use crate::error::{IcaError, Result};

/// Values of `(G, g, g', g'')` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub big_g: f64,
    pub g: f64,
    pub gprime: f64,
    pub gsecond: f64,
}

/// Closed-form shapes. Everything is evaluated through `match`, which keeps
/// the inner loops of the empirical iteration monomorphic.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Shape {
    /// G = x⁴/4.
    Kurtosis,
    /// G = -exp(-x²/2).
    Gauss,
    /// G = log cosh x.
    Tanh,
    /// g = x^p for odd p, G = x^(p+1)/(p+1).
    Power(i32),
    /// G = x²/2.
    Quadratic,
    /// G = c·|x|^a with a ≥ 2.
    AbsPower { coef: f64, exponent: f64 },
    /// G = c·(x² + ε²)^(a/2), a smoothed `c·|x|^a` for a < 2.
    SmoothAbsPower { coef: f64, exponent: f64, eps: f64 },
    /// G = -log Σ π_k N(x; m_k, v): score of an equal-variance Gaussian mixture.
    MixtureScore { weights: Vec<f64>, means: Vec<f64>, var: f64 },
    /// G = ½ log(2 - x²): score of √2·sin(U).
    ArcsineScore,
}

/// A contrast nonlinearity: the quadruple `(G, g, g', g'')` with a name.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    name: String,
    sign: f64,
    shape: Shape,
}

pub const BUILTIN_NAMES: [&str; 5] = ["kurtosis", "gauss", "tanh", "pow5", "pow7"];

impl Nonlinearity {
    pub(crate) fn from_shape(name: impl Into<String>, shape: Shape) -> Self {
        Nonlinearity {
            name: name.into(),
            sign: 1.0,
            shape,
        }
    }

    /// One of the built-in nonlinearities: `kurtosis`, `gauss`, `tanh`,
    /// `pow5` (g = x⁵) or `pow7` (g = x⁷).
    pub fn builtin(name: &str) -> Result<Self> {
        let shape = match name {
            "kurtosis" => Shape::Kurtosis,
            "gauss" => Shape::Gauss,
            "tanh" => Shape::Tanh,
            "pow5" => Shape::Power(5),
            "pow7" => Shape::Power(7),
            other => return Err(IcaError::UnknownNonlinearity(other.to_string())),
        };
        Ok(Self::from_shape(name, shape))
    }

    pub fn kurtosis() -> Self {
        Self::from_shape("kurtosis", Shape::Kurtosis)
    }

    pub fn gauss() -> Self {
        Self::from_shape("gauss", Shape::Gauss)
    }

    pub fn tanh() -> Self {
        Self::from_shape("tanh", Shape::Tanh)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The nonlinearity for `-G`. `negate(negate(nl)) == nl`.
    pub fn negate(&self) -> Self {
        let name = match self.name.strip_prefix('-') {
            Some(rest) => rest.to_string(),
            None => format!("-{}", self.name),
        };
        Nonlinearity {
            name,
            sign: -self.sign,
            shape: self.shape.clone(),
        }
    }

    /// Degree of `G` when it is a polynomial.
    pub fn polynomial_degree(&self) -> Option<u32> {
        match self.shape {
            Shape::Kurtosis => Some(4),
            Shape::Power(p) => Some(p as u32 + 1),
            Shape::Quadratic => Some(2),
            _ => None,
        }
    }

    /// True when `G(x) = G(-x)` by construction.
    pub fn is_even(&self) -> bool {
        match &self.shape {
            Shape::MixtureScore { weights, means, .. } => {
                let n = means.len();
                (0..n).all(|k| {
                    let j = n - 1 - k;
                    (means[k] + means[j]).abs() < 1e-15 && (weights[k] - weights[j]).abs() < 1e-15
                })
            }
            _ => true,
        }
    }

    #[inline]
    pub fn big_g(&self, x: f64) -> f64 {
        self.eval(x).big_g
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        self.g_gprime(x).0
    }

    #[inline]
    pub fn gprime(&self, x: f64) -> f64 {
        self.g_gprime(x).1
    }

    #[inline]
    pub fn gsecond(&self, x: f64) -> f64 {
        self.eval(x).gsecond
    }

    /// `(g(x), g'(x))`, the pair needed by every FastICA step.
    #[inline]
    pub fn g_gprime(&self, x: f64) -> (f64, f64) {
        let s = self.sign;
        match &self.shape {
            Shape::Kurtosis => (s * x * x * x, s * 3.0 * x * x),
            Shape::Gauss => {
                let e = (-0.5 * x * x).exp();
                (s * x * e, s * (1.0 - x * x) * e)
            }
            Shape::Tanh => {
                let t = x.tanh();
                (s * t, s * (1.0 - t * t))
            }
            Shape::Power(p) => {
                let xp1 = x.powi(p - 1);
                (s * xp1 * x, s * f64::from(*p) * xp1)
            }
            Shape::Quadratic => (s * x, s),
            _ => {
                let d = self.eval(x);
                (d.g, d.gprime)
            }
        }
    }

    /// All four maps at `x`.
    pub fn eval(&self, x: f64) -> Derivatives {
        let d = match &self.shape {
            Shape::Kurtosis => Derivatives {
                big_g: 0.25 * x.powi(4),
                g: x.powi(3),
                gprime: 3.0 * x * x,
                gsecond: 6.0 * x,
            },
            Shape::Gauss => {
                let e = (-0.5 * x * x).exp();
                Derivatives {
                    big_g: -e,
                    g: x * e,
                    gprime: (1.0 - x * x) * e,
                    gsecond: (x * x * x - 3.0 * x) * e,
                }
            }
            Shape::Tanh => {
                let t = x.tanh();
                let ax = x.abs();
                Derivatives {
                    // log cosh x = |x| + log((1 + e^{-2|x|})/2), overflow-free
                    big_g: ax + ((-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2),
                    g: t,
                    gprime: 1.0 - t * t,
                    gsecond: -2.0 * t * (1.0 - t * t),
                }
            }
            Shape::Power(p) => {
                let p = *p;
                let pf = f64::from(p);
                Derivatives {
                    big_g: x.powi(p + 1) / (pf + 1.0),
                    g: x.powi(p),
                    gprime: pf * x.powi(p - 1),
                    gsecond: pf * (pf - 1.0) * x.powi(p - 2),
                }
            }
            Shape::Quadratic => Derivatives {
                big_g: 0.5 * x * x,
                g: x,
                gprime: 1.0,
                gsecond: 0.0,
            },
            Shape::AbsPower { coef, exponent: a } => {
                let ax = x.abs();
                let sg = x.signum();
                let c = *coef;
                let a = *a;
                let gsecond = if ax == 0.0 {
                    // (a-1)(a-2)|x|^(a-3) sign(x) is 0 at the origin for a > 3
                    // and has a symmetric value of 0 otherwise.
                    0.0
                } else {
                    c * a * (a - 1.0) * (a - 2.0) * ax.powf(a - 3.0) * sg
                };
                Derivatives {
                    big_g: c * ax.powf(a),
                    g: c * a * ax.powf(a - 1.0) * sg,
                    gprime: if a == 2.0 { 2.0 * c } else { c * a * (a - 1.0) * ax.powf(a - 2.0) },
                    gsecond,
                }
            }
            Shape::SmoothAbsPower { coef, exponent: a, eps } => {
                let (c, a) = (*coef, *a);
                let r2 = x * x + eps * eps;
                let r = r2.sqrt();
                let ra2 = r.powf(a - 2.0);
                let ra4 = ra2 / r2;
                Derivatives {
                    big_g: c * r.powf(a),
                    g: c * a * ra2 * x,
                    gprime: c * a * (ra2 + (a - 2.0) * x * x * ra4),
                    gsecond: c * a * (a - 2.0) * x * ra4 * (3.0 + (a - 4.0) * x * x / r2),
                }
            }
            Shape::MixtureScore { weights, means, var } => mixture_score(x, weights, means, *var),
            Shape::ArcsineScore => {
                let q = 2.0 - x * x;
                if q <= 0.0 {
                    Derivatives {
                        big_g: f64::NAN,
                        g: f64::NAN,
                        gprime: f64::NAN,
                        gsecond: f64::NAN,
                    }
                } else {
                    Derivatives {
                        big_g: 0.5 * q.ln(),
                        g: -x / q,
                        gprime: -(2.0 + x * x) / (q * q),
                        gsecond: -2.0 * x * (6.0 + x * x) / (q * q * q),
                    }
                }
            }
        };
        let s = self.sign;
        Derivatives {
            big_g: s * d.big_g,
            g: s * d.g,
            gprime: s * d.gprime,
            gsecond: s * d.gsecond,
        }
    }
}

// Score of a Gaussian mixture via responsibilities r_k and e_k = (x - m_k)/v:
// g = E_r[e], g' = 1/v - Var_r[e], g'' = 2m1³ - 3m1·m2 + m3.
fn mixture_score(x: f64, weights: &[f64], means: &[f64], var: f64) -> Derivatives {
    let logs: Vec<f64> = weights
        .iter()
        .zip(means)
        .map(|(w, m)| w.ln() - 0.5 * (x - m) * (x - m) / var)
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
    let log_p = top + z.ln() - 0.5 * (2.0 * std::f64::consts::PI * var).ln();
    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    for (l, m) in logs.iter().zip(means) {
        let r = (l - top).exp() / z;
        let e = (x - m) / var;
        m1 += r * e;
        m2 += r * e * e;
        m3 += r * e * e * e;
    }
    Derivatives {
        big_g: -log_p,
        g: m1,
        gprime: 1.0 / var - (m2 - m1 * m1),
        gsecond: 2.0 * m1 * m1 * m1 - 3.0 * m1 * m2 + m3,
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for Nonlinearity {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix('-') {
            Some(rest) => Ok(Self::builtin(rest)?.negate()),
            None => Self::builtin(s),
        }
    }
}

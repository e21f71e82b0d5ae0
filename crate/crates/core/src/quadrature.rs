//! One-dimensional quadrature: Gauss rules from Jacobi matrices, Gauss rules for
//! discrete measures (Lanczos), and adaptive Gauss–Kronrod integration.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{IcaError, Result};

/// A quadrature rule: `∫ f dμ ≈ Σ weights[k] · f(nodes[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Affine image of the rule under `x ↦ shift + scale·x` with weights
    /// multiplied by `mass`.
    pub fn mapped(&self, shift: f64, scale: f64, mass: f64) -> Rule {
        Rule {
            nodes: self.nodes.iter().map(|x| shift + scale * x).collect(),
            weights: self.weights.iter().map(|w| w * mass).collect(),
        }
    }
}

/// Golub–Welsch: Gauss rule from the recurrence coefficients of the orthogonal
/// polynomials. `diag` has length n, `offdiag` length n-1, `mass` is `μ(ℝ)`.
pub fn gauss_from_jacobi(diag: &[f64], offdiag: &[f64], mass: f64) -> Rule {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = diag[i];
        if i + 1 < n {
            jacobi[(i, i + 1)] = offdiag[i];
            jacobi[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Legendre rule on `[-1, 1]` (weights sum to 2).
pub fn gauss_legendre(n: usize) -> Rule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let mut rule = gauss_from_jacobi(&diag, &off, 2.0);
    symmetrize(&mut rule);
    rule
}

/// Gauss–Hermite rule for the standard normal law (weights sum to 1).
pub fn gauss_hermite(n: usize) -> Rule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut rule = gauss_from_jacobi(&diag, &off, 1.0);
    symmetrize(&mut rule);
    rule
}

// Rules for symmetric weights come out of the eigensolver with O(eps) asymmetry.
fn symmetrize(rule: &mut Rule) {
    let n = rule.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}

/// n-point Gauss rule for a discrete measure with positive weights, computed
/// by Lanczos with full reorthogonalization.
pub fn gauss_for_discrete(points: &[f64], weights: &[f64], n: usize) -> Result<Rule> {
    let m = points.len();
    if n == 0 || n > m {
        return Err(IcaError::Parameter(format!(
            "cannot build a {n}-point rule from {m} atoms"
        )));
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(IcaError::Numeric("discrete measure has no mass".into()));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    let q0: Vec<f64> = weights.iter().map(|w| (w / mass).sqrt()).collect();
    basis.push(q0);
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    for j in 0..n {
        let q = &basis[j];
        let a: f64 = q.iter().zip(points).map(|(qi, xi)| qi * qi * xi).sum();
        diag.push(a);
        if j + 1 == n {
            break;
        }
        let mut r: Vec<f64> = q.iter().zip(points).map(|(qi, xi)| qi * (xi - a)).collect();
        if j > 0 {
            let b = off[j - 1];
            for (ri, pi) in r.iter_mut().zip(&basis[j - 1]) {
                *ri -= b * pi;
            }
        }
        for _ in 0..2 {
            for prev in &basis {
                let dot: f64 = r.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (ri, pi) in r.iter_mut().zip(prev) {
                    *ri -= dot * pi;
                }
            }
        }
        let b = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(b > 1e-300) {
            return Err(IcaError::Numeric(format!(
                "Lanczos breakdown at step {j} of {n}"
            )));
        }
        off.push(b);
        basis.push(r.into_iter().map(|v| v / b).collect());
    }
    Ok(gauss_from_jacobi(&diag, &off, mass))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over the panels
/// delimited by `breakpoints` (sorted, at least two entries).
pub fn integrate(f: &dyn Fn(f64) -> f64, breakpoints: &[f64], abs_tol: f64) -> Result<f64> {
    const MAX_PANELS: usize = 20_000;
    let mut heap = std::collections::BinaryHeap::new();
    for w in breakpoints.windows(2).filter(|w| w[1] > w[0]) {
        let (value, error) = gk15(f, w[0], w[1]);
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(IcaError::Numeric("integrand is not finite".into()));
        }
        if err <= abs_tol.max(1e-14 * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= MAX_PANELS {
            return Err(IcaError::Numeric(format!(
                "adaptive quadrature did not converge (error estimate {err:e})"
            )));
        }
        // Split the worst panels in batches; the sums above are O(n).
        let batch = (heap.len() / 8).max(1);
        for _ in 0..batch {
            let Some(Panel { a, b, .. }) = heap.pop() else { break };
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                return Err(IcaError::Numeric("panel underflow".into()));
            }
            let (v1, e1) = gk15(f, a, m);
            let (v2, e2) = gk15(f, m, b);
            heap.push(Panel { a, b: m, value: v1, error: e1 });
            heap.push(Panel { a: m, b, value: v2, error: e2 });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(10);
        // ∫_{-1}^{1} x^18 dx = 2/19
        let v = rule.apply(|x| x.powi(18));
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let rule = gauss_hermite(32);
        assert!((rule.apply(|x| x * x) - 1.0).abs() < 1e-13);
        assert!((rule.apply(|x| x.powi(4)) - 3.0).abs() < 1e-12);
        assert!((rule.apply(|x| x.powi(8)) - 105.0).abs() < 1e-9);
        assert!(rule.apply(|x| x.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn lanczos_recovers_gauss_rule_of_fine_discretization() {
        // Uniform weight on [0,1] sampled by a fine midpoint grid.
        let m = 4000;
        let pts: Vec<f64> = (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect();
        let w = vec![1.0 / m as f64; m];
        let rule = gauss_for_discrete(&pts, &w, 8).unwrap();
        let exact: f64 = pts.iter().zip(&w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((rule.apply(|x| x.powi(9)) - exact).abs() < 1e-13);
    }

    #[test]
    fn lanczos_rejects_too_many_nodes() {
        assert!(gauss_for_discrete(&[0.0, 1.0], &[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn adaptive_handles_cusp() {
        let f = |x: f64| (-x.abs().sqrt()).exp();
        // ∫_{-1}^{1} e^{-√|x|} dx = 2·(2 - 4/e)
        let exact = 2.0 * (2.0 - 4.0 / std::f64::consts::E);
        let v = integrate(&f, &[-1.0, 0.0, 1.0], 1e-12).unwrap();
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn adaptive_reports_non_finite() {
        let f = |x: f64| 1.0 / x;
        assert!(integrate(&f, &[0.0, 1.0], 1e-10).is_err());
    }
}

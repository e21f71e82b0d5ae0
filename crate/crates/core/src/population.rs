//! Population-level FastICA quantities for a mixing model `x = A s`.
//!
//! All expectations are evaluated in source coordinates. With `c = Aᵀw`, the
//! projection is `y = Σ c_i s_i`. Every active source (`c_i ≠ 0`) is written
//! as a finite list of atoms (Gaussian components or Gauss-rule points); for
//! a fixed choice of atoms `y` is Gaussian, and the conditional moments of the
//! sources given `y` follow from linear regression. Sources with `c_i = 0` are
//! independent of `y` and enter only through their first two moments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distributions::{Atom, DistributionSpec};
use crate::error::{IcaError, Result};
use crate::linalg::{self, orthogonality_defect};
use crate::nonlinearity::Nonlinearity;
use crate::quadrature::{self, Rule};

/// Coefficients below this magnitude are treated as exactly zero.
const ACTIVE_TOL: f64 = 1e-14;

/// Upper bound on integrand evaluations per expectation.
const EVALUATION_BUDGET: usize = 1 << 22;

/// Fewest rule points per axis accepted before switching to quasi-Monte Carlo.
const MIN_RULE_NODES: usize = 8;

/// Composite rule for heavy-tailed laws: points per panel, panel width and
/// cut-off in units of `(β|x|)^α`.
const COMPOSITE_PER_PANEL: usize = 8;
const COMPOSITE_STEP: f64 = 2.0;
const COMPOSITE_TAIL: f64 = 60.0;

/// Number of quasi-Monte Carlo points.
pub const QMC_POINTS: usize = 1 << 20;

/// Combos per parallel work item.
const CHUNK: usize = 2048;

/// `x = A s` with orthogonal `A` and independent standardized sources.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingModel {
    mixing: DMatrix<f64>,
    sources: Vec<DistributionSpec>,
}

impl MixingModel {
    pub fn new(mixing: DMatrix<f64>, sources: Vec<DistributionSpec>) -> Result<Self> {
        let d = sources.len();
        if d < 2 {
            return Err(IcaError::Parameter(format!("dimension must be at least 2, got {d}")));
        }
        if mixing.nrows() != d || mixing.ncols() != d {
            return Err(IcaError::Parameter(format!(
                "mixing matrix is {}x{} but there are {d} sources",
                mixing.nrows(),
                mixing.ncols()
            )));
        }
        let defect = orthogonality_defect(&mixing);
        if !(defect <= 1e-12) {
            return Err(IcaError::Parameter(format!(
                "mixing matrix is not orthogonal (|AᵀA - I|max = {defect:e})"
            )));
        }
        for s in &sources {
            s.validate()?;
        }
        let gaussians = sources.iter().filter(|s| s.is_gaussian()).count();
        if gaussians > 1 {
            return Err(IcaError::DegenerateModel(format!(
                "{gaussians} Gaussian sources; at most one is identifiable"
            )));
        }
        Ok(MixingModel { mixing, sources })
    }

    /// Model with `A = I`.
    pub fn identity(sources: Vec<DistributionSpec>) -> Result<Self> {
        let d = sources.len();
        Self::new(DMatrix::identity(d, d), sources)
    }

    /// Model with a seeded random orthogonal `A`.
    pub fn random_orthogonal(sources: Vec<DistributionSpec>, seed: u64) -> Result<Self> {
        let d = sources.len();
        Self::new(linalg::random_orthogonal(d, seed), sources)
    }

    pub fn dim(&self) -> usize {
        self.sources.len()
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn sources(&self) -> &[DistributionSpec] {
        &self.sources
    }

    /// Column `a_i` of the mixing matrix.
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.mixing.column(i).into_owned()
    }

    /// The same sources mixed by `Q·A`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        Self::new(q * &self.mixing, self.sources.clone())
    }

    /// Smallest distance from `v` to some `±a_i`.
    pub fn distance_to_demixing(&self, v: &DVector<f64>) -> f64 {
        (0..self.dim())
            .map(|i| {
                let a = self.mixing.column(i);
                (v - a).norm().min((v + a).norm())
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `1 - max_i |vᵀa_i|` and the maximizing index.
    pub fn deviation(&self, v: &DVector<f64>) -> (f64, usize) {
        let mut best = (0.0, 0);
        for i in 0..self.dim() {
            let c = v.dot(&self.mixing.column(i)).abs();
            if c > best.0 {
                best = (c, i);
            }
        }
        ((1.0 - best.0).clamp(0.0, 1.0), best.1)
    }
}

/// A vector on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    /// Normalizes `v`; fails for a zero or non-finite vector.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(IcaError::Parameter("cannot normalize a zero vector".into()));
        }
        Ok(UnitVector(v / n))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(v))
    }

    /// `cos θ e₁ + sin θ e₂`.
    pub fn from_angle(theta: f64) -> Self {
        UnitVector(DVector::from_vec(vec![theta.cos(), theta.sin()]))
    }

    /// `i`-th canonical basis vector of `ℝ^d`.
    pub fn basis(d: usize, i: usize) -> Self {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        UnitVector(v)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn neg(&self) -> Self {
        UnitVector(-&self.0)
    }
}

/// How population expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineMethod {
    /// Exact mixture conditioning where a law is a Gaussian mixture, Gauss
    /// rules otherwise, quasi-Monte Carlo when the tensor grid is too large.
    Auto,
    /// Requires every source to be a Gaussian mixture (gaussian, bimodal, bpsk).
    GaussHermiteMixture,
    /// Tensor grid of per-law Gauss rules for every source.
    TensorQuadrature,
    /// Randomly shifted Kronecker sequence mapped through the quantiles.
    QuasiMonteCarlo,
}

impl std::str::FromStr for EngineMethod {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(EngineMethod::Auto),
            "gauss_hermite_mixture" | "mixture" => Ok(EngineMethod::GaussHermiteMixture),
            "tensor_quadrature" | "tensor" => Ok(EngineMethod::TensorQuadrature),
            "quasi_monte_carlo" | "qmc" => Ok(EngineMethod::QuasiMonteCarlo),
            other => Err(IcaError::Config(format!("unknown expectation method `{other}`"))),
        }
    }
}

/// Expectation-engine settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationEngine {
    pub method: EngineMethod,
    /// Gauss–Hermite points per Gaussian component and Gauss-rule points per axis.
    pub nodes: usize,
    /// Seed of the random shift (quasi-Monte Carlo only).
    pub seed: u64,
}

impl Default for ExpectationEngine {
    fn default() -> Self {
        ExpectationEngine {
            method: EngineMethod::Auto,
            nodes: 64,
            seed: 0x5eed_1ca5,
        }
    }
}

/// `E[ψ]`, `E[ψ x]` and optionally `E[ψ x xᵀ]` for one integrand `ψ`.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: f64,
    pub first: DVector<f64>,
    pub second: Option<DMatrix<f64>>,
}

/// `K(v) = α(v) I + L(v)` and its ingredients.
#[derive(Debug, Clone)]
pub struct HessianParts {
    pub k: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub alpha: f64,
}

/// `α(w)`, `φ(w)` and `h(w) = α(w) w - φ(w)` from one pass.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub alpha: f64,
    pub phi: DVector<f64>,
    pub h: DVector<f64>,
}

enum Plan {
    Atoms(Vec<(usize, Arc<Vec<Atom>>)>),
    Qmc,
}

/// Atom lists keyed by (source index, node count).
type RuleCache = HashMap<(usize, usize), Arc<Vec<Atom>>>;

/// Population analysis of one (model, engine, nonlinearity) triple.
pub struct PopulationAnalysis {
    model: MixingModel,
    engine: ExpectationEngine,
    nl: Nonlinearity,
    hermite: Rule,
    rules: Mutex<RuleCache>,
    qmc: OnceLock<Arc<Vec<f64>>>,
}

impl std::fmt::Debug for PopulationAnalysis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PopulationAnalysis")
            .field("model", &self.model)
            .field("engine", &self.engine)
            .field("nl", &self.nl)
            .finish()
    }
}

impl PopulationAnalysis {
    pub fn new(model: MixingModel, engine: ExpectationEngine, nl: Nonlinearity) -> Result<Self> {
        if engine.nodes < 2 {
            return Err(IcaError::Config(format!(
                "expectation engine needs at least 2 nodes, got {}",
                engine.nodes
            )));
        }
        if engine.method == EngineMethod::GaussHermiteMixture {
            if let Some(s) = model.sources().iter().find(|s| s.mixture_atoms().is_none()) {
                return Err(IcaError::Config(format!(
                    "gauss_hermite_mixture needs Gaussian-mixture sources, got {s}"
                )));
            }
        }
        Ok(PopulationAnalysis {
            hermite: quadrature::gauss_hermite(engine.nodes),
            model,
            engine,
            nl,
            rules: Mutex::new(HashMap::new()),
            qmc: OnceLock::new(),
        })
    }

    /// Analysis with the default engine.
    pub fn with_defaults(model: MixingModel, nl: Nonlinearity) -> Result<Self> {
        Self::new(model, ExpectationEngine::default(), nl)
    }

    pub fn model(&self) -> &MixingModel {
        &self.model
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn engine(&self) -> &ExpectationEngine {
        &self.engine
    }

    /// The same model and engine with another nonlinearity.
    pub fn with_nonlinearity(&self, nl: Nonlinearity) -> Result<Self> {
        Self::new(self.model.clone(), self.engine, nl)
    }

    fn check_unit(&self, w: &UnitVector) -> Result<()> {
        if w.dim() != self.model.dim() {
            return Err(IcaError::Parameter(format!(
                "vector has dimension {} but the model has {}",
                w.dim(),
                self.model.dim()
            )));
        }
        Ok(())
    }

    fn rule_atoms(&self, source: usize, n: usize) -> Result<Arc<Vec<Atom>>> {
        let key = (source, n);
        if let Some(a) = self.rules.lock().expect("rule cache").get(&key) {
            return Ok(a.clone());
        }
        let rule = self.model.sources[source].gauss_rule(n)?;
        let atoms: Arc<Vec<Atom>> = Arc::new(
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&mean, &weight)| Atom { weight, mean, sd: 0.0 })
                .collect(),
        );
        self.rules.lock().expect("rule cache").insert(key, atoms.clone());
        Ok(atoms)
    }

    fn composite_atoms(&self, source: usize) -> Result<Arc<Vec<Atom>>> {
        let key = (source, usize::MAX);
        if let Some(a) = self.rules.lock().expect("rule cache").get(&key) {
            return Ok(a.clone());
        }
        let rule = self.model.sources[source]
            .composite_rule(COMPOSITE_PER_PANEL, COMPOSITE_STEP, COMPOSITE_TAIL)
            .ok_or_else(|| IcaError::Config("no composite rule for this law".into()))?;
        let atoms: Arc<Vec<Atom>> = Arc::new(
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&mean, &weight)| Atom { weight, mean, sd: 0.0 })
                .collect(),
        );
        self.rules.lock().expect("rule cache").insert(key, atoms.clone());
        Ok(atoms)
    }

    fn plan(&self, active: &[usize]) -> Result<Plan> {
        if self.engine.method == EngineMethod::QuasiMonteCarlo {
            return Ok(Plan::Qmc);
        }
        let use_mixture = |s: &DistributionSpec| match self.engine.method {
            EngineMethod::TensorQuadrature => None,
            _ => s.mixture_atoms(),
        };
        let mut fixed: Vec<(usize, Vec<Atom>)> = Vec::new();
        let mut ruled: Vec<usize> = Vec::new();
        for &i in active {
            match use_mixture(&self.model.sources[i]) {
                Some(atoms) => fixed.push((i, atoms)),
                None => ruled.push(i),
            }
        }
        let smooth = fixed.iter().any(|(_, a)| a.iter().any(|t| t.sd > 0.0));
        let per_combo = if smooth { self.engine.nodes } else { 1 };
        let fixed_combos: usize = fixed.iter().map(|(_, a)| a.len()).product();
        let room = EVALUATION_BUDGET as f64 / (per_combo * fixed_combos) as f64;
        let mut n = self.engine.nodes;
        if !ruled.is_empty() {
            let fit = room.powf(1.0 / ruled.len() as f64).floor() as usize;
            n = n.min(fit);
            if n < MIN_RULE_NODES {
                if self.engine.method == EngineMethod::Auto {
                    return Ok(Plan::Qmc);
                }
                return Err(IcaError::Config(format!(
                    "tensor quadrature over {} axes exceeds the evaluation budget",
                    ruled.len()
                )));
            }
        }
        // Gauss rules converge slowly for heavy-tailed laws unless the
        // integrand is a polynomial; those laws get a graded composite rule
        // when the budget allows it.
        let polynomial = self.nl.polynomial_degree().is_some();
        let heavy: Vec<usize> = ruled
            .iter()
            .copied()
            .filter(|&i| !polynomial && self.model.sources[i].composite_rule(2, 2.0, 1.0).is_some())
            .collect();
        let composite_ok = !heavy.is_empty() && {
            let m = self.composite_atoms(heavy[0])?.len() as f64;
            let light = (ruled.len() - heavy.len()) as i32;
            m.powi(heavy.len() as i32) * (n as f64).powi(light) <= room
        };
        let mut atoms: Vec<(usize, Arc<Vec<Atom>>)> = Vec::with_capacity(active.len());
        for (i, a) in fixed {
            atoms.push((i, Arc::new(a)));
        }
        for i in ruled {
            if composite_ok && heavy.contains(&i) {
                atoms.push((i, self.composite_atoms(i)?));
            } else {
                atoms.push((i, self.rule_atoms(i, n)?));
            }
        }
        atoms.sort_by_key(|(i, _)| *i);
        Ok(Plan::Atoms(atoms))
    }

    fn qmc_points(&self) -> Arc<Vec<f64>> {
        self.qmc
            .get_or_init(|| {
                let d = self.model.dim();
                // Kronecker sequence with the generalized golden ratio.
                let mut phi = 2.0f64;
                for _ in 0..64 {
                    phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
                }
                let step: Vec<f64> = (1..=d).map(|k| phi.powi(-(k as i32)).fract()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.engine.seed);
                let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let sources = self.model.sources.clone();
                let pts: Vec<f64> = (0..QMC_POINTS)
                    .into_par_iter()
                    .flat_map_iter(|n| {
                        let step = &step;
                        let shift = &shift;
                        let sources = &sources;
                        (0..d).map(move |k| {
                            let u = (shift[k] + (n as f64 + 0.5) * step[k]).fract();
                            sources[k].quantile(u)
                        })
                    })
                    .collect();
                Arc::new(pts)
            })
            .clone()
    }

    /// Source-space moments of `K` integrands of `y = wᵀx`, mapped to `x`.
    pub(crate) fn moments<const K: usize>(
        &self,
        w: &DVector<f64>,
        psi: &(dyn Fn(f64) -> [f64; K] + Sync),
        second: bool,
    ) -> Result<[Moments; K]> {
        let d = self.model.dim();
        let c = self.model.mixing.transpose() * w;
        let active: Vec<usize> = (0..d).filter(|&i| c[i].abs() > ACTIVE_TOL).collect();
        if active.is_empty() {
            return Err(IcaError::Parameter("zero projection vector".into()));
        }
        let (act, e0, e1, e2) = match self.plan(&active)? {
            Plan::Atoms(atoms) => {
                let (e0, e1, e2) = self.atom_moments::<K>(&c, &atoms, psi, second);
                (active, e0, e1, e2)
            }
            Plan::Qmc => {
                let (e0, e1, e2) = self.qmc_moments::<K>(&c, psi, second);
                ((0..d).collect(), e0, e1, e2)
            }
        };
        for k in 0..K {
            if !e0[k].is_finite() || e1[k].iter().any(|v| !v.is_finite()) {
                return Err(IcaError::Numeric("expectation is not finite".into()));
            }
        }
        let a = &self.model.mixing;
        let m = act.len();
        let out: [Moments; K] = std::array::from_fn(|k| {
            let mut s1 = DVector::zeros(d);
            for (jj, &j) in act.iter().enumerate() {
                s1[j] = e1[k][jj];
            }
            let second = e2.as_ref().map(|e2| {
                // inactive sources: E[ψ s_i²] = E[ψ], cross terms vanish
                let mut s2 = DMatrix::identity(d, d) * e0[k];
                for (jj, &j) in act.iter().enumerate() {
                    for (ll, &l) in act.iter().enumerate() {
                        s2[(j, l)] = e2[k][jj * m + ll];
                    }
                }
                a * s2 * a.transpose()
            });
            Moments {
                mean: e0[k],
                first: a * s1,
                second,
            }
        });
        Ok(out)
    }

    #[allow(clippy::type_complexity)]
    fn atom_moments<const K: usize>(
        &self,
        c: &DVector<f64>,
        atoms: &[(usize, Arc<Vec<Atom>>)],
        psi: &(dyn Fn(f64) -> [f64; K] + Sync),
        second: bool,
    ) -> ([f64; K], Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
        let m = atoms.len();
        let coef: Vec<f64> = atoms.iter().map(|(i, _)| c[*i]).collect();
        let sizes: Vec<usize> = atoms.iter().map(|(_, a)| a.len()).collect();
        let total: usize = sizes.iter().product();
        let stride = 1 + m + if second { m * m } else { 0 };
        let chunks = total.div_ceil(CHUNK);
        let hermite = &self.hermite;

        let partials: Vec<Vec<f64>> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = vec![0.0; K * stride];
                let mut idx = vec![0usize; m];
                let mut beta = vec![0.0; m];
                let mut mu = vec![0.0; m];
                let mut var = vec![0.0; m];
                let end = ((chunk + 1) * CHUNK).min(total);
                for combo in chunk * CHUNK..end {
                    let mut rest = combo;
                    for j in (0..m).rev() {
                        idx[j] = rest % sizes[j];
                        rest /= sizes[j];
                    }
                    let mut weight = 1.0;
                    let mut mean = 0.0;
                    let mut v = 0.0;
                    for j in 0..m {
                        let atom = atoms[j].1[idx[j]];
                        weight *= atom.weight;
                        mu[j] = atom.mean;
                        var[j] = atom.sd * atom.sd;
                        mean += coef[j] * atom.mean;
                        v += coef[j] * coef[j] * var[j];
                    }
                    let mut m0 = [0.0; K];
                    let mut m1 = [0.0; K];
                    let mut m2 = [0.0; K];
                    if v > 0.0 {
                        let sd = v.sqrt();
                        for (z, hw) in hermite.nodes.iter().zip(&hermite.weights) {
                            let t = sd * z;
                            let vals = psi(mean + t);
                            for k in 0..K {
                                let p = hw * vals[k];
                                m0[k] += p;
                                m1[k] += p * t;
                                m2[k] += p * t * t;
                            }
                        }
                        for j in 0..m {
                            beta[j] = coef[j] * var[j] / v;
                        }
                    } else {
                        m0 = psi(mean);
                        beta.iter_mut().for_each(|b| *b = 0.0);
                    }
                    for k in 0..K {
                        let base = k * stride;
                        acc[base] += weight * m0[k];
                        for j in 0..m {
                            acc[base + 1 + j] += weight * (mu[j] * m0[k] + beta[j] * m1[k]);
                        }
                        if second {
                            let off = base + 1 + m;
                            for j in 0..m {
                                for l in 0..m {
                                    let mut cond = mu[j] * mu[l] * m0[k]
                                        + (mu[j] * beta[l] + mu[l] * beta[j]) * m1[k]
                                        + beta[j] * beta[l] * m2[k];
                                    if v > 0.0 {
                                        let cov = if j == l { var[j] } else { 0.0 }
                                            - coef[j] * coef[l] * var[j] * var[l] / v;
                                        cond += cov * m0[k];
                                    }
                                    acc[off + j * m + l] += weight * cond;
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();

        let mut acc = vec![0.0; K * stride];
        for p in partials {
            for (a, b) in acc.iter_mut().zip(p) {
                *a += b;
            }
        }
        split::<K>(&acc, m, stride, second)
    }

    #[allow(clippy::type_complexity)]
    fn qmc_moments<const K: usize>(
        &self,
        c: &DVector<f64>,
        psi: &(dyn Fn(f64) -> [f64; K] + Sync),
        second: bool,
    ) -> ([f64; K], Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
        let d = self.model.dim();
        let pts = self.qmc_points();
        let stride = 1 + d + if second { d * d } else { 0 };
        let n = pts.len() / d;
        let chunk_len = 1 << 14;
        let partials: Vec<Vec<f64>> = (0..n.div_ceil(chunk_len))
            .into_par_iter()
            .map(|chunk| {
                let mut acc = vec![0.0; K * stride];
                for row in chunk * chunk_len..((chunk + 1) * chunk_len).min(n) {
                    let s = &pts[row * d..(row + 1) * d];
                    let y: f64 = s.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
                    let vals = psi(y);
                    for (k, &val) in vals.iter().enumerate() {
                        let base = k * stride;
                        acc[base] += val;
                        for j in 0..d {
                            acc[base + 1 + j] += val * s[j];
                        }
                        if second {
                            let off = base + 1 + d;
                            for j in 0..d {
                                for l in 0..d {
                                    acc[off + j * d + l] += val * s[j] * s[l];
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut acc = vec![0.0; K * stride];
        for p in partials {
            for (a, b) in acc.iter_mut().zip(p) {
                *a += b;
            }
        }
        let scale = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        split::<K>(&acc, d, stride, second)
    }

    /// `E[ψ(wᵀx)]`.
    pub fn expect_scalar(&self, w: &UnitVector, psi: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
        self.check_unit(w)?;
        let f = |y: f64| [psi(y)];
        let [m] = self.moments::<1>(w.as_vector(), &f, false)?;
        Ok(m.mean)
    }

    /// Contrast `J(w) = E[G(wᵀx)]`.
    pub fn contrast(&self, w: &UnitVector) -> Result<f64> {
        let nl = &self.nl;
        self.expect_scalar(w, &|y| nl.big_g(y))
    }

    /// `h(w) = E[g'(wᵀx)] w - E[g(wᵀx) x]` for any `w ∈ ℝ^d`.
    pub fn h_ambient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let nl = &self.nl;
        let f = |y: f64| {
            let (g, gp) = nl.g_gprime(y);
            [g, gp]
        };
        let [mg, mgp] = self.moments::<2>(w, &f, false)?;
        Ok(w * mgp.mean - mg.first)
    }

    /// `h(w)/‖h(w)‖` for any `w ∈ ℝ^d`.
    pub fn f_ambient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.h_ambient(w)?;
        let norm = h.norm();
        if !(norm >= 1e-10) {
            return Err(IcaError::VanishingUpdate { norm });
        }
        Ok(h / norm)
    }

    /// `h(w)`; fails when `‖h(w)‖ < 1e-10`.
    pub fn h_map(&self, w: &UnitVector) -> Result<DVector<f64>> {
        self.check_unit(w)?;
        let h = self.h_ambient(w.as_vector())?;
        let norm = h.norm();
        if !(norm >= 1e-10) {
            return Err(IcaError::VanishingUpdate { norm });
        }
        Ok(h)
    }

    /// The FastICA map `f(w) = h(w)/‖h(w)‖`.
    pub fn f_map(&self, w: &UnitVector) -> Result<UnitVector> {
        let h = self.h_map(w)?;
        UnitVector::new(h)
    }

    /// `α(w)`, `φ(w)` and `h(w)`.
    pub fn decompose(&self, w: &UnitVector) -> Result<Decomposition> {
        self.check_unit(w)?;
        let nl = &self.nl;
        let f = |y: f64| {
            let (g, gp) = nl.g_gprime(y);
            [g, gp]
        };
        let wv = w.as_vector();
        let [mg, mgp] = self.moments::<2>(wv, &f, false)?;
        let proj = wv.dot(&mg.first);
        let alpha = mgp.mean - proj;
        let phi = &mg.first - wv * proj;
        let h = wv * mgp.mean - &mg.first;
        Ok(Decomposition { alpha, phi, h })
    }

    /// `α(w) = E[g'(wᵀx) - g(wᵀx) wᵀx]`.
    pub fn alpha(&self, w: &UnitVector) -> Result<f64> {
        Ok(self.decompose(w)?.alpha)
    }

    /// `φ(w) = (I - wwᵀ) E[g(wᵀx) x]`, the gradient of the contrast on the
    /// sphere; `h = α w - φ`.
    pub fn phi(&self, w: &UnitVector) -> Result<DVector<f64>> {
        Ok(self.decompose(w)?.phi)
    }

    /// `uᵀ E[g(wᵀx) x]` for a direction `u`.
    pub fn directional_g_moment(&self, w: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        let nl = &self.nl;
        let f = |y: f64| [nl.g(y)];
        let [mg] = self.moments::<1>(w, &f, false)?;
        Ok(u.dot(&mg.first))
    }

    /// Jacobian of `f` in general position:
    /// `(‖h‖² I - h hᵀ) h' / ‖h‖³` with
    /// `h' = w E[g'' x]ᵀ + E[g'] I - E[g' x xᵀ]`.
    pub fn jacobian_ambient(&self, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.model.dim();
        let nl = &self.nl;
        let f = |y: f64| {
            let e = nl.eval(y);
            [e.g, e.gprime, e.gsecond]
        };
        let [mg, mgp, mgs] = self.moments::<3>(w, &f, true)?;
        let h = w * mgp.mean - &mg.first;
        let norm = h.norm();
        if !(norm >= 1e-10) {
            return Err(IcaError::VanishingUpdate { norm });
        }
        let hprime = w * mgs.first.transpose() + DMatrix::identity(d, d) * mgp.mean
            - mgp.second.expect("second moments requested");
        let proj = DMatrix::identity(d, d) * (norm * norm) - &h * h.transpose();
        Ok(proj * hprime / norm.powi(3))
    }

    /// Jacobian of `f` at a unit vector.
    pub fn f_jacobian(&self, w: &UnitVector) -> Result<DMatrix<f64>> {
        self.check_unit(w)?;
        self.jacobian_ambient(w.as_vector())
    }

    /// Reduced Jacobian at a fixed point:
    /// `(I - vvᵀ) E[g'(vᵀx)(I - xxᵀ)] / |α(v)|`.
    pub fn fixed_point_jacobian(&self, v: &UnitVector) -> Result<DMatrix<f64>> {
        let (b, alpha) = self.attraction_matrix(v)?;
        if !(alpha.abs() >= 1e-10) {
            return Err(IcaError::VanishingUpdate { norm: alpha.abs() });
        }
        Ok(b / alpha.abs())
    }

    /// `((I - vvᵀ) E[g'(vᵀx)(I - xxᵀ)], α(v))`.
    pub fn attraction_matrix(&self, v: &UnitVector) -> Result<(DMatrix<f64>, f64)> {
        self.check_unit(v)?;
        let d = self.model.dim();
        let nl = &self.nl;
        let f = |y: f64| {
            let (g, gp) = nl.g_gprime(y);
            [g, gp]
        };
        let vv = v.as_vector();
        let [mg, mgp] = self.moments::<2>(vv, &f, true)?;
        let alpha = mgp.mean - vv.dot(&mg.first);
        let inner = DMatrix::identity(d, d) * mgp.mean - mgp.second.expect("second moments");
        let proj = DMatrix::identity(d, d) - vv * vv.transpose();
        Ok((proj * inner, alpha))
    }

    /// `K(v) = α(v) I + L(v)` with
    /// `L(v) = (I - vvᵀ) E[g'(vᵀx)(xxᵀ - I)] (I - vvᵀ)`.
    pub fn contrast_hessian_parts(&self, v: &UnitVector) -> Result<HessianParts> {
        self.check_unit(v)?;
        let d = self.model.dim();
        let nl = &self.nl;
        let f = |y: f64| {
            let (g, gp) = nl.g_gprime(y);
            [g, gp]
        };
        let vv = v.as_vector();
        let [mg, mgp] = self.moments::<2>(vv, &f, true)?;
        let alpha = mgp.mean - vv.dot(&mg.first);
        let proj = DMatrix::identity(d, d) - vv * vv.transpose();
        let inner = mgp.second.expect("second moments") - DMatrix::identity(d, d) * mgp.mean;
        let l = &proj * inner * &proj;
        let k = DMatrix::identity(d, d) * alpha + &l;
        Ok(HessianParts { k, l, alpha })
    }
}

#[allow(clippy::type_complexity)]
fn split<const K: usize>(
    acc: &[f64],
    m: usize,
    stride: usize,
    second: bool,
) -> ([f64; K], Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
    let e0 = std::array::from_fn(|k| acc[k * stride]);
    let e1 = (0..K)
        .map(|k| acc[k * stride + 1..k * stride + 1 + m].to_vec())
        .collect();
    let e2 = second.then(|| {
        (0..K)
            .map(|k| acc[k * stride + 1 + m..(k + 1) * stride].to_vec())
            .collect()
    });
    (e0, e1, e2)
}

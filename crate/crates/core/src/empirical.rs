//! The empirical one-unit FastICA algorithm on finite samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::DistributionSpec;
use crate::error::{IcaError, Result};
use crate::nonlinearity::Nonlinearity;
use crate::population::{MixingModel, UnitVector};

/// Deviation above which an estimate counts as bad.
pub const DEVIATION_THRESHOLD: f64 = 0.01;

/// Candidates overlapping an accepted estimate by more than this are rejected
/// during deflation.
pub const DEFLATION_OVERLAP: f64 = 0.9;

/// Random restarts allowed per source when collecting first-stage estimates.
pub const RESTARTS_PER_SOURCE: usize = 20;

/// An `N × d` sample (one observation per row) with the mixing matrix that
/// produced it, used as the reference for deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
    reference: DMatrix<f64>,
    seed: u64,
}

impl SampleMatrix {
    /// Wraps raw observations. `reference` has unit-norm demixing columns.
    pub fn new(data: DMatrix<f64>, reference: DMatrix<f64>, seed: u64) -> Result<Self> {
        if reference.nrows() != data.ncols() {
            return Err(IcaError::Parameter(format!(
                "reference has {} rows but the data has {} columns",
                reference.nrows(),
                data.ncols()
            )));
        }
        Ok(SampleMatrix { data, reference, seed })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Columns are the (normalized) directions `a_i` of the sources.
    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// `1 - max_i |wᵀa_i|` and the maximizing source.
    pub fn deviation(&self, w: &DVector<f64>) -> (f64, usize) {
        let mut best = (0.0, 0);
        for i in 0..self.dim() {
            let a = self.reference.column(i);
            let c = w.dot(&a).abs() / a.norm();
            if c > best.0 {
                best = (c, i);
            }
        }
        ((1.0 - best.0).clamp(0.0, 1.0), best.1)
    }
}

/// Draws `n` observations `x = A s`.
pub fn generate_sample(model: &MixingModel, n: usize, seed: u64) -> Result<SampleMatrix> {
    let d = model.dim();
    if n < d + 1 {
        return Err(IcaError::Parameter(format!("need at least {} observations, got {n}", d + 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sources = DMatrix::zeros(n, d);
    for (i, law) in model.sources().iter().enumerate() {
        law.fill(&mut rng, sources.column_mut(i).as_mut_slice());
    }
    let data = sources * model.mixing().transpose();
    SampleMatrix::new(data, model.mixing().clone(), seed)
}

/// Centers the sample and applies the symmetric whitening `C^{-1/2}` with
/// `C = (1/N) Σ (x - x̄)(x - x̄)ᵀ`.
pub fn whiten(sample: &SampleMatrix) -> Result<SampleMatrix> {
    let n = sample.len();
    let d = sample.dim();
    let mut centered = sample.data.clone();
    for j in 0..d {
        let mean = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.max();
    let low = eig.eigenvalues.min();
    if !(low > 1e-12 * top.max(f64::MIN_POSITIVE)) {
        return Err(IcaError::DegenerateSample(format!(
            "sample covariance is singular (eigenvalues {low:e} .. {top:e})"
        )));
    }
    let inv_sqrt = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let data = centered * &w;
    // x̃ = W x = (W A) s, so the demixing directions become the columns of W A.
    let mut reference = &w * &sample.reference;
    for mut col in reference.column_iter_mut() {
        let nrm = col.norm();
        col /= nrm;
    }
    SampleMatrix::new(data, reference, sample.seed)
}

/// `ĥ(w) = (1/N) Σ [g'(wᵀx̃) w - g(wᵀx̃) x̃]` without normalization.
pub fn empirical_h(sample: &SampleMatrix, nl: &Nonlinearity, w: &DVector<f64>) -> DVector<f64> {
    let n = sample.len() as f64;
    let mut y = &sample.data * w;
    let mut mean_gp = 0.0;
    for v in y.iter_mut() {
        let (g, gp) = nl.g_gprime(*v);
        mean_gp += gp;
        *v = g;
    }
    let gx = sample.data.tr_mul(&y);
    (w * mean_gp - gx) / n
}

/// One step of the empirical FastICA map.
pub fn empirical_f(sample: &SampleMatrix, nl: &Nonlinearity, w: &UnitVector) -> Result<UnitVector> {
    let h = empirical_h(sample, nl, w.as_vector());
    let norm = h.norm();
    if !(norm >= 1e-12) {
        return Err(IcaError::VanishingUpdate { norm });
    }
    Ok(UnitVector::new(h / norm).expect("non-zero update"))
}

/// Empirical contrast `Ĵ(w) = (1/N) Σ G(wᵀx̃)`.
pub fn empirical_contrast(sample: &SampleMatrix, nl: &Nonlinearity, w: &DVector<f64>) -> f64 {
    let y = &sample.data * w;
    y.iter().map(|&v| nl.big_g(v)).sum::<f64>() / sample.len() as f64
}

/// Halting rule `1 - |w_newᵀ w_old| < ε` once `min_iterations` are done.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub epsilon: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            epsilon: 1e-8,
            min_iterations: 1,
            max_iterations: 1000,
        }
    }
}

impl StoppingRule {
    pub fn new(epsilon: f64, min_iterations: usize, max_iterations: usize) -> Result<Self> {
        let rule = StoppingRule { epsilon, min_iterations, max_iterations };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(IcaError::Parameter(format!("ε must be positive, got {}", self.epsilon)));
        }
        if self.min_iterations < 1 || self.min_iterations > self.max_iterations {
            return Err(IcaError::Parameter(format!(
                "need 1 ≤ min_iterations ({}) ≤ max_iterations ({})",
                self.min_iterations, self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaltReason {
    Criterion,
    MaxIter,
    /// `ĥ` vanished; the last iterate is reported.
    VanishingUpdate,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HaltReason::Criterion => "criterion",
            HaltReason::MaxIter => "max_iter",
            HaltReason::VanishingUpdate => "vanishing_update",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    Strict,
    SignFlipping,
    None,
}

impl std::fmt::Display for ConvergenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConvergenceMode::Strict => "strict",
            ConvergenceMode::SignFlipping => "sign_flipping",
            ConvergenceMode::None => "none",
        })
    }
}

/// One iterate of a traced run; `delta` is `1 - |w_kᵀ w_{k-1}|` (absent for
/// the starting point).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    pub w: DVector<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub w_final: UnitVector,
    pub iterations: usize,
    pub halted_by: HaltReason,
    pub trace: Option<Vec<TraceStep>>,
    pub deviation: f64,
    pub matched_source: Option<usize>,
    pub convergence_mode: ConvergenceMode,
}

impl RunResult {
    pub fn is_bad(&self) -> bool {
        self.deviation > DEVIATION_THRESHOLD
    }
}

/// Iterates the empirical map from `w0` until the stopping rule fires.
pub fn run(
    sample: &SampleMatrix,
    nl: &Nonlinearity,
    w0: &UnitVector,
    rule: &StoppingRule,
    keep_trace: bool,
) -> Result<RunResult> {
    rule.validate()?;
    if w0.dim() != sample.dim() {
        return Err(IcaError::Parameter(format!(
            "start vector has dimension {} but the sample has {}",
            w0.dim(),
            sample.dim()
        )));
    }
    let mut trace = keep_trace.then(|| {
        vec![TraceStep { iteration: 0, w: w0.as_vector().clone(), delta: None }]
    });
    let mut w = w0.as_vector().clone();
    let mut halted_by = HaltReason::MaxIter;
    let mut mode = ConvergenceMode::None;
    let mut iterations = 0;
    for it in 1..=rule.max_iterations {
        let h = empirical_h(sample, nl, &w);
        let norm = h.norm();
        if !(norm >= 1e-12) {
            halted_by = HaltReason::VanishingUpdate;
            break;
        }
        let next = h / norm;
        let dot = next.dot(&w);
        let delta = 1.0 - dot.abs();
        w = next;
        iterations = it;
        if let Some(t) = trace.as_mut() {
            t.push(TraceStep { iteration: it, w: w.clone(), delta: Some(delta) });
        }
        if delta < rule.epsilon && it >= rule.min_iterations {
            halted_by = HaltReason::Criterion;
            mode = if dot < 0.0 { ConvergenceMode::SignFlipping } else { ConvergenceMode::Strict };
            break;
        }
    }
    let (deviation, source) = sample.deviation(&w);
    Ok(RunResult {
        w_final: UnitVector::new(w)?,
        iterations,
        halted_by,
        trace,
        deviation,
        matched_source: (deviation <= DEVIATION_THRESHOLD).then_some(source),
        convergence_mode: mode,
    })
}

/// Uniform random point on the sphere from normalized Gaussian draws.
pub fn random_start<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVector {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(u) = UnitVector::from_slice(&v) {
            return u;
        }
    }
}

/// Radius `√(2ε)/(1 + ‖f'(v)‖)` around an unattractive fixed point inside
/// which a single iteration already satisfies the stopping criterion.
pub fn false_convergence_radius(epsilon: f64, fprime_norm: f64) -> f64 {
    (2.0 * epsilon).sqrt() / (1.0 + fprime_norm)
}

/// Replaces pairs of estimates by their rotations `(âᵢ ± âⱼ)/√2` when the
/// rotated pair is further from Gaussian in the contrast.
pub fn saddle_check(
    sample: &SampleMatrix,
    nl: &Nonlinearity,
    estimates: &[UnitVector],
) -> Result<Vec<UnitVector>> {
    for (i, a) in estimates.iter().enumerate() {
        for b in &estimates[i + 1..] {
            let overlap = a.as_vector().dot(b.as_vector()).abs();
            if overlap > 0.1 {
                return Err(IcaError::Precondition(format!(
                    "estimates are not orthogonal (|âᵢᵀâⱼ| = {overlap:.3})"
                )));
            }
        }
    }
    let g0 = DistributionSpec::Gaussian.expect(&|z| nl.big_g(z))?;
    let index = |w: &DVector<f64>| (empirical_contrast(sample, nl, w) - g0).abs();
    let mut out: Vec<UnitVector> = estimates.to_vec();
    let s = 0.5f64.sqrt();
    for i in 0..out.len() {
        for j in i + 1..out.len() {
            let (a, b) = (out[i].as_vector().clone(), out[j].as_vector().clone());
            let plus = (&a + &b) * s;
            let minus = (&a - &b) * s;
            if index(&plus) + index(&minus) > index(&a) + index(&b) {
                out[i] = UnitVector::new(plus)?;
                out[j] = UnitVector::new(minus)?;
            }
        }
    }
    Ok(out)
}

/// Estimates from the two stages of the optimal-nonlinearity pipeline.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    /// First-stage runs, one per accepted source estimate.
    pub initial: Vec<RunResult>,
    /// Second-stage runs with the score function, started at the estimates.
    pub refined: Vec<RunResult>,
    /// First-stage runs attempted, including rejected duplicates.
    pub attempts: usize,
}

/// Three-step procedure: estimate all sources with `first_nl`, build the
/// score function of the (known, common) source law, and rerun from each
/// estimate with it.
pub fn optimal_pipeline(
    model: &MixingModel,
    n: usize,
    seed: u64,
    first_nl: &Nonlinearity,
    rule: &StoppingRule,
) -> Result<PipelineResult> {
    let law = model.sources()[0];
    if model.sources().iter().any(|s| *s != law) {
        return Err(IcaError::Precondition(
            "the pipeline needs identically distributed sources".into(),
        ));
    }
    if matches!(law, DistributionSpec::Sinus) {
        return Err(IcaError::Unsupported(
            "the sinus score is unbounded on the support of the mixtures".into(),
        ));
    }
    let score = law.score_function()?;
    let sample = whiten(&generate_sample(model, n, seed)?)?;
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut initial: Vec<RunResult> = Vec::with_capacity(d);
    let budget = RESTARTS_PER_SOURCE * d;
    let mut attempts = 0;
    while initial.len() < d && attempts < budget {
        attempts += 1;
        let w0 = random_start(d, &mut rng);
        let r = run(&sample, first_nl, &w0, rule, false)?;
        if r.halted_by == HaltReason::VanishingUpdate {
            continue;
        }
        let w = r.w_final.as_vector();
        let duplicate = initial
            .iter()
            .any(|a| a.w_final.as_vector().dot(w).abs() > DEFLATION_OVERLAP);
        if !duplicate {
            initial.push(r);
        }
    }
    if initial.len() < d {
        return Err(IcaError::Extraction(format!(
            "found {} distinct estimates out of {d} after {attempts} starts",
            initial.len()
        )));
    }
    let refined = initial
        .iter()
        .map(|r| run(&sample, &score, &r.w_final, rule, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineResult { initial, refined, attempts })
}

/// Empirical tangential component `u(θ)ᵀ (1/N) Σ g(w(θ)ᵀx̃) x̃` on the circle.
pub fn empirical_tangential(sample: &SampleMatrix, nl: &Nonlinearity, theta: f64) -> f64 {
    let w = DVector::from_vec(vec![theta.cos(), theta.sin()]);
    let u = DVector::from_vec(vec![-theta.sin(), theta.cos()]);
    let mut y = &sample.data * &w;
    y.iter_mut().for_each(|v| *v = nl.g(*v));
    u.dot(&sample.data.tr_mul(&y)) / sample.len() as f64
}

/// A fixed point of the empirical map in two dimensions, by bisection of the
/// empirical tangential component on `[theta - half_width, theta + half_width]`.
pub fn locate_empirical_fixed_point(
    sample: &SampleMatrix,
    nl: &Nonlinearity,
    theta: f64,
    half_width: f64,
) -> Result<f64> {
    if sample.dim() != 2 {
        return Err(IcaError::Parameter("the empirical circle search needs d = 2".into()));
    }
    let tau = |t: f64| empirical_tangential(sample, nl, t);
    let (mut a, mut b) = (theta - half_width, theta + half_width);
    let mut fa = tau(a);
    if fa * tau(b) > 0.0 {
        return Err(IcaError::NotAFixedPoint(format!(
            "no sign change of the empirical tangential component around θ = {theta}"
        )));
    }
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        let fm = tau(m);
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).rem_euclid(PI))
}

//! Locating and classifying fixed points of the FastICA map.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{IcaError, Result};
use crate::linalg::spectral_norm;
use crate::population::{MixingModel, PopulationAnalysis, UnitVector};

/// Largest `‖φ(v)‖` accepted for a fixed point.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Distance to some `±a_i` below which a fixed point counts as demixing.
pub const DEMIXING_TOL: f64 = 1e-6;

/// Roots closer than this (radians) are merged.
const MERGE_TOL: f64 = 1e-6;

/// Bisection stops once the bracket is this narrow (radians).
const ANGLE_TOL: f64 = 1e-10;

/// `|τ|` at or below this is treated as an exact zero on the scan grid.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixedPointClass {
    Demixing,
    SpuriousAttractive,
    SpuriousUnattractive,
}

impl FixedPointClass {
    pub fn is_attractive(&self) -> bool {
        !matches!(self, FixedPointClass::SpuriousUnattractive)
    }

    pub fn is_spurious(&self) -> bool {
        !matches!(self, FixedPointClass::Demixing)
    }
}

impl fmt::Display for FixedPointClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixedPointClass::Demixing => "demixing",
            FixedPointClass::SpuriousAttractive => "spurious_attractive",
            FixedPointClass::SpuriousUnattractive => "spurious_unattractive",
        })
    }
}

impl FromStr for FixedPointClass {
    type Err = IcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demixing" => Ok(FixedPointClass::Demixing),
            "spurious_attractive" => Ok(FixedPointClass::SpuriousAttractive),
            "spurious_unattractive" => Ok(FixedPointClass::SpuriousUnattractive),
            other => Err(IcaError::Parse(format!("unknown fixed-point class `{other}`"))),
        }
    }
}

/// A located fixed point with its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointRecord {
    pub v: UnitVector,
    /// Angle in `[0, π)` of `v = (cos θ, sin θ)`, for two-dimensional models.
    pub theta: Option<f64>,
    pub alpha: f64,
    pub fprime_norm: f64,
    pub class: FixedPointClass,
    /// `‖φ(v)‖`.
    pub residual: f64,
}

fn angle_of(v: &DVector<f64>) -> f64 {
    let t = v[1].atan2(v[0]).rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Classifies a located fixed point `v`.
pub fn classify(pa: &PopulationAnalysis, v: &UnitVector) -> Result<FixedPointRecord> {
    let dec = pa.decompose(v)?;
    let residual = dec.phi.norm();
    if !(residual <= RESIDUAL_TOL) {
        return Err(IcaError::NotAFixedPoint(format!("‖φ(v)‖ = {residual:e}")));
    }
    let fprime_norm = spectral_norm(&pa.fixed_point_jacobian(v)?);
    let class = if pa.model().distance_to_demixing(v.as_vector()) <= DEMIXING_TOL {
        FixedPointClass::Demixing
    } else if fprime_norm < 1.0 {
        FixedPointClass::SpuriousAttractive
    } else {
        FixedPointClass::SpuriousUnattractive
    };
    Ok(FixedPointRecord {
        theta: (v.dim() == 2).then(|| angle_of(v.as_vector())),
        v: v.clone(),
        alpha: dec.alpha,
        fprime_norm,
        class,
        residual,
    })
}

/// Attractiveness through the equivalent matrix test
/// `‖(I - vvᵀ) E[g'(vᵀx)(I - xxᵀ)]‖ < |α(v)|`.
pub fn attractive_by_norm_test(pa: &PopulationAnalysis, v: &UnitVector) -> Result<bool> {
    let (b, alpha) = pa.attraction_matrix(v)?;
    Ok(spectral_norm(&b) < alpha.abs())
}

/// Tangential component `u(θ)ᵀ E[g(w(θ)ᵀx) x]` with `w = (cos θ, sin θ)` and
/// `u = (-sin θ, cos θ)`; `‖φ(w(θ))‖ = |τ(θ)|`.
pub fn tangential(pa: &PopulationAnalysis, theta: f64) -> Result<f64> {
    let w = DVector::from_vec(vec![theta.cos(), theta.sin()]);
    let u = DVector::from_vec(vec![-theta.sin(), theta.cos()]);
    pa.directional_g_moment(&w, &u)
}

/// Bisection for a sign change of `f` on `[a, b]` with `f(a)·f(b) < 0`.
fn bisect(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> Result<f64> {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn sign(x: f64) -> i8 {
    if x.abs() <= ZERO_TOL {
        0
    } else if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Roots of a function sampled at `values[k] = f(lo + k·step)`, `k = 0..=n`,
/// refined by bisection.
fn roots_on_grid(
    f: &(dyn Fn(f64) -> Result<f64> + Sync),
    lo: f64,
    step: f64,
    values: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let n = values.len();
    let brackets: Vec<(usize, bool)> = (0..n)
        .filter_map(|k| {
            let s = sign(values[k]);
            if s == 0 {
                Some((k, true))
            } else if k + 1 < n && s * sign(values[k + 1]) < 0 {
                Some((k, false))
            } else {
                None
            }
        })
        .collect();
    brackets
        .par_iter()
        .map(|&(k, exact)| {
            let a = lo + k as f64 * step;
            if exact {
                Ok(a)
            } else {
                bisect(f, a, a + step, values[k], tol)
            }
        })
        .collect()
}

/// All fixed points of a two-dimensional model on the half circle `[0, π)`.
/// The other half holds the antipodes.
pub fn scan_circle(pa: &PopulationAnalysis, grid: usize) -> Result<Vec<FixedPointRecord>> {
    if pa.model().dim() != 2 {
        return Err(IcaError::Parameter("the circle scan needs a two-dimensional model".into()));
    }
    if grid < 360 {
        return Err(IcaError::Config(format!("scan grid must have at least 360 points, got {grid}")));
    }
    let step = PI / grid as f64;
    let tau = |t: f64| tangential(pa, t);
    let mut values: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| tau(k as f64 * step))
        .collect::<Result<_>>()?;
    if values.iter().all(|v| v.abs() <= ZERO_TOL) {
        return Err(IcaError::DegenerateModel(
            "the tangential component vanishes on the whole circle".into(),
        ));
    }
    // τ has period π; closing the grid at π catches a sign change just below it.
    values.push(values[0]);
    let mut roots = roots_on_grid(&tau, 0.0, step, &values, ANGLE_TOL)?;
    for r in roots.iter_mut() {
        if *r >= PI - MERGE_TOL {
            *r = 0.0;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < MERGE_TOL);
    roots
        .par_iter()
        .map(|&t| classify(pa, &UnitVector::from_angle(t)).map(|mut r| {
            r.theta = Some(t);
            r
        }))
        .collect()
}

/// A fixed point `c·a_i + √(1-c²)·a_j` between two demixing vectors whose
/// `α` values share a sign.
pub fn between_pair_fixed_point(
    pa: &PopulationAnalysis,
    i: usize,
    j: usize,
) -> Result<FixedPointRecord> {
    let model = pa.model();
    let d = model.dim();
    if i >= d || j >= d || i == j {
        return Err(IcaError::Parameter(format!("bad source pair ({i}, {j}) for d = {d}")));
    }
    let ai = model.column(i);
    let aj = model.column(j);
    let alpha_i = pa.alpha(&UnitVector::new(ai.clone())?)?;
    let alpha_j = pa.alpha(&UnitVector::new(aj.clone())?)?;
    if alpha_i * alpha_j <= 0.0 {
        return Err(IcaError::Precondition(format!(
            "α(a_i) = {alpha_i:.6} and α(a_j) = {alpha_j:.6} do not share a sign"
        )));
    }
    let tau = |t: f64| {
        let w = &ai * t.cos() + &aj * t.sin();
        let u = &aj * t.cos() - &ai * t.sin();
        pa.directional_g_moment(&w, &u)
    };
    let grid = 720;
    let step = 0.5 * PI / grid as f64;
    // interior points only: the end points are the demixing vectors themselves
    let values: Vec<f64> = (1..grid)
        .into_par_iter()
        .map(|k| tau(k as f64 * step))
        .collect::<Result<_>>()?;
    let roots = roots_on_grid(&tau, step, step, &values, 1e-13)?;
    let best = roots
        .into_iter()
        .min_by(|a, b| (a - PI / 4.0).abs().total_cmp(&(b - PI / 4.0).abs()))
        .ok_or_else(|| IcaError::NotAFixedPoint("no sign change between the pair".into()))?;
    let v = UnitVector::new(&ai * best.cos() + &aj * best.sin())?;
    classify(pa, &v)
}

/// Embeds a spurious fixed point of a two-dimensional model into a larger
/// model whose sources `i`, `j` have the same laws, and classifies it there.
pub fn lift_to_dimension(
    pa2: &PopulationAnalysis,
    record: &FixedPointRecord,
    pa_nd: &PopulationAnalysis,
    i: usize,
    j: usize,
) -> Result<FixedPointRecord> {
    let small = pa2.model();
    let large = pa_nd.model();
    if small.dim() != 2 {
        return Err(IcaError::Precondition("the record must come from a 2-D model".into()));
    }
    if i >= large.dim() || j >= large.dim() || i == j {
        return Err(IcaError::Parameter(format!(
            "bad source pair ({i}, {j}) for d = {}",
            large.dim()
        )));
    }
    if small.sources()[0] != large.sources()[i] || small.sources()[1] != large.sources()[j] {
        return Err(IcaError::Precondition(format!(
            "source laws ({}, {}) differ from ({}, {})",
            large.sources()[i],
            large.sources()[j],
            small.sources()[0],
            small.sources()[1]
        )));
    }
    if pa2.nonlinearity() != pa_nd.nonlinearity() {
        return Err(IcaError::Precondition("the two analyses use different nonlinearities".into()));
    }
    if record.class == FixedPointClass::Demixing {
        return Err(IcaError::Precondition("demixing vectors are not lifted".into()));
    }
    let coef = small.mixing().transpose() * record.v.as_vector();
    let v = UnitVector::new(large.column(i) * coef[0] + large.column(j) * coef[1])?;
    classify(pa_nd, &v)
}

/// Closed-form results for the kurtosis nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KurtosisFixedPoint {
    pub alpha: f64,
    pub fprime_norm: f64,
    pub is_demixing: bool,
}

/// `α(v) = -Σ u_i⁴ κ_i` with `u = Aᵀv`, and `‖f'(v)‖ ∈ {0, 3}`, after
/// checking that `u_i² = κ_i⁻¹ / Σ_{j∈I} κ_j⁻¹` on the support `I` of `u`.
pub fn kurtosis_closed_form(model: &MixingModel, v: &UnitVector) -> Result<KurtosisFixedPoint> {
    let u = model.mixing().transpose() * v.as_vector();
    let support: Vec<usize> = (0..u.len()).filter(|&i| u[i].abs() > 1e-9).collect();
    let kappa: Vec<f64> = model
        .sources()
        .iter()
        .map(|s| s.fourth_moment_exact() - 3.0)
        .collect();
    if let Some(&i) = support.iter().find(|&&i| kappa[i].abs() < 1e-12) {
        return Err(IcaError::DegenerateModel(format!(
            "source {i} has zero excess kurtosis, so α vanishes"
        )));
    }
    let inv_sum: f64 = support.iter().map(|&i| 1.0 / kappa[i]).sum();
    for &i in &support {
        let want = 1.0 / (kappa[i] * inv_sum);
        if (u[i] * u[i] - want).abs() > 1e-8 {
            return Err(IcaError::NotAFixedPoint(format!(
                "u_{i}² = {} but the kurtosis fixed-point equation needs {want}",
                u[i] * u[i]
            )));
        }
    }
    let alpha = -support.iter().map(|&i| u[i].powi(4) * kappa[i]).sum::<f64>();
    let is_demixing = support.len() == 1;
    Ok(KurtosisFixedPoint {
        alpha,
        fprime_norm: if is_demixing { 0.0 } else { 3.0 },
        is_demixing,
    })
}

/// Whether `v` is a strict local optimizer of the contrast on the sphere,
/// probed on a small geodesic circle around it.
pub fn is_local_optimizer(pa: &PopulationAnalysis, v: &UnitVector, radius: f64) -> Result<bool> {
    let d = v.dim();
    let vv = v.as_vector();
    // orthonormal tangent basis by Gram–Schmidt on the canonical vectors
    let mut tangents: Vec<DVector<f64>> = Vec::new();
    for k in 0..d {
        let mut t = DVector::zeros(d);
        t[k] = 1.0;
        t -= vv * vv[k];
        for b in &tangents {
            let c = b.dot(&t);
            t -= b * c;
        }
        let n = t.norm();
        if n > 1e-6 {
            tangents.push(t / n);
        }
        if tangents.len() + 1 == d {
            break;
        }
    }
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for (a, ta) in tangents.iter().enumerate() {
        dirs.push(ta.clone());
        dirs.push(-ta);
        for tb in tangents.iter().skip(a + 1) {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                dirs.push((ta * sa + tb * sb) / 2f64.sqrt());
            }
        }
    }
    let center = pa.contrast(v)?;
    let diffs: Vec<f64> = dirs
        .par_iter()
        .map(|t| {
            let w = UnitVector::new(vv * radius.cos() + t * radius.sin())?;
            Ok(pa.contrast(&w)? - center)
        })
        .collect::<Result<_>>()?;
    Ok(diffs.iter().all(|&x| x < 0.0) || diffs.iter().all(|&x| x > 0.0))
}

/// Local optima of `θ ↦ J(w(θ))` on a grid over `[0, π)`, refined by
/// golden-section search.
pub fn contrast_local_optima(pa: &PopulationAnalysis, grid: usize) -> Result<Vec<f64>> {
    if pa.model().dim() != 2 {
        return Err(IcaError::Parameter("the contrast scan needs a two-dimensional model".into()));
    }
    let step = PI / grid as f64;
    let j = |t: f64| pa.contrast(&UnitVector::from_angle(t));
    let vals: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| j(k as f64 * step))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 0..grid {
        let prev = vals[(k + grid - 1) % grid];
        let next = vals[(k + 1) % grid];
        let here = vals[k];
        let is_max = here > prev && here >= next;
        let is_min = here < prev && here <= next;
        if !(is_max || is_min) {
            continue;
        }
        let sgn = if is_max { -1.0 } else { 1.0 };
        let (mut a, mut b) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let mut fc = sgn * j(c)?;
        let mut fd = sgn * j(d)?;
        while b - a > 1e-10 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = sgn * j(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = sgn * j(d)?;
            }
        }
        out.push((0.5 * (a + b)).rem_euclid(PI));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::nonlinearity::Nonlinearity;

    fn law(s: &str) -> DistributionSpec {
        s.parse().unwrap()
    }

    fn iid(s: &str, d: usize, nl: Nonlinearity) -> PopulationAnalysis {
        PopulationAnalysis::with_defaults(MixingModel::identity(vec![law(s); d]).unwrap(), nl).unwrap()
    }

    #[test]
    fn classify_demixing_and_rejects_non_fixed_points() {
        let pa = iid("uniform", 2, Nonlinearity::gauss());
        let r = classify(&pa, &UnitVector::basis(2, 0)).unwrap();
        assert_eq!(r.class, FixedPointClass::Demixing);
        assert!(r.fprime_norm <= 1e-8);
        let bad = classify(&pa, &UnitVector::from_angle(0.3));
        assert!(matches!(bad, Err(IcaError::NotAFixedPoint(_))));
    }

    #[test]
    fn diagonal_of_uniform_sources_under_gauss() {
        let pa = iid("uniform", 2, Nonlinearity::gauss());
        let r = classify(&pa, &UnitVector::from_slice(&[1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(r.class, FixedPointClass::SpuriousUnattractive);
        assert!((r.fprime_norm - 5.12).abs() < 0.05, "{}", r.fprime_norm);
    }

    #[test]
    fn kurtosis_scan_of_symmetric_sources() {
        let pa = iid("uniform", 2, Nonlinearity::kurtosis());
        let recs = scan_circle(&pa, 720).unwrap();
        let thetas: Vec<f64> = recs.iter().map(|r| r.theta.unwrap()).collect();
        for want in [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0] {
            assert!(thetas.iter().any(|t| (t - want).abs() < 1e-8), "{thetas:?}");
        }
        for r in &recs {
            if r.class.is_spurious() {
                assert!((r.fprime_norm - 3.0).abs() < 1e-8);
                assert_eq!(r.class, FixedPointClass::SpuriousUnattractive);
            }
        }
    }

    #[test]
    fn scan_validates_its_input() {
        let pa = iid("uniform", 2, Nonlinearity::kurtosis());
        assert!(matches!(scan_circle(&pa, 100), Err(IcaError::Config(_))));
        let pa3 = iid("uniform", 3, Nonlinearity::kurtosis());
        assert!(scan_circle(&pa3, 720).is_err());
    }

    #[test]
    fn between_pair_iid_is_the_diagonal() {
        let pa = iid("uniform", 3, Nonlinearity::kurtosis());
        let r = between_pair_fixed_point(&pa, 0, 1).unwrap();
        let c = r.v.as_vector()[0];
        assert!((c - 0.5f64.sqrt()).abs() < 1e-8, "{c}");
    }

    #[test]
    fn between_pair_mixed_laws() {
        let model = MixingModel::identity(vec![law("uniform"), law("sinus")]).unwrap();
        let pa = PopulationAnalysis::with_defaults(model, Nonlinearity::kurtosis()).unwrap();
        let r = between_pair_fixed_point(&pa, 0, 1).unwrap();
        assert!(r.residual <= 1e-8);
        let c = r.v.as_vector()[0];
        assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn between_pair_requires_matching_signs() {
        let model = MixingModel::identity(vec![law("uniform"), law("laplace")]).unwrap();
        let pa = PopulationAnalysis::with_defaults(model, Nonlinearity::gauss()).unwrap();
        assert!(matches!(
            between_pair_fixed_point(&pa, 0, 1),
            Err(IcaError::Precondition(_))
        ));
    }

    #[test]
    fn kurtosis_closed_forms() {
        let model = MixingModel::identity(vec![law("bpsk"); 2]).unwrap();
        let k = kurtosis_closed_form(&model, &UnitVector::basis(2, 0)).unwrap();
        assert_eq!(k.fprime_norm, 0.0);
        assert!(k.is_demixing);
        let v = UnitVector::from_slice(&[1.0, 1.0]).unwrap();
        let k = kurtosis_closed_form(&model, &v).unwrap();
        assert!((k.alpha - 1.0).abs() < 1e-14);
        assert_eq!(k.fprime_norm, 3.0);
        let pa = PopulationAnalysis::with_defaults(model.clone(), Nonlinearity::kurtosis()).unwrap();
        let numeric = spectral_norm(&pa.fixed_point_jacobian(&v).unwrap());
        assert!((numeric - 3.0).abs() < 1e-6);
        let off = UnitVector::from_angle(0.3);
        assert!(matches!(kurtosis_closed_form(&model, &off), Err(IcaError::NotAFixedPoint(_))));
    }

    #[test]
    fn antipodes_classify_identically() {
        let pa = iid("bimod:-0.4,2", 2, Nonlinearity::gauss());
        for r in scan_circle(&pa, 720).unwrap() {
            let m = classify(&pa, &r.v.neg()).unwrap();
            assert!((m.alpha - r.alpha).abs() < 1e-12);
            assert!((m.fprime_norm - r.fprime_norm).abs() < 1e-10);
            assert_eq!(m.class, r.class);
        }
    }

    #[test]
    fn class_labels_round_trip() {
        for c in [
            FixedPointClass::Demixing,
            FixedPointClass::SpuriousAttractive,
            FixedPointClass::SpuriousUnattractive,
        ] {
            assert_eq!(c.to_string().parse::<FixedPointClass>().unwrap(), c);
        }
    }
}

//! Distributions on the non-negative integer lattice.
//!
//! [`FiniteDistribution`] is a sparse probability table keyed by [`State`].
//! [`DistributionSpec`] describes targets analytically: point masses, uniform
//! boxes, product Poissons, mixtures, or explicit finite tables. Truncation
//! reduces any supported spec to a finite table within a requested
//! infinity-norm error by keeping a maximal-probability prefix and lumping
//! the tail into the last kept state.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::State;
use crate::numerics::ln_factorial;

/// Finite tables must sum to one within this tolerance.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Probabilities below this are dropped from finite tables as numerically zero.
const DROP_BELOW: f64 = 1e-15;
/// Enumerated supports larger than this are refused.
const SUPPORT_GUARD: usize = 5_000_000;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("probability mass sums to {0}, expected 1 within 1e-9")]
    BadTotalMass(f64),
    #[error("state has {got} entries, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("probability {0} is not positive and finite")]
    BadProbability(f64),
    #[error("epsilon {0} must be positive")]
    InvalidEpsilon(f64),
    #[error("epsilon {0} >= 2 is vacuous: any two distributions are within 2")]
    VacuousEpsilon(f64),
    #[error("uniform box requires a <= b componentwise")]
    BadBox,
    #[error("product Poisson means must be positive, got {0}")]
    BadPoissonMean(f64),
    #[error("mixture weights must be positive and sum to 1 within 1e-9 (sum {0})")]
    BadWeights(f64),
    #[error("mixture weight/component counts differ")]
    WeightCountMismatch,
    #[error("empty visible index set")]
    EmptyVisible,
    #[error("visible index {0} out of range or repeated")]
    BadVisibleIndex(usize),
    #[error("support enumeration exceeds {SUPPORT_GUARD} states")]
    SupportTooLarge,
    #[error("specification does not have finite support")]
    NotFiniteSupport,
    #[error("invalid distribution JSON: {0}")]
    Json(String),
}

/// A finite-support probability mass function on `Z^dim_{>=0}`, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    dim: usize,
    mass: BTreeMap<State, f64>,
}

impl FiniteDistribution {
    /// Build a table, dropping entries below 1e-15 and checking that the
    /// remaining mass is 1 within 1e-9.
    pub fn new(dim: usize, entries: BTreeMap<State, f64>) -> Result<FiniteDistribution, DistError> {
        let mut mass = BTreeMap::new();
        for (state, p) in entries {
            if state.len() != dim {
                return Err(DistError::DimensionMismatch {
                    got: state.len(),
                    expected: dim,
                });
            }
            if !p.is_finite() || p < 0.0 {
                return Err(DistError::BadProbability(p));
            }
            if p >= DROP_BELOW {
                mass.insert(state, p);
            }
        }
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DistError::BadTotalMass(total));
        }
        Ok(FiniteDistribution { dim, mass })
    }

    /// Normalize arbitrary non-negative weights into a table.
    pub fn from_weights(
        dim: usize,
        weights: BTreeMap<State, f64>,
    ) -> Result<FiniteDistribution, DistError> {
        let total: f64 = weights.values().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(DistError::BadTotalMass(total));
        }
        let normalized = weights
            .into_iter()
            .map(|(s, w)| (s, w / total))
            .collect();
        FiniteDistribution::new(dim, normalized)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support_size(&self) -> usize {
        self.mass.len()
    }

    pub fn prob(&self, x: &State) -> f64 {
        self.mass.get(x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&State, f64)> {
        self.mass.iter().map(|(s, &p)| (s, p))
    }

    /// Support states in lexicographic order.
    pub fn states(&self) -> impl Iterator<Item = &State> {
        self.mass.keys()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }
}

/// Analytic family descriptor for a target distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Finite(FiniteDistribution),
    PointMass { x: State },
    UniformBox { a: State, b: State },
    ProductPoisson { c: Vec<f64> },
    Mixture { weights: Vec<f64>, components: Vec<DistributionSpec> },
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Finite(fd) => fd.dim(),
            DistributionSpec::PointMass { x } => x.len(),
            DistributionSpec::UniformBox { a, .. } => a.len(),
            DistributionSpec::ProductPoisson { c } => c.len(),
            DistributionSpec::Mixture { components, .. } => {
                components.first().map(|c| c.dim()).unwrap_or(0)
            }
        }
    }

    /// Check the per-kind parameter invariants.
    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            DistributionSpec::Finite(_) => Ok(()),
            DistributionSpec::PointMass { .. } => Ok(()),
            DistributionSpec::UniformBox { a, b } => {
                if a.len() != b.len() {
                    return Err(DistError::DimensionMismatch {
                        got: b.len(),
                        expected: a.len(),
                    });
                }
                if a.0.iter().zip(b.0.iter()).any(|(&x, &y)| x > y) {
                    return Err(DistError::BadBox);
                }
                Ok(())
            }
            DistributionSpec::ProductPoisson { c } => {
                for &m in c {
                    if !(m > 0.0) || !m.is_finite() {
                        return Err(DistError::BadPoissonMean(m));
                    }
                }
                Ok(())
            }
            DistributionSpec::Mixture { weights, components } => {
                if weights.len() != components.len() || components.is_empty() {
                    return Err(DistError::WeightCountMismatch);
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > MASS_TOLERANCE {
                    return Err(DistError::BadWeights(total));
                }
                let dim = components[0].dim();
                for comp in components {
                    comp.validate()?;
                    if comp.dim() != dim {
                        return Err(DistError::DimensionMismatch {
                            got: comp.dim(),
                            expected: dim,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Exact conversion to a finite table, when the support is finite.
    pub fn to_finite(&self) -> Result<FiniteDistribution, DistError> {
        match self {
            DistributionSpec::Finite(fd) => Ok(fd.clone()),
            DistributionSpec::PointMass { x } => {
                let mut m = BTreeMap::new();
                m.insert(x.clone(), 1.0);
                FiniteDistribution::new(x.len(), m)
            }
            DistributionSpec::UniformBox { a, b } => {
                let states = enumerate_box(a, b)?;
                let p = 1.0 / states.len() as f64;
                FiniteDistribution::new(a.len(), states.into_iter().map(|s| (s, p)).collect())
            }
            DistributionSpec::ProductPoisson { .. } => Err(DistError::NotFiniteSupport),
            DistributionSpec::Mixture { weights, components } => {
                let mut acc: BTreeMap<State, f64> = BTreeMap::new();
                for (w, comp) in weights.iter().zip(components) {
                    let fd = comp.to_finite()?;
                    for (s, p) in fd.iter() {
                        *acc.entry(s.clone()).or_insert(0.0) += w * p;
                    }
                }
                FiniteDistribution::new(self.dim(), acc)
            }
        }
    }
}

/// Exact pmf value of a spec at a state. Out-of-support states give 0.
pub fn pmf(spec: &DistributionSpec, x: &State) -> f64 {
    assert_eq!(x.len(), spec.dim(), "state length must equal spec dimension");
    match spec {
        DistributionSpec::Finite(fd) => fd.prob(x),
        DistributionSpec::PointMass { x: center } => {
            if x == center {
                1.0
            } else {
                0.0
            }
        }
        DistributionSpec::UniformBox { a, b } => {
            let inside = a
                .0
                .iter()
                .zip(b.0.iter())
                .zip(x.0.iter())
                .all(|((&lo, &hi), &v)| lo <= v && v <= hi);
            if !inside {
                return 0.0;
            }
            a.0.iter()
                .zip(b.0.iter())
                .map(|(&lo, &hi)| 1.0 / (hi - lo + 1) as f64)
                .product()
        }
        DistributionSpec::ProductPoisson { c } => {
            let ln_p: f64 = c
                .iter()
                .zip(x.0.iter())
                .map(|(&mean, &k)| -mean + k as f64 * mean.ln() - ln_factorial(k))
                .sum();
            ln_p.exp()
        }
        DistributionSpec::Mixture { weights, components } => weights
            .iter()
            .zip(components)
            .map(|(w, comp)| w * pmf(comp, x))
            .sum(),
    }
}

fn enumerate_box(a: &State, b: &State) -> Result<Vec<State>, DistError> {
    let mut volume = 1usize;
    for (&lo, &hi) in a.0.iter().zip(b.0.iter()) {
        if lo > hi {
            return Err(DistError::BadBox);
        }
        volume = volume
            .checked_mul((hi - lo + 1) as usize)
            .filter(|&v| v <= SUPPORT_GUARD)
            .ok_or(DistError::SupportTooLarge)?;
    }
    let d = a.len();
    let mut states = Vec::with_capacity(volume);
    let mut current = a.0.clone();
    loop {
        states.push(State(current.clone()));
        // odometer increment within [a, b]
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(states);
            }
            k -= 1;
            if current[k] < b.0[k] {
                current[k] += 1;
                break;
            }
            current[k] = a.0[k];
        }
    }
}

/// Smallest cutoff `m >= start` with certified Poisson tail
/// `P(X > m) <= 2 * pmf(m+1) <= target` (valid once `m + 1 > 2c`).
fn poisson_cutoff(mean: f64, target: f64) -> u64 {
    let ln_pmf = |k: u64| -mean + k as f64 * mean.ln() - ln_factorial(k);
    let mut m = (2.0 * mean).ceil() as u64 + 2;
    while 2.0 * ln_pmf(m + 1).exp() > target {
        m += 1 + m / 8;
    }
    m
}

/// A finite list of (state, exact pmf) pairs covering all but a certified
/// `out_bound` of the spec's mass.
fn cover(
    spec: &DistributionSpec,
    target: f64,
) -> Result<(Vec<(State, f64)>, f64), DistError> {
    match spec {
        DistributionSpec::Finite(fd) => Ok((fd.iter().map(|(s, p)| (s.clone(), p)).collect(), 0.0)),
        DistributionSpec::PointMass { x } => Ok((vec![(x.clone(), 1.0)], 0.0)),
        DistributionSpec::UniformBox { a, b } => {
            let p = pmf(spec, a);
            Ok((enumerate_box(a, b)?.into_iter().map(|s| (s, p)).collect(), 0.0))
        }
        DistributionSpec::ProductPoisson { c } => {
            let d = c.len().max(1);
            let per_coord = target / d as f64;
            let cutoffs: Vec<u64> = c.iter().map(|&m| poisson_cutoff(m, per_coord)).collect();
            let a = State(vec![0; c.len()]);
            let b = State(cutoffs);
            let states = enumerate_box(&a, &b)?;
            let items = states
                .into_iter()
                .map(|s| {
                    let p = pmf(spec, &s);
                    (s, p)
                })
                .collect();
            Ok((items, target))
        }
        DistributionSpec::Mixture { weights, components } => {
            let mut union: BTreeSet<State> = BTreeSet::new();
            let mut out = 0.0;
            for (w, comp) in weights.iter().zip(components) {
                let (items, bound) = cover(comp, target)?;
                out += w * bound;
                union.extend(items.into_iter().map(|(s, _)| s));
            }
            let items = union
                .into_iter()
                .map(|s| {
                    let p = pmf(spec, &s);
                    (s, p)
                })
                .collect();
            Ok((items, out))
        }
    }
}

/// Reduce `q` to a finite table within infinity-norm error `eps`.
///
/// States are ordered by descending probability (ties broken lexicographically
/// on coordinates), the minimal prefix with mass above `1 - eps` is kept, and
/// all remaining mass is lumped into the last kept state. The result always
/// satisfies `inf_norm(q - q') < eps`; inputs whose minimal prefix is their
/// whole support pass through unchanged.
pub fn truncate(q: &DistributionSpec, eps: f64) -> Result<FiniteDistribution, DistError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(DistError::InvalidEpsilon(eps));
    }
    if eps >= 2.0 {
        return Err(DistError::VacuousEpsilon(eps));
    }
    q.validate()?;

    let mut out_target = eps / 10.0;
    loop {
        let (mut items, out_bound) = cover(q, out_target)?;
        items.retain(|(_, p)| *p > 0.0);
        // descending probability, ties lexicographic on the state
        items.sort_by(|(sa, pa), (sb, pb)| {
            pb.partial_cmp(pa).unwrap().then_with(|| sa.cmp(sb))
        });
        let mut prefix = 0.0;
        let mut m = items.len();
        for (i, (_, p)) in items.iter().enumerate() {
            prefix += p;
            if prefix > 1.0 - eps {
                m = i + 1;
                break;
            }
        }
        let kept_mass: f64 = items[..m].iter().map(|(_, p)| p).sum();
        let q_m = items[m - 1].1;
        // The kept prefix is the global maximal-probability prefix as long as
        // every state outside the cover has strictly smaller mass than the
        // last kept state. Refine the cover until that is certain.
        if out_bound > 0.0 && q_m <= out_bound && out_target > 1e-280 {
            out_target /= 100.0;
            continue;
        }

        let lump = (1.0 - kept_mass).max(0.0);
        let mut mass: BTreeMap<State, f64> = BTreeMap::new();
        for (s, p) in items[..m - 1].iter() {
            mass.insert(s.clone(), *p);
        }
        mass.insert(items[m - 1].0.clone(), q_m + lump);
        return FiniteDistribution::new(q.dim(), mass);
    }
}

/// `sup_x |p(x) - q(x)|` over the union of supports.
pub fn inf_norm_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64, DistError> {
    if p.dim() != q.dim() {
        return Err(DistError::DimensionMismatch {
            got: q.dim(),
            expected: p.dim(),
        });
    }
    let mut sup = 0.0f64;
    for (s, pp) in p.iter() {
        sup = sup.max((pp - q.prob(s)).abs());
    }
    for (s, qq) in q.iter() {
        sup = sup.max((p.prob(s) - qq).abs());
    }
    Ok(sup)
}

/// Sum mass over hidden coordinates, keeping the `visible` coordinates in the
/// given order as the new key.
pub fn marginalize(
    pi: &FiniteDistribution,
    visible: &[usize],
) -> Result<FiniteDistribution, DistError> {
    if visible.is_empty() {
        return Err(DistError::EmptyVisible);
    }
    let mut seen = BTreeSet::new();
    for &i in visible {
        if i >= pi.dim() || !seen.insert(i) {
            return Err(DistError::BadVisibleIndex(i));
        }
    }
    let mut acc: BTreeMap<State, f64> = BTreeMap::new();
    for (s, p) in pi.iter() {
        let key = State(visible.iter().map(|&i| s.0[i]).collect());
        *acc.entry(key).or_insert(0.0) += p;
    }
    FiniteDistribution::new(visible.len(), acc)
}

// ---------------------------------------------------------------------------
// JSON serialization
//
// {"dim":d, "kind":"finite"|"point_mass"|"uniform_box"|"product_poisson"|
//  "mixture", plus kind-specific fields}. FiniteDistribution serializes as
// kind "finite" with "mass":[{"state":[...],"p":...}].
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MassEntry {
    state: Vec<u64>,
    p: f64,
}

#[derive(Serialize, Deserialize, Default)]
struct SpecJson {
    dim: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass: Option<Vec<MassEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    x: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    components: Option<Vec<SpecJson>>,
}

fn spec_to_json(spec: &DistributionSpec) -> SpecJson {
    let mut out = SpecJson {
        dim: spec.dim(),
        ..Default::default()
    };
    match spec {
        DistributionSpec::Finite(fd) => {
            out.kind = "finite".into();
            out.mass = Some(
                fd.iter()
                    .map(|(s, p)| MassEntry { state: s.0.clone(), p })
                    .collect(),
            );
        }
        DistributionSpec::PointMass { x } => {
            out.kind = "point_mass".into();
            out.x = Some(x.0.clone());
        }
        DistributionSpec::UniformBox { a, b } => {
            out.kind = "uniform_box".into();
            out.a = Some(a.0.clone());
            out.b = Some(b.0.clone());
        }
        DistributionSpec::ProductPoisson { c } => {
            out.kind = "product_poisson".into();
            out.c = Some(c.clone());
        }
        DistributionSpec::Mixture { weights, components } => {
            out.kind = "mixture".into();
            out.weights = Some(weights.clone());
            out.components = Some(components.iter().map(spec_to_json).collect());
        }
    }
    out
}

fn spec_from_json(j: SpecJson) -> Result<DistributionSpec, DistError> {
    let missing = |f: &str| DistError::Json(format!("kind '{}' requires field '{f}'", j.kind));
    let spec = match j.kind.as_str() {
        "finite" => {
            let entries = j.mass.ok_or_else(|| missing("mass"))?;
            let mut mass = BTreeMap::new();
            for e in entries {
                mass.insert(State(e.state), e.p);
            }
            DistributionSpec::Finite(FiniteDistribution::new(j.dim, mass)?)
        }
        "point_mass" => DistributionSpec::PointMass {
            x: State(j.x.ok_or_else(|| missing("x"))?),
        },
        "uniform_box" => DistributionSpec::UniformBox {
            a: State(j.a.ok_or_else(|| missing("a"))?),
            b: State(j.b.ok_or_else(|| missing("b"))?),
        },
        "product_poisson" => DistributionSpec::ProductPoisson {
            c: j.c.ok_or_else(|| missing("c"))?,
        },
        "mixture" => {
            let weights = j.weights.ok_or_else(|| missing("weights"))?;
            let components = j
                .components
                .ok_or_else(|| missing("components"))?
                .into_iter()
                .map(spec_from_json)
                .collect::<Result<Vec<_>, _>>()?;
            DistributionSpec::Mixture { weights, components }
        }
        other => return Err(DistError::Json(format!("unknown kind '{other}'"))),
    };
    if spec.dim() != j.dim {
        return Err(DistError::Json(format!(
            "declared dim {} does not match contents ({})",
            j.dim,
            spec.dim()
        )));
    }
    spec.validate()?;
    Ok(spec)
}

impl DistributionSpec {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&spec_to_json(self)).expect("spec serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<DistributionSpec, DistError> {
        let j: SpecJson = serde_json::from_str(s).map_err(|e| DistError::Json(e.to_string()))?;
        spec_from_json(j)
    }
}

impl FiniteDistribution {
    pub fn to_json_string(&self) -> String {
        DistributionSpec::Finite(self.clone()).to_json_string()
    }

    pub fn from_json_str(s: &str) -> Result<FiniteDistribution, DistError> {
        match DistributionSpec::from_json_str(s)? {
            DistributionSpec::Finite(fd) => Ok(fd),
            _ => Err(DistError::Json("expected kind 'finite'".into())),
        }
    }
}

//! Reaction-network data model and CTMC transition structure.
//!
//! A network is a list of species together with reactions `y -> y'` between
//! integer stoichiometric complexes, each carrying a positive mass-action
//! rate constant. States are vectors of molecule counts bound positionally
//! to the species order. The propensity of `y -> y'` in state `x` is
//!
//! ```text
//! lambda(x) = kappa * x!/(x - y)!     if x >= y componentwise, else 0
//! ```
//!
//! computed via falling factorials, never full factorials. Transition rates
//! of the associated continuous-time Markov chain sum propensities over
//! reactions sharing a net displacement.
//!
//! All types here are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Running falling-factorial products switch to log space above this value.
const LOG_SPACE_SWITCH: f64 = 1e300;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("reaction index {0} out of range")]
    ReactionIndex(usize),
    #[error("state has {got} entries, network has {expected} species")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("unknown species '{0}' in reaction")]
    UnknownSpecies(String),
    #[error("invalid network JSON: {0}")]
    Json(String),
}

/// A vector of non-negative molecule counts, one per species.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State(pub Vec<u64>);

impl State {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Componentwise `self >= other`.
    pub fn dominates(&self, other: &Complex) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(&x, &y)| x >= y)
    }

    /// Apply a signed displacement; `None` if any coordinate would go negative.
    pub fn offset(&self, delta: &[i64]) -> Option<State> {
        let mut out = Vec::with_capacity(self.0.len());
        for (&x, &d) in self.0.iter().zip(delta.iter()) {
            let v = x as i64 + d;
            if v < 0 {
                return None;
            }
            out.push(v as u64);
        }
        Some(State(out))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A non-negative integer linear combination of species: one side of a reaction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Complex(pub Vec<u64>);

impl Complex {
    pub fn zero(n: usize) -> Complex {
        Complex(vec![0; n])
    }

    /// Total molecularity (sum of coefficients).
    pub fn molecularity(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// A single reaction `reactant -> product` with a positive rate constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactant: Complex,
    pub product: Complex,
    pub rate: f64,
}

impl Reaction {
    /// Net change of counts when the reaction fires.
    pub fn displacement(&self) -> Vec<i64> {
        self.product
            .0
            .iter()
            .zip(self.reactant.0.iter())
            .map(|(&p, &r)| p as i64 - r as i64)
            .collect()
    }
}

/// Ordered, distinct species identifiers; the order fixes state coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesList {
    pub names: Vec<String>,
}

impl SpeciesList {
    pub fn new(names: Vec<String>) -> SpeciesList {
        SpeciesList { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A chemical reaction network: species, reactions, and the count of visible
/// species (a prefix of the species order). `init` optionally records the
/// initial condition a construction prescribes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub species: SpeciesList,
    pub reactions: Vec<Reaction>,
    pub visible_count: usize,
    pub init: Option<State>,
}

/// One invariant violation found by [`validate_network`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Index of the offending reaction, when the violation is per-reaction.
    pub reaction: Option<usize>,
    pub message: String,
}

/// Outcome of [`validate_network`]; violations are data, not errors.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of a network and report each violation.
pub fn validate_network(net: &ReactionNetwork) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = net.species.len();
    let mut push = |reaction: Option<usize>, message: String| {
        report.violations.push(Violation { reaction, message });
    };

    let mut seen = std::collections::BTreeSet::new();
    for (i, name) in net.species.names.iter().enumerate() {
        if name.is_empty() {
            push(None, format!("species {i} has an empty name"));
        }
        if !seen.insert(name.clone()) {
            push(None, format!("duplicate species name '{name}'"));
        }
    }
    if net.visible_count > n {
        push(
            None,
            format!("visible_count {} exceeds species count {n}", net.visible_count),
        );
    }
    if let Some(init) = &net.init {
        if init.len() != n {
            push(
                None,
                format!("init has {} entries, expected {n}", init.len()),
            );
        }
    }

    let mut pairs = std::collections::BTreeSet::new();
    for (i, r) in net.reactions.iter().enumerate() {
        if r.reactant.0.len() != n {
            push(Some(i), format!("reactant complex has {} entries, expected {n}", r.reactant.0.len()));
        }
        if r.product.0.len() != n {
            push(Some(i), format!("product complex has {} entries, expected {n}", r.product.0.len()));
        }
        if r.reactant == r.product {
            push(Some(i), "reactant equals product".to_string());
        }
        if !(r.rate > 0.0) || !r.rate.is_finite() {
            push(Some(i), format!("rate {} is not a positive finite real", r.rate));
        }
        if !pairs.insert((r.reactant.clone(), r.product.clone())) {
            push(Some(i), "duplicate (reactant, product) pair".to_string());
        }
    }
    report
}

/// `x!/(x-y)!` for one species pair, as a plain product.
fn falling_factorial(x: u64, y: u64) -> f64 {
    debug_assert!(x >= y);
    let mut acc = 1.0f64;
    for k in 0..y {
        acc *= (x - k) as f64;
    }
    acc
}

fn propensity_direct(rate: f64, reactant: &Complex, x: &State) -> f64 {
    let mut acc = rate;
    for (&xs, &ys) in x.0.iter().zip(reactant.0.iter()) {
        if xs < ys {
            return 0.0;
        }
        acc *= falling_factorial(xs, ys);
        if acc > LOG_SPACE_SWITCH {
            return propensity_log(rate, reactant, x);
        }
    }
    acc
}

fn propensity_log(rate: f64, reactant: &Complex, x: &State) -> f64 {
    let mut acc = rate.ln();
    for (&xs, &ys) in x.0.iter().zip(reactant.0.iter()) {
        if xs < ys {
            return 0.0;
        }
        for k in 0..ys {
            acc += ((xs - k) as f64).ln();
        }
    }
    acc.exp()
}

impl ReactionNetwork {
    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    /// Largest molecularity over all reactant and product complexes.
    pub fn max_molecularity(&self) -> u64 {
        self.reactions
            .iter()
            .map(|r| r.reactant.molecularity().max(r.product.molecularity()))
            .max()
            .unwrap_or(0)
    }

    /// Mass-action propensity of reaction `reaction_index` in state `x`.
    pub fn propensity(&self, reaction_index: usize, x: &State) -> Result<f64, NetworkError> {
        let r = self
            .reactions
            .get(reaction_index)
            .ok_or(NetworkError::ReactionIndex(reaction_index))?;
        if x.len() != self.species.len() {
            return Err(NetworkError::DimensionMismatch {
                got: x.len(),
                expected: self.species.len(),
            });
        }
        Ok(propensity_direct(r.rate, &r.reactant, x))
    }

    /// All one-reaction transitions out of `x`: target state -> summed rate.
    ///
    /// Keys are exactly the states reachable in one reaction with positive
    /// propensity; reactions with identical net displacement pool their
    /// propensities. The map never contains `x` itself.
    pub fn transition_map(&self, x: &State) -> BTreeMap<State, f64> {
        let mut out = BTreeMap::new();
        for r in &self.reactions {
            let lambda = propensity_direct(r.rate, &r.reactant, x);
            if lambda <= 0.0 {
                continue;
            }
            let delta = r.displacement();
            if delta.iter().all(|&d| d == 0) {
                continue;
            }
            // x >= reactant and product >= 0, so the target never goes negative.
            let target = x.offset(&delta).expect("reaction target non-negative");
            *out.entry(target).or_insert(0.0) += lambda;
        }
        out
    }

    /// Sum of all propensities at `x` (total CTMC exit rate).
    pub fn total_rate(&self, x: &State) -> f64 {
        self.reactions
            .iter()
            .map(|r| propensity_direct(r.rate, &r.reactant, x))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// JSON serialization
//
// {"species":[...], "visible": d, "init":[...]|null,
//  "reactions":[{"reactants":{"name":count,...},"products":{...},"rate":r}]}
//
// Omitted species in a reaction mapping mean coefficient 0. The "visible"
// field also accepts an index array [0,..,d-1] so that compiler output files
// (which carry visible species as indices) re-parse as plain networks.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ReactionJson {
    #[serde(default)]
    reactants: BTreeMap<String, u64>,
    #[serde(default)]
    products: BTreeMap<String, u64>,
    rate: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum VisibleField {
    Count(usize),
    Indices(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    species: Vec<String>,
    visible: VisibleField,
    init: Option<Vec<u64>>,
    reactions: Vec<ReactionJson>,
}

fn complex_to_map(c: &Complex, names: &[String]) -> BTreeMap<String, u64> {
    names
        .iter()
        .zip(c.0.iter())
        .filter(|(_, &v)| v > 0)
        .map(|(n, &v)| (n.clone(), v))
        .collect()
}

fn map_to_complex(m: &BTreeMap<String, u64>, species: &SpeciesList) -> Result<Complex, NetworkError> {
    let mut c = vec![0u64; species.len()];
    for (name, &count) in m {
        let idx = species
            .index_of(name)
            .ok_or_else(|| NetworkError::UnknownSpecies(name.clone()))?;
        c[idx] = count;
    }
    Ok(Complex(c))
}

impl ReactionNetwork {
    pub fn to_json(&self) -> serde_json::Value {
        let names = &self.species.names;
        let reactions: Vec<ReactionJson> = self
            .reactions
            .iter()
            .map(|r| ReactionJson {
                reactants: complex_to_map(&r.reactant, names),
                products: complex_to_map(&r.product, names),
                rate: r.rate,
            })
            .collect();
        serde_json::to_value(NetworkJson {
            species: names.clone(),
            visible: VisibleField::Count(self.visible_count),
            init: self.init.as_ref().map(|s| s.0.clone()),
            reactions,
        })
        .expect("network serialization cannot fail")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("network serialization cannot fail")
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<ReactionNetwork, NetworkError> {
        let parsed: NetworkJson =
            serde_json::from_value(v.clone()).map_err(|e| NetworkError::Json(e.to_string()))?;
        let species = SpeciesList::new(parsed.species);
        let visible_count = match parsed.visible {
            VisibleField::Count(d) => d,
            VisibleField::Indices(idx) => {
                // Compiler output lists visible species as a leading index run.
                for (k, &i) in idx.iter().enumerate() {
                    if i != k {
                        return Err(NetworkError::Json(
                            "visible indices must be the contiguous prefix 0..d".to_string(),
                        ));
                    }
                }
                idx.len()
            }
        };
        let mut reactions = Vec::with_capacity(parsed.reactions.len());
        for r in &parsed.reactions {
            reactions.push(Reaction {
                reactant: map_to_complex(&r.reactants, &species)?,
                product: map_to_complex(&r.products, &species)?,
                rate: r.rate,
            });
        }
        Ok(ReactionNetwork {
            species,
            reactions,
            visible_count,
            init: parsed.init.map(State),
        })
    }

    pub fn from_json_str(s: &str) -> Result<ReactionNetwork, NetworkError> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| NetworkError::Json(e.to_string()))?;
        Self::from_json_value(&v)
    }

    /// Human-readable reaction diagram line, e.g. `H1 + 2 V1 -> H1 + V1 @ 20`.
    pub fn reaction_display(&self, index: usize) -> String {
        let r = &self.reactions[index];
        let side = |c: &Complex| -> String {
            let terms: Vec<String> = self
                .species
                .names
                .iter()
                .zip(c.0.iter())
                .filter(|(_, &v)| v > 0)
                .map(|(n, &v)| if v == 1 { n.clone() } else { format!("{v} {n}") })
                .collect();
            if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" + ")
            }
        };
        format!("{} -> {} @ {}", side(&r.reactant), side(&r.product), r.rate)
    }
}

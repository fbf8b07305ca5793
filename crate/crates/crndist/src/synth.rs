//! The compiler: constructions mapping target distributions (and component
//! networks) to reaction networks.
//!
//! Detailed balanced constructions (`synth_full`, `synth_bimolecular`,
//! `synth_spanning_tree`) index each support point of a finite distribution
//! with a hidden species `H_i` and require the prescribed initial condition.
//! Robust constructions (`synth_point_mass`, `synth_point_mass_mix`,
//! `synth_multidim_unif`, `synth_prod_pois`, `synth_mix`) are ergodic and
//! carry no initial condition. Support points bind to hidden species in
//! lexicographic order, which makes every construction deterministic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::dist::{truncate, DistError, DistributionSpec, FiniteDistribution};
use crate::network::{Complex, Reaction, ReactionNetwork, SpeciesList, State};
use crate::numerics::factorial;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("distribution support is empty")]
    EmptySupport,
    #[error("method '{method}' requires {what}")]
    MissingInput {
        method: &'static str,
        what: &'static str,
    },
    #[error("support is not a cluster (not connected under single-coordinate steps)")]
    NotACluster,
    #[error("spanning tree does not span the distribution support")]
    TreeMismatch,
    #[error("epsilon {0} must lie in (0, 2)")]
    BadEpsilon(f64),
    #[error("delta {0} must be positive")]
    BadDelta(f64),
    #[error("box bounds require a <= b componentwise")]
    BadBox,
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("coordinate {0}: rates violate k2 * r * (b+1)! > k1")]
    RatePrecondition(usize),
    #[error("support state too large: rate constant overflows f64")]
    RateOverflow,
    #[error("mixture components must share an identical ordered species list")]
    SpeciesMismatch,
    #[error("component species name '{0}' collides with a hidden species name")]
    SpeciesClash(String),
    #[error("weights must be positive and sum to 1 within 1e-9 (sum {0})")]
    BadWeights(f64),
    #[error("component/weight counts differ")]
    WeightCountMismatch,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Construction tag carried by a [`SynthesisResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Full,
    Bimolecular,
    SpanningTree,
    PointMass,
    PointMassMix,
    MultiDimUnif,
    ProdPois,
    Mix,
    AutoDb,
    AutoRobust,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Bimolecular => "bimol",
            Method::SpanningTree => "spantree",
            Method::PointMass => "pointmass",
            Method::PointMassMix => "pmmix",
            Method::MultiDimUnif => "unif",
            Method::ProdPois => "poisson",
            Method::Mix => "mix",
            Method::AutoDb => "auto_db",
            Method::AutoRobust => "auto_robust",
        }
    }

    pub fn from_str_tag(s: &str) -> Option<Method> {
        Some(match s {
            "full" => Method::Full,
            "bimol" => Method::Bimolecular,
            "spantree" => Method::SpanningTree,
            "pointmass" => Method::PointMass,
            "pmmix" => Method::PointMassMix,
            "unif" => Method::MultiDimUnif,
            "poisson" => Method::ProdPois,
            "mix" => Method::Mix,
            "auto_db" => Method::AutoDb,
            "auto_robust" => Method::AutoRobust,
            _ => return None,
        })
    }
}

/// Synthesis metadata recorded alongside the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthMeta {
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    /// Error budget spent on truncation by the robust auto route.
    pub eps_truncation: Option<f64>,
    /// Error budget left for the network by the robust auto route.
    pub eps_network: Option<f64>,
}

/// A compiled network plus the initial condition and visible species it
/// should be observed with.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub net: ReactionNetwork,
    pub init: Option<State>,
    /// Indices of the visible species (always the leading prefix).
    pub visible: Vec<usize>,
    pub method: Method,
    pub meta: SynthMeta,
}

impl SynthesisResult {
    pub fn reaction_count(&self) -> usize {
        self.net.reactions.len()
    }
}

/// Which target does a robust construction lift per hidden catalyst: used by
/// `synth_mix` over the stock families.
#[derive(Debug, Clone)]
pub enum StockComponent {
    PointMass { x: State },
    UniformBox { a: State, b: State },
    ProductPoisson { c: Vec<f64> },
}

/// A spanning tree over a cluster support: edges connect support indices
/// whose states differ by one unit in one coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    /// Support states in lexicographic order; edge indices refer to this list.
    pub support: Vec<State>,
    pub edges: Vec<(usize, usize)>,
}

fn sorted_support(q: &FiniteDistribution) -> Vec<State> {
    q.states().cloned().collect()
}

fn adjacent_coord(a: &State, b: &State) -> Option<(usize, bool)> {
    // Some((k, true)) if a - b = e_k, Some((k, false)) if b - a = e_k.
    let mut found = None;
    for (k, (&x, &y)) in a.0.iter().zip(b.0.iter()).enumerate() {
        if x == y {
            continue;
        }
        let diff = x as i64 - y as i64;
        if diff.abs() != 1 || found.is_some() {
            return None;
        }
        found = Some((k, diff == 1));
    }
    found
}

/// True iff the states form a cluster: connected under moves of one unit in
/// one coordinate.
pub fn check_cluster(support: &[State]) -> bool {
    let set: BTreeSet<&State> = support.iter().collect();
    if set.is_empty() {
        return false;
    }
    let d = support[0].len();
    if support.iter().any(|s| s.len() != d) {
        return false;
    }
    let start = *set.iter().next().unwrap();
    let mut visited: BTreeSet<&State> = BTreeSet::new();
    visited.insert(start);
    let mut queue = VecDeque::from([start]);
    let mut unit = vec![0i64; d];
    while let Some(s) = queue.pop_front() {
        for k in 0..d {
            for sign in [1i64, -1] {
                unit[k] = sign;
                if let Some(nb) = s.offset(&unit) {
                    if let Some(found) = set.get(&nb) {
                        if visited.insert(found) {
                            queue.push_back(found);
                        }
                    }
                }
                unit[k] = 0;
            }
        }
    }
    visited.len() == set.len()
}

/// Deterministic BFS spanning tree from the lexicographically smallest state,
/// expanding neighbors in coordinate order, `+` before `-`.
pub fn build_spanning_tree(support: &[State]) -> Result<ClusterTree, SynthError> {
    if !check_cluster(support) {
        return Err(SynthError::NotACluster);
    }
    let states: Vec<State> = {
        let set: BTreeSet<State> = support.iter().cloned().collect();
        set.into_iter().collect()
    };
    let index: BTreeMap<&State, usize> = states.iter().zip(0..).collect();
    let d = states[0].len();
    let mut visited = vec![false; states.len()];
    visited[0] = true;
    let mut edges = Vec::with_capacity(states.len() - 1);
    let mut queue = VecDeque::from([0usize]);
    let mut unit = vec![0i64; d];
    while let Some(i) = queue.pop_front() {
        for k in 0..d {
            for sign in [1i64, -1] {
                unit[k] = sign;
                if let Some(nb) = states[i].offset(&unit) {
                    if let Some(&j) = index.get(&nb) {
                        if !visited[j] {
                            visited[j] = true;
                            edges.push((i, j));
                            queue.push_back(j);
                        }
                    }
                }
                unit[k] = 0;
            }
        }
    }
    Ok(ClusterTree { support: states, edges })
}

fn vh_species(d: usize, m: usize) -> SpeciesList {
    let mut names = Vec::with_capacity(d + m);
    for i in 1..=d {
        names.push(format!("V{i}"));
    }
    for i in 1..=m {
        names.push(format!("H{i}"));
    }
    SpeciesList::new(names)
}

/// Complex with the V-block set to `x` and one unit of `H_i`.
fn indexed_complex(x: &State, i: usize, d: usize, m: usize) -> Complex {
    let mut c = vec![0u64; d + m];
    c[..d].copy_from_slice(&x.0);
    c[d + i] = 1;
    Complex(c)
}

fn state_factorial(x: &State) -> Result<f64, SynthError> {
    let mut f = 1.0f64;
    for &v in &x.0 {
        f *= factorial(v);
    }
    if f.is_finite() {
        Ok(f)
    } else {
        Err(SynthError::RateOverflow)
    }
}

fn init_state(support: &[State], d: usize, m: usize) -> State {
    // (x_1, e_1): visible counts at the lexicographically smallest support
    // state, one molecule of its hidden index species.
    let mut counts = vec![0u64; d + m];
    counts[..d].copy_from_slice(&support[0].0);
    counts[d] = 1;
    State(counts)
}

/// Fully connected indexed network: one reaction per ordered pair of support
/// points, `H_i + x_i.V -> H_j + x_j.V` at rate `x_j! q(x_j)`.
pub fn synth_full(q: &FiniteDistribution) -> Result<SynthesisResult, SynthError> {
    let support = sorted_support(q);
    if support.is_empty() {
        return Err(SynthError::EmptySupport);
    }
    let (d, m) = (q.dim(), support.len());
    let rates: Vec<f64> = support
        .iter()
        .map(|x| Ok(state_factorial(x)? * q.prob(x)))
        .collect::<Result<_, SynthError>>()?;
    let mut reactions = Vec::with_capacity(m * (m - 1));
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            reactions.push(Reaction {
                reactant: indexed_complex(&support[i], i, d, m),
                product: indexed_complex(&support[j], j, d, m),
                rate: rates[j],
            });
        }
    }
    let init = init_state(&support, d, m);
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: vh_species(d, m),
            reactions,
            visible_count: d,
            init: Some(init.clone()),
        },
        init: Some(init),
        visible: (0..d).collect(),
        method: Method::Full,
        meta: SynthMeta::default(),
    })
}

/// Emit the reversible pair for adjacent support points `x_i = x_j + e_k`:
/// `H_i + V_k -> H_j` at `q(x_j)` and `H_j -> H_i + V_k` at `x_i(k) q(x_i)`.
fn adjacent_pair_reactions(
    support: &[State],
    q: &FiniteDistribution,
    i: usize,
    j: usize,
    k: usize,
    d: usize,
    m: usize,
    out: &mut Vec<Reaction>,
) {
    let mut hi_vk = vec![0u64; d + m];
    hi_vk[k] = 1;
    hi_vk[d + i] = 1;
    let mut hj = vec![0u64; d + m];
    hj[d + j] = 1;
    out.push(Reaction {
        reactant: Complex(hi_vk.clone()),
        product: Complex(hj.clone()),
        rate: q.prob(&support[j]),
    });
    out.push(Reaction {
        reactant: Complex(hj),
        product: Complex(hi_vk),
        rate: support[i].0[k] as f64 * q.prob(&support[i]),
    });
}

/// Bimolecular indexed network over a cluster support: one reversible pair
/// per adjacent pair of support points.
pub fn synth_bimolecular(q: &FiniteDistribution) -> Result<SynthesisResult, SynthError> {
    let support = sorted_support(q);
    if support.is_empty() {
        return Err(SynthError::EmptySupport);
    }
    if !check_cluster(&support) {
        return Err(SynthError::NotACluster);
    }
    let (d, m) = (q.dim(), support.len());
    let mut reactions = Vec::new();
    for i in 0..m {
        for j in 0..m {
            if let Some((k, true)) = adjacent_coord(&support[i], &support[j]) {
                adjacent_pair_reactions(&support, q, i, j, k, d, m, &mut reactions);
            }
        }
    }
    let init = init_state(&support, d, m);
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: vh_species(d, m),
            reactions,
            visible_count: d,
            init: Some(init.clone()),
        },
        init: Some(init),
        visible: (0..d).collect(),
        method: Method::Bimolecular,
        meta: SynthMeta::default(),
    })
}

/// Spanning-tree indexed network: as [`synth_bimolecular`] but only tree
/// edges emit reactions, giving exactly `2(m-1)` reactions.
pub fn synth_spanning_tree(
    q: &FiniteDistribution,
    tree: Option<&ClusterTree>,
) -> Result<SynthesisResult, SynthError> {
    let support = sorted_support(q);
    if support.is_empty() {
        return Err(SynthError::EmptySupport);
    }
    let owned;
    let tree = match tree {
        Some(t) => t,
        None => {
            owned = build_spanning_tree(&support)?;
            &owned
        }
    };
    if tree.support != support {
        return Err(SynthError::TreeMismatch);
    }
    if tree.edges.len() + 1 != support.len() {
        return Err(SynthError::TreeMismatch);
    }
    let (d, m) = (q.dim(), support.len());
    let mut reactions = Vec::with_capacity(2 * tree.edges.len());
    for &(ia, ib) in &tree.edges {
        match adjacent_coord(&support[ia], &support[ib]) {
            Some((k, true)) => adjacent_pair_reactions(&support, q, ia, ib, k, d, m, &mut reactions),
            Some((k, false)) => adjacent_pair_reactions(&support, q, ib, ia, k, d, m, &mut reactions),
            None => return Err(SynthError::TreeMismatch),
        }
    }
    let init = init_state(&support, d, m);
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: vh_species(d, m),
            reactions,
            visible_count: d,
            init: Some(init.clone()),
        },
        init: Some(init),
        visible: (0..d).collect(),
        method: Method::SpanningTree,
        meta: SynthMeta::default(),
    })
}

fn unit_complex(k: usize, count: u64, n: usize) -> Complex {
    let mut c = vec![0u64; n];
    c[k] = count;
    Complex(c)
}

/// Robust point-mass network: per coordinate, production `0 -> V_i` (when
/// `x(i) != 0`), fast degradation `(x(i)+1)V_i -> x(i)V_i` at `2d/eps`, and
/// pair annihilation `2V_i -> 0` (when `x(i) = 0`).
pub fn synth_point_mass(x: &State, eps: f64) -> Result<SynthesisResult, SynthError> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(SynthError::BadEpsilon(eps));
    }
    let d = x.len();
    let kappa: Vec<(f64, f64, f64)> = (0..d).map(|_| (1.0, 2.0 * d as f64 / eps, 1.0)).collect();
    let net = unif_network(x, x, &kappa)?;
    Ok(SynthesisResult {
        net,
        init: None,
        visible: (0..d).collect(),
        method: Method::PointMass,
        meta: SynthMeta {
            epsilon: Some(eps),
            ..SynthMeta::default()
        },
    })
}

fn unif_network(a: &State, b: &State, kappa: &[(f64, f64, f64)]) -> Result<ReactionNetwork, SynthError> {
    let d = a.len();
    if b.len() != d || a.0.iter().zip(b.0.iter()).any(|(&x, &y)| x > y) {
        return Err(SynthError::BadBox);
    }
    let mut reactions = Vec::new();
    for i in 0..d {
        let (k1, k2, k3) = kappa[i];
        for rate in [k1, k2, k3] {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(SynthError::BadRate(rate));
            }
        }
        if b.0[i] >= 1 {
            // k2 * r * (b+1)! > k1 keeps the box reachable faster than it fills
            let r = (b.0[i] - a.0[i] + 1) as f64;
            if !(k2 * r * factorial(b.0[i] + 1) > k1) {
                return Err(SynthError::RatePrecondition(i));
            }
            reactions.push(Reaction {
                reactant: Complex::zero(d),
                product: unit_complex(i, 1, d),
                rate: k1,
            });
        }
        reactions.push(Reaction {
            reactant: unit_complex(i, b.0[i] + 1, d),
            product: unit_complex(i, a.0[i], d),
            rate: k2,
        });
        if b.0[i] == 0 {
            reactions.push(Reaction {
                reactant: unit_complex(i, 2, d),
                product: Complex::zero(d),
                rate: k3,
            });
        }
    }
    Ok(ReactionNetwork {
        species: vh_species(d, 0),
        reactions,
        visible_count: d,
        init: None,
    })
}

/// Robust uniform-box network. With `kappa` given, per-coordinate rate
/// triples `(k1, k2, k3)` replace the defaults `(1, 2d/delta, 1)`.
pub fn synth_multidim_unif(
    a: &State,
    b: &State,
    delta: f64,
    kappa: Option<&[(f64, f64, f64)]>,
) -> Result<SynthesisResult, SynthError> {
    let d = a.len();
    let kappa_vec: Vec<(f64, f64, f64)> = match kappa {
        Some(k) => {
            if k.len() != d {
                return Err(SynthError::BadBox);
            }
            k.to_vec()
        }
        None => {
            if !(delta > 0.0) {
                return Err(SynthError::BadDelta(delta));
            }
            (0..d).map(|_| (1.0, 2.0 * d as f64 / delta, 1.0)).collect()
        }
    };
    let net = unif_network(a, b, &kappa_vec)?;
    Ok(SynthesisResult {
        net,
        init: None,
        visible: (0..d).collect(),
        method: Method::MultiDimUnif,
        meta: SynthMeta {
            delta: if kappa.is_none() { Some(delta) } else { None },
            ..SynthMeta::default()
        },
    })
}

/// Robust product-form Poisson network: `0 -> V_i` at `c(i)^2`,
/// `V_i -> 2V_i` at `c(i)`, `2V_i -> 0` at 1.
pub fn synth_prod_pois(c: &[f64]) -> Result<SynthesisResult, SynthError> {
    let d = c.len();
    for &mean in c {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(SynthError::BadRate(mean));
        }
    }
    let mut reactions = Vec::with_capacity(3 * d);
    for (i, &mean) in c.iter().enumerate() {
        reactions.push(Reaction {
            reactant: Complex::zero(d),
            product: unit_complex(i, 1, d),
            rate: mean * mean,
        });
        reactions.push(Reaction {
            reactant: unit_complex(i, 1, d),
            product: unit_complex(i, 2, d),
            rate: mean,
        });
        reactions.push(Reaction {
            reactant: unit_complex(i, 2, d),
            product: Complex::zero(d),
            rate: 1.0,
        });
    }
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: vh_species(d, 0),
            reactions,
            visible_count: d,
            init: None,
        },
        init: None,
        visible: (0..d).collect(),
        method: Method::ProdPois,
        meta: SynthMeta::default(),
    })
}

fn check_weights(zeta: &[f64], m: usize) -> Result<(), SynthError> {
    if zeta.len() != m {
        return Err(SynthError::WeightCountMismatch);
    }
    let total: f64 = zeta.iter().sum();
    if zeta.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(SynthError::BadWeights(total));
    }
    Ok(())
}

/// Catalytic mixing network: `0 <-> H_i` at rates `delta^2 zeta(i)` / `delta`,
/// plus every component reaction lifted to `H_i + y -> H_i + y'` with its
/// rate unchanged.
pub fn synth_mix(
    components: &[ReactionNetwork],
    zeta: &[f64],
    delta: f64,
) -> Result<SynthesisResult, SynthError> {
    if components.is_empty() {
        return Err(SynthError::WeightCountMismatch);
    }
    check_weights(zeta, components.len())?;
    if !(delta > 0.0) {
        return Err(SynthError::BadDelta(delta));
    }
    let v_names = &components[0].species.names;
    for comp in components {
        if &comp.species.names != v_names {
            return Err(SynthError::SpeciesMismatch);
        }
    }
    let (d, m) = (v_names.len(), components.len());
    let mut names = v_names.clone();
    for i in 1..=m {
        let h = format!("H{i}");
        if v_names.contains(&h) {
            return Err(SynthError::SpeciesClash(h));
        }
        names.push(h);
    }
    let mut reactions = Vec::new();
    for (i, w) in zeta.iter().enumerate() {
        reactions.push(Reaction {
            reactant: Complex::zero(d + m),
            product: unit_complex(d + i, 1, d + m),
            rate: delta * delta * w,
        });
        reactions.push(Reaction {
            reactant: unit_complex(d + i, 1, d + m),
            product: Complex::zero(d + m),
            rate: delta,
        });
    }
    for (i, comp) in components.iter().enumerate() {
        for r in &comp.reactions {
            let lift = |c: &Complex| {
                let mut v = vec![0u64; d + m];
                v[..d].copy_from_slice(&c.0);
                v[d + i] += 1;
                Complex(v)
            };
            reactions.push(Reaction {
                reactant: lift(&r.reactant),
                product: lift(&r.product),
                rate: r.rate,
            });
        }
    }
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: SpeciesList::new(names),
            reactions,
            visible_count: d,
            init: None,
        },
        init: None,
        visible: (0..d).collect(),
        method: Method::Mix,
        meta: SynthMeta {
            delta: Some(delta),
            ..SynthMeta::default()
        },
    })
}

/// Robust point-mass mixing network: per support point `x_i`, `0 <-> H_i` at
/// `delta^2 q(x_i)` / `delta`, and the H_i-catalyzed point-mass machinery for
/// every coordinate.
pub fn synth_point_mass_mix(
    q: &FiniteDistribution,
    delta: f64,
) -> Result<SynthesisResult, SynthError> {
    let support = sorted_support(q);
    if support.is_empty() {
        return Err(SynthError::EmptySupport);
    }
    if !(delta > 0.0) {
        return Err(SynthError::BadDelta(delta));
    }
    let (d, m) = (q.dim(), support.len());
    let fast = 2.0 * d as f64 / delta;
    let mut reactions = Vec::with_capacity(2 * m + 2 * m * d);
    for (i, x) in support.iter().enumerate() {
        reactions.push(Reaction {
            reactant: Complex::zero(d + m),
            product: unit_complex(d + i, 1, d + m),
            rate: delta * delta * q.prob(x),
        });
        reactions.push(Reaction {
            reactant: unit_complex(d + i, 1, d + m),
            product: Complex::zero(d + m),
            rate: delta,
        });
    }
    for (i, x) in support.iter().enumerate() {
        for j in 0..d {
            let h_plus = |v_count: u64| {
                let mut c = vec![0u64; d + m];
                c[j] = v_count;
                c[d + i] = 1;
                Complex(c)
            };
            reactions.push(Reaction {
                reactant: h_plus(x.0[j] + 1),
                product: h_plus(x.0[j]),
                rate: fast,
            });
            if x.0[j] != 0 {
                reactions.push(Reaction {
                    reactant: h_plus(0),
                    product: h_plus(1),
                    rate: 1.0,
                });
            } else {
                reactions.push(Reaction {
                    reactant: h_plus(2),
                    product: h_plus(0),
                    rate: 1.0,
                });
            }
        }
    }
    Ok(SynthesisResult {
        net: ReactionNetwork {
            species: vh_species(d, m),
            reactions,
            visible_count: d,
            init: None,
        },
        init: None,
        visible: (0..d).collect(),
        method: Method::PointMassMix,
        meta: SynthMeta {
            delta: Some(delta),
            ..SynthMeta::default()
        },
    })
}

/// Route selector for [`compile_auto`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    DetailedBalanced,
    Robust,
}

/// Compile an arbitrary supported spec to within `eps`.
///
/// The detailed-balanced route truncates at `eps` and emits the fully
/// connected indexed network (the truncation is the only error source). The
/// robust route splits the budget evenly: truncate at `eps/2`, then build the
/// point-mass mixing network with `delta = eps / (4 m d)` as the default
/// tuning; both halves are recorded in the metadata.
pub fn compile_auto(
    q: &DistributionSpec,
    eps: f64,
    route: Route,
) -> Result<SynthesisResult, SynthError> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(SynthError::BadEpsilon(eps));
    }
    match route {
        Route::DetailedBalanced => {
            let finite = truncate(q, eps)?;
            let mut result = synth_full(&finite)?;
            result.method = Method::AutoDb;
            result.meta.epsilon = Some(eps);
            Ok(result)
        }
        Route::Robust => {
            let finite = truncate(q, eps / 2.0)?;
            let m = finite.support_size();
            let d = finite.dim();
            let delta = eps / (4.0 * m as f64 * d as f64);
            let mut result = synth_point_mass_mix(&finite, delta)?;
            result.method = Method::AutoRobust;
            result.meta = SynthMeta {
                delta: Some(delta),
                epsilon: Some(eps),
                eps_truncation: Some(eps / 2.0),
                eps_network: Some(eps / 2.0),
            };
            Ok(result)
        }
    }
}

/// Build the stock robust network for a component family.
pub fn stock_network(comp: &StockComponent, delta: f64) -> Result<ReactionNetwork, SynthError> {
    match comp {
        StockComponent::PointMass { x } => Ok(synth_point_mass(x, delta)?.net),
        StockComponent::UniformBox { a, b } => Ok(synth_multidim_unif(a, b, delta, None)?.net),
        StockComponent::ProductPoisson { c } => Ok(synth_prod_pois(c)?.net),
    }
}

/// Dispatch a construction by tag over a distribution spec.
///
/// `eps` is required by `pointmass` and the auto routes; `delta` by `pmmix`,
/// `unif`, and `mix`. Finite-support constructions accept any spec that
/// converts exactly to a finite table. `mix` accepts mixtures whose
/// components are the stock families (point mass, uniform box, product
/// Poisson).
pub fn synthesize(
    spec: &DistributionSpec,
    method: Method,
    eps: Option<f64>,
    delta: Option<f64>,
) -> Result<SynthesisResult, SynthError> {
    let need_eps = |m| eps.ok_or(SynthError::MissingInput { method: m, what: "eps" });
    let need_delta = |m| delta.ok_or(SynthError::MissingInput { method: m, what: "delta" });
    match method {
        Method::Full => synth_full(&spec.to_finite()?),
        Method::Bimolecular => synth_bimolecular(&spec.to_finite()?),
        Method::SpanningTree => synth_spanning_tree(&spec.to_finite()?, None),
        Method::PointMass => match spec {
            DistributionSpec::PointMass { x } => synth_point_mass(x, need_eps("pointmass")?),
            _ => Err(SynthError::MissingInput {
                method: "pointmass",
                what: "a point_mass distribution",
            }),
        },
        Method::PointMassMix => synth_point_mass_mix(&spec.to_finite()?, need_delta("pmmix")?),
        Method::MultiDimUnif => match spec {
            DistributionSpec::UniformBox { a, b } => {
                synth_multidim_unif(a, b, need_delta("unif")?, None)
            }
            _ => Err(SynthError::MissingInput {
                method: "unif",
                what: "a uniform_box distribution",
            }),
        },
        Method::ProdPois => match spec {
            DistributionSpec::ProductPoisson { c } => synth_prod_pois(c),
            _ => Err(SynthError::MissingInput {
                method: "poisson",
                what: "a product_poisson distribution",
            }),
        },
        Method::Mix => match spec {
            DistributionSpec::Mixture { weights, components } => {
                let delta = need_delta("mix")?;
                let nets = components
                    .iter()
                    .map(|comp| {
                        let stock = match comp {
                            DistributionSpec::PointMass { x } => {
                                StockComponent::PointMass { x: x.clone() }
                            }
                            DistributionSpec::UniformBox { a, b } => StockComponent::UniformBox {
                                a: a.clone(),
                                b: b.clone(),
                            },
                            DistributionSpec::ProductPoisson { c } => {
                                StockComponent::ProductPoisson { c: c.clone() }
                            }
                            _ => {
                                return Err(SynthError::MissingInput {
                                    method: "mix",
                                    what: "stock-family components only",
                                })
                            }
                        };
                        stock_network(&stock, delta)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                synth_mix(&nets, weights, delta)
            }
            _ => Err(SynthError::MissingInput {
                method: "mix",
                what: "a mixture distribution",
            }),
        },
        Method::AutoDb => compile_auto(spec, need_eps("auto")?, Route::DetailedBalanced),
        Method::AutoRobust => compile_auto(spec, need_eps("auto")?, Route::Robust),
    }
}

// ---------------------------------------------------------------------------
// JSON serialization: the network document plus
// {"method":..., "visible":[indices], "meta":{...}}.
// ---------------------------------------------------------------------------

impl SynthesisResult {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.net.to_json();
        let obj = v.as_object_mut().expect("network JSON is an object");
        obj.insert(
            "visible".into(),
            serde_json::json!(self.visible),
        );
        obj.insert("method".into(), serde_json::json!(self.method.as_str()));
        let mut meta = serde_json::Map::new();
        meta.insert(
            "reaction_count".into(),
            serde_json::json!(self.net.reactions.len()),
        );
        meta.insert("delta".into(), serde_json::json!(self.meta.delta));
        meta.insert("epsilon".into(), serde_json::json!(self.meta.epsilon));
        if let Some(t) = self.meta.eps_truncation {
            meta.insert("eps_truncation".into(), serde_json::json!(t));
        }
        if let Some(n) = self.meta.eps_network {
            meta.insert("eps_network".into(), serde_json::json!(n));
        }
        obj.insert("meta".into(), serde_json::Value::Object(meta));
        v
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("synthesis serialization cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<SynthesisResult, SynthError> {
        let v: serde_json::Value = serde_json::from_str(s)
            .map_err(|e| SynthError::Dist(DistError::Json(e.to_string())))?;
        let net = ReactionNetwork::from_json_value(&v)
            .map_err(|e| SynthError::Dist(DistError::Json(e.to_string())))?;
        let method = v
            .get("method")
            .and_then(|m| m.as_str())
            .and_then(Method::from_str_tag)
            .ok_or_else(|| SynthError::Dist(DistError::Json("missing or unknown method".into())))?;
        let meta_v = v.get("meta").cloned().unwrap_or(serde_json::json!({}));
        let get_f = |k: &str| meta_v.get(k).and_then(|x| x.as_f64());
        let meta = SynthMeta {
            delta: get_f("delta"),
            epsilon: get_f("epsilon"),
            eps_truncation: get_f("eps_truncation"),
            eps_network: get_f("eps_network"),
        };
        let visible = (0..net.visible_count).collect();
        let init = net.init.clone();
        Ok(SynthesisResult { net, init, visible, method, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn finite(entries: &[(&[u64], f64)]) -> FiniteDistribution {
        let mass: BTreeMap<State, f64> = entries
            .iter()
            .map(|(s, p)| (State(s.to_vec()), *p))
            .collect();
        FiniteDistribution::new(entries[0].0.len(), mass).unwrap()
    }

    fn reaction_set(net: &ReactionNetwork) -> BTreeSet<(Vec<u64>, Vec<u64>, String)> {
        net.reactions
            .iter()
            .map(|r| (r.reactant.0.clone(), r.product.0.clone(), format!("{:.12e}", r.rate)))
            .collect()
    }

    #[test]
    fn cluster_checks() {
        let path: Vec<State> = [[0u64], [1], [2]].iter().map(|s| State(s.to_vec())).collect();
        assert!(check_cluster(&path));

        let gap: Vec<State> = [[0u64, 0], [2, 2]].iter().map(|s| State(s.to_vec())).collect();
        assert!(!check_cluster(&gap));

        let ell: Vec<State> = [[0u64, 0], [1, 0], [1, 1]]
            .iter()
            .map(|s| State(s.to_vec()))
            .collect();
        assert!(check_cluster(&ell));
    }

    #[test]
    fn spanning_tree_on_path() {
        let path: Vec<State> = [[0u64], [1], [2]].iter().map(|s| State(s.to_vec())).collect();
        let tree = build_spanning_tree(&path).unwrap();
        assert_eq!(tree.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn spanning_tree_on_square() {
        let square: Vec<State> = [[0u64, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|s| State(s.to_vec()))
            .collect();
        let tree = build_spanning_tree(&square).unwrap();
        assert_eq!(tree.edges.len(), 3);
        // connected and acyclic by construction: every non-root appears
        // exactly once as a BFS child
        let mut children: Vec<usize> = tree.edges.iter().map(|&(_, j)| j).collect();
        children.sort_unstable();
        assert_eq!(children, vec![1, 2, 3]);
    }

    #[test]
    fn spanning_tree_singleton() {
        let one = vec![State(vec![5])];
        let tree = build_spanning_tree(&one).unwrap();
        assert!(tree.edges.is_empty());
    }

    #[test]
    fn full_two_point_distribution() {
        // q = {0: 0.3, 1: 0.7}: H1 <-> H2 + V1 with forward rate 1!*0.7 and
        // reverse 0!*0.3; init ((0),(1,0)).
        let q = finite(&[(&[0], 0.3), (&[1], 0.7)]);
        let r = synth_full(&q).unwrap();
        assert_eq!(r.net.reactions.len(), 2);
        assert_eq!(r.net.species.names, vec!["V1", "H1", "H2"]);
        let fwd = &r.net.reactions[0];
        assert_eq!(fwd.reactant, Complex(vec![0, 1, 0]));
        assert_eq!(fwd.product, Complex(vec![1, 0, 1]));
        assert!((fwd.rate - 0.7).abs() < 1e-15);
        let rev = &r.net.reactions[1];
        assert_eq!(rev.reactant, Complex(vec![1, 0, 1]));
        assert_eq!(rev.product, Complex(vec![0, 1, 0]));
        assert!((rev.rate - 0.3).abs() < 1e-15);
        assert_eq!(r.init, Some(State(vec![0, 1, 0])));
    }

    #[test]
    fn full_point_mass_has_no_reactions() {
        let q = finite(&[(&[4], 1.0)]);
        let r = synth_full(&q).unwrap();
        assert!(r.net.reactions.is_empty());
        assert_eq!(r.init, Some(State(vec![4, 1])));
    }

    #[test]
    fn full_reaction_count_quadratic() {
        let entries: Vec<(Vec<u64>, f64)> = (0..20u64).map(|k| (vec![k], 0.05)).collect();
        let mass: BTreeMap<State, f64> =
            entries.into_iter().map(|(s, p)| (State(s), p)).collect();
        let q = FiniteDistribution::new(1, mass).unwrap();
        let r = synth_full(&q).unwrap();
        assert_eq!(r.net.reactions.len(), 380);
    }

    #[test]
    fn bimolecular_rates_bind_to_larger_state() {
        let q = finite(&[(&[0], 0.3), (&[1], 0.7)]);
        let r = synth_bimolecular(&q).unwrap();
        assert_eq!(r.net.reactions.len(), 2);
        // x_2=(1) is larger: H2 + V1 -> H1 at q(x_1)=0.3
        let fwd = &r.net.reactions[0];
        assert_eq!(fwd.reactant, Complex(vec![1, 0, 1]));
        assert_eq!(fwd.product, Complex(vec![0, 1, 0]));
        assert!((fwd.rate - 0.3).abs() < 1e-15);
        // H1 -> H2 + V1 at x_2(1)*q(x_2) = 0.7
        let rev = &r.net.reactions[1];
        assert!((rev.rate - 0.7).abs() < 1e-15);
    }

    #[test]
    fn bimolecular_is_at_most_second_order() {
        let q = finite(&[
            (&[5, 3], 0.25),
            (&[5, 4], 0.25),
            (&[6, 4], 0.25),
            (&[6, 3], 0.25),
        ]);
        let r = synth_bimolecular(&q).unwrap();
        for reaction in &r.net.reactions {
            assert!(reaction.reactant.molecularity() <= 2);
            assert!(reaction.product.molecularity() <= 2);
        }
        // 4 adjacent pairs in the 2x2 box -> 8 reactions
        assert_eq!(r.net.reactions.len(), 8);
        // the (5,3)-(5,4) pair shows up as H1 <-> H2 + V2
        // (support sorted lexicographically: H1=(5,3), H2=(5,4))
        let h1 = Complex(vec![0, 0, 1, 0, 0, 0]);
        let h2_v2 = Complex(vec![0, 1, 0, 1, 0, 0]);
        assert!(r
            .net
            .reactions
            .iter()
            .any(|rx| rx.reactant == h1 && rx.product == h2_v2));
        assert!(r
            .net
            .reactions
            .iter()
            .any(|rx| rx.reactant == h2_v2 && rx.product == h1));
    }

    #[test]
    fn bimolecular_rejects_non_cluster() {
        let q = finite(&[(&[0, 0], 0.5), (&[2, 2], 0.5)]);
        assert!(matches!(synth_bimolecular(&q), Err(SynthError::NotACluster)));
    }

    #[test]
    fn spanning_tree_counts() {
        let q = finite(&[(&[0], 0.2), (&[1], 0.3), (&[2], 0.5)]);
        let r = synth_spanning_tree(&q, None).unwrap();
        assert_eq!(r.net.reactions.len(), 4);

        let square = finite(&[
            (&[0u64, 0], 0.25),
            (&[0, 1], 0.25),
            (&[1, 0], 0.25),
            (&[1, 1], 0.25),
        ]);
        let tree = synth_spanning_tree(&square, None).unwrap();
        assert_eq!(tree.net.reactions.len(), 6);
        let bimol = synth_bimolecular(&square).unwrap();
        assert_eq!(bimol.net.reactions.len(), 8);
    }

    #[test]
    fn point_mass_network_examples() {
        // x=(7), eps=0.1: {0 -> V1 @ 1, 8V1 -> 7V1 @ 20}
        let r = synth_point_mass(&State(vec![7]), 0.1).unwrap();
        assert_eq!(r.net.reactions.len(), 2);
        assert_eq!(r.net.reactions[0].reactant, Complex(vec![0]));
        assert_eq!(r.net.reactions[0].product, Complex(vec![1]));
        assert_eq!(r.net.reactions[0].rate, 1.0);
        assert_eq!(r.net.reactions[1].reactant, Complex(vec![8]));
        assert_eq!(r.net.reactions[1].product, Complex(vec![7]));
        assert!((r.net.reactions[1].rate - 20.0).abs() < 1e-12);

        // x=(0): {V1 -> 0 @ 2/eps, 2V1 -> 0 @ 1}
        let r0 = synth_point_mass(&State(vec![0]), 0.5).unwrap();
        assert_eq!(r0.net.reactions.len(), 2);
        assert_eq!(r0.net.reactions[0].reactant, Complex(vec![1]));
        assert_eq!(r0.net.reactions[0].product, Complex(vec![0]));
        assert!((r0.net.reactions[0].rate - 4.0).abs() < 1e-12);
        assert_eq!(r0.net.reactions[1].reactant, Complex(vec![2]));

        // x=(3,2), eps=0.5: 4 reactions, degradations at 2d/eps = 8
        let r2 = synth_point_mass(&State(vec![3, 2]), 0.5).unwrap();
        assert_eq!(r2.net.reactions.len(), 4);
        let deg_rates: Vec<f64> = r2
            .net
            .reactions
            .iter()
            .filter(|r| r.reactant.molecularity() > 1)
            .map(|r| r.rate)
            .collect();
        assert_eq!(deg_rates, vec![8.0, 8.0]);
    }

    #[test]
    fn point_mass_rejects_bad_eps() {
        assert!(synth_point_mass(&State(vec![1]), 2.0).is_err());
        assert!(synth_point_mass(&State(vec![1]), 0.0).is_err());
    }

    #[test]
    fn point_mass_mix_single_point() {
        // q = delta-mass at (1), delta = 0.1:
        // 0 -> H1 @ delta^2 = 0.01, H1 -> 0 @ 0.1,
        // H1 -> H1+V1 @ 1, H1+2V1 -> H1+V1 @ 20
        let q = finite(&[(&[1], 1.0)]);
        let r = synth_point_mass_mix(&q, 0.1).unwrap();
        assert_eq!(r.net.reactions.len(), 4);
        assert!((r.net.reactions[0].rate - 0.01).abs() < 1e-15);
        assert!((r.net.reactions[1].rate - 0.1).abs() < 1e-15);
        assert!((r.net.reactions[2].rate - 20.0).abs() < 1e-12);
        assert_eq!(r.net.reactions[2].reactant, Complex(vec![2, 1]));
        assert_eq!(r.net.reactions[2].product, Complex(vec![1, 1]));
        assert_eq!(r.net.reactions[3].reactant, Complex(vec![0, 1]));
        assert_eq!(r.net.reactions[3].product, Complex(vec![1, 1]));
    }

    #[test]
    fn point_mass_mix_reaction_count() {
        let q = finite(&[(&[0], 0.5), (&[3], 0.5)]);
        let r = synth_point_mass_mix(&q, 0.1).unwrap();
        // 2m + 2 m d with m=2, d=1
        assert_eq!(r.net.reactions.len(), 8);
    }

    #[test]
    fn point_mass_mix_production_rates() {
        let q = finite(&[(&[0], 0.25), (&[2], 0.75)]);
        let delta = 0.2;
        let r = synth_point_mass_mix(&q, delta).unwrap();
        let productions: Vec<f64> = r
            .net
            .reactions
            .iter()
            .filter(|rx| rx.reactant.molecularity() == 0)
            .map(|rx| rx.rate)
            .collect();
        assert!((productions[0] - delta * delta * 0.25).abs() < 1e-15);
        assert!((productions[1] - delta * delta * 0.75).abs() < 1e-15);
    }

    #[test]
    fn multidim_unif_examples() {
        // a=(1), b=(4), delta=0.2: {0 -> V1 @ 1, 5V1 -> V1 @ 10}
        let r = synth_multidim_unif(&State(vec![1]), &State(vec![4]), 0.2, None).unwrap();
        assert_eq!(r.net.reactions.len(), 2);
        assert_eq!(r.net.reactions[1].reactant, Complex(vec![5]));
        assert_eq!(r.net.reactions[1].product, Complex(vec![1]));
        assert!((r.net.reactions[1].rate - 10.0).abs() < 1e-12);

        // a=b=x is the point-mass network
        let x = State(vec![3, 2]);
        let pm = synth_point_mass(&x, 0.25).unwrap();
        let unif = synth_multidim_unif(&x, &x, 0.25, None).unwrap();
        assert_eq!(pm.net, unif.net);

        // b=0 coordinate: annihilation, no production
        let r0 = synth_multidim_unif(&State(vec![0]), &State(vec![0]), 0.2, None).unwrap();
        assert_eq!(r0.net.reactions.len(), 2);
        assert!(r0.net.reactions.iter().all(|rx| rx.reactant.molecularity() > 0));
    }

    #[test]
    fn multidim_unif_rejects_bad_kappa() {
        // k2 * r * (b+1)! = 0.01 * 2 * 2 = 0.04 < k1 = 1
        let bad = [(1.0, 0.01, 1.0)];
        assert!(matches!(
            synth_multidim_unif(&State(vec![0]), &State(vec![1]), 0.1, Some(&bad)),
            Err(SynthError::RatePrecondition(0))
        ));
    }

    #[test]
    fn prod_pois_rates() {
        let r = synth_prod_pois(&[1.0]).unwrap();
        assert_eq!(r.net.reactions.len(), 3);
        assert!(r.net.reactions.iter().all(|rx| rx.rate == 1.0));

        let r2 = synth_prod_pois(&[2.0, 3.0]).unwrap();
        assert_eq!(r2.net.reactions.len(), 6);
        let rates: Vec<f64> = r2.net.reactions.iter().map(|rx| rx.rate).collect();
        assert_eq!(rates, vec![4.0, 2.0, 1.0, 9.0, 3.0, 1.0]);

        let r3 = synth_prod_pois(&[0.5]).unwrap();
        assert_eq!(r3.net.reactions[0].rate, 0.25);
    }

    #[test]
    fn mix_lifts_component_reactions() {
        // one component {2V -> 0 @ 1}, zeta=(1), delta=0.1:
        // {0 -> H1 @ 0.01, H1 -> 0 @ 0.1, H1 + 2V -> H1 @ 1}
        let comp = ReactionNetwork {
            species: SpeciesList::new(vec!["V1".into()]),
            reactions: vec![Reaction {
                reactant: Complex(vec![2]),
                product: Complex(vec![0]),
                rate: 1.0,
            }],
            visible_count: 1,
            init: None,
        };
        let r = synth_mix(&[comp], &[1.0], 0.1).unwrap();
        assert_eq!(r.net.reactions.len(), 3);
        assert!((r.net.reactions[0].rate - 0.01).abs() < 1e-15);
        assert_eq!(r.net.reactions[2].reactant, Complex(vec![2, 1]));
        assert_eq!(r.net.reactions[2].product, Complex(vec![0, 1]));
    }

    #[test]
    fn mix_of_point_masses_equals_point_mass_mix() {
        let q = finite(&[(&[0], 0.3), (&[2], 0.7)]);
        let delta = 0.25;
        let direct = synth_point_mass_mix(&q, delta).unwrap();
        let components: Vec<ReactionNetwork> = q
            .states()
            .map(|x| synth_point_mass(x, delta).unwrap().net)
            .collect();
        let weights: Vec<f64> = q.iter().map(|(_, p)| p).collect();
        let mixed = synth_mix(&components, &weights, delta).unwrap();
        assert_eq!(reaction_set(&direct.net), reaction_set(&mixed.net));
    }

    #[test]
    fn mix_empty_component_emits_only_catalyst_pair() {
        let comp = ReactionNetwork {
            species: SpeciesList::new(vec!["V1".into()]),
            reactions: vec![],
            visible_count: 1,
            init: None,
        };
        let r = synth_mix(&[comp], &[1.0], 0.1).unwrap();
        assert_eq!(r.net.reactions.len(), 2);
    }

    #[test]
    fn spanning_tree_accepts_matching_tree_and_rejects_others() {
        let q = finite(&[(&[0], 0.2), (&[1], 0.3), (&[2], 0.5)]);
        let support: Vec<State> = q.states().cloned().collect();
        let tree = build_spanning_tree(&support).unwrap();
        let r = synth_spanning_tree(&q, Some(&tree)).unwrap();
        assert_eq!(r.net.reactions.len(), 4);

        let other = finite(&[(&[3], 0.5), (&[4], 0.5)]);
        let other_tree = build_spanning_tree(&sorted_support(&other)).unwrap();
        assert!(matches!(
            synth_spanning_tree(&q, Some(&other_tree)),
            Err(SynthError::TreeMismatch)
        ));
    }

    #[test]
    fn compile_auto_db_route_keeps_finite_targets_exact() {
        let q = finite(&[(&[0], 0.3), (&[2], 0.7)]);
        let spec = DistributionSpec::Finite(q.clone());
        let r = compile_auto(&spec, 1e-6, Route::DetailedBalanced).unwrap();
        assert_eq!(r.method, Method::AutoDb);
        // tiny eps keeps the whole support: the full construction on q itself
        assert_eq!(r.net.reactions.len(), 2);
        let direct = synth_full(&q).unwrap();
        assert_eq!(r.net, direct.net);
    }

    #[test]
    fn compile_auto_point_mass_robust() {
        let spec = DistributionSpec::PointMass { x: State(vec![2]) };
        let r = compile_auto(&spec, 0.2, Route::Robust).unwrap();
        assert_eq!(r.method, Method::AutoRobust);
        // single support point: 2m + 2md = 4 reactions
        assert_eq!(r.net.reactions.len(), 4);
        assert_eq!(r.meta.eps_truncation, Some(0.1));
        assert_eq!(r.meta.eps_network, Some(0.1));
    }

    #[test]
    fn all_rates_positive_and_finite() {
        let q = finite(&[(&[0, 1], 0.4), (&[1, 1], 0.35), (&[1, 2], 0.25)]);
        for result in [
            synth_full(&q).unwrap(),
            synth_bimolecular(&q).unwrap(),
            synth_spanning_tree(&q, None).unwrap(),
            synth_point_mass_mix(&q, 0.1).unwrap(),
        ] {
            for r in &result.net.reactions {
                assert!(r.rate > 0.0 && r.rate.is_finite());
            }
            assert!(crate::network::validate_network(&result.net).is_ok());
        }
    }

    #[test]
    fn synthesis_json_round_trip() {
        let q = finite(&[(&[0], 0.3), (&[1], 0.7)]);
        let r = synth_full(&q).unwrap();
        let s = r.to_json_string();
        let back = SynthesisResult::from_json_str(&s).unwrap();
        assert_eq!(r.net, back.net);
        assert_eq!(r.visible, back.visible);
        assert_eq!(r.method, back.method);
        // the compiler document also re-parses as a plain network
        let plain = ReactionNetwork::from_json_str(&s).unwrap();
        assert_eq!(plain, r.net);
    }
}

//! Exact and bound-level verification: detailed-balance certificates,
//! reachability, closed-form stationary laws, a truncated-generator oracle,
//! uniform-approximation error bounds, and mixing-time bounds for the
//! decay and birth building blocks.

mod oracle;

pub use oracle::oracle_stationary;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::dist::{DistError, FiniteDistribution};
use crate::network::{NetworkError, ReactionNetwork, State};
use crate::numerics::{ln_factorial, log_sum_exp};

/// A certificate is valid when the worst relative violation of
/// `kf * c^y = kr * c^y'` over reversible pairs is at most this.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("reachability class exceeds cap of {cap} states (likely infinite)")]
    CapExceeded { cap: usize },
    #[error("box of {volume} states exceeds the {limit}-state limit")]
    BoxTooLarge { volume: usize, limit: usize },
    #[error("banded solve needs {entries} matrix entries, over the memory guard")]
    BandTooLarge { entries: usize },
    #[error("truncation is reducible: {closed_classes} closed communicating classes")]
    Reducible { closed_classes: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("epsilon {0} must lie in (0, 2)")]
    BadEpsilon(f64),
    #[error("mixing level {0} outside its validity range")]
    BadLevel(f64),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("epsilon below validity threshold {threshold} ({case} case)")]
    BelowThreshold { threshold: f64, case: &'static str },
    #[error("coordinate {coordinate}: rates violate k2 * r * (b+1)! > k1")]
    PreconditionViolated { coordinate: usize },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A positive equilibrium `c` certifying detailed balance, together with the
/// worst relative residual observed over all reversible pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailedBalanceCertificate {
    pub c: Vec<f64>,
    pub max_residual: f64,
}

/// Where a stationary table was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Exact over a reachability class (possibly cap-truncated).
    Class,
    /// Truncated-generator solve over a finite box.
    Box,
}

/// A stationary distribution with its normalization constant and provenance.
#[derive(Debug, Clone)]
pub struct StationaryTable {
    pub dist: FiniteDistribution,
    pub normalization: f64,
    pub domain: Domain,
    /// Deleted boundary flux relative to total flux (oracle only).
    pub boundary_outflow: Option<f64>,
    /// True when a class enumeration stopped at the cap.
    pub truncated: bool,
}

impl StationaryTable {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&self.dist.to_json_string()).expect("table json");
        let obj = v.as_object_mut().unwrap();
        obj.insert("M".into(), serde_json::json!(self.normalization));
        obj.insert(
            "domain".into(),
            serde_json::json!(match self.domain {
                Domain::Class => "class",
                Domain::Box => "box",
            }),
        );
        obj.insert(
            "boundary_outflow".into(),
            serde_json::json!(self.boundary_outflow),
        );
        if self.truncated {
            obj.insert("truncated".into(), serde_json::json!(true));
        }
        v
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("table json")
    }
}

// ---------------------------------------------------------------------------
// Detailed balance
// ---------------------------------------------------------------------------

/// Solve for a detailed-balance equilibrium, if one exists.
///
/// Each reversible pair contributes the log-linear equation
/// `(y' - y) . log c = log(kf / kr)`. The system is solved by Gaussian
/// elimination; species left unpinned default to `log c = 0` (any solution
/// certifies, and all solutions induce the same stationary law on a
/// reachability class). Returns `None` for irreversible networks and for
/// residuals above [`CERTIFICATE_TOLERANCE`].
pub fn solve_detailed_balance(net: &ReactionNetwork) -> Option<DetailedBalanceCertificate> {
    let n = net.species.len();
    let mut by_sides: BTreeMap<(&[u64], &[u64]), usize> = BTreeMap::new();
    for (i, r) in net.reactions.iter().enumerate() {
        by_sides.insert((&r.reactant.0, &r.product.0), i);
    }
    // reversibility: every reaction needs its reverse partner
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (i, r) in net.reactions.iter().enumerate() {
        match by_sides.get(&(&r.product.0[..], &r.reactant.0[..])) {
            None => return None,
            Some(&j) => {
                if r.reactant.0 < r.product.0 {
                    pairs.push((i, j));
                }
            }
        }
    }
    if net.reactions.is_empty() {
        return Some(DetailedBalanceCertificate {
            c: vec![1.0; n],
            max_residual: 0.0,
        });
    }

    // rows: (y' - y) . u = ln(kf/kr), solved by elimination with
    // largest-coefficient pivoting; dependent rows are checked afterwards
    let mut reduced: Vec<(Vec<f64>, f64, usize)> = Vec::new(); // (row, rhs, pivot col)
    for &(fi, ri) in &pairs {
        let f = &net.reactions[fi];
        let r = &net.reactions[ri];
        let mut row: Vec<f64> = f
            .product
            .0
            .iter()
            .zip(f.reactant.0.iter())
            .map(|(&p, &q)| p as f64 - q as f64)
            .collect();
        let mut rhs = f.rate.ln() - r.rate.ln();
        for (prow, prhs, pcol) in &reduced {
            let factor = row[*pcol];
            if factor != 0.0 {
                for k in 0..n {
                    row[k] -= factor * prow[k];
                }
                rhs -= factor * prhs;
            }
        }
        let (pivot, max_abs) = row
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(bi, bv), (i, &v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        if max_abs < 1e-12 {
            continue; // dependent row; consistency checked by the residual pass
        }
        let inv = 1.0 / row[pivot];
        for v in row.iter_mut() {
            *v *= inv;
        }
        rhs *= inv;
        reduced.push((row, rhs, pivot));
    }

    // back-substitution; unpinned coordinates stay at log c = 0
    let mut u = vec![0.0f64; n];
    for (row, rhs, pivot) in reduced.iter().rev() {
        let mut v = *rhs;
        for k in 0..n {
            if k != *pivot && row[k] != 0.0 {
                v -= row[k] * u[k];
            }
        }
        u[*pivot] = v;
    }

    let mut max_residual = 0.0f64;
    for &(fi, ri) in &pairs {
        let f = &net.reactions[fi];
        let r = &net.reactions[ri];
        let mut delta = f.rate.ln() - r.rate.ln();
        for k in 0..n {
            delta += (f.reactant.0[k] as f64 - f.product.0[k] as f64) * u[k];
        }
        max_residual = max_residual.max(delta.exp_m1().abs());
    }
    if max_residual > CERTIFICATE_TOLERANCE {
        return None;
    }
    Some(DetailedBalanceCertificate {
        c: u.iter().map(|&x| x.exp()).collect(),
        max_residual,
    })
}

// ---------------------------------------------------------------------------
// Reachability
// ---------------------------------------------------------------------------

/// Breadth-first closure of `x0` under one-reaction transitions; stops after
/// collecting `cap` states.
fn enumerate_class(net: &ReactionNetwork, x0: &State, cap: usize) -> (Vec<State>, bool) {
    let mut visited: BTreeSet<State> = BTreeSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    visited.insert(x0.clone());
    order.push(x0.clone());
    queue.push_back(x0.clone());
    while let Some(s) = queue.pop_front() {
        for target in net.transition_map(&s).into_keys() {
            if visited.contains(&target) {
                continue;
            }
            if visited.len() >= cap {
                return (order, false);
            }
            visited.insert(target.clone());
            order.push(target.clone());
            queue.push_back(target);
        }
    }
    (order, true)
}

/// The set of states reachable from `x0`; errors when more than `cap` states
/// would be enumerated (the class is likely infinite).
pub fn reachability_class(
    net: &ReactionNetwork,
    x0: &State,
    cap: usize,
) -> Result<BTreeSet<State>, AnalysisError> {
    if cap < 1 {
        return Err(AnalysisError::BadParameter("cap must be >= 1".into()));
    }
    let (order, complete) = enumerate_class(net, x0, cap);
    if !complete {
        return Err(AnalysisError::CapExceeded { cap });
    }
    Ok(order.into_iter().collect())
}

/// Product-form stationary law `pi(x) = c^x / x! / M` over the reachability
/// class of `x0`, evaluated in log space.
///
/// If the class enumeration hits `cap`, the law is renormalized over the
/// enumerated states and the table is flagged `truncated`.
pub fn db_stationary(
    net: &ReactionNetwork,
    cert: &DetailedBalanceCertificate,
    x0: &State,
    cap: usize,
) -> Result<StationaryTable, AnalysisError> {
    if x0.len() != net.species.len() {
        return Err(AnalysisError::Network(NetworkError::DimensionMismatch {
            got: x0.len(),
            expected: net.species.len(),
        }));
    }
    let (states, complete) = enumerate_class(net, x0, cap);
    let ln_c: Vec<f64> = cert.c.iter().map(|&v| v.ln()).collect();
    let ln_weights: Vec<f64> = states
        .iter()
        .map(|s| {
            s.0.iter()
                .zip(ln_c.iter())
                .map(|(&x, &lc)| x as f64 * lc - ln_factorial(x))
                .sum()
        })
        .collect();
    let lse = log_sum_exp(&ln_weights);
    let mass: BTreeMap<State, f64> = states
        .into_iter()
        .zip(ln_weights.iter())
        .map(|(s, &lw)| (s, (lw - lse).exp()))
        .collect();
    Ok(StationaryTable {
        dist: FiniteDistribution::new(net.species.len(), mass)?,
        normalization: lse.exp(),
        domain: Domain::Class,
        boundary_outflow: None,
        truncated: !complete,
    })
}

// ---------------------------------------------------------------------------
// Exact point-mass stationary law
// ---------------------------------------------------------------------------

/// Closed-form stationary law of the robust point-mass network.
///
/// Coordinates with `x(i) = 0` are exactly the point mass at 0. Coordinates
/// with `x(i) > 0` follow the birth-death law with mass ratio
/// `rho = eps/(2d)`:
///
/// ```text
/// pi_i(x(i) + n) = (1/M_i) rho^n prod_{j=1..n} (j-1)!/((x(i)+j)!)
/// ```
///
/// with `M_i` summed until terms fall below 1e-18 of the running sum. The
/// joint law is the product of the marginals, tabulated for
/// `n = 0..=tail_states` per coordinate.
pub fn exact_point_mass_stationary(
    x: &State,
    eps: f64,
    tail_states: usize,
) -> Result<StationaryTable, AnalysisError> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(AnalysisError::BadEpsilon(eps));
    }
    if tail_states < 1 {
        return Err(AnalysisError::BadParameter("tail_states must be >= 1".into()));
    }
    let d = x.len();
    let rho = eps / (2.0 * d as f64);
    let mut marginals: Vec<Vec<(u64, f64)>> = Vec::with_capacity(d);
    let mut normalization = 1.0f64;
    for &xi in &x.0 {
        if xi == 0 {
            marginals.push(vec![(0, 1.0)]);
            continue;
        }
        // term ratio t_n / t_{n-1} = rho * (n-1)! / (x+n)!
        //                          = rho / (n (n+1) ... (x+n))
        let term_ratio = |n: u64| {
            let mut denom = 1.0f64;
            for k in n..=(xi + n) {
                denom *= k as f64;
                if denom.is_infinite() {
                    break;
                }
            }
            rho / denom
        };
        let mut total = 1.0f64;
        let mut term = 1.0f64;
        let mut n = 1u64;
        let mut kept: Vec<(u64, f64)> = vec![(xi, 1.0)];
        loop {
            term *= term_ratio(n);
            if !(term > 1e-18 * total) {
                break;
            }
            total += term;
            if n <= tail_states as u64 {
                kept.push((xi + n, term));
            }
            n += 1;
        }
        normalization *= total;
        for entry in kept.iter_mut() {
            entry.1 /= total;
        }
        marginals.push(kept);
    }

    // product over coordinates
    let mut acc: Vec<(Vec<u64>, f64)> = vec![(Vec::with_capacity(d), 1.0)];
    for marginal in &marginals {
        let mut next = Vec::with_capacity(acc.len() * marginal.len());
        for (prefix, p) in &acc {
            for &(v, q) in marginal {
                let joint = p * q;
                if joint < 1e-18 {
                    continue;
                }
                let mut s = prefix.clone();
                s.push(v);
                next.push((s, joint));
            }
        }
        acc = next;
    }
    let mass: BTreeMap<State, f64> = acc.into_iter().map(|(s, p)| (State(s), p)).collect();
    Ok(StationaryTable {
        dist: FiniteDistribution::new(d, mass)?,
        normalization,
        domain: Domain::Class,
        boundary_outflow: None,
        truncated: false,
    })
}

// ---------------------------------------------------------------------------
// Uniform-approximation error bound
// ---------------------------------------------------------------------------

/// Per-coordinate error bounds for the general uniform-box network.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordBound {
    /// Bound on `q_i(v) - pi_i(v)` for in-box `v`.
    pub pointwise: f64,
    /// Bound on the marginal infinity-norm distance.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnifBound {
    pub per_coordinate: Vec<CoordBound>,
    /// Joint infinity-norm bound: sum of the marginal bounds (telescoping
    /// over the product measure).
    pub joint: f64,
}

/// Error bound of the general uniform-box network against the uniform law
/// on `[a, b]`, per coordinate and jointly.
///
/// `kappa[i] = (k1, k2)` are the production and degradation rate constants.
/// Requires `k2 * r * (b+1)! > k1` per coordinate with `b(i) >= 1` (and the
/// stronger `(b+1)! > k1/k2` so the bound's denominator stays positive);
/// coordinates with `b(i) = 0` have exact marginals and bound 0.
pub fn unif_error_bound(
    a: &State,
    b: &State,
    kappa: &[(f64, f64)],
) -> Result<UnifBound, AnalysisError> {
    let d = a.len();
    if b.len() != d || kappa.len() != d {
        return Err(AnalysisError::BadParameter(
            "a, b, kappa must share one length".into(),
        ));
    }
    let mut per = Vec::with_capacity(d);
    let mut joint = 0.0f64;
    for i in 0..d {
        let (k1, k2) = kappa[i];
        if !(k1 > 0.0 && k2 > 0.0) {
            return Err(AnalysisError::BadParameter(format!(
                "coordinate {i}: rates must be positive"
            )));
        }
        if a.0[i] > b.0[i] {
            return Err(AnalysisError::BadParameter(format!(
                "coordinate {i}: requires a <= b"
            )));
        }
        if b.0[i] == 0 {
            per.push(CoordBound { pointwise: 0.0, norm: 0.0 });
            continue;
        }
        let bi = b.0[i];
        let r = (bi - a.0[i] + 1) as f64;
        let rho = k1 / k2;
        let lf = ln_factorial(bi + 1);
        // k2 r (b+1)! > k1  <=>  r (b+1)! > rho
        if !(r.ln() + lf > rho.ln()) {
            return Err(AnalysisError::PreconditionViolated { coordinate: i });
        }
        // the bound's denominator (b+1)!^2 - rho^2 must stay positive
        let rho_scaled_sq = (2.0 * (rho.ln() - lf)).exp();
        if rho_scaled_sq >= 1.0 {
            return Err(AnalysisError::PreconditionViolated { coordinate: i });
        }
        let inv_fact = (-lf).exp();
        let first = inv_fact
            * (1.0 / r + if r >= 2.0 { 1.0 / (bi + 2) as f64 } else { 0.0 });
        let mid = (bi + 2) as f64 / (r * r) * ((-2.0 * lf).exp() / (1.0 - rho_scaled_sq));
        let geo = if r >= 3.0 {
            let terms = (r as usize) - 2;
            let mut sum = 0.0f64;
            let mut p = 1.0f64;
            for _ in 0..terms {
                sum += p;
                p *= rho;
            }
            inv_fact * (-ln_factorial(bi + 2)).exp() * sum
        } else {
            0.0
        };
        let d_big = first + rho * (mid + geo);
        let pointwise = rho * d_big;
        let norm = rho * r * d_big;
        joint += norm;
        per.push(CoordBound { pointwise, norm });
    }
    Ok(UnifBound { per_coordinate: per, joint })
}

// ---------------------------------------------------------------------------
// Mixing-time bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Decay,
    Birth,
}

/// An upper bound on the mixing time of a building-block network.
#[derive(Debug, Clone)]
pub struct MixingBound {
    pub kind: BoundKind,
    /// Distance level the bound certifies (`eps` for decay, `2 eps` for birth).
    pub level: f64,
    pub bound: f64,
    pub threshold: Option<f64>,
    /// Which validity case applied (birth bound only).
    pub case: Option<&'static str>,
}

impl MixingBound {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": match self.kind { BoundKind::Decay => "decay", BoundKind::Birth => "birth" },
            "bound": self.bound,
            "valid": true,
            "threshold": self.threshold,
            "level": self.level,
            "case": self.case,
        })
    }
}

/// JSON emitted when a bound request falls outside its validity window.
pub fn invalid_bound_json(kind: BoundKind, threshold: f64) -> serde_json::Value {
    serde_json::json!({
        "kind": match kind { BoundKind::Decay => "decay", BoundKind::Birth => "birth" },
        "bound": null,
        "valid": false,
        "threshold": threshold,
    })
}

/// Mixing-time bound for the pure-decay network `V -> 0` at `k1`,
/// `2V -> 0` at `k2` (limit law: point mass at 0):
/// `tau^eps <= (1/eps) sum_{v>=1} 1/(k1 v + k2 v(v-1))`.
///
/// The series is summed to additive tolerance 1e-12 (explicit terms plus a
/// midpoint-integral tail).
pub fn bound_mixing_decay(k1: f64, k2: f64, eps: f64) -> Result<MixingBound, AnalysisError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(AnalysisError::BadLevel(eps));
    }
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(AnalysisError::BadParameter("rates must be positive".into()));
    }
    // 1/(k1 v + k2 v(v-1)) = (1/k2) / (v (v + beta)),  beta = k1/k2 - 1
    let beta = k1 / k2 - 1.0;
    let n_terms = 100_000u64;
    let mut sum = 0.0f64;
    for v in (1..=n_terms).rev() {
        let vf = v as f64;
        sum += 1.0 / (vf * (vf + beta));
    }
    let edge = n_terms as f64 + 0.5;
    let tail = if beta.abs() < 1e-9 {
        1.0 / edge
    } else {
        (1.0 + beta / edge).ln() / beta
    };
    let bound = (sum + tail) / (k2 * eps);
    Ok(MixingBound {
        kind: BoundKind::Decay,
        level: eps,
        bound,
        threshold: None,
        case: None,
    })
}

/// Mixing-time bound at level `2 eps` for the birth network `0 -> V` at `k1`,
/// `(x+1)V -> xV` at `k2`, for a target point `x >= 1`.
///
/// `eps` must exceed a case-dependent threshold; the error reports it. The
/// returned bound is
/// `max{ e^{-k1/(x! x)} / (k2 (e^{-k1/(x! x)} - 1 + eps) x! x), x/(k1 eps) }`.
pub fn bound_mixing_birth(
    x: u64,
    k1: f64,
    k2: f64,
    eps: f64,
) -> Result<MixingBound, AnalysisError> {
    if x < 1 {
        return Err(AnalysisError::BadParameter("x must be >= 1".into()));
    }
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(AnalysisError::BadParameter("rates must be positive".into()));
    }
    if !(eps > 0.0) {
        return Err(AnalysisError::BadLevel(eps));
    }
    // ln(x! * x) stays finite where the factorial would overflow
    let ln_fx = ln_factorial(x) + (x as f64).ln();
    let exp_term = (-k1 * (-ln_fx).exp()).exp();
    let escape = 1.0 - exp_term;
    // case split on k2^2 [(x+1)!]^2 vs k1^2, in logs
    let ln_k2f = k2.ln() + ln_factorial(x + 1);
    let case_fast = ln_k2f > k1.ln();
    let (threshold, case) = if case_fast {
        // k1^2 (x+2) / (k2^2 [(x+1)!]^2 - k1^2), rescaled by k2^2 [(x+1)!]^2
        let ratio_sq = (2.0 * (k1.ln() - ln_k2f)).exp();
        let first = ratio_sq * (x + 2) as f64 / (1.0 - ratio_sq);
        (first.max(escape), "k2^2[(x+1)!]^2 > k1^2")
    } else {
        ((2.0 * k1 / k2).max(escape), "k2^2[(x+1)!]^2 <= k1^2")
    };
    if eps <= threshold {
        return Err(AnalysisError::BelowThreshold { threshold, case });
    }
    let b1 = exp_term / (k2 * (exp_term - 1.0 + eps)) * (-ln_fx).exp();
    let b2 = x as f64 / (k1 * eps);
    Ok(MixingBound {
        kind: BoundKind::Birth,
        level: 2.0 * eps,
        bound: b1.max(b2),
        threshold: Some(threshold),
        case: Some(case),
    })
}

//! Exact stochastic simulation and end-to-end verification.
//!
//! The simulator is the direct method: at each step all propensities are
//! recomputed, the holding time is exponential with the total rate, and the
//! firing reaction is chosen by a single uniform draw against the cumulative
//! propensities in reaction order. Networks here are small, so no dependency
//! graph is kept.
//!
//! # Reproducibility contract
//!
//! [`CounterRng`] is a counter-based generator (SplitMix64: the output is a
//! bijective mix of an incrementing counter). Replicate `k` of an estimate
//! uses stream `seed + k`. Exponential variates come from the inverse CDF on
//! a `(0, 1]` uniform; reaction selection consumes exactly one additional
//! uniform per event. Identical `(network, x0, config, perturbations)`
//! therefore reproduce bit-identical trajectories.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::analysis::{
    db_stationary, oracle_stationary, solve_detailed_balance, AnalysisError, StationaryTable,
};
use crate::dist::{
    inf_norm_distance, marginalize, truncate, DistError, DistributionSpec, FiniteDistribution,
};
use crate::network::{NetworkError, ReactionNetwork, State};
use crate::synth::{synth_point_mass_mix, SynthError, SynthesisResult};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t_end must be positive, got {0}")]
    BadTEnd(f64),
    #[error("burn-in fraction must lie in [0, 1), got {0}")]
    BadBurnIn(f64),
    #[error("max_events must be >= 1")]
    BadMaxEvents,
    #[error("replicates must be >= 1")]
    BadReplicates,
    #[error("initial state required: none given and the network records none")]
    MissingInitial,
    #[error("perturbation delta has {got} entries, expected {expected}")]
    BadPerturbation { got: usize, expected: usize },
    #[error("network is not detailed balanced; exact mode needs a certificate")]
    NotCertified,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Counter-based PRNG (SplitMix64). Not cryptographic; built for replayable
/// simulation.
#[derive(Debug, Clone)]
pub struct CounterRng {
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> CounterRng {
        CounterRng { counter: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.counter;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`.
    fn unit_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential holding time via the inverse CDF.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.unit_open().ln() / rate
    }
}

// ---------------------------------------------------------------------------
// Configuration and results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub t_end: f64,
    pub seed: u64,
    pub burn_in_fraction: f64,
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(t_end: f64, seed: u64) -> SimConfig {
        SimConfig {
            t_end,
            seed,
            burn_in_fraction: 0.1,
            max_events: u64::MAX,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(SimError::BadTEnd(self.t_end));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(SimError::BadBurnIn(self.burn_in_fraction));
        }
        if self.max_events < 1 {
            return Err(SimError::BadMaxEvents);
        }
        Ok(())
    }
}

/// A count adjustment injected at a fixed time; entries clamp at zero.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub at_time: f64,
    pub delta: Vec<i64>,
}

/// Time-weighted empirical state distribution from a trajectory.
#[derive(Debug, Clone)]
pub struct OccupancyEstimate {
    pub dist: FiniteDistribution,
    pub total_time: f64,
    pub events: u64,
    pub truncated_by_cap: bool,
}

/// One simulation run: the piecewise-constant path and its occupancy.
#[derive(Debug)]
pub struct SimOutput {
    pub trajectory: Vec<(f64, State)>,
    pub occupancy: OccupancyEstimate,
    pub warnings: Vec<String>,
}

struct RunAccumulator {
    weights: BTreeMap<State, f64>,
    total: f64,
    events: u64,
    truncated: bool,
    final_state: State,
    warnings: Vec<String>,
}

fn run_core(
    net: &ReactionNetwork,
    x0: &State,
    cfg: &SimConfig,
    perturbations: &[Perturbation],
    mut trajectory: Option<&mut Vec<(f64, State)>>,
) -> Result<RunAccumulator, SimError> {
    cfg.validate()?;
    if x0.len() != net.species.len() {
        return Err(SimError::Network(NetworkError::DimensionMismatch {
            got: x0.len(),
            expected: net.species.len(),
        }));
    }
    let mut perts: Vec<&Perturbation> = perturbations.iter().collect();
    for p in &perts {
        if p.delta.len() != net.species.len() {
            return Err(SimError::BadPerturbation {
                got: p.delta.len(),
                expected: net.species.len(),
            });
        }
    }
    perts.sort_by(|a, b| a.at_time.partial_cmp(&b.at_time).unwrap());

    let burn_start = cfg.burn_in_fraction * cfg.t_end;
    let mut rng = CounterRng::new(cfg.seed);
    let mut state = x0.clone();
    let mut t = 0.0f64;
    let mut acc = RunAccumulator {
        weights: BTreeMap::new(),
        total: 0.0,
        events: 0,
        truncated: false,
        final_state: x0.clone(),
        warnings: Vec::new(),
    };
    let add_weight = |weights: &mut BTreeMap<State, f64>,
                          total: &mut f64,
                          s: &State,
                          from: f64,
                          to: f64| {
        let lo = from.max(burn_start);
        if to > lo {
            *weights.entry(s.clone()).or_insert(0.0) += to - lo;
            *total += to - lo;
        }
    };
    if let Some(traj) = trajectory.as_mut() {
        traj.push((0.0, state.clone()));
    }

    let mut propensities = vec![0.0f64; net.reactions.len()];
    let mut pert_idx = 0usize;
    while pert_idx < perts.len() && perts[pert_idx].at_time <= 0.0 {
        pert_idx += 1; // perturbations strictly inside (0, t_end) apply
    }

    loop {
        let mut lambda = 0.0f64;
        for (i, p) in propensities.iter_mut().enumerate() {
            *p = net.propensity(i, &state)?;
            lambda += *p;
        }
        let next_pert = perts
            .get(pert_idx)
            .map(|p| p.at_time)
            .filter(|&pt| pt < cfg.t_end)
            .unwrap_or(f64::INFINITY);

        let apply_pert = |state: &mut State, warnings: &mut Vec<String>, p: &Perturbation| {
            for (k, (&d, v)) in p.delta.iter().zip(state.0.iter_mut()).enumerate() {
                let next = *v as i64 + d;
                if next < 0 {
                    warnings.push(format!(
                        "perturbation at t={} drove species {k} below zero; clamped",
                        p.at_time
                    ));
                    *v = 0;
                } else {
                    *v = next as u64;
                }
            }
        };

        if lambda <= 0.0 {
            // absorbing: jump straight to the next perturbation or the end
            let stop = next_pert.min(cfg.t_end);
            add_weight(&mut acc.weights, &mut acc.total, &state, t, stop);
            t = stop;
            if t >= cfg.t_end {
                break;
            }
            apply_pert(&mut state, &mut acc.warnings, perts[pert_idx]);
            pert_idx += 1;
            if let Some(traj) = trajectory.as_mut() {
                traj.push((t, state.clone()));
            }
            continue;
        }

        let t_next = t + rng.exponential(lambda);
        if t_next >= next_pert {
            // the drawn holding time is discarded across the boundary
            // (memorylessness keeps the law exact)
            add_weight(&mut acc.weights, &mut acc.total, &state, t, next_pert);
            t = next_pert;
            apply_pert(&mut state, &mut acc.warnings, perts[pert_idx]);
            pert_idx += 1;
            if let Some(traj) = trajectory.as_mut() {
                traj.push((t, state.clone()));
            }
            continue;
        }
        if t_next >= cfg.t_end {
            add_weight(&mut acc.weights, &mut acc.total, &state, t, cfg.t_end);
            break;
        }

        // select a reaction proportionally to its propensity
        let draw = rng.next_f64() * lambda;
        let mut cumulative = 0.0f64;
        let mut chosen = None;
        for (i, &p) in propensities.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            cumulative += p;
            if draw < cumulative {
                chosen = Some(i);
                break;
            }
            chosen = Some(i); // fallback: last positive wins on rounding
        }
        let chosen = chosen.expect("lambda > 0 implies a positive propensity");

        add_weight(&mut acc.weights, &mut acc.total, &state, t, t_next);
        t = t_next;
        state = state
            .offset(&net.reactions[chosen].displacement())
            .expect("mass action keeps counts non-negative");
        acc.events += 1;
        if let Some(traj) = trajectory.as_mut() {
            traj.push((t, state.clone()));
        }
        if acc.events >= cfg.max_events {
            acc.truncated = true;
            break;
        }
    }
    acc.final_state = state;
    Ok(acc)
}

fn occupancy_from(acc: &RunAccumulator, dim: usize) -> Result<OccupancyEstimate, SimError> {
    let dist = if acc.total > 0.0 {
        FiniteDistribution::from_weights(dim, acc.weights.clone())?
    } else {
        // degenerate short run: all observable time burned in
        let mut m = BTreeMap::new();
        m.insert(acc.final_state.clone(), 1.0);
        FiniteDistribution::new(dim, m)?
    };
    Ok(OccupancyEstimate {
        dist,
        total_time: acc.total,
        events: acc.events,
        truncated_by_cap: acc.truncated,
    })
}

/// Exact-event simulation of the network from `x0`.
///
/// Returns the full piecewise-constant path and the time-weighted occupancy
/// over the post-burn-in window. Absorbing states hold until the next
/// perturbation or `t_end`. Hitting `max_events` returns a partial estimate
/// flagged `truncated_by_cap`.
pub fn simulate(
    net: &ReactionNetwork,
    x0: &State,
    cfg: &SimConfig,
    perturbations: &[Perturbation],
) -> Result<SimOutput, SimError> {
    let mut trajectory = Vec::new();
    let acc = run_core(net, x0, cfg, perturbations, Some(&mut trajectory))?;
    let occupancy = occupancy_from(&acc, net.species.len())?;
    Ok(SimOutput {
        trajectory,
        occupancy,
        warnings: acc.warnings,
    })
}

/// Pooled limit-distribution estimate with a replicate-consistency diagnostic.
#[derive(Debug)]
pub struct LimitEstimate {
    /// Pooled occupancy, marginalized onto the visible coordinates.
    pub occupancy: OccupancyEstimate,
    /// Largest deviation of any replicate marginal from the pooled one.
    pub spread: f64,
}

/// Run `replicates` simulations on streams `seed, seed+1, ...`, pool the
/// time-weighted occupancies, and marginalize onto `visible`.
pub fn estimate_limit(
    net: &ReactionNetwork,
    x0: &State,
    cfg: &SimConfig,
    visible: &[usize],
    replicates: usize,
) -> Result<LimitEstimate, SimError> {
    if replicates < 1 {
        return Err(SimError::BadReplicates);
    }
    cfg.validate()?;
    let configs: Vec<SimConfig> = (0..replicates)
        .map(|k| SimConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        })
        .collect();

    let runs = run_replicates(net, x0, &configs)?;

    let mut pooled: BTreeMap<State, f64> = BTreeMap::new();
    let mut total = 0.0f64;
    let mut events = 0u64;
    let mut truncated = false;
    for acc in &runs {
        for (s, w) in &acc.weights {
            *pooled.entry(s.clone()).or_insert(0.0) += w;
        }
        total += acc.total;
        events += acc.events;
        truncated |= acc.truncated;
    }
    let pooled_acc = RunAccumulator {
        weights: pooled,
        total,
        events,
        truncated,
        final_state: runs.last().unwrap().final_state.clone(),
        warnings: Vec::new(),
    };
    let full = occupancy_from(&pooled_acc, net.species.len())?;
    let pooled_marginal = marginalize(&full.dist, visible)?;

    let mut spread = 0.0f64;
    for acc in &runs {
        if acc.total <= 0.0 {
            continue;
        }
        let rep = marginalize(
            &FiniteDistribution::from_weights(net.species.len(), acc.weights.clone())?,
            visible,
        )?;
        spread = spread.max(inf_norm_distance(&rep, &pooled_marginal)?);
    }
    Ok(LimitEstimate {
        occupancy: OccupancyEstimate {
            dist: pooled_marginal,
            total_time: full.total_time,
            events,
            truncated_by_cap: truncated,
        },
        spread,
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn run_replicates(
    net: &ReactionNetwork,
    x0: &State,
    configs: &[SimConfig],
) -> Result<Vec<RunAccumulator>, SimError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || run_core(net, x0, cfg, &[], None)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("replicate thread panicked"))
            .collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn run_replicates(
    net: &ReactionNetwork,
    x0: &State,
    configs: &[SimConfig],
) -> Result<Vec<RunAccumulator>, SimError> {
    configs
        .iter()
        .map(|cfg| run_core(net, x0, cfg, &[], None))
        .collect()
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Backend for [`verify`].
#[derive(Debug, Clone)]
pub enum VerifyMode {
    /// Product-form law over the reachability class (needs a certificate).
    Exact { x0: Option<State>, cap: usize },
    /// Truncated-generator solve over a box.
    Oracle { bounds: Vec<u64> },
    /// Pooled simulation estimate.
    Sim {
        x0: Option<State>,
        cfg: SimConfig,
        replicates: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct VerifyDiagnostics {
    pub normalization: Option<f64>,
    pub boundary_outflow: Option<f64>,
    pub spread: Option<f64>,
    pub replicates: Option<usize>,
    pub truncated: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub distance: f64,
    pub mode: String,
    pub diagnostics: VerifyDiagnostics,
}

impl VerifyReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "distance": self.distance,
            "method": self.mode,
            "diagnostics": {
                "M": self.diagnostics.normalization,
                "boundary_outflow": self.diagnostics.boundary_outflow,
                "spread": self.diagnostics.spread,
                "replicates": self.diagnostics.replicates,
                "truncated": self.diagnostics.truncated,
            },
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report json")
    }
}

/// A finite table standing in for the target within 1e-9.
fn target_table(target: &DistributionSpec) -> Result<FiniteDistribution, SimError> {
    match target.to_finite() {
        Ok(fd) => Ok(fd),
        Err(DistError::NotFiniteSupport) => Ok(truncate(target, 1e-9)?),
        Err(e) => Err(SimError::Dist(e)),
    }
}

fn resolve_x0(net: &ReactionNetwork, x0: Option<&State>) -> Result<State, SimError> {
    x0.cloned()
        .or_else(|| net.init.clone())
        .ok_or(SimError::MissingInitial)
}

/// Compute the infinity-norm distance between the network's stationary
/// marginal on `visible` and the target, using the chosen backend.
pub fn verify(
    net: &ReactionNetwork,
    target: &DistributionSpec,
    visible: &[usize],
    mode: &VerifyMode,
) -> Result<VerifyReport, SimError> {
    let reference = target_table(target)?;
    match mode {
        VerifyMode::Exact { x0, cap } => {
            let cert = solve_detailed_balance(net).ok_or(SimError::NotCertified)?;
            let start = resolve_x0(net, x0.as_ref())?;
            let table: StationaryTable = db_stationary(net, &cert, &start, *cap)?;
            let marginal = marginalize(&table.dist, visible)?;
            Ok(VerifyReport {
                distance: inf_norm_distance(&marginal, &reference)?,
                mode: "exact".into(),
                diagnostics: VerifyDiagnostics {
                    normalization: Some(table.normalization),
                    truncated: Some(table.truncated),
                    ..Default::default()
                },
            })
        }
        VerifyMode::Oracle { bounds } => {
            let table = oracle_stationary(net, bounds)?;
            let marginal = marginalize(&table.dist, visible)?;
            Ok(VerifyReport {
                distance: inf_norm_distance(&marginal, &reference)?,
                mode: "oracle".into(),
                diagnostics: VerifyDiagnostics {
                    normalization: Some(table.normalization),
                    boundary_outflow: table.boundary_outflow,
                    ..Default::default()
                },
            })
        }
        VerifyMode::Sim { x0, cfg, replicates } => {
            let start = resolve_x0(net, x0.as_ref())?;
            let estimate = estimate_limit(net, &start, cfg, visible, *replicates)?;
            Ok(VerifyReport {
                distance: inf_norm_distance(&estimate.occupancy.dist, &reference)?,
                mode: "sim".into(),
                diagnostics: VerifyDiagnostics {
                    spread: Some(estimate.spread),
                    replicates: Some(*replicates),
                    truncated: Some(estimate.occupancy.truncated_by_cap),
                    ..Default::default()
                },
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Delta tuning for the robust route
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DeltaTuneStep {
    pub delta: f64,
    pub distance: f64,
}

/// Halving search for a mixing-network `delta` that empirically meets `eps`.
///
/// Starts at `eps / (4 m d)`, simulates, and halves until the measured
/// distance to `q` drops below `eps` or `max_halvings` is exhausted; the last
/// network built is returned together with the search trace.
pub fn tune_delta(
    q: &FiniteDistribution,
    eps: f64,
    cfg: &SimConfig,
    replicates: usize,
    max_halvings: u32,
) -> Result<(SynthesisResult, Vec<DeltaTuneStep>), SimError> {
    let m = q.support_size();
    let d = q.dim();
    let mut delta = eps / (4.0 * m as f64 * d as f64);
    let mut trace = Vec::new();
    loop {
        let result = synth_point_mass_mix(q, delta)?;
        let x0 = State(vec![0; result.net.species.len()]);
        let visible: Vec<usize> = (0..d).collect();
        let est = estimate_limit(&result.net, &x0, cfg, &visible, replicates)?;
        let distance = inf_norm_distance(&est.occupancy.dist, q)?;
        trace.push(DeltaTuneStep { delta, distance });
        if distance < eps || trace.len() > max_halvings as usize {
            return Ok((result, trace));
        }
        delta /= 2.0;
    }
}

// ---------------------------------------------------------------------------
// Stable text exports
// ---------------------------------------------------------------------------

/// Trajectory TSV: header `time <species...>`, one row per event.
pub fn trajectory_tsv(trajectory: &[(f64, State)], species: &[String]) -> String {
    let mut out = String::from("time");
    for name in species {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (t, s) in trajectory {
        out.push_str(&format!("{t}"));
        for v in &s.0 {
            out.push_str(&format!("\t{v}"));
        }
        out.push('\n');
    }
    out
}

/// Occupancy TSV: header `<coords...> p`, one row per state in lexicographic
/// order.
pub fn occupancy_tsv(est: &OccupancyEstimate, coord_names: &[String]) -> String {
    let mut out = String::new();
    for name in coord_names {
        out.push_str(name);
        out.push('\t');
    }
    out.push_str("p\n");
    for (s, p) in est.dist.iter() {
        for v in &s.0 {
            out.push_str(&format!("{v}\t"));
        }
        out.push_str(&format!("{p}\n"));
    }
    out
}

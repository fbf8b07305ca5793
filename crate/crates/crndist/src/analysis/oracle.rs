//! Truncated-generator stationary oracle, independent of the product-form
//! path (shares only the network data model).
//!
//! The CTMC generator is restricted to the finite box `0..=bounds[s]` per
//! species; transitions that would exit the box are removed entirely, and the
//! removed rate is surfaced as a diagnostic rather than silently
//! renormalized. The box digraph is decomposed into strongly connected
//! components; a unique closed class must exist, and the stationary vector is
//! solved on it by state reduction (Grassmann-Taksar-Heyman): Gaussian
//! elimination with only additions, multiplications, and divisions of
//! non-negative rates. Eliminating states from the highest lexicographic
//! index down keeps all fill-in inside the band of the flattened box, so the
//! factorization is `O(n b^2)` for bandwidth `b`.

use std::collections::BTreeMap;

use super::{AnalysisError, Domain, StationaryTable};
use crate::dist::FiniteDistribution;
use crate::network::{ReactionNetwork, State};

/// Boxes may hold at most this many states.
pub const BOX_STATE_LIMIT: usize = 500_000;
/// Band storage may hold at most this many f64 entries (~200 MB).
const BAND_ENTRY_LIMIT: usize = 26_000_000;

struct BoxIndex {
    bounds: Vec<u64>,
    strides: Vec<usize>,
    volume: usize,
}

impl BoxIndex {
    fn new(bounds: &[u64]) -> Result<BoxIndex, AnalysisError> {
        let volume_u128: u128 = bounds.iter().map(|&b| b as u128 + 1).product();
        if volume_u128 > BOX_STATE_LIMIT as u128 {
            return Err(AnalysisError::BoxTooLarge {
                volume: volume_u128.min(usize::MAX as u128) as usize,
                limit: BOX_STATE_LIMIT,
            });
        }
        let mut strides = vec![0usize; bounds.len()];
        let mut volume = 1usize;
        for (k, &b) in bounds.iter().enumerate().rev() {
            strides[k] = volume;
            volume *= b as usize + 1;
        }
        Ok(BoxIndex {
            bounds: bounds.to_vec(),
            strides,
            volume,
        })
    }

    fn decode(&self, mut idx: usize, out: &mut [u64]) {
        for (k, &stride) in self.strides.iter().enumerate() {
            out[k] = (idx / stride) as u64;
            idx %= stride;
        }
    }
}

/// Iterative Tarjan SCC over a CSR digraph. Returns (component id per node,
/// component count); ids are assigned in completion order.
fn tarjan_scc(n: usize, offsets: &[u32], targets: &[u32]) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut counter: u32 = 0;
    let mut comp_count: usize = 0;
    let mut frames: Vec<(u32, u32)> = Vec::new(); // (node, next edge offset)

    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        frames.push((root, offsets[root as usize]));
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut edge)) = frames.last_mut() {
            let v_us = v as usize;
            if *edge < offsets[v_us + 1] {
                let w = targets[*edge as usize];
                *edge += 1;
                let w_us = w as usize;
                if index[w_us] == UNSET {
                    index[w_us] = counter;
                    low[w_us] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w_us] = true;
                    frames.push((w, offsets[w_us]));
                } else if on_stack[w_us] {
                    low[v_us] = low[v_us].min(index[w_us]);
                }
            } else {
                if low[v_us] == index[v_us] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w as usize] = false;
                        comp[w as usize] = comp_count as u32;
                        if w == v {
                            break;
                        }
                    }
                    comp_count += 1;
                }
                frames.pop();
                if let Some(&mut (u, _)) = frames.last_mut() {
                    low[u as usize] = low[u as usize].min(low[v_us]);
                }
            }
        }
    }
    (comp, comp_count)
}

/// Stationary distribution of the generator truncated to the box
/// `0..=bounds[s]` per species.
///
/// Errors when the box is too large or when the truncation has more than one
/// closed communicating class. The table's `boundary_outflow` records the
/// deleted boundary flux relative to total flux under the solution; results
/// are only trustworthy when it is below ~1e-6.
pub fn oracle_stationary(
    net: &ReactionNetwork,
    bounds: &[u64],
) -> Result<StationaryTable, AnalysisError> {
    let n_species = net.species.len();
    if bounds.len() != n_species {
        return Err(AnalysisError::BadParameter(format!(
            "box has {} bounds, network has {n_species} species",
            bounds.len()
        )));
    }
    let grid = BoxIndex::new(bounds)?;
    let n = grid.volume;

    // per-reaction flattened displacement and per-coordinate deltas
    let deltas: Vec<Vec<i64>> = net.reactions.iter().map(|r| r.displacement()).collect();
    let flat_deltas: Vec<i64> = deltas
        .iter()
        .map(|d| {
            d.iter()
                .zip(grid.strides.iter())
                .map(|(&dk, &st)| dk * st as i64)
                .sum()
        })
        .collect();

    // count then fill a CSR adjacency of in-box transitions
    let mut counts = vec![0u32; n + 1];
    let mut scratch = vec![0u64; n_species];
    let mut deleted = vec![0.0f64; n];
    let mut kept_exit = vec![0.0f64; n];
    for idx in 0..n {
        grid.decode(idx, &mut scratch);
        let state = State(scratch.clone());
        for ri in 0..net.reactions.len() {
            let lambda = net.propensity(ri, &state).expect("index in range");
            if lambda <= 0.0 {
                continue;
            }
            let in_box = state
                .0
                .iter()
                .zip(deltas[ri].iter())
                .zip(grid.bounds.iter())
                .all(|((&x, &d), &b)| {
                    let v = x as i64 + d;
                    v >= 0 && v <= b as i64
                });
            if in_box && flat_deltas[ri] != 0 {
                counts[idx + 1] += 1;
                kept_exit[idx] += lambda;
            } else if !in_box {
                deleted[idx] += lambda;
            }
        }
    }
    let mut offsets = vec![0u32; n + 1];
    for i in 0..n {
        offsets[i + 1] = offsets[i] + counts[i + 1];
    }
    let m_edges = offsets[n] as usize;
    let mut targets = vec![0u32; m_edges];
    let mut rates = vec![0.0f64; m_edges];
    let mut cursor: Vec<u32> = offsets[..n].to_vec();
    for idx in 0..n {
        grid.decode(idx, &mut scratch);
        let state = State(scratch.clone());
        for ri in 0..net.reactions.len() {
            let lambda = net.propensity(ri, &state).expect("index in range");
            if lambda <= 0.0 {
                continue;
            }
            let in_box = state
                .0
                .iter()
                .zip(deltas[ri].iter())
                .zip(grid.bounds.iter())
                .all(|((&x, &d), &b)| {
                    let v = x as i64 + d;
                    v >= 0 && v <= b as i64
                });
            if in_box && flat_deltas[ri] != 0 {
                let t = (idx as i64 + flat_deltas[ri]) as usize;
                let slot = cursor[idx] as usize;
                targets[slot] = t as u32;
                rates[slot] = lambda;
                cursor[idx] += 1;
            }
        }
    }

    // closed communicating classes of the truncated digraph
    let (comp, comp_count) = tarjan_scc(n, &offsets, &targets);
    let mut closed = vec![true; comp_count];
    for idx in 0..n {
        for e in offsets[idx]..offsets[idx + 1] {
            let t = targets[e as usize] as usize;
            if comp[idx] != comp[t] {
                closed[comp[idx] as usize] = false;
            }
        }
    }
    let closed_classes = closed.iter().filter(|&&c| c).count();
    if closed_classes != 1 {
        return Err(AnalysisError::Reducible { closed_classes });
    }
    let target_comp = closed.iter().position(|&c| c).unwrap() as u32;

    // class states in ascending box order; positions compress the band
    let class: Vec<usize> = (0..n).filter(|&i| comp[i] == target_comp).collect();
    let nc = class.len();
    let mut pos = vec![u32::MAX; n];
    for (p, &idx) in class.iter().enumerate() {
        pos[idx] = p as u32;
    }

    let pi = if nc == 1 {
        vec![1.0f64]
    } else {
        let mut band = 0usize;
        for &idx in &class {
            for e in offsets[idx]..offsets[idx + 1] {
                let t = targets[e as usize] as usize;
                // edges from a closed class stay inside it
                let diff = (pos[idx] as i64 - pos[t] as i64).unsigned_abs() as usize;
                band = band.max(diff);
            }
        }
        let width = 2 * band + 1;
        let entries = nc
            .checked_mul(width)
            .ok_or(AnalysisError::BandTooLarge { entries: usize::MAX })?;
        if entries > BAND_ENTRY_LIMIT {
            return Err(AnalysisError::BandTooLarge { entries });
        }
        // band[r][c] at r*width + (c - r + band); diagonal slot reused for
        // the elimination denominators
        let mut matrix = vec![0.0f64; entries];
        let at = |r: usize, c: usize| r * width + band + c - r;
        for &idx in &class {
            let r = pos[idx] as usize;
            for e in offsets[idx]..offsets[idx + 1] {
                let c = pos[targets[e as usize] as usize] as usize;
                matrix[at(r, c)] += rates[e as usize];
            }
        }
        // state reduction from the last class state down
        for k in (1..nc).rev() {
            let lo = k.saturating_sub(band);
            let mut s_k = 0.0f64;
            for j in lo..k {
                s_k += matrix[at(k, j)];
            }
            if !(s_k > 0.0) {
                return Err(AnalysisError::NumericalFailure(format!(
                    "state reduction stalled at class position {k}"
                )));
            }
            for i in lo..k {
                let up = matrix[at(i, k)];
                if up <= 0.0 {
                    continue;
                }
                let f = up / s_k;
                for j in lo..k {
                    let down = matrix[at(k, j)];
                    if down > 0.0 {
                        matrix[at(i, j)] += f * down;
                    }
                }
            }
            matrix[at(k, k)] = s_k;
        }
        // back-substitution: unnormalized mass flows into each state from below
        let mut w = vec![0.0f64; nc];
        w[0] = 1.0;
        for k in 1..nc {
            let lo = k.saturating_sub(band);
            let mut inflow = 0.0f64;
            for i in lo..k {
                if w[i] > 0.0 {
                    inflow += w[i] * matrix[at(i, k)];
                }
            }
            w[k] = inflow / matrix[at(k, k)];
        }
        let max_w = w.iter().cloned().fold(0.0f64, f64::max);
        let total: f64 = w.iter().map(|&v| v / max_w).sum();
        w.iter().map(|&v| v / max_w / total).collect()
    };

    // diagnostics under the solution
    let mut deleted_flux = 0.0f64;
    let mut total_flux = 0.0f64;
    for (p, &idx) in class.iter().enumerate() {
        deleted_flux += pi[p] * deleted[idx];
        total_flux += pi[p] * (deleted[idx] + kept_exit[idx]);
    }
    let outflow = if total_flux > 0.0 {
        deleted_flux / total_flux
    } else {
        0.0
    };

    let mut mass: BTreeMap<State, f64> = BTreeMap::new();
    for (p, &idx) in class.iter().enumerate() {
        grid.decode(idx, &mut scratch);
        mass.insert(State(scratch.clone()), pi[p]);
    }
    let normalization: f64 = pi.iter().sum();
    Ok(StationaryTable {
        dist: FiniteDistribution::new(n_species, mass)?,
        normalization,
        domain: Domain::Box,
        boundary_outflow: Some(outflow),
        truncated: false,
    })
}

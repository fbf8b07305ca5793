//! Browser bindings for the distribution compiler.
//!
//! Three operations back the static demo page, all JSON-in / JSON-out so the
//! page needs no framework: compile a target distribution into a network,
//! compute its stationary marginal (product-form law when the network is
//! detailed balanced and carries an initial condition, truncated-generator
//! solve otherwise), and run a seeded trajectory. Failures come back as
//! `{"error": "..."}` rather than exceptions.

use wasm_bindgen::prelude::*;

use crndist::analysis::{db_stationary, oracle_stationary, solve_detailed_balance};
use crndist::dist::{marginalize, truncate, DistributionSpec, FiniteDistribution};
use crndist::network::{ReactionNetwork, State};
use crndist::sim::{simulate, SimConfig};
use crndist::synth::{synthesize, Method, SynthesisResult};

fn err_json(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

/// First-coordinate marginal probabilities over `0..=extent`.
fn marginal_series(table: &FiniteDistribution, extent: u64) -> Result<Vec<f64>, String> {
    let marginal = if table.dim() > 1 {
        marginalize(table, &[0]).map_err(|e| e.to_string())?
    } else {
        table.clone()
    };
    Ok((0..=extent)
        .map(|v| marginal.prob(&State(vec![v])))
        .collect())
}

fn parse_network(net_json: &str) -> Result<(ReactionNetwork, Option<State>), String> {
    // compiler documents carry method/meta; plain network files do not
    if let Ok(result) = SynthesisResult::from_json_str(net_json) {
        let init = result.init.clone();
        return Ok((result.net, init));
    }
    let net = ReactionNetwork::from_json_str(net_json).map_err(|e| e.to_string())?;
    let init = net.init.clone();
    Ok((net, init))
}

/// Compile `spec_json` with the given construction tag
/// (`full|bimol|spantree|pointmass|pmmix|unif|poisson|mix|auto_db|auto_robust`).
///
/// Returns the network document plus display-ready reaction lines and the
/// target's first-coordinate marginal over `0..=extent`.
#[wasm_bindgen]
pub fn compile_network(
    spec_json: &str,
    method: &str,
    eps: f64,
    delta: f64,
    extent: u32,
) -> String {
    let inner = || -> Result<String, String> {
        let spec = DistributionSpec::from_json_str(spec_json).map_err(|e| e.to_string())?;
        let method = Method::from_str_tag(method).ok_or(format!("unknown method '{method}'"))?;
        let eps = (eps > 0.0).then_some(eps);
        let delta = (delta > 0.0).then_some(delta);
        let result = synthesize(&spec, method, eps, delta).map_err(|e| e.to_string())?;
        let reactions: Vec<String> = (0..result.net.reactions.len())
            .map(|i| result.net.reaction_display(i))
            .collect();
        let target = truncate(&spec, 1e-9).map_err(|e| e.to_string())?;
        let target_series = marginal_series(&target, extent as u64)?;
        Ok(serde_json::json!({
            "net": result.to_json(),
            "reactions": reactions,
            "species": result.net.species.names,
            "method": result.method.as_str(),
            "reaction_count": result.net.reactions.len(),
            "species_count": result.net.species.len(),
            "max_molecularity": result.net.max_molecularity(),
            "delta": result.meta.delta,
            "epsilon": result.meta.epsilon,
            "target": target_series,
        })
        .to_string())
    };
    inner().unwrap_or_else(err_json)
}

/// Stationary marginal of the first visible species over `0..=extent`.
///
/// Detailed-balanced networks with an initial condition use the exact
/// product-form law over the reachability class; everything else goes
/// through the truncated-generator solve on a box (`extent` per visible
/// species, a small cap for hidden catalysts).
#[wasm_bindgen]
pub fn stationary_marginal(net_json: &str, extent: u32) -> String {
    let inner = || -> Result<String, String> {
        let (net, init) = parse_network(net_json)?;
        let extent = extent.max(2) as u64;
        let cert = solve_detailed_balance(&net);
        if let (Some(cert), Some(x0)) = (&cert, &init) {
            let table = db_stationary(&net, cert, x0, 100_000).map_err(|e| e.to_string())?;
            let probs = marginal_series(&table.dist, extent)?;
            return Ok(serde_json::json!({
                "engine": "detailed-balance",
                "probs": probs,
                "M": table.normalization,
            })
            .to_string());
        }
        let bounds: Vec<u64> = (0..net.species.len())
            .map(|i| if i < net.visible_count { extent } else { 4 })
            .collect();
        let table = oracle_stationary(&net, &bounds).map_err(|e| e.to_string())?;
        let probs = marginal_series(&table.dist, extent)?;
        Ok(serde_json::json!({
            "engine": "truncated-generator",
            "probs": probs,
            "outflow": table.boundary_outflow,
        })
        .to_string())
    };
    inner().unwrap_or_else(err_json)
}

/// Simulate one trajectory and return a downsampled path for the visible
/// species plus the occupancy marginal of the first coordinate.
#[wasm_bindgen]
pub fn simulate_trajectory(
    net_json: &str,
    x0_csv: &str,
    t_end: f64,
    seed: u32,
    extent: u32,
    max_points: u32,
) -> String {
    let inner = || -> Result<String, String> {
        let (net, init) = parse_network(net_json)?;
        let x0 = if x0_csv.trim().is_empty() {
            init.unwrap_or_else(|| State(vec![0; net.species.len()]))
        } else {
            let counts = x0_csv
                .split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|_| format!("bad count '{p}'")))
                .collect::<Result<Vec<_>, _>>()?;
            State(counts)
        };
        let cfg = SimConfig {
            t_end,
            seed: seed as u64,
            burn_in_fraction: 0.1,
            max_events: 2_000_000,
        };
        let out = simulate(&net, &x0, &cfg, &[]).map_err(|e| e.to_string())?;
        let visible = net.visible_count.max(1).min(3);
        let stride = (out.trajectory.len() / max_points.max(2) as usize).max(1);
        let mut times = Vec::new();
        let mut series: Vec<Vec<u64>> = vec![Vec::new(); visible];
        for (i, (t, s)) in out.trajectory.iter().enumerate() {
            if i % stride == 0 || i + 1 == out.trajectory.len() {
                times.push(*t);
                for (k, channel) in series.iter_mut().enumerate() {
                    channel.push(s.0[k]);
                }
            }
        }
        let occupancy = marginal_series(&out.occupancy.dist, extent as u64)?;
        Ok(serde_json::json!({
            "times": times,
            "series": series,
            "species": net.species.names[..visible],
            "events": out.occupancy.events,
            "truncated": out.occupancy.truncated_by_cap,
            "occupancy": occupancy,
        })
        .to_string())
    };
    inner().unwrap_or_else(err_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POISSON_SPEC: &str = r#"{"dim":1,"kind":"product_poisson","c":[1.5]}"#;

    #[test]
    fn compile_poisson_network() {
        let out = compile_network(POISSON_SPEC, "poisson", 0.0, 0.0, 12);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_none(), "{out}");
        assert_eq!(v["reaction_count"], 3);
        assert_eq!(v["target"].as_array().unwrap().len(), 13);
    }

    #[test]
    fn stationary_of_compiled_network_tracks_target() {
        let compiled = compile_network(POISSON_SPEC, "poisson", 0.0, 0.0, 12);
        let v: serde_json::Value = serde_json::from_str(&compiled).unwrap();
        let net_json = v["net"].to_string();
        let stat = stationary_marginal(&net_json, 24);
        let s: serde_json::Value = serde_json::from_str(&stat).unwrap();
        assert!(s.get("error").is_none(), "{stat}");
        assert_eq!(s["engine"], "truncated-generator");
        let probs = s["probs"].as_array().unwrap();
        let target = v["target"].as_array().unwrap();
        for k in 0..target.len() {
            let diff = (probs[k].as_f64().unwrap() - target[k].as_f64().unwrap()).abs();
            assert!(diff < 1e-6, "k={k}: {diff}");
        }
    }

    #[test]
    fn db_route_uses_exact_engine() {
        let spec = r#"{"dim":1,"kind":"finite","mass":[
            {"state":[0],"p":0.3},{"state":[1],"p":0.7}]}"#;
        let compiled = compile_network(spec, "full", 0.0, 0.0, 8);
        let v: serde_json::Value = serde_json::from_str(&compiled).unwrap();
        assert!(v.get("error").is_none(), "{compiled}");
        let stat = stationary_marginal(&v["net"].to_string(), 8);
        let s: serde_json::Value = serde_json::from_str(&stat).unwrap();
        assert_eq!(s["engine"], "detailed-balance", "{stat}");
        let probs = s["probs"].as_array().unwrap();
        assert!((probs[0].as_f64().unwrap() - 0.3).abs() < 1e-12);
        assert!((probs[1].as_f64().unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn trajectory_runs_and_downsamples() {
        let compiled = compile_network(POISSON_SPEC, "poisson", 0.0, 0.0, 12);
        let v: serde_json::Value = serde_json::from_str(&compiled).unwrap();
        let out = simulate_trajectory(&v["net"].to_string(), "", 500.0, 42, 12, 200);
        let t: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(t.get("error").is_none(), "{out}");
        assert!(t["times"].as_array().unwrap().len() <= 402);
        assert!(t["events"].as_u64().unwrap() > 100);
        let occ: f64 = t["occupancy"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p.as_f64().unwrap())
            .sum();
        assert!(occ > 0.99);
    }

    #[test]
    fn errors_are_reported_inline() {
        let out = compile_network("{not json", "poisson", 0.0, 0.0, 8);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v.get("error").is_some());
    }
}

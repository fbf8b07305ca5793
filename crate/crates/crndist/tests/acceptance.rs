//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figures. Tolerances are pinned in the asserts.

use std::collections::BTreeMap;
use std::time::Instant;

use crndist::analysis::{
    bound_mixing_birth, bound_mixing_decay, db_stationary, exact_point_mass_stationary,
    oracle_stationary, solve_detailed_balance, unif_error_bound,
};
use crndist::dist::{inf_norm_distance, marginalize, pmf, DistributionSpec, FiniteDistribution};
use crndist::network::{Complex, Reaction, ReactionNetwork, SpeciesList, State};
use crndist::sim::{estimate_limit, simulate, verify, CounterRng, SimConfig, VerifyMode};
use crndist::synth::{
    synth_bimolecular, synth_full, synth_multidim_unif, synth_point_mass, synth_point_mass_mix,
    synth_prod_pois, synth_spanning_tree,
};

fn finite(entries: &[(&[u64], f64)]) -> FiniteDistribution {
    let mass: BTreeMap<State, f64> = entries
        .iter()
        .map(|(s, p)| (State(s.to_vec()), *p))
        .collect();
    FiniteDistribution::new(entries[0].0.len(), mass).unwrap()
}

/// Random finite distribution with `m` distinct support points and
/// probabilities bounded away from zero. The coordinate range grows as the
/// dimension shrinks so that `m` up to 20 distinct states always exist.
fn random_finite(rng: &mut CounterRng, d: usize, m: usize) -> FiniteDistribution {
    let range = match d {
        1 => 40,
        2 => 9,
        _ => 7,
    };
    let mut support = std::collections::BTreeSet::new();
    while support.len() < m {
        let s: Vec<u64> = (0..d).map(|_| rng.next_u64() % range).collect();
        support.insert(State(s));
    }
    let weights: BTreeMap<State, f64> = support
        .into_iter()
        .map(|s| (s, 0.2 + rng.next_f64()))
        .collect();
    FiniteDistribution::from_weights(d, weights).unwrap()
}

/// Random cluster support grown by adjacent steps, with random masses.
fn random_cluster(rng: &mut CounterRng, d: usize, m: usize) -> FiniteDistribution {
    let start = State((0..d).map(|_| 1 + rng.next_u64() % 4).collect());
    let mut support = std::collections::BTreeSet::new();
    support.insert(start);
    while support.len() < m {
        let pick = rng.next_u64() as usize % support.len();
        let base = support.iter().nth(pick).unwrap().clone();
        let k = rng.next_u64() as usize % d;
        let sign = if rng.next_u64() % 2 == 0 { 1i64 } else { -1 };
        let mut unit = vec![0i64; d];
        unit[k] = sign;
        if let Some(nb) = base.offset(&unit) {
            support.insert(nb);
        }
    }
    let weights: BTreeMap<State, f64> = support
        .into_iter()
        .map(|s| (s, 0.2 + rng.next_f64()))
        .collect();
    FiniteDistribution::from_weights(d, weights).unwrap()
}

fn adjacent_pairs(q: &FiniteDistribution) -> usize {
    let states: Vec<&State> = q.states().collect();
    let mut count = 0;
    for (i, a) in states.iter().enumerate() {
        for b in states.iter().skip(i + 1) {
            let mut diff_one = 0;
            let mut equal = true;
            for (&x, &y) in a.0.iter().zip(b.0.iter()) {
                match (x as i64 - y as i64).abs() {
                    0 => {}
                    1 => diff_one += 1,
                    _ => equal = false,
                }
            }
            if equal && diff_one == 1 {
                count += 1;
            }
        }
    }
    count
}

fn db_marginal(result: &crndist::synth::SynthesisResult) -> FiniteDistribution {
    let cert = solve_detailed_balance(&result.net).expect("construction is detailed balanced");
    let table = db_stationary(
        &result.net,
        &cert,
        result.init.as_ref().expect("indexed constructions carry an init"),
        100_000,
    )
    .unwrap();
    assert!(!table.truncated);
    marginalize(&table.dist, &result.visible).unwrap()
}

#[test]
fn acceptance_01_exact_detailed_balanced_marginals() {
    let start = Instant::now();
    let mut rng = CounterRng::new(0xA1);
    let mut worst = 0.0f64;
    for case in 0..25 {
        let d = 1 + case % 3;
        let m = 1 + (rng.next_u64() as usize % 20);
        let q = random_finite(&mut rng, d, m);
        let result = synth_full(&q).unwrap();
        let marginal = db_marginal(&result);
        let dist = inf_norm_distance(&marginal, &q).unwrap();
        assert!(dist < 1e-12, "case {case}: distance {dist}");
        worst = worst.max(dist);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 exact detailed-balanced marginals: PASS \
         (25 cases, worst distance {worst:.2e}, {elapsed:?})"
    );
}

#[test]
fn acceptance_02_construction_equivalence() {
    let start = Instant::now();
    let mut rng = CounterRng::new(0xA2);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let d = 1 + case % 2;
        let m = 2 + (rng.next_u64() as usize % 9);
        let q = random_cluster(&mut rng, d, m);
        let m = q.support_size();

        let bimol = synth_bimolecular(&q).unwrap();
        assert_eq!(bimol.net.reactions.len(), 2 * adjacent_pairs(&q), "case {case}");
        let d_bimol = inf_norm_distance(&db_marginal(&bimol), &q).unwrap();
        assert!(d_bimol < 1e-12, "case {case}: bimolecular distance {d_bimol}");

        let tree = synth_spanning_tree(&q, None).unwrap();
        assert_eq!(tree.net.reactions.len(), 2 * (m - 1), "case {case}");
        let d_tree = inf_norm_distance(&db_marginal(&tree), &q).unwrap();
        assert!(d_tree < 1e-12, "case {case}: spanning-tree distance {d_tree}");

        worst = worst.max(d_bimol.max(d_tree));
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 2 construction equivalence: PASS \
         (10 cluster cases, worst distance {worst:.2e}, {elapsed:?})"
    );
}

/// Enumerate all x in {0..=5}^d.
fn all_targets(d: usize) -> Vec<State> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(out.len() * 6);
        for prefix in &out {
            for v in 0..=5u64 {
                let mut s = prefix.clone();
                s.push(v);
                next.push(s);
            }
        }
        out = next;
    }
    out.into_iter().map(State).collect()
}

/// Smallest K with the unnormalized marginal term at `x + K` below 1e-12;
/// terms follow `t_n / t_{n-1} = rho / (n (n+1) ... (x+n))`.
fn tail_extent(xi: u64, rho: f64) -> u64 {
    let mut term = 1.0f64;
    let mut n = 1u64;
    loop {
        let mut denom = 1.0f64;
        for k in n..=(xi + n) {
            denom *= k as f64;
        }
        term *= rho / denom;
        if term < 1e-12 {
            return n + 1;
        }
        n += 1;
    }
}

/// Box extents that certifiably capture the point-mass tails.
fn point_mass_box(x: &State, eps: f64) -> Vec<u64> {
    let rho = eps / (2.0 * x.len() as f64);
    x.0.iter()
        .map(|&xi| if xi == 0 { 2 } else { xi + tail_extent(xi, rho) })
        .collect()
}

#[test]
fn acceptance_03_point_mass_error_guarantee() {
    let start = Instant::now();
    let mut cases = 0usize;
    let mut worst_gap = 0.0f64;
    for d in 1..=3usize {
        for x in all_targets(d) {
            for eps in [0.5, 0.1, 0.01] {
                let exact = exact_point_mass_stationary(&x, eps, 14).unwrap();
                let miss = 1.0 - exact.dist.prob(&x);
                assert!(
                    (0.0..eps).contains(&miss),
                    "x={x:?} eps={eps}: 1 - pi(x) = {miss}"
                );

                let net = synth_point_mass(&x, eps).unwrap().net;
                let table = oracle_stationary(&net, &point_mass_box(&x, eps)).unwrap();
                let outflow = table.boundary_outflow.unwrap();
                assert!(outflow < 1e-6, "x={x:?} eps={eps}: outflow {outflow}");
                let gap = inf_norm_distance(&table.dist, &exact.dist).unwrap();
                assert!(gap < 1e-8, "x={x:?} eps={eps}: oracle gap {gap}");
                worst_gap = worst_gap.max(gap);
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 3 point-mass error guarantee: PASS \
         ({cases} cases, worst oracle gap {worst_gap:.2e}, {elapsed:?})"
    );
}

#[test]
fn acceptance_04_uniform_bound_validity() {
    let start = Instant::now();
    let boxes: [(&[u64], &[u64]); 10] = [
        (&[0], &[0]),
        (&[0], &[2]),
        (&[1], &[4]),
        (&[3], &[3]),
        (&[2], &[4]),
        (&[0, 0], &[1, 1]),
        (&[1, 0], &[3, 2]),
        (&[0, 2], &[2, 4]),
        (&[2, 2], &[4, 4]),
        (&[1, 1], &[4, 3]),
    ];
    let mut checked = 0usize;
    for (a_raw, b_raw) in boxes {
        let a = State(a_raw.to_vec());
        let b = State(b_raw.to_vec());
        let d = a.len();
        let target = DistributionSpec::UniformBox { a: a.clone(), b: b.clone() }
            .to_finite()
            .unwrap();
        let mut last = None;
        for delta in [0.5, 0.2, 0.1, 0.05] {
            let net = synth_multidim_unif(&a, &b, delta, None).unwrap().net;
            let bounds: Vec<u64> = b.0.iter().map(|&bi| bi + 14).collect();
            let table = oracle_stationary(&net, &bounds).unwrap();
            assert!(table.boundary_outflow.unwrap() < 1e-6);
            let distance = inf_norm_distance(&table.dist, &target).unwrap();

            let kappa: Vec<(f64, f64)> = (0..d).map(|_| (1.0, 2.0 * d as f64 / delta)).collect();
            let bound = unif_error_bound(&a, &b, &kappa).unwrap().joint;
            assert!(
                distance <= bound,
                "a={a_raw:?} b={b_raw:?} delta={delta}: distance {distance} > bound {bound}"
            );
            last = Some(distance);
            checked += 1;
        }
        // asymptotic trend at the smallest delta
        let distance = last.unwrap();
        assert!(
            distance / 0.05 <= 1.5,
            "a={a_raw:?} b={b_raw:?}: distance/delta = {}",
            distance / 0.05
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 uniform bound validity: PASS \
         ({checked} (a,b,delta) runs, trend distance/delta <= 1.5 at delta=0.05, {elapsed:?})"
    );
}

#[test]
fn acceptance_05_product_poisson_exactness() {
    let start = Instant::now();
    for (c, bounds) in [(vec![1.0], vec![25u64]), (vec![2.0, 0.5], vec![25, 18])] {
        let net = synth_prod_pois(&c).unwrap().net;
        let table = oracle_stationary(&net, &bounds).unwrap();
        let outflow = table.boundary_outflow.unwrap();
        assert!(outflow < 1e-6, "c={c:?}: outflow {outflow}");
        let spec = DistributionSpec::ProductPoisson { c: c.clone() };
        let mut worst = 0.0f64;
        for (s, p) in table.dist.iter() {
            worst = worst.max((p - pmf(&spec, s)).abs());
        }
        assert!(worst < 1e-8, "c={c:?}: worst pmf gap {worst}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("ACCEPTANCE 5 product-Poisson exactness: PASS ({elapsed:?})");
}

#[test]
fn acceptance_06_robustness_across_initial_conditions() {
    let start = Instant::now();
    let q = finite(&[(&[0], 0.3), (&[1], 0.4), (&[3], 0.3)]);
    let net = synth_point_mass_mix(&q, 0.1).unwrap().net;
    // species: V1, H1, H2, H3; the second and third starts carry hidden counts
    let starts = [
        (State(vec![0, 0, 0, 0]), 0xC6u64),
        (State(vec![5, 1, 0, 0]), 0xD6),
        (State(vec![2, 0, 2, 1]), 0xE6),
    ];
    let estimates: Vec<FiniteDistribution> = starts
        .iter()
        .map(|(x0, seed)| {
            let cfg = SimConfig::new(1e6, *seed);
            estimate_limit(&net, x0, &cfg, &[0], 8)
                .unwrap()
                .occupancy
                .dist
        })
        .collect();
    let mut worst = 0.0f64;
    for i in 0..estimates.len() {
        for j in (i + 1)..estimates.len() {
            let dist = inf_norm_distance(&estimates[i], &estimates[j]).unwrap();
            assert!(dist < 0.02, "starts {i},{j}: distance {dist}");
            worst = worst.max(dist);
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 6 robustness across initial conditions: PASS \
         (3 starts, worst pairwise distance {worst:.4}, {elapsed:?})"
    );
}

#[test]
fn acceptance_07_delta_convergence_trend() {
    let start = Instant::now();
    let q = finite(&[(&[0], 0.3), (&[1], 0.4), (&[3], 0.3)]);
    let target = DistributionSpec::Finite(q.clone());
    let mut measured = Vec::new();
    for delta in [0.5, 0.2, 0.1] {
        let net = synth_point_mass_mix(&q, delta).unwrap().net;
        let x0 = State(vec![0; net.species.len()]);
        let report = verify(
            &net,
            &target,
            &[0],
            &VerifyMode::Sim {
                x0: Some(x0),
                cfg: SimConfig::new(1e6, 0xC7),
                replicates: 8,
            },
        )
        .unwrap();
        measured.push((delta, report.distance, report.diagnostics.spread.unwrap()));
    }
    for w in measured.windows(2) {
        let (d_prev, dist_prev, spread_prev) = w[0];
        let (d_next, dist_next, spread_next) = w[1];
        let slack = 2.0 * spread_prev.max(spread_next);
        assert!(
            dist_next <= dist_prev + slack,
            "delta {d_prev} -> {d_next}: distance rose {dist_prev} -> {dist_next} (slack {slack})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    let line: Vec<String> = measured
        .iter()
        .map(|(d, dist, spread)| format!("delta={d}: dist={dist:.4} spread={spread:.4}"))
        .collect();
    println!(
        "ACCEPTANCE 7 delta-convergence trend: PASS ({}, {elapsed:?})",
        line.join("; ")
    );
}

#[test]
fn acceptance_08_mixing_bound_soundness() {
    let start = Instant::now();

    // decay block from the point-mass construction at 0 with eps = 0.1:
    // rates (2/eps, 1); level 0.2
    let decay_net = synth_point_mass(&State(vec![0]), 0.1).unwrap().net;
    let eps_level = 0.2;
    let tau = bound_mixing_decay(20.0, 1.0, eps_level).unwrap().bound;
    let mut endpoint: BTreeMap<State, f64> = BTreeMap::new();
    for seed in 0..16u64 {
        let cfg = SimConfig {
            t_end: tau,
            seed,
            burn_in_fraction: 0.0,
            max_events: u64::MAX,
        };
        let out = simulate(&decay_net, &State(vec![25]), &cfg, &[]).unwrap();
        *endpoint
            .entry(out.trajectory.last().unwrap().1.clone())
            .or_insert(0.0) += 1.0 / 16.0;
    }
    let empirical = FiniteDistribution::new(1, endpoint).unwrap();
    let exact = finite(&[(&[0], 1.0)]);
    let decay_distance = inf_norm_distance(&empirical, &exact).unwrap();
    assert!(
        decay_distance < eps_level,
        "decay: distance {decay_distance} at t = {tau}"
    );

    // birth block x=1, k1=0.1, k2=20 at eps = 0.2 (inside the window);
    // certified level is 2 eps
    let birth_net = ReactionNetwork {
        species: SpeciesList::new(vec!["V1".into()]),
        reactions: vec![
            Reaction { reactant: Complex(vec![0]), product: Complex(vec![1]), rate: 0.1 },
            Reaction { reactant: Complex(vec![2]), product: Complex(vec![1]), rate: 20.0 },
        ],
        visible_count: 1,
        init: None,
    };
    let bound = bound_mixing_birth(1, 0.1, 20.0, 0.2).unwrap();
    assert_eq!(bound.level, 0.4);
    let stationary = oracle_stationary(&birth_net, &[20]).unwrap();
    assert!(stationary.boundary_outflow.unwrap() < 1e-6);
    let mut endpoint: BTreeMap<State, f64> = BTreeMap::new();
    for seed in 100..116u64 {
        let cfg = SimConfig {
            t_end: bound.bound,
            seed,
            burn_in_fraction: 0.0,
            max_events: u64::MAX,
        };
        let out = simulate(&birth_net, &State(vec![25]), &cfg, &[]).unwrap();
        *endpoint
            .entry(out.trajectory.last().unwrap().1.clone())
            .or_insert(0.0) += 1.0 / 16.0;
    }
    let empirical = FiniteDistribution::new(1, endpoint).unwrap();
    let birth_distance = inf_norm_distance(&empirical, &stationary.dist).unwrap();
    assert!(
        birth_distance < bound.level,
        "birth: distance {birth_distance} at t = {}",
        bound.bound
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 8 mixing-bound soundness: PASS \
         (decay {decay_distance:.4} < {eps_level} at t={tau:.3}; \
          birth {birth_distance:.4} < {} at t={:.1}; {elapsed:?})",
        bound.level, bound.bound
    );
}

#[test]
fn acceptance_09_oracle_self_consistency() {
    let start = Instant::now();
    // detailed-balanced networks whose box truncation stays irreducible
    let mut nets: Vec<(String, ReactionNetwork, State, Vec<u64>)> = Vec::new();

    let pair = |reactant: Vec<u64>, product: Vec<u64>, rate: f64| Reaction {
        reactant: Complex(reactant),
        product: Complex(product),
        rate,
    };

    nets.push((
        "poisson(3)".into(),
        ReactionNetwork {
            species: SpeciesList::new(vec!["V1".into()]),
            reactions: vec![pair(vec![0], vec![1], 3.0), pair(vec![1], vec![0], 1.0)],
            visible_count: 1,
            init: None,
        },
        State(vec![0]),
        vec![40],
    ));
    nets.push((
        "poisson(2) x poisson(0.5)".into(),
        ReactionNetwork {
            species: SpeciesList::new(vec!["V1".into(), "V2".into()]),
            reactions: vec![
                pair(vec![0, 0], vec![1, 0], 2.0),
                pair(vec![1, 0], vec![0, 0], 1.0),
                pair(vec![0, 0], vec![0, 1], 0.5),
                pair(vec![0, 1], vec![0, 0], 1.0),
            ],
            visible_count: 2,
            init: None,
        },
        State(vec![0, 0]),
        vec![30, 20],
    ));
    nets.push((
        "exchange A<->B with inflow".into(),
        ReactionNetwork {
            species: SpeciesList::new(vec!["A".into(), "B".into()]),
            reactions: vec![
                pair(vec![0, 0], vec![1, 0], 1.5),
                pair(vec![1, 0], vec![0, 0], 1.0),
                pair(vec![1, 0], vec![0, 1], 1.0),
                pair(vec![0, 1], vec![1, 0], 2.0),
            ],
            visible_count: 2,
            init: None,
        },
        State(vec![0, 0]),
        vec![25, 25],
    ));
    nets.push((
        "triangle exchange with inflow".into(),
        ReactionNetwork {
            species: SpeciesList::new(vec!["A".into(), "B".into(), "C".into()]),
            reactions: vec![
                pair(vec![0, 0, 0], vec![1, 0, 0], 1.0),
                pair(vec![1, 0, 0], vec![0, 0, 0], 1.0),
                pair(vec![1, 0, 0], vec![0, 1, 0], 2.0),
                pair(vec![0, 1, 0], vec![1, 0, 0], 1.0),
                pair(vec![0, 1, 0], vec![0, 0, 1], 1.0),
                pair(vec![0, 0, 1], vec![0, 1, 0], 2.0),
                pair(vec![1, 0, 0], vec![0, 0, 1], 1.0),
                pair(vec![0, 0, 1], vec![1, 0, 0], 1.0),
            ],
            visible_count: 3,
            init: None,
        },
        State(vec![0, 0, 0]),
        vec![12, 16, 12],
    ));
    nets.push((
        "birth-death with autocatalysis".into(),
        ReactionNetwork {
            species: SpeciesList::new(vec!["V1".into()]),
            reactions: vec![
                pair(vec![0], vec![1], 2.0),
                pair(vec![1], vec![0], 1.0),
                pair(vec![1], vec![2], 0.8),
                pair(vec![2], vec![1], 0.4),
            ],
            visible_count: 1,
            init: None,
        },
        State(vec![0]),
        vec![40],
    ));

    let mut worst = 0.0f64;
    for (name, net, x0, bounds) in &nets {
        let cert = solve_detailed_balance(net)
            .unwrap_or_else(|| panic!("{name} should be detailed balanced"));
        let db = db_stationary(net, &cert, x0, 50_000).unwrap();
        let oracle = oracle_stationary(net, bounds).unwrap();
        assert!(
            oracle.boundary_outflow.unwrap() < 1e-6,
            "{name}: outflow {}",
            oracle.boundary_outflow.unwrap()
        );
        let gap = inf_norm_distance(&db.dist, &oracle.dist).unwrap();
        assert!(gap < 1e-8, "{name}: db vs oracle gap {gap}");
        worst = worst.max(gap);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 9 oracle self-consistency: PASS \
         ({} networks, worst gap {worst:.2e}, {elapsed:?})",
        nets.len()
    );
}

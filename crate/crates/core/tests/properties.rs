use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rgsgen::compiler::{compile, reverse_plan, verify_circuit, Algorithm, CompiledCircuit, InitialConditions};
use rgsgen::graphstate::{Basis, GraphState, VertexId};
use rgsgen::primitives::Gate;
use rgsgen::repeater::emitters_required;
use rgsgen::rgs::{logical_meas_probs, BranchingVector, TreeCode};
use rgsgen::scheduler::{cnot_depth, emission_schedule, greedy_layers, TimingModel};
use rgsgen::tableau::{graph_to_tableau, local_clifford_equivalent};

/// Connected graph on `n` photons: a random spanning tree plus extra edges.
fn connected_graph(max: usize) -> impl Strategy<Value = GraphState> {
    (1..=max).prop_flat_map(|n| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec(any::<bool>(), n * (n - 1) / 2);
        (Just(n), parents, extra, 0u32..4).prop_map(|(n, parents, extra, density)| {
            let mut edges = Vec::new();
            for (v, p) in parents.iter().enumerate() {
                let v = v + 1;
                edges.push((p.index(v) as VertexId, v as VertexId));
            }
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    // Keep roughly one extra pair in `density` + 1.
                    let keep = extra[k] && (k as u32) % (density + 1) == 0;
                    if keep && !edges.contains(&(u as VertexId, v as VertexId)) {
                        edges.push((u as VertexId, v as VertexId));
                    }
                    k += 1;
                }
            }
            GraphState::from_edges(n as u32, &edges).unwrap()
        })
    })
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Alg1), Just(Algorithm::Alg2)]
}

fn timing() -> impl Strategy<Value = TimingModel> {
    (0u32..50, 0u32..50, 0u32..400, 0u32..100, 0u32..50).prop_map(|(h, ep, ee, meas, init)| TimingModel {
        t_h: h as f64,
        t_cnot_ep: ep as f64,
        t_cnot_ee: ee as f64,
        t_meas: meas as f64,
        t_init: init as f64,
    })
}

fn compiled(g: &GraphState, n_e: usize, alg: Algorithm) -> Option<(usize, CompiledCircuit)> {
    let init = InitialConditions(g.photons().collect());
    let plan = compile(g, n_e, &init, alg).ok()?;
    Some((cnot_depth(&plan), reverse_plan(&plan).unwrap()))
}

/// Discrete-event replay: each emitter works through its own gate queue in
/// time order, and a two-emitter gate fires once both emitters reach it.
fn event_oracle(c: &CompiledCircuit, t: &TimingModel) -> (BTreeMap<VertexId, f64>, f64) {
    let mut queues: BTreeMap<VertexId, VecDeque<(usize, Gate)>> =
        c.emitters.iter().map(|&e| (e, VecDeque::new())).collect();
    for (i, g) in c.forward_gates.iter().enumerate() {
        for q in g.qubits() {
            if let Some(queue) = queues.get_mut(&q) {
                queue.push_back((i, *g));
            }
        }
    }
    let mut clock: BTreeMap<VertexId, f64> = c.emitters.iter().map(|&e| (e, 0.0)).collect();
    // An emitter's first initialization and the Hadamard after it prepare
    // the start state at no cost.
    let mut fresh: BTreeMap<VertexId, u8> = c.emitters.iter().map(|&e| (e, 2)).collect();
    let mut waiting: BTreeMap<usize, VertexId> = BTreeMap::new();
    let mut emit = BTreeMap::new();
    let mut heap: BinaryHeap<Reverse<(u64, VertexId)>> = c.emitters.iter().map(|&e| Reverse((0, e))).collect();

    while let Some(Reverse((_, e))) = heap.pop() {
        let Some(&(i, g)) = queues[&e].front() else { continue };
        match g {
            Gate::CnotEE { control: a, target: b } | Gate::CzEE(a, b) => {
                let other = if a == e { b } else { a };
                if waiting.remove(&i) != Some(other) {
                    waiting.insert(i, e);
                    continue;
                }
                let start = clock[&a].max(clock[&b]) + t.t_cnot_ee;
                for q in [a, b] {
                    clock.insert(q, start);
                    fresh.insert(q, 0);
                    queues.get_mut(&q).unwrap().pop_front();
                    heap.push(Reverse((start.to_bits(), q)));
                }
                continue;
            }
            Gate::InitEmitter(_) => {
                let f = fresh[&e];
                if f == 2 {
                    fresh.insert(e, 1);
                } else {
                    *clock.get_mut(&e).unwrap() += t.t_init;
                    fresh.insert(e, 0);
                }
            }
            Gate::Hadamard(_) => {
                if fresh[&e] != 1 {
                    *clock.get_mut(&e).unwrap() += t.t_h;
                }
                fresh.insert(e, 0);
            }
            Gate::CnotEP { photon, .. } => {
                *clock.get_mut(&e).unwrap() += t.t_cnot_ep;
                emit.insert(photon, clock[&e]);
                fresh.insert(e, 0);
            }
            Gate::MeasureZ { .. } => {
                *clock.get_mut(&e).unwrap() += t.t_meas;
                fresh.insert(e, 0);
            }
            Gate::PauliX(_) | Gate::PauliZ(_) | Gate::CondX { .. } => {
                fresh.insert(e, 0);
            }
        }
        queues.get_mut(&e).unwrap().pop_front();
        heap.push(Reverse((clock[&e].to_bits(), e)));
    }
    assert!(waiting.is_empty(), "unmatched emitter-emitter gate");
    let total = clock.values().copied().fold(0.0, f64::max);
    (emit, total)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compiled_circuits_prepare_their_target(g in connected_graph(8), n_e in 1usize..=4, alg in algorithm()) {
        if let Some((depth, c)) = compiled(&g, n_e, alg) {
            prop_assert!(verify_circuit(&c, &g));
            prop_assert!(c.check_architecture().is_ok());
            prop_assert!(c.emitters.len() <= n_e);
            let mut order = c.photon_order.clone();
            order.sort_unstable();
            prop_assert_eq!(order, g.photons().collect::<Vec<_>>());
            let ee = c.forward_gates.iter().filter(|g| g.is_emitter_entangling()).count();
            prop_assert_eq!(depth, c.depth);
            prop_assert!(depth <= ee);
            prop_assert_eq!(depth == 0, ee == 0);
        }
    }

    #[test]
    fn schedule_matches_event_replay(g in connected_graph(8), n_e in 1usize..=4, alg in algorithm(), t in timing()) {
        if let Some((_, c)) = compiled(&g, n_e, alg) {
            let s = emission_schedule(&c, &t).unwrap();
            let (emit, total) = event_oracle(&c, &t);
            prop_assert_eq!(s.emit_time, emit);
            prop_assert_eq!(s.total_time, total);
        }
    }

    #[test]
    fn one_emitter_never_needs_emitter_gates(g in connected_graph(8), alg in algorithm()) {
        if let Some((depth, _)) = compiled(&g, 1, alg) {
            prop_assert_eq!(depth, 0);
        }
    }

    #[test]
    fn greedy_layers_partition_the_gates(pairs in proptest::collection::vec((0u32..6, 0u32..6), 0..20)) {
        let gates: Vec<(u32, u32)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
        let layers = greedy_layers(&gates);
        let mut seen: Vec<(u32, u32)> = layers.iter().flatten().copied().collect();
        let mut all = gates.clone();
        seen.sort_unstable();
        all.sort_unstable();
        prop_assert_eq!(seen, all);
        for layer in &layers {
            let mut qubits: Vec<u32> = layer.iter().flat_map(|&(a, b)| [a, b]).collect();
            let n = qubits.len();
            qubits.sort_unstable();
            qubits.dedup();
            prop_assert_eq!(qubits.len(), n);
        }
        let busiest = (0..6).map(|q| gates.iter().filter(|&&(a, b)| a == q || b == q).count()).max().unwrap_or(0);
        prop_assert!(layers.len() >= busiest);
        prop_assert!(layers.len() <= gates.len());
    }

    #[test]
    fn graph_measurement_matches_the_tableau(g in connected_graph(7), pick in any::<prop::sample::Index>(), basis in prop_oneof![Just(Basis::X), Just(Basis::Y), Just(Basis::Z)], seed in any::<u64>()) {
        let v = pick.index(g.num_vertices()) as VertexId;
        let rule = g.measure_vertex(v, basis).unwrap();
        let mut t = graph_to_tableau(&g);
        t.measure(v, basis, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        t.discard(v).unwrap();
        let rest: Vec<VertexId> = rule.vertices().collect();
        prop_assert!(local_clifford_equivalent(&t, &graph_to_tableau(&rule), &rest, 24).unwrap());
    }

    #[test]
    fn local_complement_is_an_involution(g in connected_graph(8), pick in any::<prop::sample::Index>()) {
        let v = pick.index(g.num_vertices()) as VertexId;
        prop_assert_eq!(g.local_complement(v).unwrap().local_complement(v).unwrap(), g);
    }

    #[test]
    fn less_loss_never_hurts(b in proptest::collection::vec(1usize..4, 1..3), seed_loss in proptest::collection::vec(0.0f64..1.0, 40), pick in any::<prop::sample::Index>(), cut in 0.0f64..1.0) {
        let b = BranchingVector::new(b).unwrap();
        let n = b.tree_size();
        let loss: Vec<f64> = seed_loss.iter().cycle().take(n).copied().collect();
        let mut better = loss.clone();
        let i = pick.index(n);
        better[i] *= cut;
        let (px, pz) = logical_meas_probs(&TreeCode::new(&b, loss).unwrap());
        let (qx, qz) = logical_meas_probs(&TreeCode::new(&b, better).unwrap());
        prop_assert!(qx >= px - 1e-12 && qz >= pz - 1e-12);
        prop_assert!((0.0..=1.0).contains(&px) && (0.0..=1.0).contains(&pz));
    }

    #[test]
    fn emitters_required_is_monotone(t in 0.0f64..1e-4, dt in 0.0f64..1e-5, tau in 1e-9f64..1e-6, n_e in 1usize..100) {
        let base = emitters_required(t, tau, n_e).unwrap();
        prop_assert!(base >= n_e as u64);
        prop_assert_eq!(base % n_e as u64, 0);
        prop_assert!(emitters_required(t + dt, tau, n_e).unwrap() >= base);
        prop_assert!(emitters_required(t, tau, n_e + 1).unwrap() >= base);
    }
}

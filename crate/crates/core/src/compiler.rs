//! Reduction of a target graph to nothing with the time-reversed primitives
//! (Algorithms 1 and 2), reversal into a forward emission circuit, and
//! verification of that circuit on the stabilizer tableau.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphstate::{GraphState, VertexId, VertexKind};
use crate::primitives::{
    aee_in_place, find_absorbable, release_fragment, sfe_in_place, unentangle_in_place, AeeCase,
    BitLabel, Fragment, Gate, UnentangleCase,
};
use crate::tableau::{tableau_equals_graph, PauliFrame, StabilizerTableau};

/// Photons in order of preference as SFE targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialConditions(pub Vec<VertexId>);

impl InitialConditions {
    fn validate(&self, g: &GraphState) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidInit("empty".into()));
        }
        let mut seen = BTreeSet::new();
        for &p in &self.0 {
            if !g.is_photon(p) {
                return Err(Error::InvalidInit(format!("{p} is not a photon of the target")));
            }
            if !seen.insert(p) {
                return Err(Error::InvalidInit(format!("{p} listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// One emitter at a time: SFE, then absorb as much as possible.
    Alg1,
    /// All free emitters SFE together, then absorb in rounds.
    Alg2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnentangleOp {
    pub e1: VertexId,
    pub e2: VertexId,
    pub case: UnentangleCase,
    pub fragment: Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanStep {
    Sfe { emitter: VertexId, photon: VertexId, fragment: Fragment },
    Aee { emitter: VertexId, photon: VertexId, case: AeeCase, fragment: Fragment },
    /// One unentangling step; its gates form one depth-layering unit.
    Unentangle { ops: Vec<UnentangleOp> },
    /// An emitter leaves the graph and becomes free.
    Release { emitter: VertexId, fragment: Fragment },
}

/// Sequence of primitive applications that reduces `target` to nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub target: GraphState,
    pub steps: Vec<PlanStep>,
    pub n_e: usize,
    /// Emitter ids, allocated above every photon id.
    pub emitters: Vec<VertexId>,
    pub algorithm: Algorithm,
}

impl Plan {
    /// Gate lists of the unentangling steps, in plan order.
    pub fn unentangle_steps(&self) -> impl Iterator<Item = Vec<(VertexId, VertexId)>> + '_ {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::Unentangle { ops } => Some(ops.iter().map(|o| (o.e1, o.e2)).collect()),
            _ => None,
        })
    }

    /// Replays the graph rules and checks that the plan ends in the empty
    /// graph with at most `n_e` emitters entangled at any point.
    pub fn replay(&self) -> Result<()> {
        let mut g = self.target.clone();
        let check = |a: &Fragment, b: &Fragment| {
            if a == b {
                Ok(())
            } else {
                Err(Error::NonTerminatingPlan)
            }
        };
        for step in &self.steps {
            match step {
                PlanStep::Sfe { emitter, photon, fragment } => {
                    check(&sfe_in_place(&mut g, *emitter, *photon)?, fragment)?;
                }
                PlanStep::Aee { emitter, photon, fragment, .. } => {
                    check(&aee_in_place(&mut g, *emitter, *photon)?.1, fragment)?;
                }
                PlanStep::Unentangle { ops } => {
                    for op in ops {
                        check(&unentangle_in_place(&mut g, op.e1, op.e2)?.1, &op.fragment)?;
                    }
                }
                PlanStep::Release { emitter, .. } => {
                    if g.contains(*emitter) {
                        if g.degree(*emitter)? != 0 {
                            return Err(Error::EmitterEntangled(*emitter));
                        }
                        g.remove_vertex(*emitter)?;
                    }
                }
            }
            if g.emitters().count() > self.n_e {
                return Err(Error::NonTerminatingPlan);
            }
        }
        if g.is_empty() {
            Ok(())
        } else {
            Err(Error::NonTerminatingPlan)
        }
    }
}

struct Compilation {
    g: GraphState,
    steps: Vec<PlanStep>,
    emitters: Vec<VertexId>,
    free: BTreeSet<VertexId>,
    init: Vec<VertexId>,
}

impl Compilation {
    fn new(g: &GraphState, n_e: usize, init: &InitialConditions) -> Result<Self> {
        if n_e == 0 {
            return Err(Error::InvalidParameter("n_e must be at least 1".into()));
        }
        if let Some(v) = g.emitters().next() {
            return Err(Error::KindMismatch(v, VertexKind::Photon.as_str()));
        }
        init.validate(g)?;
        let base = g.vertices().last().map_or(0, |v| v + 1);
        let emitters: Vec<VertexId> = (0..n_e as VertexId).map(|i| base + i).collect();
        Ok(Self {
            g: g.clone(),
            steps: Vec::new(),
            free: emitters.iter().copied().collect(),
            emitters,
            init: init.0.clone(),
        })
    }

    fn next_init(&mut self) -> Option<VertexId> {
        let g = &self.g;
        self.init.retain(|&p| g.contains(p));
        if self.init.is_empty() {
            None
        } else {
            Some(self.init.remove(0))
        }
    }

    fn sfe(&mut self, e: VertexId, p: VertexId) -> Result<()> {
        let fragment = sfe_in_place(&mut self.g, e, p)?;
        self.free.remove(&e);
        self.steps.push(PlanStep::Sfe { emitter: e, photon: p, fragment });
        Ok(())
    }

    /// Absorbs the first listed photon for `e`, if any.
    fn absorb_one(&mut self, e: VertexId) -> Result<bool> {
        if !self.g.contains(e) {
            return Ok(false);
        }
        let Some(&(p, _)) = find_absorbable(&self.g, e)?.first() else {
            return Ok(false);
        };
        let (case, fragment) = aee_in_place(&mut self.g, e, p)?;
        self.steps.push(PlanStep::Aee { emitter: e, photon: p, case, fragment });
        Ok(true)
    }

    /// Every emitter in the graph absorbs greedily, sweeping until no
    /// emitter can absorb.
    fn absorb_greedy(&mut self) -> Result<()> {
        loop {
            let mut progress = false;
            for e in self.emitters.clone() {
                while self.absorb_one(e)? {
                    progress = true;
                }
            }
            if !progress {
                return Ok(());
            }
        }
    }

    /// Emitters absorb one photon each per round until a round makes no
    /// progress.
    fn absorb_rounds(&mut self) -> Result<()> {
        loop {
            let mut progress = false;
            for e in self.emitters.clone() {
                progress |= self.absorb_one(e)?;
            }
            if !progress {
                return Ok(());
            }
        }
    }

    /// One unentangling step in rounds. Each round removes edges between
    /// emitters (Case 1), then pairs up twin emitters among those not yet
    /// used in the round (Case 2), ascending ids, so the gates of a round
    /// act on disjoint emitters. Rounds repeat until nothing applies.
    /// Returns the number of gates and the emitters removed by Case 2.
    fn unentangle(&mut self) -> Result<(usize, Vec<VertexId>)> {
        let mut ops = Vec::new();
        let mut removed = Vec::new();
        loop {
            let mut used = BTreeSet::new();
            let ems: Vec<VertexId> = self.g.emitters().collect();
            for (i, &a) in ems.iter().enumerate() {
                for &c in &ems[i + 1..] {
                    if !used.contains(&a) && !used.contains(&c) && self.g.has_edge(a, c) {
                        let (case, fragment) = unentangle_in_place(&mut self.g, a, c)?;
                        ops.push(UnentangleOp { e1: a, e2: c, case, fragment });
                        used.extend([a, c]);
                    }
                }
            }
            let ems: Vec<VertexId> = self.g.emitters().collect();
            for (i, &a) in ems.iter().enumerate() {
                for &c in &ems[i + 1..] {
                    if used.contains(&a) || used.contains(&c) || self.g.has_edge(a, c) {
                        continue;
                    }
                    let (na, nc) = (self.g.neighbors(a)?, self.g.neighbors(c)?);
                    if !na.is_empty() && na == nc {
                        let (case, fragment) = unentangle_in_place(&mut self.g, a, c)?;
                        ops.push(UnentangleOp { e1: a, e2: c, case, fragment });
                        removed.push(c);
                        used.extend([a, c]);
                    }
                }
            }
            if used.is_empty() {
                break;
            }
        }
        let n = ops.len();
        if n > 0 {
            self.steps.push(PlanStep::Unentangle { ops });
        }
        Ok((n, removed))
    }

    /// Frees emitters removed by Case 2 and emitters left isolated.
    fn release(&mut self, removed: Vec<VertexId>) -> Result<()> {
        let isolated: Vec<VertexId> =
            self.g.emitters().filter(|&e| self.g.degree(e).unwrap() == 0).collect();
        for e in removed.into_iter().chain(isolated) {
            if self.g.contains(e) {
                self.g.remove_vertex(e)?;
            }
            self.free.insert(e);
            self.steps.push(PlanStep::Release { emitter: e, fragment: release_fragment(e) });
        }
        Ok(())
    }

    fn end_of_pass(&mut self, photons_before: usize) -> Result<()> {
        let (gates, removed) = self.unentangle()?;
        self.release(removed)?;
        let photons = self.g.num_photons();
        if photons == photons_before && gates == 0 {
            return Err(Error::Stuck(photons));
        }
        Ok(())
    }

    fn finish(mut self, n_e: usize, target: &GraphState, algorithm: Algorithm) -> Result<Plan> {
        let (_, removed) = self.unentangle()?;
        self.release(removed)?;
        let plan = Plan { target: target.clone(), steps: self.steps, n_e, emitters: self.emitters, algorithm };
        plan.replay()?;
        Ok(plan)
    }
}

/// Algorithm 1. Each pass lets the emitters already in the graph absorb as
/// many photons as they can; when none can, the lowest-id free emitter is
/// swapped onto the next surviving photon of `init` and absorption resumes.
/// With no free emitter left, the emitters are unentangled and released.
pub fn compile_alg1(g: &GraphState, n_e: usize, init: &InitialConditions) -> Result<Plan> {
    let mut c = Compilation::new(g, n_e, init)?;
    while c.g.num_photons() > 0 {
        let before = c.g.num_photons();
        loop {
            c.absorb_greedy()?;
            let Some(&e) = c.free.iter().next() else { break };
            let Some(p) = c.next_init() else { break };
            c.sfe(e, p)?;
        }
        c.end_of_pass(before)?;
    }
    c.finish(n_e, g, Algorithm::Alg1)
}

/// Algorithm 2. Each pass swaps every free emitter onto the next surviving
/// photons of `init`, lets the emitters absorb one photon each per round
/// until none can, then unentangles and releases.
pub fn compile_alg2(g: &GraphState, n_e: usize, init: &InitialConditions) -> Result<Plan> {
    let mut c = Compilation::new(g, n_e, init)?;
    while c.g.num_photons() > 0 {
        let before = c.g.num_photons();
        for e in c.emitters.clone() {
            if !c.free.contains(&e) {
                continue;
            }
            let Some(p) = c.next_init() else { break };
            c.sfe(e, p)?;
        }
        c.absorb_rounds()?;
        c.end_of_pass(before)?;
    }
    c.finish(n_e, g, Algorithm::Alg2)
}

pub fn compile(g: &GraphState, n_e: usize, init: &InitialConditions, alg: Algorithm) -> Result<Plan> {
    match alg {
        Algorithm::Alg1 => compile_alg1(g, n_e, init),
        Algorithm::Alg2 => compile_alg2(g, n_e, init),
    }
}

/// Forward-time emission circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledCircuit {
    pub forward_gates: Vec<Gate>,
    /// Photons in order of emission.
    pub photon_order: Vec<VertexId>,
    pub n_e: usize,
    pub emitters: Vec<VertexId>,
    /// CNOT depth of the plan the circuit came from.
    pub depth: usize,
}

impl CompiledCircuit {
    /// Classically tracked corrections `(photon, bit)` in circuit order.
    pub fn corrections(&self) -> impl Iterator<Item = (VertexId, BitLabel)> + '_ {
        self.forward_gates.iter().filter_map(|g| match *g {
            Gate::CondX { photon, bit } => Some((photon, bit)),
            _ => None,
        })
    }

    /// The Pauli frame implied by measurement outcomes `bits`.
    pub fn frame_for(&self, bits: &HashMap<BitLabel, bool>) -> PauliFrame {
        let mut frame = PauliFrame::new();
        for (p, b) in self.corrections() {
            if bits.get(&b).copied().unwrap_or(false) {
                frame.add_x(p);
            }
        }
        frame
    }

    pub fn to_document(&self) -> CircuitDocument {
        CircuitDocument {
            n_e: self.n_e,
            emitters: self.emitters.clone(),
            depth: self.depth,
            photon_order: self.photon_order.clone(),
            gates: self
                .forward_gates
                .iter()
                .map(|g| GateRecord { op: g.op_name().to_string(), qubits: g.qubits(), bit_label: g.bit_label() })
                .collect(),
        }
    }

    pub fn from_document(doc: &CircuitDocument) -> Result<Self> {
        let forward_gates = doc
            .gates
            .iter()
            .map(|r| Gate::from_record(&r.op, &r.qubits, r.bit_label))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            forward_gates,
            photon_order: doc.photon_order.clone(),
            n_e: doc.n_e,
            emitters: doc.emitters.clone(),
            depth: doc.depth,
        })
    }

    /// Checks the architecture rules: emitter-only gates touch emitters,
    /// each photon is emitted once from `|0>` and only touched afterwards by
    /// single-qubit gates, and a measured emitter is re-initialized before
    /// its next gate.
    pub fn check_architecture(&self) -> std::result::Result<(), String> {
        let emitters: BTreeSet<VertexId> = self.emitters.iter().copied().collect();
        let mut emitted = BTreeSet::new();
        let mut measured = BTreeSet::new();
        let is_e = |q: VertexId| emitters.contains(&q);
        for (i, g) in self.forward_gates.iter().enumerate() {
            let fail = |why: &str| Err(format!("gate {i} {g}: {why}"));
            for q in g.qubits() {
                if is_e(q) && measured.contains(&q) && !matches!(g, Gate::InitEmitter(_)) {
                    return fail("emitter used after measurement without re-initialization");
                }
            }
            match *g {
                Gate::CnotEE { control, target } if !(is_e(control) && is_e(target)) => {
                    return fail("emitter gate on a photon")
                }
                Gate::CzEE(a, b) if !(is_e(a) && is_e(b)) => return fail("emitter gate on a photon"),
                Gate::CnotEP { emitter, photon } => {
                    if !is_e(emitter) || is_e(photon) {
                        return fail("emission must go from an emitter to a photon");
                    }
                    if !emitted.insert(photon) {
                        return fail("photon emitted twice");
                    }
                }
                Gate::MeasureZ { emitter, .. } => {
                    if !is_e(emitter) {
                        return fail("measurement of a photon");
                    }
                    measured.insert(emitter);
                }
                Gate::InitEmitter(e) => {
                    if !is_e(e) {
                        return fail("initialization of a photon");
                    }
                    measured.remove(&e);
                }
                Gate::CondX { photon, .. } => {
                    if !emitted.contains(&photon) {
                        return fail("correction on a photon not yet emitted");
                    }
                }
                Gate::Hadamard(q) | Gate::PauliX(q) | Gate::PauliZ(q) => {
                    if !is_e(q) && !emitted.contains(&q) {
                        return fail("gate on a photon not yet emitted");
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// On-disk circuit format: ordered gate records plus emission order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitDocument {
    pub n_e: usize,
    pub emitters: Vec<VertexId>,
    pub depth: usize,
    pub photon_order: Vec<VertexId>,
    pub gates: Vec<GateRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateRecord {
    pub op: String,
    pub qubits: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_label: Option<BitLabel>,
}

/// Options for [`reverse_plan_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReverseOptions {
    /// Drop pairs of Hadamards on an emitter with no gate on that emitter in
    /// between.
    pub cancel_hadamards: bool,
}

impl Default for ReverseOptions {
    fn default() -> Self {
        Self { cancel_hadamards: true }
    }
}

/// Forward circuit: forward fragments concatenated in reverse step order,
/// with adjacent emitter Hadamard pairs cancelled.
pub fn reverse_plan(p: &Plan) -> Result<CompiledCircuit> {
    reverse_plan_with(p, ReverseOptions::default())
}

pub fn reverse_plan_with(p: &Plan, opts: ReverseOptions) -> Result<CompiledCircuit> {
    p.replay()?;
    let mut gates = Vec::new();
    for step in p.steps.iter().rev() {
        match step {
            PlanStep::Sfe { fragment, .. }
            | PlanStep::Aee { fragment, .. }
            | PlanStep::Release { fragment, .. } => gates.extend_from_slice(&fragment.forward),
            PlanStep::Unentangle { ops } => {
                for op in ops.iter().rev() {
                    gates.extend_from_slice(&op.fragment.forward);
                }
            }
        }
    }
    if opts.cancel_hadamards {
        let emitters: BTreeSet<VertexId> = p.emitters.iter().copied().collect();
        gates = cancel_hadamards(gates, &emitters);
    }
    let photon_order = gates
        .iter()
        .filter_map(|g| match *g {
            Gate::CnotEP { photon, .. } => Some(photon),
            _ => None,
        })
        .collect();
    Ok(CompiledCircuit {
        forward_gates: gates,
        photon_order,
        n_e: p.n_e,
        emitters: p.emitters.clone(),
        depth: crate::scheduler::cnot_depth(p),
    })
}

fn cancel_hadamards(gates: Vec<Gate>, emitters: &BTreeSet<VertexId>) -> Vec<Gate> {
    let mut keep = vec![true; gates.len()];
    // Per emitter, the indices of surviving gates that touch it.
    let mut history: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
    for (i, g) in gates.iter().enumerate() {
        if let Gate::Hadamard(q) = *g {
            if emitters.contains(&q) {
                let h = history.entry(q).or_default();
                if let Some(&last) = h.last() {
                    if matches!(gates[last], Gate::Hadamard(_)) {
                        keep[last] = false;
                        keep[i] = false;
                        h.pop();
                        continue;
                    }
                }
                h.push(i);
                continue;
            }
        }
        for q in g.qubits() {
            if emitters.contains(&q) {
                history.entry(q).or_default().push(i);
            }
        }
    }
    gates.into_iter().zip(keep).filter(|&(_, k)| k).map(|(g, _)| g).collect()
}

/// Number of measurement branches enumerated exhaustively before switching
/// to sampling.
const EXHAUSTIVE_BITS: usize = 12;
const SAMPLED_BRANCHES: usize = 256;

/// Outcome of [`verify_circuit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub passed: bool,
    pub branches: usize,
    pub exhaustive: bool,
    /// Reason for the first failure, with the stabilizers that differ.
    pub failure: Option<String>,
}

/// Simulates the circuit on the tableau and checks that the photons end in
/// the target graph state after the Pauli frame is applied, for every
/// measurement-outcome branch (sampled when there are more than 12
/// measurements).
pub fn verify_circuit(c: &CompiledCircuit, target: &GraphState) -> bool {
    verify_circuit_report(c, target).passed
}

pub fn verify_circuit_report(c: &CompiledCircuit, target: &GraphState) -> VerifyReport {
    let fail = |why: String| VerifyReport { passed: false, branches: 0, exhaustive: true, failure: Some(why) };
    if let Err(why) = c.check_architecture() {
        return fail(why);
    }
    let photons: BTreeSet<VertexId> = target.photons().collect();
    let emitted: BTreeSet<VertexId> = c.photon_order.iter().copied().collect();
    if photons != emitted || c.photon_order.len() != photons.len() || target.emitters().next().is_some() {
        return fail("emitted photons differ from the target's photons".into());
    }
    let mut labels: Vec<VertexId> = photons.iter().copied().collect();
    labels.extend(c.emitters.iter().copied());
    let Ok(start) = StabilizerTableau::zero_state(&labels) else {
        return fail("emitter ids collide with photon ids".into());
    };
    let n_meas = c.forward_gates.iter().filter(|g| matches!(g, Gate::MeasureZ { .. })).count();
    let mut report = VerifyReport { passed: true, branches: 0, exhaustive: n_meas <= EXHAUSTIVE_BITS, failure: None };
    let check_leaf = |t: StabilizerTableau, bits: &HashMap<BitLabel, bool>| -> std::result::Result<(), String> {
        let mut t = t;
        for &e in &c.emitters {
            t.discard(e).map_err(|err| err.to_string())?;
        }
        let frame = c.frame_for(bits);
        match tableau_equals_graph(&t, target, &frame) {
            Ok(true) => Ok(()),
            Ok(false) => {
                let mut t2 = t.clone();
                t2.apply_frame(&frame).map_err(|e| e.to_string())?;
                let diff = t2.diff(&crate::tableau::graph_to_tableau(target)).unwrap_or_default();
                Err(format!("final state differs; stabilizers not in target: {}", diff.join(" ")))
            }
            Err(e) => Err(e.to_string()),
        }
    };
    let result = if report.exhaustive {
        let mut count = 0;
        let r = branch(c, start, 0, HashMap::new(), &mut |t, bits| {
            count += 1;
            check_leaf(t, bits)
        });
        report.branches = count;
        r
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut r = Ok(());
        for _ in 0..SAMPLED_BRANCHES {
            let mut bits = HashMap::new();
            let mut t = start.clone();
            let mut ok = true;
            for g in &c.forward_gates {
                let forced = rng.random::<bool>();
                match step(&mut t, g, Some(forced), &mut bits) {
                    Ok(_) => {}
                    Err(e) => {
                        r = Err(e.to_string());
                        ok = false;
                        break;
                    }
                }
            }
            report.branches += 1;
            if ok {
                if let Err(e) = check_leaf(t, &bits) {
                    r = Err(e);
                }
            }
            if r.is_err() {
                break;
            }
        }
        r
    };
    if let Err(why) = result {
        report.passed = false;
        report.failure = Some(why);
    }
    report
}

/// Applies one gate. For a random measurement the outcome is `forced`;
/// returns whether the measurement was random.
fn step(
    t: &mut StabilizerTableau,
    g: &Gate,
    forced: Option<bool>,
    bits: &mut HashMap<BitLabel, bool>,
) -> Result<bool> {
    match *g {
        Gate::Hadamard(q) => t.h(q)?,
        Gate::PauliX(q) => t.x(q)?,
        Gate::PauliZ(q) => t.z(q)?,
        Gate::CnotEE { control, target } => t.cnot(control, target)?,
        Gate::CzEE(a, b) => t.cz(a, b)?,
        Gate::CnotEP { emitter, photon } => t.cnot(emitter, photon)?,
        Gate::InitEmitter(e) => t.reset(e)?,
        Gate::CondX { .. } => {}
        Gate::MeasureZ { emitter, bit } => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = t.measure_z(emitter, forced, &mut rng)?;
            bits.insert(bit, out.bit);
            return Ok(!out.deterministic);
        }
    }
    Ok(false)
}

/// Depth-first enumeration of every random measurement outcome.
fn branch(
    c: &CompiledCircuit,
    mut t: StabilizerTableau,
    from: usize,
    mut bits: HashMap<BitLabel, bool>,
    leaf: &mut dyn FnMut(StabilizerTableau, &HashMap<BitLabel, bool>) -> std::result::Result<(), String>,
) -> std::result::Result<(), String> {
    for i in from..c.forward_gates.len() {
        let g = &c.forward_gates[i];
        if let Gate::MeasureZ { emitter, bit } = *g {
            let mut probe = t.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = probe.measure_z(emitter, Some(false), &mut rng).map_err(|e| e.to_string())?;
            if !out.deterministic {
                let mut one = t.clone();
                one.measure_z(emitter, Some(true), &mut rng).map_err(|e| e.to_string())?;
                let mut bits0 = bits.clone();
                bits0.insert(bit, false);
                branch(c, probe, i + 1, bits0, leaf)?;
                bits.insert(bit, true);
                return branch(c, one, i + 1, bits, leaf);
            }
            bits.insert(bit, out.bit);
            t = probe;
            continue;
        }
        step(&mut t, g, None, &mut bits).map_err(|e| e.to_string())?;
    }
    leaf(t, &bits)
}

//! Time-reversed building blocks: absorption by an entangled emitter (AEE),
//! swapping a photon with a free emitter (SFE) and unentangling emitters.
//! Each primitive updates the graph and returns the gates realizing it in
//! reversed time together with their hardware-compatible forward form.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphstate::{GraphState, VertexId, VertexKind};

/// Label of a classical measurement bit.
pub type BitLabel = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    Hadamard(VertexId),
    PauliX(VertexId),
    PauliZ(VertexId),
    CnotEE { control: VertexId, target: VertexId },
    CzEE(VertexId, VertexId),
    /// Emission of `photon` by `emitter` in forward time.
    CnotEP { emitter: VertexId, photon: VertexId },
    MeasureZ { emitter: VertexId, bit: BitLabel },
    InitEmitter(VertexId),
    /// Classically tracked X on `photon` when `bit` reads 1.
    CondX { photon: VertexId, bit: BitLabel },
}

impl Gate {
    /// Qubits the gate acts on, in operand order.
    pub fn qubits(&self) -> Vec<VertexId> {
        match *self {
            Gate::Hadamard(q) | Gate::PauliX(q) | Gate::PauliZ(q) | Gate::InitEmitter(q) => vec![q],
            Gate::CnotEE { control, target } => vec![control, target],
            Gate::CzEE(a, b) => vec![a, b],
            Gate::CnotEP { emitter, photon } => vec![emitter, photon],
            Gate::MeasureZ { emitter, .. } => vec![emitter],
            Gate::CondX { photon, .. } => vec![photon],
        }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Gate::Hadamard(_) => "H",
            Gate::PauliX(_) => "X",
            Gate::PauliZ(_) => "Z",
            Gate::CnotEE { .. } => "CNOT_EE",
            Gate::CzEE(..) => "CZ_EE",
            Gate::CnotEP { .. } => "CNOT_EP",
            Gate::MeasureZ { .. } => "MEASURE_Z",
            Gate::InitEmitter(_) => "INIT",
            Gate::CondX { .. } => "COND_X",
        }
    }

    pub fn bit_label(&self) -> Option<BitLabel> {
        match *self {
            Gate::MeasureZ { bit, .. } | Gate::CondX { bit, .. } => Some(bit),
            _ => None,
        }
    }

    /// True for the emitter-emitter entangling gates that make up CNOT depth.
    pub fn is_emitter_entangling(&self) -> bool {
        matches!(self, Gate::CnotEE { .. } | Gate::CzEE(..))
    }

    /// Rebuilds a gate from its document record.
    pub fn from_record(op: &str, qubits: &[VertexId], bit: Option<BitLabel>) -> Result<Gate> {
        let need = |k: usize| -> Result<()> {
            if qubits.len() == k {
                Ok(())
            } else {
                Err(Error::Parse(format!("{op} expects {k} qubits, got {}", qubits.len())))
            }
        };
        let need_bit = || bit.ok_or_else(|| Error::Parse(format!("{op} requires bit_label")));
        Ok(match op {
            "H" => {
                need(1)?;
                Gate::Hadamard(qubits[0])
            }
            "X" => {
                need(1)?;
                Gate::PauliX(qubits[0])
            }
            "Z" => {
                need(1)?;
                Gate::PauliZ(qubits[0])
            }
            "CNOT_EE" => {
                need(2)?;
                Gate::CnotEE { control: qubits[0], target: qubits[1] }
            }
            "CZ_EE" => {
                need(2)?;
                Gate::CzEE(qubits[0], qubits[1])
            }
            "CNOT_EP" => {
                need(2)?;
                Gate::CnotEP { emitter: qubits[0], photon: qubits[1] }
            }
            "MEASURE_Z" => {
                need(1)?;
                Gate::MeasureZ { emitter: qubits[0], bit: need_bit()? }
            }
            "INIT" => {
                need(1)?;
                Gate::InitEmitter(qubits[0])
            }
            "COND_X" => {
                need(1)?;
                Gate::CondX { photon: qubits[0], bit: need_bit()? }
            }
            other => return Err(Error::Parse(format!("unknown gate '{other}'"))),
        })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.op_name())?;
        for (i, q) in self.qubits().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{q}")?;
        }
        if let Some(b) = self.bit_label() {
            write!(f, ";m{b}")?;
        }
        write!(f, ")")
    }
}

/// Gates realizing one primitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    /// Gates in reversed time, acting on the graph being reduced.
    pub reversed: Vec<Gate>,
    /// Hardware-compatible gates in forward time.
    pub forward: Vec<Gate>,
    pub touched: BTreeSet<VertexId>,
}

impl Fragment {
    fn new(reversed: Vec<Gate>, forward: Vec<Gate>) -> Self {
        let touched = reversed.iter().chain(&forward).flat_map(|g| g.qubits()).collect();
        Self { reversed, forward, touched }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AeeCase {
    /// `N(e) = {p}`.
    Case1,
    /// `N(p) = {e}`.
    Case2,
    /// `N(p) = N(e)`, nonempty.
    Case3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnentangleCase {
    /// Edge `{e1, e2}` present.
    Case1,
    /// `N(e1) = N(e2)`, nonempty.
    Case2,
}

fn expect_kind(g: &GraphState, v: VertexId, kind: VertexKind) -> Result<()> {
    if g.kind(v)? == kind {
        Ok(())
    } else {
        Err(Error::KindMismatch(v, kind.as_str()))
    }
}

/// Which AEE case, if any, lets emitter `e` absorb photon `p`.
pub fn classify_aee(g: &GraphState, e: VertexId, p: VertexId) -> Result<Option<AeeCase>> {
    expect_kind(g, e, VertexKind::Emitter)?;
    expect_kind(g, p, VertexKind::Photon)?;
    Ok(classify_unchecked(g, e, p))
}

fn classify_unchecked(g: &GraphState, e: VertexId, p: VertexId) -> Option<AeeCase> {
    let ne = g.neighbors(e).ok()?;
    let np = g.neighbors(p).ok()?;
    // An isolated pair satisfies both Case 1 and Case 2 and gets Case 2,
    // whose forward Hadamard lands on the photon instead of the emitter.
    if np.len() == 1 && np.contains(&e) {
        Some(AeeCase::Case2)
    } else if ne.len() == 1 && ne.contains(&p) {
        Some(AeeCase::Case1)
    } else if !np.is_empty() && np == ne {
        Some(AeeCase::Case3)
    } else {
        None
    }
}

fn aee_fragment(case: AeeCase, e: VertexId, p: VertexId) -> Fragment {
    use Gate::{CnotEP, Hadamard as H};
    let cnot = CnotEP { emitter: e, photon: p };
    match case {
        AeeCase::Case1 => Fragment::new(vec![H(e), cnot], vec![cnot, H(e)]),
        AeeCase::Case2 => Fragment::new(vec![H(p), cnot], vec![cnot, H(p)]),
        AeeCase::Case3 => Fragment::new(vec![H(p), H(e), cnot, H(e)], vec![H(e), cnot, H(p), H(e)]),
    }
}

/// In-place AEE; see [`apply_aee`].
pub fn aee_in_place(g: &mut GraphState, e: VertexId, p: VertexId) -> Result<(AeeCase, Fragment)> {
    let case = classify_aee(g, e, p)?.ok_or(Error::NotAbsorbable { e, p })?;
    if case == AeeCase::Case1 {
        let inherit: Vec<VertexId> = g.neighbors(p)?.iter().copied().filter(|&q| q != e).collect();
        for q in inherit {
            g.toggle_edge(e, q)?;
        }
    }
    g.remove_vertex(p)?;
    Ok((case, aee_fragment(case, e, p)))
}

/// Emitter `e` absorbs photon `p`. Case 1 moves the neighbors of `p` onto
/// `e`; all cases delete `p`, which is left in `|0>`.
pub fn apply_aee(g: &GraphState, e: VertexId, p: VertexId) -> Result<(GraphState, Fragment)> {
    let mut h = g.clone();
    let (_, frag) = aee_in_place(&mut h, e, p)?;
    Ok((h, frag))
}

/// The SFE fragment, with measurement bit labeled by the photon id.
pub fn sfe_fragment(e: VertexId, p: VertexId) -> Fragment {
    use Gate::{CnotEP, Hadamard as H};
    let cnot = CnotEP { emitter: e, photon: p };
    Fragment::new(
        vec![H(e), cnot, H(p), H(e), cnot, H(e)],
        vec![
            H(e),
            cnot,
            H(e),
            H(p),
            Gate::MeasureZ { emitter: e, bit: p },
            Gate::CondX { photon: p, bit: p },
        ],
    )
}

/// In-place SFE; see [`apply_sfe`].
pub fn sfe_in_place(g: &mut GraphState, e: VertexId, p: VertexId) -> Result<Fragment> {
    expect_kind(g, p, VertexKind::Photon)?;
    if g.contains(e) {
        expect_kind(g, e, VertexKind::Emitter)?;
        if g.degree(e)? != 0 {
            return Err(Error::EmitterEntangled(e));
        }
        g.remove_vertex(e)?;
    }
    let nbrs: Vec<VertexId> = g.neighbors(p)?.iter().copied().collect();
    g.remove_vertex(p)?;
    g.add_vertex(e, VertexKind::Emitter)?;
    for q in nbrs {
        g.add_edge(e, q)?;
    }
    Ok(sfe_fragment(e, p))
}

/// Free emitter `e` takes the place of photon `p`, which is left in `|0>`.
/// `e` must be absent from `g` or present with degree zero.
pub fn apply_sfe(g: &GraphState, e: VertexId, p: VertexId) -> Result<(GraphState, Fragment)> {
    let mut h = g.clone();
    let frag = sfe_in_place(&mut h, e, p)?;
    Ok((h, frag))
}

/// Which unentangling case applies to the emitter pair.
pub fn classify_unentangle(
    g: &GraphState,
    e1: VertexId,
    e2: VertexId,
) -> Result<Option<UnentangleCase>> {
    expect_kind(g, e1, VertexKind::Emitter)?;
    expect_kind(g, e2, VertexKind::Emitter)?;
    if e1 == e2 {
        return Ok(None);
    }
    if g.has_edge(e1, e2) {
        return Ok(Some(UnentangleCase::Case1));
    }
    let (n1, n2) = (g.neighbors(e1)?, g.neighbors(e2)?);
    if !n1.is_empty() && n1 == n2 {
        Ok(Some(UnentangleCase::Case2))
    } else {
        Ok(None)
    }
}

/// In-place unentangling; see [`apply_unentangle`].
pub fn unentangle_in_place(
    g: &mut GraphState,
    e1: VertexId,
    e2: VertexId,
) -> Result<(UnentangleCase, Fragment)> {
    let case = classify_unentangle(g, e1, e2)?.ok_or(Error::NotUnentangleable(e1, e2))?;
    let frag = match case {
        UnentangleCase::Case1 => {
            g.toggle_edge(e1, e2)?;
            let gate = Gate::CzEE(e1, e2);
            Fragment::new(vec![gate], vec![gate])
        }
        UnentangleCase::Case2 => {
            g.remove_vertex(e2)?;
            let gate = Gate::CnotEE { control: e2, target: e1 };
            Fragment::new(vec![gate], vec![gate])
        }
    };
    Ok((case, frag))
}

/// Case 1 removes edge `{e1, e2}` with a CZ. Case 2 disentangles `e2` into
/// `|+>` with a CNOT controlled by `e2` and removes it from the graph.
pub fn apply_unentangle(
    g: &GraphState,
    e1: VertexId,
    e2: VertexId,
) -> Result<(GraphState, Fragment)> {
    let mut h = g.clone();
    let (_, frag) = unentangle_in_place(&mut h, e1, e2)?;
    Ok((h, frag))
}

/// Returns an emitter in `|+>` to `|0>` so it is free again. Forward time
/// prepares it with an initialization followed by a Hadamard.
pub fn release_fragment(e: VertexId) -> Fragment {
    Fragment::new(vec![Gate::Hadamard(e)], vec![Gate::InitEmitter(e), Gate::Hadamard(e)])
}

/// Photons emitter `e` can absorb right now, Case 1 first, then Case 2, then
/// Case 3, ties by ascending id.
pub fn find_absorbable(g: &GraphState, e: VertexId) -> Result<Vec<(VertexId, AeeCase)>> {
    expect_kind(g, e, VertexKind::Emitter)?;
    let ne = g.neighbors(e)?;
    let mut candidates: BTreeSet<VertexId> = ne.clone();
    // Case 3 partners share the neighborhood of e, so they neighbor any x in N(e).
    if let Some(&x) = ne.iter().next() {
        candidates.extend(g.neighbors(x)?.iter().copied());
    }
    let mut out: Vec<(VertexId, AeeCase)> = candidates
        .into_iter()
        .filter(|&p| p != e && g.is_photon(p))
        .filter_map(|p| classify_unchecked(g, e, p).map(|c| (p, c)))
        .collect();
    out.sort_by_key(|&(p, c)| (c, p));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tableau::{graph_to_tableau, StabilizerTableau};

    fn emitter_graph(photons: u32, emitters: &[VertexId], edges: &[(VertexId, VertexId)]) -> GraphState {
        let mut g = GraphState::new();
        for v in 0..photons {
            g.add_vertex(v, VertexKind::Photon).unwrap();
        }
        for &e in emitters {
            g.add_vertex(e, VertexKind::Emitter).unwrap();
        }
        for &(u, v) in edges {
            g.add_edge(u, v).unwrap();
        }
        g
    }

    fn apply(t: &mut StabilizerTableau, gates: &[Gate]) {
        for g in gates {
            match *g {
                Gate::Hadamard(q) => t.h(q).unwrap(),
                Gate::CnotEP { emitter, photon } => t.cnot(emitter, photon).unwrap(),
                Gate::CnotEE { control, target } => t.cnot(control, target).unwrap(),
                Gate::CzEE(a, b) => t.cz(a, b).unwrap(),
                _ => panic!("unexpected gate in reversed fragment"),
            }
        }
    }

    fn plus(q: VertexId) -> StabilizerTableau {
        let mut t = StabilizerTableau::zero_state(&[q]).unwrap();
        t.h(q).unwrap();
        t
    }

    #[test]
    fn fig4_case1_then_case2() {
        // 1_e (id 20) hangs off 4_p, which connects to 1_p and 10_p.
        let g = emitter_graph(11, &[20], &[(20, 4), (4, 1), (4, 10)]);
        assert_eq!(classify_aee(&g, 20, 4).unwrap(), Some(AeeCase::Case1));
        let (h, _) = apply_aee(&g, 20, 4).unwrap();
        let n: Vec<_> = h.neighbors(20).unwrap().iter().copied().collect();
        assert_eq!(n, vec![1, 10]);
        assert_eq!(classify_aee(&h, 20, 10).unwrap(), Some(AeeCase::Case2));
    }

    #[test]
    fn fig5_case3() {
        let g = emitter_graph(4, &[20], &[(20, 2), (20, 3), (1, 2), (1, 3)]);
        assert_eq!(classify_aee(&g, 20, 1).unwrap(), Some(AeeCase::Case3));
        let (h, _) = apply_aee(&g, 20, 1).unwrap();
        assert!(!h.contains(1));
        assert_eq!(h.degree(20).unwrap(), 2);
    }

    #[test]
    fn two_vertex_component_prefers_case2() {
        let g = emitter_graph(1, &[20], &[(20, 0)]);
        assert_eq!(find_absorbable(&g, 20).unwrap(), vec![(0, AeeCase::Case2)]);
        let lone = emitter_graph(1, &[20], &[]);
        assert!(find_absorbable(&lone, 20).unwrap().is_empty());
        assert_eq!(classify_aee(&g, 0, 20), Err(Error::KindMismatch(0, "emitter")));
        assert_eq!(apply_aee(&lone, 20, 0), Err(Error::NotAbsorbable { e: 20, p: 0 }));
    }

    #[test]
    fn sfe_replaces_hub() {
        let g = GraphState::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let (h, frag) = apply_sfe(&g, 20, 0).unwrap();
        assert!(!h.contains(0));
        assert_eq!(h.degree(20).unwrap(), 3);
        assert_eq!(frag.forward.len(), 6);
        let busy = emitter_graph(2, &[20], &[(20, 1)]);
        assert_eq!(apply_sfe(&busy, 20, 0), Err(Error::EmitterEntangled(20)));
    }

    #[test]
    fn unentangle_cases() {
        let g = emitter_graph(1, &[20, 21], &[(20, 21)]);
        assert_eq!(classify_unentangle(&g, 20, 21).unwrap(), Some(UnentangleCase::Case1));
        let (h, frag) = apply_unentangle(&g, 20, 21).unwrap();
        assert_eq!(h.num_edges(), 0);
        assert_eq!(frag.forward, vec![Gate::CzEE(20, 21)]);
        let twins = emitter_graph(1, &[20, 21], &[(20, 0), (21, 0)]);
        assert_eq!(classify_unentangle(&twins, 20, 21).unwrap(), Some(UnentangleCase::Case2));
        let (h, _) = apply_unentangle(&twins, 20, 21).unwrap();
        assert!(!h.contains(21));
        let apart = emitter_graph(2, &[20, 21], &[(20, 0), (21, 1)]);
        assert_eq!(classify_unentangle(&apart, 20, 21).unwrap(), None);
    }

    #[test]
    fn reversed_circuits_match_graph_rules() {
        // Case 1, Case 2, Case 3 of AEE on small graphs.
        let cases = [
            (emitter_graph(3, &[20], &[(20, 0), (0, 1), (0, 2)]), 0),
            (emitter_graph(3, &[20], &[(20, 0), (20, 1), (1, 2)]), 0),
            (emitter_graph(4, &[20], &[(20, 2), (20, 3), (1, 2), (1, 3), (2, 3)]), 1),
        ];
        for (g, p) in cases {
            let (h, frag) = apply_aee(&g, 20, p).unwrap();
            let mut t = graph_to_tableau(&g);
            apply(&mut t, &frag.reversed);
            let expected = graph_to_tableau(&h).tensor(&StabilizerTableau::zero_state(&[p]).unwrap()).unwrap();
            assert!(t.same_state(&expected).unwrap(), "AEE on {g}");
        }
        // SFE: free emitter starts in |0>.
        let g = GraphState::from_edges(4, &[(0, 1), (0, 2), (1, 3)]).unwrap();
        let (h, frag) = apply_sfe(&g, 20, 0).unwrap();
        let mut t = graph_to_tableau(&g).tensor(&StabilizerTableau::zero_state(&[20]).unwrap()).unwrap();
        apply(&mut t, &frag.reversed);
        let expected = graph_to_tableau(&h).tensor(&StabilizerTableau::zero_state(&[0]).unwrap()).unwrap();
        assert!(t.same_state(&expected).unwrap());
        // Unentangle Case 2 leaves e2 in |+>.
        let g = emitter_graph(2, &[20, 21], &[(20, 0), (21, 0), (20, 1), (21, 1)]);
        let (h, frag) = apply_unentangle(&g, 20, 21).unwrap();
        let mut t = graph_to_tableau(&g);
        apply(&mut t, &frag.reversed);
        let expected = graph_to_tableau(&h).tensor(&plus(21)).unwrap();
        assert!(t.same_state(&expected).unwrap());
    }

    #[test]
    fn k3_of_emitters_fully_unentangles() {
        let mut g = emitter_graph(0, &[20, 21, 22], &[(20, 21), (21, 22), (20, 22)]);
        let mut t = graph_to_tableau(&g);
        for (a, b) in [(20, 21), (20, 22), (21, 22)] {
            let (_, frag) = unentangle_in_place(&mut g, a, b).unwrap();
            apply(&mut t, &frag.reversed);
        }
        assert_eq!(g.num_edges(), 0);
        let product = plus(20).tensor(&plus(21)).unwrap().tensor(&plus(22)).unwrap();
        assert!(t.same_state(&product).unwrap());
    }
}

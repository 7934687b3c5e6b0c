//! CNOT depth by greedy layering, emission-time counters, SiV CNOT timing,
//! and the GHZ generation-time closed forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compiler::{CompiledCircuit, Plan};
use crate::error::{Error, Result};
use crate::graphstate::VertexId;
use crate::primitives::Gate;

/// Durations of the five hardware operations, in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    #[serde(rename = "t_H")]
    pub t_h: f64,
    pub t_cnot_ep: f64,
    pub t_cnot_ee: f64,
    pub t_meas: f64,
    pub t_init: f64,
}

impl Default for TimingModel {
    /// SiV-like timings; `t_cnot_ep` has no quoted hardware value and
    /// defaults to `t_H`.
    fn default() -> Self {
        Self { t_h: 15.0, t_cnot_ep: 15.0, t_cnot_ee: 180.0, t_meas: 45.0, t_init: 15.0 }
    }
}

impl TimingModel {
    pub fn zero() -> Self {
        Self { t_h: 0.0, t_cnot_ep: 0.0, t_cnot_ee: 0.0, t_meas: 0.0, t_init: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t_h, self.t_cnot_ep, self.t_cnot_ee, self.t_meas, self.t_init];
        if all.iter().all(|t| t.is_finite() && *t >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("timings must be finite and non-negative".into()))
        }
    }

    /// Parses a TOML key-value document.
    pub fn parse(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Component durations of the SiV-mediated emitter-emitter CNOT, in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SivTiming {
    pub t_swap: f64,
    pub t_init: f64,
    #[serde(rename = "t_H")]
    pub t_h: f64,
    pub t_ex: f64,
    #[serde(rename = "t_X")]
    pub t_x: f64,
    #[serde(rename = "t_Z")]
    pub t_z: f64,
    pub t_cnot_ne: f64,
    pub t_cnot_en: f64,
    pub t_meas_z: f64,
    pub t_meas_x: f64,
    pub p_bsm: f64,
}

/// Emission times per photon and total generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionSchedule {
    pub emit_time: BTreeMap<VertexId, f64>,
    pub total_time: f64,
    pub depth: usize,
}

/// Greedy layers of each unentangling step: within a step, each round takes
/// every remaining gate whose emitters are untouched so far in the round,
/// scanning in plan order.
pub fn depth_trace(p: &Plan) -> Vec<Vec<Vec<(VertexId, VertexId)>>> {
    p.unentangle_steps().map(|gates| greedy_layers(&gates)).collect()
}

pub fn greedy_layers(gates: &[(VertexId, VertexId)]) -> Vec<Vec<(VertexId, VertexId)>> {
    let mut rest = gates.to_vec();
    let mut layers = Vec::new();
    while !rest.is_empty() {
        let mut used = Vec::new();
        let mut layer = Vec::new();
        let mut next = Vec::new();
        for (a, b) in rest {
            if used.contains(&a) || used.contains(&b) {
                next.push((a, b));
            } else {
                used.extend([a, b]);
                layer.push((a, b));
            }
        }
        layers.push(layer);
        rest = next;
    }
    layers
}

/// Number of greedy layers summed over all unentangling steps.
pub fn cnot_depth(p: &Plan) -> usize {
    depth_trace(p).iter().map(Vec::len).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EmitterState {
    /// Never initialized; its first initialization and the Hadamard that
    /// follows prepare the `|+>` start state and take no time.
    Unused,
    Prepared,
    Active,
    Measured,
}

/// Replays the circuit with one time counter per emitter.
///
/// Emitters start in `|+>` at time 0. A Hadamard on an emitter costs `t_H`,
/// an emission `t_cnot_ep` (the photon's emission time is the counter after
/// it), a measurement `t_meas`, a re-initialization `t_init`. An
/// emitter-emitter gate first synchronizes both counters to their maximum.
/// Gates on photons other than emission, and classical corrections, are
/// free.
pub fn emission_schedule(c: &CompiledCircuit, t: &TimingModel) -> Result<EmissionSchedule> {
    t.validate()?;
    let mut clock: BTreeMap<VertexId, f64> = c.emitters.iter().map(|&e| (e, 0.0)).collect();
    let mut state: BTreeMap<VertexId, EmitterState> =
        c.emitters.iter().map(|&e| (e, EmitterState::Unused)).collect();
    let mut emit_time = BTreeMap::new();

    let live = |state: &BTreeMap<VertexId, EmitterState>, e: VertexId| match state.get(&e) {
        None => Err(Error::KindMismatch(e, "emitter")),
        Some(EmitterState::Measured) => Err(Error::RetiredEmitter(e)),
        Some(_) => Ok(()),
    };

    for g in &c.forward_gates {
        match *g {
            Gate::InitEmitter(e) => match state.get(&e) {
                None => return Err(Error::KindMismatch(e, "emitter")),
                Some(EmitterState::Unused) => {
                    state.insert(e, EmitterState::Prepared);
                }
                Some(EmitterState::Measured) => {
                    *clock.get_mut(&e).unwrap() += t.t_init;
                    state.insert(e, EmitterState::Active);
                }
                Some(_) => {
                    *clock.get_mut(&e).unwrap() += t.t_init;
                }
            },
            Gate::Hadamard(q) | Gate::PauliX(q) | Gate::PauliZ(q) => {
                if let Some(s) = state.get(&q).copied() {
                    live(&state, q)?;
                    if matches!(g, Gate::Hadamard(_)) && s != EmitterState::Prepared {
                        *clock.get_mut(&q).unwrap() += t.t_h;
                    }
                    state.insert(q, EmitterState::Active);
                }
            }
            Gate::CnotEE { control: a, target: b } | Gate::CzEE(a, b) => {
                live(&state, a)?;
                live(&state, b)?;
                let start = clock[&a].max(clock[&b]);
                clock.insert(a, start + t.t_cnot_ee);
                clock.insert(b, start + t.t_cnot_ee);
                state.insert(a, EmitterState::Active);
                state.insert(b, EmitterState::Active);
            }
            Gate::CnotEP { emitter, photon } => {
                live(&state, emitter)?;
                let c = clock.get_mut(&emitter).unwrap();
                *c += t.t_cnot_ep;
                emit_time.insert(photon, *c);
                state.insert(emitter, EmitterState::Active);
            }
            Gate::MeasureZ { emitter, .. } => {
                live(&state, emitter)?;
                *clock.get_mut(&emitter).unwrap() += t.t_meas;
                state.insert(emitter, EmitterState::Measured);
            }
            Gate::CondX { .. } => {}
        }
    }
    let total_time = clock.values().copied().fold(0.0, f64::max);
    Ok(EmissionSchedule { emit_time, total_time, depth: c.depth })
}

/// Duration of one emitter-emitter CNOT mediated by photonic Bell-state
/// measurements between SiV centers.
pub fn siv_cnot_time(s: &SivTiming) -> Result<f64> {
    if !(s.p_bsm > 0.0 && s.p_bsm <= 1.0) {
        return Err(Error::InvalidParameter(format!("p_bsm must lie in (0, 1], got {}", s.p_bsm)));
    }
    let t_ph = s.t_init + s.t_h + 2.0 * s.t_ex + s.t_x;
    let t_bsm = t_ph / s.p_bsm + s.t_x.max(s.t_z);
    Ok(s.t_swap + t_bsm + (s.t_cnot_ne + s.t_meas_z).max(s.t_cnot_en + s.t_meas_x) + s.t_swap)
}

/// Closed-form time to generate an m-photon GHZ-equivalent star with `n`
/// emitters.
pub fn ghz_time(m: usize, n: usize, t: &TimingModel) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let ee = match n {
        1 => 0.0,
        2 => 1.0,
        _ => 2.0,
    };
    Ok(2.0 * t.t_h + t.t_meas + m.div_ceil(n) as f64 * t.t_cnot_ep + ee * t.t_cnot_ee)
}

/// Break-even analysis for GHZ generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhzBreakeven {
    pub m: usize,
    /// `t_cnot_ee / t_cnot_ep`.
    pub ratio: f64,
    /// Emitter count minimizing `ghz_time`, ties broken towards fewer.
    pub optimal_n: usize,
    pub optimal_time: f64,
    /// `floor(m/2) >= r`: two emitters beat one.
    pub two_beats_one: bool,
    /// `ceil(m/2) - ceil(m/3) >= r`: three emitters beat two.
    pub three_beats_two: bool,
    /// The regime stated in prose for `r = 10`, when applicable.
    pub prose_regime: Option<String>,
    /// Whether the prose regime disagrees with `optimal_n`.
    pub prose_disagrees: bool,
}

pub fn ghz_breakeven(t: &TimingModel, m: usize) -> Result<GhzBreakeven> {
    if !(t.t_cnot_ep > 0.0) {
        return Err(Error::InvalidParameter("t_cnot_ep must be positive".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let r = t.t_cnot_ee / t.t_cnot_ep;
    let mut best = (1, ghz_time(m, 1, t)?);
    for n in 2..=m {
        let time = ghz_time(m, n, t)?;
        if time < best.1 {
            best = (n, time);
        }
    }
    let (prose_regime, prose_disagrees) = if r == 10.0 {
        let (text, ok) = if m <= 10 {
            ("m <= 10: one emitter", best.0 == 1)
        } else if m < 60 {
            ("10 < m <= 60: two emitters", best.0 == 2)
        } else {
            ("m >= 60: up to m emitters", best.0 >= 3)
        };
        (Some(text.to_string()), !ok)
    } else {
        (None, false)
    };
    Ok(GhzBreakeven {
        m,
        ratio: r,
        optimal_n: best.0,
        optimal_time: best.1,
        two_beats_one: (m / 2) as f64 >= r,
        three_beats_two: (m.div_ceil(2) - m.div_ceil(3)) as f64 >= r,
        prose_regime,
        prose_disagrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_alg2, reverse_plan, InitialConditions};
    use crate::graphstate::GraphState;
    use Gate::*;

    fn t(h: f64, ep: f64, ee: f64, meas: f64, init: f64) -> TimingModel {
        TimingModel { t_h: h, t_cnot_ep: ep, t_cnot_ee: ee, t_meas: meas, t_init: init }
    }

    #[test]
    fn greedy_layering() {
        assert_eq!(greedy_layers(&[]), Vec::<Vec<(u32, u32)>>::new());
        let l = greedy_layers(&[(1, 2), (2, 3), (3, 4), (1, 4)]);
        assert_eq!(l, vec![vec![(1, 2), (3, 4)], vec![(2, 3), (1, 4)]]);
        assert_eq!(greedy_layers(&[(1, 2), (1, 3), (1, 4)]).len(), 3);
    }

    #[test]
    fn single_sfe_emission_time() {
        let c = CompiledCircuit {
            forward_gates: vec![
                InitEmitter(1),
                Hadamard(1),
                CnotEP { emitter: 1, photon: 0 },
                Hadamard(0),
                MeasureZ { emitter: 1, bit: 0 },
                CondX { photon: 0, bit: 0 },
            ],
            photon_order: vec![0],
            n_e: 1,
            emitters: vec![1],
            depth: 0,
        };
        let s = emission_schedule(&c, &t(15.0, 10.0, 180.0, 45.0, 15.0)).unwrap();
        assert_eq!(s.emit_time[&0], 10.0);
        assert_eq!(s.total_time, 55.0);
        let z = emission_schedule(&c, &TimingModel::zero()).unwrap();
        assert!(z.emit_time.values().all(|&v| v == 0.0));
    }

    #[test]
    fn gate_after_measurement_is_rejected() {
        let c = CompiledCircuit {
            forward_gates: vec![MeasureZ { emitter: 1, bit: 0 }, Hadamard(1)],
            photon_order: vec![],
            n_e: 1,
            emitters: vec![1],
            depth: 0,
        };
        assert_eq!(emission_schedule(&c, &TimingModel::default()), Err(Error::RetiredEmitter(1)));
    }

    #[test]
    fn siv_arithmetic() {
        let mut s = SivTiming {
            t_swap: 1.0,
            t_init: 1.0,
            t_h: 1.0,
            t_ex: 1.0,
            t_x: 1.0,
            t_z: 1.0,
            t_cnot_ne: 1.0,
            t_cnot_en: 1.0,
            t_meas_z: 1.0,
            t_meas_x: 1.0,
            p_bsm: 1.0,
        };
        assert_eq!(siv_cnot_time(&s).unwrap(), 10.0);
        s.p_bsm = 0.5;
        assert_eq!(siv_cnot_time(&s).unwrap(), 15.0);
        s.p_bsm = 0.0;
        assert!(siv_cnot_time(&s).is_err());
    }

    #[test]
    fn ghz_closed_forms() {
        let tm = t(1.0, 10.0, 100.0, 5.0, 0.0);
        assert_eq!(ghz_time(4, 2, &tm).unwrap(), 127.0);
        assert_eq!(ghz_time(7, 5, &TimingModel::zero()).unwrap(), 0.0);
        assert!(ghz_time(3, 0, &tm).is_err());
        assert_eq!(ghz_time(12, 4, &tm).unwrap() - ghz_time(12, 6, &tm).unwrap(), 10.0);
    }

    #[test]
    fn breakeven_regimes() {
        let tm = t(15.0, 10.0, 100.0, 45.0, 15.0);
        let b = ghz_breakeven(&tm, 10).unwrap();
        assert_eq!(b.optimal_n, 1);
        assert!(!b.prose_disagrees);
        let b = ghz_breakeven(&tm, 30).unwrap();
        assert_eq!(b.optimal_n, 30);
        assert!(b.two_beats_one);
        assert!(b.prose_disagrees);
        // The prose places m = 15 in the two-emitter regime; the closed
        // forms still favour one emitter.
        let b = ghz_breakeven(&tm, 15).unwrap();
        assert_eq!(b.optimal_n, 1);
        assert!(b.prose_disagrees);
        let free = t(15.0, 10.0, 0.0, 45.0, 15.0);
        assert_eq!(ghz_breakeven(&free, 9).unwrap().optimal_n, 9);
        assert_eq!(ghz_breakeven(&tm, 1).unwrap().optimal_n, 1);
    }

    #[test]
    fn timing_config_parses() {
        let tm = TimingModel::parse("t_H = 15\nt_cnot_ep = 15\nt_cnot_ee = 180\nt_meas = 45\nt_init = 15\n").unwrap();
        assert_eq!(tm, TimingModel::default());
        assert!(TimingModel::parse("t_H = -1\nt_cnot_ep = 15\nt_cnot_ee = 180\nt_meas = 45\nt_init = 15\n").is_err());
    }

    #[test]
    fn star_with_two_emitters_matches_closed_form() {
        let edges: Vec<_> = (1..4).map(|i| (0, i)).collect();
        let g = GraphState::from_edges(4, &edges).unwrap();
        let plan = compile_alg2(&g, 2, &InitialConditions(vec![0, 1, 2, 3])).unwrap();
        let c = reverse_plan(&plan).unwrap();
        let tm = t(15.0, 10.0, 180.0, 45.0, 15.0);
        let s = emission_schedule(&c, &tm).unwrap();
        assert_eq!(s.total_time, ghz_time(4, 2, &tm).unwrap());
        assert_eq!(s.depth, 1);
    }
}

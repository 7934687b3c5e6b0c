//! Loss model over emission schedules, analytic and Monte Carlo rates of an
//! all-photonic repeater chain, staggered-generation resource counts, and
//! rate-versus-distance envelopes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{compile, reverse_plan, Algorithm, CompiledCircuit, InitialConditions};
use crate::error::{Error, Result};
use crate::graphstate::VertexId;
use crate::rgs::{
    build_rgs, logical_meas_probs, logical_x_ok, logical_z_ok, BranchingVector, RgsState, TreeCode,
};
use crate::scheduler::{emission_schedule, EmissionSchedule, TimingModel};

/// Fiber and coupling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Fiber attenuation, 1/km.
    pub alpha: f64,
    /// Speed of light in fiber, km/s.
    pub c_f: f64,
    /// Chip-to-fiber coupling efficiency.
    pub eta_c: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { alpha: 0.046, c_f: 2e5, eta_c: 0.99 }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.c_f > 0.0 && self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(Error::InvalidParameter("channel requires alpha >= 0, c_f > 0, eta_c in (0, 1]".into()));
        }
        Ok(())
    }

    /// Fiber transmissivity over `l_km`.
    pub fn transmissivity(&self, l_km: f64) -> f64 {
        (-self.alpha * l_km).exp()
    }
}

/// Repeater chain parameters. Distances in km, `tau` in seconds, timings in
/// ns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeaterConfig {
    /// End-to-end distance, km.
    #[serde(rename = "L", default)]
    pub l_km: f64,
    /// Number of repeaters.
    #[serde(default)]
    pub n: usize,
    /// Multiplexing: links per side of each RGS.
    pub m: usize,
    pub b: BranchingVector,
    /// Emitters per RGS copy.
    pub n_e: usize,
    /// Repetition period, s.
    pub tau: f64,
    pub p_bsm: f64,
    #[serde(default)]
    pub timing: TimingModel,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub convention: RateConvention,
}

/// How repetitions map to channel uses when reporting envelope rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// One RGS copy per period `tau` (staggered generation).
    #[default]
    PerRepetition,
    /// One RGS copy per generation time `T_{n_e}` when that exceeds `tau`
    /// (a single set of `n_e` emitters, no staggering).
    Unstaggered,
}

impl RepeaterConfig {
    /// Reference operating point (b = [7, 3], m = 4, tau = 15 ns,
    /// p_bsm = 0.75, default timing and channel) at a given distance,
    /// repeater count and emitter count.
    pub fn reference(l_km: f64, n: usize, n_e: usize) -> Self {
        Self {
            l_km,
            n,
            m: 4,
            b: BranchingVector::new(vec![7, 3]).expect("valid"),
            n_e,
            tau: 15e-9,
            p_bsm: 0.75,
            timing: TimingModel::default(),
            channel: ChannelParams::default(),
            convention: RateConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if !(self.p_bsm >= 0.0 && self.p_bsm <= 1.0) {
            return Err(Error::InvalidParameter("p_bsm must lie in [0, 1]".into()));
        }
        if !(self.l_km >= 0.0) {
            return Err(Error::InvalidParameter("L must be non-negative".into()));
        }
        if self.n_e == 0 {
            return Err(Error::InvalidParameter("n_e must be at least 1".into()));
        }
        self.timing.validate()?;
        self.channel.validate()
    }

    /// Parses a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// Rate estimate from Monte Carlo trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// ebits/s.
    pub rate: f64,
    /// ebits per mode per repetition: success fraction over `2m`.
    pub rate_per_mode: f64,
    pub success_fraction: f64,
    pub successes: u64,
    pub trials: u64,
    /// 95% half-width of `rate`, ebits/s.
    pub ci95: f64,
    /// 95% half-width of `rate_per_mode`.
    pub ci95_per_mode: f64,
    pub seed: u64,
}

/// Success probability of one minor-node BSM attempt, fiber loss included.
pub fn link_prob(l_km: f64, n: usize, channel: &ChannelParams, p_bsm: f64) -> f64 {
    (-channel.alpha * l_km / (n as f64 + 1.0)).exp() * p_bsm
}

/// Loss probability of every RGS photon. Tree photons wait in the repeater
/// until the link outcomes arrive: with `T_l` the last link emission and
/// `tau_l` the one-way time to the minor node, photon `i` is measured at
/// `max(T_l + 2 tau_l, T_i)` and is lost with `1 - eta_c exp(-alpha c_f
/// T_w)`. Link photons carry only the coupling loss here; their fiber loss
/// enters [`link_prob`].
pub fn loss_probs(
    s: &EmissionSchedule,
    rgs: &RgsState,
    config: &RepeaterConfig,
) -> Result<BTreeMap<VertexId, f64>> {
    let ch = &config.channel;
    let tau_l = config.l_km / (2.0 * ch.c_f * (config.n as f64 + 1.0));
    let emit = |v: VertexId| {
        s.emit_time.get(&v).map(|t| t * 1e-9).ok_or_else(|| Error::InvalidParameter(format!("photon {v} has no emission time")))
    };
    let mut t_l = 0.0f64;
    for &l in &rgs.links {
        t_l = t_l.max(emit(l)?);
    }
    let cutoff = t_l + 2.0 * tau_l;
    let mut out = BTreeMap::new();
    for &l in &rgs.links {
        out.insert(l, 1.0 - ch.eta_c);
    }
    for tree in &rgs.trees {
        for &v in tree.levels.iter().flatten() {
            let t_i = emit(v)?;
            let wait = cutoff.max(t_i) - t_i;
            out.insert(v, 1.0 - ch.eta_c * (-ch.alpha * ch.c_f * wait).exp());
        }
    }
    for v in rgs.graph.vertices() {
        if !out.contains_key(&v) {
            return Err(Error::InvalidParameter(format!("photon {v} has no role")));
        }
    }
    Ok(out)
}

/// Loss-annotated tree codes of an RGS, indexed like `rgs.trees`.
pub fn tree_codes(rgs: &RgsState, loss: &BTreeMap<VertexId, f64>) -> Result<Vec<TreeCode>> {
    rgs.trees
        .iter()
        .map(|t| {
            let l = t.levels.iter().flatten().map(|v| loss.get(v).copied().unwrap_or(1.0)).collect();
            TreeCode::new(&rgs.b, l)
        })
        .collect()
}

/// Rate of the repeater chain for given logical measurement probabilities.
pub fn analytic_rate(p_x: f64, p_z: f64, p: f64, m: usize, n: usize, tau: f64) -> Result<f64> {
    Ok(analytic_success(p_x, p_z, p, m, n)? / (2.0 * m as f64 * tau_checked(tau)?))
}

/// Per-repetition success probability of the repeater chain.
pub fn analytic_success(p_x: f64, p_z: f64, p: f64, m: usize, n: usize) -> Result<f64> {
    for (name, v) in [("P_X", p_x), ("P_Z", p_z), ("p", p)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1]")));
        }
    }
    let (n, m) = (n as i32, m as i32);
    Ok(p_x.powi(2 * n) * p_z.powi(2 * (m - 1) * n) * (1.0 - (1.0 - p).powi(m)).powi(n + 1))
}

fn tau_checked(tau: f64) -> Result<f64> {
    if tau > 0.0 {
        Ok(tau)
    } else {
        Err(Error::InvalidParameter("tau must be positive".into()))
    }
}

/// Repeaterless capacity `-log2(1 - eta)` in ebits per mode.
pub fn repeaterless_bound(eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::InvalidParameter("transmissivity must lie in [0, 1)".into()));
    }
    Ok(-(1.0 - eta).log2())
}

/// `ceil(T / tau) * n_e`, with at least one RGS copy in flight. Quotients
/// within 1e-9 of an integer are treated as that integer.
pub fn emitters_required(t_ne: f64, tau: f64, n_e: usize) -> Result<u64> {
    let tau = tau_checked(tau)?;
    if !(t_ne >= 0.0) {
        return Err(Error::InvalidParameter("generation time must be non-negative".into()));
    }
    let q = t_ne / tau;
    let near = q.round();
    let copies = if (q - near).abs() <= 1e-9 * near.max(1.0) { near } else { q.ceil() };
    Ok((copies.max(1.0) as u64) * n_e as u64)
}

/// How tree measurements are sampled in [`mc_rate_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Draw every photon's loss and evaluate the measurement predicates.
    #[default]
    Photon,
    /// Draw each tree's logical outcome from its exact success probability.
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub sampling: Sampling,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Stream index separating independent estimates sharing a seed.
    pub stream: u32,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { sampling: Sampling::Photon, workers: 0, stream: 0 }
    }
}

/// Trials per RNG block; block `k` of stream `s` draws from ChaCha8 seeded
/// with the run seed on stream `(s << 32) | k`.
const BLOCK: u64 = 4096;

/// Monte Carlo rate with the loss map derived from the emission schedule.
pub fn mc_rate(
    config: &RepeaterConfig,
    rgs: &RgsState,
    schedule: &EmissionSchedule,
    trials: u64,
    seed: u64,
) -> Result<RateEstimate> {
    let loss = loss_probs(schedule, rgs, config)?;
    let trees = tree_codes(rgs, &loss)?;
    mc_rate_with(config, &trees, trials, seed, McOptions::default())
}

/// Monte Carlo rate over explicit loss-annotated trees, one per RGS tree
/// (`2m` of them; links `0..m` face left, `m..2m` face right).
///
/// A trial draws the `m` BSM outcomes at each of the `n + 1` minor nodes;
/// each repeater measures logical X on the trees of its lowest successful
/// link on each side and logical Z on the other `2(m - 1)` trees. The trial
/// succeeds when every minor node has a successful link and every logical
/// measurement succeeds.
pub fn mc_rate_with(
    config: &RepeaterConfig,
    trees: &[TreeCode],
    trials: u64,
    seed: u64,
    opts: McOptions,
) -> Result<RateEstimate> {
    config.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let m = config.m;
    if trees.len() != 2 * m {
        return Err(Error::InvalidParameter(format!("expected {} trees, got {}", 2 * m, trees.len())));
    }
    let p_link = link_prob(config.l_km, config.n, &config.channel, config.p_bsm) * config.channel.eta_c.powi(2);
    let exact: Vec<(f64, f64)> = trees.iter().map(logical_meas_probs).collect();
    let sim = Trial { m, n: config.n, p_link, trees, exact: &exact, sampling: opts.sampling };

    let blocks = trials.div_ceil(BLOCK);
    let run_block = |k: u64| -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((opts.stream as u64) << 32) | k);
        let count = BLOCK.min(trials - k * BLOCK);
        let mut scratch = Vec::new();
        (0..count).filter(|_| sim.run(&mut rng, &mut scratch)).count() as u64
    };
    let successes: u64 = if opts.workers == 1 {
        (0..blocks).map(run_block).sum()
    } else if opts.workers == 0 {
        (0..blocks).into_par_iter().map(run_block).sum()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pool.install(|| (0..blocks).into_par_iter().map(run_block).sum())
    };

    let f = successes as f64 / trials as f64;
    let modes = 2.0 * m as f64;
    let half = 1.96 * (f * (1.0 - f) / trials as f64).sqrt();
    Ok(RateEstimate {
        rate: f / (modes * config.tau),
        rate_per_mode: f / modes,
        success_fraction: f,
        successes,
        trials,
        ci95: half / (modes * config.tau),
        ci95_per_mode: half / modes,
        seed,
    })
}

struct Trial<'a> {
    m: usize,
    n: usize,
    p_link: f64,
    trees: &'a [TreeCode],
    exact: &'a [(f64, f64)],
    sampling: Sampling,
}

impl Trial<'_> {
    fn first_link<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        // Draw all m outcomes so the stream layout does not depend on them.
        let mut first = None;
        for k in 0..self.m {
            if rng.random::<f64>() < self.p_link && first.is_none() {
                first = Some(k);
            }
        }
        first
    }

    fn tree_ok<R: Rng>(&self, rng: &mut R, k: usize, x: bool, scratch: &mut Vec<bool>) -> bool {
        match self.sampling {
            Sampling::Tree => {
                let (px, pz) = self.exact[k];
                rng.random::<f64>() < if x { px } else { pz }
            }
            Sampling::Photon => {
                let t = &self.trees[k];
                scratch.clear();
                scratch.extend(t.loss().iter().map(|&l| rng.random::<f64>() >= l));
                if x {
                    logical_x_ok(t, scratch)
                } else {
                    logical_z_ok(t, scratch)
                }
            }
        }
    }

    fn run<R: Rng>(&self, rng: &mut R, scratch: &mut Vec<bool>) -> bool {
        let Some(mut left) = self.first_link(rng) else { return false };
        for _ in 0..self.n {
            let Some(right) = self.first_link(rng) else { return false };
            for k in 0..2 * self.m {
                let x = k == left || k == self.m + right;
                if !self.tree_ok(rng, k, x, scratch) {
                    return false;
                }
            }
            left = right;
        }
        true
    }
}

/// A compiled RGS with its emission schedule.
#[derive(Debug, Clone)]
pub struct CompiledRgs {
    pub rgs: RgsState,
    pub circuit: CompiledCircuit,
    pub schedule: EmissionSchedule,
    /// The initial conditions that were kept.
    pub init: InitialConditions,
}

/// Builds the RGS for `(m, b)`, compiles it from the leaves-first initial
/// conditions and their reverse, keeps the lower CNOT depth (then the
/// shorter total time), and schedules it.
pub fn compile_rgs(
    m: usize,
    b: &BranchingVector,
    n_e: usize,
    timing: &TimingModel,
    alg: Algorithm,
) -> Result<CompiledRgs> {
    let rgs = build_rgs(m, b)?;
    let mut best: Option<(CompiledCircuit, EmissionSchedule, InitialConditions)> = None;
    let mut last_err = None;
    for init in [rgs.leaves_first_initial_conditions(), rgs.reversed_initial_conditions()] {
        let plan = match compile(&rgs.graph, n_e, &init, alg) {
            Ok(p) => p,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let circuit = reverse_plan(&plan)?;
        let schedule = emission_schedule(&circuit, timing)?;
        let better = match &best {
            None => true,
            Some((c, s, _)) => (circuit.depth, schedule.total_time) < (c.depth, s.total_time),
        };
        if better {
            best = Some((circuit, schedule, init));
        }
    }
    match best {
        Some((circuit, schedule, init)) => Ok(CompiledRgs { rgs, circuit, schedule, init }),
        None => Err(last_err.unwrap_or(Error::NonTerminatingPlan)),
    }
}

/// One row of a rate envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    #[serde(rename = "L_km")]
    pub l_km: f64,
    pub n_best: usize,
    pub n_e: usize,
    #[serde(rename = "N_e")]
    pub emitters_required: u64,
    pub rate_ebits_s: f64,
    pub rate_per_mode: f64,
    pub repeaterless_per_mode: f64,
    pub trials: u64,
    pub ci95: f64,
}

/// For each distance, the best Monte Carlo rate over the repeater counts in
/// `n_values`, using one compiled RGS shared by every point. Each `(L, n)`
/// point uses its own RNG stream, so rows do not depend on the grid order.
pub fn rate_envelope(
    base: &RepeaterConfig,
    compiled: &CompiledRgs,
    l_values: &[f64],
    n_values: &[usize],
    trials: u64,
    seed: u64,
    opts: McOptions,
) -> Result<Vec<EnvelopeRow>> {
    if l_values.is_empty() || n_values.is_empty() {
        return Err(Error::InvalidParameter("distance and repeater lists must be nonempty".into()));
    }
    let t_ne = compiled.schedule.total_time * 1e-9;
    let n_req = emitters_required(t_ne, base.tau, base.n_e)?;
    let scale = match base.convention {
        RateConvention::PerRepetition => 1.0,
        RateConvention::Unstaggered => (base.tau / t_ne).min(1.0),
    };
    let mut rows = Vec::new();
    for (i, &l_km) in l_values.iter().enumerate() {
        let mut best: Option<(usize, RateEstimate)> = None;
        for (j, &n) in n_values.iter().enumerate() {
            let config = RepeaterConfig { l_km, n, ..base.clone() };
            let loss = loss_probs(&compiled.schedule, &compiled.rgs, &config)?;
            let trees = tree_codes(&compiled.rgs, &loss)?;
            let stream = (i * n_values.len() + j) as u32 + opts.stream;
            let est = mc_rate_with(&config, &trees, trials, seed, McOptions { stream, ..opts })?;
            if best.as_ref().is_none_or(|(_, b)| est.rate > b.rate) {
                best = Some((n, est));
            }
        }
        let (n_best, est) = best.expect("nonempty");
        rows.push(EnvelopeRow {
            l_km,
            n_best,
            n_e: base.n_e,
            emitters_required: n_req,
            rate_ebits_s: est.rate * scale,
            rate_per_mode: est.rate_per_mode * scale,
            repeaterless_per_mode: repeaterless_bound(base.channel.transmissivity(l_km))?,
            trials,
            ci95: est.ci95 * scale,
        });
    }
    Ok(rows)
}

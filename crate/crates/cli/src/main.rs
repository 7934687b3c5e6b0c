use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rgsgen::compiler::{
    compile, reverse_plan, verify_circuit_report, Algorithm, CircuitDocument, CompiledCircuit,
    InitialConditions,
};
use rgsgen::graphstate::{GraphState, VertexId};
use rgsgen::repeater::{compile_rgs, rate_envelope, ChannelParams, McOptions, RepeaterConfig, Sampling};
use rgsgen::rgs::{build_rgs, BranchingVector};
use rgsgen::scheduler::{emission_schedule, ghz_breakeven, ghz_time, TimingModel};

/// Compiler and analysis tools for emitter-based photonic graph states.
///
/// Units: distances in km, gate times in ns, the repetition period tau in
/// seconds. Ranges are written `a..b` (inclusive) or `a..b:step`; lists are
/// comma separated.
#[derive(Parser)]
#[command(name = "rgsgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a graph into an emission circuit with schedule and depth.
    Compile {
        /// Graph document (JSON or TOML).
        #[arg(long)]
        graph: PathBuf,
        /// Number of emitters.
        #[arg(long)]
        ne: usize,
        /// Photon ids in order of preference for emitter swaps; defaults to
        /// all photons in ascending order.
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<VertexId>>,
        #[arg(long, value_enum, default_value = "alg1")]
        alg: AlgArg,
        #[command(flatten)]
        timing: TimingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check a circuit against a target graph; exits 2 on mismatch.
    Verify {
        /// Circuit document, or the output of `compile`.
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// CNOT depth and generation time of an RGS over a range of emitter counts.
    DepthSweep {
        #[arg(long)]
        m: usize,
        /// Branching vector, e.g. 3,2.
        #[arg(long)]
        b: String,
        /// Emitter counts, e.g. 3..12.
        #[arg(long)]
        ne: String,
        #[arg(long, value_enum, default_value = "alg1")]
        alg: AlgArg,
        #[command(flatten)]
        timing: TimingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// GHZ generation times for every emitter count, with break-even report.
    Ghz {
        /// Photon counts, e.g. 2..8.
        #[arg(long)]
        m: String,
        #[command(flatten)]
        timing: TimingArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Vertex counts and roles of a repeater graph state.
    RgsInfo {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        b: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo rate at one distance and repeater count.
    Rate {
        #[command(flatten)]
        chain: ChainArgs,
        /// Distance in km (overrides the config).
        #[arg(long = "L")]
        l_km: Option<f64>,
        /// Repeater count (overrides the config).
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rate maximized over repeater counts, for a list of distances.
    Envelope {
        #[command(flatten)]
        chain: ChainArgs,
        /// Distances in km, e.g. 100..600:100.
        #[arg(long = "L", default_value = "100..600:100")]
        distances: String,
        /// Repeater counts, e.g. 0..40 or 1,2,4,8.
        #[arg(long, default_value = "0,1,2,3,5,8,12,18,25,35,50,70,100,140,200,280,400,560")]
        repeaters: String,
        #[command(flatten)]
        mc: McArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Alg1,
    Alg2,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Self {
        match a {
            AlgArg::Alg1 => Algorithm::Alg1,
            AlgArg::Alg2 => Algorithm::Alg2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Photon,
    Tree,
}

/// Gate times. `t_cnot_ep` has no quoted hardware value and defaults to
/// `t_H`.
#[derive(Args)]
struct TimingArgs {
    /// Timing config (TOML with t_H, t_cnot_ep, t_cnot_ee, t_meas, t_init in ns).
    #[arg(long)]
    timing: Option<PathBuf>,
    #[arg(long = "t-h")]
    t_h: Option<f64>,
    #[arg(long = "t-cnot-ep")]
    t_cnot_ep: Option<f64>,
    #[arg(long = "t-cnot-ee")]
    t_cnot_ee: Option<f64>,
    #[arg(long = "t-meas")]
    t_meas: Option<f64>,
    #[arg(long = "t-init")]
    t_init: Option<f64>,
}

impl TimingArgs {
    /// The timing file (or the defaults) with individual overrides applied.
    fn resolve_from(&self, base: TimingModel) -> Result<TimingModel, Failure> {
        let mut t = match &self.timing {
            Some(p) => TimingModel::parse(&read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
            None => base,
        };
        t.t_h = self.t_h.unwrap_or(t.t_h);
        t.t_cnot_ep = self.t_cnot_ep.unwrap_or(t.t_cnot_ep);
        t.t_cnot_ee = self.t_cnot_ee.unwrap_or(t.t_cnot_ee);
        t.t_meas = self.t_meas.unwrap_or(t.t_meas);
        t.t_init = self.t_init.unwrap_or(t.t_init);
        t.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(t)
    }

    fn resolve(&self) -> Result<TimingModel, Failure> {
        self.resolve_from(TimingModel::default())
    }
}

/// Repeater chain configuration.
#[derive(Args)]
struct ChainArgs {
    /// Chain config (TOML: m, b, n_e, tau, p_bsm, optional L, n, [timing], [channel]).
    #[arg(long)]
    config: PathBuf,
    /// Channel config (TOML: alpha, c_f, eta_c), replacing the config's.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Emitter count (overrides the config).
    #[arg(long)]
    ne: Option<usize>,
    #[command(flatten)]
    timing: TimingArgs,
}

impl ChainArgs {
    fn resolve(&self) -> Result<RepeaterConfig, Failure> {
        let mut c = RepeaterConfig::parse(&read(&self.config)?)
            .map_err(|e| invalid(format!("{}: {e}", self.config.display())))?;
        if let Some(p) = &self.channel {
            c.channel = toml::from_str::<ChannelParams>(&read(p)?)
                .map_err(|e| invalid(format!("{}: {}", p.display(), e.message())))?;
        }
        c.timing = self.timing.resolve_from(c.timing)?;
        if let Some(ne) = self.ne {
            c.n_e = ne;
        }
        c.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 20_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sample every photon, or each tree's logical outcome from its exact
    /// probability.
    #[arg(long, value_enum, default_value = "photon")]
    sampling: SamplingArg,
}

impl McArgs {
    fn options(&self) -> McOptions {
        let sampling = match self.sampling {
            SamplingArg::Photon => Sampling::Photon,
            SamplingArg::Tree => Sampling::Tree,
        };
        McOptions { sampling, workers: self.workers, stream: 0 }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; a `<out>.meta.json` sidecar is written next to it.
    /// Prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

/// A failed run: exit code and single-line reason.
struct Failure {
    code: u8,
    reason: String,
}

fn invalid(reason: impl Into<String>) -> Failure {
    Failure { code: 1, reason: reason.into() }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))
}

fn core<T>(r: rgsgen::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| invalid(e.to_string()))
}

/// Parses `a..b`, `a..b:step` or a comma list.
fn parse_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || invalid(format!("bad range {s:?}"));
    if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, st)) => (b, st.trim().parse::<usize>().map_err(|_| bad())?),
            None => (rest, 1),
        };
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if step == 0 {
            return Err(bad());
        }
        return Ok((a..=b).step_by(step).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn parse_distances(s: &str) -> Result<Vec<f64>, Failure> {
    if s.contains("..") {
        return Ok(parse_range(s)?.into_iter().map(|v| v as f64).collect());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| invalid(format!("bad distance {x:?}")))).collect()
}

fn branching(s: &str) -> Result<BranchingVector, Failure> {
    core(BranchingVector::parse(s))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `body` to `--out` (with metadata sidecar) or stdout.
fn emit(out: &OutputArgs, body: &str, config: serde_json::Value, seed: Option<u64>, started: Instant) -> Result<(), Failure> {
    let meta = json!({
        "tool": "rgsgen",
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "seed": seed,
        "config": config,
        "wall_clock_s": started.elapsed().as_secs_f64(),
    });
    match &out.out {
        None => {
            eprintln!("# {}", serde_json::to_string(&meta["config"]).unwrap_or_default());
            print!("{body}");
            Ok(())
        }
        Some(path) => {
            let side = sidecar(path);
            for p in [path, &side] {
                if p.exists() && !out.force {
                    return Err(invalid(format!("{} exists (use --force to overwrite)", p.display())));
                }
            }
            let pretty = serde_json::to_string_pretty(&meta).map_err(|e| invalid(e.to_string()))?;
            fs::write(path, body).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            fs::write(&side, pretty + "\n").map_err(|e| invalid(format!("{}: {e}", side.display())))?;
            Ok(())
        }
    }
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| invalid(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

/// Output of `compile`.
#[derive(Serialize)]
struct CompileOutput {
    circuit: CircuitDocument,
    depth: usize,
    total_time_ns: f64,
    emit_time_ns: std::collections::BTreeMap<VertexId, f64>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    match cli.command {
        Command::Compile { graph, ne, init, alg, timing, output } => {
            let g = core(GraphState::parse(&read(&graph)?))?;
            let t = timing.resolve()?;
            let init = InitialConditions(init.unwrap_or_else(|| g.photons().collect()));
            let plan = core(compile(&g, ne, &init, alg.into()))?;
            let circuit = core(reverse_plan(&plan))?;
            let schedule = core(emission_schedule(&circuit, &t))?;
            let doc = CompileOutput {
                circuit: circuit.to_document(),
                depth: circuit.depth,
                total_time_ns: schedule.total_time,
                emit_time_ns: schedule.emit_time,
            };
            let body = serde_json::to_string_pretty(&doc).map_err(|e| invalid(e.to_string()))? + "\n";
            let config = json!({"graph": graph, "n_e": ne, "init": init.0, "algorithm": plan.algorithm, "timing": t});
            emit(&output, &body, config, None, started)
        }
        Command::Verify { circuit, graph } => {
            let g = core(GraphState::parse(&read(&graph)?))?;
            let bad = |e: serde_json::Error| invalid(format!("{}: {e}", circuit.display()));
            let mut value: serde_json::Value = serde_json::from_str(&read(&circuit)?).map_err(bad)?;
            // The output of `compile` wraps the circuit document.
            if let Some(inner) = value.get_mut("circuit") {
                value = inner.take();
            }
            let doc: CircuitDocument = serde_json::from_value(value).map_err(bad)?;
            let c = core(CompiledCircuit::from_document(&doc))?;
            let report = verify_circuit_report(&c, &g);
            if report.passed {
                let mode = if report.exhaustive { "exhaustive" } else { "sampled" };
                println!("PASS {} branches ({mode})", report.branches);
                Ok(())
            } else {
                Err(Failure { code: 2, reason: format!("FAIL {}", report.failure.unwrap_or_default()) })
            }
        }
        Command::DepthSweep { m, b, ne, alg, timing, output } => {
            let b = branching(&b)?;
            let t = timing.resolve()?;
            let mut rows = Vec::new();
            for n_e in parse_range(&ne)? {
                rows.push(match compile_rgs(m, &b, n_e, &t, alg.into()) {
                    Ok(c) => vec![
                        n_e.to_string(),
                        c.circuit.depth.to_string(),
                        c.schedule.total_time.to_string(),
                        "ok".into(),
                    ],
                    Err(rgsgen::Error::Stuck(_)) => vec![n_e.to_string(), String::new(), String::new(), "stuck".into()],
                    Err(e) => return Err(invalid(e.to_string())),
                });
            }
            let body = csv_text(&["n_e", "depth", "total_time_ns", "status"], &rows)?;
            let algorithm: Algorithm = alg.into();
            let config = json!({"m": m, "b": b, "n_e": ne, "algorithm": algorithm, "timing": t});
            emit(&output, &body, config, None, started)
        }
        Command::Ghz { m, timing, output } => {
            let t = timing.resolve()?;
            let mut rows = Vec::new();
            for m in parse_range(&m)? {
                let report = ghz_breakeven(&t, m).ok();
                for n in 1..=m {
                    let time = core(ghz_time(m, n, &t))?;
                    let mut row = vec![m.to_string(), n.to_string(), time.to_string()];
                    match &report {
                        Some(r) => row.extend([
                            r.optimal_n.to_string(),
                            r.ratio.to_string(),
                            r.two_beats_one.to_string(),
                            r.three_beats_two.to_string(),
                            r.prose_regime.clone().unwrap_or_default(),
                            r.prose_disagrees.to_string(),
                        ]),
                        None => row.extend(std::iter::repeat_n(String::new(), 6)),
                    }
                    rows.push(row);
                }
            }
            let header = [
                "m",
                "n",
                "time_ns",
                "optimal_n",
                "ratio_ee_ep",
                "two_beats_one",
                "three_beats_two",
                "prose_regime",
                "prose_disagrees",
            ];
            let body = csv_text(&header, &rows)?;
            emit(&output, &body, json!({"m": m, "timing": t}), None, started)
        }
        Command::RgsInfo { m, b, output } => {
            let b = branching(&b)?;
            let s = core(build_rgs(m, &b))?;
            let info = json!({
                "summary": s.summary(),
                "links": s.links,
                "trees": s.trees,
            });
            let body = serde_json::to_string_pretty(&info).map_err(|e| invalid(e.to_string()))? + "\n";
            emit(&output, &body, json!({"m": m, "b": b}), None, started)
        }
        Command::Rate { chain, l_km, n, mc, output } => {
            let mut config = chain.resolve()?;
            config.l_km = l_km.unwrap_or(config.l_km);
            config.n = n.unwrap_or(config.n);
            let compiled = core(compile_rgs(config.m, &config.b, config.n_e, &config.timing, Algorithm::Alg1))?;
            let rows = core(rate_envelope(&config, &compiled, &[config.l_km], &[config.n], mc.trials, mc.seed, mc.options()))?;
            let body = envelope_csv(&rows)?;
            emit(&output, &body, run_config(&config, &mc, &compiled), Some(mc.seed), started)
        }
        Command::Envelope { chain, distances, repeaters, mc, output } => {
            let config = chain.resolve()?;
            let ls = parse_distances(&distances)?;
            let ns = parse_range(&repeaters)?;
            let compiled = core(compile_rgs(config.m, &config.b, config.n_e, &config.timing, Algorithm::Alg1))?;
            let rows = if ls.is_empty() || ns.is_empty() {
                Vec::new()
            } else {
                core(rate_envelope(&config, &compiled, &ls, &ns, mc.trials, mc.seed, mc.options()))?
            };
            let body = envelope_csv(&rows)?;
            let mut meta = run_config(&config, &mc, &compiled);
            meta["L"] = json!(ls);
            meta["repeaters"] = json!(ns);
            emit(&output, &body, meta, Some(mc.seed), started)
        }
    }
}

fn run_config(config: &RepeaterConfig, mc: &McArgs, compiled: &rgsgen::repeater::CompiledRgs) -> serde_json::Value {
    json!({
        "chain": config,
        "trials": mc.trials,
        "seed": mc.seed,
        "sampling": mc.options().sampling,
        "depth": compiled.circuit.depth,
        "generation_time_ns": compiled.schedule.total_time,
    })
}

fn envelope_csv(rows: &[rgsgen::repeater::EnvelopeRow]) -> Result<String, Failure> {
    let header = [
        "L_km",
        "n_best",
        "n_e",
        "N_e",
        "rate_ebits_s",
        "rate_per_mode",
        "repeaterless_per_mode",
        "trials",
        "ci95",
    ];
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.l_km.to_string(),
                r.n_best.to_string(),
                r.n_e.to_string(),
                r.emitters_required.to_string(),
                r.rate_ebits_s.to_string(),
                r.rate_per_mode.to_string(),
                r.repeaterless_per_mode.to_string(),
                r.trials.to_string(),
                r.ci95.to_string(),
            ]
        })
        .collect();
    csv_text(&header, &rows)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.reason.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use graphnls::analytic::{blowup_sweep, nodal_ode_residual, soliton, BlowupConfig, BlowupFamily, BlowupMode, SolitonSpec};
use graphnls::exec::Execution;
use graphnls::functionals::{energy, pohozaev_residual, ProblemParams};
use graphnls::gn::{gn_constant, GnConfig};
use graphnls::graph::critical_mass_report;
use graphnls::io::{append_manifest, phase_csv, profile_csv, tip_csv, InputDigest, RunManifest};
use graphnls::solver::{minimize, SolverConfig, Witness};
use graphnls::sweeps::{bisect_alpha_bar, parse_grid, phase_diagram, tip_length_threshold, SweepConfig};
use graphnls::{DiscreteGraph, Error, MeshParams, MetricGraph};

#[derive(Parser)]
#[command(name = "graphnls", version, about = "Ground states of the critical NLS energy on metric graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Graph file (`edge v w len` / `halfline v` lines)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Subcritical exponent p in (2, 6)
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Mesh width
    #[arg(long, default_value_t = 0.02)]
    h: f64,
    /// Half-line truncation length
    #[arg(long = "L", default_value_t = 40.0)]
    l: f64,
    /// Perturbed copies of each starting profile
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (`*.json`, `*.csv`) or directory; the manifest goes next to it
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run restarts and sweep cells on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Graph type and critical masses
    Classify {
        #[command(flatten)]
        c: Common,
    },
    /// Minimize the energy at fixed mass
    Minimize {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 4000)]
        max_iters: usize,
    },
    /// Optimal Gagliardo–Nirenberg constant
    GnConst {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 6.0)]
        q: f64,
        #[arg(long, default_value_t = 500)]
        maxit: usize,
    },
    /// (μ, α) phase diagram
    Sweep {
        #[command(flatten)]
        c: Common,
        /// a:b:n
        #[arg(long, allow_hyphen_values = true)]
        mu_grid: String,
        /// a:b:n
        #[arg(long, allow_hyphen_values = true)]
        alpha_grid: String,
    },
    /// Bracket the defocusing threshold ᾱ
    BisectAlpha {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 1e-3)]
        width: f64,
    },
    /// Verdicts with a terminal edge of varying length
    TipThreshold {
        #[command(flatten)]
        c: Common,
        /// Vertex the terminal edge is glued to
        #[arg(long)]
        attach: String,
        /// a:b:n
        #[arg(long)]
        ell_grid: String,
    },
    /// Energy along a blow-up family
    Blowup {
        #[command(flatten)]
        c: Common,
        #[arg(long, value_enum, default_value_t = Mode::Tip)]
        mode: Mode,
        /// Largest k in λ = 2^k
        #[arg(long, default_value_t = 24)]
        lmax: u32,
    },
    /// Mass, energy and residuals of the soliton on ℝ
    SolitonCheck {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Tip,
    Scaled,
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type Res<T> = std::result::Result<T, Failure>;

/// What a command produced: the text for stdout and the files for `--out`.
struct Output {
    stdout: String,
    /// `(default file name, contents)`; the first one is the primary artifact.
    files: Vec<(String, String)>,
    mesh: Option<MeshParams>,
}

fn need<T>(v: Option<T>, flag: &str) -> Res<T> {
    v.ok_or_else(|| Failure::Usage(format!("missing required flag --{flag}")))
}

fn execution(c: &Common) -> Execution {
    if c.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn load_graph(c: &Common) -> Res<(MetricGraph, PathBuf)> {
    let path = need(c.graph.clone(), "graph")?;
    let text = std::fs::read_to_string(&path).map_err(Error::from)?;
    Ok((MetricGraph::parse(&text)?, path))
}

fn mesh_params(c: &Common) -> MeshParams {
    MeshParams::new(c.h, c.l)
}

fn solver_config(c: &Common) -> SolverConfig {
    let exec = execution(c);
    SolverConfig {
        restarts: c.restarts,
        seed: c.seed,
        execution: exec,
        blowup: BlowupConfig { execution: exec, ..BlowupConfig::default() },
        ..SolverConfig::default()
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serialisable") + "\n"
}

fn classify(c: &Common) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let class = g.classify();
    let report = critical_mass_report(&class);
    let v = json!({
        "vertices": g.num_vertices(),
        "bounded_edges": g.edges().iter().filter(|e| !e.is_half_line()).count(),
        "half_lines": class.num_half_lines,
        "type_label": class.type_label,
        "has_terminal_point": class.has_terminal_point,
        "has_cycle_covering": class.has_cycle_covering,
        "isometric_to_line": class.isometric_to_line,
        "critical_masses": report,
        "mu_g": report.mu_g(),
    });
    let s = pretty(&v);
    Ok(Output { stdout: s.clone(), files: vec![("classify.json".into(), s)], mesh: None })
}

fn run_minimize(c: &Common, max_iters: usize) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let params = ProblemParams::new(c.p, need(c.alpha, "alpha")?, need(c.mu, "mu")?)?;
    let mp = mesh_params(c);
    let dg = DiscreteGraph::build(&g, &mp)?;
    let cfg = SolverConfig { max_iters, ..solver_config(c) };
    let out = minimize(&dg, &params, &cfg)?;
    let profile = out.profile().map(profile_csv);
    let blowup = match &out.witness {
        Witness::Blowup(t) => Some(t),
        _ => None,
    };
    let v = json!({
        "verdict": out.verdict,
        "energy": out.energy,
        "lambda": out.lambda,
        "pohozaev_residual": out.pohozaev_residual(),
        "iterations": out.iterations,
        "truncation_suspect": out.diagnostics.truncation_suspect,
        "short_circuit": out.diagnostics.short_circuit,
        "profile": profile.as_ref().map(|_| "profile.csv"),
        "restarts": out.diagnostics.restarts,
        "blowup": blowup,
    });
    let s = pretty(&v);
    let mut files = vec![("result.json".into(), s.clone())];
    if let Some(p) = profile {
        files.push(("profile.csv".into(), p));
    }
    Ok(Output { stdout: s, files, mesh: Some(mp) })
}

fn gn_const(c: &Common, q: f64, maxit: usize) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let mp = mesh_params(c);
    let dg = DiscreteGraph::build(&g, &mp)?;
    let r = gn_constant(&dg, q, &GnConfig { maxit, execution: execution(c), ..GnConfig::default() })?;
    let v = json!({
        "q": r.q,
        "c_q_estimate": r.c_q_estimate,
        "mu_g_estimate": r.mu_g_estimate,
        "converged": r.converged,
        "iterations": r.iterations,
        "starts": r.starts,
        "maximizer": "maximizer.csv",
    });
    let s = pretty(&v);
    Ok(Output {
        stdout: s.clone(),
        files: vec![("gn.json".into(), s), ("maximizer.csv".into(), profile_csv(&r.maximizer))],
        mesh: Some(mp),
    })
}

fn sweep_config(c: &Common, checkpoint: Option<PathBuf>) -> SweepConfig {
    SweepConfig { mesh: mesh_params(c), solver: solver_config(c), execution: execution(c), checkpoint_dir: checkpoint }
}

fn sweep(c: &Common, mu_grid: &str, alpha_grid: &str) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let (mus, alphas) = (parse_grid(mu_grid)?, parse_grid(alpha_grid)?);
    let checkpoint = c.out.as_ref().map(|o| out_dir(o).join("cells"));
    let cfg = sweep_config(c, checkpoint);
    let points = phase_diagram(&g, c.p, &mus, &alphas, &cfg)?;
    let csv = phase_csv(&points);
    Ok(Output { stdout: csv.clone(), files: vec![("sweep.csv".into(), csv)], mesh: Some(cfg.mesh) })
}

fn bisect(c: &Common, width: f64) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let cfg = sweep_config(c, None);
    let r = bisect_alpha_bar(&g, c.p, need(c.mu, "mu")?, width, &cfg)?;
    let s = pretty(&serde_json::to_value(&r).map_err(Error::from)?);
    Ok(Output { stdout: s.clone(), files: vec![("bisect.json".into(), s)], mesh: Some(cfg.mesh) })
}

fn tip_threshold(c: &Common, attach: &str, ell_grid: &str) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let ells = parse_grid(ell_grid)?;
    let cfg = sweep_config(c, None);
    let r = tip_length_threshold(&g, attach, c.p, need(c.alpha, "alpha")?, need(c.mu, "mu")?, &ells, &cfg)?;
    let s = pretty(&serde_json::to_value(&r).map_err(Error::from)?);
    Ok(Output {
        stdout: s.clone(),
        files: vec![("tip.json".into(), s), ("tip.csv".into(), tip_csv(&r.cells))],
        mesh: Some(cfg.mesh),
    })
}

fn blowup(c: &Common, mode: Mode, lmax: u32) -> Res<Output> {
    let (g, _) = load_graph(c)?;
    let params = ProblemParams::new(c.p, need(c.alpha, "alpha")?, need(c.mu, "mu")?)?;
    let mode = match mode {
        Mode::Tip => BlowupMode::Tip,
        Mode::Scaled => BlowupMode::Scaled,
    };
    let family = BlowupFamily::for_mode(&g, mode, params.mu)?;
    let mp = mesh_params(c);
    let cfg = BlowupConfig { kmax: lmax, early_stop: false, execution: execution(c), ..BlowupConfig::default() };
    let trace = blowup_sweep(&g, &mp, &params, family, &cfg)?;
    let mut csv = String::from("lambda,energy,mass,dofs\n");
    for pt in &trace.points {
        csv += &format!("{},{},{},{}\n", pt.lam, pt.energy, pt.mass, pt.dofs);
    }
    let summary = json!({ "family": trace.family, "certified": trace.certified, "floor": trace.floor, "min_energy": trace.min_energy() });
    Ok(Output {
        stdout: csv.clone(),
        files: vec![("blowup.csv".into(), csv), ("blowup.json".into(), pretty(&summary))],
        mesh: Some(mp),
    })
}

fn soliton_check(c: &Common, lambda: f64) -> Res<Output> {
    let mp = mesh_params(c);
    let dg: Arc<DiscreteGraph> = DiscreteGraph::build(&MetricGraph::real_line(), &mp)?;
    let u = soliton(SolitonSpec::full(lambda, 0.0), &dg)?;
    let mass = u.mass();
    let params = ProblemParams::new(c.p, 0.0, mass)?;
    let v = json!({
        "lambda": lambda,
        "mass": mass,
        "energy": energy(&u, &params),
        // φ_λ solves −u'' + (λ²/3)u = u⁵
        "ode_residual": nodal_ode_residual(&u, lambda * lambda / 3.0, 0.0, c.p),
        "pohozaev_residual": pohozaev_residual(&u, &params)?,
    });
    let s = pretty(&v);
    Ok(Output { stdout: s.clone(), files: vec![("soliton.json".into(), s)], mesh: Some(mp) })
}

fn is_file_target(out: &Path) -> bool {
    matches!(out.extension().and_then(|e| e.to_str()), Some("json" | "csv"))
}

/// Directory that receives the manifest and secondary artifacts.
fn out_dir(out: &Path) -> PathBuf {
    if is_file_target(out) {
        match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    } else {
        out.to_path_buf()
    }
}

fn sha256_hex(path: &Path) -> Res<String> {
    let bytes = std::fs::read(path).map_err(Error::from)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_outputs(out: &Path, name: &str, c: &Common, o: &Output, started: SystemTime, wall: f64) -> Res<()> {
    let dir = out_dir(out);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let mut artifacts = Vec::new();
    for (i, (default, text)) in o.files.iter().enumerate() {
        let path = if i == 0 && is_file_target(out) { out.to_path_buf() } else { dir.join(default) };
        std::fs::write(&path, text).map_err(Error::from)?;
        artifacts.push(path.strip_prefix(&dir).unwrap_or(&path).to_string_lossy().into_owned());
    }
    let inputs = match &c.graph {
        Some(g) => vec![InputDigest { path: g.to_string_lossy().into_owned(), sha256: sha256_hex(g)? }],
        None => Vec::new(),
    };
    let config = json!({
        "p": c.p, "alpha": c.alpha, "mu": c.mu, "h": c.h, "L": c.l,
        "restarts": c.restarts, "sequential": c.sequential,
        "argv": std::env::args().collect::<Vec<_>>(),
    });
    let manifest = RunManifest {
        command: name.to_string(),
        config,
        seed: c.seed,
        mesh: o.mesh.clone(),
        started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_time_s: wall,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        artifacts,
    };
    append_manifest(&dir, &manifest)?;
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let (name, c, result) = match &cli.cmd {
        Cmd::Classify { c } => ("classify", c, classify(c)),
        Cmd::Minimize { c, max_iters } => ("minimize", c, run_minimize(c, *max_iters)),
        Cmd::GnConst { c, q, maxit } => ("gn-const", c, gn_const(c, *q, *maxit)),
        Cmd::Sweep { c, mu_grid, alpha_grid } => ("sweep", c, sweep(c, mu_grid, alpha_grid)),
        Cmd::BisectAlpha { c, width } => ("bisect-alpha", c, bisect(c, *width)),
        Cmd::TipThreshold { c, attach, ell_grid } => ("tip-threshold", c, tip_threshold(c, attach, ell_grid)),
        Cmd::Blowup { c, mode, lmax } => ("blowup", c, blowup(c, *mode, *lmax)),
        Cmd::SolitonCheck { c, lambda } => ("soliton-check", c, soliton_check(c, *lambda)),
    };
    let o = result?;
    print!("{}", o.stdout);
    if let Some(out) = &c.out {
        write_outputs(out, name, c, &o, started, clock.elapsed().as_secs_f64())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `graphnls help` for usage.");
            ExitCode::from(1)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Indeterminate { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

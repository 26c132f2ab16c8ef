use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use harmsynth::hmodel::{self, LTPModel};
use harmsynth::sdp::{ConicSolver, InteriorPoint, SolveOptions};
use harmsynth::sim::{self, Scenario};
use harmsynth::synth::{self, GainResult, LqrWeights, Method, Orders, SynthOptions};
use harmsynth::system;
use harmsynth::tbalg::TBOperator;
use harmsynth::tblmi::ConicProblem;
use harmsynth::C64;

#[derive(Parser)]
#[command(name = "harmsynth", version, about = "Harmonic analysis and TB-LMI state-feedback synthesis for LTP systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write or check model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Core harmonic spectrum with a Floquet cross-check.
    Spectrum(SpectrumArgs),
    /// Harmonic H2 and H-infinity norms of the disturbance channel.
    Norms(NormArgs),
    /// Synthesize a periodic state-feedback gain.
    Synth(SynthArgs),
    /// Synthesize over increasing truncation orders and tabulate convergence.
    Sweep(SweepArgs),
    /// Integrate a tracking scenario, open loop or with a gain file.
    Simulate(SimulateArgs),
    /// Solve a conic problem in triplet JSON form with the built-in solver.
    SolveSdp(SolveSdpArgs),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write the two-state benchmark system with its series banded at `--band`.
    Example {
        #[arg(long, default_value_t = 20)]
        band: usize,
        /// Use the input matrix as disturbance channel (H-infinity setup).
        #[arg(long)]
        hinf: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a random exponentially stable model.
    Random {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        band: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Parse and check a model file.
    Validate {
        #[arg(short, long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, default_value_t = 20)]
    r: usize,
    /// Band of the model series; defaults to the model degree.
    #[arg(short)]
    p: Option<usize>,
}

#[derive(Args)]
struct NormArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, default_value_t = 20)]
    r: usize,
    #[arg(short)]
    p: Option<usize>,
    /// Frequency grid size of the H-infinity search.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "lqr-primal")]
    method: Method,
    #[arg(short)]
    p: Option<usize>,
    #[arg(short)]
    q: Option<usize>,
    /// Strictness margin of the LMIs.
    #[arg(long)]
    eps: Option<f64>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(short, default_value_t = 15)]
    r: usize,
    #[command(flatten)]
    solve: SolveArgs,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Truncation orders, comma separated and increasing.
    #[arg(short, value_delimiter = ',', default_values_t = [6, 10, 15])]
    r: Vec<usize>,
    #[command(flatten)]
    solve: SolveArgs,
    /// Relative slack of the monotonicity check.
    #[arg(long, default_value_t = 1e-6)]
    slack: f64,
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(short, long)]
    model: PathBuf,
    /// Gain file written by `synth`; open loop when absent.
    #[arg(long)]
    gain: Option<PathBuf>,
    /// Built-in scenario name or path to a scenario JSON file.
    #[arg(long, default_value = "three-phase")]
    scenario: String,
    #[arg(short, long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveSdpArgs {
    problem: PathBuf,
    solution: PathBuf,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

fn load_model(path: &Path) -> Result<LTPModel> {
    if !path.exists() {
        bail!("model file not found: {}", path.display());
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    LTPModel::from_json(&text).with_context(|| format!("invalid model file {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn fmt_c(z: C64) -> String {
    let sign = if z.im < 0.0 { '-' } else { '+' };
    format!("{:.6} {sign} {:.6}j", z.re, z.im.abs())
}

/// LQR weights realized by the performance output: `Q = Cz* Cz`, `R = Dzu* Dzu`.
/// Falls back to identities when there is no output or it has cross terms.
fn lqr_weights(model: &LTPModel) -> Result<LqrWeights> {
    let (n, m, w) = (model.n(), model.m(), model.omega);
    let identity = || LqrWeights::new(TBOperator::identity(w, n), TBOperator::identity(w, m));
    if model.nz() == 0 {
        return Ok(identity());
    }
    let cross = model.cz.adjoint().mul(&model.dzu)?;
    let r = model.dzu.adjoint().mul(&model.dzu)?;
    let coercive = r.coeff_matrix(0).map(|z| z.re).symmetric_eigenvalues().min() > 0.0;
    if !cross.prune(1e-12).is_zero() || !coercive {
        log::warn!("performance output does not separate into Q and R; using identity weights");
        return Ok(identity());
    }
    Ok(LqrWeights::new(model.cz.adjoint().mul(&model.cz)?, r))
}

fn synth_options(args: &SolveArgs) -> SynthOptions {
    SynthOptions {
        eps: args.eps,
        solve: SolveOptions {
            tol: args.tol,
            ..SolveOptions::default()
        },
        ..SynthOptions::default()
    }
}

fn orders(args: &SolveArgs, r: usize) -> Orders {
    let d = Orders::defaults(args.method, r);
    Orders::new(args.p.unwrap_or(d.p), args.q.unwrap_or(d.q), r)
}

fn model_command(cmd: ModelCommand) -> Result<()> {
    match cmd {
        ModelCommand::Example { band, hinf, out } => {
            let m = if hinf {
                system::hinf_model(band)
            } else {
                system::example_model(band)
            };
            write_text(&out, &m.to_json()?)?;
            println!("wrote {}", out.display());
        }
        ModelCommand::Random { seed, states, band, out } => {
            if states == 0 {
                bail!("a model needs at least one state");
            }
            write_text(&out, &system::random_stable_model(seed, states, band).to_json()?)?;
            println!("wrote {}", out.display());
        }
        ModelCommand::Validate { model } => {
            let m = load_model(&model)?;
            m.validate()?;
            println!(
                "ok: n = {}, m = {}, nw = {}, nz = {}, omega = {}, degree = {}",
                m.n(),
                m.m(),
                m.nw(),
                m.nz(),
                m.omega,
                m.degree()
            );
        }
    }
    Ok(())
}

fn spectrum(args: SpectrumArgs) -> Result<()> {
    let m = load_model(&args.model)?;
    let p = args.p.unwrap_or(m.degree());
    let spec = hmodel::spectrum(&m, args.r, p)?;
    let banded = m.band(p);
    let fl = sim::monodromy(&banded, sim::default_dt(&banded))?;
    println!("core eigenvalues (r = {}, p = {p}):", args.r);
    for z in &spec.core {
        let nearest = fl
            .exponents
            .iter()
            .map(|e| (e - z).norm())
            .fold(f64::INFINITY, f64::min);
        println!("  {}   floquet distance {nearest:.2e}", fmt_c(*z));
    }
    println!("floquet exponents:");
    for z in &fl.exponents {
        println!("  {}", fmt_c(*z));
    }
    println!("{}", if spec.is_stable() { "stable" } else { "unstable" });
    Ok(())
}

fn norms(args: NormArgs) -> Result<()> {
    let m = load_model(&args.model)?;
    let p = args.p.unwrap_or(m.degree());
    let h2 = hmodel::h2_norm(&m, args.r, p);
    let hinf = hmodel::hinf_norm(&m, args.r, p, args.grid)?;
    match h2 {
        Ok(v) => println!("h2    {v:.8e}"),
        Err(e) => println!("h2    undefined ({e})"),
    }
    println!("hinf  {:.8e}  at frequency offset {:.6}", hinf.value, hinf.peak_frequency);
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let m = load_model(&args.model)?;
    let w = lqr_weights(&m)?;
    let o = orders(&args.solve, args.r);
    let g = synth::synthesize(&m, args.solve.method, &w, o, &synth_options(&args.solve))?;
    write_text(&args.out.join("gain.json"), &g.to_json()?)?;
    synth::write_gain_moduli(&g.k, create(&args.out, "gain_moduli.csv")?)?;
    synth::write_gain_samples(&g.k, 200, create(&args.out, "gain_samples.csv")?)?;
    println!("method {} {o}", g.method);
    println!("optimal value {:.8e}", g.value);
    println!(
        "solver: {} iterations, gap {:.2e}, pdlmi residual {:.3e}",
        g.diagnostics.iterations, g.diagnostics.gap, g.diagnostics.pdlmi_residual
    );
    println!("closed-loop core eigenvalues:");
    for z in &g.spectrum {
        println!("  {}", fmt_c(*z));
    }
    println!("wrote {}", args.out.join("gain.json").display());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let m = load_model(&args.model)?;
    let w = lqr_weights(&m)?;
    let list: Vec<Orders> = args.r.iter().map(|&r| orders(&args.solve, r)).collect();
    let report = synth::consistency_sweep(&m, args.solve.method, &w, &list, &synth_options(&args.solve), args.slack)?;
    report.write_csv(create(&args.out, "sweep.csv")?)?;
    println!("{:>4} {:>4} {:>4} {:>18} {:>14}", "p", "q", "r", "value", "distance");
    for row in &report.rows {
        println!(
            "{:>4} {:>4} {:>4} {:>18.10e} {:>14.6e}",
            row.orders.p, row.orders.q, row.orders.r, row.value, row.gain_distance
        );
    }
    println!(
        "monotone: {}, gain distances decreasing: {}",
        report.monotone, report.distances_decreasing
    );
    Ok(())
}

fn load_gain(path: &Path) -> Result<TBOperator> {
    if !path.exists() {
        bail!("gain file not found: {}", path.display());
    }
    let text = fs::read_to_string(path)?;
    let g: GainResult = serde_json::from_str(&text).with_context(|| format!("invalid gain file {}", path.display()))?;
    Ok(g.k)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let m = load_model(&args.model)?;
    let scenario = match Scenario::builtin(&args.scenario) {
        Some(s) => s,
        None => {
            let path = Path::new(&args.scenario);
            if !path.exists() {
                bail!("scenario not found: {}", args.scenario);
            }
            Scenario::from_json(&fs::read_to_string(path)?)?
        }
    };
    let gain = args.gain.as_deref().map(load_gain).transpose()?;
    let res = sim::tracking_experiment(&m, gain.as_ref(), &scenario)?;
    res.trajectory.write_csv(create(&args.out, "trajectory.csv")?)?;
    write_text(&args.out.join("tracking.json"), &serde_json::to_string_pretty(&res.phases)?)?;
    println!("{:>8} {:>8} {:>14} {:>14}", "start", "end", "rms error", "ref rms");
    for ph in &res.phases {
        println!(
            "{:>8.3} {:>8.3} {:>14.6e} {:>14.6e}",
            ph.t_start, ph.t_end, ph.rms_error, ph.ref_rms
        );
    }
    println!("wrote {}", args.out.join("trajectory.csv").display());
    Ok(())
}

fn solve_sdp(args: SolveSdpArgs) -> Result<()> {
    let text = fs::read_to_string(&args.problem).with_context(|| format!("cannot read {}", args.problem.display()))?;
    let problem = ConicProblem::from_json(&text)?;
    let opts = SolveOptions {
        tol: args.tol,
        ..SolveOptions::default()
    };
    // always the built-in method, so this command can itself serve as the external solver
    let sol = InteriorPoint::default().solve(&problem, &opts)?;
    write_text(&args.solution, &serde_json::to_string_pretty(&sol)?)?;
    eprintln!("{:?} after {} iterations, objective {:.10e}", sol.status, sol.iterations, sol.objective);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Model(cmd) => model_command(cmd),
        Command::Spectrum(a) => spectrum(a),
        Command::Norms(a) => norms(a),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::SolveSdp(a) => solve_sdp(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

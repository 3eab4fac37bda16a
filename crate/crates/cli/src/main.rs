use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use thermoflux::acceptance::{run_acceptance, AcceptanceConfig};
use thermoflux::estimation::SamplingMode;
use thermoflux::experiment::{haar_experiment, run_mode, run_sweep, ExperimentConfig, Mode, ParamOverrides, StateSpec};
use thermoflux::infdim::{semiuniversal_protocol, CutoffSchedule, InfiniteContext, SemiuniversalSettings, TailRule, TailState};
use thermoflux::pinching::{energy_pinching, schur_loss_bound, schur_pinching_for};
use thermoflux::qmat::{tensor_power, MatrixJson};
use thermoflux::schur::build_schur_basis;
use thermoflux::{Error, ThermalContext};

const EXIT_VALIDATION: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "thermoflux", version, about = "Work extraction under thermal operations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Hamiltonian {
    /// Comma separated exact single-system energies.
    #[arg(long, default_value = "0,1")]
    levels: String,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

impl Hamiltonian {
    fn context(&self) -> Result<ThermalContext, Error> {
        ThermalContext::parse(&self.levels, self.beta)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit the Schur-Weyl basis of (C^d)^{⊗n} as JSON.
    Schur {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        h: Hamiltonian,
    },
    /// Apply a pinching channel to k copies of a state.
    Pinch {
        /// Preset (ground, excited, thermal, mixed, plus), diag:p1,p2,… or a matrix JSON file.
        #[arg(long)]
        state: String,
        #[arg(long, value_enum, default_value = "schur")]
        kind: PinchKind,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[command(flatten)]
        h: Hamiltonian,
    },
    /// Run one extraction protocol.
    Extract(ExtractArgs),
    /// Seeded sweep over an n-grid from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the CSV path in the config.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Truncated infinite-dimensional extraction over an n-grid.
    Infdim(InfdimArgs),
    /// Haar average energy check.
    Haar {
        #[arg(long, default_value_t = 3)]
        qubits: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        h: Hamiltonian,
    },
    /// Run the acceptance criteria.
    Acceptance {
        /// Config file, or a directory holding default.json.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Group names or criterion ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PinchKind {
    Schur,
    Energy,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, default_value = "classical")]
    mode: String,
    #[arg(long, default_value = "ground")]
    state: String,
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    h: Hamiltonian,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the exact distribution in place of samples.
    #[arg(long, conflicts_with = "sampled")]
    exact: bool,
    #[arg(long)]
    sampled: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<u64>,
    /// Append the CSV row here; stdout otherwise.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct InfdimArgs {
    /// power:s, geometric:r, explicit:p1,p2,… or a JSON rule file.
    #[arg(long, default_value = "power:4")]
    state: String,
    /// Tail exponent ε for the default cutoff ⌈n^{1/(1+ε/2)}⌉.
    #[arg(long)]
    epsilon: Option<f64>,
    /// power:a or constant:d; takes precedence over --epsilon.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "100,400,1000")]
    n_grid: Vec<u64>,
    /// JSON array of candidate rules.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn print_json(v: &Value) -> Result<(), Error> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    emit(&s)
}

/// Write a line to stdout; a closed pipe ends output quietly.
fn emit(line: &str) -> Result<(), Error> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Parse(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Schur { n, h } => schur(n, &h.context()?)?,
        Command::Pinch { state, kind, k, h } => pinch(&state, kind, k, &h.context()?)?,
        Command::Extract(a) => extract(&a)?,
        Command::Sweep { config, csv } => sweep(&config, csv)?,
        Command::Infdim(a) => infdim(&a)?,
        Command::Haar { qubits, samples, seed, h } => {
            let r = haar_experiment(&h.context()?, qubits, samples, seed)?;
            print_json(&json!(r))?;
        }
        Command::Acceptance { config, only } => return acceptance(config.as_deref(), &only),
    }
    Ok(ExitCode::SUCCESS)
}

fn schur(n: usize, ctx: &ThermalContext) -> Result<(), Error> {
    let basis = build_schur_basis(n, ctx.dim())?;
    let energies = basis.column_energies(ctx);
    let blocks: Vec<Value> = basis
        .blocks
        .iter()
        .map(|b| {
            let vectors: Vec<Value> = b
                .columns()
                .map(|col| json!({ "amplitudes": basis.vector(col), "energy": *energies[col].numer() as f64 / *energies[col].denom() as f64 }))
                .collect();
            json!({ "lambda": b.diagram.rows(), "n_lambda": b.weyl_dim, "m_lambda": b.sym_dim, "vectors": vectors })
        })
        .collect();
    print_json(&json!({ "n": n, "d": ctx.dim(), "blocks": blocks }))
}

fn pinch(state: &str, kind: PinchKind, k: usize, ctx: &ThermalContext) -> Result<(), Error> {
    let rho = StateSpec::Named(state.into()).resolve(ctx)?;
    let rho_k = tensor_power(&rho, k)?;
    let (ch, bound) = match kind {
        PinchKind::Schur => (schur_pinching_for(ctx, k)?, k as f64 * schur_loss_bound(k, ctx.dim())),
        PinchKind::Energy => {
            let ch = energy_pinching(ctx, k)?;
            let b = (ch.projector_count() as f64).ln();
            (ch, b)
        }
    };
    let out = ch.apply(&rho_k)?;
    print_json(&json!({
        "state": MatrixJson::from_matrix(out.matrix()),
        "projector_count": ch.projector_count(),
        "loss_nats": ch.loss_nats(&rho_k)?,
        "bound_nats": bound,
    }))
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn append_csv(path: Option<&Path>, header: &str, row: &str) -> Result<(), Error> {
    match path {
        None => {
            emit(&format!("{header}\n{row}"))
        }
        Some(p) => {
            let fresh = !p.exists() || std::fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true);
            let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            let text = if fresh { format!("{header}\n{row}\n") } else { format!("{row}\n") };
            f.write_all(text.as_bytes()).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))
        }
    }
}

fn extract(a: &ExtractArgs) -> Result<(), Error> {
    let ctx = a.h.context()?;
    let mode = Mode::parse(&a.mode)?;
    if a.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let rho = StateSpec::Named(a.state.clone()).resolve(&ctx)?;
    let params = ParamOverrides {
        k: a.k,
        m: a.m,
        sampling: Some(if a.exact { SamplingMode::Exact } else { SamplingMode::Sampled }),
        ..ParamOverrides::default()
    };
    let out = run_mode(mode, &rho, &ctx, a.n, a.seed, &params)?;
    print_json(&json!(out))?;
    let row = [
        out.n.to_string(),
        out.k.to_string(),
        out.m.to_string(),
        out.l.to_string(),
        num(out.extracted_work),
        num(out.rate_nats),
        num(out.target_rate),
        num(out.xi),
        num(out.fidelity),
        a.seed.to_string(),
        mode.name().to_string(),
    ]
    .join(",");
    append_csv(a.csv.as_deref(), "n,k,m,l,W,rate_nats,target_nats,xi,fidelity,seed,mode", &row)
}

fn sweep(config: &Path, csv_override: Option<PathBuf>) -> Result<(), Error> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::Parse(format!("{}: {e}", config.display())))?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let result = run_sweep(&cfg)?;
    let csv = result.to_csv()?;
    let paths = cfg.output.clone();
    let csv_path = csv_override.or_else(|| paths.as_ref().and_then(|p| p.csv.clone()).map(PathBuf::from));
    match csv_path {
        Some(p) => std::fs::write(&p, csv).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => emit(csv.trim_end())?,
    }
    let summary = json!({ "config_hash": result.config_hash, "code_version": result.code_version, "summary": result.summary });
    match paths.and_then(|p| p.json) {
        Some(p) => {
            let s = serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
            std::fs::write(&p, s).map_err(|e| Error::Parse(format!("{p}: {e}")))?;
        }
        None => eprintln!("{summary}"),
    }
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64, Error> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

fn parse_rule(spec: &str) -> Result<TailRule, Error> {
    if spec.ends_with(".json") {
        let text = std::fs::read_to_string(spec).map_err(|e| Error::Parse(format!("{spec}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{spec}: {e}")));
    }
    let (kind, arg) = spec.split_once(':').ok_or_else(|| Error::Parse(format!("state rule {spec:?} needs kind:value")))?;
    Ok(match kind {
        "power" => TailRule::PowerLaw { exponent: parse_f64(arg)? },
        "geometric" => TailRule::Geometric { ratio: parse_f64(arg)? },
        "explicit" => TailRule::Explicit { weights: arg.split(',').map(parse_f64).collect::<Result<_, _>>()? },
        _ => return Err(Error::Parse(format!("unknown state rule {kind:?} (power, geometric, explicit)"))),
    })
}

fn parse_schedule(spec: &str) -> Result<CutoffSchedule, Error> {
    if spec == "sqrt" {
        return Ok(CutoffSchedule::Power { exponent: 0.5 });
    }
    match spec.split_once(':') {
        Some(("power", a)) => Ok(CutoffSchedule::Power { exponent: parse_f64(a)? }),
        Some(("constant", d)) => {
            Ok(CutoffSchedule::Constant { d: d.trim().parse().map_err(|_| Error::Parse(format!("bad cutoff {d:?}")))? })
        }
        _ => Err(Error::Parse(format!("unknown schedule {spec:?} (sqrt, power:a, constant:d)"))),
    }
}

fn infdim(a: &InfdimArgs) -> Result<(), Error> {
    let truth = parse_rule(&a.state)?;
    let mut rules = match &a.candidates {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<Vec<TailRule>>(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let index = match rules.iter().position(|r| *r == truth) {
        Some(i) => i,
        None => {
            rules.push(truth);
            rules.len() - 1
        }
    };
    let set: Vec<TailState> = rules.into_iter().map(TailState::new).collect::<Result<_, _>>()?;
    let ctx = InfiniteContext::ladder(a.beta)?;
    let schedule = match (&a.schedule, a.epsilon) {
        (Some(s), _) => Some(parse_schedule(s)?),
        (None, Some(eps)) if eps > 0.0 => Some(CutoffSchedule::default_for(eps)),
        (None, Some(eps)) => return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}"))),
        (None, None) => None,
    };
    let settings = SemiuniversalSettings { schedule, ..SemiuniversalSettings::default() };
    if a.n_grid.is_empty() || a.n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n-grid must be non-empty with positive entries".into()));
    }
    emit("n,d_n,success,rate,target")?;
    for &n in &a.n_grid {
        let o = semiuniversal_protocol(&set, index, &ctx, n, a.seed, &settings)?;
        emit(&format!("{},{},{},{},{}", n, o.d_n, num(o.truncation_success), num(o.outcome.rate_nats), num(o.outcome.target_rate)))?;
    }
    Ok(())
}

fn acceptance(config: Option<&Path>, only: &[String]) -> Result<ExitCode, Error> {
    let cfg = match config {
        None => AcceptanceConfig::default(),
        Some(p) if p.is_dir() => AcceptanceConfig::load(&p.join("default.json"))?,
        Some(p) => AcceptanceConfig::load(p)?,
    };
    let report = run_acceptance(&cfg, only)?;
    for r in &report.results {
        eprintln!("{}", r.line());
    }
    print_json(&json!(report))?;
    Ok(if report.all_passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ACCEPTANCE) })
}

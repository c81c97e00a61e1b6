mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command as Process, ExitCode};

use clap::{Args, Parser, Subcommand};
use shg_core::classical::{self, HopfOptions, IntegrateOptions, NoiseOptions};
use shg_core::experiments::{self, SweepSpec};
use shg_core::spectrum::{self, ManifoldSpec};
use shg_core::steady_state::{self, DEFAULT_TAIL_TOLERANCE};
use shg_core::trajectory::{self, TrajectoryOptions, Unraveling};
use shg_core::{oracles, Error, FockSpace, Mode, ModelParams};

use config::{Config, CONFIG_HELP};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or spec (exit code 2).
    Input(String),
    /// A solver or integrator failed (exit code 1).
    Numeric(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpace(_)
            | Error::InvalidMode { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidParameter(_)
            | Error::DimensionOverflow { .. }
            | Error::InvalidBracket(_)
            | Error::ManifoldNotInvariant { .. }
            | Error::Format(_) => CliError::Input(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Numeric(format!("cannot write {}: {e}", path.display()))
}

type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "shg",
    version,
    about = "Coupled second-harmonic-generation cavity simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config with `params` and optional `space.dims`.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// 1 or 2 cavities, used when the config has no `space.dims`.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    cavities: Option<u8>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the steady state and print photon numbers and g₂ values.
    #[command(after_help = CONFIG_HELP)]
    Steady {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write `quantity,value,defined` rows here.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Run one quantum trajectory from the vacuum.
    #[command(after_help = CONFIG_HELP)]
    Trajectory {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "T")]
        tfinal: f64,
        /// Integration step (at most 0.01).
        #[arg(long, value_name = "D", default_value_t = trajectory::MAX_DT)]
        dt: f64,
        #[arg(long, value_name = "S", default_value_t = 0)]
        seed: u64,
        /// Write `t, n_a1, …` samples here.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Integrate the classical amplitude equations from the perturbed fixed point.
    #[command(after_help = CONFIG_HELP)]
    Classical {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "T")]
        tfinal: f64,
        /// Additive complex white-noise strength σ (stochastic Heun).
        #[arg(long, value_name = "SIGMA")]
        noise: Option<f64>,
        /// Step of the noisy integrator.
        #[arg(long, default_value_t = 1e-3)]
        noise_dt: f64,
        /// Seed of the noisy integrator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start of the averaging window (default: min(0.8 T, 500)).
        #[arg(long, value_name = "T0")]
        transient: Option<f64>,
        /// Write `t, re_a1, im_a1, …, n_a1, …` samples here.
        #[arg(long, value_name = "CSV")]
        out: Option<PathBuf>,
    },
    /// Locate the classical Hopf threshold E_c inside a drive bracket.
    #[command(after_help = CONFIG_HELP)]
    Hopf {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        bracket: Vec<f64>,
    },
    /// Eigenvalues of the undriven Hamiltonian on a closed Fock manifold.
    #[command(after_help = CONFIG_HELP)]
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// States separated by `;`, occupations by `,`, e.g. "2,0;0,1".
        #[arg(long, value_name = "SPEC")]
        manifold: String,
    },
    /// Closed-form weak-drive values.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
    /// Run a sweep spec and write sweep.csv and sweep.json into DIR.
    #[command(after_help = experiments_help())]
    Sweep {
        #[arg(long, value_name = "F.json")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Render figures from a sweep result with the Python `figures` package.
    Figures {
        #[arg(long, value_name = "DIR")]
        result: PathBuf,
        /// Figure kind passed to the renderer.
        #[arg(long, default_value = "auto")]
        kind: String,
        /// Output image (default: DIR/figure.png).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Single-cavity g₂(a₁,a₂) to leading order in E.
    G2Single {
        #[arg(long, allow_hyphen_values = true)]
        chi: f64,
        #[arg(long, default_value_t = 1.0)]
        k1: f64,
        #[arg(long, default_value_t = 0.5)]
        k2: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        d1: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        d2: f64,
    },
    /// Quantum-limit g₂(a₁,b₁) to first order in V₁.
    G2Cross {
        #[arg(long, allow_hyphen_values = true)]
        d1a: f64,
        #[arg(long, allow_hyphen_values = true)]
        d1b: f64,
        #[arg(long, default_value_t = 1.0)]
        k1: f64,
        #[arg(long, allow_hyphen_values = true)]
        v1: f64,
    },
    /// Mean detuning √3 κ₁ above which mismatch can strengthen g₂(a₁,b₁).
    Threshold {
        #[arg(long, default_value_t = 1.0)]
        k1: f64,
        /// Also report whether mismatch strengthens the correlation at this mean detuning.
        #[arg(long, allow_hyphen_values = true)]
        d1: Option<f64>,
    },
}

const fn experiments_help() -> &'static str {
    "SWEEP SPEC (strict JSON):
  kind:        transition_scan | phase_diagram | detuning_scan | generic
  base:        params object as in the config files
  axes:        [{\"name\": N, \"grid\": [values] or {\"start\", \"stop\", \"points\"}}]
               N is a params field or delta1 (both Δ₁), delta (Δ₁ᵃ−Δ₁ᵇ), delta1_mean
  constraints: [{\"fixed_product\": {\"product\": P}}           χ = P / E
                {\"drive_above_threshold\": {\"offset\": O, \"bracket\": [LO, HI]}}
                {\"fixed_mean_detuning\": {\"mean\": M}}]
  backend:     auto | steady_state | trajectory | classical | oracle
  settings:    two_cavity, dims, auto_tail_tolerance, tail_tolerance,
               budget {lu_max_liouvillian, steady_max_liouvillian},
               trajectories, t_transient, t_average, dt,
               classical_t_final, classical_t_transient, classical_sample_dt,
               cross_check_every
Exit code 1 if any point failed; failures are recorded per row."
}

fn fmt_value(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn quantum_space(cfg: &Config, two: bool) -> Result<FockSpace, CliError> {
    let dims = match &cfg.dims {
        Some(d) => d.clone(),
        None => experiments::auto_dims(&cfg.params, two, 1e-4)?,
    };
    Ok(FockSpace::new(&dims)?)
}

fn dims_label(space: &FockSpace) -> String {
    space
        .dims()
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn steady(cfg: &ConfigArgs, out: Option<&Path>) -> CliResult {
    let c = Config::load(&cfg.config)?;
    let two = c.two_cavity(cfg.cavities)?;
    let space = quantum_space(&c, two)?;
    let rho = steady_state::steady_state(&c.params, &space)?;
    let modes = &Mode::ALL[..space.num_modes()];
    let mut rows: Vec<(String, f64, bool)> = Vec::new();
    let mut vacuum = true;
    for m in modes {
        let n = rho.population(m.index())?;
        vacuum &= n.abs() < 1e-24;
        rows.push((format!("n_{}", m.name()), n, true));
    }
    for (i, a) in modes.iter().enumerate() {
        for b in &modes[i..] {
            let name = format!("g2_{}_{}", a.name(), b.name());
            match rho.g2(a.index(), b.index()) {
                Ok(g) => rows.push((name, g.value, true)),
                Err(Error::UndefinedCorrelation(_)) => rows.push((name, f64::NAN, false)),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let suspect = rho.truncation_suspect(DEFAULT_TAIL_TOLERANCE);
    let mut stdout = io::stdout().lock();
    let _ = writeln!(stdout, "dims {}", dims_label(&space));
    let _ = writeln!(stdout, "vacuum {vacuum}");
    for (name, v, defined) in &rows {
        if *defined {
            let _ = writeln!(stdout, "{name} {v:.10e}");
        } else {
            let _ = writeln!(stdout, "{name} undefined");
        }
    }
    let _ = writeln!(stdout, "truncation_suspect {suspect}");
    if let Some(path) = out {
        let mut text = String::from("quantity,value,defined\n");
        text.push_str(&format!("dims,{},true\n", dims_label(&space)));
        for (name, v, defined) in &rows {
            text.push_str(&format!("{name},{v:.16e},{defined}\n"));
        }
        text.push_str(&format!("truncation_suspect,{suspect},true\n"));
        fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn run_trajectory(
    cfg: &ConfigArgs,
    t_final: f64,
    dt: f64,
    seed: u64,
    out: Option<&Path>,
) -> CliResult {
    let c = Config::load(&cfg.config)?;
    let two = c.two_cavity(cfg.cavities)?;
    let space = quantum_space(&c, two)?;
    let opts = TrajectoryOptions {
        dt,
        ..TrajectoryOptions::default()
    };
    let rec = Unraveling::new(&c.params, &space)?.record(
        &trajectory::PureState::vacuum(&space),
        t_final,
        &opts,
        seed,
    )?;
    println!("dims {}", dims_label(&space));
    println!("seed {seed}");
    println!("jumps {}", rec.jumps.len());
    if let Some(last) = rec.photon_numbers.last() {
        for (m, n) in Mode::ALL.iter().zip(last) {
            println!("final_n_{} {n:.10e}", m.name());
        }
    }
    if let Some(path) = out {
        let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        rec.write_csv(f)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_classical(
    cfg: &ConfigArgs,
    t_final: f64,
    noise: Option<f64>,
    noise_dt: f64,
    seed: u64,
    transient: Option<f64>,
    out: Option<&Path>,
) -> CliResult {
    let c = Config::load(&cfg.config)?;
    let two = c.two_cavity(cfg.cavities)?;
    let s0 = classical::perturbed_fixed_point(&c.params, two)?;
    let path = match noise {
        None => classical::integrate(&c.params, two, &s0, t_final, &IntegrateOptions::default())?,
        Some(sigma) => classical::integrate_noisy(
            &c.params,
            two,
            &s0,
            t_final,
            &NoiseOptions {
                sigma,
                dt: noise_dt,
                sample_dt: 0.01f64.max(noise_dt),
                seed,
            },
        )?,
    };
    let tt = transient.unwrap_or_else(|| classical::default_transient(t_final));
    let pair = if two {
        (Mode::A1, Mode::B1)
    } else {
        (Mode::A1, Mode::A2)
    };
    let g = classical::classical_g2(&path, tt, pair)?;
    println!("steps {}", path.steps);
    println!("g2_{}_{} {:.10e}", pair.0.name(), pair.1.name(), g.value);
    if two {
        match classical::classify_synchronization(&path, tt) {
            Ok(r) => {
                println!("sync {}", r.class.name());
                println!("frequency_a {:.6e}", r.frequency_a);
                println!("frequency_b {:.6e}", r.frequency_b);
            }
            Err(Error::Inconclusive(why)) => println!("sync inconclusive ({why})"),
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(p) = out {
        let f = fs::File::create(p).map_err(|e| io_err(p, e))?;
        path.write_csv(f)?;
    }
    Ok(())
}

fn hopf(cfg: &ConfigArgs, bracket: &[f64]) -> CliResult {
    let c = Config::load(&cfg.config)?;
    let two = c.two_cavity(cfg.cavities)?;
    let r = classical::hopf_threshold(
        &c.params,
        two,
        (bracket[0], bracket[1]),
        &HopfOptions::default(),
    )?;
    println!("critical_drive {:.10}", r.critical_drive);
    println!(
        "leading_eigenvalue {:.6e} {:+.6e}i",
        r.eigenvalue.re, r.eigenvalue.im
    );
    let p = ModelParams {
        drive: r.critical_drive,
        ..c.params
    };
    let mut ev: Vec<_> = classical::jacobian(&p, &r.fixed_point, two)
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    for z in ev {
        println!("eigenvalue {:.6e} {:+.6e}i", z.re, z.im);
    }
    Ok(())
}

fn spectrum_cmd(cfg: &ConfigArgs, manifold: &str) -> CliResult {
    let c = Config::load(&cfg.config)?;
    let two = c.two_cavity(cfg.cavities)?;
    let m = ManifoldSpec::parse(manifold)?;
    let modes = if two { 4 } else { 2 };
    if let Some(bad) = m.states.iter().find(|s| s.len() != modes) {
        return Err(CliError::Input(format!(
            "manifold state {bad:?} has {} occupations, the model has {modes} modes",
            bad.len()
        )));
    }
    let dims = match &c.dims {
        Some(d) => d.clone(),
        // Room for every state the Hamiltonian can reach from the manifold.
        None => (0..modes)
            .map(|k| m.states.iter().map(|s| s[k]).max().unwrap_or(0) + 3)
            .collect(),
    };
    let space = FockSpace::new(&dims)?;
    let h = spectrum::undriven_hamiltonian(&c.params, &space, two)?;
    let es = spectrum::manifold_eigensystem(&h, &space, &m)?;
    println!("manifold {manifold}");
    for e in &es.eigenvalues {
        println!("eigenvalue {e:.12}");
    }
    Ok(())
}

fn oracle(which: &OracleCommand) -> CliResult {
    match *which {
        OracleCommand::G2Single {
            chi,
            k1,
            k2,
            d1,
            d2,
        } => {
            println!(
                "{}",
                fmt_value(oracles::g2_single_cavity_quantum(chi, k1, k2, d1, d2)?)
            );
        }
        OracleCommand::G2Cross { d1a, d1b, k1, v1 } => {
            if k1.is_nan() || k1 <= 0.0 {
                return Err(CliError::Input("--k1 must be positive".into()));
            }
            println!(
                "{}",
                fmt_value(oracles::g2_cross_quantum_limit(d1a, d1b, k1, v1))
            );
        }
        OracleCommand::Threshold { k1, d1 } => {
            if k1.is_nan() || k1 <= 0.0 {
                return Err(CliError::Input("--k1 must be positive".into()));
            }
            println!("{}", fmt_value(oracles::nonmonotonicity_threshold(k1)));
            if let Some(d) = d1 {
                println!(
                    "strengthens {}",
                    oracles::mismatch_strengthens_correlation(d, k1)
                );
            }
        }
    }
    Ok(())
}

fn sweep(spec_path: &Path, out: &Path) -> CliResult {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: SweepSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", spec_path.display())))?;
    config::check_kappa1(&spec.base)?;
    let result = experiments::run(&spec)?;
    let (csv, json) =
        experiments::persist(&result, out).map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("points {}", result.rows.len());
    println!("failed {}", result.failures());
    println!("csv {}", csv.display());
    println!("sidecar {}", json.display());
    for r in result.rows.iter().filter(|r| r.failed()) {
        eprintln!("point {}: {}", r.index, r.error.as_deref().unwrap_or(""));
    }
    if result.failures() > 0 {
        return Err(CliError::Numeric(format!(
            "{} of {} points failed",
            result.failures(),
            result.rows.len()
        )));
    }
    Ok(())
}

fn figures(result: &Path, kind: &str, out: Option<&Path>) -> CliResult {
    if !result.join(experiments::CSV_FILE).is_file() {
        return Err(CliError::Input(format!(
            "{} does not contain {}",
            result.display(),
            experiments::CSV_FILE
        )));
    }
    let python = std::env::var("SHG_PYTHON").unwrap_or_else(|_| "python3".into());
    let probe = Process::new(&python)
        .args([
            "-c",
            "import importlib.util, sys; sys.exit(importlib.util.find_spec('figures') is None)",
        ])
        .output();
    match probe {
        Ok(o) if o.status.success() => {}
        _ => {
            return Err(CliError::Numeric(format!(
                "the figures component is not installed (no importable `figures` module for {python}); \
                 install it or set SHG_PYTHON to an interpreter that has it"
            )))
        }
    }
    let out = out.map_or_else(|| result.join("figure.png"), Path::to_path_buf);
    let status = Process::new(&python)
        .args(["-m", "figures", kind, "--result"])
        .arg(result)
        .arg("--out")
        .arg(&out)
        .status()
        .map_err(|e| CliError::Numeric(format!("cannot run {python}: {e}")))?;
    if !status.success() {
        return Err(CliError::Numeric(format!("figures exited with {status}")));
    }
    println!("figure {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Steady { cfg, out } => steady(&cfg, out.as_deref()),
        Command::Trajectory {
            cfg,
            tfinal,
            dt,
            seed,
            out,
        } => run_trajectory(&cfg, tfinal, dt, seed, out.as_deref()),
        Command::Classical {
            cfg,
            tfinal,
            noise,
            noise_dt,
            seed,
            transient,
            out,
        } => run_classical(
            &cfg,
            tfinal,
            noise,
            noise_dt,
            seed,
            transient,
            out.as_deref(),
        ),
        Command::Hopf { cfg, bracket } => hopf(&cfg, &bracket),
        Command::Spectrum { cfg, manifold } => spectrum_cmd(&cfg, &manifold),
        Command::Oracle { which } => oracle(&which),
        Command::Sweep { spec, out } => sweep(&spec, &out),
        Command::Figures { result, kind, out } => figures(&result, &kind, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

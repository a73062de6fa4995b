//! `crystal-walk`: analysis reports, simulations and kernel comparisons for
//! random walks on crystal lattices.
//!
//! Exit codes: 0 on success, 2 when the input or flags are invalid, 3 when a
//! numerical step fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crystal_walk::girsanov::interpolation_family;
use crystal_walk::montecarlo::{asymptotic_direction, simulate};
use crystal_walk::transition::{ratio_csv, ratio_table, Normalization};
use crystal_walk::{
    albanese, analyze, build_lattice, change_kernel, modified_harmonic_realization, stationary_measure, Builtin,
    CltStats, CrystalLattice, Error, KernelChoice, LatticeDescription, LatticeState, TransitionKernel, VertexId,
    WalkConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "crystal-walk", version, about = "Random walks on crystal lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full deterministic analysis of a lattice and its kernel.
    Analyze {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo moments of the rescaled walk, as JSON.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = KernelArg::Original)]
        kernel: KernelArg,
        /// Interpolation parameter for `--kernel interpolated`; defaults to steps^(-1/2).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        walkers: usize,
        #[arg(long, default_value_t = 1_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated times in [0, 1] at which to report statistics.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        times: Vec<f64>,
        /// Worker threads (results do not depend on this).
        #[arg(long)]
        threads: Option<usize>,
        /// Write per-walker endpoint coordinates to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Ratio of the changed to the original n-step kernel, as CSV.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = NormArg::Auto)]
        normalization: NormArg,
        /// Starting vertex (name); defaults to the first vertex.
        #[arg(long)]
        start: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    /// Builtin lattice: hexagonal, dice, square, bouquet1.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    builtin: Option<String>,
    /// Forward probability for `--builtin bouquet1`.
    #[arg(long, requires = "builtin")]
    p: Option<String>,
    /// Lattice description file (JSON).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Original,
    Changed,
    Interpolated,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    /// Explicit formula for bouquets, exponential rate otherwise.
    Auto,
    Rate,
    Explicit,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { source, format, out } => cmd_analyze(&source, format, out.as_deref()),
        Command::Simulate {
            source,
            kernel,
            epsilon,
            walkers,
            steps,
            seed,
            times,
            threads,
            csv,
        } => {
            let choice = match kernel {
                KernelArg::Original => KernelChoice::Original,
                KernelArg::Changed => KernelChoice::Changed,
                KernelArg::Interpolated => KernelChoice::Interpolated(epsilon.unwrap_or(1.0 / (steps.max(1) as f64).sqrt())),
            };
            let mut config = WalkConfig::new(walkers, steps, seed, choice);
            config.time_grid = times;
            config.threads = threads;
            cmd_simulate(&source, &config, csv.as_deref())
        }
        Command::Compare {
            source,
            steps,
            normalization,
            start,
        } => cmd_compare(&source, steps, normalization, start.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load(source: &Source) -> CliResult<(String, CrystalLattice, TransitionKernel)> {
    if let Some(path) = &source.input {
        let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        let desc = LatticeDescription::from_json(&text)?;
        let (l, k) = build_lattice(&desc)?;
        let name = path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
        return Ok((name, l, k));
    }
    let mut name = source.builtin.clone().expect("clap requires a source");
    if let Some(p) = &source.p {
        if name != "bouquet1" {
            return Err(Failure::Invalid(format!("--p only applies to bouquet1, not `{name}`")));
        }
        name = format!("bouquet1({p})");
    }
    let which: Builtin = name.parse()?;
    let (l, k) = crystal_walk::builtin(which)?;
    Ok((which.to_string(), l, k))
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(source: &Source, format: Format, out: Option<&Path>) -> CliResult<()> {
    let (name, l, k) = load(source)?;
    let report = analyze(&name, &l, &k)?;
    let text = match format {
        Format::Json => report.to_json() + "\n",
        Format::Text => report.to_text(),
    };
    emit(&text, out)
}

#[derive(Serialize)]
struct SimulationReport {
    schema: u32,
    lattice: String,
    kernel: KernelChoice,
    walkers: usize,
    steps: usize,
    seed: u64,
    /// Orthonormal frame the statistics are expressed in.
    frame: &'static str,
    /// Drift subtracted before rescaling, generator coordinates.
    centering: Option<Vec<f64>>,
    /// Expected mean of the rescaled endpoint in `frame`.
    target_mean: Vec<f64>,
    /// Mean of `xi_n / n`, generator coordinates; absent without t = 1.
    drift_estimate: Option<Vec<f64>>,
    stats: Vec<CltStats>,
}

fn cmd_simulate(source: &Source, config: &WalkConfig, csv: Option<&Path>) -> CliResult<()> {
    config.validate()?;
    let (name, l, k) = load(source)?;
    let g = l.graph();
    let base = VertexId(0);
    let m = stationary_measure(g, &k)?;
    let r = modified_harmonic_realization(&l, &k, &m, base)?;
    let rank = l.rank();
    let (kernel, realization, metric, frame, centering, target_mean) = match config.kernel_choice {
        KernelChoice::Original => {
            let a = albanese(&l, &k, &m, &r)?;
            let rho = asymptotic_direction(&l, &k)?;
            (k.clone(), r, a, "albanese", Some(rho), vec![0.0; rank])
        }
        KernelChoice::Changed => {
            let ch = change_kernel(&l, &k, &m, &r)?;
            (ch.kernel, r, ch.albanese, "changed_albanese", None, vec![0.0; rank])
        }
        KernelChoice::Interpolated(eps) => {
            let p_eps = interpolation_family(g, &k, &m, eps)?;
            let m_eps = stationary_measure(g, &p_eps)?;
            let r_eps = modified_harmonic_realization(&l, &p_eps, &m_eps, base)?;
            let p_zero = interpolation_family(g, &k, &m, 0.0)?;
            let m_zero = stationary_measure(g, &p_zero)?;
            let r_zero = modified_harmonic_realization(&l, &p_zero, &m_zero, base)?;
            let a_zero = albanese(&l, &p_zero, &m_zero, &r_zero)?;
            // mean of the rescaled endpoint is sqrt(n) eps rho
            let scale = (config.steps as f64).sqrt() * eps;
            let rho: Vec<f64> = asymptotic_direction(&l, &k)?.iter().map(|v| v * scale).collect();
            let target = a_zero.to_orthonormal_coords(&rho)?;
            (p_eps, r_eps, a_zero, "symmetric_part_albanese", None, target)
        }
    };
    let traj = simulate(&l, &kernel, &realization, config)?;
    let stats = (0..config.time_grid.len())
        .map(|i| traj.stats(i, centering.as_deref(), &metric))
        .collect::<crystal_walk::Result<Vec<_>>>()?;
    let drift_estimate = traj.time_grid.contains(&1.0).then(|| traj.drift()).transpose()?;
    if let Some(path) = csv {
        emit(&traj.endpoint_csv(centering.as_deref(), &metric)?, Some(path))?;
    }
    let report = SimulationReport {
        schema: crystal_walk::report::SCHEMA_VERSION,
        lattice: name,
        kernel: config.kernel_choice,
        walkers: config.walkers,
        steps: config.steps,
        seed: config.seed,
        frame,
        centering,
        target_mean,
        drift_estimate,
        stats,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Invalid(e.to_string()))?;
    emit(&(text + "\n"), None)
}

fn cmd_compare(source: &Source, steps: usize, normalization: NormArg, start: Option<&str>) -> CliResult<()> {
    let (_, l, k) = load(source)?;
    let g = l.graph();
    let x = match start {
        Some(name) => g
            .vertex_by_name(name)
            .ok_or_else(|| Failure::Invalid(format!("unknown vertex `{name}`")))?,
        None => VertexId(0),
    };
    let m = stationary_measure(g, &k)?;
    let r = modified_harmonic_realization(&l, &k, &m, x)?;
    let ch = change_kernel(&l, &k, &m, &r)?;
    let explicit = match normalization {
        NormArg::Auto => g.vertex_count() == 1,
        NormArg::Rate => false,
        NormArg::Explicit => true,
    };
    let vm = &ch.minimizers.vertices[x.index()];
    let norm = if explicit {
        Normalization::Explicit {
            lambda: &vm.lambda,
            f_star: vm.f_min,
            realization: &r,
        }
    } else {
        Normalization::Rate
    };
    let rows = ratio_table(&l, &k, &ch, &LatticeState::origin(x, l.rank()), steps, norm)?;
    emit(&ratio_csv(&rows), None)
}

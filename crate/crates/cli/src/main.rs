//! `inhomo`: spectra, compensation plans, enhancement predictions,
//! optimization, sweeps, figure datasets and the acceptance self-test.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, Workers};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "inhomo", version, about = "Absorption of inhomogeneously broadened multilevel ensembles", long_about = None)]
struct Cli {
    /// Run configuration (TOML, or JSON with a .json extension)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads, or "auto"; overrides the INHOMO_WORKERS variable
    #[arg(long, global = true, value_name = "N")]
    workers: Option<String>,

    /// Named scheme: two_level, lambda, n_type, ladder_rydberg, n_type_extra_hf
    #[arg(long, global = true)]
    preset: Option<String>,

    /// JSON scheme file used instead of a preset
    #[arg(long, global = true, value_name = "FILE")]
    scheme_file: Option<PathBuf>,

    /// Ensemble quadrature nodes (odd)
    #[arg(long, global = true)]
    nodes: Option<usize>,

    /// Ensemble grid half-width in units of sigma
    #[arg(long, global = true)]
    span: Option<f64>,

    #[command(flatten)]
    params: ParamFlags,

    /// Print the effective configuration as JSON and exit
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

/// Scheme parameters in MHz.
#[derive(Args, Debug, Default)]
struct ParamFlags {
    /// Coupling Rabi frequency
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega: Option<f64>,
    /// Coupling detuning
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Recovery Rabi frequency
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega_r: Option<f64>,
    /// Recovery detuning
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta_r: Option<f64>,
    /// Probe-transition HWHM
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Recovery-transition HWHM
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma_r: Option<f64>,
    /// Two-photon coherence decay rate
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma_sg: Option<f64>,
    /// Population return rate out of the two-photon level
    #[arg(long, global = true, allow_negative_numbers = true)]
    s_population_decay: Option<f64>,
    /// Probe inhomogeneous width (standard deviation)
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Residual two-photon width of the ladder scheme
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    /// Ratio of recovery to coupling shifts
    #[arg(long, global = true, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// Probe Rabi frequency (default 0.01 gamma)
    #[arg(long, global = true, allow_negative_numbers = true)]
    probe_rabi: Option<f64>,
    /// Probe detuning used by single-point commands
    #[arg(long, global = true, allow_negative_numbers = true)]
    probe_detuning: Option<f64>,
}

impl ParamFlags {
    fn given(&self) -> Vec<(&'static str, f64)> {
        [
            ("omega", self.omega),
            ("delta", self.delta),
            ("omega_r", self.omega_r),
            ("delta_r", self.delta_r),
            ("gamma", self.gamma),
            ("gamma_r", self.gamma_r),
            ("gamma_sg", self.gamma_sg),
            ("s_population_decay", self.s_population_decay),
            ("sigma", self.sigma),
            ("sigma2", self.sigma2),
            ("eta", self.eta),
            ("probe_rabi", self.probe_rabi),
            ("probe_detuning", self.probe_detuning),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ensemble absorption spectrum as CSV
    Spectrum {
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Output CSV (a .meta.json sidecar is written next to it); stdout if absent
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Recovery-field settings that compensate the coupling light shift
    Plan,
    /// Closed-form enhancement prediction
    Predict,
    /// Maximize the enhancement over recovery Rabi frequency and detuning
    Optimize {
        /// Recovery Rabi bounds as lo,hi
        #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
        omega_r_bounds: Option<String>,
        /// Recovery detuning bounds as lo,hi
        #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
        delta_r_bounds: Option<String>,
        /// Scan points per parameter before the simplex refinement
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Cartesian parameter sweep of a derived quantity
    Sweep {
        /// Axis as <field>.<rabi|detuning>=from:to:n or =v1,v2,...; repeatable
        #[arg(long = "axis", value_name = "SPEC", allow_hyphen_values = true)]
        axes: Vec<String>,
        /// beta, peak, peak_detuning or window_width
        #[arg(long)]
        quantity: Option<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Write the datasets of one figure (or "all") with a manifest
    Figure {
        id: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the acceptance suite and report each criterion
    Selftest {
        /// Comma-separated criterion numbers; all by default
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = &cli.workers {
        config.workers = Some(if w == "auto" {
            Workers::Auto(config::AutoKeyword::Auto)
        } else {
            Workers::Count(w.parse().map_err(|_| CliError::Usage(format!("--workers expects a count or \"auto\", got {w:?}")))?)
        });
    }
    if cli.preset.is_some() && cli.scheme_file.is_some() {
        return Err(CliError::Usage("--preset and --scheme-file are mutually exclusive".into()));
    }
    if let Some(p) = &cli.preset {
        config.scheme.file = None;
        config.scheme.definition = None;
        config.scheme.preset = Some(p.clone());
    }
    if let Some(f) = &cli.scheme_file {
        config.scheme = config::SchemeConfig { file: Some(f.clone()), ..Default::default() };
    }
    if let Some(n) = cli.nodes {
        config.grid.nodes = n;
    }
    if let Some(s) = cli.span {
        config.grid.span = s;
    }
    if config.preset_kind()?.is_some() {
        for (k, v) in cli.params.given() {
            config.set_param(k, serde_json::Value::from(v));
        }
        config.preset_params()?;
    }
    match &cli.command {
        Command::Spectrum { from, to, points, output } => {
            let s = &mut config.spectrum;
            s.from = from.unwrap_or(s.from);
            s.to = to.unwrap_or(s.to);
            s.points = points.unwrap_or(s.points);
            if output.is_some() {
                s.output = output.clone();
            }
        }
        Command::Optimize { omega_r_bounds, delta_r_bounds, grid_points, output } => {
            let o = &mut config.optimize;
            if let Some(b) = omega_r_bounds {
                o.omega_r = Some(commands::parse_pair("--omega-r-bounds", b)?);
            }
            if let Some(b) = delta_r_bounds {
                o.delta_r = Some(commands::parse_pair("--delta-r-bounds", b)?);
            }
            o.grid_points = grid_points.unwrap_or(o.grid_points);
            if output.is_some() {
                o.output = output.clone();
            }
        }
        Command::Sweep { axes, quantity, output } => {
            let s = &mut config.sweep;
            if !axes.is_empty() {
                s.axes = axes.iter().map(|a| config::parse_axis(a)).collect::<Result<_, _>>()?;
            }
            if let Some(q) = quantity {
                s.quantity = serde_json::from_value(serde_json::Value::from(q.as_str()))
                    .map_err(|_| CliError::Usage(format!("unknown quantity {q:?}")))?;
            }
            if output.is_some() {
                s.output = output.clone();
            }
        }
        Command::Figure { id, out_dir } => {
            if let Some(id) = id {
                config.figure.id = if id == "all" { None } else { Some(id.parse()?) };
            }
            if let Some(d) = out_dir {
                config.figure.out_dir = d.clone();
            }
        }
        Command::Selftest { criteria } => {
            if !criteria.is_empty() {
                config.selftest.criteria = criteria.clone();
            }
        }
        Command::Plan | Command::Predict => {}
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let config = resolve(&cli)?;
    if cli.print_config {
        commands::print_config(&config)?;
        return Ok(true);
    }
    if let Some(n) = config.worker_count()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    let overrides = if config.preset_kind()?.is_none() { cli.params.given() } else { Vec::new() };
    match cli.command {
        Command::Spectrum { .. } => commands::spectrum(&config, &overrides).map(|_| true),
        Command::Plan => commands::plan(&config, &overrides).map(|_| true),
        Command::Predict => commands::predict(&config).map(|_| true),
        Command::Optimize { .. } => commands::optimize(&config, &overrides).map(|_| true),
        Command::Sweep { .. } => commands::sweep(&config, &overrides).map(|_| true),
        Command::Figure { .. } => commands::figure(&config).map(|_| true),
        Command::Selftest { .. } => commands::selftest(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Command-line arguments and the TOML configuration file. Every subcommand
//! section has the same field names as its flags; flags win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "nlgate", version, about = "Non-local cavity-QED gate experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML file with global keys and one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub fock_cutoff: Option<usize>,
    /// Integrator tolerance.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Dressed-state angles and energies per manifold.
    Dressed(DressedArgs),
    /// Resonant vacuum Rabi oscillation: closed form against integration.
    Rabi(RabiArgs),
    /// Cavity-controlled CNOT fidelity against the dispersion ratio x = Ω/δ.
    FidelitySweep(SweepArgs),
    /// Two-photon transition probability in both frequency readings.
    TwoPhoton(TwoPhotonArgs),
    /// Full non-local gate protocol with trace.
    Protocol(ProtocolArgs),
    /// Photon-gun ebit noise study.
    EbitNoise(EbitNoiseArgs),
}

impl Command {
    pub fn section(&self) -> &'static str {
        match self {
            Self::Dressed(_) => "dressed",
            Self::Rabi(_) => "rabi",
            Self::FidelitySweep(_) => "fidelity_sweep",
            Self::TwoPhoton(_) => "two_photon",
            Self::Protocol(_) => "protocol",
            Self::EbitNoise(_) => "ebit_noise",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DressedArgs {
    /// Cavity frequency ω.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Vacuum Rabi coupling Ω.
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Atom-cavity detuning δ = ω0 − ω.
    #[arg(long)]
    pub detuning: Option<f64>,
    /// Last manifold index.
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiArgs {
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Initial photon number; the atom starts excited.
    #[arg(long)]
    pub photons: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Formula,
    Simulated,
    Both,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepArgs {
    #[arg(long)]
    pub x_min: Option<f64>,
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Number of grid points, endpoints included.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<SweepMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionArg {
    Auto,
    Angular,
    Cyclic,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoPhotonArgs {
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
    /// Nominal Ω before the convention factor.
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateArg {
    Cnot,
    Cqpg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelArg {
    Ideal,
    Physical,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolArgs {
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    #[arg(long, value_enum)]
    pub level: Option<LevelArg>,
    /// Amplitude of |1⟩_A, e.g. `0.6` or `0.6+0.8i`.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<String>,
    /// Run on N random product inputs drawn from the seed instead.
    #[arg(long)]
    pub random: Option<usize>,
    /// Sample one measurement branch per run instead of enumerating all four.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sample: Option<bool>,
    /// Trace file; defaults to `<out>.trace` when `--out` is set.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbitNoiseArgs {
    #[arg(long, value_enum)]
    pub gate: Option<GateArg>,
    /// Comma-separated list of empty-pulse probabilities.
    #[arg(long)]
    pub p_empty: Option<String>,
    /// Comma-separated list of two-photon probabilities.
    #[arg(long)]
    pub p_double: Option<String>,
    /// Single-photon probability; defaults to `1 − p_empty − p_double`.
    #[arg(long)]
    pub p_single: Option<f64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<String>,
}

/// Contents of a configuration file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Optional guard: the subcommand this file was written for.
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fock_cutoff: Option<usize>,
    pub tolerance: Option<f64>,
    pub dressed: Option<DressedArgs>,
    pub rabi: Option<RabiArgs>,
    pub fidelity_sweep: Option<SweepArgs>,
    pub two_photon: Option<TwoPhotonArgs>,
    pub protocol: Option<ProtocolArgs>,
    pub ebit_noise: Option<EbitNoiseArgs>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid configuration: {e}")))
    }
}

macro_rules! prefer_flags {
    ($flags:expr, $file:expr; $($f:ident),+ $(,)?) => {{
        let (flags, file) = ($flags, $file);
        $(let $f = flags.$f.or(file.$f);)+
        ($($f),+)
    }};
}

impl GlobalArgs {
    fn merge(self, file: &FileConfig) -> Self {
        let config = self.config.clone();
        let file = file.clone();
        let (seed, out, fock_cutoff, tolerance) = prefer_flags!(self, file; seed, out, fock_cutoff, tolerance);
        Self { config, seed, out, fock_cutoff, tolerance }
    }
}

impl Command {
    fn merge(self, file: &FileConfig) -> Self {
        match self {
            Self::Dressed(f) => {
                let (omega, coupling, detuning, n_max) =
                    prefer_flags!(f, file.dressed.clone().unwrap_or_default(); omega, coupling, detuning, n_max);
                Self::Dressed(DressedArgs { omega, coupling, detuning, n_max })
            }
            Self::Rabi(f) => {
                let (omega, coupling, photons, t_max, steps) =
                    prefer_flags!(f, file.rabi.clone().unwrap_or_default(); omega, coupling, photons, t_max, steps);
                Self::Rabi(RabiArgs { omega, coupling, photons, t_max, steps })
            }
            Self::FidelitySweep(f) => {
                let (x_min, x_max, steps, mode) =
                    prefer_flags!(f, file.fidelity_sweep.clone().unwrap_or_default(); x_min, x_max, steps, mode);
                Self::FidelitySweep(SweepArgs { x_min, x_max, steps, mode })
            }
            Self::TwoPhoton(f) => {
                let (convention, coupling, delta, tau, sigma0, t_final) = prefer_flags!(
                    f, file.two_photon.clone().unwrap_or_default();
                    convention, coupling, delta, tau, sigma0, t_final
                );
                Self::TwoPhoton(TwoPhotonArgs { convention, coupling, delta, tau, sigma0, t_final })
            }
            Self::Protocol(f) => {
                let (gate, level, a, b, c, d, random, sample, trace) = prefer_flags!(
                    f, file.protocol.clone().unwrap_or_default();
                    gate, level, a, b, c, d, random, sample, trace
                );
                Self::Protocol(ProtocolArgs { gate, level, a, b, c, d, random, sample, trace })
            }
            Self::EbitNoise(f) => {
                let (gate, p_empty, p_double, p_single, runs, a, b, c, d) = prefer_flags!(
                    f, file.ebit_noise.clone().unwrap_or_default();
                    gate, p_empty, p_double, p_single, runs, a, b, c, d
                );
                Self::EbitNoise(EbitNoiseArgs { gate, p_empty, p_double, p_single, runs, a, b, c, d })
            }
        }
    }
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub global: GlobalArgs,
    pub command: Command,
}

pub fn resolve(cli: Cli) -> Result<Resolved, CliError> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    resolve_with(cli, &file)
}

pub fn resolve_with(cli: Cli, file: &FileConfig) -> Result<Resolved, CliError> {
    if let Some(exp) = &file.experiment {
        let want = cli.command.section();
        if exp.replace('-', "_") != want {
            return Err(CliError::Validation(format!(
                "configuration is for `{exp}` but the subcommand is `{want}`"
            )));
        }
    }
    Ok(Resolved { global: cli.global.merge(file), command: cli.command.merge(file) })
}

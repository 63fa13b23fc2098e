use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relay_core::{LogitProfile, PenaltyMode, WindowPolicy, DEFAULT_EPSILON};

#[derive(Debug, Parser)]
#[command(name = "relay", version, about = "Temporal cross-attention routing toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retained attention fraction versus offset from a segment midpoint.
    Curves(CurvesArgs),
    /// Penalty entries C(i, j) for every query/key pair.
    Penalty(RoutingArgs),
    /// Per-frame attention mass over prompts.
    Occupancy(RoutingArgs),
    /// Soft decay versus hard masking boundary steps.
    Compare(RoutingArgs),
    /// Check a schedule file and print segment midpoints and half-lengths.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Segment half-length L in latent frames.
    #[arg(long = "L", value_name = "L")]
    pub half_length: f64,

    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Free-attention half-width: `auto` (L - 2) or a number of frames.
    #[arg(long, default_value = "auto", value_parser = parse_window)]
    pub window: WindowPolicy,

    /// One column per w in {0, L/2, L-2}.
    #[arg(long, conflicts_with = "sweep_eps")]
    pub sweep_w: bool,

    /// One column per epsilon in {0.3, 0.1, 0.01}.
    #[arg(long)]
    pub sweep_eps: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RoutingArgs {
    /// Schedule file (JSON).
    pub schedule: PathBuf,

    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,

    /// Free-attention half-width: `auto` (L - 2 per segment) or a number of frames.
    #[arg(long, default_value = "auto", value_parser = parse_window)]
    pub window: WindowPolicy,

    #[arg(long, value_enum, default_value_t = ModeArg::Soft)]
    pub mode: ModeArg,

    #[arg(long, default_value_t = 4)]
    pub tokens_per_frame: usize,

    #[arg(long, default_value_t = 8)]
    pub tokens_per_prompt: usize,

    /// Global prompt tokens; defaults to --tokens-per-prompt when the
    /// schedule has a global prompt and 0 otherwise.
    #[arg(long)]
    pub global_tokens: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = ProfileArg::Uniform)]
    pub profile: ProfileArg,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub schedule: PathBuf,

    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Soft,
    Hard,
    Off,
}

impl From<ModeArg> for PenaltyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Soft => PenaltyMode::Soft,
            ModeArg::Hard => PenaltyMode::Hard,
            ModeArg::Off => PenaltyMode::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Uniform,
    Random,
}

impl ProfileArg {
    pub fn with_seed(self, seed: u64) -> LogitProfile {
        match self {
            ProfileArg::Uniform => LogitProfile::Uniform,
            ProfileArg::Random => LogitProfile::Random(seed),
        }
    }
}

fn parse_window(s: &str) -> Result<WindowPolicy, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(WindowPolicy::Auto);
    }
    let w: f64 = s
        .parse()
        .map_err(|_| format!("expected `auto` or a number of frames, got `{s}`"))?;
    if !w.is_finite() || w < 0.0 {
        return Err(format!("window must be a finite non-negative number, got {s}"));
    }
    Ok(WindowPolicy::Explicit(w))
}

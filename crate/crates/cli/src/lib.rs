//! Command implementations for the `relay` binary.
//!
//! Every command renders its full output to a `String`; `main` decides where
//! it goes and maps [`CliError`] to the process exit code.

pub mod args;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use relay_core::csv::{decay_curve_csv, decay_sweep_csv, fmt_sig, occupancy_csv, penalty_csv};
use relay_core::{
    boundary_report, build_penalty_matrix, decay_curve, occupancy, offset_grid, uniform_token_layout,
    validate_schedule, BoundaryReport, Error, PenaltyConfig, PenaltyMode, ScheduleFile, SegmentSchedule,
    TokenLayout, WindowPolicy,
};
use thiserror::Error;

pub use args::{Cli, Command};
use args::{CurvesArgs, RoutingArgs, ValidateArgs};

const SWEEP_EPSILONS: [f64; 3] = [0.3, 0.1, 0.01];

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid schedule (exit code 2).
    #[error("{0}")]
    Usage(String),
    /// A self-check failed; indicates a bug (exit code 1).
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant(msg) => CliError::Internal(msg),
            Error::DegenerateWindow { .. } => CliError::Usage(format!("--window: {e}")),
            Error::Config(msg) if msg.starts_with("epsilon") => CliError::Usage(format!("--epsilon: {msg}")),
            other => CliError::Usage(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs one command and returns what it would print.
pub fn run(command: &Command) -> CliResult<String> {
    match command {
        Command::Curves(a) => cmd_curves(a),
        Command::Penalty(a) => cmd_penalty(a),
        Command::Occupancy(a) => cmd_occupancy(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Output path of a command, if `--out` was given.
pub fn out_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Curves(a) => a.out.as_deref(),
        Command::Penalty(a) | Command::Occupancy(a) | Command::Compare(a) => a.out.as_deref(),
        Command::Validate(a) => a.out.as_deref(),
    }
}

fn check_epsilon(epsilon: f64) -> CliResult<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--epsilon must lie strictly between 0 and 1, got {epsilon}"
        )))
    }
}

pub fn cmd_curves(args: &CurvesArgs) -> CliResult<String> {
    let l = args.half_length;
    if !(l.is_finite() && l > 0.0) {
        return Err(CliError::Usage(format!("--L must be a positive number of frames, got {l}")));
    }
    check_epsilon(args.epsilon)?;
    let window = match args.window {
        WindowPolicy::Auto => (l - 2.0).max(0.0),
        WindowPolicy::Explicit(w) => w,
    };
    let offsets = offset_grid(l);
    let curve = |w: f64, eps: f64| {
        decay_curve(l, w, eps, &offsets).map_err(|e| match e {
            Error::DegenerateWindow { .. } => CliError::Usage(format!(
                "--window {} must be smaller than --L {} (degenerate window)",
                fmt_sig(w),
                fmt_sig(l)
            )),
            other => other.into(),
        })
    };

    if args.sweep_w {
        let curves = [0.0, l / 2.0, (l - 2.0).max(0.0)]
            .into_iter()
            .map(|w| Ok((format!("w={}", fmt_sig(w)), curve(w, args.epsilon)?)))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(decay_sweep_csv(&curves))
    } else if args.sweep_eps {
        let curves = SWEEP_EPSILONS
            .into_iter()
            .map(|eps| Ok((format!("eps={}", fmt_sig(eps)), curve(window, eps)?)))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(decay_sweep_csv(&curves))
    } else {
        Ok(decay_curve_csv(&curve(window, args.epsilon)?))
    }
}

pub fn load_schedule(path: &Path) -> CliResult<SegmentSchedule> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let raw = ScheduleFile::from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid schedule file: {e}", path.display())))?;
    Ok(validate_schedule(&raw)?)
}

/// Flag checks that do not need the schedule.
fn check_routing_flags(args: &RoutingArgs) -> CliResult<PenaltyConfig> {
    check_epsilon(args.epsilon)?;
    if args.tokens_per_frame == 0 {
        return Err(CliError::Usage("--tokens-per-frame must be at least 1".into()));
    }
    if args.tokens_per_prompt == 0 {
        return Err(CliError::Usage("--tokens-per-prompt must be at least 1".into()));
    }
    let config = PenaltyConfig {
        epsilon: args.epsilon,
        window: args.window,
        mode: args.mode.into(),
    };
    config.validate()?;
    Ok(config)
}

fn routing_setup(args: &RoutingArgs) -> CliResult<(SegmentSchedule, TokenLayout, PenaltyConfig)> {
    let config = check_routing_flags(args)?;
    let schedule = load_schedule(&args.schedule)?;
    let global_tokens = match (args.global_tokens, schedule.global_prompt_id()) {
        (Some(0), Some(g)) => {
            return Err(CliError::Usage(format!(
                "--global-tokens must be at least 1 for global prompt '{g}'"
            )))
        }
        (Some(n), None) if n > 0 => {
            return Err(CliError::Usage(
                "--global-tokens given but the schedule has no global prompt".into(),
            ))
        }
        (Some(n), _) => n,
        (None, Some(_)) => args.tokens_per_prompt,
        (None, None) => 0,
    };
    let layout = uniform_token_layout(&schedule, args.tokens_per_frame, args.tokens_per_prompt, global_tokens)?;
    Ok((schedule, layout, config))
}

pub fn cmd_penalty(args: &RoutingArgs) -> CliResult<String> {
    let (schedule, layout, config) = routing_setup(args)?;
    let penalty = build_penalty_matrix(&schedule, &layout, &config)?;
    Ok(penalty_csv(&schedule, &layout, &penalty))
}

pub fn cmd_occupancy(args: &RoutingArgs) -> CliResult<String> {
    let (schedule, layout, config) = routing_setup(args)?;
    let trace = occupancy(&schedule, &layout, &config, args.profile.with_seed(args.seed))?;
    check_rows(trace.mass())?;
    Ok(occupancy_csv(&trace))
}

pub fn cmd_compare(args: &RoutingArgs) -> CliResult<String> {
    let (schedule, layout, config) = routing_setup(args)?;
    let profile = args.profile.with_seed(args.seed);
    let report = |mode: PenaltyMode| -> CliResult<BoundaryReport> {
        let trace = occupancy(&schedule, &layout, &config.with_mode(mode), profile)?;
        check_rows(trace.mass())?;
        Ok(boundary_report(&trace, &schedule)?)
    };
    let soft = report(PenaltyMode::Soft)?;
    let hard = report(PenaltyMode::Hard)?;

    let mut out = String::new();
    let window = match config.window {
        WindowPolicy::Auto => "auto (L - 2)".to_owned(),
        WindowPolicy::Explicit(w) => fmt_sig(w),
    };
    writeln!(
        out,
        "schedule: {} frames, {} segments, epsilon {}, window {}",
        schedule.video_frames(),
        schedule.segments().len(),
        fmt_sig(config.epsilon),
        window
    )
    .unwrap();
    for r in [&soft, &hard] {
        writeln!(out, "{} max_step = {}", r.mode.as_str(), fmt_sig(r.max_step)).unwrap();
        for b in &r.per_boundary_steps {
            writeln!(out, "  frame {} -> {}: step {}", b.frame, b.frame + 1, fmt_sig(b.step)).unwrap();
        }
    }
    if soft.max_step < hard.max_step {
        writeln!(out, "result: SOFT max_step < HARD max_step (SOFT is smoother)").unwrap();
    } else {
        writeln!(out, "result: SOFT max_step >= HARD max_step (SOFT is not smoother)").unwrap();
    }
    Ok(out)
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<String> {
    let schedule = load_schedule(&args.schedule)?;
    let mut out = String::new();
    writeln!(out, "video_frames = {}", schedule.video_frames()).unwrap();
    for seg in schedule.segments() {
        writeln!(
            out,
            "segment {}: prompt {} frames [{}, {}] m = {} L = {}",
            seg.id(),
            seg.prompt_id(),
            seg.start_frame(),
            seg.end_frame(),
            fmt_sig(seg.midpoint()),
            fmt_sig(seg.half_length())
        )
        .unwrap();
    }
    if let Some(g) = schedule.global_prompt_id() {
        writeln!(out, "global prompt: {g}").unwrap();
    }
    Ok(out)
}

fn check_rows(m: &relay_core::DenseMatrix) -> CliResult<()> {
    for (r, row) in m.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(CliError::Internal(format!("occupancy row {r} is not a distribution")));
        }
    }
    Ok(())
}

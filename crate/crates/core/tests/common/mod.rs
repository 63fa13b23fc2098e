//! Test corpus and independent oracles.
//!
//! The oracles recompute penalties straight from segment geometry and run
//! attention with explicit loops; they share no code with the library's
//! penalty builder or softmax kernel.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relay_core::{
    build_token_layout, validate_schedule, AttentionInputs, DenseMatrix, ScheduleFile, SegmentSchedule,
    SegmentSpec, TokenLayout,
};

/// Builds a schedule from consecutive segment lengths.
pub fn schedule_from_lengths(lengths: &[usize], global: Option<&str>) -> SegmentSchedule {
    let mut start = 0;
    let segments = lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let spec = SegmentSpec::new(format!("p{}", i + 1), start, start + len - 1);
            start += len;
            spec
        })
        .collect();
    validate_schedule(&ScheduleFile {
        video_frames: start,
        global_prompt: global.map(str::to_owned),
        segments,
    })
    .expect("corpus schedule is valid")
}

/// Segment lengths of the test corpus: 2 to 6 segments, 8 to 64 frames,
/// every segment at least two frames long.
pub const CORPUS: &[&[usize]] = &[
    &[6, 6],
    &[7, 7, 7],
    &[4, 4],
    &[2, 3, 3],
    &[2, 6, 8],
    &[5, 5, 5, 4, 5],
    &[3, 4, 5, 6, 12],
    &[10, 10, 10, 10, 12, 12],
    &[20, 20],
    &[2, 2, 9, 20],
    &[8, 8, 8, 8, 8, 8],
    &[9, 8],
    &[32, 32],
];

pub fn corpus() -> Vec<SegmentSchedule> {
    CORPUS.iter().map(|lens| schedule_from_lengths(lens, None)).collect()
}

/// Free window of a segment: `L - 2` clamped at zero, or an explicit value.
pub fn oracle_window(half_length: f64, explicit: Option<f64>) -> f64 {
    explicit.unwrap_or((half_length - 2.0).max(0.0))
}

/// `C = ln(1/eps) * (relu(|f - m| - w) / (L - w))^2`, the penalty with the
/// endpoint condition substituted in.
pub fn oracle_penalty(frame: f64, mid: f64, half_length: f64, window: f64, epsilon: f64) -> f64 {
    let excess = ((frame - mid).abs() - window).max(0.0);
    let ratio = excess / (half_length - window);
    (1.0 / epsilon).ln() * ratio * ratio
}

/// Soft prior `exp(-C)` for every (frame, segment) pair.
pub fn oracle_priors(schedule: &SegmentSchedule, epsilon: f64, explicit_window: Option<f64>) -> Vec<Vec<f64>> {
    (0..schedule.video_frames())
        .map(|f| {
            schedule
                .segments()
                .iter()
                .map(|seg| {
                    let (m, l) = (
                        (seg.start_frame() + seg.end_frame()) as f64 / 2.0,
                        (seg.end_frame() - seg.start_frame()) as f64 / 2.0,
                    );
                    let w = oracle_window(l, explicit_window);
                    (-oracle_penalty(f as f64, m, l, w, epsilon)).exp()
                })
                .collect()
        })
        .collect()
}

/// Closed form under zero logits: `n_s e^{-C_s} / sum_s' n_s' e^{-C_s'}`.
pub fn closed_form_occupancy(
    schedule: &SegmentSchedule,
    tokens_per_prompt: usize,
    epsilon: f64,
    explicit_window: Option<f64>,
) -> Vec<Vec<f64>> {
    let n = tokens_per_prompt as f64;
    oracle_priors(schedule, epsilon, explicit_window)
        .into_iter()
        .map(|priors| {
            let z: f64 = priors.iter().map(|p| n * p).sum();
            priors.iter().map(|p| n * p / z).collect()
        })
        .collect()
}

/// Brute-force dense attention on zero logits: expands every query and key,
/// exponentiates `0 - C` per pair and averages grouped weights per frame.
pub fn brute_force_occupancy(
    schedule: &SegmentSchedule,
    tokens_per_frame: usize,
    tokens_per_prompt: usize,
    epsilon: f64,
    explicit_window: Option<f64>,
) -> Vec<Vec<f64>> {
    let segs = schedule.segments();
    let keys: Vec<usize> = (0..segs.len())
        .flat_map(|s| std::iter::repeat_n(s, tokens_per_prompt))
        .collect();
    let mut rows = vec![vec![0.0; segs.len()]; schedule.video_frames()];
    for q in 0..schedule.video_frames() * tokens_per_frame {
        let frame = q / tokens_per_frame;
        let logits: Vec<f64> = keys
            .iter()
            .map(|&s| {
                let seg = &segs[s];
                let m = (seg.start_frame() as f64 + seg.end_frame() as f64) * 0.5;
                let l = (seg.end_frame() as f64 - seg.start_frame() as f64) * 0.5;
                let w = oracle_window(l, explicit_window);
                0.0 - oracle_penalty(frame as f64, m, l, w, epsilon)
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (k, &s) in keys.iter().enumerate() {
            rows[frame][s] += exps[k] / z / tokens_per_frame as f64;
        }
    }
    rows
}

/// Hard-mask occupancy under zero logits: one-hot on the owning segment.
pub fn hard_occupancy(schedule: &SegmentSchedule) -> Vec<Vec<f64>> {
    (0..schedule.video_frames())
        .map(|f| {
            schedule
                .segments()
                .iter()
                .map(|s| if (s.start_frame()..=s.end_frame()).contains(&f) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn max_row_l1(a: &[Vec<f64>], rows: &DenseMatrix) -> f64 {
    a.iter()
        .enumerate()
        .map(|(r, row)| row.iter().zip(rows.row(r)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[Vec<f64>], rows: &DenseMatrix) -> f64 {
    a.iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().zip(rows.row(r)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Checks every row sums to 1 within 1e-9 with no NaN or negative entries.
pub fn check_row_stochastic(m: &DenseMatrix) -> Result<(), String> {
    for (r, row) in m.row_iter().enumerate() {
        if let Some(x) = row.iter().find(|x| x.is_nan() || **x < 0.0 || **x > 1.0) {
            return Err(format!("row {r} has entry {x}"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("row {r} sums to {sum}"));
        }
    }
    Ok(())
}

/// A random attention problem over a random schedule.
pub struct RandomInstance {
    pub schedule: SegmentSchedule,
    pub layout: TokenLayout,
    pub inputs: AttentionInputs,
    pub epsilon: f64,
}

/// Seeded instance with at most 32 queries and 64 keys.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.gen_range(2..=16usize);
    let tokens_per_frame = rng.gen_range(1..=32 / frames);

    let mut lengths = Vec::new();
    let mut left = frames;
    while left > 0 {
        let len = if left <= 3 { left } else { rng.gen_range(2..=left - 2) };
        lengths.push(len);
        left -= len;
    }
    let global = rng.gen_bool(0.3);
    let schedule = schedule_from_lengths(&lengths, global.then_some("global"));

    let budget = 64 / (lengths.len() + usize::from(global));
    let counts: HashMap<String, usize> = schedule
        .segments()
        .iter()
        .map(|s| (s.prompt_id().to_owned(), rng.gen_range(1..=budget)))
        .collect();
    let global_tokens = if global { rng.gen_range(1..=budget) } else { 0 };
    let layout = build_token_layout(&schedule, tokens_per_frame, &counts, global_tokens).unwrap();

    let d = rng.gen_range(1..=8usize);
    let dv = rng.gen_range(1..=4usize);
    let spread = rng.gen_range(0.1..4.0);
    let mut fill = |r, c| DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-spread..spread));
    let q = fill(layout.query_count(), d);
    let k = fill(layout.key_count(), d);
    let v = fill(layout.key_count(), dv);
    let inputs = AttentionInputs::new(q, k, v).unwrap();

    let epsilon = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).gen_range(1e-6..0.9);
    RandomInstance {
        schedule,
        layout,
        inputs,
        epsilon,
    }
}

//! Fixtures shared by the routing benchmarks.

use relay_core::{uniform_token_layout, validate_schedule, ScheduleFile, SegmentSchedule, SegmentSpec, TokenLayout};

/// `segments` equal-length segments tiling `frames` latent frames (the last
/// segment absorbs the remainder).
pub fn even_schedule(frames: usize, segments: usize, global: bool) -> SegmentSchedule {
    let len = frames / segments;
    let specs = (0..segments)
        .map(|s| {
            let end = if s + 1 == segments { frames - 1 } else { (s + 1) * len - 1 };
            SegmentSpec::new(format!("p{s}"), s * len, end)
        })
        .collect();
    validate_schedule(&ScheduleFile {
        video_frames: frames,
        global_prompt: global.then(|| "global".to_owned()),
        segments: specs,
    })
    .expect("even schedule is valid")
}

pub fn layout(schedule: &SegmentSchedule, tokens_per_frame: usize, tokens_per_prompt: usize) -> TokenLayout {
    let global = if schedule.global_prompt_id().is_some() { tokens_per_prompt } else { 0 };
    uniform_token_layout(schedule, tokens_per_frame, tokens_per_prompt, global).expect("layout")
}

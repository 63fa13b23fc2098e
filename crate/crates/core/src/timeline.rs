//! Prompt timelines: segments bound to latent-frame intervals, schedule
//! validation, and the token-index layout used by the attention kernels.
//!
//! Frame intervals are inclusive on both ends and measured in latent frames.
//! Query tokens are flattened frame-major, so query `i` sits on latent frame
//! `i / tokens_per_frame`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based position of a segment in its schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(pub usize);

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// On-disk schedule description (JSON). Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub video_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_prompt: Option<String>,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub prompt: String,
    pub start: usize,
    pub end: usize,
}

impl SegmentSpec {
    pub fn new(prompt: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            prompt: prompt.into(),
            start,
            end,
        }
    }
}

impl ScheduleFile {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

/// A prompt bound to the inclusive latent-frame interval `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSegment {
    id: SegmentId,
    prompt_id: String,
    start_frame: usize,
    end_frame: usize,
    midpoint: f64,
    half_length: f64,
}

impl TemporalSegment {
    fn new(id: SegmentId, prompt_id: String, start_frame: usize, end_frame: usize) -> Self {
        let (s, e) = (start_frame as f64, end_frame as f64);
        Self {
            id,
            prompt_id,
            start_frame,
            end_frame,
            midpoint: (s + e) / 2.0,
            half_length: (e - s) / 2.0,
        }
    }

    pub fn id(&self) -> SegmentId {
        self.id
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn start_frame(&self) -> usize {
        self.start_frame
    }

    pub fn end_frame(&self) -> usize {
        self.end_frame
    }

    /// Segment centre `(start + end) / 2`.
    pub fn midpoint(&self) -> f64 {
        self.midpoint
    }

    /// Distance from the midpoint to either endpoint.
    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn frame_count(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }
}

/// A validated, gap-free and non-overlapping timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSchedule {
    video_frames: usize,
    segments: Vec<TemporalSegment>,
    global_prompt_id: Option<String>,
}

impl SegmentSchedule {
    pub fn video_frames(&self) -> usize {
        self.video_frames
    }

    pub fn segments(&self) -> &[TemporalSegment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&TemporalSegment> {
        id.0.checked_sub(1).and_then(|idx| self.segments.get(idx))
    }

    pub fn global_prompt_id(&self) -> Option<&str> {
        self.global_prompt_id.as_deref()
    }

    /// The unique segment covering `frame`, if the frame is inside the video.
    pub fn segment_at(&self, frame: usize) -> Option<&TemporalSegment> {
        let idx = self
            .segments
            .partition_point(|seg| seg.end_frame < frame);
        self.segments.get(idx).filter(|seg| seg.contains(frame))
    }

    /// Prompt ids in occupancy-column order: segments first, global last.
    pub fn prompt_ids(&self) -> Vec<&str> {
        self.segments
            .iter()
            .map(|s| s.prompt_id.as_str())
            .chain(self.global_prompt_id.as_deref())
            .collect()
    }

    /// Serializable form of this schedule; validating it yields `self` again.
    pub fn to_file(&self) -> ScheduleFile {
        ScheduleFile {
            video_frames: self.video_frames,
            global_prompt: self.global_prompt_id.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentSpec::new(s.prompt_id.clone(), s.start_frame, s.end_frame))
                .collect(),
        }
    }
}

/// Normalizes and validates a raw schedule.
///
/// Segments are sorted by start frame and must tile `[0, video_frames - 1]`
/// exactly once. Prompt ids, including the global prompt, must be distinct.
pub fn validate_schedule(raw: &ScheduleFile) -> Result<SegmentSchedule> {
    if raw.segments.is_empty() {
        return Err(Error::EmptySchedule);
    }

    let mut specs: Vec<&SegmentSpec> = raw.segments.iter().collect();
    specs.sort_by_key(|s| (s.start, s.end));

    for spec in &specs {
        if spec.start > spec.end || spec.end >= raw.video_frames {
            return Err(Error::Bounds {
                prompt: spec.prompt.clone(),
                start: spec.start,
                end: spec.end,
                video_frames: raw.video_frames,
            });
        }
    }

    let mut next_free = 0;
    for spec in &specs {
        if spec.start < next_free {
            return Err(Error::Overlap { frame: spec.start });
        }
        if spec.start > next_free {
            return Err(Error::Gap { frame: next_free });
        }
        next_free = spec.end + 1;
    }
    if next_free < raw.video_frames {
        return Err(Error::Gap { frame: next_free });
    }

    let mut seen = HashSet::new();
    for prompt in specs
        .iter()
        .map(|s| s.prompt.as_str())
        .chain(raw.global_prompt.as_deref())
    {
        if !seen.insert(prompt) {
            return Err(Error::DuplicatePrompt {
                prompt: prompt.to_owned(),
            });
        }
    }

    let segments = specs
        .iter()
        .enumerate()
        .map(|(idx, s)| TemporalSegment::new(SegmentId(idx + 1), s.prompt.clone(), s.start, s.end))
        .collect();

    Ok(SegmentSchedule {
        video_frames: raw.video_frames,
        segments,
        global_prompt_id: raw.global_prompt.clone(),
    })
}

/// Which prompt a key token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyOwner {
    Segment(SegmentId),
    Global,
}

/// Mapping of query tokens to latent frames and key tokens to prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLayout {
    video_frames: usize,
    tokens_per_frame: usize,
    query_frame: Vec<usize>,
    key_owner: Vec<KeyOwner>,
}

impl TokenLayout {
    pub fn query_count(&self) -> usize {
        self.query_frame.len()
    }

    pub fn key_count(&self) -> usize {
        self.key_owner.len()
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.tokens_per_frame
    }

    pub fn video_frames(&self) -> usize {
        self.video_frames
    }

    /// Latent frame `f(i)` of query `i`.
    pub fn query_frame(&self, query: usize) -> usize {
        self.query_frame[query]
    }

    pub fn query_frames(&self) -> &[usize] {
        &self.query_frame
    }

    pub fn key_owner(&self, key: usize) -> KeyOwner {
        self.key_owner[key]
    }

    pub fn key_owners(&self) -> &[KeyOwner] {
        &self.key_owner
    }

    /// Number of keys owned by `owner`.
    pub fn key_count_for(&self, owner: KeyOwner) -> usize {
        self.key_owner.iter().filter(|&&o| o == owner).count()
    }

    /// Checks that this layout was built for `schedule`.
    pub fn check_against(&self, schedule: &SegmentSchedule) -> Result<()> {
        if self.video_frames != schedule.video_frames() {
            return Err(Error::Layout(format!(
                "layout covers {} frames, schedule has {}",
                self.video_frames,
                schedule.video_frames()
            )));
        }
        for owner in &self.key_owner {
            match owner {
                KeyOwner::Segment(id) if schedule.segment(*id).is_none() => {
                    return Err(Error::Layout(format!("key owned by unknown segment {id}")));
                }
                KeyOwner::Global if schedule.global_prompt_id().is_none() => {
                    return Err(Error::Layout(
                        "global key present but schedule has no global prompt".into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Lays out query and key tokens for `schedule`.
///
/// Keys are grouped segment by segment in schedule order; global keys come
/// last. `global_tokens` must be positive exactly when the schedule has a
/// global prompt.
pub fn build_token_layout(
    schedule: &SegmentSchedule,
    tokens_per_frame: usize,
    tokens_per_prompt: &HashMap<String, usize>,
    global_tokens: usize,
) -> Result<TokenLayout> {
    if tokens_per_frame == 0 {
        return Err(Error::Config("tokens_per_frame must be at least 1".into()));
    }
    match (schedule.global_prompt_id(), global_tokens) {
        (Some(g), 0) => {
            return Err(Error::Config(format!(
                "global prompt '{g}' needs at least one token"
            )))
        }
        (None, n) if n > 0 => {
            return Err(Error::Config(
                "global tokens given but the schedule has no global prompt".into(),
            ))
        }
        _ => {}
    }

    let query_frame = (0..schedule.video_frames() * tokens_per_frame)
        .map(|i| i / tokens_per_frame)
        .collect();

    let mut key_owner = Vec::new();
    for seg in schedule.segments() {
        let count = *tokens_per_prompt
            .get(seg.prompt_id())
            .ok_or_else(|| Error::MissingTokenCount {
                prompt: seg.prompt_id().to_owned(),
            })?;
        if count == 0 {
            return Err(Error::Config(format!(
                "prompt '{}' needs at least one token",
                seg.prompt_id()
            )));
        }
        key_owner.extend(std::iter::repeat_n(KeyOwner::Segment(seg.id()), count));
    }
    key_owner.extend(std::iter::repeat_n(KeyOwner::Global, global_tokens));

    Ok(TokenLayout {
        video_frames: schedule.video_frames(),
        tokens_per_frame,
        query_frame,
        key_owner,
    })
}

/// Same as [`build_token_layout`] with one token count shared by every
/// scheduled prompt.
pub fn uniform_token_layout(
    schedule: &SegmentSchedule,
    tokens_per_frame: usize,
    tokens_per_prompt: usize,
    global_tokens: usize,
) -> Result<TokenLayout> {
    let counts = schedule
        .segments()
        .iter()
        .map(|s| (s.prompt_id().to_owned(), tokens_per_prompt))
        .collect();
    build_token_layout(schedule, tokens_per_frame, &counts, global_tokens)
}

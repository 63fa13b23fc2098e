use thiserror::Error;

use crate::timeline::SegmentId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("matrix data has {len} entries, expected {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("{op}: entry ({row}, {col}) is {value}, which is not allowed here")]
    NonFinite {
        op: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("row {row} has no finite logit (every key is blocked)")]
    DegenerateRow { row: usize },

    #[error("query {query} at latent frame {frame} is blocked from every key")]
    FullyBlocked { query: usize, frame: usize },

    #[error("empty schedule")]
    EmptySchedule,

    #[error("overlap at frame {frame}")]
    Overlap { frame: usize },

    #[error("gap at frame {frame}")]
    Gap { frame: usize },

    #[error("segment '{prompt}' [{start}, {end}] lies outside the video (0..{video_frames})")]
    Bounds {
        prompt: String,
        start: usize,
        end: usize,
        video_frames: usize,
    },

    #[error("prompt '{prompt}' is used more than once")]
    DuplicatePrompt { prompt: String },

    #[error("no token count given for prompt '{prompt}'")]
    MissingTokenCount { prompt: String },

    #[error("token layout does not match schedule: {0}")]
    Layout(String),

    #[error("degenerate window{}: w = {window} must satisfy 0 <= w < L = {half_length}", segment_suffix(.segment))]
    DegenerateWindow {
        segment: Option<SegmentId>,
        half_length: f64,
        window: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

fn segment_suffix(segment: &Option<SegmentId>) -> String {
    match segment {
        Some(id) => format!(" in segment {id}"),
        None => String::new(),
    }
}

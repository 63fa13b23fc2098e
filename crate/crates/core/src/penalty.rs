//! Boundary-attention decay penalties.
//!
//! For a query on latent frame `f` and a key belonging to segment `s`, the
//! soft penalty is
//!
//! ```text
//! C = relu(|f - m_s| - w)^2 / (2 sigma^2),   sigma = (L - w) / sqrt(2 ln(1/eps))
//! ```
//!
//! so the multiplicative prior `exp(-C)` is 1 inside the free window `|f - m_s| <= w`
//! and reaches exactly `eps` at the segment endpoints `|f - m_s| = L`.
//! Hard masking uses `C = +inf` for queries outside the segment, which the
//! attention kernel turns into a `-inf` logit.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::timeline::{KeyOwner, SegmentId, SegmentSchedule, TemporalSegment, TokenLayout};

/// Decay threshold used when none is given.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Under [`WindowPolicy::Auto`] the decay band `L - w` is this many frames.
pub const AUTO_DECAY_BAND: f64 = 2.0;

/// Offset grid resolution for decay curves (0.05 latent frames).
pub const CURVE_STEPS_PER_FRAME: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    /// `w = max(L - 2, 0)` per segment.
    Auto,
    /// Fixed free-attention half-width in latent frames.
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyMode {
    Soft,
    Hard,
    Off,
}

impl PenaltyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyMode::Soft => "SOFT",
            PenaltyMode::Hard => "HARD",
            PenaltyMode::Off => "OFF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub epsilon: f64,
    pub window: WindowPolicy,
    pub mode: PenaltyMode,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            window: WindowPolicy::Auto,
            mode: PenaltyMode::Soft,
        }
    }
}

impl PenaltyConfig {
    pub fn soft(epsilon: f64, window: WindowPolicy) -> Self {
        Self {
            epsilon,
            window,
            mode: PenaltyMode::Soft,
        }
    }

    pub fn with_mode(mut self, mode: PenaltyMode) -> Self {
        self.mode = mode;
        self
    }

    /// Checks the segment-independent parts of the config.
    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if let WindowPolicy::Explicit(w) = self.window {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "window must be a finite non-negative number of frames, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Free-attention half-width for a segment of the given half-length.
    pub fn window_for(&self, half_length: f64) -> f64 {
        match self.window {
            WindowPolicy::Auto => (half_length - AUTO_DECAY_BAND).max(0.0),
            WindowPolicy::Explicit(w) => w,
        }
    }

    /// Window and sigma for one segment under this config.
    pub fn segment_decay(&self, segment: &TemporalSegment) -> Result<SegmentDecay> {
        let half_length = segment.half_length();
        let window = self.window_for(half_length);
        let sigma = sigma_for(half_length, window, self.epsilon).map_err(|e| match e {
            Error::DegenerateWindow {
                half_length,
                window,
                ..
            } => Error::DegenerateWindow {
                segment: Some(segment.id()),
                half_length,
                window,
            },
            other => other,
        })?;
        Ok(SegmentDecay { window, sigma })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "epsilon must lie strictly between 0 and 1, got {epsilon}"
        )))
    }
}

/// Decay width such that the prior `exp(-C)` equals `epsilon` at distance
/// `half_length` from the midpoint.
pub fn sigma_for(half_length: f64, window: f64, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    // The negated comparison also catches NaN.
    if !(window >= 0.0 && window < half_length) || !half_length.is_finite() {
        return Err(Error::DegenerateWindow {
            segment: None,
            half_length,
            window,
        });
    }
    Ok((half_length - window) / (2.0 * (1.0 / epsilon).ln()).sqrt())
}

/// Penalty for a query at signed distance `offset` from a segment midpoint.
#[inline]
pub fn penalty_at_offset(offset: f64, window: f64, sigma: f64) -> f64 {
    let excess = (offset.abs() - window).max(0.0);
    excess * excess / (2.0 * sigma * sigma)
}

/// Penalty between a query on latent frame `frame` and a key of `segment`.
pub fn penalty_value(frame: f64, segment: &TemporalSegment, window: f64, sigma: f64) -> f64 {
    penalty_at_offset(frame - segment.midpoint(), window, sigma)
}

/// Resolved window and sigma of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDecay {
    pub window: f64,
    pub sigma: f64,
}

impl SegmentDecay {
    pub fn penalty(&self, frame: f64, segment: &TemporalSegment) -> f64 {
        penalty_value(frame, segment, self.window, self.sigma)
    }
}

/// Dense `query_count x key_count` matrix of penalties `C(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    values: DenseMatrix,
    mode: PenaltyMode,
    query_frames: Vec<usize>,
}

impl PenaltyMatrix {
    /// Wraps an arbitrary penalty matrix, one latent frame per query row.
    ///
    /// Entries must be non-negative; `+inf` is only accepted in hard mode.
    pub fn from_raw(values: DenseMatrix, mode: PenaltyMode) -> Result<Self> {
        let query_frames = (0..values.rows()).collect();
        Self::with_frames(values, mode, query_frames)
    }

    pub fn with_frames(
        values: DenseMatrix,
        mode: PenaltyMode,
        query_frames: Vec<usize>,
    ) -> Result<Self> {
        if query_frames.len() != values.rows() {
            return Err(Error::Layout(format!(
                "{} query frames for {} penalty rows",
                query_frames.len(),
                values.rows()
            )));
        }
        for (idx, &c) in values.data().iter().enumerate() {
            let ok = match mode {
                PenaltyMode::Hard => c >= 0.0,
                PenaltyMode::Soft => c >= 0.0 && c.is_finite(),
                PenaltyMode::Off => c == 0.0,
            };
            if !ok {
                return Err(Error::NonFinite {
                    op: "penalty",
                    row: idx / values.cols(),
                    col: idx % values.cols(),
                    value: c,
                });
            }
        }
        Ok(Self {
            values,
            mode,
            query_frames,
        })
    }

    pub fn zeros(queries: usize, keys: usize) -> Self {
        Self {
            values: DenseMatrix::zeros(queries, keys),
            mode: PenaltyMode::Off,
            query_frames: (0..queries).collect(),
        }
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn mode(&self) -> PenaltyMode {
        self.mode
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn get(&self, query: usize, key: usize) -> f64 {
        self.values.get(query, key)
    }

    pub fn query_frame(&self, query: usize) -> usize {
        self.query_frames[query]
    }

    /// `exp(-C)` elementwise.
    pub fn prior(&self) -> DenseMatrix {
        self.values.map(|c| (-c).exp())
    }
}

/// Builds the penalty matrix for every (query, key) pair of `layout`.
///
/// Keys owned by the global prompt are never penalized.
pub fn build_penalty_matrix(
    schedule: &SegmentSchedule,
    layout: &TokenLayout,
    config: &PenaltyConfig,
) -> Result<PenaltyMatrix> {
    config.validate()?;
    layout.check_against(schedule)?;

    let (queries, keys) = (layout.query_count(), layout.key_count());
    let mut values = DenseMatrix::zeros(queries, keys);

    if config.mode != PenaltyMode::Off {
        let decays = match config.mode {
            PenaltyMode::Soft => schedule
                .segments()
                .iter()
                .map(|seg| config.segment_decay(seg).map(Some))
                .collect::<Result<Vec<_>>>()?,
            _ => vec![None; schedule.segments().len()],
        };

        let segment_penalty = |frame: usize, id: SegmentId| -> f64 {
            let seg = schedule.segment(id).expect("layout checked against schedule");
            match decays[id.0 - 1] {
                Some(decay) => decay.penalty(frame as f64, seg),
                None if seg.contains(frame) => 0.0,
                None => f64::INFINITY,
            }
        };

        // Rows only depend on the query's frame; compute one row per frame
        // and copy it to the frame's remaining queries.
        let mut frame_row = vec![0.0; keys];
        let mut row_frame = None;
        for q in 0..queries {
            let frame = layout.query_frame(q);
            if row_frame != Some(frame) {
                for (k, c) in frame_row.iter_mut().enumerate() {
                    *c = match layout.key_owner(k) {
                        KeyOwner::Global => 0.0,
                        KeyOwner::Segment(id) => segment_penalty(frame, id),
                    };
                }
                row_frame = Some(frame);
            }
            values.row_mut(q).copy_from_slice(&frame_row);
        }
    }

    Ok(PenaltyMatrix {
        values,
        mode: config.mode,
        query_frames: layout.query_frames().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub offset: f64,
    pub retained_fraction: f64,
}

/// Retained attention fraction `exp(-C)` as a function of the offset from a
/// segment midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub half_length: f64,
    pub window: f64,
    pub epsilon: f64,
    pub points: Vec<CurvePoint>,
}

impl DecayCurve {
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.retained_fraction)
    }
}

pub fn decay_curve(
    half_length: f64,
    window: f64,
    epsilon: f64,
    offsets: &[f64],
) -> Result<DecayCurve> {
    let sigma = sigma_for(half_length, window, epsilon)?;
    if let Some(bad) = offsets.iter().find(|o| !o.is_finite()) {
        return Err(Error::Config(format!("curve offset {bad} is not finite")));
    }
    let points = offsets
        .iter()
        .map(|&offset| CurvePoint {
            offset,
            retained_fraction: (-penalty_at_offset(offset, window, sigma)).exp(),
        })
        .collect();
    Ok(DecayCurve {
        half_length,
        window,
        epsilon,
        points,
    })
}

/// Offsets `k / 20` covering `[-1.5 L, 1.5 L]`.
///
/// Offsets are exact multiples of 1/20 so integer and half-integer positions
/// such as `±L` and `±w` land on the grid exactly when they are multiples of
/// 0.05.
pub fn offset_grid(half_length: f64) -> Vec<f64> {
    let steps = f64::from(CURVE_STEPS_PER_FRAME);
    let n = (1.5 * half_length * steps + 1e-9).floor() as i64;
    (-n..=n).map(|k| k as f64 / steps).collect()
}

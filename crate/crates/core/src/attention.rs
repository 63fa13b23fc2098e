//! Single-head cross-attention with an additive logit penalty.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::penalty::PenaltyMatrix;

/// Query, key and value matrices of one attention call.
///
/// Projections are the caller's business; `Q` and `K` share the inner
/// dimension `d` and logits are scaled by `1 / sqrt(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    q: DenseMatrix,
    k: DenseMatrix,
    v: DenseMatrix,
}

impl AttentionInputs {
    pub fn new(q: DenseMatrix, k: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        let shape_err = |op, a: &DenseMatrix, b: &DenseMatrix| Error::Shape {
            op,
            left_rows: a.rows(),
            left_cols: a.cols(),
            right_rows: b.rows(),
            right_cols: b.cols(),
        };
        if q.cols() == 0 || q.cols() != k.cols() {
            return Err(shape_err("attention inputs (Q vs K)", &q, &k));
        }
        if k.rows() != v.rows() {
            return Err(shape_err("attention inputs (K vs V)", &k, &v));
        }
        Ok(Self { q, k, v })
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    /// Projection dimensionality `d`.
    pub fn dim(&self) -> usize {
        self.q.cols()
    }

    pub fn query_count(&self) -> usize {
        self.q.rows()
    }

    pub fn key_count(&self) -> usize {
        self.k.rows()
    }

    /// `Q K^T / sqrt(d)`.
    pub fn scaled_logits(&self) -> Result<DenseMatrix> {
        let scale = 1.0 / (self.dim() as f64).sqrt();
        Ok(self.q.matmul(&self.k.transpose())?.scale(scale))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `query_count x d_v`.
    pub output: DenseMatrix,
    /// Row-stochastic `query_count x key_count` attention weights.
    pub weights: DenseMatrix,
}

/// `softmax(Q K^T / sqrt(d)) V`.
pub fn attention(inputs: &AttentionInputs) -> Result<AttentionOutput> {
    let weights = inputs.scaled_logits()?.row_softmax()?;
    let output = weights.matmul(inputs.v())?;
    Ok(AttentionOutput { output, weights })
}

/// `softmax(Q K^T / sqrt(d) - C) V`.
///
/// Keys with `C = +inf` get a `-inf` logit directly. A query blocked from
/// every key is reported with its latent frame.
pub fn penalized_attention(
    inputs: &AttentionInputs,
    penalty: &PenaltyMatrix,
) -> Result<AttentionOutput> {
    check_penalty_shape(inputs, penalty)?;
    let mut logits = inputs.scaled_logits()?;
    for q in 0..logits.rows() {
        let row = logits.row_mut(q);
        for (l, &c) in row.iter_mut().zip(penalty.values().row(q)) {
            *l = if c == f64::INFINITY { f64::NEG_INFINITY } else { *l - c };
        }
    }
    let weights = logits.row_softmax().map_err(|e| match e {
        Error::DegenerateRow { row } => Error::FullyBlocked {
            query: row,
            frame: penalty.query_frame(row),
        },
        other => other,
    })?;
    let output = weights.matmul(inputs.v())?;
    Ok(AttentionOutput { output, weights })
}

/// Penalized attention computed as a multiplicative prior on the
/// unnormalized scores: `normalize(exp(l - max l) * exp(-C))`.
///
/// Uses explicit scalar loops throughout and shares no arithmetic with
/// [`penalized_attention`], so the two can be checked against each other.
pub fn prior_multiplier_oracle(
    inputs: &AttentionInputs,
    penalty: &PenaltyMatrix,
) -> Result<AttentionOutput> {
    check_penalty_shape(inputs, penalty)?;
    let (nq, nk, d) = (inputs.query_count(), inputs.key_count(), inputs.dim());
    let dv = inputs.v().cols();
    let sqrt_d = (d as f64).sqrt();

    let mut weights = DenseMatrix::zeros(nq, nk);
    let mut output = DenseMatrix::zeros(nq, dv);
    let mut scores = vec![0.0; nk];
    for i in 0..nq {
        for (j, s) in scores.iter_mut().enumerate() {
            let mut dot = 0.0;
            for t in 0..d {
                dot += inputs.q().get(i, t) * inputs.k().get(j, t);
            }
            *s = dot / sqrt_d;
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let mut total = 0.0;
        for (j, s) in scores.iter_mut().enumerate() {
            *s = (*s - max).exp() * (-penalty.get(i, j)).exp();
            total += *s;
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::FullyBlocked {
                query: i,
                frame: penalty.query_frame(i),
            });
        }
        for (j, s) in scores.iter().enumerate() {
            let w = s / total;
            weights.set(i, j, w);
            for c in 0..dv {
                let acc = output.get(i, c) + w * inputs.v().get(j, c);
                output.set(i, c, acc);
            }
        }
    }
    Ok(AttentionOutput { output, weights })
}

fn check_penalty_shape(inputs: &AttentionInputs, penalty: &PenaltyMatrix) -> Result<()> {
    let (rows, cols) = penalty.shape();
    if rows != inputs.query_count() || cols != inputs.key_count() {
        return Err(Error::Shape {
            op: "penalized attention (queries x keys vs penalty)",
            left_rows: inputs.query_count(),
            left_cols: inputs.key_count(),
            right_rows: rows,
            right_cols: cols,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::PenaltyMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Attention from explicit sums, no matrix products.
    fn scalar_attention(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix) -> Vec<Vec<f64>> {
        let d = q.cols() as f64;
        (0..q.rows())
            .map(|i| {
                let logits: Vec<f64> = (0..k.rows())
                    .map(|j| (0..q.cols()).map(|t| q.get(i, t) * k.get(j, t)).sum::<f64>() / d.sqrt())
                    .collect();
                let max = logits.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = e.iter().sum();
                (0..v.cols())
                    .map(|c| (0..k.rows()).map(|j| e[j] / z * v.get(j, c)).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_key() {
        let inputs = AttentionInputs::new(m(&[&[1.0]]), m(&[&[1.0]]), m(&[&[7.0]])).unwrap();
        let out = attention(&inputs).unwrap();
        assert_eq!(out.output.data(), &[7.0]);
        assert_eq!(out.weights.data(), &[1.0]);
    }

    #[test]
    fn identical_keys_split_evenly() {
        let k = m(&[&[0.3, -0.2], &[0.3, -0.2]]);
        let inputs = AttentionInputs::new(m(&[&[1.0, 2.0]]), k, m(&[&[1.0], &[3.0]])).unwrap();
        let out = attention(&inputs).unwrap();
        assert_eq!(out.weights.data(), &[0.5, 0.5]);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let (q, k, v) = (random(&mut rng, 4, 3), random(&mut rng, 4, 3), random(&mut rng, 4, 3));
        let want = scalar_attention(&q, &k, &v);
        let out = attention(&AttentionInputs::new(q, k, v).unwrap()).unwrap();
        let want = DenseMatrix::from_rows(&want).unwrap();
        assert!(out.output.max_abs_diff(&want).unwrap() <= 1e-10);
    }

    #[test]
    fn input_shapes_checked() {
        assert!(AttentionInputs::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(4, 2), DenseMatrix::zeros(4, 1)).is_err());
        assert!(AttentionInputs::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(4, 3), DenseMatrix::zeros(5, 1)).is_err());
        assert!(AttentionInputs::new(DenseMatrix::zeros(2, 0), DenseMatrix::zeros(4, 0), DenseMatrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn zero_penalty_is_bitwise_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inputs = AttentionInputs::new(random(&mut rng, 5, 4), random(&mut rng, 6, 4), random(&mut rng, 6, 2)).unwrap();
        let base = attention(&inputs).unwrap();
        let pen = penalized_attention(&inputs, &PenaltyMatrix::zeros(5, 6)).unwrap();
        assert_eq!(base, pen);
        let oracle = prior_multiplier_oracle(&inputs, &PenaltyMatrix::zeros(5, 6)).unwrap();
        assert!(oracle.weights.max_abs_diff(&base.weights).unwrap() < 1e-14);
    }

    #[test]
    fn prior_factor_example() {
        let inputs = AttentionInputs::new(m(&[&[0.0]]), m(&[&[0.0], &[0.0]]), m(&[&[1.0], &[0.0]])).unwrap();
        let c = m(&[&[0.0, std::f64::consts::LN_10]]);
        let penalty = PenaltyMatrix::from_raw(c, PenaltyMode::Soft).unwrap();
        for out in [
            penalized_attention(&inputs, &penalty).unwrap(),
            prior_multiplier_oracle(&inputs, &penalty).unwrap(),
        ] {
            assert!((out.weights.get(0, 0) - 1.0 / 1.1).abs() < 1e-12);
            assert!((out.weights.get(0, 1) - 0.1 / 1.1).abs() < 1e-12);
            assert!((out.weights.get(0, 0) - 0.90909).abs() < 1e-5);
        }
    }

    #[test]
    fn hard_block_ignores_logits() {
        let inputs = AttentionInputs::new(m(&[&[5.0]]), m(&[&[-3.0], &[40.0]]), m(&[&[1.0], &[2.0]])).unwrap();
        let c = m(&[&[0.0, f64::INFINITY]]);
        let penalty = PenaltyMatrix::from_raw(c, PenaltyMode::Hard).unwrap();
        let out = penalized_attention(&inputs, &penalty).unwrap();
        assert_eq!(out.weights.data(), &[1.0, 0.0]);
        assert_eq!(out.output.data(), &[1.0]);
        let oracle = prior_multiplier_oracle(&inputs, &penalty).unwrap();
        assert_eq!(oracle.weights.data(), &[1.0, 0.0]);
    }

    #[test]
    fn fully_blocked_query_reports_frame() {
        let inputs = AttentionInputs::new(DenseMatrix::zeros(3, 1), DenseMatrix::zeros(2, 1), DenseMatrix::zeros(2, 1)).unwrap();
        let inf = f64::INFINITY;
        let c = m(&[&[0.0, inf], &[0.0, 0.0], &[inf, inf]]);
        let penalty = PenaltyMatrix::with_frames(c, PenaltyMode::Hard, vec![0, 0, 1]).unwrap();
        let want = Error::FullyBlocked { query: 2, frame: 1 };
        assert_eq!(penalized_attention(&inputs, &penalty).unwrap_err(), want);
        assert_eq!(prior_multiplier_oracle(&inputs, &penalty).unwrap_err(), want);
    }

    #[test]
    fn single_key_weight_is_one_under_any_finite_penalty() {
        let inputs = AttentionInputs::new(m(&[&[0.4]]), m(&[&[-1.2]]), m(&[&[3.0]])).unwrap();
        for c in [0.0, 1.0, 300.0] {
            let penalty = PenaltyMatrix::from_raw(m(&[&[c]]), PenaltyMode::Soft).unwrap();
            assert_eq!(penalized_attention(&inputs, &penalty).unwrap().weights.data(), &[1.0]);
            assert_eq!(prior_multiplier_oracle(&inputs, &penalty).unwrap().weights.data(), &[1.0]);
        }
    }

    #[test]
    fn penalty_shape_checked() {
        let inputs = AttentionInputs::new(DenseMatrix::zeros(2, 1), DenseMatrix::zeros(3, 1), DenseMatrix::zeros(3, 1)).unwrap();
        assert!(matches!(
            penalized_attention(&inputs, &PenaltyMatrix::zeros(2, 2)),
            Err(Error::Shape { .. })
        ));
    }
}

//! Scalar selective-state recurrence `h[t+1] = a[t+1] * h[t] + b[t+1] * x[t+1]`
//! evaluated directly and in chunked form.
//!
//! The chunked kernel splits the sequence into chunks of length `l`. Each
//! chunk is summarised by its total decay `A_c` and its zero-start
//! contribution `U_c`; chunk start states follow from a scan over
//! `(A_c, U_c)` pairs, and states inside a chunk depend only on the chunk
//! start state.

use rand::Rng;

use crate::error::{Error, Result};

/// Inputs of one recurrence channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceTrace {
    pub a_seq: Vec<f64>,
    pub b_seq: Vec<f64>,
    pub x_seq: Vec<f64>,
    pub h0: f64,
}

impl RecurrenceTrace {
    pub fn new(a_seq: Vec<f64>, b_seq: Vec<f64>, x_seq: Vec<f64>) -> Result<Self> {
        let trace = RecurrenceTrace {
            a_seq,
            b_seq,
            x_seq,
            h0: 0.0,
        };
        trace.check()?;
        Ok(trace)
    }

    pub fn with_h0(mut self, h0: f64) -> Self {
        self.h0 = h0;
        self
    }

    /// Random trace with `|a| <= 1`, and `b`, `x` uniform in `[-1, 1]`.
    pub fn random(rng: &mut impl Rng, s: usize) -> Self {
        let mut draw = || (0..s).map(|_| rng.gen_range(-1.0..=1.0)).collect::<Vec<f64>>();
        let a_seq = draw();
        let b_seq = draw();
        let x_seq = draw();
        RecurrenceTrace {
            a_seq,
            b_seq,
            x_seq,
            h0: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.a_seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_seq.is_empty()
    }

    fn check(&self) -> Result<()> {
        let (a, b, x) = (self.a_seq.len(), self.b_seq.len(), self.x_seq.len());
        if a != b || a != x {
            return Err(Error::LengthMismatch(format!("a={a}, b={b}, x={x}")));
        }
        Ok(())
    }

    fn input(&self, t: usize) -> f64 {
        self.b_seq[t] * self.x_seq[t]
    }
}

/// States `h[1..=s]` by stepping the recurrence.
pub fn run_recurrence_direct(trace: &RecurrenceTrace) -> Result<Vec<f64>> {
    trace.check()?;
    let mut h = trace.h0;
    Ok((0..trace.len())
        .map(|t| {
            h = trace.a_seq[t] * h + trace.input(t);
            h
        })
        .collect())
}

/// Per-chunk `(A_c, U_c)`: product of decays and the state reached from a
/// zero start.
pub fn chunk_summaries(trace: &RecurrenceTrace, l: usize) -> Result<Vec<(f64, f64)>> {
    trace.check()?;
    check_chunk(trace.len(), l)?;
    Ok((0..trace.len() / l)
        .map(|c| {
            let base = c * l;
            let mut decay = 1.0;
            let mut u = 0.0;
            // U_c = sum_i (prod_{m > i} a_m) * b_i x_i, accumulated from the
            // last position backwards so every product is formed once.
            for i in (0..l).rev() {
                u += decay * trace.input(base + i);
                decay *= trace.a_seq[base + i];
            }
            (decay, u)
        })
        .collect())
}

/// Chunk start states `H_0 .. H_{C-1}` via an inclusive scan of the
/// associative operator `(A1, U1) . (A2, U2) = (A1 A2, A2 U1 + U2)`.
///
/// The scan runs in three phases over blocks of chunks: cumulative decay
/// products inside each block, multiplication of the block carry into
/// those products, and summation of contributions.
pub fn chunk_starts_scan(summaries: &[(f64, f64)], h0: f64) -> Vec<f64> {
    const BLOCK: usize = 8;
    let mut starts = Vec::with_capacity(summaries.len());
    let mut carry = h0;
    for block in summaries.chunks(BLOCK) {
        // Phase 1: local inclusive prefix of the operator inside the block.
        let mut local = Vec::with_capacity(block.len());
        let mut acc = (1.0, 0.0);
        for &(a, u) in block {
            acc = (acc.0 * a, a * acc.1 + u);
            local.push(acc);
        }
        // Phases 2 and 3: fold the incoming carry into each prefix.
        starts.push(carry);
        for &(prod, sum) in &local[..local.len() - 1] {
            starts.push(prod * carry + sum);
        }
        let (prod, sum) = local[local.len() - 1];
        carry = prod * carry + sum;
    }
    starts
}

/// Chunk start states by expanding `H_c = sum_i (prod_{j=i}^{c-1} A_j) U_i`
/// term by term; quadratic in the chunk count.
pub fn chunk_starts_naive(summaries: &[(f64, f64)], h0: f64) -> Vec<f64> {
    (0..summaries.len())
        .map(|c| {
            let mut total = summaries[..c].iter().map(|s| s.0).product::<f64>() * h0;
            for i in 0..c {
                let decay: f64 = summaries[i + 1..c].iter().map(|s| s.0).product();
                total += decay * summaries[i].1;
            }
            total
        })
        .collect()
}

/// States `h[1..=s]` from chunk start states and the intra-chunk expansion
/// `h_{c,j} = (prod_{m<=j} a) H_c + sum_{i<=j} (prod_{i<m<=j} a) b_i x_i`.
pub fn run_recurrence_chunked(trace: &RecurrenceTrace, l: usize) -> Result<Vec<f64>> {
    let summaries = chunk_summaries(trace, l)?;
    let starts = chunk_starts_scan(&summaries, trace.h0);
    let mut out = vec![0.0; trace.len()];
    for (c, &start) in starts.iter().enumerate() {
        let base = c * l;
        for j in 0..l {
            let mut decay_from_start = 1.0;
            for m in 0..=j {
                decay_from_start *= trace.a_seq[base + m];
            }
            let mut value = decay_from_start * start;
            for i in 0..=j {
                let mut seg = 1.0;
                for m in i + 1..=j {
                    seg *= trace.a_seq[base + m];
                }
                value += seg * trace.input(base + i);
            }
            out[base + j] = value;
        }
    }
    Ok(out)
}

/// Largest `|chunked - direct| / max(|direct|, 1)` over the sequence.
pub fn max_relative_error(direct: &[f64], chunked: &[f64]) -> f64 {
    direct
        .iter()
        .zip(chunked)
        .map(|(d, c)| (d - c).abs() / d.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn check_chunk(s: usize, l: usize) -> Result<()> {
    if l == 0 || !s.is_multiple_of(l) {
        return Err(Error::Chunking {
            seq: s as u64,
            chunk: l as u64,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_coefficients_count_steps() {
        let t = RecurrenceTrace::new(vec![1.0; 12], vec![1.0; 12], vec![1.0; 12]).unwrap();
        let expect: Vec<f64> = (1..=12).map(f64::from).collect();
        assert_eq!(run_recurrence_direct(&t).unwrap(), expect);
        assert_eq!(run_recurrence_chunked(&t, 4).unwrap(), expect);
    }

    #[test]
    fn zero_decay_has_no_carry() {
        let b = vec![0.5, -2.0, 3.0, 1.0];
        let x = vec![2.0, 1.0, -1.0, 4.0];
        let t = RecurrenceTrace::new(vec![0.0; 4], b.clone(), x.clone()).unwrap().with_h0(9.0);
        let expect: Vec<f64> = b.iter().zip(&x).map(|(b, x)| b * x).collect();
        assert_eq!(run_recurrence_direct(&t).unwrap(), expect);
        assert_eq!(run_recurrence_chunked(&t, 2).unwrap(), expect);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(
            RecurrenceTrace::new(vec![1.0; 3], vec![1.0; 2], vec![1.0; 3]),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn chunk_must_divide() {
        let t = RecurrenceTrace::new(vec![1.0; 6], vec![1.0; 6], vec![1.0; 6]).unwrap();
        assert!(matches!(run_recurrence_chunked(&t, 4), Err(Error::Chunking { .. })));
    }

    #[test]
    fn four_chunk_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let t = RecurrenceTrace::random(&mut rng, 16);
        let sums = chunk_summaries(&t, 4).unwrap();
        let (a, u): (Vec<f64>, Vec<f64>) = sums.iter().copied().unzip();
        // States at the end of each chunk.
        let h1 = u[0];
        let h2 = a[1] * h1 + u[1];
        let h3 = a[2] * (a[1] * u[0] + u[1]) + u[2];
        let h4 = a[3] * (a[2] * (a[1] * u[0] + u[1]) + u[2]) + u[3];
        let direct = run_recurrence_direct(&t).unwrap();
        for (got, want) in [direct[3], direct[7], direct[11], direct[15]].iter().zip([h1, h2, h3, h4]) {
            assert!((got - want).abs() < 1e-12);
        }
        let starts = chunk_starts_scan(&sums, 0.0);
        assert_eq!(starts[0], 0.0);
        assert!((starts[1] - h1).abs() < 1e-12);
        assert!((starts[3] - h3).abs() < 1e-12);
        let naive = chunk_starts_naive(&sums, 0.0);
        for (s, n) in starts.iter().zip(&naive) {
            assert!((s - n).abs() < 1e-12);
        }
    }

    #[test]
    fn single_chunk_equals_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = RecurrenceTrace::random(&mut rng, 32).with_h0(0.7);
        let direct = run_recurrence_direct(&t).unwrap();
        let chunked = run_recurrence_chunked(&t, 32).unwrap();
        assert!(max_relative_error(&direct, &chunked) < 1e-12);
    }

    #[test]
    fn alternating_sign_decay_with_carry() {
        let s = 64;
        let a: Vec<f64> = (0..s).map(|i| if i % 2 == 0 { -0.999 } else { 0.998 }).collect();
        let t = RecurrenceTrace::new(a, vec![1.0; s], (0..s).map(|i| (i as f64).sin()).collect())
            .unwrap()
            .with_h0(-3.0);
        let direct = run_recurrence_direct(&t).unwrap();
        for l in [2, 4, 8, 16] {
            let chunked = run_recurrence_chunked(&t, l).unwrap();
            assert!(max_relative_error(&direct, &chunked) <= 1e-9, "l={l}");
        }
    }
}

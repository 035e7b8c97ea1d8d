//! Dense row-major tensor substrate and the deterministic RNG that drives
//! every stochastic choice in the crate (initialization, synthetic data,
//! shuffling, noise injection).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let volume: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!("zero extent in shape {shape:?}")));
        }
        if volume != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} has volume {volume} but data has {} elements",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let volume: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; volume],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let volume: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; volume],
        }
    }

    /// Identity matrix of extent n.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reshape to an equal-volume shape. Row-major layout is preserved.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn at_mut(&mut self, idx: &[usize]) -> &mut f64 {
        let o = self.offset(idx);
        &mut self.data[o]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut o = 0;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.shape[i]);
            o = o * self.shape[i] + x;
        }
        o
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise op on shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
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

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    /// In-place elementwise accumulation, used for gradient buffers.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "accumulate shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn assert_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("non-finite value in {context}")));
        }
        Ok(())
    }
}

/// Batched matrix product: [B,m,k] x [B,k,n] -> [B,m,n].
pub fn matmul_batched(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(Error::shape(format!(
            "matmul_batched expects rank-3 operands, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (bb, m, k) = (a.shape[0], a.shape[1], a.shape[2]);
    let (bb2, k2, n) = (b.shape[0], b.shape[1], b.shape[2]);
    if bb != bb2 || k != k2 {
        return Err(Error::shape(format!(
            "matmul_batched {:?} x {:?}: batch/inner extents disagree",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros(&[bb, m, n]);
    for batch in 0..bb {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.data[(batch * m + i) * k + p] * b.data[(batch * k + p) * n + j];
                }
                out.data[(batch * m + i) * n + j] = acc;
            }
        }
    }
    out.assert_finite("matmul_batched")?;
    Ok(out)
}

/// Arithmetic mean along one axis; output rank drops by one.
pub fn reduce_mean(t: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(Error::shape(format!(
            "reduce_mean axis {axis} out of range for rank {}",
            t.rank()
        )));
    }
    let mut out_shape: Vec<usize> = t.shape.clone();
    let extent = out_shape.remove(axis);
    let inner: usize = t.shape[axis + 1..].iter().product();
    let outer: usize = t.shape[..axis].iter().product();
    let mut out = Tensor::zeros(&out_shape);
    for o in 0..outer {
        for i in 0..inner {
            let mut acc = 0.0;
            for a in 0..extent {
                acc += t.data[(o * extent + a) * inner + i];
            }
            out.data[o * inner + i] = acc / extent as f64;
        }
    }
    out.assert_finite("reduce_mean")?;
    Ok(out)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based deterministic generator. The output at counter c is a pure
/// function of (seed, c), so serializing seed+counter resumes the identical
/// stream on any platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, counter: 0 }
    }

    pub fn from_state(seed: u64, counter: u64) -> Self {
        Rng { seed, counter }
    }

    pub fn state(&self) -> (u64, u64) {
        (self.seed, self.counter)
    }

    /// Derive an independent stream, e.g. one per ablation cell.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(mix(self.seed ^ mix(stream.wrapping_add(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(mix(self.seed).wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in the open interval (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per
    /// sample so the stream position stays a pure function of the call count.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in [0, bound) by rejection-free scaling. Bias is
    /// below 2^-53 for the bounds used here.
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let x = self.next_uniform();
        ((x * bound as f64) as usize).min(bound - 1)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Standard-normal tensor of the given shape.
pub fn randn(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::shape(format!("randn: zero extent in {shape:?}")));
    }
    let volume: usize = shape.iter().product();
    let data: Vec<f64> = (0..volume).map(|_| rng.next_normal()).collect();
    Tensor::new(shape, data)
}

//! Two 1-D convolutions over the encoded rows, mean pooling and a two-layer
//! affine head, with hand-written backpropagation.
//!
//! Inputs are one-hot rows, so the first convolution reads a sparse list of
//! set bits instead of the dense matrix.

use crate::subnet::{EncodedSubnet, ENCODING_ROWS, ENCODING_WIDTH};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub features: usize,
    pub channels: usize,
    pub hidden: usize,
    pub kernel: usize,
}

impl Shape {
    pub fn new(channels: usize, hidden: usize, kernel: usize) -> Self {
        Shape {
            rows: ENCODING_ROWS,
            features: ENCODING_WIDTH,
            channels,
            hidden,
            kernel,
        }
    }

    /// `(name, dims)` of every tensor in storage order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (f, c, h, k) = (self.features, self.channels, self.hidden, self.kernel);
        vec![
            ("conv1.weight", vec![c, f, k]),
            ("conv1.bias", vec![c]),
            ("conv2.weight", vec![c, c, k]),
            ("conv2.bias", vec![c]),
            ("fc1.weight", vec![h, c]),
            ("fc1.bias", vec![h]),
            ("fc2.weight", vec![1, h]),
            ("fc2.bias", vec![1]),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors()
            .iter()
            .map(|(_, d)| d.iter().product::<usize>())
            .sum()
    }

    fn offsets(&self) -> Offsets {
        let sizes: Vec<usize> = self
            .tensors()
            .iter()
            .map(|(_, d)| d.iter().product())
            .collect();
        let mut at = [0usize; 8];
        for i in 1..8 {
            at[i] = at[i - 1] + sizes[i - 1];
        }
        Offsets {
            w1: at[0],
            b1: at[1],
            w2: at[2],
            b2: at[3],
            w3: at[4],
            b3: at[5],
            w4: at[6],
            b4: at[7],
        }
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.num_params()];
        let o = self.offsets();
        let mut fill = |start: usize, len: usize, fan_in: usize| {
            let n = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite sigma");
            for x in &mut p[start..start + len] {
                *x = n.sample(rng);
            }
        };
        let (f, c, h, k) = (self.features, self.channels, self.hidden, self.kernel);
        // Rows carry up to seven set bits, not `f`.
        fill(o.w1, c * f * k, 7 * k);
        fill(o.w2, c * c * k, c * k);
        fill(o.w3, h * c, c);
        fill(o.w4, h, h);
        p
    }
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    w4: usize,
    b4: usize,
}

/// Set bits of one encoded subnet, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseInput {
    rows: Vec<Vec<u16>>,
}

impl SparseInput {
    pub fn new(enc: &EncodedSubnet) -> Self {
        SparseInput {
            rows: (0..ENCODING_ROWS)
                .map(|r| enc.set_bits(r).map(|c| c as u16).collect())
                .collect(),
        }
    }
}

/// Activations kept for the backward pass.
pub struct Cache {
    a1: Vec<f64>,
    a2: Vec<f64>,
    pooled: Vec<f64>,
    r3: Vec<f64>,
}

impl Cache {
    /// Which ReLUs are open. The output is linear in any single parameter
    /// while this pattern holds.
    pub fn pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.a1
            .iter()
            .chain(&self.a2)
            .chain(&self.r3)
            .map(|&v| v > 0.0)
    }
}

pub struct Network<'a> {
    pub shape: Shape,
    pub params: &'a [f64],
}

impl Network<'_> {
    pub fn forward(&self, x: &SparseInput) -> (f64, Cache) {
        let s = self.shape;
        let o = s.offsets();
        let p = self.params;
        let (t_len, f, c, h, k) = (s.rows, s.features, s.channels, s.hidden, s.kernel);
        let half = (k / 2) as isize;

        let mut a1 = vec![0.0; t_len * c];
        for t in 0..t_len {
            let out = &mut a1[t * c..(t + 1) * c];
            out.copy_from_slice(&p[o.b1..o.b1 + c]);
            for d in 0..k {
                let src = t as isize + d as isize - half;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                for &j in &x.rows[src as usize] {
                    let j = j as usize;
                    for (ch, v) in out.iter_mut().enumerate() {
                        *v += p[o.w1 + (ch * f + j) * k + d];
                    }
                }
            }
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }

        let mut a2 = vec![0.0; t_len * c];
        for t in 0..t_len {
            for co in 0..c {
                let mut acc = p[o.b2 + co];
                for d in 0..k {
                    let src = t as isize + d as isize - half;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    let row = &a1[src as usize * c..(src as usize + 1) * c];
                    let w = &p[o.w2 + co * c * k..o.w2 + (co + 1) * c * k];
                    for (ci, &a) in row.iter().enumerate() {
                        acc += w[ci * k + d] * a;
                    }
                }
                a2[t * c + co] = acc.max(0.0);
            }
        }

        let mut pooled = vec![0.0; c];
        for t in 0..t_len {
            for (ch, v) in pooled.iter_mut().enumerate() {
                *v += a2[t * c + ch];
            }
        }
        for v in &mut pooled {
            *v /= t_len as f64;
        }

        let mut r3 = vec![0.0; h];
        for (i, r) in r3.iter_mut().enumerate() {
            let w = &p[o.w3 + i * c..o.w3 + (i + 1) * c];
            let z = p[o.b3 + i] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
            *r = z.max(0.0);
        }
        let y = p[o.b4]
            + p[o.w4..o.w4 + h]
                .iter()
                .zip(&r3)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        (y, Cache { a1, a2, pooled, r3 })
    }

    /// Accumulates `dy * d(output)/d(params)` into `grad`.
    pub fn backward(&self, x: &SparseInput, cache: &Cache, dy: f64, grad: &mut [f64]) {
        if dy == 0.0 {
            return;
        }
        let s = self.shape;
        let o = s.offsets();
        let p = self.params;
        let (t_len, f, c, h, k) = (s.rows, s.features, s.channels, s.hidden, s.kernel);
        let half = (k / 2) as isize;

        grad[o.b4] += dy;
        let mut dpooled = vec![0.0; c];
        for i in 0..h {
            grad[o.w4 + i] += dy * cache.r3[i];
            if cache.r3[i] <= 0.0 {
                continue;
            }
            let dz = dy * p[o.w4 + i];
            grad[o.b3 + i] += dz;
            for ch in 0..c {
                grad[o.w3 + i * c + ch] += dz * cache.pooled[ch];
                dpooled[ch] += dz * p[o.w3 + i * c + ch];
            }
        }

        // Through the mean pool and the second ReLU.
        let inv = 1.0 / t_len as f64;
        let mut dh2 = vec![0.0; t_len * c];
        for t in 0..t_len {
            for ch in 0..c {
                if cache.a2[t * c + ch] > 0.0 {
                    dh2[t * c + ch] = dpooled[ch] * inv;
                }
            }
        }

        let mut da1 = vec![0.0; t_len * c];
        for t in 0..t_len {
            for co in 0..c {
                let g = dh2[t * c + co];
                if g == 0.0 {
                    continue;
                }
                grad[o.b2 + co] += g;
                for d in 0..k {
                    let src = t as isize + d as isize - half;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    let src = src as usize;
                    for ci in 0..c {
                        let wi = o.w2 + (co * c + ci) * k + d;
                        grad[wi] += g * cache.a1[src * c + ci];
                        da1[src * c + ci] += g * p[wi];
                    }
                }
            }
        }

        for t in 0..t_len {
            for ch in 0..c {
                let g = if cache.a1[t * c + ch] > 0.0 {
                    da1[t * c + ch]
                } else {
                    0.0
                };
                if g == 0.0 {
                    continue;
                }
                grad[o.b1 + ch] += g;
                for d in 0..k {
                    let src = t as isize + d as isize - half;
                    if src < 0 || src >= t_len as isize {
                        continue;
                    }
                    for &j in &x.rows[src as usize] {
                        grad[o.w1 + (ch * f + j as usize) * k + d] += g;
                    }
                }
            }
        }
    }
}

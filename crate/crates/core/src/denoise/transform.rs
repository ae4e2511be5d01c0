//! Separable 3-D transform used on block groups: orthonormal 2-D DCT-II on
//! each block, orthonormal Walsh–Hadamard across the group.

use crate::scalar::Scalar;

/// Precomputed orthonormal DCT-II basis for `k`-point transforms.
#[derive(Debug, Clone)]
pub struct Dct2d<T> {
    k: usize,
    // basis[u * k + x] = alpha(u) cos(pi (2x + 1) u / 2k)
    basis: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> Dct2d<T> {
    pub fn new(k: usize) -> Self {
        let mut basis = Vec::with_capacity(k * k);
        for u in 0..k {
            let alpha = if u == 0 {
                (1.0 / k as f64).sqrt()
            } else {
                (2.0 / k as f64).sqrt()
            };
            for x in 0..k {
                let angle = std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * k) as f64;
                basis.push(T::cast(alpha * angle.cos()));
            }
        }
        Self {
            k,
            basis,
            scratch: vec![T::zero(); k * k],
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    /// In-place forward transform of one row-major `k`x`k` block.
    pub fn forward(&mut self, block: &mut [T]) {
        let k = self.k;
        // rows: scratch = block * D^T
        for r in 0..k {
            for u in 0..k {
                let mut acc = T::zero();
                for x in 0..k {
                    acc += block[r * k + x] * self.basis[u * k + x];
                }
                self.scratch[r * k + u] = acc;
            }
        }
        // columns: block = D * scratch
        for v in 0..k {
            for u in 0..k {
                let mut acc = T::zero();
                for y in 0..k {
                    acc += self.basis[v * k + y] * self.scratch[y * k + u];
                }
                block[v * k + u] = acc;
            }
        }
    }

    /// In-place inverse transform.
    pub fn inverse(&mut self, coeffs: &mut [T]) {
        let k = self.k;
        // columns: scratch = D^T * coeffs
        for y in 0..k {
            for u in 0..k {
                let mut acc = T::zero();
                for v in 0..k {
                    acc += self.basis[v * k + y] * coeffs[v * k + u];
                }
                self.scratch[y * k + u] = acc;
            }
        }
        // rows: coeffs = scratch * D
        for y in 0..k {
            for x in 0..k {
                let mut acc = T::zero();
                for u in 0..k {
                    acc += self.scratch[y * k + u] * self.basis[u * k + x];
                }
                coeffs[y * k + x] = acc;
            }
        }
    }
}

/// Orthonormal fast Walsh–Hadamard transform of `data[offset + i * stride]`
/// for `i in 0..n`. `n` must be a power of two. The transform is its own
/// inverse.
pub fn walsh_hadamard<T: Scalar>(data: &mut [T], offset: usize, stride: usize, n: usize) {
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = data[offset + j * stride];
                let b = data[offset + (j + h) * stride];
                data[offset + j * stride] = a + b;
                data[offset + (j + h) * stride] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
    let norm = T::one() / T::count(n).sqrt();
    for i in 0..n {
        data[offset + i * stride] *= norm;
    }
}

/// Forward 3-D transform of a stack of `g` row-major `k`x`k` blocks.
pub fn forward_3d<T: Scalar>(dct: &mut Dct2d<T>, stack: &mut [T], g: usize) {
    let kk = dct.size() * dct.size();
    for block in stack.chunks_mut(kk).take(g) {
        dct.forward(block);
    }
    for i in 0..kk {
        walsh_hadamard(stack, i, kk, g);
    }
}

pub fn inverse_3d<T: Scalar>(dct: &mut Dct2d<T>, stack: &mut [T], g: usize) {
    let kk = dct.size() * dct.size();
    for i in 0..kk {
        walsh_hadamard(stack, i, kk, g);
    }
    for block in stack.chunks_mut(kk).take(g) {
        dct.inverse(block);
    }
}

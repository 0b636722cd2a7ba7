//! Affine, convolution and layer-norm primitives with hand-written backward passes.
//!
//! Every primitive reads its weights from the flat parameter slice and, in the
//! backward pass, accumulates into an optional gradient slice of the same layout.

use crate::scalar::{axpy, dot, Scalar};

use super::layout::{Init, Layout};

/// `y = W x + b` with `W` stored row-major as `out x inp`.
#[derive(Debug, Clone, Copy)]
pub struct Lin {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Lin {
    pub fn declare(layout: &mut Layout, name: &str, inp: usize, out: usize) -> Self {
        let init = Init::Uniform { fan_in: inp };
        let w = layout.push(format!("{name}.w"), &[out, inp], init);
        let b = layout.push(format!("{name}.b"), &[out], init);
        Lin { w, b, inp, out }
    }

    #[inline]
    fn row<'a, T>(&self, p: &'a [T], o: usize) -> &'a [T] {
        &p[self.w + o * self.inp..self.w + (o + 1) * self.inp]
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.inp);
        for (o, yo) in y.iter_mut().enumerate().take(self.out) {
            *yo = p[self.b + o] + dot(self.row(p, o), x);
        }
    }

    pub fn apply<T: Scalar>(&self, p: &[T], x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.out];
        self.forward(p, x, &mut y);
        y
    }

    /// Accumulates `dW += dy x^T`, `db += dy` and `dx += W^T dy`.
    pub fn backward<T: Scalar>(&self, p: &[T], x: &[T], dy: &[T], grads: Option<&mut [T]>, dx: Option<&mut [T]>) {
        if let Some(g) = grads {
            for (o, &d) in dy.iter().enumerate() {
                g[self.b + o] += d;
                axpy(d, x, &mut g[self.w + o * self.inp..self.w + (o + 1) * self.inp]);
            }
        }
        if let Some(dx) = dx {
            for (o, &d) in dy.iter().enumerate() {
                axpy(d, self.row(p, o), dx);
            }
        }
    }
}

/// Same-padded 1-D convolution, kernel 3, input `cin x len`, output `cout x len`.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub w: usize,
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
}

pub const KERNEL: usize = 3;

impl Conv {
    pub fn declare(layout: &mut Layout, name: &str, cin: usize, cout: usize) -> Self {
        let init = Init::Uniform { fan_in: cin * KERNEL };
        let w = layout.push(format!("{name}.w"), &[cout, cin, KERNEL], init);
        let b = layout.push(format!("{name}.b"), &[cout], init);
        Conv { w, b, cin, cout }
    }

    #[inline]
    fn weight(&self, c: usize, ci: usize, k: usize) -> usize {
        self.w + (c * self.cin + ci) * KERNEL + k
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], len: usize) -> Vec<T> {
        let mut y = vec![T::zero(); self.cout * len];
        for c in 0..self.cout {
            let bias = p[self.b + c];
            for i in 0..len {
                let mut acc = bias;
                for ci in 0..self.cin {
                    for k in 0..KERNEL {
                        // input index i + k - 1, zero outside
                        if let Some(j) = (i + k).checked_sub(1).filter(|&j| j < len) {
                            acc += p[self.weight(c, ci, k)] * x[ci * len + j];
                        }
                    }
                }
                y[c * len + i] = acc;
            }
        }
        y
    }

    pub fn backward<T: Scalar>(&self, p: &[T], x: &[T], len: usize, dy: &[T], mut grads: Option<&mut [T]>, mut dx: Option<&mut [T]>) {
        for c in 0..self.cout {
            for i in 0..len {
                let d = dy[c * len + i];
                if d == T::zero() {
                    continue;
                }
                if let Some(g) = grads.as_deref_mut() {
                    g[self.b + c] += d;
                }
                for ci in 0..self.cin {
                    for k in 0..KERNEL {
                        if let Some(j) = (i + k).checked_sub(1).filter(|&j| j < len) {
                            let widx = self.weight(c, ci, k);
                            if let Some(g) = grads.as_deref_mut() {
                                g[widx] += d * x[ci * len + j];
                            }
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[ci * len + j] += d * p[widx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Per-token layer normalization with gain and bias.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: usize,
    pub bias: usize,
    pub dim: usize,
    pub eps: f64,
}

/// Normalized input and inverse standard deviation, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: T,
}

impl Norm {
    pub fn declare(layout: &mut Layout, name: &str, dim: usize, eps: f64) -> Self {
        let gain = layout.push(format!("{name}.gain"), &[dim], Init::Ones);
        let bias = layout.push(format!("{name}.bias"), &[dim], Init::Zeros);
        Norm { gain, bias, dim, eps }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T]) -> (Vec<T>, NormCache<T>) {
        let n = T::of_usize(self.dim);
        let mean = x.iter().copied().sum::<T>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv_std = T::one() / (var + T::of(self.eps)).sqrt();
        let xhat: Vec<T> = x.iter().map(|&v| (v - mean) * inv_std).collect();
        let y = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| p[self.gain + i] * h + p[self.bias + i])
            .collect();
        (y, NormCache { xhat, inv_std })
    }

    /// Returns `dx` and accumulates gain and bias gradients.
    pub fn backward<T: Scalar>(&self, p: &[T], cache: &NormCache<T>, dy: &[T], grads: Option<&mut [T]>) -> Vec<T> {
        if let Some(g) = grads {
            for i in 0..self.dim {
                g[self.gain + i] += dy[i] * cache.xhat[i];
                g[self.bias + i] += dy[i];
            }
        }
        let dxhat: Vec<T> = (0..self.dim).map(|i| dy[i] * p[self.gain + i]).collect();
        let n = T::of_usize(self.dim);
        let sum = dxhat.iter().copied().sum::<T>();
        let sum_x = dot(&dxhat, &cache.xhat);
        (0..self.dim)
            .map(|i| cache.inv_std / n * (n * dxhat[i] - sum - cache.xhat[i] * sum_x))
            .collect()
    }
}

pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `dy` where the forward activation was clipped. The derivative at 0 is 0.
pub fn relu_backward<T: Scalar>(activated: &[T], dy: &mut [T]) {
    for (d, &a) in dy.iter_mut().zip(activated) {
        if a <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Max-shifted softmax in place.
pub fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Softmax Jacobian-vector product: `ds_j = a_j (da_j - sum_k a_k da_k)`.
pub fn softmax_backward<T: Scalar>(a: &[T], da: &[T]) -> Vec<T> {
    let s = dot(a, da);
    a.iter().zip(da).map(|(&ai, &di)| ai * (di - s)).collect()
}

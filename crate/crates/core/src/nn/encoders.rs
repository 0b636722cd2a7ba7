//! Per-modality encoders mapping a feature block to a `d_model` embedding.

use crate::scalar::{axpy, dot, Scalar};

use super::layout::Layout;
use super::ops::{relu_backward, relu_in_place, softmax_backward, softmax_in_place, Conv, Lin};

/// conv(k3) -> ReLU -> conv(k3) -> ReLU -> flatten -> affine.
#[derive(Debug, Clone, Copy)]
pub struct CnnEncoder {
    pub conv1: Conv,
    pub conv2: Conv,
    pub fc: Lin,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnCache<T> {
    pub x: Vec<T>,
    /// Post-ReLU activations, channel-major.
    pub a1: Vec<T>,
    pub a2: Vec<T>,
}

impl CnnEncoder {
    pub fn declare(layout: &mut Layout, name: &str, len: usize, channels: [usize; 2], d: usize) -> Self {
        CnnEncoder {
            conv1: Conv::declare(layout, &format!("{name}.conv1"), 1, channels[0]),
            conv2: Conv::declare(layout, &format!("{name}.conv2"), channels[0], channels[1]),
            fc: Lin::declare(layout, &format!("{name}.fc"), channels[1] * len, d),
            len,
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T]) -> (Vec<T>, CnnCache<T>) {
        let mut a1 = self.conv1.forward(p, x, self.len);
        relu_in_place(&mut a1);
        let mut a2 = self.conv2.forward(p, &a1, self.len);
        relu_in_place(&mut a2);
        let e = self.fc.apply(p, &a2);
        (e, CnnCache { x: x.to_vec(), a1, a2 })
    }

    /// Returns the gradient with respect to the input block when `want_input`.
    pub fn backward<T: Scalar>(&self, p: &[T], c: &CnnCache<T>, de: &[T], mut grads: Option<&mut [T]>, want_input: bool) -> Option<Vec<T>> {
        let mut d2 = vec![T::zero(); c.a2.len()];
        self.fc.backward(p, &c.a2, de, grads.as_deref_mut(), Some(&mut d2));
        relu_backward(&c.a2, &mut d2);
        let mut d1 = vec![T::zero(); c.a1.len()];
        self.conv2.backward(p, &c.a1, self.len, &d2, grads.as_deref_mut(), Some(&mut d1));
        relu_backward(&c.a1, &mut d1);
        let mut dx = want_input.then(|| vec![T::zero(); self.len]);
        self.conv1.backward(p, &c.x, self.len, &d1, grads, dx.as_deref_mut());
        dx
    }
}

/// Hourly EHR vectors (each concatenated with the static vector) -> affine ->
/// one single-head self-attention layer with a residual -> mean over time -> affine.
#[derive(Debug, Clone, Copy)]
pub struct EhrEncoder {
    pub input: Lin,
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub out: Lin,
    pub n_vars: usize,
    pub steps: usize,
    pub static_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhrCache<T> {
    pub x: Vec<Vec<T>>,
    pub h: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
    pub k: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// `steps x steps` attention weights.
    pub attn: Vec<T>,
    pub pooled: Vec<T>,
}

/// Gradients with respect to both EHR inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EhrInputGrad<T> {
    pub temporal: Vec<T>,
    pub static_: Vec<T>,
}

impl EhrEncoder {
    pub fn declare(layout: &mut Layout, n_vars: usize, steps: usize, static_dim: usize, hidden: usize, d: usize) -> Self {
        EhrEncoder {
            input: Lin::declare(layout, "ehr.input", n_vars + static_dim, hidden),
            q: Lin::declare(layout, "ehr.q", hidden, hidden),
            k: Lin::declare(layout, "ehr.k", hidden, hidden),
            v: Lin::declare(layout, "ehr.v", hidden, hidden),
            out: Lin::declare(layout, "ehr.out", hidden, d),
            n_vars,
            steps,
            static_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], temporal: &[T], static_: &[T]) -> (Vec<T>, EhrCache<T>) {
        let (t_n, hid) = (self.steps, self.q.out);
        let x: Vec<Vec<T>> = (0..t_n)
            .map(|t| {
                let mut v = temporal[t * self.n_vars..(t + 1) * self.n_vars].to_vec();
                v.extend_from_slice(static_);
                v
            })
            .collect();
        let h: Vec<Vec<T>> = x.iter().map(|xt| self.input.apply(p, xt)).collect();
        let q: Vec<Vec<T>> = h.iter().map(|ht| self.q.apply(p, ht)).collect();
        let k: Vec<Vec<T>> = h.iter().map(|ht| self.k.apply(p, ht)).collect();
        let v: Vec<Vec<T>> = h.iter().map(|ht| self.v.apply(p, ht)).collect();
        let scale = T::one() / T::of_usize(hid).sqrt();
        let mut attn = vec![T::zero(); t_n * t_n];
        let mut pooled = vec![T::zero(); hid];
        let inv_t = T::one() / T::of_usize(t_n);
        for t in 0..t_n {
            let row = &mut attn[t * t_n..(t + 1) * t_n];
            for (s, r) in row.iter_mut().enumerate() {
                *r = dot(&q[t], &k[s]) * scale;
            }
            softmax_in_place(row);
            // residual: r_t = h_t + sum_s a_ts v_s
            let mut r = h[t].clone();
            for (s, &a) in row.iter().enumerate() {
                axpy(a, &v[s], &mut r);
            }
            axpy(inv_t, &r, &mut pooled);
        }
        let e = self.out.apply(p, &pooled);
        (e, EhrCache { x, h, q, k, v, attn, pooled })
    }

    pub fn backward<T: Scalar>(&self, p: &[T], c: &EhrCache<T>, de: &[T], mut grads: Option<&mut [T]>, want_input: bool) -> Option<EhrInputGrad<T>> {
        let (t_n, hid) = (self.steps, self.q.out);
        let scale = T::one() / T::of_usize(hid).sqrt();
        let mut dpool = vec![T::zero(); hid];
        self.out.backward(p, &c.pooled, de, grads.as_deref_mut(), Some(&mut dpool));
        let dr: Vec<T> = dpool.iter().map(|&g| g / T::of_usize(t_n)).collect();
        let mut dh = vec![dr.clone(); t_n];
        let mut dq = vec![vec![T::zero(); hid]; t_n];
        let mut dk = vec![vec![T::zero(); hid]; t_n];
        let mut dv = vec![vec![T::zero(); hid]; t_n];
        for t in 0..t_n {
            let row = &c.attn[t * t_n..(t + 1) * t_n];
            for (s, &a) in row.iter().enumerate() {
                axpy(a, &dr, &mut dv[s]);
            }
            let da: Vec<T> = (0..t_n).map(|s| dot(&dr, &c.v[s])).collect();
            for (s, &g) in softmax_backward(row, &da).iter().enumerate() {
                let g = g * scale;
                axpy(g, &c.k[s], &mut dq[t]);
                axpy(g, &c.q[t], &mut dk[s]);
            }
        }
        for t in 0..t_n {
            self.q.backward(p, &c.h[t], &dq[t], grads.as_deref_mut(), Some(&mut dh[t]));
            self.k.backward(p, &c.h[t], &dk[t], grads.as_deref_mut(), Some(&mut dh[t]));
            self.v.backward(p, &c.h[t], &dv[t], grads.as_deref_mut(), Some(&mut dh[t]));
        }
        let mut out = want_input.then(|| EhrInputGrad {
            temporal: vec![T::zero(); t_n * self.n_vars],
            static_: vec![T::zero(); self.static_dim],
        });
        for t in 0..t_n {
            match out.as_mut() {
                Some(g) => {
                    let mut dx = vec![T::zero(); self.n_vars + self.static_dim];
                    self.input.backward(p, &c.x[t], &dh[t], grads.as_deref_mut(), Some(&mut dx));
                    g.temporal[t * self.n_vars..(t + 1) * self.n_vars].copy_from_slice(&dx[..self.n_vars]);
                    for (a, &b) in g.static_.iter_mut().zip(&dx[self.n_vars..]) {
                        *a += b;
                    }
                }
                None => self.input.backward(p, &c.x[t], &dh[t], grads.as_deref_mut(), None),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random(n: usize, label: &str) -> Vec<f64> {
        let mut r = seed::rng(11, label);
        (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
    }

    /// Scalar-loop reference with explicit indexing into the named tensors.
    fn cnn_reference(l: &Layout, p: &[f64], name: &str, x: &[f64], c1: usize, c2: usize, d: usize) -> Vec<f64> {
        let t = |s: &str| &p[l.get(&format!("{name}.{s}")).unwrap().range()];
        let (w1, b1, w2, b2, wf, bf) = (t("conv1.w"), t("conv1.b"), t("conv2.w"), t("conv2.b"), t("fc.w"), t("fc.b"));
        let n = x.len();
        let at = |v: &[f64], i: isize| if i < 0 || i >= n as isize { 0.0 } else { v[i as usize] };
        let mut h1 = vec![vec![0.0; n]; c1];
        for c in 0..c1 {
            for i in 0..n {
                let mut s = b1[c];
                for k in 0..3 {
                    s += w1[c * 3 + k] * at(x, i as isize + k as isize - 1);
                }
                h1[c][i] = s.max(0.0);
            }
        }
        let mut flat = vec![0.0; c2 * n];
        for c in 0..c2 {
            for i in 0..n {
                let mut s = b2[c];
                for ci in 0..c1 {
                    for k in 0..3 {
                        s += w2[(c * c1 + ci) * 3 + k] * at(&h1[ci], i as isize + k as isize - 1);
                    }
                }
                flat[c * n + i] = s.max(0.0);
            }
        }
        (0..d)
            .map(|o| bf[o] + (0..c2 * n).map(|j| wf[o * c2 * n + j] * flat[j]).sum::<f64>())
            .collect()
    }

    #[test]
    fn cnn_matches_scalar_reference() {
        let mut l = Layout::default();
        let enc = CnnEncoder::declare(&mut l, "face", 9, [16, 32], 128);
        let p: Vec<f64> = l.initialize(&mut seed::rng(2, "cnn"));
        let x = random(9, "face-block");
        let (e, _) = enc.forward(&p, &x);
        let r = cnn_reference(&l, &p, "face", &x, 16, 32, 128);
        for (a, b) in e.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_parameters_give_zero_embedding() {
        let mut l = Layout::default();
        let enc = CnnEncoder::declare(&mut l, "env", 4, [16, 32], 128);
        let p = vec![0.0; l.total];
        assert!(enc.forward(&p, &random(4, "e")).0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ehr_matches_scalar_reference() {
        let (f, t_n, s_n, hid, d) = (3, 4, 2, 5, 6);
        let mut l = Layout::default();
        let enc = EhrEncoder::declare(&mut l, f, t_n, s_n, hid, d);
        let p: Vec<f64> = l.initialize(&mut seed::rng(2, "ehr"));
        let (temporal, st) = (random(f * t_n, "t"), random(s_n, "s"));
        let (e, _) = enc.forward(&p, &temporal, &st);
        let t = |s: &str| &p[l.get(s).unwrap().range()];
        let aff = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..b.len()).map(|o| b[o] + (0..x.len()).map(|i| w[o * x.len() + i] * x[i]).sum::<f64>()).collect()
        };
        let h: Vec<Vec<f64>> = (0..t_n)
            .map(|ti| {
                let x: Vec<f64> = temporal[ti * f..ti * f + f].iter().chain(&st).copied().collect();
                aff(t("ehr.input.w"), t("ehr.input.b"), &x)
            })
            .collect();
        let q: Vec<_> = h.iter().map(|x| aff(t("ehr.q.w"), t("ehr.q.b"), x)).collect();
        let k: Vec<_> = h.iter().map(|x| aff(t("ehr.k.w"), t("ehr.k.b"), x)).collect();
        let v: Vec<_> = h.iter().map(|x| aff(t("ehr.v.w"), t("ehr.v.b"), x)).collect();
        let mut pooled = vec![0.0; hid];
        for ti in 0..t_n {
            let s: Vec<f64> = (0..t_n).map(|u| (0..hid).map(|j| q[ti][j] * k[u][j]).sum::<f64>() / (hid as f64).sqrt()).collect();
            let z: f64 = s.iter().map(|x| x.exp()).sum();
            for j in 0..hid {
                let o: f64 = (0..t_n).map(|u| s[u].exp() / z * v[u][j]).sum();
                pooled[j] += (h[ti][j] + o) / t_n as f64;
            }
        }
        let r = aff(t("ehr.out.w"), t("ehr.out.b"), &pooled);
        for (a, b) in e.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut l = Layout::default();
        let ehr = EhrEncoder::declare(&mut l, 3, 2, 2, 4, 5);
        let cnn = CnnEncoder::declare(&mut l, "acc", 4, [2, 3], 5);
        let p: Vec<f64> = l.initialize(&mut seed::rng(4, "enc"));
        let (temporal, st, blk) = (random(6, "t2"), random(2, "s2"), random(4, "b2"));
        let probe = random(5, "probe");
        let loss = |p: &[f64], temporal: &[f64], st: &[f64], blk: &[f64]| {
            dot(&ehr.forward(p, temporal, st).0, &probe) + dot(&cnn.forward(p, blk).0, &probe)
        };
        let mut g = vec![0.0; l.total];
        let (_, ce) = ehr.forward(&p, &temporal, &st);
        let (_, cc) = cnn.forward(&p, &blk);
        let gi = ehr.backward(&p, &ce, &probe, Some(&mut g), true).unwrap();
        let gb = cnn.backward(&p, &cc, &probe, Some(&mut g), true).unwrap();
        let h = 1e-5;
        let check = |num: f64, ana: f64| assert!((num - ana).abs() < 1e-6 * (1.0 + num.abs()), "{num} vs {ana}");
        for i in 0..p.len() {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += h;
            dn[i] -= h;
            check((loss(&up, &temporal, &st, &blk) - loss(&dn, &temporal, &st, &blk)) / (2.0 * h), g[i]);
        }
        for i in 0..6 {
            let (mut up, mut dn) = (temporal.clone(), temporal.clone());
            up[i] += h;
            dn[i] -= h;
            check((loss(&p, &up, &st, &blk) - loss(&p, &dn, &st, &blk)) / (2.0 * h), gi.temporal[i]);
        }
        for i in 0..2 {
            let (mut up, mut dn) = (st.clone(), st.clone());
            up[i] += h;
            dn[i] -= h;
            check((loss(&p, &temporal, &up, &blk) - loss(&p, &temporal, &dn, &blk)) / (2.0 * h), gi.static_[i]);
        }
        for i in 0..4 {
            let (mut up, mut dn) = (blk.clone(), blk.clone());
            up[i] += h;
            dn[i] -= h;
            check((loss(&p, &temporal, &st, &up) - loss(&p, &temporal, &st, &dn)) / (2.0 * h), gb[i]);
        }
    }
}

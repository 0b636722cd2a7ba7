//! Masked scaled dot-product attention and the MMSA block
//! (multi-head attention, output projection, residual, layer norm).

use crate::data::mask::ModalityMask;
use crate::scalar::{axpy, dot, Scalar};

use super::layout::Layout;
use super::ops::{softmax_backward, softmax_in_place, Lin, Norm, NormCache};

/// Number of modality tokens in the fused sequence.
pub const SEQ_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    /// `SEQ_LEN x d_v`, row-major.
    pub output: Vec<T>,
    pub weights: [[T; SEQ_LEN]; SEQ_LEN],
}

/// `softmax(Q K^T / sqrt(d_k) + M) V` for one head over the four modality tokens.
///
/// `M` is 0 for present keys and a large negative constant for absent ones;
/// absent columns are then set to exactly 0 so underflow never matters.
/// Rows of absent queries are computed like any other and ignored by callers.
pub fn masked_attention<T: Scalar>(q: &[T], k: &[T], v: &[T], d_k: usize, d_v: usize, mask: ModalityMask) -> AttentionOutput<T> {
    assert_eq!(q.len(), SEQ_LEN * d_k);
    assert_eq!(k.len(), SEQ_LEN * d_k);
    assert_eq!(v.len(), SEQ_LEN * d_v);
    let present = mask.bits();
    let scale = T::one() / T::of_usize(d_k).sqrt();
    let mut weights = [[T::zero(); SEQ_LEN]; SEQ_LEN];
    let mut output = vec![T::zero(); SEQ_LEN * d_v];
    for i in 0..SEQ_LEN {
        let row = &mut weights[i];
        for j in 0..SEQ_LEN {
            let m = if present[j] { T::zero() } else { T::mask_fill() };
            row[j] = dot(&q[i * d_k..(i + 1) * d_k], &k[j * d_k..(j + 1) * d_k]) * scale + m;
        }
        softmax_in_place(row);
        for j in 0..SEQ_LEN {
            if !present[j] {
                row[j] = T::zero();
            }
        }
        for j in 0..SEQ_LEN {
            if row[j] != T::zero() {
                axpy(row[j], &v[j * d_v..(j + 1) * d_v], &mut output[i * d_v..(i + 1) * d_v]);
            }
        }
    }
    AttentionOutput { output, weights }
}

/// Parameter offsets of one MMSA block.
#[derive(Debug, Clone, Copy)]
pub struct Mmsa {
    pub q: Lin,
    pub k: Lin,
    pub v: Lin,
    pub o: Lin,
    pub norm: Norm,
    pub heads: usize,
}

/// Activations of one block over a set of token rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache<T> {
    pub x: Vec<Vec<T>>,
    /// Indices into `x` of the rows that act as keys (the present tokens).
    pub keys: Vec<usize>,
    /// Empty when there is a single key: its weight is 1 whatever the scores.
    pub q: Vec<Vec<T>>,
    pub k: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Per head, `rows x keys` attention weights.
    pub attn: Vec<Vec<T>>,
    pub o: Vec<Vec<T>>,
    pub norm: Vec<NormCache<T>>,
    pub y: Vec<Vec<T>>,
}

impl Mmsa {
    pub fn declare(layout: &mut Layout, name: &str, d: usize, heads: usize, eps: f64) -> Self {
        Mmsa {
            q: Lin::declare(layout, &format!("{name}.q"), d, d),
            k: Lin::declare(layout, &format!("{name}.k"), d, d),
            v: Lin::declare(layout, &format!("{name}.v"), d, d),
            o: Lin::declare(layout, &format!("{name}.o"), d, d),
            norm: Norm::declare(layout, &format!("{name}.ln"), d, eps),
            heads,
        }
    }

    fn d(&self) -> usize {
        self.q.out
    }

    fn dk(&self) -> usize {
        self.d() / self.heads
    }

    /// `Y = LayerNorm(X + MultiHead(X))` for every row of `x`, attending over the rows
    /// flagged in `is_key`.
    pub fn forward<T: Scalar>(&self, p: &[T], x: Vec<Vec<T>>, is_key: &[bool]) -> BlockCache<T> {
        let (d, dk, n) = (self.d(), self.dk(), x.len());
        let keys: Vec<usize> = (0..n).filter(|&i| is_key[i]).collect();
        assert!(!keys.is_empty(), "attention needs at least one present token");
        let nk = keys.len();
        let project = |lin: &Lin, rows: &mut dyn Iterator<Item = usize>| rows.map(|i| lin.apply(p, &x[i])).collect::<Vec<_>>();
        let v = project(&self.v, &mut keys.iter().copied());
        let (q, k) = if nk > 1 {
            (project(&self.q, &mut (0..n)), project(&self.k, &mut keys.iter().copied()))
        } else {
            (Vec::new(), Vec::new())
        };
        let scale = T::one() / T::of_usize(dk).sqrt();
        let mut attn = vec![vec![T::zero(); n * nk]; self.heads];
        let mut o = vec![vec![T::zero(); d]; n];
        for (h, a) in attn.iter_mut().enumerate() {
            let hs = h * dk..(h + 1) * dk;
            for i in 0..n {
                let row = &mut a[i * nk..(i + 1) * nk];
                if nk == 1 {
                    row[0] = T::one();
                } else {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = dot(&q[i][hs.clone()], &k[j][hs.clone()]) * scale;
                    }
                    softmax_in_place(row);
                }
                for (j, &w) in row.iter().enumerate() {
                    axpy(w, &v[j][hs.clone()], &mut o[i][hs.clone()]);
                }
            }
        }
        let mut norm = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = self.o.apply(p, &o[i]);
            for (a, &b) in r.iter_mut().zip(&x[i]) {
                *a += b;
            }
            let (yi, c) = self.norm.forward(p, &r);
            y.push(yi);
            norm.push(c);
        }
        BlockCache { x, keys, q, k, v, attn, o, norm, y }
    }

    /// Returns `dX` and accumulates parameter gradients.
    pub fn backward<T: Scalar>(&self, p: &[T], c: &BlockCache<T>, dy: &[Vec<T>], mut grads: Option<&mut [T]>) -> Vec<Vec<T>> {
        let (d, dk, n, nk) = (self.d(), self.dk(), c.x.len(), c.keys.len());
        let scale = T::one() / T::of_usize(dk).sqrt();
        let mut dx: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut d_o = vec![vec![T::zero(); d]; n];
        for i in 0..n {
            let dr = self.norm.backward(p, &c.norm[i], &dy[i], grads.as_deref_mut());
            self.o.backward(p, &c.o[i], &dr, grads.as_deref_mut(), Some(&mut d_o[i]));
            dx.push(dr);
        }
        let mut dq = vec![vec![T::zero(); d]; if nk > 1 { n } else { 0 }];
        let mut dkm = vec![vec![T::zero(); d]; if nk > 1 { nk } else { 0 }];
        let mut dv = vec![vec![T::zero(); d]; nk];
        for (h, a) in c.attn.iter().enumerate() {
            let hs = h * dk..(h + 1) * dk;
            for i in 0..n {
                let row = &a[i * nk..(i + 1) * nk];
                let doh = &d_o[i][hs.clone()];
                for (j, &w) in row.iter().enumerate() {
                    axpy(w, doh, &mut dv[j][hs.clone()]);
                }
                if nk == 1 {
                    continue;
                }
                let da: Vec<T> = (0..nk).map(|j| dot(doh, &c.v[j][hs.clone()])).collect();
                let ds = softmax_backward(row, &da);
                for (j, &s) in ds.iter().enumerate() {
                    let s = s * scale;
                    axpy(s, &c.k[j][hs.clone()], &mut dq[i][hs.clone()]);
                    axpy(s, &c.q[i][hs.clone()], &mut dkm[j][hs.clone()]);
                }
            }
        }
        for (j, &row) in c.keys.iter().enumerate() {
            self.v.backward(p, &c.x[row], &dv[j], grads.as_deref_mut(), Some(&mut dx[row]));
        }
        if nk > 1 {
            for i in 0..n {
                self.q.backward(p, &c.x[i], &dq[i], grads.as_deref_mut(), Some(&mut dx[i]));
            }
            for (j, &row) in c.keys.iter().enumerate() {
                self.k.backward(p, &c.x[row], &dkm[j], grads.as_deref_mut(), Some(&mut dx[row]));
            }
        }
        dx
    }
}

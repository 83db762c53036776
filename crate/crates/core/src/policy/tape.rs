//! A small reverse-mode tape over row-major f64 matrices.
//!
//! Only the handful of fused operations the policy needs are provided; each
//! one stores what its backward pass needs at forward time.

use ndarray::{s, Array2, ArrayView2, Axis};

pub(crate) type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Var(usize);

/// Marks a pointer slot with no token behind it.
pub(crate) const EMPTY_SLOT: usize = usize::MAX;

const LN_EPS: f64 = 1e-5;

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        idx: Vec<usize>,
    },
    WeightedRows {
        table: Var,
        groups: Vec<Vec<(usize, f64)>>,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    Interleave(Vec<Var>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq: usize,
        probs: Vec<Mat>,
    },
    Pointer {
        u: Var,
        feats: Var,
        empty: Var,
        bias: Var,
        slots: usize,
        idx: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub(crate) struct Tape {
    nodes: Vec<Node>,
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let inner = c * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax in place; rows that are entirely -inf become zeros.
fn softmax_rows(m: &mut Mat) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

impl Tape {
    pub(crate) fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub(crate) fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Input)
    }

    /// A leaf whose gradient is reported under `id`.
    pub(crate) fn param(&mut self, id: usize, m: Mat) -> Var {
        self.push(m, Op::Param(id))
    }

    pub(crate) fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub(crate) fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let v = self.value(x) + &self.value(b).row(0);
        self.push(v, Op::AddBias(x, b))
    }

    pub(crate) fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_bias(h, b)
    }

    pub(crate) fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub(crate) fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(gelu);
        self.push(v, Op::Gelu(x))
    }

    pub(crate) fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (n, d) = xv.dim();
        let mut xhat = Mat::zeros((n, d));
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (j, x) in row.iter().enumerate() {
                xhat[[i, j]] = (x - mean) * is;
            }
        }
        let v = &xhat * &self.value(gamma).row(0) + &self.value(beta).row(0);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Rows `idx` of `table`.
    pub(crate) fn gather(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros((idx.len(), t.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).assign(&t.row(i));
        }
        self.push(v, Op::Gather { table, idx })
    }

    /// Output row `g` is `sum w * table[i]` over `groups[g]`.
    pub(crate) fn weighted_rows(&mut self, table: Var, groups: Vec<Vec<(usize, f64)>>) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros((groups.len(), t.ncols()));
        for (g, members) in groups.iter().enumerate() {
            let mut row = v.row_mut(g);
            for &(i, w) in members {
                row.scaled_add(w, &t.row(i));
            }
        }
        self.push(v, Op::WeightedRows { table, groups })
    }

    pub(crate) fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let xv = self.value(x);
        let v = xv.select(Axis(0), &rows);
        self.push(v, Op::SelectRows { x, rows })
    }

    /// Parts of equal shape `R x d`; output row `r * parts.len() + j` is row `r` of part `j`.
    pub(crate) fn interleave(&mut self, parts: Vec<Var>) -> Var {
        let k = parts.len();
        let (r, d) = self.value(parts[0]).dim();
        let mut v = Mat::zeros((r * k, d));
        for (j, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            assert_eq!(pv.dim(), (r, d), "interleave parts differ in shape");
            for i in 0..r {
                v.row_mut(i * k + j).assign(&pv.row(i));
            }
        }
        self.push(v, Op::Interleave(parts))
    }

    /// Multi-head causal self-attention over consecutive blocks of `seq`
    /// rows. Keys with `key_valid == false` are never attended to; a query
    /// with no admissible key gets a zero output.
    pub(crate) fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq: usize, key_valid: &[bool]) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.dim();
        assert_eq!(n % seq, 0, "rows are not a whole number of sequences");
        assert_eq!(key_valid.len(), n);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros((n, d));
        let mut probs = Vec::with_capacity(n / seq * heads);
        for b in 0..n / seq {
            let rows = b * seq..(b + 1) * seq;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = qv.slice(s![rows.clone(), cols.clone()]);
                let kh = kv.slice(s![rows.clone(), cols.clone()]);
                let vh = vv.slice(s![rows.clone(), cols.clone()]);
                let mut sc = qh.dot(&kh.t()) * scale;
                for i in 0..seq {
                    for j in 0..seq {
                        if j > i || !key_valid[b * seq + j] {
                            sc[[i, j]] = f64::NEG_INFINITY;
                        }
                    }
                }
                softmax_rows(&mut sc);
                out.slice_mut(s![rows.clone(), cols]).assign(&sc.dot(&vh));
                probs.push(sc);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq,
                probs,
            },
        )
    }

    /// Position-pointer logits. `u` is `R x (kinds*d)`; for row `r`, slot
    /// `p`, `idx[r*slots + p]` names a row of `feats` (or `EMPTY_SLOT` for
    /// the learned `empty` vector). Logit `k*slots + p` is
    /// `u[r, k-block] . feat + bias[k*slots + p]`.
    pub(crate) fn pointer(&mut self, u: Var, feats: Var, empty: Var, bias: Var, slots: usize, idx: Vec<usize>) -> Var {
        let (uv, fv, ev, bv) = (self.value(u), self.value(feats), self.value(empty), self.value(bias));
        let d = fv.ncols();
        let rows = uv.nrows();
        let kinds = uv.ncols() / d;
        assert_eq!(idx.len(), rows * slots);
        let mut out = Mat::zeros((rows, kinds * slots));
        for r in 0..rows {
            let f = slot_features(fv.view(), ev.view(), &idx[r * slots..(r + 1) * slots]);
            let ur = uv.row(r).into_shape_with_order((kinds, d)).expect("contiguous row");
            let l = ur.dot(&f.t());
            out.row_mut(r)
                .assign(&l.into_shape_with_order(kinds * slots).expect("owned"));
        }
        out += &bv.row(0);
        self.push(
            out,
            Op::Pointer {
                u,
                feats,
                empty,
                bias,
                slots,
                idx,
            },
        )
    }

    /// Weighted mean cross-entropy; result is `1 x 1`.
    pub(crate) fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, weights: Vec<f64>) -> Var {
        let mut probs = self.value(logits).clone();
        softmax_rows(&mut probs);
        let total: f64 = weights.iter().sum();
        let mut loss = 0.0;
        for (r, (&t, &w)) in targets.iter().zip(&weights).enumerate() {
            if w != 0.0 {
                loss -= w * probs[[r, t]].max(1e-300).ln();
            }
        }
        let loss = if total > 0.0 { loss / total } else { 0.0 };
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            },
        )
    }

    /// Gradients of scalar `loss` with respect to every parameter leaf, as
    /// `(param id, grad)` pairs. Leaves used several times are summed.
    pub(crate) fn backward(&self, loss: Var) -> Vec<(usize, Mat)> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::ones(self.value(loss).dim()));
        let mut out = Vec::new();

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.push((*id, g)),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Gelu(x) => {
                    let dx = &g * &self.value(*x).mapv(gelu_grad);
                    acc(&mut grads, *x, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma).row(0).to_owned();
                    let d = xhat.ncols() as f64;
                    acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * &gv;
                    let mut dx = Mat::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let s1 = dh.sum();
                        let s2 = dh.dot(&xh);
                        for j in 0..xhat.ncols() {
                            dx[[r, j]] = inv_std[r] / d * (d * dh[j] - s1 - xh[j] * s2);
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::Gather { table, idx } => {
                    let mut gt = Mat::zeros(self.value(*table).dim());
                    for (r, &t) in idx.iter().enumerate() {
                        let mut row = gt.row_mut(t);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::WeightedRows { table, groups } => {
                    let mut gt = Mat::zeros(self.value(*table).dim());
                    for (r, members) in groups.iter().enumerate() {
                        for &(t, w) in members {
                            gt.row_mut(t).scaled_add(w, &g.row(r));
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::SelectRows { x, rows } => {
                    let mut gx = Mat::zeros(self.value(*x).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut row = gx.row_mut(src);
                        row += &g.row(r);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Interleave(parts) => {
                    let k = parts.len();
                    for (j, &p) in parts.iter().enumerate() {
                        let rows: Vec<usize> = (0..g.nrows() / k).map(|r| r * k + j).collect();
                        acc(&mut grads, p, g.select(Axis(0), &rows));
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    seq,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (n, d) = qv.dim();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let (mut gq, mut gk, mut gvv) = (Mat::zeros((n, d)), Mat::zeros((n, d)), Mat::zeros((n, d)));
                    for b in 0..n / seq {
                        let rows = b * seq..(b + 1) * seq;
                        for h in 0..*heads {
                            let cols = h * dh..(h + 1) * dh;
                            let p = &probs[b * heads + h];
                            let go = g.slice(s![rows.clone(), cols.clone()]);
                            let qh = qv.slice(s![rows.clone(), cols.clone()]);
                            let kh = kv.slice(s![rows.clone(), cols.clone()]);
                            let vh = vv.slice(s![rows.clone(), cols.clone()]);
                            gvv.slice_mut(s![rows.clone(), cols.clone()]).assign(&p.t().dot(&go));
                            let dp = go.dot(&vh.t());
                            let mut ds = p * &dp;
                            for (i, mut row) in ds.rows_mut().into_iter().enumerate() {
                                let dot = p.row(i).dot(&dp.row(i));
                                row.scaled_add(-dot, &p.row(i));
                            }
                            ds *= scale;
                            gq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                            gk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qh));
                        }
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gvv);
                }
                Op::Pointer {
                    u,
                    feats,
                    empty,
                    bias,
                    slots,
                    idx,
                } => {
                    let (uv, fv, ev) = (self.value(*u), self.value(*feats), self.value(*empty));
                    let d = fv.ncols();
                    let kinds = uv.ncols() / d;
                    let mut gu = Mat::zeros(uv.dim());
                    let mut gf = Mat::zeros(fv.dim());
                    let mut ge = Mat::zeros(ev.dim());
                    for r in 0..uv.nrows() {
                        let slot_idx = &idx[r * slots..(r + 1) * slots];
                        let f = slot_features(fv.view(), ev.view(), slot_idx);
                        let gl = g.row(r).to_owned().into_shape_with_order((kinds, *slots)).expect("owned");
                        let ur = uv.row(r).into_shape_with_order((kinds, d)).expect("contiguous row");
                        gu.row_mut(r)
                            .assign(&gl.dot(&f).into_shape_with_order(kinds * d).expect("owned"));
                        let gfr = gl.t().dot(&ur);
                        for (p, &i) in slot_idx.iter().enumerate() {
                            if i == EMPTY_SLOT {
                                let mut row = ge.row_mut(0);
                                row += &gfr.row(p);
                            } else {
                                let mut row = gf.row_mut(i);
                                row += &gfr.row(p);
                            }
                        }
                    }
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *u, gu);
                    acc(&mut grads, *feats, gf);
                    acc(&mut grads, *empty, ge);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    probs,
                } => {
                    let total: f64 = weights.iter().sum();
                    let mut gl = Mat::zeros(probs.dim());
                    if total > 0.0 {
                        let scale = g[[0, 0]] / total;
                        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            let mut row = gl.row_mut(r);
                            row.scaled_add(w * scale, &probs.row(r));
                            row[t] -= w * scale;
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        out
    }
}

fn slot_features(feats: ArrayView2<f64>, empty: ArrayView2<f64>, idx: &[usize]) -> Mat {
    let mut f = Mat::zeros((idx.len(), feats.ncols()));
    for (p, &i) in idx.iter().enumerate() {
        if i == EMPTY_SLOT {
            f.row_mut(p).assign(&empty.row(0));
        } else {
            f.row_mut(p).assign(&feats.row(i));
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of every op chained into one scalar.
    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (seq, d, heads) = (3, 4, 2);
        let params = vec![
            rand_mat(&mut rng, 5, d),     // 0 table
            rand_mat(&mut rng, d, d),     // 1 wq
            rand_mat(&mut rng, d, d),     // 2 wk
            rand_mat(&mut rng, d, d),     // 3 wv
            rand_mat(&mut rng, 1, d),     // 4 gamma
            rand_mat(&mut rng, 1, d),     // 5 beta
            rand_mat(&mut rng, d, 2 * d), // 6 pointer proj
            rand_mat(&mut rng, 1, 2 * d), // 7 pointer proj bias
            rand_mat(&mut rng, 1, d),     // 8 empty
            rand_mat(&mut rng, 1, 6),     // 9 pointer bias
        ];
        let key_valid = [false, true, true, true, true, true];
        let run = |p: &[Mat]| {
            let mut t = Tape::new();
            let v: Vec<Var> = p.iter().enumerate().map(|(i, m)| t.param(i, m.clone())).collect();
            let a = t.gather(v[0], vec![0, 2, 4]);
            let b = t.weighted_rows(v[0], vec![vec![(1, 0.5), (3, 0.5)], vec![(0, 1.0)], vec![(2, 0.3), (4, 0.7)]]);
            let x = t.interleave(vec![a, b]);
            let x = t.layer_norm(x, v[4], v[5]);
            let q = t.matmul(x, v[1]);
            let k = t.matmul(x, v[2]);
            let vv = t.matmul(x, v[3]);
            let att = t.attention(q, k, vv, heads, seq, &key_valid);
            let h = t.add(att, x);
            let h = t.gelu(h);
            let h = t.select_rows(h, vec![1, 2, 4, 5]);
            let u = t.linear(h, v[6], v[7]);
            let logits = t.pointer(
                u,
                v[0],
                v[8],
                v[9],
                3,
                vec![0, 1, EMPTY_SLOT, 2, EMPTY_SLOT, EMPTY_SLOT, 4, 4, 3, 1, 0, EMPTY_SLOT],
            );
            let loss = t.cross_entropy(logits, vec![0, 5, 3, 1], vec![1.0, 1.0, 0.0, 1.0]);
            (t.value(loss)[[0, 0]], t.backward(loss))
        };
        let (_, grads) = run(&params);
        let eps = 1e-6;
        for (id, g) in grads {
            for idx in 0..g.len() {
                let (r, c) = (idx / g.ncols(), idx % g.ncols());
                let mut plus = params.clone();
                plus[id][[r, c]] += eps;
                let mut minus = params.clone();
                minus[id][[r, c]] -= eps;
                let fd = (run(&plus).0 - run(&minus).0) / (2.0 * eps);
                let an = g[[r, c]];
                assert!(
                    (fd - an).abs() <= 1e-6 + 1e-5 * fd.abs().max(an.abs()),
                    "param {id} [{r},{c}]: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn masked_query_rows_are_zero() {
        let mut t = Tape::new();
        let x = t.input(Mat::ones((2, 2)));
        let out = t.attention(x, x, x, 1, 2, &[false, true]);
        assert_eq!(t.value(out).row(0).sum(), 0.0);
        assert!((t.value(out)[[1, 0]] - 1.0).abs() < 1e-12);
    }
}

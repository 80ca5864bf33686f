//! A small reverse-mode differentiation core over dense f64 tensors.
//!
//! The model needs a closed set of operations (matmul, elementwise math,
//! softmax, layer norm, embedding gather, reductions, concatenation and a
//! fused masked cross-entropy), each with a hand-written backward pass.
//! Graphs are built eagerly on a [`Graph`] arena; `backward` walks the
//! arena in reverse creation order, so gradients are exact and the whole
//! core is finite-difference testable.

use rand::Rng;
use rand_distr::StandardNormal;

/// Dense row-major tensor. Rank 1 and 2 cover everything the model needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a rank-2 tensor (rank-1 counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            r => panic!("rows() on rank-{r} tensor"),
        }
    }

    /// Columns of a rank-2 tensor (rank-1 counts as its length).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            r => panic!("cols() on rank-{r} tensor"),
        }
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// c[m,n] = a[m,k] · b[k,n]
pub fn mm_nn(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.data.len(), m * k);
    debug_assert_eq!(b.data.len(), k * n);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a.data[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b.data[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
    c
}

/// c[m,n] = a[m,k] · b[n,k]ᵀ
pub fn mm_nt(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.data.len(), m * k);
    debug_assert_eq!(b.data.len(), n * k);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let b_row = &b.data[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += a_row[p] * b_row[p];
            }
            c_row[j] = s;
        }
    }
    c
}

/// c[k,n] = a[m,k]ᵀ · g[m,n]
pub fn mm_tn(a: &Tensor, g: &Tensor, m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.data.len(), m * k);
    debug_assert_eq!(g.data.len(), m * n);
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &g.data[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a.data[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * g_row[j];
            }
        }
    }
    c
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Index into the gradient vector returned by [`Graph::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    MatmulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Gather { table: Var, ids: Vec<u32> },
    MeanRows(Var),
    Sum(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize, len: usize },
    Reshape(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    WeightedCe { logits: Var, targets: Vec<u32>, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Op-specific forward cache (softmax probabilities).
    saved: Option<Vec<f64>>,
    needs_grad: bool,
}

/// Arena holding one forward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, saved: Option<Vec<f64>>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            saved,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.data.len(), 1, "scalar_value on non-scalar");
        t.data[0]
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, None, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, None, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul inner dims");
        let data = mm_nn(ta, tb, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![m, n], data), Op::Matmul(a, b), None, ng)
    }

    /// a · bᵀ with b stored row-major as [n, k].
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (ta.rows(), ta.cols());
        let (n, k2) = (tb.rows(), tb.cols());
        assert_eq!(k, k2, "matmul_nt inner dims");
        let data = mm_nt(ta, tb, m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![m, n], data), Op::MatmulNt(a, b), None, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "add shapes");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), Op::Add(a, b), None, ng)
    }

    /// Broadcast add of a row vector: [m,n] + [n].
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, n) = (ta.rows(), ta.cols());
        assert_eq!(tb.shape, vec![n], "add_row vector shape");
        let mut data = ta.data.clone();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += tb.data[j];
            }
        }
        let shape = ta.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), Op::AddRow(a, b), None, ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape, tb.shape, "mul shapes");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), Op::Mul(a, b), None, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x * c).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Scale(a, c), None, ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x + c).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::AddScalar(a), None, ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x.exp()).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Exp(a), None, ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|x| x.ln()).collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Ln(a), None, ng)
    }

    /// ln(1 + e^x), computed stably; the model's smooth activation.
    pub fn softplus(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta
            .data
            .iter()
            .map(|&x| x.max(0.0) + (-x.abs()).exp().ln_1p())
            .collect();
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Softplus(a), None, ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (m, n) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &ta.data[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                data[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                data[i * n + j] /= z;
            }
        }
        let shape = ta.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::SoftmaxRows(a), None, ng)
    }

    /// Per-row layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (tx, tg, tb) = (
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
        );
        let (m, n) = (tx.rows(), tx.cols());
        assert_eq!(tg.shape, vec![n]);
        assert_eq!(tb.shape, vec![n]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &tx.data[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for j in 0..n {
                let xhat = (row[j] - mean) * inv;
                data[i * n + j] = xhat * tg.data[j] + tb.data[j];
            }
        }
        let shape = tx.shape.clone();
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(
            Tensor::new(shape, data),
            Op::LayerNorm { x, gain, bias },
            None,
            ng,
        )
    }

    /// Embedding lookup: table[V,d] indexed by ids -> [ids.len(), d].
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Var {
        let tt = &self.nodes[table.0].value;
        let (v, d) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            assert!(id < v, "gather id {id} out of range {v}");
            data.extend_from_slice(&tt.data[id * d..(id + 1) * d]);
        }
        let ng = self.ng(table);
        self.push(
            Tensor::new(vec![ids.len(), d], data),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            None,
            ng,
        )
    }

    /// Column means: [m,n] -> [n].
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let (m, n) = (ta.rows(), ta.cols());
        assert!(m > 0);
        let mut data = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                data[j] += ta.data[i * n + j];
            }
        }
        for v in &mut data {
            *v /= m as f64;
        }
        let ng = self.ng(a);
        self.push(Tensor::new(vec![n], data), Op::MeanRows(a), None, ng)
    }

    /// Sum of all elements -> scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), None, ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let n = self.nodes[parts[0].0].value.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.cols(), n, "concat_rows widths");
            rows += t.rows();
            data.extend_from_slice(&t.data);
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(
            Tensor::new(vec![rows, n], data),
            Op::ConcatRows(parts.to_vec()),
            None,
            ng,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let m = self.nodes[parts[0].0].value.rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = &self.nodes[p.0].value;
                assert_eq!(t.rows(), m, "concat_cols heights");
                t.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = &self.nodes[p.0].value;
            for i in 0..m {
                data[i * total + off..i * total + off + w]
                    .copy_from_slice(&t.data[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(
            Tensor::new(vec![m, total], data),
            Op::ConcatCols(parts.to_vec()),
            None,
            ng,
        )
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        let (m, n) = (tx.rows(), tx.cols());
        assert!(start + len <= m, "slice_rows range");
        let data = tx.data[start * n..(start + len) * n].to_vec();
        let ng = self.ng(x);
        self.push(
            Tensor::new(vec![len, n], data),
            Op::SliceRows { x, start, len },
            None,
            ng,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(
            shape.iter().product::<usize>(),
            tx.data.len(),
            "reshape element count"
        );
        let t = Tensor::new(shape.to_vec(), tx.data.clone());
        let ng = self.ng(x);
        self.push(t, Op::Reshape(x), None, ng)
    }

    /// Single row as a rank-1 vector.
    pub fn row(&mut self, x: Var, i: usize) -> Var {
        let n = self.nodes[x.0].value.cols();
        let s = self.slice_rows(x, i, 1);
        self.reshape(s, &[n])
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let tx = &self.nodes[x.0].value;
        let data = tx.data.iter().map(|v| v.clamp(lo, hi)).collect();
        let shape = tx.shape.clone();
        let ng = self.ng(x);
        self.push(Tensor::new(shape, data), Op::Clamp { x, lo, hi }, None, ng)
    }

    /// Fused weighted token cross-entropy over logits [m, V]:
    /// sum over rows of w_i · (logsumexp(row_i) - row_i[target_i]).
    /// A zero weight masks the row out entirely.
    pub fn weighted_ce(&mut self, logits: Var, targets: &[u32], weights: &[f64]) -> Var {
        let tl = &self.nodes[logits.0].value;
        let (m, v) = (tl.rows(), tl.cols());
        assert_eq!(targets.len(), m);
        assert_eq!(weights.len(), m);
        let mut probs = vec![0.0; m * v];
        let mut loss = 0.0;
        for i in 0..m {
            let row = &tl.data[i * v..(i + 1) * v];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..v {
                let e = (row[j] - mx).exp();
                probs[i * v + j] = e;
                z += e;
            }
            for j in 0..v {
                probs[i * v + j] /= z;
            }
            if weights[i] != 0.0 {
                let t = targets[i] as usize;
                assert!(t < v, "target id out of range");
                loss += weights[i] * (mx + z.ln() - row[t]);
            }
        }
        let ng = self.ng(logits);
        self.push(
            Tensor::scalar(loss),
            Op::WeightedCe {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
            },
            Some(probs),
            ng,
        )
    }

    /// Mean token cross-entropy over rows where `mask` is true.
    pub fn masked_ce(&mut self, logits: Var, targets: &[u32], mask: &[bool]) -> Var {
        let count = mask.iter().filter(|&&b| b).count().max(1) as f64;
        let weights: Vec<f64> = mask
            .iter()
            .map(|&b| if b { 1.0 / count } else { 0.0 })
            .collect();
        self.weighted_ce(logits, targets, &weights)
    }

    /// Reverse pass from a scalar root. Returns per-node gradients
    /// (None where no gradient flows).
    pub fn backward(&mut self, root: Var) -> Vec<Option<Tensor>> {
        assert_eq!(
            self.nodes[root.0].value.data.len(),
            1,
            "backward root must be scalar"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            macro_rules! acc {
                ($var:expr, $tensor:expr) => {{
                    let v: Var = $var;
                    if self.nodes[v.0].needs_grad {
                        let t: Tensor = $tensor;
                        match &mut grads[v.0] {
                            Some(existing) => {
                                for (a, b) in existing.data.iter_mut().zip(&t.data) {
                                    *a += b;
                                }
                            }
                            slot => *slot = Some(t),
                        }
                    }
                }};
            }

            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let (m, k) = (ta.rows(), ta.cols());
                    let n = tb.cols();
                    // dA = G · Bᵀ ; dB = Aᵀ · G
                    let da = mm_nt(&g, tb, m, n, k);
                    let db = mm_tn(ta, &g, m, k, n);
                    acc!(a, Tensor::new(ta.shape.clone(), da));
                    acc!(b, Tensor::new(tb.shape.clone(), db));
                }
                Op::MatmulNt(a, b) => {
                    let (a, b) = (*a, *b);
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let (m, k) = (ta.rows(), ta.cols());
                    let n = tb.rows();
                    // C = A·Bᵀ: dA = G·B ; dB = Gᵀ·A
                    let da = mm_nn(&g, tb, m, n, k);
                    let db = mm_tn(&g, ta, m, n, k);
                    acc!(a, Tensor::new(ta.shape.clone(), da));
                    acc!(b, Tensor::new(tb.shape.clone(), db));
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    acc!(a, g.clone());
                    acc!(b, g.clone());
                }
                Op::AddRow(a, b) => {
                    let (a, b) = (*a, *b);
                    let n = self.nodes[b.0].value.cols();
                    let m = g.data.len() / n;
                    let mut db = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g.data[i * n + j];
                        }
                    }
                    acc!(a, g.clone());
                    acc!(b, Tensor::new(vec![n], db));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ta = self.nodes[a.0].value.clone();
                    let tb = self.nodes[b.0].value.clone();
                    let da: Vec<f64> = g.data.iter().zip(&tb.data).map(|(g, y)| g * y).collect();
                    let db: Vec<f64> = g.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                    acc!(a, Tensor::new(ta.shape.clone(), da));
                    acc!(b, Tensor::new(tb.shape.clone(), db));
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let da = g.data.iter().map(|g| g * c).collect();
                    let shape = self.nodes[a.0].value.shape.clone();
                    acc!(a, Tensor::new(shape, da));
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    acc!(a, g.clone());
                }
                Op::Exp(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let da = g.data.iter().zip(&y.data).map(|(g, y)| g * y).collect();
                    let shape = y.shape.clone();
                    acc!(a, Tensor::new(shape, da));
                }
                Op::Ln(a) => {
                    let a = *a;
                    let tx = &self.nodes[a.0].value;
                    let da = g.data.iter().zip(&tx.data).map(|(g, x)| g / x).collect();
                    acc!(a, Tensor::new(tx.shape.clone(), da));
                }
                Op::Softplus(a) => {
                    let a = *a;
                    let tx = &self.nodes[a.0].value;
                    let da = g
                        .data
                        .iter()
                        .zip(&tx.data)
                        .map(|(g, &x)| {
                            // sigmoid(x), stable in both tails
                            let s = if x >= 0.0 {
                                1.0 / (1.0 + (-x).exp())
                            } else {
                                let e = x.exp();
                                e / (1.0 + e)
                            };
                            g * s
                        })
                        .collect();
                    acc!(a, Tensor::new(tx.shape.clone(), da));
                }
                Op::SoftmaxRows(a) => {
                    let a = *a;
                    let s = &self.nodes[idx].value;
                    let (m, n) = (s.rows(), s.cols());
                    let mut da = vec![0.0; m * n];
                    for i in 0..m {
                        let srow = &s.data[i * n..(i + 1) * n];
                        let grow = &g.data[i * n..(i + 1) * n];
                        let dot: f64 = srow.iter().zip(grow).map(|(s, g)| s * g).sum();
                        for j in 0..n {
                            da[i * n + j] = srow[j] * (grow[j] - dot);
                        }
                    }
                    acc!(a, Tensor::new(s.shape.clone(), da));
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (x, gain, bias) = (*x, *gain, *bias);
                    let tx = &self.nodes[x.0].value;
                    let tg = &self.nodes[gain.0].value;
                    let (m, n) = (tx.rows(), tx.cols());
                    let mut dx = vec![0.0; m * n];
                    let mut dgain = vec![0.0; n];
                    let mut dbias = vec![0.0; n];
                    for i in 0..m {
                        let row = &tx.data[i * n..(i + 1) * n];
                        let grow = &g.data[i * n..(i + 1) * n];
                        let mean = row.iter().sum::<f64>() / n as f64;
                        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        // dL/dxhat_j = g_j * gain_j
                        let mut gx_mean = 0.0;
                        let mut gxxhat_mean = 0.0;
                        let mut xhat = vec![0.0; n];
                        for j in 0..n {
                            xhat[j] = (row[j] - mean) * inv;
                            let gx = grow[j] * tg.data[j];
                            gx_mean += gx;
                            gxxhat_mean += gx * xhat[j];
                        }
                        gx_mean /= n as f64;
                        gxxhat_mean /= n as f64;
                        for j in 0..n {
                            let gx = grow[j] * tg.data[j];
                            dx[i * n + j] = inv * (gx - gx_mean - xhat[j] * gxxhat_mean);
                            dgain[j] += grow[j] * xhat[j];
                            dbias[j] += grow[j];
                        }
                    }
                    acc!(x, Tensor::new(tx.shape.clone(), dx));
                    acc!(gain, Tensor::new(vec![n], dgain));
                    acc!(bias, Tensor::new(vec![n], dbias));
                }
                Op::Gather { table, ids } => {
                    let table = *table;
                    let ids = ids.clone();
                    let tt = &self.nodes[table.0].value;
                    let (v, d) = (tt.rows(), tt.cols());
                    let mut dt = vec![0.0; v * d];
                    for (r, &id) in ids.iter().enumerate() {
                        let id = id as usize;
                        for j in 0..d {
                            dt[id * d + j] += g.data[r * d + j];
                        }
                    }
                    acc!(table, Tensor::new(vec![v, d], dt));
                }
                Op::MeanRows(a) => {
                    let a = *a;
                    let ta = &self.nodes[a.0].value;
                    let (m, n) = (ta.rows(), ta.cols());
                    let mut da = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            da[i * n + j] = g.data[j] / m as f64;
                        }
                    }
                    acc!(a, Tensor::new(ta.shape.clone(), da));
                }
                Op::Sum(a) => {
                    let a = *a;
                    let ta = &self.nodes[a.0].value;
                    let da = vec![g.data[0]; ta.data.len()];
                    acc!(a, Tensor::new(ta.shape.clone(), da));
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let n = self.nodes[parts[0].0].value.cols();
                    let mut start = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let shape = self.nodes[p.0].value.shape.clone();
                        let dp = g.data[start * n..(start + rows) * n].to_vec();
                        start += rows;
                        acc!(p, Tensor::new(shape, dp));
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let m = self.nodes[parts[0].0].value.rows();
                    let total = g.data.len() / m;
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        let shape = self.nodes[p.0].value.shape.clone();
                        let mut dp = vec![0.0; m * w];
                        for i in 0..m {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&g.data[i * total + off..i * total + off + w]);
                        }
                        off += w;
                        acc!(p, Tensor::new(shape, dp));
                    }
                }
                Op::SliceRows { x, start, len } => {
                    let (x, start, len) = (*x, *start, *len);
                    let tx = &self.nodes[x.0].value;
                    let (m, n) = (tx.rows(), tx.cols());
                    let mut dx = vec![0.0; m * n];
                    dx[start * n..(start + len) * n].copy_from_slice(&g.data);
                    acc!(x, Tensor::new(tx.shape.clone(), dx));
                }
                Op::Reshape(x) => {
                    let x = *x;
                    let shape = self.nodes[x.0].value.shape.clone();
                    acc!(x, Tensor::new(shape, g.data.clone()));
                }
                Op::Clamp { x, lo, hi } => {
                    let (x, lo, hi) = (*x, *lo, *hi);
                    let tx = &self.nodes[x.0].value;
                    let da = g
                        .data
                        .iter()
                        .zip(&tx.data)
                        .map(|(g, &v)| if v > lo && v < hi { *g } else { 0.0 })
                        .collect();
                    acc!(x, Tensor::new(tx.shape.clone(), da));
                }
                Op::WeightedCe {
                    logits,
                    targets,
                    weights,
                } => {
                    let logits = *logits;
                    let targets = targets.clone();
                    let weights = weights.clone();
                    let probs = self.nodes[idx].saved.as_ref().expect("ce cache").clone();
                    let tl = &self.nodes[logits.0].value;
                    let (m, v) = (tl.rows(), tl.cols());
                    let upstream = g.data[0];
                    let mut dl = vec![0.0; m * v];
                    for i in 0..m {
                        if weights[i] == 0.0 {
                            continue;
                        }
                        let scale = upstream * weights[i];
                        let t = targets[i] as usize;
                        for j in 0..v {
                            let delta = if j == t { 1.0 } else { 0.0 };
                            dl[i * v + j] = scale * (probs[i * v + j] - delta);
                        }
                    }
                    acc!(logits, Tensor::new(tl.shape.clone(), dl));
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }
}

use super::{Graph, Matrix, NeuralError, ParamId, ParamStore, Var};
use crate::rng::Rng;

fn expect_shape(what: &str, m: &Matrix, rows: usize, cols: usize) -> Result<(), NeuralError> {
    if m.shape() != (rows, cols) {
        return Err(NeuralError::Shape(format!(
            "{what} is {:?}, expected ({rows}, {cols})",
            m.shape()
        )));
    }
    Ok(())
}

/// `y = x W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), input, output, input, rng);
        let b = store.add_uniform(format!("{name}.b"), 1, output, input, rng);
        Self { input, output, w, b }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// LSTM cell with separate per-gate weights, gates ordered `i, f, g, o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub w: [ParamId; 4],
    pub u: [ParamId; 4],
    pub b: [ParamId; 4],
}

const LSTM_GATES: [&str; 4] = ["i", "f", "g", "o"];

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w = LSTM_GATES.map(|k| store.add_uniform(format!("{name}.w_{k}"), input, hidden, hidden, rng));
        let u = LSTM_GATES.map(|k| store.add_uniform(format!("{name}.u_{k}"), hidden, hidden, hidden, rng));
        let b = LSTM_GATES.map(|k| store.add_uniform(format!("{name}.b_{k}"), 1, hidden, hidden, rng));
        Self { input, hidden, w, u, b }
    }

    fn gate(&self, g: &mut Graph, k: usize, x: Var, h: Var) -> Var {
        let (w, u, b) = (g.param(self.w[k]), g.param(self.u[k]), g.param(self.b[k]));
        let xw = g.matmul(x, w);
        let hu = g.matmul(h, u);
        let s = g.add(xw, hu);
        g.add_row(s, b)
    }

    /// One step for a batch: `x` is `B x input`, states are `B x hidden`.
    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> (Var, Var) {
        let i = self.gate(g, 0, x, h);
        let i = g.sigmoid(i);
        let f = self.gate(g, 1, x, h);
        let f = g.sigmoid(f);
        let cand = self.gate(g, 2, x, h);
        let cand = g.tanh(cand);
        let o = self.gate(g, 3, x, h);
        let o = g.sigmoid(o);
        let keep = g.mul(f, c);
        let write = g.mul(i, cand);
        let c_new = g.add(keep, write);
        let tc = g.tanh(c_new);
        (g.mul(o, tc), c_new)
    }
}

/// Eager single step of an [`LstmCell`] with shape validation.
pub fn lstm_cell(
    params: &ParamStore,
    cell: &LstmCell,
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
) -> Result<(Matrix, Matrix), NeuralError> {
    let b = x.rows();
    expect_shape("x", x, b, cell.input)?;
    expect_shape("h_prev", h_prev, b, cell.hidden)?;
    expect_shape("c_prev", c_prev, b, cell.hidden)?;
    let mut g = Graph::new(params);
    let (x, h, c) = (g.input(x.clone()), g.input(h_prev.clone()), g.input(c_prev.clone()));
    let (h, c) = cell.step(&mut g, x, h, c);
    Ok((g.value(h).clone(), g.value(c).clone()))
}

/// GRU cell: `z, r` sigmoid gates, candidate `tanh(x W_n + (r ⊙ h) U_n + b_n)`,
/// `h' = (1 - z) ⊙ h + z ⊙ n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w: [ParamId; 3],
    pub u: [ParamId; 3],
    pub b: [ParamId; 3],
}

const GRU_GATES: [&str; 3] = ["z", "r", "n"];

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w = GRU_GATES.map(|k| store.add_uniform(format!("{name}.w_{k}"), input, hidden, hidden, rng));
        let u = GRU_GATES.map(|k| store.add_uniform(format!("{name}.u_{k}"), hidden, hidden, hidden, rng));
        let b = GRU_GATES.map(|k| store.add_uniform(format!("{name}.b_{k}"), 1, hidden, hidden, rng));
        Self { input, hidden, w, u, b }
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Var {
        let pre = |g: &mut Graph, k: usize, hin: Var| {
            let (w, u, b) = (g.param(self.w[k]), g.param(self.u[k]), g.param(self.b[k]));
            let xw = g.matmul(x, w);
            let hu = g.matmul(hin, u);
            let s = g.add(xw, hu);
            g.add_row(s, b)
        };
        let z = pre(g, 0, h);
        let z = g.sigmoid(z);
        let r = pre(g, 1, h);
        let r = g.sigmoid(r);
        let rh = g.mul(r, h);
        let n = pre(g, 2, rh);
        let n = g.tanh(n);
        let diff = g.sub(n, h);
        let step = g.mul(z, diff);
        g.add(h, step)
    }
}

/// Eager single step of a [`GruCell`] with shape validation.
pub fn gru_cell(params: &ParamStore, cell: &GruCell, x: &Matrix, h_prev: &Matrix) -> Result<Matrix, NeuralError> {
    let b = x.rows();
    expect_shape("x", x, b, cell.input)?;
    expect_shape("h_prev", h_prev, b, cell.hidden)?;
    let mut g = Graph::new(params);
    let (x, h) = (g.input(x.clone()), g.input(h_prev.clone()));
    let h = cell.step(&mut g, x, h);
    Ok(g.value(h).clone())
}

/// Additive attention: `score_j = vᵀ tanh(W_q q + W_k k_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bahdanau {
    pub query: usize,
    pub key: usize,
    pub attn: usize,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub v: ParamId,
}

impl Bahdanau {
    pub fn new(store: &mut ParamStore, name: &str, query: usize, key: usize, attn: usize, rng: &mut Rng) -> Self {
        Self {
            query,
            key,
            attn,
            w_q: store.add_uniform(format!("{name}.w_q"), query, attn, query, rng),
            w_k: store.add_uniform(format!("{name}.w_k"), key, attn, key, rng),
            v: store.add_uniform(format!("{name}.v"), attn, 1, attn, rng),
        }
    }

    /// Returns `(context B x key, weights B x n)`. `keys` must be nonempty.
    pub fn attend(&self, g: &mut Graph, query: Var, keys: &[Var]) -> (Var, Var) {
        assert!(!keys.is_empty(), "attention over no keys");
        let (wq, wk, v) = (g.param(self.w_q), g.param(self.w_k), g.param(self.v));
        let qp = g.matmul(query, wq);
        let scores: Vec<Var> = keys
            .iter()
            .map(|&k| {
                let kp = g.matmul(k, wk);
                let s = g.add(qp, kp);
                let s = g.tanh(s);
                g.matmul(s, v)
            })
            .collect();
        let scores = g.concat_cols(&scores);
        let weights = g.softmax_rows(scores);
        let mut context = None;
        for (j, &k) in keys.iter().enumerate() {
            let wj = g.slice_cols(weights, j, 1);
            let term = g.mul_col(k, wj);
            context = Some(match context {
                None => term,
                Some(acc) => g.add(acc, term),
            });
        }
        (context.expect("nonempty keys"), weights)
    }
}

/// Eager attention with validation; weights have one row per batch sample.
pub fn bahdanau_attention(
    params: &ParamStore,
    att: &Bahdanau,
    query: &Matrix,
    keys: &[Matrix],
) -> Result<(Matrix, Matrix), NeuralError> {
    if keys.is_empty() {
        return Err(NeuralError::Domain("attention needs at least one key".into()));
    }
    let b = query.rows();
    expect_shape("query", query, b, att.query)?;
    for (j, k) in keys.iter().enumerate() {
        expect_shape(&format!("key {j}"), k, b, att.key)?;
    }
    let mut g = Graph::new(params);
    let q = g.input(query.clone());
    let ks: Vec<Var> = keys.iter().map(|k| g.input(k.clone())).collect();
    let (c, w) = att.attend(&mut g, q, &ks);
    Ok((g.value(c).clone(), g.value(w).clone()))
}

/// Causal multi-head scaled dot-product self-attention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfAttention {
    pub d_model: usize,
    pub heads: usize,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut Rng) -> Result<Self, NeuralError> {
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(NeuralError::Config(format!(
                "model dim {d_model} is not divisible by {heads} heads"
            )));
        }
        let mut mk = |k: &str| store.add_uniform(format!("{name}.{k}"), d_model, d_model, d_model, rng);
        Ok(Self {
            d_model,
            heads,
            wq: mk("w_q"),
            wk: mk("w_k"),
            wv: mk("w_v"),
            wo: mk("w_o"),
        })
    }

    /// `x` stacks `batch` sequences of length `seq` row-wise
    /// (`batch·seq x d_model`); output has the same layout.
    pub fn forward(&self, g: &mut Graph, x: Var, batch: usize, seq: usize) -> Var {
        let (wq, wk, wv, wo) = (g.param(self.wq), g.param(self.wk), g.param(self.wv), g.param(self.wo));
        let q = g.matmul(x, wq);
        let k = g.matmul(x, wk);
        let v = g.matmul(x, wv);
        let dh = self.d_model / self.heads;
        let mask = g.input(causal_mask(seq));
        let scale = 1.0 / (dh as f64).sqrt();
        let mut samples = Vec::with_capacity(batch);
        for b in 0..batch {
            let (qb, kb, vb) = (
                g.slice_rows(q, b * seq, seq),
                g.slice_rows(k, b * seq, seq),
                g.slice_rows(v, b * seq, seq),
            );
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let (qh, kh, vh) = if self.heads == 1 {
                    (qb, kb, vb)
                } else {
                    (
                        g.slice_cols(qb, h * dh, dh),
                        g.slice_cols(kb, h * dh, dh),
                        g.slice_cols(vb, h * dh, dh),
                    )
                };
                let s = g.matmul_t(qh, kh);
                let s = g.scale(s, scale);
                let s = g.add(s, mask);
                let a = g.softmax_rows(s);
                heads.push(g.matmul(a, vh));
            }
            samples.push(if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) });
        }
        let cat = if samples.len() == 1 { samples[0] } else { g.concat_rows(&samples) };
        g.matmul(cat, wo)
    }
}

/// `0` on and below the diagonal, `-inf` above.
pub fn causal_mask(seq: usize) -> Matrix {
    let mut m = Matrix::zeros(seq, seq);
    for r in 0..seq {
        for c in r + 1..seq {
            m.set(r, c, f64::NEG_INFINITY);
        }
    }
    m
}

/// Eager self-attention over one `seq x d_model` sequence.
pub fn self_attention(params: &ParamStore, att: &SelfAttention, x: &Matrix) -> Result<Matrix, NeuralError> {
    if x.cols() != att.d_model || x.rows() == 0 {
        return Err(NeuralError::Shape(format!(
            "sequence is {:?}, expected (T >= 1, {})",
            x.shape(),
            att.d_model
        )));
    }
    let mut g = Graph::new(params);
    let xi = g.input(x.clone());
    let y = att.forward(&mut g, xi, 1, x.rows());
    Ok(g.value(y).clone())
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, d, 1.0)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, d)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.layer_norm_rows(x);
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        let y = g.mul_row(n, gain);
        g.add_row(y, bias)
    }
}

/// Sinusoidal encoding: `PE(pos, 2i) = sin(pos / 10000^(2i/d))`,
/// `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(length: usize, d_model: usize) -> Result<Matrix, NeuralError> {
    if !d_model.is_multiple_of(2) || d_model == 0 {
        return Err(NeuralError::Config(format!("model dim {d_model} must be even and positive")));
    }
    let mut pe = Matrix::zeros(length, d_model);
    for pos in 0..length {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe.set(pos, 2 * i, angle.sin());
            pe.set(pos, 2 * i + 1, angle.cos());
        }
    }
    Ok(pe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::grad_check;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn zero_all(p: &mut ParamStore) {
        for id in p.ids().collect::<Vec<_>>() {
            p.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn lstm_zero_fixed_point() {
        let mut p = ParamStore::new();
        let cell = LstmCell::new(&mut p, "l", 3, 4, &mut seeded(0));
        zero_all(&mut p);
        let (h, c) = lstm_cell(&p, &cell, &Matrix::zeros(2, 3), &Matrix::zeros(2, 4), &Matrix::zeros(2, 4)).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn lstm_saturated_gates_keep_memory() {
        let mut p = ParamStore::new();
        let mut rng = seeded(1);
        let cell = LstmCell::new(&mut p, "l", 3, 4, &mut rng);
        p.get_mut(cell.b[1]).data_mut().iter_mut().for_each(|v| *v = 50.0);
        p.get_mut(cell.b[0]).data_mut().iter_mut().for_each(|v| *v = -50.0);
        let c_prev = random(2, 4, &mut rng);
        let (_, c) = lstm_cell(&p, &cell, &random(2, 3, &mut rng), &random(2, 4, &mut rng), &c_prev).unwrap();
        assert!(c.zip_map(&c_prev, |a, b| a - b).max_abs() < 1e-12);
        assert!(lstm_cell(&p, &cell, &Matrix::zeros(2, 2), &c_prev, &c_prev).is_err());
    }

    #[test]
    fn gru_closed_update_gate_and_zero_point() {
        let mut p = ParamStore::new();
        let mut rng = seeded(2);
        let cell = GruCell::new(&mut p, "g", 2, 3, &mut rng);
        p.get_mut(cell.b[0]).data_mut().iter_mut().for_each(|v| *v = -50.0);
        let h_prev = random(4, 3, &mut rng);
        let h = gru_cell(&p, &cell, &random(4, 2, &mut rng), &h_prev).unwrap();
        assert!(h.zip_map(&h_prev, |a, b| a - b).max_abs() < 1e-12);
        zero_all(&mut p);
        let h = gru_cell(&p, &cell, &Matrix::zeros(1, 2), &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        assert!(gru_cell(&p, &cell, &Matrix::zeros(1, 3), &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn attention_symmetry_and_single_key() {
        let mut p = ParamStore::new();
        let mut rng = seeded(3);
        let att = Bahdanau::new(&mut p, "a", 3, 4, 5, &mut rng);
        let q = random(2, 3, &mut rng);
        let k = random(2, 4, &mut rng);
        let (ctx, w) = bahdanau_attention(&p, &att, &q, &[k.clone(), k.clone(), k.clone()]).unwrap();
        assert!(w.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        assert!(ctx.zip_map(&k, |a, b| a - b).max_abs() < 1e-12);
        let (ctx, w) = bahdanau_attention(&p, &att, &q, std::slice::from_ref(&k)).unwrap();
        assert_eq!(w.data(), &[1.0, 1.0]);
        assert_eq!(ctx, k);
        assert!(matches!(bahdanau_attention(&p, &att, &q, &[]), Err(NeuralError::Domain(_))));
    }

    #[test]
    fn self_attention_single_position_projects_values() {
        let mut p = ParamStore::new();
        let mut rng = seeded(4);
        let att = SelfAttention::new(&mut p, "s", 4, 2, &mut rng).unwrap();
        let x = random(1, 4, &mut rng);
        let y = self_attention(&p, &att, &x).unwrap();
        let want = x.matmul(p.get(att.wv)).matmul(p.get(att.wo));
        assert!(y.zip_map(&want, |a, b| a - b).max_abs() < 1e-12);
        assert!(matches!(SelfAttention::new(&mut p, "t", 5, 2, &mut rng), Err(NeuralError::Config(_))));
    }

    #[test]
    fn self_attention_is_causal() {
        let mut p = ParamStore::new();
        let mut rng = seeded(5);
        let att = SelfAttention::new(&mut p, "s", 4, 2, &mut rng).unwrap();
        let x = random(3, 4, &mut rng);
        let mut x2 = x.clone();
        x2.row_mut(1).iter_mut().for_each(|v| *v += 3.0);
        x2.row_mut(2).iter_mut().for_each(|v| *v -= 1.0);
        let (y, y2) = (self_attention(&p, &att, &x).unwrap(), self_attention(&p, &att, &x2).unwrap());
        assert_eq!(y.row(0), y2.row(0));
        assert_ne!(y.row(1), y2.row(1));
    }

    #[test]
    fn positional_encoding_values() {
        let pe = positional_encoding(5, 8).unwrap();
        for c in 0..8 {
            assert_eq!(pe.get(0, c), if c % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.get(1, 0) - 0.84147).abs() < 1e-5);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(positional_encoding(5, 7).is_err());
    }

    fn weighted_sum(g: &mut Graph, y: Var, seed: u64) -> Var {
        // a fixed random projection keeps gradients away from zero
        let (r, c) = g.value(y).shape();
        let w = g.input(random(r, c, &mut seeded(seed)));
        let p = g.mul(y, w);
        g.sum(p)
    }

    fn check(p: &ParamStore, loss: impl Fn(&ParamStore) -> (f64, Vec<Matrix>)) -> f64 {
        let (_, grads) = loss(p);
        grad_check(p, &grads, |q| loss(q).0).max_rel_err
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        for probe in 0..5u64 {
            let mut rng = seeded(100 + probe);
            let xs: Vec<Matrix> = (0..3).map(|_| random(2, 3, &mut rng)).collect();
            let (h0, c0) = (random(2, 4, &mut rng), random(2, 4, &mut rng));

            let mut p = ParamStore::new();
            let lstm = LstmCell::new(&mut p, "lstm", 3, 4, &mut rng);
            let err = check(&p, |p| {
                let mut g = Graph::new(p);
                let (mut h, mut c) = (g.input(h0.clone()), g.input(c0.clone()));
                for m in &xs {
                    let x = g.input(m.clone());
                    (h, c) = lstm.step(&mut g, x, h, c);
                }
                let a = weighted_sum(&mut g, h, 1);
                let b = weighted_sum(&mut g, c, 2);
                let l = g.add(a, b);
                (g.scalar(l), g.backward(l))
            });
            assert!(err < 1e-4, "lstm probe {probe}: {err}");

            let mut p = ParamStore::new();
            let gru = GruCell::new(&mut p, "gru", 3, 4, &mut rng);
            let err = check(&p, |p| {
                let mut g = Graph::new(p);
                let mut h = g.input(h0.clone());
                for m in &xs {
                    let x = g.input(m.clone());
                    h = gru.step(&mut g, x, h);
                }
                let l = weighted_sum(&mut g, h, 3);
                (g.scalar(l), g.backward(l))
            });
            assert!(err < 1e-4, "gru probe {probe}: {err}");

            let mut p = ParamStore::new();
            let att = Bahdanau::new(&mut p, "att", 4, 3, 5, &mut rng);
            let err = check(&p, |p| {
                let mut g = Graph::new(p);
                let q = g.input(h0.clone());
                let keys: Vec<Var> = xs.iter().map(|m| g.input(m.clone())).collect();
                let (ctx, w) = att.attend(&mut g, q, &keys);
                let a = weighted_sum(&mut g, ctx, 4);
                let b = weighted_sum(&mut g, w, 5);
                let l = g.add(a, b);
                (g.scalar(l), g.backward(l))
            });
            assert!(err < 1e-4, "attention probe {probe}: {err}");

            let seq = random(6, 4, &mut rng);
            for heads in [1, 2] {
                let mut p = ParamStore::new();
                let sa = SelfAttention::new(&mut p, "sa", 4, heads, &mut rng).unwrap();
                let ln = LayerNorm::new(&mut p, "ln", 4);
                let err = check(&p, |p| {
                    let mut g = Graph::new(p);
                    let s = g.input(seq.clone());
                    let y = sa.forward(&mut g, s, 2, 3);
                    let y = ln.forward(&mut g, y);
                    let l = weighted_sum(&mut g, y, 6);
                    (g.scalar(l), g.backward(l))
                });
                assert!(err < 1e-4, "self-attention ({heads} heads) probe {probe}: {err}");
            }
        }
    }
}

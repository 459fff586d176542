//! The three neural forecaster graphs. Every network maps a batch of
//! scaled lookback windows (`B x L`) to next-month predictions (`B x 1`).

use super::config::Architecture;
use crate::neural::{
    positional_encoding, Bahdanau, GruCell, Graph, LayerNorm, Linear, LstmCell, Matrix, NeuralError, ParamStore,
    SelfAttention, Var,
};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Net {
    /// Stacked LSTM, linear head, ReLU output.
    Lstm { cells: Vec<LstmCell>, head: Linear },
    /// GRU encoder over the window, one-step GRU decoder fed the last
    /// observed value (and an attention context when present).
    Seq2seq {
        encoder: GruCell,
        bridge: Option<Linear>,
        attention: Option<Bahdanau>,
        decoder: GruCell,
        head: Linear,
    },
    /// One encoder block with causal attention, predicting the next value
    /// at every position.
    Transformer {
        embed: Linear,
        attention: SelfAttention,
        norm1: LayerNorm,
        ff_in: Linear,
        ff_out: Linear,
        norm2: LayerNorm,
        head: Linear,
        positions: Matrix,
    },
}

impl Net {
    pub fn build(arch: &Architecture, lookback: usize, rng: &mut Rng) -> Result<(Net, ParamStore), NeuralError> {
        let mut p = ParamStore::new();
        let net = match *arch {
            Architecture::Lstm { hidden, layers } => {
                if layers == 0 || hidden == 0 {
                    return Err(NeuralError::Config("LSTM needs at least one layer and one unit".into()));
                }
                let cells = (0..layers)
                    .map(|k| LstmCell::new(&mut p, &format!("lstm{k}"), if k == 0 { 1 } else { hidden }, hidden, rng))
                    .collect();
                let head = Linear::new(&mut p, "head", hidden, 1, rng);
                // start the ReLU output in its active region
                p.get_mut(head.b).data_mut()[0] = 0.5;
                Net::Lstm { cells, head }
            }
            Architecture::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                attention,
            } => {
                if encoder_hidden == 0 || decoder_hidden == 0 {
                    return Err(NeuralError::Config("seq2seq hidden sizes must be positive".into()));
                }
                let encoder = GruCell::new(&mut p, "encoder", 1, encoder_hidden, rng);
                let bridge = (encoder_hidden != decoder_hidden)
                    .then(|| Linear::new(&mut p, "bridge", encoder_hidden, decoder_hidden, rng));
                let attention =
                    attention.then(|| Bahdanau::new(&mut p, "attention", decoder_hidden, encoder_hidden, decoder_hidden, rng));
                let dec_in = 1 + if attention.is_some() { encoder_hidden } else { 0 };
                let decoder = GruCell::new(&mut p, "decoder", dec_in, decoder_hidden, rng);
                let head = Linear::new(&mut p, "head", decoder_hidden, 1, rng);
                Net::Seq2seq {
                    encoder,
                    bridge,
                    attention,
                    decoder,
                    head,
                }
            }
            Architecture::Transformer { d_model, heads, ff } => {
                let positions = positional_encoding(lookback, d_model)?;
                let embed = Linear::new(&mut p, "embed", 1, d_model, rng);
                let attention = SelfAttention::new(&mut p, "attention", d_model, heads, rng)?;
                let norm1 = LayerNorm::new(&mut p, "norm1", d_model);
                let ff_in = Linear::new(&mut p, "ff_in", d_model, ff, rng);
                let ff_out = Linear::new(&mut p, "ff_out", ff, d_model, rng);
                let norm2 = LayerNorm::new(&mut p, "norm2", d_model);
                let head = Linear::new(&mut p, "head", d_model, 1, rng);
                Net::Transformer {
                    embed,
                    attention,
                    norm1,
                    ff_in,
                    ff_out,
                    norm2,
                    head,
                    positions,
                }
            }
        };
        Ok((net, p))
    }

    /// Next-value predictions for a `B x L` batch of windows.
    pub fn predict(&self, g: &mut Graph, x: &Matrix) -> Var {
        match self {
            Net::Transformer { .. } => {
                let (b, l) = x.shape();
                let all = self.transformer_all(g, x);
                if l == 1 {
                    return all;
                }
                let last: Vec<Var> = (0..b).map(|i| g.slice_rows(all, i * l + l - 1, 1)).collect();
                if last.len() == 1 {
                    last[0]
                } else {
                    g.concat_rows(&last)
                }
            }
            _ => self.recurrent(g, x),
        }
    }

    /// Training loss: MSE of the next-value prediction. The transformer is
    /// scored at every position against the value that follows it.
    pub fn loss(&self, g: &mut Graph, x: &Matrix, y: &[f64]) -> Var {
        match self {
            Net::Transformer { .. } => {
                let (b, l) = x.shape();
                let all = self.transformer_all(g, x);
                let mut target = Vec::with_capacity(b * l);
                for i in 0..b {
                    target.extend_from_slice(&x.row(i)[1..]);
                    target.push(y[i]);
                }
                g.mse(all, &Matrix::col_vector(target))
            }
            _ => {
                let pred = self.recurrent(g, x);
                g.mse(pred, &Matrix::col_vector(y.to_vec()))
            }
        }
    }

    fn columns(g: &mut Graph, x: &Matrix) -> Vec<Var> {
        (0..x.cols())
            .map(|t| g.input(Matrix::col_vector((0..x.rows()).map(|r| x.get(r, t)).collect())))
            .collect()
    }

    fn recurrent(&self, g: &mut Graph, x: &Matrix) -> Var {
        let b = x.rows();
        let steps = Self::columns(g, x);
        match self {
            Net::Lstm { cells, head } => {
                let mut inputs = steps;
                for cell in cells {
                    let mut h = g.input(Matrix::zeros(b, cell.hidden));
                    let mut c = h;
                    let mut outs = Vec::with_capacity(inputs.len());
                    for &xt in &inputs {
                        (h, c) = cell.step(g, xt, h, c);
                        outs.push(h);
                    }
                    inputs = outs;
                }
                let last = *inputs.last().expect("lookback >= 1");
                let y = head.forward(g, last);
                g.relu(y)
            }
            Net::Seq2seq {
                encoder,
                bridge,
                attention,
                decoder,
                head,
            } => {
                let mut h = g.input(Matrix::zeros(b, encoder.hidden));
                let mut states = Vec::with_capacity(steps.len());
                for &xt in &steps {
                    h = encoder.step(g, xt, h);
                    states.push(h);
                }
                let h0 = match bridge {
                    Some(lin) => {
                        let z = lin.forward(g, h);
                        g.tanh(z)
                    }
                    None => h,
                };
                let y_prev = *steps.last().expect("lookback >= 1");
                let dec_in = match attention {
                    Some(att) => {
                        let (ctx, _) = att.attend(g, h0, &states);
                        g.concat_cols(&[y_prev, ctx])
                    }
                    None => y_prev,
                };
                let hd = decoder.step(g, dec_in, h0);
                head.forward(g, hd)
            }
            Net::Transformer { .. } => unreachable!("transformer is not recurrent"),
        }
    }

    /// Outputs at every position, stacked `B·L x 1`.
    fn transformer_all(&self, g: &mut Graph, x: &Matrix) -> Var {
        let Net::Transformer {
            embed,
            attention,
            norm1,
            ff_in,
            ff_out,
            norm2,
            head,
            positions,
        } = self
        else {
            unreachable!("not a transformer")
        };
        let (b, l) = x.shape();
        let flat = g.input(Matrix::col_vector(x.data().to_vec()));
        let mut pe = Vec::with_capacity(b * l * positions.cols());
        for _ in 0..b {
            pe.extend_from_slice(&positions.data()[..l * positions.cols()]);
        }
        let pe = g.input(Matrix::from_vec(b * l, positions.cols(), pe));
        let e = embed.forward(g, flat);
        let h = g.add(e, pe);
        // pre-norm block: the residual stream stays linear in the inputs,
        // which lets the head extrapolate past the training range
        let n = norm1.forward(g, h);
        let a = attention.forward(g, n, b, l);
        let h = g.add(h, a);
        let n = norm2.forward(g, h);
        let f = ff_in.forward(g, n);
        let f = g.relu(f);
        let f = ff_out.forward(g, f);
        let h = g.add(h, f);
        head.forward(g, h)
    }
}

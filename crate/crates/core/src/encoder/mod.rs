//! Toy transformer sentence encoder.
//!
//! Token + learned positional embeddings with seeded dropout realise the
//! dual-view positive pairs; a small post-norm transformer stack and a tanh
//! pooler over the `<cls>` position produce the sentence vector. All
//! stochasticity lives in the embedding stage: the transformer body is a
//! deterministic, differentiable function of the (possibly perturbed) token
//! embeddings, which is what lets perturbations in embedding space propagate
//! cleanly to the sentence vector.

mod vocab;

pub use vocab::{pad_to_common, TokenSequence, Vocab, CLS_ID, NUM_SPECIALS, PAD_ID, UNK_ID};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::tensor::Tensor;

/// Additive attention bias at padded key positions.
const MASK_BIAS: f64 = -1e30;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub dropout_p: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { vocab_size: 0, dim: 64, layers: 2, heads: 2, max_len: 32, dropout_p: 0.1 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.heads == 0 || self.max_len == 0 {
            return Err(Error::Config("encoder dims must be positive".into()));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0,1)", self.dropout_p)));
        }
        if self.vocab_size <= NUM_SPECIALS {
            return Err(Error::Config("vocab too small".into()));
        }
        Ok(())
    }

    fn ffn_dim(&self) -> usize {
        4 * self.dim
    }
}

#[derive(Clone, Debug)]
pub struct LayerWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
}

#[derive(Clone, Debug)]
pub struct EncoderWeights {
    pub tok: Tensor,
    pub pos: Tensor,
    pub layers: Vec<LayerWeights>,
    pub pooler_w: Tensor,
    pub pooler_b: Tensor,
}

fn init_tensor(shape: &[usize], std: f64, rng: &mut ChaCha12Rng) -> Tensor {
    let mut t = Tensor::new(
        shape,
        (0..shape.iter().product::<usize>()).map(|_| gaussian(rng) * std).collect(),
    );
    t.snap_f32();
    t
}

fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller; two uniform draws per sample keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl EncoderWeights {
    /// Gaussian init (std 0.02), layer-norm gains at one; padding row zeroed.
    /// All values land on the f32 grid so checkpoints round-trip exactly.
    pub fn init(config: &EncoderConfig, seed: u64) -> Self {
        let mut r = rng::stream_from(seed);
        let d = config.dim;
        let f = config.ffn_dim();
        let std = 0.02;
        let mut tok = init_tensor(&[config.vocab_size, d], std, &mut r);
        for v in tok.data_mut()[..d].iter_mut() {
            *v = 0.0; // <pad> row
        }
        let pos = init_tensor(&[config.max_len, d], std, &mut r);
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                wq: init_tensor(&[d, d], std, &mut r),
                bq: Tensor::zeros(&[d]),
                wk: init_tensor(&[d, d], std, &mut r),
                bk: Tensor::zeros(&[d]),
                wv: init_tensor(&[d, d], std, &mut r),
                bv: Tensor::zeros(&[d]),
                wo: init_tensor(&[d, d], std, &mut r),
                bo: Tensor::zeros(&[d]),
                ln1_g: Tensor::full(&[d], 1.0),
                ln1_b: Tensor::zeros(&[d]),
                w1: init_tensor(&[d, f], std, &mut r),
                b1: Tensor::zeros(&[f]),
                w2: init_tensor(&[f, d], std, &mut r),
                b2: Tensor::zeros(&[d]),
                ln2_g: Tensor::full(&[d], 1.0),
                ln2_b: Tensor::zeros(&[d]),
            })
            .collect();
        let pooler_w = init_tensor(&[d, d], std, &mut r);
        let pooler_b = Tensor::zeros(&[d]);
        Self { tok, pos, layers, pooler_w, pooler_b }
    }

    /// Stable (name, tensor) listing used by the optimizer and checkpoints.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            vec![("tok".into(), &self.tok), ("pos".into(), &self.pos)];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, t) in [
                ("wq", &l.wq),
                ("bq", &l.bq),
                ("wk", &l.wk),
                ("bk", &l.bk),
                ("wv", &l.wv),
                ("bv", &l.bv),
                ("wo", &l.wo),
                ("bo", &l.bo),
                ("ln1_g", &l.ln1_g),
                ("ln1_b", &l.ln1_b),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
                ("ln2_g", &l.ln2_g),
                ("ln2_b", &l.ln2_b),
            ] {
                out.push((format!("layer{i}.{n}"), t));
            }
        }
        out.push(("pooler_w".into(), &self.pooler_w));
        out.push(("pooler_b".into(), &self.pooler_b));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("tok".into(), &mut self.tok), ("pos".into(), &mut self.pos)];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (n, t) in [
                ("wq", &mut l.wq),
                ("bq", &mut l.bq),
                ("wk", &mut l.wk),
                ("bk", &mut l.bk),
                ("wv", &mut l.wv),
                ("bv", &mut l.bv),
                ("wo", &mut l.wo),
                ("bo", &mut l.bo),
                ("ln1_g", &mut l.ln1_g),
                ("ln1_b", &mut l.ln1_b),
                ("w1", &mut l.w1),
                ("b1", &mut l.b1),
                ("w2", &mut l.w2),
                ("b2", &mut l.b2),
                ("ln2_g", &mut l.ln2_g),
                ("ln2_b", &mut l.ln2_b),
            ] {
                out.push((format!("layer{i}.{n}"), t));
            }
        }
        out.push(("pooler_w".into(), &mut self.pooler_w));
        out.push(("pooler_b".into(), &mut self.pooler_b));
        out
    }
}

/// Token embeddings, pooled sentence vectors and the dropout seed that
/// produced them.
#[derive(Clone, Debug)]
pub struct EmbeddingState {
    pub x: Tensor,
    pub z: Tensor,
    pub dropout_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub weights: EncoderWeights,
}

/// Graph node ids for every encoder tensor, in `named()` order.
pub struct EncoderBinding {
    pub tok: NodeId,
    pub pos: NodeId,
    pub layers: Vec<LayerBinding>,
    pub pooler_w: NodeId,
    pub pooler_b: NodeId,
}

pub struct LayerBinding {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
    pub ln1_g: NodeId,
    pub ln1_b: NodeId,
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub ln2_g: NodeId,
    pub ln2_b: NodeId,
}

impl EncoderBinding {
    /// Node ids in the same order as `EncoderWeights::named()`.
    pub fn named(&self) -> Vec<(String, NodeId)> {
        let mut out: Vec<(String, NodeId)> = vec![("tok".into(), self.tok), ("pos".into(), self.pos)];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, id) in [
                ("wq", l.wq),
                ("bq", l.bq),
                ("wk", l.wk),
                ("bk", l.bk),
                ("wv", l.wv),
                ("bv", l.bv),
                ("wo", l.wo),
                ("bo", l.bo),
                ("ln1_g", l.ln1_g),
                ("ln1_b", l.ln1_b),
                ("w1", l.w1),
                ("b1", l.b1),
                ("w2", l.w2),
                ("b2", l.b2),
                ("ln2_g", l.ln2_g),
                ("ln2_b", l.ln2_b),
            ] {
                out.push((format!("layer{i}.{n}"), id));
            }
        }
        out.push(("pooler_w".into(), self.pooler_w));
        out.push(("pooler_b".into(), self.pooler_b));
        out
    }
}

/// Flat view of a padded batch, ready for graph construction.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub ids: Vec<usize>,
    /// 1.0 at active positions, 0.0 at padding; row-major `[b, l]`.
    pub mask: Vec<f64>,
    pub b: usize,
    pub l: usize,
}

impl PaddedBatch {
    pub fn from_sequences(batch: &[TokenSequence]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let l = batch[0].len();
        if batch.iter().any(|s| s.len() != l) {
            return Err(Error::Input("sequences not padded to a common length".into()));
        }
        if l == 0 {
            return Err(Error::Input("zero-length sequences".into()));
        }
        let mut ids = Vec::with_capacity(batch.len() * l);
        let mut mask = Vec::with_capacity(batch.len() * l);
        for s in batch {
            if s.active_len() == 0 {
                return Err(Error::Input("sequence with no active positions".into()));
            }
            ids.extend_from_slice(&s.ids);
            mask.extend(s.mask.iter().map(|&m| f64::from(m)));
        }
        Ok(Self { ids, mask, b: batch.len(), l })
    }

    pub fn is_active(&self, b: usize, l: usize) -> bool {
        self.mask[b * self.l + l] == 1.0
    }

    pub fn id_at(&self, b: usize, l: usize) -> usize {
        self.ids[b * self.l + l]
    }

    /// Attention bias `[B, 1, 1, L]`: 0 at active keys, large negative at pads.
    pub fn attention_bias(&self) -> Tensor {
        let data = self.mask.iter().map(|&m| if m == 1.0 { 0.0 } else { MASK_BIAS }).collect();
        Tensor::new(&[self.b, 1, 1, self.l], data)
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let weights = EncoderWeights::init(&config, seed);
        Ok(Self { config, weights })
    }

    /// Bind every weight tensor into `g`, as parameters when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> EncoderBinding {
        let mut put = |t: &Tensor| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        let tok = put(&self.weights.tok);
        let pos = put(&self.weights.pos);
        let layers = self
            .weights
            .layers
            .iter()
            .map(|l| LayerBinding {
                wq: put(&l.wq),
                bq: put(&l.bq),
                wk: put(&l.wk),
                bk: put(&l.bk),
                wv: put(&l.wv),
                bv: put(&l.bv),
                wo: put(&l.wo),
                bo: put(&l.bo),
                ln1_g: put(&l.ln1_g),
                ln1_b: put(&l.ln1_b),
                w1: put(&l.w1),
                b1: put(&l.b1),
                w2: put(&l.w2),
                b2: put(&l.b2),
                ln2_g: put(&l.ln2_g),
                ln2_b: put(&l.ln2_b),
            })
            .collect();
        let pooler_w = put(&self.weights.pooler_w);
        let pooler_b = put(&self.weights.pooler_b);
        EncoderBinding { tok, pos, layers, pooler_w, pooler_b }
    }

    /// Inverted-dropout mask for a `[B, L, D]` embedding tensor.
    fn dropout_mask(&self, b: usize, l: usize, seed: u64) -> Tensor {
        let p = self.config.dropout_p;
        let keep = 1.0 / (1.0 - p);
        let mut r = rng::stream_from(seed);
        let data = (0..b * l * self.config.dim)
            .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        Tensor::new(&[b, l, self.config.dim], data)
    }

    /// Embedding stage inside a graph: table lookup + positions + dropout.
    pub fn embed_graph(
        &self,
        g: &mut Graph,
        binding: &EncoderBinding,
        batch: &PaddedBatch,
        dropout_seed: Option<u64>,
    ) -> NodeId {
        let pos_ids: Vec<usize> = (0..batch.l).collect();
        let tok_e = g.gather_rows(binding.tok, &batch.ids, &[batch.b, batch.l]);
        let pos_e = g.gather_rows(binding.pos, &pos_ids, &[batch.l]);
        let mut x = g.add(tok_e, pos_e);
        if let Some(seed) = dropout_seed {
            if self.config.dropout_p > 0.0 {
                let mask = g.constant(self.dropout_mask(batch.b, batch.l, seed));
                x = g.mul(x, mask);
            }
        }
        x
    }

    /// Transformer body + tanh pooler over the `<cls>` position.
    pub fn encode_graph(
        &self,
        g: &mut Graph,
        binding: &EncoderBinding,
        x: NodeId,
        batch: &PaddedBatch,
    ) -> NodeId {
        let d = self.config.dim;
        let h = self.config.heads;
        let dh = d / h;
        let (b, l) = (batch.b, batch.l);
        let bias = g.constant(batch.attention_bias());

        let mut cur = x;
        for layer in &binding.layers {
            // attention
            let q = self.proj(g, cur, layer.wq, layer.bq);
            let k = self.proj(g, cur, layer.wk, layer.bk);
            let v = self.proj(g, cur, layer.wv, layer.bv);
            let qh = self.split_heads(g, q, b, l, h, dh);
            let kh = self.split_heads(g, k, b, l, h, dh);
            let vh = self.split_heads(g, v, b, l, h, dh);
            let kt = g.transpose_last2(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, 1.0 / (dh as f64).sqrt());
            let masked = g.add(scaled, bias);
            let attn = g.softmax_last(masked);
            let ctx = g.matmul(attn, vh);
            let merged0 = g.transpose12(ctx);
            let merged = g.reshape(merged0, &[b, l, d]);
            let proj = self.proj(g, merged, layer.wo, layer.bo);
            let res1 = g.add(cur, proj);
            let norm1 = g.layer_norm(res1, layer.ln1_g, layer.ln1_b);
            // feed-forward
            let ff1 = self.proj(g, norm1, layer.w1, layer.b1);
            let act = g.gelu(ff1);
            let ff2 = self.proj(g, act, layer.w2, layer.b2);
            let res2 = g.add(norm1, ff2);
            cur = g.layer_norm(res2, layer.ln2_g, layer.ln2_b);
        }

        let cls = g.select_dim1(cur, 0);
        let pooled = self.proj(g, cls, binding.pooler_w, binding.pooler_b);
        g.tanh(pooled)
    }

    fn proj(&self, g: &mut Graph, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let y = g.matmul(x, w);
        g.add(y, b)
    }

    fn split_heads(&self, g: &mut Graph, x: NodeId, b: usize, l: usize, h: usize, dh: usize) -> NodeId {
        let r = g.reshape(x, &[b, l, h, dh]);
        g.transpose12(r)
    }

    fn check_batch(&self, batch: &PaddedBatch) -> Result<()> {
        if batch.l > self.config.max_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max_len {}",
                batch.l, self.config.max_len
            )));
        }
        for &id in &batch.ids {
            if id >= self.config.vocab_size {
                return Err(Error::Input(format!(
                    "token id {} outside vocabulary of size {}",
                    id, self.config.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// Token embeddings with seeded dropout: `B x L x D`.
    pub fn embed(&self, batch: &[TokenSequence], dropout_seed: u64) -> Result<Tensor> {
        let padded = PaddedBatch::from_sequences(batch)?;
        self.check_batch(&padded)?;
        let mut g = Graph::new();
        let binding = self.bind(&mut g, false);
        let x = self.embed_graph(&mut g, &binding, &padded, Some(dropout_seed));
        Ok(g.value(x).clone())
    }

    /// Deterministic transformer body + pooler on embeddings produced by
    /// `embed` (or a perturbed variant of them).
    pub fn encode_from_embeddings(&self, x: &Tensor, batch: &[TokenSequence]) -> Result<Tensor> {
        x.ensure_finite("embeddings passed to encode_from_embeddings")?;
        let padded = PaddedBatch::from_sequences(batch)?;
        self.check_batch(&padded)?;
        if x.shape() != [padded.b, padded.l, self.config.dim] {
            return Err(Error::Shape(format!(
                "embeddings {:?} do not match batch {}x{}x{}",
                x.shape(),
                padded.b,
                padded.l,
                self.config.dim
            )));
        }
        let mut g = Graph::new();
        let binding = self.bind(&mut g, false);
        let xid = g.constant(x.clone());
        let z = self.encode_graph(&mut g, &binding, xid, &padded);
        Ok(g.value(z).clone())
    }

    /// `embed` composed with `encode_from_embeddings`.
    pub fn encode(&self, batch: &[TokenSequence], dropout_seed: u64) -> Result<Tensor> {
        let x = self.embed(batch, dropout_seed)?;
        self.encode_from_embeddings(&x, batch)
    }

    /// Embeddings and pooled vectors together.
    pub fn encode_state(&self, batch: &[TokenSequence], dropout_seed: u64) -> Result<EmbeddingState> {
        let x = self.embed(batch, dropout_seed)?;
        let z = self.encode_from_embeddings(&x, batch)?;
        Ok(EmbeddingState { x, z, dropout_seed })
    }

    /// Evaluation-mode encoding: dropout disabled.
    pub fn encode_eval(&self, batch: &[TokenSequence]) -> Result<Tensor> {
        let padded = PaddedBatch::from_sequences(batch)?;
        self.check_batch(&padded)?;
        let mut g = Graph::new();
        let binding = self.bind(&mut g, false);
        let x = self.embed_graph(&mut g, &binding, &padded, None);
        let z = self.encode_graph(&mut g, &binding, x, &padded);
        Ok(g.value(z).clone())
    }
}

/// A tokenizer plus trained encoder: enough to embed raw text.
#[derive(Clone, Debug)]
pub struct SentenceModel {
    pub vocab: Vocab,
    pub encoder: Encoder,
}

impl SentenceModel {
    /// Evaluation-mode sentence vectors for raw texts.
    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::Input("no texts to embed".into()));
        }
        let seqs: Vec<TokenSequence> =
            texts.iter().map(|t| self.vocab.tokenize(t, self.encoder.config.max_len)).collect();
        let padded = pad_to_common(&seqs);
        let z = self.encoder.encode_eval(&padded)?;
        let d = self.encoder.config.dim;
        Ok(z.data().chunks(d).map(|c| c.to_vec()).collect())
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed_texts(&[text])?.pop().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_encoder(dropout_p: f64) -> (Encoder, Vocab) {
        let vocab = Vocab::build(["the movie was good", "a bad day"]);
        let config = EncoderConfig {
            vocab_size: vocab.size(),
            dim: 8,
            layers: 1,
            heads: 2,
            max_len: 8,
            dropout_p,
        };
        (Encoder::new(config, 11).unwrap(), vocab)
    }

    fn batch(vocab: &Vocab, texts: &[&str]) -> Vec<TokenSequence> {
        pad_to_common(&texts.iter().map(|t| vocab.tokenize(t, 8)).collect::<Vec<_>>())
    }

    #[test]
    fn no_dropout_is_deterministic_across_seeds() {
        let (enc, vocab) = toy_encoder(0.0);
        let b = batch(&vocab, &["the movie was good"]);
        let x1 = enc.embed(&b, 1).unwrap();
        let x2 = enc.embed(&b, 2).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn same_seed_same_mask_different_seed_differs() {
        let (enc, vocab) = toy_encoder(0.3);
        let b = batch(&vocab, &["the movie was good", "a bad day"]);
        let x1 = enc.embed(&b, 7).unwrap();
        let x2 = enc.embed(&b, 7).unwrap();
        let x3 = enc.embed(&b, 8).unwrap();
        assert_eq!(x1, x2);
        assert_ne!(x1, x3);
    }

    #[test]
    fn embed_shape_contract() {
        let (enc, vocab) = toy_encoder(0.0);
        let b = vec![vocab.tokenize("good", 8)];
        let x = enc.embed(&b, 0).unwrap();
        assert_eq!(x.shape(), &[1, 2, 8]); // <cls> + one token
    }

    #[test]
    fn single_token_sequence_dim4_shape() {
        let vocab = Vocab::build(["one word"]);
        let config = EncoderConfig {
            vocab_size: vocab.size(),
            dim: 4,
            layers: 1,
            heads: 2,
            max_len: 4,
            dropout_p: 0.0,
        };
        let enc = Encoder::new(config, 1).unwrap();
        let seq = TokenSequence {
            ids: vec![vocab.id_of("word").unwrap()],
            mask: vec![1],
            raw_text: "word".into(),
        };
        let x = enc.embed(&[seq], 0).unwrap();
        assert_eq!(x.shape(), &[1, 1, 4]);
    }

    #[test]
    fn pooler_output_strictly_inside_unit_interval() {
        let (enc, vocab) = toy_encoder(0.1);
        let b = batch(&vocab, &["the movie was good", "a bad day", ""]);
        let z = enc.encode(&b, 3).unwrap();
        assert!(z.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn encode_composes_embed_and_body() {
        let (enc, vocab) = toy_encoder(0.2);
        let b = batch(&vocab, &["the movie was good", "a bad day"]);
        let x = enc.embed(&b, 5).unwrap();
        let z1 = enc.encode_from_embeddings(&x, &b).unwrap();
        let z2 = enc.encode(&b, 5).unwrap();
        assert_eq!(z1, z2);
    }

    #[test]
    fn zero_pooler_weights_give_zero_z() {
        let (mut enc, vocab) = toy_encoder(0.0);
        enc.weights.pooler_w = Tensor::zeros(&[8, 8]);
        enc.weights.pooler_b = Tensor::zeros(&[8]);
        let b = batch(&vocab, &["a bad day"]);
        let z = enc.encode(&b, 0).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_token_id_is_rejected() {
        let (enc, vocab) = toy_encoder(0.0);
        let mut b = batch(&vocab, &["good"]);
        b[0].ids[1] = enc.config.vocab_size + 3;
        assert!(matches!(enc.embed(&b, 0), Err(Error::Input(_))));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let (enc, _) = toy_encoder(0.0);
        assert!(enc.embed(&[], 0).is_err());
    }

    #[test]
    fn non_finite_embeddings_rejected() {
        let (enc, vocab) = toy_encoder(0.0);
        let b = batch(&vocab, &["good"]);
        let mut x = enc.embed(&b, 0).unwrap();
        x.data_mut()[0] = f64::NAN;
        assert!(matches!(enc.encode_from_embeddings(&x, &b), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ragged_batch_is_rejected() {
        let (enc, vocab) = toy_encoder(0.0);
        let b = vec![vocab.tokenize("good", 8), vocab.tokenize("the movie was good", 8)];
        assert!(enc.embed(&b, 0).is_err());
    }
}

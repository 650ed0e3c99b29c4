//! Training objectives: contrastive loss, adversarial replaced-token
//! detection, and their weighted total.
//!
//! Plain-`f64` entry points implement the per-anchor contracts (used by the
//! evaluation code and by tests); `build_total_loss` assembles the full
//! differentiable training graph with three encoder passes (clean anchor,
//! dropout positive, adversarial) plus the token-level RTD head.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::encoder::{Encoder, EncoderBinding, PaddedBatch, TokenSequence, Vocab, CLS_ID};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::perturbation::{HyperParams, LossGrad};
use crate::rng;
use crate::tensor::Tensor;

/// Cosine similarity; rejects zero vectors.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine over {} vs {} dims", u.len(), v.len())));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Per-anchor contrastive loss:
/// `-log( sum_pos exp(sim/tau) / sum_{pos+neg} exp(sim/tau) )`.
///
/// Non-negative; exactly zero when the negative set is empty.
pub fn contrastive_loss(
    anchor: &[f64],
    pos_set: &[Vec<f64>],
    neg_set: &[Vec<f64>],
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("tau {tau} must be > 0")));
    }
    if pos_set.is_empty() {
        return Err(Error::Input("contrastive loss needs a non-empty positive set".into()));
    }
    let mut num = 0.0;
    for p in pos_set {
        num += (cosine_sim(anchor, p)? / tau).exp();
    }
    let mut den = num;
    for n in neg_set {
        den += (cosine_sim(anchor, n)? / tau).exp();
    }
    Ok(-(num / den).ln())
}

/// Scale rows of a `[N, D]` tensor to unit Euclidean norm.
pub fn normalize_rows(t: &Tensor) -> Result<Tensor> {
    let d = *t.shape().last().ok_or_else(|| Error::Shape("normalize_rows on rank-0".into()))?;
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(d) {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Degenerate("zero row in normalize_rows".into()));
        }
        for x in row {
            *x /= n;
        }
    }
    Ok(out)
}

/// One block of candidate vectors for the in-graph contrastive loss.
///
/// `pos_mask[b, c] = 1` marks candidate `c` as a positive of anchor `b`;
/// `den_mask` marks membership of the denominator (positives plus
/// negatives). Candidates must be unit rows.
pub struct CandidateGroup {
    pub vectors: NodeId,
    pub pos_mask: Tensor,
    pub den_mask: Tensor,
}

/// Batch-mean contrastive loss over unit-normalized anchors and groups.
pub fn contrastive_loss_graph(
    g: &mut Graph,
    anchors_norm: NodeId,
    groups: &[CandidateGroup],
    tau: f64,
) -> Result<NodeId> {
    if tau <= 0.0 {
        return Err(Error::Config(format!("tau {tau} must be > 0")));
    }
    let b = g.value(anchors_norm).shape()[0];
    let mut pos_counts = vec![0.0; b];
    for grp in groups {
        for (bi, row) in grp.pos_mask.data().chunks(grp.pos_mask.shape()[1]).enumerate() {
            pos_counts[bi] += row.iter().sum::<f64>();
        }
    }
    if pos_counts.contains(&0.0) {
        return Err(Error::Input("anchor with empty positive set".into()));
    }

    let mut num: Option<NodeId> = None;
    let mut den: Option<NodeId> = None;
    for grp in groups {
        let vt = g.transpose_last2(grp.vectors);
        let sims = g.matmul(anchors_norm, vt);
        let scaled = g.scale(sims, 1.0 / tau);
        let ex = g.exp(scaled);
        let pm = g.constant(grp.pos_mask.clone());
        let dm = g.constant(grp.den_mask.clone());
        let np = g.mul(ex, pm);
        let np = g.sum_last(np);
        let dp = g.mul(ex, dm);
        let dp = g.sum_last(dp);
        num = Some(match num {
            Some(acc) => g.add(acc, np),
            None => np,
        });
        den = Some(match den {
            Some(acc) => g.add(acc, dp),
            None => dp,
        });
    }
    let ln_num = g.log(num.expect("at least one group"));
    let ln_den = g.log(den.expect("at least one group"));
    let per_anchor = g.sub(ln_den, ln_num);
    Ok(g.mean_all(per_anchor))
}

// ---------------------------------------------------------------------------
// Replaced token detection
// ---------------------------------------------------------------------------

/// Toy generator: samples replacement tokens from the corpus unigram
/// distribution, never returning the excluded (original) token.
#[derive(Clone, Debug)]
pub struct UnigramGenerator {
    word_ids: Vec<usize>,
    cumulative: Vec<f64>,
}

impl UnigramGenerator {
    pub fn from_vocab(vocab: &Vocab) -> Result<Self> {
        let mut word_ids = Vec::new();
        let mut weights = Vec::new();
        for (id, &c) in vocab.counts().iter().enumerate() {
            if vocab.is_word_id(id) && c > 0 {
                word_ids.push(id);
                weights.push(c as f64);
            }
        }
        if word_ids.len() < 2 {
            return Err(Error::Degenerate(
                "unigram generator needs at least two distinct corpus words".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in weights {
            acc += w / total;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self { word_ids, cumulative })
    }

    /// Sample a word id, rejecting `exclude` (deterministic given the rng).
    pub fn sample_excluding(&self, exclude: usize, rng: &mut ChaCha12Rng) -> usize {
        loop {
            let u: f64 = rng.gen();
            let idx = match self.cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) => i + 1,
                Err(i) => i,
            }
            .min(self.word_ids.len() - 1);
            let id = self.word_ids[idx];
            if id != exclude {
                return id;
            }
        }
    }
}

/// An edited sequence plus per-position labels (1 = original kept,
/// 0 = replaced).
#[derive(Clone, Debug)]
pub struct RtdEdit {
    pub edited: TokenSequence,
    pub labels: Vec<f64>,
}

/// Replace a sampled subset of word positions with generator draws.
///
/// Edits `max(1, round_half_up(mask_rate * editable))` positions, where
/// editable positions are active word tokens (never `<cls>`, `<unk>` or
/// padding).
pub fn rtd_edit(
    x: &TokenSequence,
    mask_rate: f64,
    vocab: &Vocab,
    generator: &UnigramGenerator,
    rng: &mut ChaCha12Rng,
) -> Result<RtdEdit> {
    if x.is_empty() {
        return Err(Error::Input("rtd_edit on an empty sequence".into()));
    }
    if !(0.0 < mask_rate && mask_rate < 1.0) {
        return Err(Error::Config(format!("mask_rate {mask_rate} outside (0,1)")));
    }
    let editable: Vec<usize> = (0..x.len())
        .filter(|&i| x.mask[i] == 1 && vocab.is_word_id(x.ids[i]))
        .collect();
    if editable.is_empty() {
        return Err(Error::Degenerate("no editable word positions".into()));
    }
    let count =
        (((mask_rate * editable.len() as f64) + 0.5).floor() as usize).max(1).min(editable.len());

    // Fisher-Yates prefix over the editable positions.
    let mut order = editable.clone();
    for i in 0..count {
        let j = i + (rng.gen::<u64>() as usize) % (order.len() - i);
        order.swap(i, j);
    }
    let mut chosen: Vec<usize> = order[..count].to_vec();
    chosen.sort_unstable();

    let mut ids = x.ids.clone();
    let mut labels = vec![1.0; x.len()];
    for &pos in &chosen {
        ids[pos] = generator.sample_excluding(x.ids[pos], rng);
        labels[pos] = 0.0;
    }
    let raw_text = ids
        .iter()
        .zip(&x.mask)
        .filter(|&(&id, &m)| m == 1 && id != CLS_ID)
        .map(|(&id, _)| vocab.word(id).to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let edited = TokenSequence { ids, mask: x.mask.clone(), raw_text };
    Ok(RtdEdit { edited, labels })
}

/// Per-token replacement discriminator: a two-layer MLP over the perturbed
/// token embedding and the sentence vector, emitting the probability that
/// the token is original.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

pub struct DiscBinding {
    pub w_x: NodeId,
    pub w_h: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl Discriminator {
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut r = rng::stream_from(seed);
        let hidden = dim;
        let std = 0.02;
        let mut mk = |rows: usize, cols: usize| {
            let mut t = Tensor::new(
                &[rows, cols],
                (0..rows * cols).map(|_| gaussian(&mut r) * std).collect(),
            );
            t.snap_f32();
            t
        };
        let w_x = mk(dim, hidden);
        let w_h = mk(dim, hidden);
        let w2 = mk(hidden, 1);
        Self { w_x, w_h, b1: Tensor::zeros(&[hidden]), w2, b2: Tensor::zeros(&[1]) }
    }

    pub fn hidden(&self) -> usize {
        self.w_x.shape()[1]
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("disc.w_x".into(), &self.w_x),
            ("disc.w_h".into(), &self.w_h),
            ("disc.b1".into(), &self.b1),
            ("disc.w2".into(), &self.w2),
            ("disc.b2".into(), &self.b2),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("disc.w_x".into(), &mut self.w_x),
            ("disc.w_h".into(), &mut self.w_h),
            ("disc.b1".into(), &mut self.b1),
            ("disc.w2".into(), &mut self.w2),
            ("disc.b2".into(), &mut self.b2),
        ]
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> DiscBinding {
        let mut put = |t: &Tensor| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) };
        DiscBinding {
            w_x: put(&self.w_x),
            w_h: put(&self.w_h),
            b1: put(&self.b1),
            w2: put(&self.w2),
            b2: put(&self.b2),
        }
    }

    /// Logits `[B, L]` over perturbed token embeddings `x_adv: [B, L, D]`
    /// and sentence vectors `h: [B, D]`.
    pub fn logits_graph(
        &self,
        g: &mut Graph,
        binding: &DiscBinding,
        x_adv: NodeId,
        h: NodeId,
    ) -> NodeId {
        let (b, l) = {
            let s = g.value(x_adv).shape();
            (s[0], s[1])
        };
        let hid = self.hidden();
        let tok_part = g.matmul(x_adv, binding.w_x); // [B, L, H]
        let h_part0 = g.matmul(h, binding.w_h); // [B, H]
        let h_part = g.reshape(h_part0, &[b, 1, hid]);
        let pre0 = g.add(tok_part, h_part);
        let pre = g.add(pre0, binding.b1);
        let act = g.gelu(pre);
        let logit0 = g.matmul(act, binding.w2); // [B, L, 1]
        let logit = g.add(logit0, binding.b2);
        g.reshape(logit, &[b, l])
    }

    /// Probabilities for a single sentence (`x_adv: [L, D]`, `h: [D]`).
    pub fn probabilities(&self, x_adv: &Tensor, h: &[f64]) -> Result<Vec<f64>> {
        let shape = x_adv.shape();
        if shape.len() != 2 {
            return Err(Error::Shape("discriminator wants [L, D] embeddings".into()));
        }
        let (l, d) = (shape[0], shape[1]);
        if h.len() != d {
            return Err(Error::Shape("sentence vector dimension mismatch".into()));
        }
        let mut g = Graph::new();
        let binding = self.bind(&mut g, false);
        let x = g.constant(x_adv.clone().reshape(&[1, l, d]));
        let hv = g.constant(Tensor::new(&[1, d], h.to_vec()));
        let logits = self.logits_graph(&mut g, &binding, x, hv);
        let probs = g.sigmoid(logits);
        Ok(g.value(probs).data().to_vec())
    }
}

fn gaussian(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One sentence's RTD inputs: the original and edited sequences, labels and
/// the perturbed embeddings of the edited sequence.
#[derive(Clone, Debug)]
pub struct RtdInstance {
    pub original: TokenSequence,
    pub edited: TokenSequence,
    pub labels: Vec<f64>,
    /// `[L, D]` embeddings of the edited sequence plus the token perturbation.
    pub x_adv: Tensor,
}

/// Binary cross-entropy over in-range probabilities, counting active word
/// positions only (`<cls>` and padding are not part of the sentence).
pub fn rtd_loss_from_probs(
    probs: &[f64],
    labels: &[f64],
    active_word: &[bool],
) -> Result<f64> {
    if probs.len() != labels.len() || probs.len() != active_word.len() {
        return Err(Error::Shape("rtd loss inputs differ in length".into()));
    }
    let mut loss = 0.0;
    for ((&p, &y), &on) in probs.iter().zip(labels).zip(active_word) {
        if !on {
            continue;
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Input(format!("discriminator output {p} outside [0,1]")));
        }
        // 0*log(0) treated as 0 so a perfect discriminator scores exactly 0
        let term = if y == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
        loss += term;
    }
    Ok(loss)
}

/// Single-sentence RTD loss from an instance, a sentence vector and the
/// discriminator.
pub fn rtd_loss(
    instance: &RtdInstance,
    h: &[f64],
    disc: &Discriminator,
    vocab: &Vocab,
) -> Result<f64> {
    let probs = disc.probabilities(&instance.x_adv, h)?;
    let active: Vec<bool> = instance
        .original
        .ids
        .iter()
        .zip(&instance.original.mask)
        .map(|(&id, &m)| m == 1 && vocab.is_word_id(id))
        .collect();
    rtd_loss_from_probs(&probs, &instance.labels, &active)
}

// ---------------------------------------------------------------------------
// Total training objective
// ---------------------------------------------------------------------------

/// Adversarial ingredients of the total loss; absent when adversarial
/// training is disabled (`epsilon == 0` baseline).
pub struct AdversarialParts<'a> {
    pub delta_final: &'a Tensor,
    pub eta_final: &'a Tensor,
    /// Edited batch, same shape as the clean one.
    pub edited: &'a PaddedBatch,
    /// `[B, L]` labels (1 = original).
    pub labels: Tensor,
    /// `[B, L]` weights: 1 at active word positions.
    pub rtd_weights: Tensor,
    pub rtd_dropout_seed: u64,
}

pub struct TotalLossConfig<'a> {
    pub encoder: &'a Encoder,
    pub disc: &'a Discriminator,
    pub batch: &'a PaddedBatch,
    pub dropout_seed_m1: u64,
    pub dropout_seed_m2: u64,
    pub adversarial: Option<AdversarialParts<'a>>,
    pub hyper: &'a HyperParams,
    /// Bind encoder/discriminator weights as graph parameters.
    pub trainable: bool,
}

/// The assembled loss graph plus the scalar breakdown.
pub struct TotalLoss {
    pub graph: Graph,
    pub total_node: NodeId,
    pub con_node: NodeId,
    pub reg_node: Option<NodeId>,
    pub rtd_node: Option<NodeId>,
    pub encoder_binding: EncoderBinding,
    pub disc_binding: Option<DiscBinding>,
    /// Present when adversarial parts were supplied; differentiable leaves.
    pub delta_node: Option<NodeId>,
    pub eta_node: Option<NodeId>,
    pub l_con: f64,
    pub l_reg: f64,
    pub l_rtd: f64,
    pub l_total: f64,
}

/// Build the total objective:
/// clean-anchor contrastive term (positives: the dropout pair and, when
/// adversarial parts exist, the adversarial view), plus `lambda1` times the
/// adversarial-anchor term and `lambda2` times the summed RTD term.
pub fn build_total_loss(cfg: TotalLossConfig<'_>) -> Result<TotalLoss> {
    let TotalLossConfig {
        encoder,
        disc,
        batch,
        dropout_seed_m1,
        dropout_seed_m2,
        adversarial,
        hyper,
        trainable,
    } = cfg;
    let b = batch.b;
    let mut g = Graph::new();
    let enc_binding = encoder.bind(&mut g, trainable);

    let x1 = encoder.embed_graph(&mut g, &enc_binding, batch, Some(dropout_seed_m1));
    let x2 = encoder.embed_graph(&mut g, &enc_binding, batch, Some(dropout_seed_m2));
    let z = encoder.encode_graph(&mut g, &enc_binding, x1, batch);
    let z_pos = encoder.encode_graph(&mut g, &enc_binding, x2, batch);
    let zn = g.l2_normalize_last(z);
    let zpn = g.l2_normalize_last(z_pos);

    let eye = identity_mask(b);
    let ones = Tensor::full(&[b, b], 1.0);
    let off_diag = off_diagonal_mask(b);

    let mut delta_node = None;
    let mut eta_node = None;
    let mut disc_binding = None;
    let mut zadv_norm = None;
    let mut l_rtd_node = None;

    if let Some(parts) = &adversarial {
        let d = g.param(parts.delta_final.clone());
        let x_adv_sent = g.add(x1, d);
        let z_adv = encoder.encode_graph(&mut g, &enc_binding, x_adv_sent, batch);
        zadv_norm = Some(g.l2_normalize_last(z_adv));
        delta_node = Some(d);

        if hyper.lambda2 > 0.0 {
            let e = g.param(parts.eta_final.clone());
            let x_edit =
                encoder.embed_graph(&mut g, &enc_binding, parts.edited, Some(parts.rtd_dropout_seed));
            let x_adv_tok = g.add(x_edit, e);
            let db = disc.bind(&mut g, trainable);
            let logits = disc.logits_graph(&mut g, &db, x_adv_tok, z);
            l_rtd_node =
                Some(g.bce_with_logits_sum(logits, parts.labels.clone(), parts.rtd_weights.clone()));
            disc_binding = Some(db);
            eta_node = Some(e);
        }
    }

    // main term: anchors z, positives {z+, z_adv}, negatives {z_j, z+_j}
    let mut main_groups = vec![
        CandidateGroup { vectors: zpn, pos_mask: eye.clone(), den_mask: ones.clone() },
        CandidateGroup { vectors: zn, pos_mask: Tensor::zeros(&[b, b]), den_mask: off_diag.clone() },
    ];
    if let Some(zadvn) = zadv_norm {
        main_groups.insert(
            1,
            CandidateGroup { vectors: zadvn, pos_mask: eye.clone(), den_mask: eye.clone() },
        );
    }
    let l_con_node = contrastive_loss_graph(&mut g, zn, &main_groups, hyper.tau)?;

    // regulariser: anchors z_adv, positives {z+}, negatives {z_j, z+_j}
    let mut l_reg_node = None;
    if hyper.lambda1 > 0.0 {
        if let Some(zadvn) = zadv_norm {
            let groups = vec![
                CandidateGroup { vectors: zpn, pos_mask: eye.clone(), den_mask: ones },
                CandidateGroup {
                    vectors: zn,
                    pos_mask: Tensor::zeros(&[b, b]),
                    den_mask: off_diag,
                },
            ];
            l_reg_node = Some(contrastive_loss_graph(&mut g, zadvn, &groups, hyper.tau)?);
        }
    }

    let mut total = l_con_node;
    if let Some(reg) = l_reg_node {
        let w = g.scale(reg, hyper.lambda1);
        total = g.add(total, w);
    }
    if let Some(rtd) = l_rtd_node {
        let w = g.scale(rtd, hyper.lambda2);
        total = g.add(total, w);
    }

    let l_con = g.value(l_con_node).item();
    let l_reg = l_reg_node.map(|n| g.value(n).item()).unwrap_or(0.0);
    let l_rtd = l_rtd_node.map(|n| g.value(n).item()).unwrap_or(0.0);
    let l_total = g.value(total).item();
    if !l_total.is_finite() {
        return Err(Error::NonFinite(format!(
            "total loss (l_con={l_con}, l_reg={l_reg}, l_rtd={l_rtd})"
        )));
    }

    Ok(TotalLoss {
        graph: g,
        total_node: total,
        con_node: l_con_node,
        reg_node: l_reg_node,
        rtd_node: l_rtd_node,
        encoder_binding: enc_binding,
        disc_binding,
        delta_node,
        eta_node,
        l_con,
        l_reg,
        l_rtd,
        l_total,
    })
}

fn identity_mask(b: usize) -> Tensor {
    let mut t = Tensor::zeros(&[b, b]);
    for i in 0..b {
        t.data_mut()[i * b + i] = 1.0;
    }
    t
}

fn off_diagonal_mask(b: usize) -> Tensor {
    let mut t = Tensor::full(&[b, b], 1.0);
    for i in 0..b {
        t.data_mut()[i * b + i] = 0.0;
    }
    t
}

/// RTD tensors for a batch of edits aligned with `batch`.
pub fn rtd_batch_tensors(
    edits: &[RtdEdit],
    batch: &PaddedBatch,
    vocab: &Vocab,
) -> Result<(PaddedBatch, Tensor, Tensor)> {
    if edits.len() != batch.b {
        return Err(Error::Shape("one edit per batch sentence required".into()));
    }
    let l = batch.l;
    let mut ids = Vec::with_capacity(batch.b * l);
    let mut labels = Vec::with_capacity(batch.b * l);
    let mut weights = Vec::with_capacity(batch.b * l);
    for (bi, edit) in edits.iter().enumerate() {
        if edit.edited.len() != l {
            return Err(Error::Shape("edited sequence length differs from batch".into()));
        }
        for li in 0..l {
            ids.push(edit.edited.ids[li]);
            labels.push(edit.labels[li]);
            let orig_id = batch.id_at(bi, li);
            let w = if batch.is_active(bi, li) && vocab.is_word_id(orig_id) { 1.0 } else { 0.0 };
            weights.push(w);
        }
    }
    let edited = PaddedBatch { ids, mask: batch.mask.clone(), b: batch.b, l };
    Ok((edited, Tensor::new(&[batch.b, l], labels), Tensor::new(&[batch.b, l], weights)))
}

/// Differentiable inner-loop loss for the perturbation generator:
/// contrastive loss of the perturbed anchors against the fixed positive
/// views, with the other perturbed sentences and positives as in-batch
/// negatives. Returns loss and gradient w.r.t. the perturbed embeddings.
pub fn inner_loss_fn<'a>(
    encoder: &'a Encoder,
    batch: &'a PaddedBatch,
    z_pos_norm: Tensor,
    hyper: &'a HyperParams,
) -> impl FnMut(&Tensor) -> Result<LossGrad> + 'a {
    let b = batch.b;
    let eye = identity_mask(b);
    let ones = Tensor::full(&[b, b], 1.0);
    let off_diag = off_diagonal_mask(b);
    move |x_pert: &Tensor| {
        let mut g = Graph::new();
        let binding = encoder.bind(&mut g, false);
        let x = g.param(x_pert.clone());
        let z = encoder.encode_graph(&mut g, &binding, x, batch);
        let zn = g.l2_normalize_last(z);
        let zp = g.constant(z_pos_norm.clone());
        let groups = vec![
            CandidateGroup { vectors: zp, pos_mask: eye.clone(), den_mask: ones.clone() },
            CandidateGroup {
                vectors: zn,
                pos_mask: Tensor::zeros(&[b, b]),
                den_mask: off_diag.clone(),
            },
        ];
        let loss = contrastive_loss_graph(&mut g, zn, &groups, hyper.tau)?;
        let value = g.value(loss).item();
        let mut grads = g.backward(loss);
        let grad = grads
            .take(x)
            .unwrap_or_else(|| Tensor::zeros(x_pert.shape()));
        Ok(LossGrad { loss: value, grad })
    }
}

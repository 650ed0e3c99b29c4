//! Shared test oracles: central finite differences and independent
//! projection references. Everything here is deliberately written without
//! reusing the implementation paths it checks.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use robust_embed_core::NormKind;

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of a scalar function at `x`.
pub fn central_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Max relative error between analytic and numeric gradients.
///
/// Central differences at step 1e-5 on O(1) losses carry ~1e-9 of absolute
/// round-off noise, so a relative comparison is only meaningful above that
/// scale: components where both magnitudes sit below 1e-5 must instead agree
/// absolutely to 1e-8 (twenty times the noise bound).
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let rel_floor = 1e-5;
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs());
        if denom < rel_floor {
            assert!(
                (a - n).abs() <= 1e-8,
                "tiny-gradient disagreement: analytic {a}, numeric {n}"
            );
            continue;
        }
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}

/// Independent L1-ball projection: bisection on the soft-threshold level
/// (monotone in theta), no sorting involved.
pub fn l1_project_bisect(v: &[f64], epsilon: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= epsilon {
        return v.to_vec();
    }
    let shrunk_l1 = |theta: f64| -> f64 {
        v.iter().map(|x| (x.abs() - theta).max(0.0)).sum()
    };
    let mut lo = 0.0;
    let mut hi = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shrunk_l1(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    v.iter()
        .map(|&x| {
            let a = x.abs() - theta;
            if a > 0.0 {
                x.signum() * a
            } else {
                0.0
            }
        })
        .collect()
}

/// Exhaustive 2-D grid search for the nearest in-ball point.
pub fn grid_nearest_2d(v: [f64; 2], epsilon: f64, norm: NormKind, step: f64) -> [f64; 2] {
    let reach = v[0].abs().max(v[1].abs()).max(epsilon) + step;
    let n = (2.0 * reach / step).ceil() as i64;
    let mut best = [0.0, 0.0];
    let mut best_d = f64::INFINITY;
    for i in 0..=n {
        let x = -reach + i as f64 * step;
        for j in 0..=n {
            let y = -reach + j as f64 * step;
            if norm.norm(&[x, y]) > epsilon {
                continue;
            }
            let d = (x - v[0]).powi(2) + (y - v[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = [x, y];
            }
        }
    }
    best
}

/// A uniformly-scaled random point guaranteed inside the ball (uses norm
/// homogeneity only, no projection code).
pub fn random_in_ball(dim: usize, epsilon: f64, norm: NormKind, r: &mut ChaCha12Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    let n = norm.norm(&raw);
    if n == 0.0 {
        return vec![0.0; dim];
    }
    let target: f64 = r.gen_range(0.0..epsilon);
    raw.iter().map(|x| x * target / n).collect()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------------------
// Gradient-check instances
// ---------------------------------------------------------------------------

use robust_embed_core::encoder::{
    pad_to_common, Encoder, EncoderConfig, PaddedBatch, TokenSequence, Vocab,
};
use robust_embed_core::graph::Graph;
use robust_embed_core::objectives::{
    build_total_loss, inner_loss_fn, normalize_rows, rtd_batch_tensors, rtd_edit,
    AdversarialParts, Discriminator, RtdEdit, TotalLossConfig, UnigramGenerator,
};
use robust_embed_core::perturbation::HyperParams;
use robust_embed_core::rng::stream_from;
use robust_embed_core::Tensor;

pub struct GradInstance {
    pub encoder: Encoder,
    pub vocab: Vocab,
    pub disc: Discriminator,
    pub seqs: Vec<TokenSequence>,
    pub batch: PaddedBatch,
    pub delta: Tensor,
    pub eta: Tensor,
    pub edits: Vec<RtdEdit>,
    pub hyper: HyperParams,
    pub seed_m1: u64,
    pub seed_m2: u64,
    pub seed_rtd: u64,
}

/// Random tiny configuration: D <= 8, sequence length <= 4 (pooling anchor
/// plus at most three word tokens), B <= 4.
pub fn grad_instance(seed: u64) -> GradInstance {
    let mut r = stream_from(seed);
    let dim = if r.gen::<bool>() { 4 } else { 8 };
    let vocab = Vocab::build(["w0 w1 w2 w3 w4 w5 w6 w7 w8 w9"]);
    let config = EncoderConfig {
        vocab_size: vocab.size(),
        dim,
        layers: 1,
        heads: 2,
        max_len: 4,
        dropout_p: 0.1,
    };
    let mut encoder = Encoder::new(config.clone(), r.gen()).unwrap();
    // Random-init pooled vectors have tiny norms at the default 0.02 weight
    // scale; the 1/|z|^3 curvature of the normalization then exceeds what a
    // 1e-5 central-difference step resolves at 1e-4 relative tolerance.
    // Scaling the instance weights keeps activations O(1) and the check
    // well-conditioned without touching the code under test.
    for (name, t) in encoder.weights.named_mut() {
        let factor = if name == "pooler_w" { 25.0 } else if name.starts_with("layer") { 5.0 } else { 2.0 };
        if name.contains("ln") {
            continue;
        }
        *t = t.scale(factor);
        t.snap_f32();
    }
    let disc = Discriminator::init(dim, r.gen());
    let b = 2 + (r.gen::<u64>() as usize) % 3;
    let seqs_raw: Vec<TokenSequence> = (0..b)
        .map(|_| {
            let words = 1 + (r.gen::<u64>() as usize) % 3;
            let text: Vec<String> =
                (0..words).map(|_| format!("w{}", r.gen::<u64>() % 10)).collect();
            vocab.tokenize(&text.join(" "), config.max_len)
        })
        .collect();
    let seqs = pad_to_common(&seqs_raw);
    let batch = PaddedBatch::from_sequences(&seqs).unwrap();
    let shape = [batch.b, batch.l, dim];
    let mut rand_tensor = |scale: f64| {
        Tensor::new(
            &shape,
            (0..shape.iter().product::<usize>()).map(|_| r.gen_range(-scale..scale)).collect(),
        )
    };
    let delta = rand_tensor(5e-3);
    let eta = rand_tensor(5e-3);
    let gen = UnigramGenerator::from_vocab(&vocab).unwrap();
    let mut er = stream_from(seed ^ 0xabcd);
    let edits: Vec<RtdEdit> =
        seqs.iter().map(|s| rtd_edit(s, 0.4, &vocab, &gen, &mut er).unwrap()).collect();
    // Temperatures below ~0.1 push the loss's third derivatives past what a
    // 1e-5 central-difference step can resolve at 1e-4 relative tolerance
    // (truncation error grows like h^2 / tau^3), so the random instances
    // draw tau from a range the step size can certify.
    let tau = 0.1 + 0.4 * r.gen::<f64>();
    let hyper = HyperParams { k_steps: 1, t_steps: 1, tau, ..HyperParams::default() };
    GradInstance {
        encoder,
        vocab,
        disc,
        seqs,
        batch,
        delta,
        eta,
        edits,
        hyper,
        seed_m1: seed ^ 0x11,
        seed_m2: seed ^ 0x22,
        seed_rtd: seed ^ 0x33,
    }
}

impl GradInstance {
    pub fn total_loss(
        &self,
        encoder: &Encoder,
        disc: &Discriminator,
        delta: &Tensor,
        eta: &Tensor,
        hyper: &HyperParams,
        trainable: bool,
    ) -> robust_embed_core::objectives::TotalLoss {
        let (edited, labels, weights) =
            rtd_batch_tensors(&self.edits, &self.batch, &self.vocab).unwrap();
        build_total_loss(TotalLossConfig {
            encoder,
            disc,
            batch: &self.batch,
            dropout_seed_m1: self.seed_m1,
            dropout_seed_m2: self.seed_m2,
            adversarial: Some(AdversarialParts {
                delta_final: delta,
                eta_final: eta,
                edited: &edited,
                labels,
                rtd_weights: weights,
                rtd_dropout_seed: self.seed_rtd,
            }),
            hyper,
            trainable,
        })
        .unwrap()
    }
}

/// Worst relative error across every gradient surface of one instance:
/// encoder dz/dX, the inner contrastive loss w.r.t. delta and eta, and the
/// contrastive / RTD / total losses w.r.t. delta, eta and all weights.
pub fn gradcheck_instance(seed: u64) -> f64 {
    let inst = grad_instance(seed);
    let mut worst = 0.0f64;

    // (1) encoder: d sum(z) / dX against central differences
    {
        let x0 = inst.encoder.embed(&inst.seqs, inst.seed_m1).unwrap();
        let mut g = Graph::new();
        let binding = inst.encoder.bind(&mut g, false);
        let xid = g.param(x0.clone());
        let z = inst.encoder.encode_graph(&mut g, &binding, xid, &inst.batch);
        let s = g.sum_all(z);
        let mut grads = g.backward(s);
        let analytic = grads.take(xid).unwrap();
        let numeric = central_diff_grad(
            |x: &[f64]| {
                let xt = Tensor::new(x0.shape(), x.to_vec());
                inst.encoder
                    .encode_from_embeddings(&xt, &inst.seqs)
                    .unwrap()
                    .data()
                    .iter()
                    .sum()
            },
            x0.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(analytic.data(), &numeric));
    }

    // (2) inner contrastive loss gradient. The loss sees delta and eta only
    // through their sum with X, so its gradient w.r.t. either perturbation
    // equals the gradient w.r.t. the evaluation point; differencing the
    // point checks both at once (delta held fixed while eta varies and vice
    // versa produce the identical function of the varied coordinates).
    {
        let x1 = inst.encoder.embed(&inst.seqs, inst.seed_m1).unwrap();
        let x2 = inst.encoder.embed(&inst.seqs, inst.seed_m2).unwrap();
        let z_pos = inst.encoder.encode_from_embeddings(&x2, &inst.seqs).unwrap();
        let z_pos_norm = normalize_rows(&z_pos).unwrap();
        let mut loss_fn =
            inner_loss_fn(&inst.encoder, &inst.batch, z_pos_norm.clone(), &inst.hyper);
        let point = x1.add(&inst.delta).add(&inst.eta);
        let out = loss_fn(&point).unwrap();
        let numeric = central_diff_grad(
            |p: &[f64]| {
                let varied = Tensor::new(point.shape(), p.to_vec());
                let mut f =
                    inner_loss_fn(&inst.encoder, &inst.batch, z_pos_norm.clone(), &inst.hyper);
                f(&varied).unwrap().loss
            },
            point.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(out.grad.data(), &numeric));
    }

    // (3) component and total losses w.r.t. delta, eta and weights
    let full = inst.total_loss(&inst.encoder, &inst.disc, &inst.delta, &inst.eta, &inst.hyper, true);
    let mut graph = full.graph;
    for (node, value_of) in [
        (full.total_node, 0usize),
        (full.con_node, 1usize),
        (full.rtd_node.unwrap(), 2usize),
    ] {
        let mut grads = graph.backward(node);
        let scalar = |tl: &robust_embed_core::objectives::TotalLoss| match value_of {
            0 => tl.l_total,
            1 => tl.l_con,
            _ => tl.l_rtd,
        };

        // delta
        let analytic = grads.take(full.delta_node.unwrap()).unwrap_or_else(|| Tensor::zeros(inst.delta.shape()));
        let numeric = central_diff_grad(
            |d: &[f64]| {
                let dt = Tensor::new(inst.delta.shape(), d.to_vec());
                scalar(&inst.total_loss(&inst.encoder, &inst.disc, &dt, &inst.eta, &inst.hyper, false))
            },
            inst.delta.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(analytic.data(), &numeric));

        // eta
        let analytic = grads.take(full.eta_node.unwrap()).unwrap_or_else(|| Tensor::zeros(inst.eta.shape()));
        let numeric = central_diff_grad(
            |e: &[f64]| {
                let et = Tensor::new(inst.eta.shape(), e.to_vec());
                scalar(&inst.total_loss(&inst.encoder, &inst.disc, &inst.delta, &et, &inst.hyper, false))
            },
            inst.eta.data(),
            FD_STEP,
        );
        worst = worst.max(max_rel_err(analytic.data(), &numeric));

        // encoder weights
        let named_ids = full.encoder_binding.named();
        for (idx, (name, id)) in named_ids.iter().enumerate() {
            let shape = inst.encoder.weights.named()[idx].1.shape().to_vec();
            let base = inst.encoder.weights.named()[idx].1.data().to_vec();
            let analytic =
                grads.take(*id).unwrap_or_else(|| Tensor::zeros(&shape));
            let numeric = central_diff_grad(
                |w: &[f64]| {
                    let mut enc2 = inst.encoder.clone();
                    *enc2.weights.named_mut()[idx].1 = Tensor::new(&shape, w.to_vec());
                    scalar(&inst.total_loss(&enc2, &inst.disc, &inst.delta, &inst.eta, &inst.hyper, false))
                },
                &base,
                FD_STEP,
            );
            let err = max_rel_err(analytic.data(), &numeric);
            assert!(err.is_finite(), "{name} gradient check degenerate");
            worst = worst.max(err);
        }

        // discriminator weights (total + rtd only; con has no disc path)
        if value_of != 1 {
            if let Some(db) = &full.disc_binding {
                let ids = [db.w_x, db.w_h, db.b1, db.w2, db.b2];
                for (idx, id) in ids.iter().enumerate() {
                    let shape = inst.disc.named()[idx].1.shape().to_vec();
                    let base = inst.disc.named()[idx].1.data().to_vec();
                    let analytic = grads.take(*id).unwrap_or_else(|| Tensor::zeros(&shape));
                    let numeric = central_diff_grad(
                        |w: &[f64]| {
                            let mut disc2 = inst.disc.clone();
                            *disc2.named_mut()[idx].1 = Tensor::new(&shape, w.to_vec());
                            scalar(&inst.total_loss(&inst.encoder, &disc2, &inst.delta, &inst.eta, &inst.hyper, false))
                        },
                        &base,
                        FD_STEP,
                    );
                    worst = worst.max(max_rel_err(analytic.data(), &numeric));
                }
            }
        }
    }
    worst
}

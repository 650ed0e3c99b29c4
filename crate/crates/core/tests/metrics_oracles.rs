//! Evaluation metrics against brute-force oracles.

#![allow(clippy::needless_range_loop)]

mod support;

use rand::Rng;
use robust_embed_core::evaluation::{alignment, average_ranks, spearman, uniformity};
use robust_embed_core::rng::stream_from;

/// O(n^2) counting ranks (average rank for ties) plus the d^2 formula when
/// no ties exist, otherwise Pearson over counting ranks with naive sums.
fn spearman_oracle(pred: &[f64], gold: &[f64]) -> f64 {
    let counting_ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let has_ties = |v: &[f64]| {
        v.iter().enumerate().any(|(i, a)| v.iter().skip(i + 1).any(|b| a == b))
    };
    let rp = counting_ranks(pred);
    let rg = counting_ranks(gold);
    if !has_ties(pred) && !has_ties(gold) {
        let n = pred.len() as f64;
        let d2: f64 = rp.iter().zip(&rg).map(|(a, b)| (a - b) * (a - b)).sum();
        return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    }
    // Pearson over ranks, naive accumulation
    let n = pred.len() as f64;
    let mp = rp.iter().sum::<f64>() / n;
    let mg = rg.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dp = 0.0;
    let mut dg = 0.0;
    for (a, b) in rp.iter().zip(&rg) {
        num += (a - mp) * (b - mg);
        dp += (a - mp) * (a - mp);
        dg += (b - mg) * (b - mg);
    }
    num / (dp * dg).sqrt()
}

#[test]
fn spearman_matches_brute_force_on_random_cases() {
    let mut r = stream_from(31);
    for trial in 0..100 {
        let n = 2 + (trial % 40);
        let pred: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let gold: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..5.0)).collect();
        let ours = spearman(&pred, &gold).unwrap();
        let oracle = spearman_oracle(&pred, &gold);
        assert!((ours - oracle).abs() <= 1e-12, "trial {trial}: {ours} vs {oracle}");
    }
}

#[test]
fn spearman_tie_handling_matches_counting_oracle() {
    let mut r = stream_from(313);
    for trial in 0..50 {
        let n = 4 + (trial % 20);
        // quantized values force ties
        let pred: Vec<f64> = (0..n).map(|_| (r.gen_range(0..4u32)) as f64).collect();
        let gold: Vec<f64> = (0..n).map(|_| (r.gen_range(0..4u32)) as f64).collect();
        let ours = match spearman(&pred, &gold) {
            Ok(v) => v,
            Err(_) => continue, // constant vector drawn
        };
        let oracle = spearman_oracle(&pred, &gold);
        assert!((ours - oracle).abs() <= 1e-12, "trial {trial}");
    }
}

#[test]
fn average_ranks_tie_example() {
    let ranks = average_ranks(&[10.0, 20.0, 20.0, 30.0]).unwrap();
    assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
}

fn random_unit(dim: usize, r: &mut rand_chacha::ChaCha12Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

#[test]
fn alignment_matches_double_loop_oracle() {
    let mut r = stream_from(71);
    for trial in 0..100 {
        let dim = 2 + (trial % 6);
        let n = 1 + (trial % 12);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> =
            (0..n).map(|_| (random_unit(dim, &mut r), random_unit(dim, &mut r))).collect();
        let ours = alignment(&pairs).unwrap();
        let mut oracle = 0.0;
        for (a, b) in &pairs {
            let mut d2 = 0.0;
            for k in 0..dim {
                d2 += (a[k] - b[k]) * (a[k] - b[k]);
            }
            oracle += d2;
        }
        oracle /= n as f64;
        assert!((ours - oracle).abs() <= 1e-10, "trial {trial}");
    }
}

#[test]
fn uniformity_matches_double_loop_oracle() {
    let mut r = stream_from(72);
    for trial in 0..100 {
        let dim = 2 + (trial % 6);
        let n = 2 + (trial % 10);
        let embs: Vec<Vec<f64>> = (0..n).map(|_| random_unit(dim, &mut r)).collect();
        let ours = uniformity(&embs).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let mut d2 = 0.0;
                    for k in 0..dim {
                        d2 += (embs[i][k] - embs[j][k]) * (embs[i][k] - embs[j][k]);
                    }
                    total += (-2.0 * d2).exp();
                    count += 1;
                }
            }
        }
        let oracle = (total / count as f64).ln();
        assert!((ours - oracle).abs() <= 1e-10, "trial {trial}");
    }
}

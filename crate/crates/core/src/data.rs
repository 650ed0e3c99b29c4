//! Bundled desk-scale datasets and loaders for the standard TSV formats.
//!
//! The bundled sets are generated deterministically from template grammars
//! over a small sentiment vocabulary, so the repository copies under
//! `data/` can always be reproduced bit-for-bit. Loaders accept the usual
//! public formats: STS pairs as `sentence_a<TAB>sentence_b<TAB>score` and
//! classification items as `text<TAB>label`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::attacks::Lexicon;
use crate::error::{Error, Result};
use crate::evaluation::StsExample;
use crate::rng;

/// Synonym groups; words in one group share polarity and swap freely.
const POSITIVE_GROUPS: [[&str; 4]; 3] = [
    ["good", "great", "fine", "nice"],
    ["lovely", "pleasant", "charming", "delightful"],
    ["happy", "glad", "cheerful", "merry"],
];

const NEGATIVE_GROUPS: [[&str; 4]; 3] = [
    ["bad", "awful", "poor", "lousy"],
    ["sad", "gloomy", "bleak", "grim"],
    ["terrible", "dreadful", "nasty", "horrid"],
];

const NOUNS: [&str; 12] = [
    "movie", "film", "day", "meal", "book", "show", "trip", "song", "game", "place", "evening",
    "story",
];

const SENTIMENT_TEMPLATES: [&str; 6] = [
    "the {n} was {s}",
    "a {s} {n}",
    "that {n} felt {s}",
    "we had a {s} {n}",
    "it was a {s} {n} overall",
    "the {n} seemed quite {s}",
];

const NEUTRAL_TEMPLATES: [&str; 4] = [
    "the {n} started at noon",
    "we watched the {n} together",
    "the {n} happened on tuesday",
    "people talked about the {n}",
];

fn positive_words() -> Vec<&'static str> {
    POSITIVE_GROUPS.iter().flatten().copied().collect()
}

fn negative_words() -> Vec<&'static str> {
    NEGATIVE_GROUPS.iter().flatten().copied().collect()
}

fn fill(template: &str, noun: &str, sentiment: &str) -> String {
    template.replace("{n}", noun).replace("{s}", sentiment)
}

fn pick<'a, T>(items: &'a [T], r: &mut ChaCha12Rng) -> &'a T {
    &items[(r.gen::<u64>() as usize) % items.len()]
}

/// Unsupervised training corpus: sentiment sentences cycling through every
/// sentiment word, with neutral filler every fifth line.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut r = rng::stream(seed, "corpus", &[]);
    let pos = positive_words();
    let neg = negative_words();
    let all: Vec<&str> = pos.iter().chain(neg.iter()).copied().collect();
    let mut lines = Vec::with_capacity(n);
    for i in 0..n {
        if i % 5 == 4 {
            let t = pick(&NEUTRAL_TEMPLATES, &mut r);
            let noun = pick(&NOUNS, &mut r);
            lines.push(t.replace("{n}", noun));
        } else {
            let word = all[i % all.len()];
            let t = pick(&SENTIMENT_TEMPLATES, &mut r);
            let noun = pick(&NOUNS, &mut r);
            lines.push(fill(t, noun, word));
        }
    }
    lines
}

/// Balanced binary sentiment set: label 1 for positive words, 0 for
/// negative. Returns `(train, test)` with distinct sentences throughout.
pub fn sentiment_dataset(seed: u64) -> (Vec<(String, usize)>, Vec<(String, usize)>) {
    let mut combos_pos = all_combos(&positive_words());
    let mut combos_neg = all_combos(&negative_words());
    shuffle(&mut combos_pos, &mut rng::stream(seed, "sentiment-pos", &[]));
    shuffle(&mut combos_neg, &mut rng::stream(seed, "sentiment-neg", &[]));

    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..200 {
        let (t, n, w) = combos_pos[i];
        let item = (fill(SENTIMENT_TEMPLATES[t], NOUNS[n], w), 1usize);
        if i < 100 {
            train.push(item);
        } else {
            test.push(item);
        }
        let (t, n, w) = combos_neg[i];
        let item = (fill(SENTIMENT_TEMPLATES[t], NOUNS[n], w), 0usize);
        if i < 100 {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    (train, test)
}

fn all_combos<'a>(words: &[&'a str]) -> Vec<(usize, usize, &'a str)> {
    let mut out = Vec::new();
    for t in 0..SENTIMENT_TEMPLATES.len() {
        for n in 0..NOUNS.len() {
            for &w in words {
                out.push((t, n, w));
            }
        }
    }
    out
}

fn shuffle<T>(items: &mut [T], r: &mut ChaCha12Rng) {
    for i in (1..items.len()).rev() {
        let j = (r.gen::<u64>() as usize) % (i + 1);
        items.swap(i, j);
    }
}

/// Miniature STS-style set with graded gold scores from the pair
/// construction: identical (5.0), synonym swap (4.2), same polarity (3.4),
/// related topic (2.2), opposite polarity (1.5), sentiment-vs-neutral (0.5).
pub fn mini_sts(seed: u64, pairs_per_kind: usize) -> Vec<StsExample> {
    build_sts(rng::stream(seed, "sts", &[]), pairs_per_kind)
}

/// Smaller disjoint-stream split used for validation during training.
pub fn mini_sts_dev(seed: u64, pairs_per_kind: usize) -> Vec<StsExample> {
    build_sts(rng::stream(seed, "sts-dev", &[]), pairs_per_kind)
}

fn build_sts(mut r: ChaCha12Rng, per_kind: usize) -> Vec<StsExample> {
    let groups: Vec<&[&str; 4]> = POSITIVE_GROUPS.iter().chain(NEGATIVE_GROUPS.iter()).collect();
    let mut out = Vec::with_capacity(per_kind * 6);
    for _ in 0..per_kind {
        // identical
        let (t, n) = (pick(&SENTIMENT_TEMPLATES, &mut r), pick(&NOUNS, &mut r));
        let g = pick(&groups, &mut r);
        let s = fill(t, n, g[(r.gen::<u64>() as usize) % 4]);
        out.push(StsExample { sentence_a: s.clone(), sentence_b: s, gold: 5.0 });

        // synonym swap within a group
        let (t, n) = (pick(&SENTIMENT_TEMPLATES, &mut r), pick(&NOUNS, &mut r));
        let g = pick(&groups, &mut r);
        let wi = (r.gen::<u64>() as usize) % 4;
        let wj = (wi + 1 + (r.gen::<u64>() as usize) % 3) % 4;
        out.push(StsExample {
            sentence_a: fill(t, n, g[wi]),
            sentence_b: fill(t, n, g[wj]),
            gold: 4.2,
        });

        // same polarity, different group
        let (t, n) = (pick(&SENTIMENT_TEMPLATES, &mut r), pick(&NOUNS, &mut r));
        let positive = r.gen::<bool>();
        let pool: &[[&str; 4]; 3] = if positive { &POSITIVE_GROUPS } else { &NEGATIVE_GROUPS };
        let gi = (r.gen::<u64>() as usize) % 3;
        let gj = (gi + 1 + (r.gen::<u64>() as usize) % 2) % 3;
        out.push(StsExample {
            sentence_a: fill(t, n, pool[gi][(r.gen::<u64>() as usize) % 4]),
            sentence_b: fill(t, n, pool[gj][(r.gen::<u64>() as usize) % 4]),
            gold: 3.4,
        });

        // related topic: same polarity, different noun and template
        let positive = r.gen::<bool>();
        let pool = if positive { positive_words() } else { negative_words() };
        let ti = (r.gen::<u64>() as usize) % SENTIMENT_TEMPLATES.len();
        let tj = (ti + 1 + (r.gen::<u64>() as usize) % (SENTIMENT_TEMPLATES.len() - 1))
            % SENTIMENT_TEMPLATES.len();
        let ni = (r.gen::<u64>() as usize) % NOUNS.len();
        let nj = (ni + 1 + (r.gen::<u64>() as usize) % (NOUNS.len() - 1)) % NOUNS.len();
        out.push(StsExample {
            sentence_a: fill(SENTIMENT_TEMPLATES[ti], NOUNS[ni], pick(&pool, &mut r)),
            sentence_b: fill(SENTIMENT_TEMPLATES[tj], NOUNS[nj], pick(&pool, &mut r)),
            gold: 2.2,
        });

        // opposite polarity, same frame
        let (t, n) = (pick(&SENTIMENT_TEMPLATES, &mut r), pick(&NOUNS, &mut r));
        out.push(StsExample {
            sentence_a: fill(t, n, pick(&positive_words(), &mut r)),
            sentence_b: fill(t, n, pick(&negative_words(), &mut r)),
            gold: 1.5,
        });

        // sentiment vs neutral
        let n = pick(&NOUNS, &mut r);
        let nt = pick(&NEUTRAL_TEMPLATES, &mut r);
        let st = pick(&SENTIMENT_TEMPLATES, &mut r);
        let all: Vec<&str> = positive_words().into_iter().chain(negative_words()).collect();
        out.push(StsExample {
            sentence_a: fill(st, n, pick(&all, &mut r)),
            sentence_b: nt.replace("{n}", pick(&NOUNS, &mut r)),
            gold: 0.5,
        });
    }
    out
}

/// Synonym lexicon: every sentiment word maps to the rest of its group.
pub fn synonym_lexicon() -> Lexicon {
    let mut pairs = Vec::new();
    for group in POSITIVE_GROUPS.iter().chain(NEGATIVE_GROUPS.iter()) {
        for &w in group {
            let syns: Vec<String> =
                group.iter().filter(|&&s| s != w).map(|s| s.to_string()).collect();
            pairs.push((w.to_string(), syns));
        }
    }
    // a couple of topical noun synonyms so not every swap is sentiment-bearing
    pairs.push(("movie".into(), vec!["film".into()]));
    pairs.push(("film".into(), vec!["movie".into()]));
    Lexicon::from_pairs(pairs)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// One sentence per line; blank lines skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read corpus {}: {e}", path.display())))?;
    let lines: Vec<String> =
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
    if lines.is_empty() {
        return Err(Error::Input(format!("corpus {} has no sentences", path.display())));
    }
    Ok(lines)
}

/// `sentence_a<TAB>sentence_b<TAB>score` with score in `[0,5]`.
pub fn load_sts_tsv(path: &Path) -> Result<Vec<StsExample>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read STS file {}: {e}", path.display())))?;
    parse_sts_tsv(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn parse_sts_tsv(text: &str) -> Result<Vec<StsExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::Input(format!("line {}: expected 3 tab fields", i + 1)));
        }
        let gold: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("line {}: bad score '{}'", i + 1, parts[2])))?;
        out.push(
            StsExample::new(parts[0], parts[1], gold)
                .map_err(|e| Error::Input(format!("line {}: {e}", i + 1)))?,
        );
    }
    if out.is_empty() {
        return Err(Error::Input("no examples in STS file".into()));
    }
    Ok(out)
}

pub fn render_sts_tsv(examples: &[StsExample]) -> String {
    let mut s = String::new();
    for ex in examples {
        s.push_str(&format!("{}\t{}\t{}\n", ex.sentence_a, ex.sentence_b, ex.gold));
    }
    s
}

/// `text<TAB>label` with integer labels.
pub fn load_classification_tsv(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read dataset {}: {e}", path.display())))?;
    parse_classification_tsv(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn parse_classification_tsv(text: &str) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (t, l) = line
            .split_once('\t')
            .ok_or_else(|| Error::Input(format!("line {}: expected 2 tab fields", i + 1)))?;
        let label: usize = l
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("line {}: bad label '{l}'", i + 1)))?;
        out.push((t.to_string(), label));
    }
    if out.is_empty() {
        return Err(Error::Input("no examples in classification file".into()));
    }
    Ok(out)
}

pub fn render_classification_tsv(examples: &[(String, usize)]) -> String {
    let mut s = String::new();
    for (text, label) in examples {
        s.push_str(&format!("{text}\t{label}\n"));
    }
    s
}

/// Default seed used for the committed `data/` files.
pub const BUNDLED_SEED: u64 = 20240517;
pub const BUNDLED_CORPUS_SIZE: usize = 512;
pub const BUNDLED_STS_PER_KIND: usize = 30;
pub const BUNDLED_STS_DEV_PER_KIND: usize = 10;

pub fn bundled_corpus() -> Vec<String> {
    toy_corpus(BUNDLED_CORPUS_SIZE, BUNDLED_SEED)
}

pub fn bundled_sentiment() -> (Vec<(String, usize)>, Vec<(String, usize)>) {
    sentiment_dataset(BUNDLED_SEED)
}

pub fn bundled_mini_sts() -> Vec<StsExample> {
    mini_sts(BUNDLED_SEED, BUNDLED_STS_PER_KIND)
}

pub fn bundled_mini_sts_dev() -> Vec<StsExample> {
    mini_sts_dev(BUNDLED_SEED, BUNDLED_STS_DEV_PER_KIND)
}

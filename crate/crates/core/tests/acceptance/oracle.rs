//! Independent brute-force metric implementations used only to check the
//! library. Everything here recomputes from first principles with its own
//! data layout (string-joined n-grams in hash maps); nothing is shared with
//! the code under test.

use radreport::metrics::TokenizedPair;
use std::collections::{HashMap, HashSet};

fn ngrams_joined(tokens: &[String], n: usize) -> Vec<String> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join(" "))
        .collect()
}

fn counts(tokens: &[String], n: usize) -> HashMap<String, f64> {
    let mut map = HashMap::new();
    for gram in ngrams_joined(tokens, n) {
        *map.entry(gram).or_insert(0.0) += 1.0;
    }
    map
}

pub fn bleu(pairs: &[TokenizedPair], k: usize) -> f64 {
    let mut clipped = vec![0.0f64; k];
    let mut totals = vec![0.0f64; k];
    let mut cand_len = 0.0f64;
    let mut ref_len = 0.0f64;
    for pair in pairs {
        let c = pair.candidate();
        cand_len += c.len() as f64;
        // closest reference length; ties prefer the shorter reference
        let mut best = usize::MAX;
        for r in pair.references() {
            if best == usize::MAX {
                best = r.len();
                continue;
            }
            let better = r.len().abs_diff(c.len()) < best.abs_diff(c.len())
                || (r.len().abs_diff(c.len()) == best.abs_diff(c.len()) && r.len() < best);
            if better {
                best = r.len();
            }
        }
        ref_len += best as f64;
        for n in 1..=k {
            let cand_counts = counts(c, n);
            for (gram, &count) in &cand_counts {
                let max_ref = pair
                    .references()
                    .iter()
                    .map(|r| counts(r, n).get(gram).copied().unwrap_or(0.0))
                    .fold(0.0f64, f64::max);
                totals[n - 1] += count;
                clipped[n - 1] += count.min(max_ref);
            }
        }
    }
    if cand_len == 0.0 {
        return 0.0;
    }
    let mut product = 1.0f64;
    for n in 0..k {
        if totals[n] == 0.0 || clipped[n] == 0.0 {
            return 0.0;
        }
        product *= clipped[n] / totals[n];
    }
    let bp = if cand_len < ref_len {
        (1.0 - ref_len / cand_len).exp()
    } else {
        1.0
    };
    bp * product.powf(1.0 / k as f64)
}

fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

pub fn rouge_l(pairs: &[TokenizedPair]) -> f64 {
    let mut sum = 0.0;
    for pair in pairs {
        let c = pair.candidate();
        let mut best = 0.0f64;
        for r in pair.references() {
            if c.is_empty() || r.is_empty() {
                continue;
            }
            let lcs = lcs_table(c, r) as f64;
            let precision = lcs / c.len() as f64;
            let recall = lcs / r.len() as f64;
            if precision + recall > 0.0 {
                best = best.max(2.0 * precision * recall / (precision + recall));
            }
        }
        sum += best;
    }
    sum / pairs.len() as f64
}

pub fn cider_d(pairs: &[TokenizedPair]) -> f64 {
    const SIGMA: f64 = 6.0;
    let n_docs = pairs.len() as f64;
    // document frequency per n-gram: a document is one pair's reference set
    let mut df: HashMap<String, f64> = HashMap::new();
    for pair in pairs {
        let mut seen: HashSet<String> = HashSet::new();
        for r in pair.references() {
            for n in 1..=4 {
                seen.extend(ngrams_joined(r, n));
            }
        }
        for gram in seen {
            *df.entry(gram).or_insert(0.0) += 1.0;
        }
    }
    let idf = |gram: &str| -> f64 { n_docs.ln() - df.get(gram).copied().unwrap_or(0.0).max(1.0).ln() };
    let weighted = |tokens: &[String], n: usize| -> HashMap<String, f64> {
        counts(tokens, n)
            .into_iter()
            .map(|(gram, tf)| {
                let w = tf * idf(&gram);
                (gram, w)
            })
            .collect()
    };
    let norm = |vec: &HashMap<String, f64>| -> f64 {
        vec.values().map(|w| w * w).sum::<f64>().sqrt()
    };

    let mut corpus_sum = 0.0;
    for pair in pairs {
        let mut pair_sum = 0.0;
        for r in pair.references() {
            let delta = pair.candidate().len() as f64 - r.len() as f64;
            let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
            let mut order_sum = 0.0;
            for n in 1..=4 {
                let cv = weighted(pair.candidate(), n);
                let rv = weighted(r, n);
                let (cn, rn) = (norm(&cv), norm(&rv));
                if cn == 0.0 || rn == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for (gram, &cw) in &cv {
                    if let Some(&rw) = rv.get(gram) {
                        dot += cw.min(rw) * rw;
                    }
                }
                order_sum += penalty * dot / (cn * rn);
            }
            pair_sum += order_sum / 4.0;
        }
        corpus_sum += 10.0 * pair_sum / pair.references().len() as f64;
    }
    corpus_sum / pairs.len() as f64
}

//! Positional profiles and character n-gram mining.
//!
//! Pivot positions are carried over to a target verse by relative character
//! offset. A sum of Gaussian bells over those positions gives a profile whose
//! maximum and minimum anchor a positive and a negative window; n-grams are
//! then ranked by how strongly they prefer the positive windows.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{MultiCorpus, Translation, VerseId};
use crate::error::{Error, Result};
use crate::pivots::PivotSet;
use crate::stats::{chi2, gaussian_unchecked, kernel_radius, ContingencyTable};
use crate::tsv::escape_gram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub sigma: f64,
    /// Half-width of the positive and negative windows, in characters.
    pub window: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub top: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            sigma: 6.0,
            window: 20,
            n_min: 2,
            n_max: 6,
            top: 10,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        kernel_radius(self.sigma).map_err(|e| Error::Config(e.to_string()))?;
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::Config(format!("bad n-gram range {}..={}", self.n_min, self.n_max)));
        }
        if self.top == 0 {
            return Err(Error::Config("top must be positive".into()));
        }
        Ok(())
    }
}

/// Relative positions (token midpoint over verse length) of every pivot
/// occurrence, per selected verse. Verses without hits are present with an
/// empty list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PivotPositions(pub BTreeMap<VerseId, Vec<f64>>);

impl PivotPositions {
    pub fn collect(corpus: &MultiCorpus, ps: &PivotSet) -> Result<Self> {
        let mut out: BTreeMap<VerseId, Vec<f64>> =
            corpus.selected_verses().iter().map(|&v| (v, Vec::new())).collect();
        for p in &ps.members {
            let t = corpus.require_translation(&p.translation)?;
            for (&v, rel) in out.iter_mut() {
                let Some(tv) = corpus.tokenize(t, v) else { continue };
                if tv.text_len == 0 {
                    continue;
                }
                for tok in tv.tokens.iter().filter(|tok| tok.surface == p.surface) {
                    rel.push(tok.midpoint() / tv.text_len as f64);
                }
            }
        }
        Ok(PivotPositions(out))
    }

    pub fn get(&self, v: VerseId) -> &[f64] {
        self.0.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionProfile {
    pub verse: VerseId,
    pub scores: Vec<f64>,
    pub x_max: usize,
    pub x_min: usize,
    pub pivot_hits: usize,
}

/// Kernel center for a relative position on a verse of `len` characters.
pub fn project_center(rel: f64, len: usize) -> usize {
    let c = (rel * len as f64).round();
    (c.max(0.0) as usize).min(len.saturating_sub(1))
}

/// Profile of a verse of `len` characters given relative pivot positions.
pub fn profile_from_positions(verse: VerseId, len: usize, positions: &[f64], sigma: f64) -> Result<PositionProfile> {
    let radius = kernel_radius(sigma)?;
    let mut scores = vec![0.0; len];
    if len > 0 {
        for &rel in positions {
            let c = project_center(rel, len) as i64;
            let lo = (c - radius).max(0);
            let hi = (c + radius).min(len as i64 - 1);
            for i in lo..=hi {
                scores[i as usize] += gaussian_unchecked((i - c) as f64, sigma);
            }
        }
    }
    let (mut x_max, mut x_min) = (0, 0);
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[x_max] {
            x_max = i;
        }
        if s < scores[x_min] {
            x_min = i;
        }
    }
    Ok(PositionProfile {
        verse,
        scores,
        x_max,
        x_min,
        pivot_hits: if len > 0 { positions.len() } else { 0 },
    })
}

/// Profile of `verse` in `target`, or `None` when the verse is absent.
pub fn position_profile(
    verse: VerseId,
    target: &Translation,
    positions: &PivotPositions,
    sigma: f64,
) -> Result<Option<PositionProfile>> {
    let Some(text) = target.verse(verse) else {
        return Ok(None);
    };
    profile_from_positions(verse, text.chars().count(), positions.get(verse), sigma).map(Some)
}

/// All length-`n` character substrings with their character offsets.
pub fn ngram_occurrences(text: &str, n: usize) -> Vec<(String, usize)> {
    let chars: Vec<char> = text.chars().collect();
    if n == 0 || chars.len() < n {
        return Vec::new();
    }
    chars
        .windows(n)
        .enumerate()
        .map(|(i, w)| (w.iter().collect(), i))
        .collect()
}

/// Whether `[start, start + n)` meets `[center - w, center + w]`.
pub fn overlaps(start: usize, n: usize, center: usize, w: usize) -> bool {
    start <= center + w && start + n > center.saturating_sub(w)
}

/// One verse of a target translation ready for counting.
#[derive(Debug, Clone, PartialEq)]
pub struct VerseWindows {
    pub verse: VerseId,
    /// Case-folded characters of the verse.
    pub chars: Vec<char>,
    /// `(x_max, x_min)` when at least one pivot hit the verse.
    pub anchors: Option<(usize, usize)>,
}

/// Builds the counting windows of every selected verse present in `target`.
pub fn verse_windows(
    corpus: &MultiCorpus,
    target: &Translation,
    positions: &PivotPositions,
    sigma: f64,
) -> Result<Vec<VerseWindows>> {
    let policy = corpus.tokenizer().policy(target.id());
    let mut out = Vec::new();
    for &v in corpus.selected_verses() {
        let Some(p) = position_profile(v, target, positions, sigma)? else {
            continue;
        };
        let chars: Vec<char> = target.verse(v).unwrap_or_default().chars().map(|c| policy.fold_char(c)).collect();
        out.push(VerseWindows {
            verse: v,
            chars,
            anchors: (p.pivot_hits > 0).then_some((p.x_max, p.x_min)),
        });
    }
    Ok(out)
}

/// The anchors of `windows` dealt out to verses at random, keeping their
/// relative positions. Used to build a label-permutation null.
pub fn permuted_anchors(windows: &[VerseWindows], rng: &mut impl Rng) -> Vec<Option<(usize, usize)>> {
    let mut rel: Vec<Option<(f64, f64)>> = windows
        .iter()
        .map(|w| {
            let len = w.chars.len().max(1) as f64;
            w.anchors.map(|(a, b)| (a as f64 / len, b as f64 / len))
        })
        .collect();
    rel.shuffle(rng);
    windows
        .iter()
        .zip(rel)
        .map(|(w, r)| {
            let len = w.chars.len();
            r.map(|(a, b)| (project_center(a, len), project_center(b, len)))
        })
        .collect()
}

/// Interned n-grams of a set of verses, so that counts can be redone
/// cheaply for different anchors.
#[derive(Debug, Clone)]
pub struct GramIndex {
    /// Per n: gram strings and, per verse, the gram id at each offset.
    by_n: BTreeMap<usize, (Vec<String>, Vec<Vec<u32>>)>,
    verses: usize,
}

impl GramIndex {
    pub fn build(windows: &[VerseWindows], cfg: &MiningConfig) -> Self {
        let mut by_n = BTreeMap::new();
        for n in cfg.n_min..=cfg.n_max {
            let mut ids: HashMap<&[char], u32> = HashMap::new();
            let mut grams = Vec::new();
            let per_verse = windows
                .iter()
                .map(|w| {
                    if w.chars.len() < n {
                        return Vec::new();
                    }
                    w.chars
                        .windows(n)
                        .map(|g| {
                            *ids.entry(g).or_insert_with(|| {
                                grams.push(g.iter().collect::<String>());
                                (grams.len() - 1) as u32
                            })
                        })
                        .collect()
                })
                .collect();
            by_n.insert(n, (grams, per_verse));
        }
        GramIndex {
            by_n,
            verses: windows.len(),
        }
    }

    /// Window counts for one n under the given per-verse anchors.
    pub fn counts(&self, n: usize, anchors: &[Option<(usize, usize)>], w: usize) -> NgramCounts {
        let mut counts = NgramCounts::default();
        let Some((grams, per_verse)) = self.by_n.get(&n) else {
            return counts;
        };
        let mut pos = vec![0u64; grams.len()];
        let mut neg = vec![0u64; grams.len()];
        for (ids, anchor) in per_verse.iter().zip(anchors) {
            for (start, &id) in ids.iter().enumerate() {
                let (in_pos, in_neg) = match *anchor {
                    Some((hi, lo)) => (overlaps(start, n, hi, w), overlaps(start, n, lo, w)),
                    None => (false, true),
                };
                if in_pos {
                    pos[id as usize] += 1;
                    counts.pos_total += 1;
                }
                if in_neg {
                    neg[id as usize] += 1;
                    counts.neg_total += 1;
                }
            }
        }
        for (i, g) in grams.iter().enumerate() {
            if pos[i] > 0 {
                counts.pos.insert(g.clone(), pos[i]);
            }
            if neg[i] > 0 {
                counts.neg.insert(g.clone(), neg[i]);
            }
        }
        counts
    }

    /// Ranked candidates per n under the given anchors.
    pub fn mine(&self, anchors: &[Option<(usize, usize)>], cfg: &MiningConfig) -> Result<BTreeMap<usize, Vec<NgramCandidate>>> {
        if anchors.len() != self.verses {
            return Err(Error::Argument("anchor count differs from verse count".into()));
        }
        let mut out = BTreeMap::new();
        for &n in self.by_n.keys() {
            out.insert(n, rank_counts(&self.counts(n, anchors, cfg.window), n, cfg.top)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramCandidate {
    pub n: usize,
    pub rank: usize,
    pub gram: String,
    pub pos_count: u64,
    pub neg_count: u64,
    pub chi2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NgramCounts {
    pub pos: HashMap<String, u64>,
    pub neg: HashMap<String, u64>,
    pub pos_total: u64,
    pub neg_total: u64,
}

/// Window counts for a single n.
pub fn count_windows(windows: &[VerseWindows], n: usize, w: usize) -> NgramCounts {
    let mut counts = NgramCounts::default();
    for vw in windows {
        if vw.chars.len() < n {
            continue;
        }
        for (start, gram) in vw.chars.windows(n).enumerate() {
            let (in_pos, in_neg) = match vw.anchors {
                Some((hi, lo)) => (overlaps(start, n, hi, w), overlaps(start, n, lo, w)),
                None => (false, true),
            };
            if !(in_pos || in_neg) {
                continue;
            }
            let gram: String = gram.iter().collect();
            if in_pos {
                counts.pos_total += 1;
                *counts.pos.entry(gram.clone()).or_default() += 1;
            }
            if in_neg {
                counts.neg_total += 1;
                *counts.neg.entry(gram).or_default() += 1;
            }
        }
    }
    counts
}

/// Ranks grams by gated χ²; ties go to the lexicographically smaller gram.
pub fn rank_counts(counts: &NgramCounts, n: usize, top: usize) -> Result<Vec<NgramCandidate>> {
    let mut scored = Vec::new();
    for (gram, &a) in &counts.pos {
        let c = counts.neg.get(gram).copied().unwrap_or(0);
        let table = ContingencyTable::from_counts(a, counts.pos_total - a, c, counts.neg_total - c);
        let score = chi2(&table)?;
        if score > 0.0 {
            scored.push((gram, a, c, score));
        }
    }
    scored.sort_by(|x, y| y.3.total_cmp(&x.3).then_with(|| x.0.cmp(y.0)));
    Ok(scored
        .into_iter()
        .take(top)
        .enumerate()
        .map(|(i, (gram, a, c, score))| NgramCandidate {
            n,
            rank: i + 1,
            gram: gram.clone(),
            pos_count: a,
            neg_count: c,
            chi2: score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningResult {
    pub iso3: String,
    pub translation: String,
    pub by_n: BTreeMap<usize, Vec<NgramCandidate>>,
    pub verses: usize,
    pub pivot_verses: usize,
    /// Pivot-bearing verses whose two windows overlap.
    pub overlapping_windows: usize,
}

impl MiningResult {
    /// Highest χ² over all n.
    pub fn top_score(&self) -> f64 {
        self.by_n
            .values()
            .filter_map(|v| v.first())
            .map(|c| c.chi2)
            .fold(0.0, f64::max)
    }

    /// All candidates, merged across n by descending χ².
    pub fn merged(&self) -> Vec<&NgramCandidate> {
        let mut all: Vec<&NgramCandidate> = self.by_n.values().flatten().collect();
        all.sort_by(|x, y| y.chi2.total_cmp(&x.chi2).then_with(|| x.n.cmp(&y.n)).then_with(|| x.gram.cmp(&y.gram)));
        all
    }

    /// `n<TAB>rank<TAB>gram<TAB>pos<TAB>neg<TAB>chi2`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n\trank\tgram\tpos\tneg\tchi2\n");
        for cands in self.by_n.values() {
            for c in cands {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{:.6}",
                    c.n,
                    c.rank,
                    escape_gram(&c.gram),
                    c.pos_count,
                    c.neg_count,
                    c.chi2
                );
            }
        }
        out
    }
}

/// Mines prepared windows of one translation.
pub fn mine_windows(
    iso3: &str,
    translation: &str,
    windows: &[VerseWindows],
    cfg: &MiningConfig,
) -> Result<MiningResult> {
    cfg.validate()?;
    let anchors: Vec<Option<(usize, usize)>> = windows.iter().map(|w| w.anchors).collect();
    let by_n = GramIndex::build(windows, cfg).mine(&anchors, cfg)?;
    let anchored: Vec<(usize, usize)> = windows.iter().filter_map(|w| w.anchors).collect();
    Ok(MiningResult {
        iso3: iso3.to_string(),
        translation: translation.to_string(),
        by_n,
        verses: windows.len(),
        pivot_verses: anchored.len(),
        overlapping_windows: anchored.iter().filter(|(a, b)| a.abs_diff(*b) <= 2 * cfg.window).count(),
    })
}

/// Mines character n-grams of `target` around the pivot set's positions.
pub fn mine_ngrams(
    corpus: &MultiCorpus,
    target: &Translation,
    positions: &PivotPositions,
    cfg: &MiningConfig,
) -> Result<MiningResult> {
    cfg.validate()?;
    let windows = verse_windows(corpus, target, positions, cfg.sigma)?;
    if !windows.iter().any(|w| w.anchors.is_some()) {
        warn!("{}: no selected verse carries a pivot; nothing to mine", target.id());
        return Ok(MiningResult {
            iso3: target.iso3().to_string(),
            translation: target.id().to_string(),
            by_n: BTreeMap::new(),
            verses: windows.len(),
            pivot_verses: 0,
            overlapping_windows: 0,
        });
    }
    mine_windows(target.iso3(), target.id(), &windows, cfg)
}

/// Mines every translation of the corpus, in id order.
pub fn mine_all(corpus: &MultiCorpus, ps: &PivotSet, cfg: &MiningConfig) -> Result<Vec<MiningResult>> {
    cfg.validate()?;
    let positions = PivotPositions::collect(corpus, ps)?;
    corpus
        .translations()
        .par_iter()
        .map(|t| mine_ngrams(corpus, t, &positions, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::truncated_kernel_mass;
    use proptest::prelude::*;

    fn vid() -> VerseId {
        VerseId::from_number(1_001_001).unwrap()
    }

    #[test]
    fn single_pivot_peak() {
        let p = profile_from_positions(vid(), 100, &[0.62], 6.0).unwrap();
        assert_eq!(p.x_max, 62);
        assert!((p.scores[62] - 0.066490).abs() < 1e-6);
        assert_eq!(p.pivot_hits, 1);
        assert_eq!(p.x_min, 0);
    }

    #[test]
    fn zero_pivots() {
        let p = profile_from_positions(vid(), 30, &[], 6.0).unwrap();
        assert_eq!(p.pivot_hits, 0);
        assert!(p.scores.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn two_bells_leftmost_max() {
        let p = profile_from_positions(vid(), 100, &[0.2, 0.8], 6.0).unwrap();
        assert_eq!(p.x_max, 20);
        // bells reach 44 and 56; the flat gap between them holds the minimum
        assert_eq!(p.scores[p.x_min], 0.0);
        assert_eq!(p.x_min, 45);
    }

    #[test]
    fn center_clamps() {
        assert_eq!(project_center(1.0, 10), 9);
        assert_eq!(project_center(0.0, 10), 0);
        let p = profile_from_positions(vid(), 10, &[1.0], 6.0).unwrap();
        assert_eq!(p.x_max, 9);
    }

    #[test]
    fn occurrences() {
        assert_eq!(ngram_occurrences("abc", 2), vec![("ab".into(), 0), ("bc".into(), 1)]);
        assert!(ngram_occurrences("a", 2).is_empty());
        assert_eq!(ngram_occurrences("a a", 3), vec![("a a".into(), 0)]);
    }

    #[test]
    fn overlap_edges() {
        assert!(overlaps(30, 2, 10, 20));
        assert!(!overlaps(31, 2, 10, 20));
        assert!(overlaps(0, 2, 10, 20));
        assert!(overlaps(9, 2, 30, 20));
        assert!(!overlaps(8, 2, 30, 20));
    }

    fn vw(text: &str, anchors: Option<(usize, usize)>) -> VerseWindows {
        VerseWindows {
            verse: vid(),
            chars: text.chars().collect(),
            anchors,
        }
    }

    #[test]
    fn suffix_ranks_first() {
        let mut windows = Vec::new();
        for i in 0..40 {
            let stem = ["mo", "tu", "ri", "se"][i % 4];
            if i % 2 == 0 {
                windows.push(vw(&format!("bela noti {stem}ka."), Some((13, 0))));
            } else {
                windows.push(vw(&format!("bela noti {stem}."), None));
            }
        }
        let cfg = MiningConfig {
            window: 2,
            ..Default::default()
        };
        let r = mine_windows("xxx", "xxx_t", &windows, &cfg).unwrap();
        // "a." is equally exclusive to the marked verses and ties with "ka"
        let top = &r.by_n[&2];
        let ka = top.iter().find(|c| c.gram == "ka").unwrap();
        assert_eq!(ka.chi2, top[0].chi2);
        assert_eq!((ka.pos_count, ka.neg_count), (20, 0));
        assert_eq!(r.pivot_verses, 20);
        assert!(r.to_tsv().starts_with("n\trank\tgram\tpos\tneg\tchi2\n2\t1\ta.\t20\t0\t"));
    }

    proptest! {
        #[test]
        fn mass_conservation(len in 60usize..200, k in 1usize..5, seed in any::<u64>()) {
            let lo = 24.0 / len as f64;
            let hi = (len as f64 - 25.0) / len as f64;
            prop_assume!(hi > lo);
            let pos: Vec<f64> = (0..k).map(|i| {
                let u = ((seed.wrapping_mul(i as u64 + 7) >> 11) as f64) / (1u64 << 53) as f64;
                lo + u * (hi - lo)
            }).collect();
            let p = profile_from_positions(vid(), len, &pos, 6.0).unwrap();
            let total: f64 = p.scores.iter().sum();
            prop_assert!((total - k as f64 * truncated_kernel_mass(6.0).unwrap()).abs() < 1e-6);
        }

        #[test]
        fn shift_invariance(c in 30usize..60, s in 0usize..20) {
            let len = 200;
            let rel = |x: usize| x as f64 / len as f64;
            let a = profile_from_positions(vid(), len, &[rel(c), rel(c), rel(c + 40)], 6.0).unwrap();
            let b = profile_from_positions(vid(), len, &[rel(c + s), rel(c + s), rel(c + 40 + s)], 6.0).unwrap();
            prop_assert_eq!(b.x_max, a.x_max + s);
            // the global minimum is in the flat tail; compare the valley between the bells
            let valley = |p: &PositionProfile, lo: usize| (lo..lo + 40).min_by(|&i, &j| p.scores[i].total_cmp(&p.scores[j])).unwrap();
            prop_assert_eq!(valley(&b, c + s), valley(&a, c) + s);
        }

        #[test]
        fn window_recount(texts in proptest::collection::vec("[ab ]{0,30}", 1..8), n in 2usize..4, w in 0usize..6) {
            let windows: Vec<VerseWindows> = texts.iter().enumerate().map(|(i, t)| {
                let len = t.chars().count();
                let anchors = (i % 2 == 0 && len > 0).then(|| ((i * 7) % len, (i * 3) % len));
                vw(t, anchors)
            }).collect();
            let counts = count_windows(&windows, n, w);
            let direct: usize = windows.iter().filter_map(|v| {
                let (hi, _) = v.anchors?;
                let text: String = v.chars.iter().collect();
                Some(ngram_occurrences(&text, n).iter().filter(|(_, s)| overlaps(*s, n, hi, w)).count())
            }).sum();
            prop_assert_eq!(counts.pos.values().sum::<u64>(), direct as u64);
            prop_assert_eq!(counts.pos_total, direct as u64);
            let cfg = MiningConfig { n_min: n, n_max: n, window: w, ..Default::default() };
            let anchors: Vec<_> = windows.iter().map(|v| v.anchors).collect();
            let indexed = GramIndex::build(&windows, &cfg).counts(n, &anchors, w);
            prop_assert_eq!(indexed, counts);
        }
    }
}

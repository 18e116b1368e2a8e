//! Word alignment from one translation to the others.
//!
//! The model is IBM Model 1 with a null source word and a fixed diagonal
//! distortion prior: target position `j` of `m` aligns to source position
//! `i` of `n` with probability `p0` for the null word, otherwise
//! `(1 - p0) * exp(-lambda * |i/n - j/m|) / Z_j`. Only the lexical table is
//! re-estimated, so every EM pass is a proper EM step and the corpus
//! log-likelihood never decreases.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{MultiCorpus, TokenizedVerse, Translation, VerseId};
use crate::error::{Error, Result};
use crate::tsv::{escape_field, unescape_field};

/// Name of the null source word in serialized tables.
pub const NULL_WORD: &str = "<null>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignerConfig {
    pub em_iterations: usize,
    /// Diagonal tension; 0 makes the prior uniform over source positions.
    pub lambda: f64,
    /// Prior probability of aligning to the null word.
    pub p0: f64,
}

impl Default for AlignerConfig {
    fn default() -> Self {
        AlignerConfig {
            em_iterations: 5,
            lambda: 4.0,
            p0: 0.08,
        }
    }
}

impl AlignerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.em_iterations == 0 {
            return Err(Error::Config("em_iterations must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.p0) {
            return Err(Error::Config(format!("p0 must be in [0, 1), got {}", self.p0)));
        }
        Ok(())
    }
}

/// Prior over source positions for target position `j` (1-based) of a
/// target sentence of length `m`, given a source sentence of length `n`.
/// Index 0 of the result is the null word, index `i` is source position `i`.
pub fn alignment_prior(j: usize, m: usize, n: usize, cfg: &AlignerConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(cfg.p0);
    let jr = j as f64 / m as f64;
    let weights: Vec<f64> = (1..=n)
        .map(|i| (-cfg.lambda * (i as f64 / n as f64 - jr).abs()).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    out.extend(weights.iter().map(|w| (1.0 - cfg.p0) * w / z));
    out
}

#[derive(Debug, Clone, Default)]
struct Vocab {
    index: HashMap<String, u32>,
    words: Vec<String>,
}

impl Vocab {
    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.index.insert(w.to_string(), id);
        self.words.push(w.to_string());
        id
    }

    fn get(&self, w: &str) -> Option<u32> {
        self.index.get(w).copied()
    }
}

/// Lexical translation probabilities `t(target | source)`, including the
/// null source word.
#[derive(Debug, Clone)]
pub struct LexTable {
    source: Vocab,
    target: Vocab,
    probs: HashMap<(u32, u32), f64>,
    trace: Vec<f64>,
}

const NULL_ID: u32 = 0;

impl LexTable {
    fn empty() -> Self {
        let mut source = Vocab::default();
        source.intern(NULL_WORD);
        LexTable {
            source,
            target: Vocab::default(),
            probs: HashMap::new(),
            trace: Vec::new(),
        }
    }

    /// `t(target | source)`; 0 for unseen pairs.
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        match (self.source.get(source), self.target.get(target)) {
            (Some(s), Some(t)) => self.probs.get(&(s, t)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn null_prob(&self, target: &str) -> f64 {
        self.prob(NULL_WORD, target)
    }

    /// Corpus log-likelihood before each EM pass and after the last one.
    pub fn likelihood_trace(&self) -> &[f64] {
        &self.trace
    }

    /// Source words in sorted order (null word included).
    pub fn source_words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.source.words.iter().map(String::as_str).collect();
        w.sort_unstable();
        w
    }

    pub fn knows_target(&self, target: &str) -> bool {
        self.target.get(target).is_some()
    }

    /// All entries of one source row, sorted by target word.
    pub fn row(&self, source: &str) -> Vec<(&str, f64)> {
        let Some(s) = self.source.get(source) else {
            return Vec::new();
        };
        let mut row: Vec<(&str, f64)> = self
            .probs
            .iter()
            .filter(|((src, _), _)| *src == s)
            .map(|((_, t), p)| (self.target.words[*t as usize].as_str(), *p))
            .collect();
        row.sort_by(|a, b| a.0.cmp(b.0));
        row
    }

    /// Most probable target for a source word; ties go to the smaller word.
    pub fn best_target(&self, source: &str) -> Option<(&str, f64)> {
        self.row(source)
            .into_iter()
            .fold(None, |best, (w, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((w, p)),
            })
    }

    /// Sum of each source row.
    pub fn row_sums(&self) -> BTreeMap<&str, f64> {
        let mut entries: Vec<(&(u32, u32), &f64)> = self.probs.iter().collect();
        entries.sort_by_key(|(k, _)| **k);
        let mut out = BTreeMap::new();
        for ((s, _), p) in entries {
            *out.entry(self.source.words[*s as usize].as_str()).or_insert(0.0) += *p;
        }
        out
    }

    fn sorted_entries(&self) -> Vec<(&str, &str, f64)> {
        let mut rows: Vec<(&str, &str, f64)> = self
            .probs
            .iter()
            .map(|((s, t), p)| {
                (
                    self.source.words[*s as usize].as_str(),
                    self.target.words[*t as usize].as_str(),
                    *p,
                )
            })
            .collect();
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        rows
    }

    /// `src_word<TAB>tgt_word<TAB>prob` lines, sorted.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, t, p) in self.sorted_entries() {
            let _ = writeln!(out, "{}\t{}\t{}", escape_field(s), escape_field(t), p);
        }
        out
    }

    /// Parses the output of [`LexTable::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut table = LexTable::empty();
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split('\t');
            let (Some(s), Some(t), Some(p), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::Data(format!("lex table line {}: expected 3 fields", n + 1)));
            };
            let p: f64 = p
                .parse()
                .map_err(|_| Error::Data(format!("lex table line {}: bad probability", n + 1)))?;
            if !(0.0..=1.0 + 1e-9).contains(&p) {
                return Err(Error::Data(format!("lex table line {}: probability out of range", n + 1)));
            }
            let s = table.source.intern(&unescape_field(s));
            let t = table.target.intern(&unescape_field(t));
            table.probs.insert((s, t), p);
        }
        Ok(table)
    }
}

/// Trains the lexical table on sentence pairs with exactly
/// `cfg.em_iterations` EM passes. Pairs with an empty side are skipped.
pub fn train_alignment(
    pairs: &[(TokenizedVerse, TokenizedVerse)],
    cfg: &AlignerConfig,
) -> Result<LexTable> {
    cfg.validate()?;
    let mut table = LexTable::empty();

    // Each (source, target) co-occurrence gets a parameter slot; sentences
    // are stored as slot indices laid out target-major, null first.
    let mut slot_of: HashMap<(u32, u32), u32> = HashMap::new();
    let mut slot_keys: Vec<(u32, u32)> = Vec::new();
    struct Sentence {
        n: usize,
        m: usize,
        slots: Vec<u32>,
    }
    let mut sentences = Vec::new();
    for (src, tgt) in pairs {
        if src.is_empty() || tgt.is_empty() {
            continue;
        }
        let s_ids: Vec<u32> = std::iter::once(NULL_ID)
            .chain(src.surfaces().map(|w| table.source.intern(w)))
            .collect();
        let t_ids: Vec<u32> = tgt.surfaces().map(|w| table.target.intern(w)).collect();
        let mut slots = Vec::with_capacity(s_ids.len() * t_ids.len());
        for &t in &t_ids {
            for &s in &s_ids {
                let next = slot_keys.len() as u32;
                let slot = *slot_of.entry((s, t)).or_insert_with(|| {
                    slot_keys.push((s, t));
                    next
                });
                slots.push(slot);
            }
        }
        sentences.push(Sentence {
            n: src.len(),
            m: tgt.len(),
            slots,
        });
    }
    if sentences.is_empty() {
        return Err(Error::Data("no usable sentence pairs for alignment training".into()));
    }

    let mut priors: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for s in &sentences {
        priors.entry((s.n, s.m)).or_insert_with(|| {
            (1..=s.m)
                .flat_map(|j| alignment_prior(j, s.m, s.n, cfg))
                .collect()
        });
    }

    let uniform = 1.0 / table.target.words.len() as f64;
    let mut params = vec![uniform; slot_keys.len()];
    let mut counts = vec![0.0f64; slot_keys.len()];
    let mut totals = vec![0.0f64; table.source.words.len()];
    let mut trace = Vec::with_capacity(cfg.em_iterations + 1);

    let e_step = |params: &[f64], counts: Option<&mut Vec<f64>>| -> f64 {
        let mut ll = 0.0;
        let mut counts = counts;
        for s in &sentences {
            let prior = &priors[&(s.n, s.m)];
            let width = s.n + 1;
            for j in 0..s.m {
                let row = j * width..(j + 1) * width;
                let denom: f64 = s.slots[row.clone()]
                    .iter()
                    .zip(&prior[row.clone()])
                    .map(|(&slot, &pr)| pr * params[slot as usize])
                    .sum();
                ll += denom.ln();
                if let Some(c) = counts.as_deref_mut() {
                    for (&slot, &pr) in s.slots[row.clone()].iter().zip(&prior[row]) {
                        c[slot as usize] += pr * params[slot as usize] / denom;
                    }
                }
            }
        }
        ll
    };

    for _ in 0..cfg.em_iterations {
        counts.iter_mut().for_each(|c| *c = 0.0);
        totals.iter_mut().for_each(|t| *t = 0.0);
        trace.push(e_step(&params, Some(&mut counts)));
        for (slot, &(s, _)) in slot_keys.iter().enumerate() {
            totals[s as usize] += counts[slot];
        }
        for (slot, &(s, _)) in slot_keys.iter().enumerate() {
            params[slot] = counts[slot] / totals[s as usize];
        }
    }
    trace.push(e_step(&params, None));

    table.probs = slot_keys.into_iter().zip(params).collect();
    table.trace = trace;
    Ok(table)
}

/// One link per target token to its most probable source token; tokens
/// whose best choice is the null word (including unknown words) are left
/// unlinked. Ties go to the lowest source index, null first.
pub fn viterbi_align(
    lex: &LexTable,
    source: &TokenizedVerse,
    target: &TokenizedVerse,
    cfg: &AlignerConfig,
) -> Vec<(usize, usize)> {
    let (n, m) = (source.len(), target.len());
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let src_ids: Vec<Option<u32>> = source.surfaces().map(|w| lex.source.get(w)).collect();
    let mut links = Vec::new();
    for (j, tgt) in target.surfaces().enumerate() {
        let Some(t) = lex.target.get(tgt) else {
            continue;
        };
        let prior = alignment_prior(j + 1, m, n, cfg);
        let lookup = |s: u32| lex.probs.get(&(s, t)).copied().unwrap_or(0.0);
        let mut best = prior[0] * lookup(NULL_ID);
        let mut best_i = None;
        for (i, s) in src_ids.iter().enumerate() {
            let score = s.map_or(0.0, |s| prior[i + 1] * lookup(s));
            if score > best {
                best = score;
                best_i = Some(i);
            }
        }
        if let Some(i) = best_i {
            links.push((i, j));
        }
    }
    links
}

/// Aggregate link counts of one translation pair.
#[derive(Debug, Clone, Default)]
pub struct LinkStats {
    joint: HashMap<String, HashMap<String, u64>>,
    source_totals: HashMap<String, u64>,
    target_totals: HashMap<String, u64>,
    target_freq: HashMap<String, u64>,
    total: u64,
}

impl LinkStats {
    pub fn joint(&self, source: &str, target: &str) -> u64 {
        self.joint
            .get(source)
            .and_then(|r| r.get(target))
            .copied()
            .unwrap_or(0)
    }

    /// Links leaving a source word.
    pub fn source_total(&self, source: &str) -> u64 {
        self.source_totals.get(source).copied().unwrap_or(0)
    }

    /// Links arriving at a target word.
    pub fn target_total(&self, target: &str) -> u64 {
        self.target_totals.get(target).copied().unwrap_or(0)
    }

    /// Token frequency of a target word over the aligned verses.
    pub fn target_frequency(&self, target: &str) -> u64 {
        self.target_freq.get(target).copied().unwrap_or(0)
    }

    /// Links in the pair.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Targets linked to `source`, sorted by word.
    pub fn targets_of(&self, source: &str) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self
            .joint
            .get(source)
            .map(|r| r.iter().map(|(w, c)| (w.as_str(), *c)).collect())
            .unwrap_or_default();
        v.sort_unstable();
        v
    }

    /// Every target word seen in the aligned verses, sorted.
    pub fn target_vocabulary(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.target_freq.keys().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// Alignment of one source translation onto one target translation.
#[derive(Debug, Clone)]
pub struct PairAlignment {
    pub source: String,
    pub target: String,
    pub target_iso3: String,
    /// Verses used for training, in order.
    pub verses: Vec<VerseId>,
    /// Per-verse `(source index, target index)` links.
    pub links: Vec<Vec<(usize, usize)>>,
    pub stats: LinkStats,
}

/// Tokenized training pairs for `source -> target` over the selected
/// verses present in both.
pub fn training_pairs(
    corpus: &MultiCorpus,
    source: &Translation,
    target: &Translation,
) -> (Vec<VerseId>, Vec<(TokenizedVerse, TokenizedVerse)>) {
    let tok = corpus.tokenizer();
    let mut verses = Vec::new();
    let mut pairs = Vec::new();
    for &v in corpus.selected_verses() {
        let (Some(s), Some(t)) = (tok.tokenize(source, v), tok.tokenize(target, v)) else {
            continue;
        };
        if s.is_empty() || t.is_empty() {
            continue;
        }
        verses.push(v);
        pairs.push((s, t));
    }
    (verses, pairs)
}

/// On-disk cache of trained lexical tables, keyed by translation pair and
/// a hash of the configuration and training data.
#[derive(Debug, Clone)]
pub struct AlignCache {
    dir: PathBuf,
}

impl AlignCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        AlignCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, source: &str, target: &str) -> PathBuf {
        self.dir.join(format!("{source}__{target}.lex.tsv"))
    }

    /// Returns the cached table when present, keyed by `key` and intact.
    /// Corrupt or stale entries are reported and ignored.
    pub fn load(&self, source: &str, target: &str, key: &str) -> Option<LexTable> {
        let path = self.path(source, target);
        let text = fs::read_to_string(&path).ok()?;
        match parse_cache_entry(&text, key) {
            Ok(Some(t)) => Some(t),
            Ok(None) => None,
            Err(e) => {
                warn!("ignoring corrupt alignment cache {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store(&self, source: &str, target: &str, key: &str, table: &LexTable) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let body = table.to_tsv();
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let trace: Vec<String> = table.trace.iter().map(|x| x.to_string()).collect();
        let text = format!(
            "#lextable\tkey={key}\tsha256={digest}\ttrace={}\n{body}",
            trace.join(",")
        );
        let path = self.path(source, target);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

fn parse_cache_entry(text: &str, key: &str) -> Result<Option<LexTable>> {
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::Data("missing header".into()))?;
    let mut fields = header.split('\t');
    if fields.next() != Some("#lextable") {
        return Err(Error::Data("bad header".into()));
    }
    let mut entry_key = None;
    let mut digest = None;
    let mut trace = None;
    for f in fields {
        match f.split_once('=') {
            Some(("key", v)) => entry_key = Some(v),
            Some(("sha256", v)) => digest = Some(v),
            Some(("trace", v)) => trace = Some(v),
            _ => return Err(Error::Data(format!("unknown header field {f:?}"))),
        }
    }
    let (Some(entry_key), Some(digest), Some(trace)) = (entry_key, digest, trace) else {
        return Err(Error::Data("incomplete header".into()));
    };
    if entry_key != key {
        return Ok(None);
    }
    if hex::encode(Sha256::digest(body.as_bytes())) != digest {
        return Err(Error::Data("checksum mismatch".into()));
    }
    let mut table = LexTable::from_tsv(body)?;
    table.trace = trace
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Data("bad trace value".into())))
        .collect::<Result<_>>()?;
    Ok(Some(table))
}

fn cache_key(
    cfg: &AlignerConfig,
    source: &str,
    target: &str,
    verses: &[VerseId],
    pairs: &[(TokenizedVerse, TokenizedVerse)],
) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}|{}|{}|{}|{}\n", source, target, cfg.em_iterations, cfg.lambda, cfg.p0));
    for (v, (s, t)) in verses.iter().zip(pairs) {
        h.update(v.to_string());
        for w in s.surfaces() {
            h.update(b"\x1f");
            h.update(w.as_bytes());
        }
        h.update(b"\x1e");
        for w in t.surfaces() {
            h.update(b"\x1f");
            h.update(w.as_bytes());
        }
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Trains (or loads from cache) and Viterbi-aligns `source -> target`.
pub fn align_pair(
    corpus: &MultiCorpus,
    source: &Translation,
    target: &Translation,
    cfg: &AlignerConfig,
    cache: Option<&AlignCache>,
) -> Result<PairAlignment> {
    let (verses, pairs) = training_pairs(corpus, source, target);
    let mut alignment = PairAlignment {
        source: source.id().to_string(),
        target: target.id().to_string(),
        target_iso3: target.iso3().to_string(),
        verses: Vec::new(),
        links: Vec::new(),
        stats: LinkStats::default(),
    };
    if pairs.is_empty() {
        warn!("{} and {} share no usable verses", source.id(), target.id());
        return Ok(alignment);
    }
    let key = cache.map(|_| cache_key(cfg, source.id(), target.id(), &verses, &pairs));
    let cached = match (cache, &key) {
        (Some(c), Some(k)) => c.load(source.id(), target.id(), k),
        _ => None,
    };
    let lex = match cached {
        Some(t) => t,
        None => {
            let t = train_alignment(&pairs, cfg)?;
            if let (Some(c), Some(k)) = (cache, &key) {
                c.store(source.id(), target.id(), k, &t)?;
            }
            t
        }
    };

    let stats = &mut alignment.stats;
    for (s, t) in &pairs {
        let links = viterbi_align(&lex, s, t, cfg);
        for w in t.surfaces() {
            *stats.target_freq.entry(w.to_string()).or_default() += 1;
        }
        for &(i, j) in &links {
            let sw = &s.tokens[i].surface;
            let tw = &t.tokens[j].surface;
            *stats
                .joint
                .entry(sw.clone())
                .or_default()
                .entry(tw.clone())
                .or_default() += 1;
            *stats.source_totals.entry(sw.clone()).or_default() += 1;
            *stats.target_totals.entry(tw.clone()).or_default() += 1;
            stats.total += 1;
        }
        alignment.links.push(links);
    }
    alignment.verses = verses;
    Ok(alignment)
}

/// Aligns `source` onto every other translation of the corpus, in
/// translation-id order.
pub fn align_to_all(
    corpus: &MultiCorpus,
    source: &Translation,
    cfg: &AlignerConfig,
    cache: Option<&AlignCache>,
) -> Result<Vec<PairAlignment>> {
    cfg.validate()?;
    corpus
        .translations()
        .par_iter()
        .filter(|t| t.id() != source.id())
        .map(|t| align_pair(corpus, source, t, cfg, cache))
        .collect()
}

/// Link counts of one source word in one target translation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationLinkCounts {
    pub translation: String,
    pub iso3: String,
    /// Links from the source word to each target word.
    pub counts: BTreeMap<String, u64>,
    /// All links leaving the source word.
    pub source_word_total: u64,
    /// All links in the pair.
    pub pair_total: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCounts {
    pub per_translation: Vec<TranslationLinkCounts>,
}

impl LinkCounts {
    /// Counts merged per language by summing over translations.
    pub fn per_language(&self) -> BTreeMap<(String, String), u64> {
        let mut out = BTreeMap::new();
        for t in &self.per_translation {
            for (w, c) in &t.counts {
                *out.entry((t.iso3.clone(), w.clone())).or_default() += c;
            }
        }
        out
    }

    /// Per-language total links of the source word.
    pub fn language_totals(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for t in &self.per_translation {
            *out.entry(t.iso3.clone()).or_default() += t.source_word_total;
        }
        out
    }
}

/// Aggregates the links of `source_word` over a set of pair alignments.
pub fn link_counts(alignments: &[PairAlignment], source_word: &str) -> LinkCounts {
    let per_translation: Vec<TranslationLinkCounts> = alignments
        .iter()
        .map(|a| TranslationLinkCounts {
            translation: a.target.clone(),
            iso3: a.target_iso3.clone(),
            counts: a
                .stats
                .targets_of(source_word)
                .into_iter()
                .map(|(w, c)| (w.to_string(), c))
                .collect(),
            source_word_total: a.stats.source_total(source_word),
            pair_total: a.stats.total(),
        })
        .collect();
    if per_translation.iter().all(|t| t.source_word_total == 0) {
        warn!("{source_word:?} is never aligned in any translation pair");
    }
    LinkCounts { per_translation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize_verse, TokenizePolicy};

    fn tv(s: &str) -> TokenizedVerse {
        tokenize_verse(s, &TokenizePolicy::default())
    }

    fn toy() -> Vec<(TokenizedVerse, TokenizedVerse)> {
        vec![
            (tv("the house"), tv("la maison")),
            (tv("the flower"), tv("la fleur")),
        ]
    }

    #[test]
    fn toy_corpus_learns_the_la() {
        let lex = train_alignment(&toy(), &AlignerConfig::default()).unwrap();
        assert_eq!(lex.best_target("the").unwrap().0, "la");
        for (w, s) in lex.row_sums() {
            assert!((s - 1.0).abs() < 1e-6, "{w}: {s}");
        }
        let links = viterbi_align(&lex, &tv("the house"), &tv("la maison"), &AlignerConfig::default());
        assert_eq!(links, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn single_identical_pair() {
        let lex = train_alignment(&[(tv("a"), tv("a"))], &AlignerConfig::default()).unwrap();
        assert_eq!(lex.prob("a", "a"), 1.0);
        assert_eq!(lex.best_target("a").unwrap().0, "a");
    }

    #[test]
    fn empty_and_oov_targets() {
        let cfg = AlignerConfig::default();
        let lex = train_alignment(&toy(), &cfg).unwrap();
        assert!(viterbi_align(&lex, &tv("the house"), &tv(""), &cfg).is_empty());
        let links = viterbi_align(&lex, &tv("the house"), &tv("la zzz"), &cfg);
        assert_eq!(links, vec![(0, 0)]);
    }

    #[test]
    fn no_usable_pairs_is_fatal() {
        let pairs = vec![(tv(""), tv("x")), (tv("y"), tv(""))];
        assert!(matches!(
            train_alignment(&pairs, &AlignerConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn config_validation() {
        let bad = [
            AlignerConfig { em_iterations: 0, ..Default::default() },
            AlignerConfig { lambda: -1.0, ..Default::default() },
            AlignerConfig { p0: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn prior_favours_diagonal() {
        let cfg = AlignerConfig::default();
        let (m, n) = (7, 9);
        for j in 1..=m {
            let prior = alignment_prior(j, m, n, &cfg);
            assert!((prior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut by_distance: Vec<(f64, f64)> = (1..=n)
                .map(|i| ((i as f64 / n as f64 - j as f64 / m as f64).abs(), prior[i]))
                .collect();
            by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for w in by_distance.windows(2) {
                if w[1].0 > w[0].0 + 1e-12 {
                    assert!(w[1].1 < w[0].1);
                }
            }
        }
    }

    #[test]
    fn likelihood_non_decreasing_and_deterministic() {
        let pairs = vec![
            (tv("a b c"), tv("x y z")),
            (tv("a c"), tv("x z")),
            (tv("b c d"), tv("y z w")),
            (tv("d a"), tv("w x")),
        ];
        let cfg = AlignerConfig { em_iterations: 8, ..Default::default() };
        let lex = train_alignment(&pairs, &cfg).unwrap();
        let trace = lex.likelihood_trace();
        assert_eq!(trace.len(), 9);
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        let again = train_alignment(&pairs, &cfg).unwrap();
        assert_eq!(lex.to_tsv(), again.to_tsv());
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let lex = train_alignment(&toy(), &AlignerConfig::default()).unwrap();
        let back = LexTable::from_tsv(&lex.to_tsv()).unwrap();
        assert_eq!(back.to_tsv(), lex.to_tsv());
        assert_eq!(back.prob("the", "la"), lex.prob("the", "la"));
        assert!(LexTable::from_tsv("a\tb\n").is_err());
    }

    #[test]
    fn cache_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cache = AlignCache::new(dir.path());
        let lex = train_alignment(&toy(), &AlignerConfig::default()).unwrap();
        cache.store("s", "t", "k1", &lex).unwrap();
        let loaded = cache.load("s", "t", "k1").unwrap();
        assert_eq!(loaded.to_tsv(), lex.to_tsv());
        assert_eq!(loaded.likelihood_trace(), lex.likelihood_trace());
        assert!(cache.load("s", "t", "other").is_none());

        let path = dir.path().join("s__t.lex.tsv");
        let text = fs::read_to_string(&path).unwrap().replace("la", "lb");
        fs::write(&path, text).unwrap();
        assert!(cache.load("s", "t", "k1").is_none());
    }
}

//! Head-pivot search, pivot-set expansion and verse presence matrices.
//!
//! A pivot is a surface token of one translation that marks the feature of
//! interest. The head pivot is the word most associated with a merged query
//! token inside an allowlist of languages (typically Creoles, whose marking
//! tends to be regular); the pivot set extends it with the best-associated
//! word of each further language.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{align_to_all, training_pairs, AlignCache, AlignerConfig, PairAlignment};
use crate::corpus::{apply_query_merge, valid_iso3, MultiCorpus, Translation, VerseId, DEFAULT_QUERY_TOKEN};
use crate::error::{Error, Result};
use crate::stats::{chi2, ContingencyTable};
use crate::tsv::escape_field;

/// A feature and the surface forms that encode it in one translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub feature: String,
    pub translation: String,
    pub forms: BTreeSet<String>,
}

impl Query {
    pub fn new(feature: impl Into<String>, translation: impl Into<String>, forms: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let forms: BTreeSet<String> = forms.into_iter().map(Into::into).filter(|f: &String| !f.is_empty()).collect();
        if forms.is_empty() {
            return Err(Error::Argument("query needs at least one form".into()));
        }
        Ok(Query {
            feature: feature.into(),
            translation: translation.into(),
            forms,
        })
    }

    /// Parses `feature<TAB>translation_id<TAB>form1,form2,...` lines.
    pub fn parse_file(text: &str) -> Result<Vec<Query>> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Data(format!("query file line {}: expected 3 fields", n + 1)));
            }
            let q = Query::new(fields[0], fields[1], fields[2].split(',').map(str::trim))
                .map_err(|e| Error::Data(format!("query file line {}: {e}", n + 1)))?;
            if out.iter().any(|o: &Query| o.feature == q.feature) {
                return Err(Error::Data(format!("query file line {}: duplicate feature {}", n + 1, q.feature)));
            }
            out.push(q);
        }
        Ok(out)
    }
}

/// Parses an allowlist file: one language code per line.
pub fn parse_allowlist(text: &str) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let code = line.trim();
        if code.is_empty() || code.starts_with('#') {
            continue;
        }
        if !valid_iso3(code) {
            return Err(Error::Data(format!("allowlist line {}: invalid language code {code:?}", n + 1)));
        }
        out.insert(code.to_string());
    }
    Ok(out)
}

/// How association counts are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContingencyMode {
    /// Word-alignment link counts.
    #[default]
    Links,
    /// Verse-level co-occurrence, for corpora too small to align well.
    VerseCooccurrence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotConfig {
    /// Minimum token frequency of a candidate word in its translation.
    pub min_count: u64,
    pub mode: ContingencyMode,
}

impl Default for PivotConfig {
    fn default() -> Self {
        PivotConfig {
            min_count: 10,
            mode: ContingencyMode::Links,
        }
    }
}

/// A candidate word with its association to the reference token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord {
    pub iso3: String,
    pub translation: String,
    pub surface: String,
    pub score: f64,
    pub joint: u64,
    pub frequency: u64,
}

fn rank_order(a: &ScoredWord, b: &ScoredWord) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.iso3.cmp(&b.iso3))
        .then_with(|| a.surface.cmp(&b.surface))
        .then_with(|| a.translation.cmp(&b.translation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pivot {
    pub language: String,
    pub translation: String,
    pub surface: String,
    /// Association with the head pivot (or with the query, for the head).
    pub score: f64,
    /// Whether the surface occurs as a token in each selected verse; verses
    /// missing from the translation are false.
    pub presence: Vec<bool>,
}

impl Pivot {
    pub fn label(&self) -> String {
        format!("{}_{}", self.language, self.surface)
    }

    pub fn occurrences(&self) -> usize {
        self.presence.iter().filter(|p| **p).count()
    }
}

/// Presence of `surface` over the corpus selection, by direct token search.
pub fn token_presence(corpus: &MultiCorpus, translation: &Translation, surface: &str) -> Vec<bool> {
    corpus
        .selected_verses()
        .iter()
        .map(|&v| {
            corpus
                .tokenize(translation, v)
                .is_some_and(|tv| tv.contains(surface))
        })
        .collect()
}

/// Like [`token_presence`], with `None` where the verse is missing.
pub fn token_presence_optional(corpus: &MultiCorpus, translation: &Translation, surface: &str) -> Vec<Option<bool>> {
    corpus
        .selected_verses()
        .iter()
        .map(|&v| corpus.tokenize(translation, v).map(|tv| tv.contains(surface)))
        .collect()
}

fn make_pivot(corpus: &MultiCorpus, w: &ScoredWord) -> Result<Pivot> {
    let t = corpus.require_translation(&w.translation)?;
    Ok(Pivot {
        language: w.iso3.clone(),
        translation: w.translation.clone(),
        surface: w.surface.clone(),
        score: w.score,
        presence: token_presence(corpus, t, &w.surface),
    })
}

/// Scores every word linked to `reference` in each aligned translation.
pub fn score_by_links(alignments: &[PairAlignment], reference: &str, cfg: &PivotConfig) -> Result<Vec<ScoredWord>> {
    let mut out = Vec::new();
    for a in alignments {
        let ref_total = a.stats.source_total(reference);
        if ref_total == 0 {
            continue;
        }
        for (word, joint) in a.stats.targets_of(reference) {
            let frequency = a.stats.target_frequency(word);
            if frequency < cfg.min_count {
                continue;
            }
            let table = ContingencyTable::from_margins(joint, ref_total, a.stats.target_total(word), a.stats.total());
            let score = chi2(&table)?;
            if score > 0.0 {
                out.push(ScoredWord {
                    iso3: a.target_iso3.clone(),
                    translation: a.target.clone(),
                    surface: word.to_string(),
                    score,
                    joint,
                    frequency,
                });
            }
        }
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Scores every word of every other translation by verse co-occurrence
/// with `reference` in `source`.
pub fn score_by_cooccurrence(
    corpus: &MultiCorpus,
    source: &Translation,
    reference: &str,
    cfg: &PivotConfig,
) -> Result<Vec<ScoredWord>> {
    let per_target: Vec<Vec<ScoredWord>> = corpus
        .translations()
        .par_iter()
        .filter(|t| t.id() != source.id())
        .map(|target| -> Result<Vec<ScoredWord>> {
            let (_, pairs) = training_pairs(corpus, source, target);
            let n = pairs.len() as u64;
            let mut ref_verses = 0u64;
            let mut verse_freq: HashMap<&str, u64> = HashMap::new();
            let mut joint: HashMap<&str, u64> = HashMap::new();
            let mut token_freq: HashMap<&str, u64> = HashMap::new();
            for (s, t) in &pairs {
                let has_ref = s.contains(reference);
                ref_verses += has_ref as u64;
                let mut seen = HashSet::new();
                for w in t.surfaces() {
                    *token_freq.entry(w).or_default() += 1;
                    if seen.insert(w) {
                        *verse_freq.entry(w).or_default() += 1;
                        if has_ref {
                            *joint.entry(w).or_default() += 1;
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for (w, a) in joint {
                let frequency = token_freq[w];
                if frequency < cfg.min_count {
                    continue;
                }
                let table = ContingencyTable::from_margins(a, ref_verses, verse_freq[w], n);
                let score = chi2(&table)?;
                if score > 0.0 {
                    out.push(ScoredWord {
                        iso3: target.iso3().to_string(),
                        translation: target.id().to_string(),
                        surface: w.to_string(),
                        score,
                        joint: a,
                        frequency,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<ScoredWord> = per_target.into_iter().flatten().collect();
    out.sort_by(rank_order);
    Ok(out)
}

/// Alignment and scoring context shared by the pivot searches.
#[derive(Debug, Clone, Copy)]
pub struct SearchContext<'a> {
    pub aligner: &'a AlignerConfig,
    pub pivots: &'a PivotConfig,
    pub cache: Option<&'a AlignCache>,
}

fn rank_against(ctx: SearchContext<'_>, corpus: &MultiCorpus, source: &Translation, reference: &str) -> Result<Vec<ScoredWord>> {
    match ctx.pivots.mode {
        ContingencyMode::Links => {
            let alignments = align_to_all(corpus, source, ctx.aligner, ctx.cache)?;
            score_by_links(&alignments, reference, ctx.pivots)
        }
        ContingencyMode::VerseCooccurrence => score_by_cooccurrence(corpus, source, reference, ctx.pivots),
    }
}

#[derive(Debug, Clone)]
pub struct HeadSearch {
    pub head: Pivot,
    /// Every positively associated candidate, all languages.
    pub ranking: Vec<ScoredWord>,
}

/// Finds the allowlisted word most associated with the merged query token.
pub fn find_head_pivot(
    corpus: &MultiCorpus,
    query: &Query,
    allowlist: &BTreeSet<String>,
    ctx: SearchContext<'_>,
) -> Result<HeadSearch> {
    if allowlist.is_empty() {
        return Err(Error::Config("head-pivot allowlist is empty".into()));
    }
    let source = corpus.require_translation(&query.translation)?;
    let policy = corpus.tokenizer().policy(source.id());
    let merged = apply_query_merge(source, &query.forms, DEFAULT_QUERY_TOKEN, policy)?;
    let token = policy.normalize(DEFAULT_QUERY_TOKEN);
    let ranking = rank_against(ctx, corpus, &merged, &token)?;
    let Some(best) = ranking.iter().find(|w| allowlist.contains(&w.iso3)) else {
        let mut msg = format!(
            "no allowlisted language has a word associated with query {:?}",
            query.feature
        );
        let top: Vec<String> = ranking
            .iter()
            .take(5)
            .map(|w| format!("{}:{} ({:.2})", w.iso3, w.surface, w.score))
            .collect();
        if !top.is_empty() {
            let _ = write!(msg, "; best candidates elsewhere: {}", top.join(", "));
        }
        return Err(Error::Data(msg));
    };
    let head = make_pivot(corpus, best)?;
    Ok(HeadSearch { head, ranking })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotSet {
    pub head: Pivot,
    /// Head first, then one pivot per further language by falling score.
    pub members: Vec<Pivot>,
    pub k: usize,
}

impl PivotSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `rank<TAB>iso3<TAB>translation<TAB>surface<TAB>chi2`, ranks from 1.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tiso3\ttranslation\tsurface\tchi2\n");
        for (i, p) in self.members.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                i + 1,
                p.language,
                escape_field(&p.translation),
                escape_field(&p.surface),
                p.score
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub set: PivotSet,
    /// Full ranking against the head before the one-per-language filter.
    pub ranking: Vec<ScoredWord>,
}

impl Expansion {
    /// Highest-scoring word of each language; the head stands for its own.
    pub fn top_markers(&self) -> BTreeMap<String, ScoredWord> {
        let mut out = BTreeMap::new();
        let head = &self.set.head;
        out.insert(
            head.language.clone(),
            ScoredWord {
                iso3: head.language.clone(),
                translation: head.translation.clone(),
                surface: head.surface.clone(),
                score: head.score,
                joint: 0,
                frequency: head.occurrences() as u64,
            },
        );
        for w in &self.ranking {
            out.entry(w.iso3.clone()).or_insert_with(|| w.clone());
        }
        out
    }
}

/// Expands the head pivot to at most `k` pivots, one per language.
pub fn expand_pivots(corpus: &MultiCorpus, head: &Pivot, k: usize, ctx: SearchContext<'_>) -> Result<Expansion> {
    if k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let source = corpus.require_translation(&head.translation)?;
    let ranking = rank_against(ctx, corpus, source, &head.surface)?;
    let mut used: BTreeSet<&str> = BTreeSet::from([head.language.as_str()]);
    let mut members = vec![head.clone()];
    for w in &ranking {
        if members.len() >= k {
            break;
        }
        if used.insert(w.iso3.as_str()) {
            members.push(make_pivot(corpus, w)?);
        }
    }
    if members.len() < k {
        warn!(
            "only {} languages have a word associated with {}:{}; pivot set smaller than k={k}",
            members.len(),
            head.language,
            head.surface
        );
    }
    Ok(Expansion {
        set: PivotSet {
            head: head.clone(),
            members,
            k,
        },
        ranking,
    })
}

/// Binary verse-by-pivot matrix over the corpus selection. A cell is `None`
/// when the verse is missing from the pivot's translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceMatrix {
    pub verses: Vec<VerseId>,
    pub labels: Vec<String>,
    /// Language of each column.
    pub languages: Vec<String>,
    /// Column-major cells.
    pub columns: Vec<Vec<Option<bool>>>,
}

impl PresenceMatrix {
    pub fn n_verses(&self) -> usize {
        self.verses.len()
    }

    pub fn n_pivots(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, verse: usize, pivot: usize) -> Option<bool> {
        self.columns[pivot][verse]
    }

    pub fn is_present(&self, verse: usize, pivot: usize) -> bool {
        self.columns[pivot][verse] == Some(true)
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Rows whose verse is present in every listed column's translation.
    pub fn shared_rows(&self, columns: &[usize]) -> Vec<usize> {
        (0..self.n_verses())
            .filter(|&r| columns.iter().all(|&c| self.columns[c][r].is_some()))
            .collect()
    }
}

pub fn pivot_presence_matrix(corpus: &MultiCorpus, ps: &PivotSet) -> Result<PresenceMatrix> {
    if ps.members.is_empty() {
        return Err(Error::Argument("pivot set is empty".into()));
    }
    let verses = corpus.selected_verses().to_vec();
    let columns = ps
        .members
        .iter()
        .map(|p| -> Result<Vec<Option<bool>>> {
            let t = corpus.require_translation(&p.translation)?;
            Ok(token_presence_optional(corpus, t, &p.surface))
        })
        .collect::<Result<_>>()?;
    Ok(PresenceMatrix {
        verses,
        labels: ps.members.iter().map(Pivot::label).collect(),
        languages: ps.members.iter().map(|p| p.language.clone()).collect(),
        columns,
    })
}

//! Verse-aligned multiparallel corpus: loading, coverage selection,
//! tokenization and query merging.
//!
//! On disk a corpus is a directory of `{iso3}_{name}.txt` files, each line
//! holding `VerseId<TAB>text`. The file stem is the translation id; several
//! translations may share one language code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eight-digit verse identifier: 2-digit book, 3-digit chapter, 3-digit verse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VerseId(u32);

impl VerseId {
    pub fn book(self) -> u32 {
        self.0 / 1_000_000
    }

    pub fn chapter(self) -> u32 {
        self.0 / 1000 % 1000
    }

    pub fn verse(self) -> u32 {
        self.0 % 1000
    }

    /// Builds an id from its numeric value (must be below 10^8).
    pub fn from_number(n: u32) -> Result<Self> {
        if n >= 100_000_000 {
            return Err(Error::Argument(format!("verse number {n} exceeds 8 digits")));
        }
        Ok(VerseId(n))
    }
}

impl FromStr for VerseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::Data(format!("malformed verse id {s:?}")));
        }
        Ok(VerseId(s.parse().expect("eight ascii digits")))
    }
}

impl fmt::Display for VerseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}", self.0)
    }
}

impl Serialize for VerseId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VerseId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn valid_iso3(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_lowercase())
}

/// One translation of the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translation {
    id: String,
    iso3: String,
    verses: BTreeMap<VerseId, String>,
}

impl Translation {
    pub fn new(id: impl Into<String>, iso3: impl Into<String>) -> Result<Self> {
        let iso3 = iso3.into();
        if !valid_iso3(&iso3) {
            return Err(Error::Argument(format!(
                "language code {iso3:?} is not three lowercase letters"
            )));
        }
        Ok(Translation {
            id: id.into(),
            iso3,
            verses: BTreeMap::new(),
        })
    }

    /// Adds a verse. Returns false (and keeps the existing text) when the
    /// verse is already present.
    pub fn insert(&mut self, verse: VerseId, text: impl Into<String>) -> bool {
        use std::collections::btree_map::Entry;
        match self.verses.entry(verse) {
            Entry::Vacant(e) => {
                e.insert(text.into());
                true
            }
            Entry::Occupied(_) => false,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn iso3(&self) -> &str {
        &self.iso3
    }

    pub fn verses(&self) -> &BTreeMap<VerseId, String> {
        &self.verses
    }

    pub fn verse(&self, v: VerseId) -> Option<&str> {
        self.verses.get(&v).map(String::as_str)
    }

    pub fn contains(&self, v: VerseId) -> bool {
        self.verses.contains_key(&v)
    }
}

/// Delimiter policy for whitespace-style tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizePolicy {
    /// Characters (besides whitespace) that separate tokens.
    pub delimiters: String,
    pub split_whitespace: bool,
    pub lowercase: bool,
}

impl Default for TokenizePolicy {
    fn default() -> Self {
        TokenizePolicy {
            delimiters: ".,;:!?()\"'".to_string(),
            split_whitespace: true,
            lowercase: true,
        }
    }
}

impl TokenizePolicy {
    /// Whitespace-only splitting without case folding, for scripts where
    /// punctuation is lexical.
    pub fn whitespace_only() -> Self {
        TokenizePolicy {
            delimiters: String::new(),
            split_whitespace: true,
            lowercase: false,
        }
    }

    pub fn is_delimiter(&self, c: char) -> bool {
        (self.split_whitespace && c.is_whitespace()) || self.delimiters.contains(c)
    }

    /// Case-folds one character without changing the character count.
    pub fn fold_char(&self, c: char) -> char {
        if !self.lowercase {
            return c;
        }
        let mut lower = c.to_lowercase();
        match (lower.next(), lower.next()) {
            (Some(l), None) => l,
            _ => c,
        }
    }

    /// Normalizes a surface form the way tokens are normalized.
    pub fn normalize(&self, s: &str) -> String {
        s.chars().map(|c| self.fold_char(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
}

impl Token {
    /// Character midpoint of the token.
    pub fn midpoint(&self) -> f64 {
        (self.start + self.end) as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedVerse {
    pub tokens: Vec<Token>,
    /// Length of the original text in characters.
    pub text_len: usize,
}

impl TokenizedVerse {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.surfaces().any(|s| s == surface)
    }
}

/// Splits `text` into maximal runs of non-delimiter characters.
pub fn tokenize_verse(text: &str, policy: &TokenizePolicy) -> TokenizedVerse {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut len = 0;
    for (i, c) in text.chars().enumerate() {
        len = i + 1;
        if policy.is_delimiter(c) {
            if !current.is_empty() {
                tokens.push(Token {
                    surface: std::mem::take(&mut current),
                    start,
                    end: i,
                });
            }
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(policy.fold_char(c));
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            surface: current,
            start,
            end: len,
        });
    }
    TokenizedVerse {
        tokens,
        text_len: len,
    }
}

/// Default policy plus per-translation overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenizer {
    pub default: TokenizePolicy,
    pub overrides: BTreeMap<String, TokenizePolicy>,
}

impl Tokenizer {
    pub fn policy(&self, translation_id: &str) -> &TokenizePolicy {
        self.overrides.get(translation_id).unwrap_or(&self.default)
    }

    pub fn tokenize(&self, translation: &Translation, verse: VerseId) -> Option<TokenizedVerse> {
        translation
            .verse(verse)
            .map(|text| tokenize_verse(text, self.policy(translation.id())))
    }
}

/// Synthetic token substituted for query forms.
pub const DEFAULT_QUERY_TOKEN: &str = "⟨Q⟩";

/// Replaces every token whose normalized surface is in `forms` with
/// `synthetic`, leaving the rest of the text untouched.
///
/// A translation that already contains `synthetic` but none of the forms is
/// treated as merged and returned as is; one that contains both is rejected
/// as ambiguous.
pub fn apply_query_merge(
    t: &Translation,
    forms: &BTreeSet<String>,
    synthetic: &str,
    policy: &TokenizePolicy,
) -> Result<Translation> {
    if forms.is_empty() {
        return Err(Error::Argument("query has no surface forms".into()));
    }
    let synth_tokens = tokenize_verse(synthetic, policy);
    if synth_tokens.len() != 1 || synth_tokens.tokens[0].end - synth_tokens.tokens[0].start != synthetic.chars().count() {
        return Err(Error::Argument(format!(
            "synthetic token {synthetic:?} is not a single token under the tokenizer policy"
        )));
    }
    let synth_norm = &synth_tokens.tokens[0].surface;
    let forms: BTreeSet<String> = forms.iter().map(|f| policy.normalize(f)).collect();
    if forms.contains(synth_norm) {
        return Err(Error::Argument("synthetic token is itself a query form".into()));
    }

    let tokenized: Vec<(VerseId, &String, TokenizedVerse)> = t
        .verses
        .iter()
        .map(|(v, text)| (*v, text, tokenize_verse(text, policy)))
        .collect();
    let has_synth = tokenized.iter().any(|(_, _, tv)| tv.contains(synth_norm));
    let has_form = tokenized
        .iter()
        .any(|(_, _, tv)| tv.surfaces().any(|s| forms.contains(s)));
    if has_synth && has_form {
        return Err(Error::Data(format!(
            "synthetic token {synthetic:?} already occurs in {}",
            t.id
        )));
    }
    if !has_form {
        return Ok(t.clone());
    }

    let mut merged = Translation::new(t.id.clone(), t.iso3.clone())?;
    for (v, text, tv) in tokenized {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        for tok in tv.tokens.iter().filter(|tok| forms.contains(&tok.surface)) {
            out.extend(&chars[cursor..tok.start]);
            out.push_str(synthetic);
            cursor = tok.end;
        }
        out.extend(&chars[cursor..]);
        merged.insert(v, out);
    }
    Ok(merged)
}

/// A set of translations sharing one verse numbering.
#[derive(Debug, Clone)]
pub struct MultiCorpus {
    translations: Vec<Translation>,
    verse_universe: BTreeSet<VerseId>,
    selected: Vec<VerseId>,
    tokenizer: Tokenizer,
}

impl MultiCorpus {
    /// Builds a corpus whose selection is the whole verse universe.
    pub fn new(mut translations: Vec<Translation>) -> Result<Self> {
        if translations.is_empty() {
            return Err(Error::Data("corpus has no translations".into()));
        }
        translations.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in translations.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Data(format!("duplicate translation id {}", pair[0].id)));
            }
        }
        let verse_universe: BTreeSet<VerseId> = translations
            .iter()
            .flat_map(|t| t.verses.keys().copied())
            .collect();
        let selected = verse_universe.iter().copied().collect();
        Ok(MultiCorpus {
            translations,
            verse_universe,
            selected,
            tokenizer: Tokenizer::default(),
        })
    }

    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    /// Restricts downstream stages to `selected` (kept in verse order).
    pub fn with_selection(mut self, mut selected: Vec<VerseId>) -> Result<Self> {
        selected.sort();
        selected.dedup();
        if let Some(v) = selected.iter().find(|v| !self.verse_universe.contains(v)) {
            return Err(Error::Argument(format!("selected verse {v} is not in the corpus")));
        }
        self.selected = selected;
        Ok(self)
    }

    pub fn translations(&self) -> &[Translation] {
        &self.translations
    }

    pub fn translation(&self, id: &str) -> Option<&Translation> {
        self.translations
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.translations[i])
    }

    pub fn require_translation(&self, id: &str) -> Result<&Translation> {
        self.translation(id)
            .ok_or_else(|| Error::Data(format!("translation {id} not found in corpus")))
    }

    pub fn verse_universe(&self) -> &BTreeSet<VerseId> {
        &self.verse_universe
    }

    pub fn selected_verses(&self) -> &[VerseId] {
        &self.selected
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Language codes present, each with its translations in id order.
    pub fn languages(&self) -> BTreeMap<&str, Vec<&Translation>> {
        let mut out: BTreeMap<&str, Vec<&Translation>> = BTreeMap::new();
        for t in &self.translations {
            out.entry(t.iso3.as_str()).or_default().push(t);
        }
        out
    }

    /// Number of translations containing each verse of the universe.
    pub fn coverage(&self) -> BTreeMap<VerseId, usize> {
        let mut cov: BTreeMap<VerseId, usize> =
            self.verse_universe.iter().map(|v| (*v, 0)).collect();
        for t in &self.translations {
            for v in t.verses.keys() {
                *cov.get_mut(v).expect("universe covers all verses") += 1;
            }
        }
        cov
    }

    /// The `target_count` verses with the highest translation coverage, ties
    /// broken by verse order; returned in verse order. Counts above the
    /// universe size select everything.
    pub fn select_covered_verses(&self, target_count: usize) -> Result<Vec<VerseId>> {
        if target_count == 0 {
            return Err(Error::Argument("coverage target must be positive".into()));
        }
        if target_count > self.verse_universe.len() {
            warn!(
                "coverage target {target_count} exceeds the {} verses available; selecting all",
                self.verse_universe.len()
            );
        }
        let mut ranked: Vec<(VerseId, usize)> = self.coverage().into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(target_count);
        let mut out: Vec<VerseId> = ranked.into_iter().map(|(v, _)| v).collect();
        out.sort();
        Ok(out)
    }

    pub fn write_coverage_report(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "verse_id\tcoverage")?;
        for (v, c) in self.coverage() {
            writeln!(w, "{v}\t{c}")?;
        }
        Ok(())
    }

    /// Tokenizes a verse with the translation's policy.
    pub fn tokenize(&self, translation: &Translation, verse: VerseId) -> Option<TokenizedVerse> {
        self.tokenizer.tokenize(translation, verse)
    }
}

/// Per-file diagnostics from [`load_corpus`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub files: usize,
    pub lines: usize,
    pub malformed: BTreeMap<String, usize>,
    pub duplicates: BTreeMap<String, usize>,
    pub skipped_files: Vec<String>,
}

impl LoadReport {
    pub fn malformed_total(&self) -> usize {
        self.malformed.values().sum()
    }
}

/// Language family per language code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyLabels(pub BTreeMap<String, String>);

impl FamilyLabels {
    pub fn get(&self, iso3: &str) -> Option<&str> {
        self.0.get(iso3).map(String::as_str)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (iso, fam) = line.split_once('\t').ok_or_else(|| {
                Error::Data(format!("family file line {}: expected iso3<TAB>family", n + 1))
            })?;
            if !valid_iso3(iso) || fam.trim().is_empty() {
                return Err(Error::Data(format!("family file line {}: malformed entry", n + 1)));
            }
            map.insert(iso.to_string(), fam.trim().to_string());
        }
        Ok(FamilyLabels(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}\t{v}\n")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: MultiCorpus,
    pub report: LoadReport,
    pub families: Option<FamilyLabels>,
}

struct ParsedFile {
    translation: Translation,
    lines: usize,
    malformed: usize,
    duplicates: usize,
}

fn parse_translation(id: &str, iso3: &str, text: &str) -> Result<ParsedFile> {
    let mut translation = Translation::new(id, iso3)?;
    let (mut lines, mut malformed, mut duplicates) = (0, 0, 0);
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines += 1;
        let Some((vid, verse_text)) = line.split_once('\t') else {
            malformed += 1;
            continue;
        };
        let Ok(vid) = vid.parse::<VerseId>() else {
            malformed += 1;
            continue;
        };
        if !translation.insert(vid, verse_text) {
            duplicates += 1;
        }
    }
    Ok(ParsedFile {
        translation,
        lines,
        malformed,
        duplicates,
    })
}

/// Splits a corpus file name into (translation id, language code).
pub fn parse_corpus_file_name(path: &Path) -> Option<(String, String)> {
    if path.extension()? != "txt" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let (iso, rest) = stem.split_once('_')?;
    (valid_iso3(iso) && !rest.is_empty()).then(|| (stem.to_string(), iso.to_string()))
}

/// Loads every `{iso3}_{name}.txt` file under `root`. Malformed lines and
/// duplicate verses are counted and reported; an empty directory is an error.
pub fn load_corpus(root: &Path, iso_metadata: Option<&Path>) -> Result<LoadedCorpus> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut report = LoadReport::default();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if !path.is_file() {
            continue;
        }
        if parse_corpus_file_name(&path).is_some() {
            files.push(path);
        } else if path.extension().is_some_and(|e| e == "txt") {
            report
                .skipped_files
                .push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    files.sort();
    report.skipped_files.sort();
    for f in &report.skipped_files {
        warn!("skipping {f}: name does not match {{iso3}}_{{name}}.txt");
    }
    if files.is_empty() {
        return Err(Error::Data(format!(
            "no corpus files found in {}",
            root.display()
        )));
    }

    let parsed: Vec<ParsedFile> = files
        .par_iter()
        .map(|path| {
            let (id, iso) = parse_corpus_file_name(path).expect("filtered above");
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_translation(&id, &iso, &text)
        })
        .collect::<Result<_>>()?;

    let mut translations = Vec::with_capacity(parsed.len());
    for p in parsed {
        report.files += 1;
        report.lines += p.lines;
        let id = p.translation.id().to_string();
        if p.malformed > 0 {
            warn!("{id}: {} malformed line(s) skipped", p.malformed);
            report.malformed.insert(id.clone(), p.malformed);
        }
        if p.duplicates > 0 {
            warn!("{id}: {} duplicate verse id(s), kept first", p.duplicates);
            report.duplicates.insert(id, p.duplicates);
        }
        translations.push(p.translation);
    }
    let families = iso_metadata.map(FamilyLabels::load).transpose()?;
    Ok(LoadedCorpus {
        corpus: MultiCorpus::new(translations)?,
        report,
        families,
    })
}

/// Writes translations in the on-disk corpus format.
pub fn write_corpus(dir: &Path, translations: &[Translation]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in translations {
        let path = dir.join(format!("{}.txt", t.id()));
        let mut body = String::new();
        for (v, text) in t.verses() {
            body.push_str(&format!("{v}\t{text}\n"));
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

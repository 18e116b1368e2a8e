//! Mean reciprocal rank of mined n-grams against gold marker strings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngrammine::MiningResult;

/// How a mined gram is matched against a gold string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Containment {
    /// Either string contains the other.
    #[default]
    Either,
    GoldInGram,
    GramInGold,
    Exact,
}

impl Containment {
    pub fn matches(self, gram: &str, gold: &str) -> bool {
        match self {
            Containment::Either => gram.contains(gold) || gold.contains(gram),
            Containment::GoldInGram => gram.contains(gold),
            Containment::GramInGold => gold.contains(gram),
            Containment::Exact => gram == gold,
        }
    }
}

impl std::str::FromStr for Containment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "either" => Ok(Containment::Either),
            "gold-in-gram" => Ok(Containment::GoldInGram),
            "gram-in-gold" => Ok(Containment::GramInGold),
            "exact" => Ok(Containment::Exact),
            _ => Err(Error::Argument(format!("unknown containment mode {s:?}"))),
        }
    }
}

/// Gold strings per `(translation, feature)`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GoldMarkers(pub BTreeMap<(String, String), BTreeSet<String>>);

impl GoldMarkers {
    pub fn insert(&mut self, translation: &str, feature: &str, golds: impl IntoIterator<Item = String>) {
        self.0
            .entry((translation.to_string(), feature.to_string()))
            .or_default()
            .extend(golds.into_iter().filter(|g| !g.is_empty()));
    }

    pub fn get(&self, translation: &str, feature: &str) -> Option<&BTreeSet<String>> {
        self.0
            .get(&(translation.to_string(), feature.to_string()))
            .filter(|g| !g.is_empty())
    }

    /// Parses `translation_id<TAB>feature<TAB>gold1,gold2` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = GoldMarkers::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Data(format!("gold file line {}: expected 3 fields", n + 1)));
            }
            let golds: Vec<String> = fields[2]
                .split(',')
                .map(|g| g.trim().to_string())
                .filter(|g| !g.is_empty())
                .collect();
            if golds.is_empty() {
                return Err(Error::Data(format!("gold file line {}: no gold strings", n + 1)));
            }
            out.insert(fields[0], fields[1], golds);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((t, f), golds) in &self.0 {
            let joined: Vec<&str> = golds.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{t}\t{f}\t{}", joined.join(","));
        }
        out
    }
}

/// `1 / rank` of the first gram matching any gold string, 0 without a match.
pub fn reciprocal_rank<'a>(grams: impl IntoIterator<Item = &'a str>, golds: &BTreeSet<String>, mode: Containment) -> f64 {
    grams
        .into_iter()
        .position(|g| golds.iter().any(|gold| mode.matches(g, gold)))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Table-shaped MRR scores: rows are translations, columns features plus
/// `all`, and an `all` row of column means.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MrrReport {
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
    /// Reciprocal rank per `(translation, feature)` and n.
    pub per_n: BTreeMap<String, BTreeMap<String, BTreeMap<usize, f64>>>,
    /// Mean over every scored `(translation, feature)`.
    pub aggregate: f64,
    /// `(translation, feature)` pairs skipped for lack of gold.
    pub excluded: Vec<(String, String)>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores mined lists keyed by `(translation, feature)`. Lists missing for
/// some n in `n_range` score 0 at that n.
pub fn mrr(
    results: &BTreeMap<(String, String), MiningResult>,
    gold: &GoldMarkers,
    n_range: std::ops::RangeInclusive<usize>,
    mode: Containment,
) -> Result<MrrReport> {
    if n_range.is_empty() {
        return Err(Error::Argument("empty n range".into()));
    }
    let mut report = MrrReport::default();
    let mut scores = Vec::new();
    for ((t, f), r) in results {
        let Some(golds) = gold.get(t, f) else {
            report.excluded.push((t.clone(), f.clone()));
            continue;
        };
        let mut per_n = BTreeMap::new();
        for n in n_range.clone() {
            let grams = r.by_n.get(&n).map(Vec::as_slice).unwrap_or(&[]);
            if grams.len() > 10 {
                return Err(Error::Argument(format!("{t}/{f}: list for n={n} longer than 10")));
            }
            per_n.insert(n, reciprocal_rank(grams.iter().map(|c| c.gram.as_str()), golds, mode));
        }
        let score = mean(per_n.values().copied()).unwrap_or(0.0);
        scores.push(score);
        report.rows.entry(t.clone()).or_default().insert(f.clone(), score);
        report.per_n.entry(t.clone()).or_default().insert(f.clone(), per_n);
    }
    let features: BTreeSet<String> = report.rows.values().flat_map(|r| r.keys().cloned()).collect();
    let mut all_row = BTreeMap::new();
    for f in &features {
        if let Some(m) = mean(report.rows.values().filter_map(|r| r.get(f).copied())) {
            all_row.insert(f.clone(), m);
        }
    }
    for row in report.rows.values_mut() {
        let m = mean(row.values().copied()).unwrap_or(0.0);
        row.insert("all".into(), m);
    }
    report.aggregate = mean(scores).unwrap_or(0.0);
    all_row.insert("all".into(), report.aggregate);
    report.rows.insert("all".into(), all_row);
    Ok(report)
}

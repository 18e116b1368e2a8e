//! Marker distances, dendrograms and family prediction.

pub mod newick;
pub mod upgma;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{FamilyLabels, MultiCorpus};
use crate::error::{Error, Result};
use crate::pivots::{token_presence_optional, PresenceMatrix, ScoredWord};
use crate::stats::{jsd, Distribution};

pub use newick::to_newick;
pub use upgma::{upgma, Dendrogram, Merge};

/// Symmetric matrix of distances in [0, 1] with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub d: Vec<Vec<f64>>,
    /// Language of each label, for family evaluation.
    pub groups: Vec<String>,
}

impl DistanceMatrix {
    /// Matrix whose labels are their own groups.
    pub fn new(labels: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self> {
        let groups = labels.clone();
        Self::with_groups(labels, groups, d)
    }

    pub fn with_groups(labels: Vec<String>, groups: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if groups.len() != n || d.len() != n || d.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("distance matrix shape mismatch".into()));
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != n {
            return Err(Error::Argument("duplicate labels in distance matrix".into()));
        }
        for i in 0..n {
            if d[i][i] != 0.0 {
                return Err(Error::Argument(format!("non-zero diagonal at {}", labels[i])));
            }
            for j in 0..i {
                if d[i][j] != d[j][i] || !(d[i][j] >= 0.0) {
                    return Err(Error::Argument(format!("bad entry at {},{}", labels[i], labels[j])));
                }
            }
        }
        Ok(DistanceMatrix { labels, d, groups })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.d[i][j])
    }

    /// Square TSV with a header row of labels.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            out.push('\t');
            out.push_str(&crate::tsv::escape_field(l));
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.d) {
            out.push_str(&crate::tsv::escape_field(l));
            for v in row {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise JSD between labelled distributions over a common support.
pub fn distance_matrix(labels: Vec<String>, groups: Vec<String>, dists: &[Distribution]) -> Result<DistanceMatrix> {
    let n = dists.len();
    if n < 2 {
        return Err(Error::Argument("need at least two distributions".into()));
    }
    if dists.iter().any(|d| d.len() != dists[0].len()) {
        return Err(Error::Argument("distributions differ in support".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs.par_iter().map(|&(i, j)| jsd(&dists[i], &dists[j])).collect::<Result<_>>()?;
    let mut d = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        d[i][j] = v;
        d[j][i] = v;
    }
    DistanceMatrix::with_groups(labels, groups, d)
}

/// Occurrence distribution of one presence column over the given rows.
pub fn marker_distribution(matrix: &PresenceMatrix, column: usize, rows: &[usize]) -> Result<Distribution> {
    let weights: Vec<f64> = rows
        .iter()
        .map(|&r| if matrix.is_present(r, column) { 1.0 } else { 0.0 })
        .collect();
    Distribution::normalize(&weights)
        .map_err(|_| Error::Data(format!("marker {} never occurs on the shared verses", matrix.labels[column])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerDistances {
    pub matrix: DistanceMatrix,
    /// Verses present in every compared translation.
    pub support: usize,
    pub dropped: Vec<String>,
}

/// Distances between the chosen presence columns over their shared verses.
/// Columns with no occurrence on that support are dropped, and the support
/// is recomputed until stable.
pub fn marker_distances(matrix: &PresenceMatrix, columns: &[usize]) -> Result<MarkerDistances> {
    let mut keep: Vec<usize> = columns.to_vec();
    let mut dropped = Vec::new();
    loop {
        let rows = matrix.shared_rows(&keep);
        if rows.is_empty() {
            return Err(Error::Data("compared markers share no verses".into()));
        }
        let (ok, zero): (Vec<usize>, Vec<usize>) = keep
            .iter()
            .partition(|&&c| rows.iter().any(|&r| matrix.is_present(r, c)));
        if zero.is_empty() {
            let dists = keep
                .iter()
                .map(|&c| marker_distribution(matrix, c, &rows))
                .collect::<Result<Vec<_>>>()?;
            let labels = keep.iter().map(|&c| matrix.labels[c].clone()).collect();
            let groups = keep.iter().map(|&c| matrix.languages[c].clone()).collect();
            return Ok(MarkerDistances {
                matrix: distance_matrix(labels, groups, &dists)?,
                support: rows.len(),
                dropped,
            });
        }
        for c in zero {
            warn!("dropping marker {}: no occurrence on the shared verses", matrix.labels[c]);
            dropped.push(matrix.labels[c].clone());
        }
        keep = ok;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageDistances {
    pub matrix: DistanceMatrix,
    /// Languages left out, with the reason.
    pub excluded: BTreeMap<String, String>,
}

/// Average over features of the JSD between two languages' top markers.
///
/// `top_markers` maps feature to language to that language's best word.
/// A language is kept when it has a marker for every feature and those
/// markers' translations share at least `min_shared_verses` selected verses.
/// Each pair-feature JSD is taken over the verses the two markers'
/// translations share; a marker with no occurrence there counts as
/// maximally distant.
pub fn language_distance(
    corpus: &MultiCorpus,
    top_markers: &BTreeMap<String, BTreeMap<String, ScoredWord>>,
    min_shared_verses: usize,
) -> Result<LanguageDistances> {
    if top_markers.is_empty() {
        return Err(Error::Argument("no features given".into()));
    }
    let mut excluded = BTreeMap::new();
    let all_langs: BTreeSet<&String> = top_markers.values().flat_map(|m| m.keys()).collect();
    let mut kept: Vec<String> = Vec::new();
    // language -> feature -> presence column
    let mut columns: BTreeMap<String, Vec<Vec<Option<bool>>>> = BTreeMap::new();
    for lang in all_langs {
        let words: Option<Vec<&ScoredWord>> = top_markers.values().map(|m| m.get(lang)).collect();
        let Some(words) = words else {
            excluded.insert(lang.clone(), "no top marker for every feature".into());
            continue;
        };
        let cols = words
            .iter()
            .map(|w| -> Result<Vec<Option<bool>>> {
                let t = corpus.require_translation(&w.translation)?;
                Ok(token_presence_optional(corpus, t, &w.surface))
            })
            .collect::<Result<Vec<_>>>()?;
        let shared = (0..corpus.selected_verses().len())
            .filter(|&r| cols.iter().all(|c| c[r].is_some()))
            .count();
        if shared < min_shared_verses {
            excluded.insert(lang.clone(), format!("only {shared} shared verses (< {min_shared_verses})"));
            continue;
        }
        kept.push(lang.clone());
        columns.insert(lang.clone(), cols);
    }
    if kept.len() < 2 {
        return Err(Error::Data(format!("only {} languages pass the filters", kept.len())));
    }
    let n = kept.len();
    let n_features = top_markers.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<f64> {
            let (a, b) = (&columns[&kept[i]], &columns[&kept[j]]);
            let mut total = 0.0;
            for f in 0..n_features {
                total += pair_feature_jsd(&a[f], &b[f])?;
            }
            Ok(total / n_features as f64)
        })
        .collect::<Result<_>>()?;
    let mut d = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(vals) {
        d[i][j] = v;
        d[j][i] = v;
    }
    Ok(LanguageDistances {
        matrix: DistanceMatrix::with_groups(kept.clone(), kept, d)?,
        excluded,
    })
}

fn pair_feature_jsd(a: &[Option<bool>], b: &[Option<bool>]) -> Result<f64> {
    let (mut wa, mut wb) = (Vec::new(), Vec::new());
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            wa.push(if *x { 1.0 } else { 0.0 });
            wb.push(if *y { 1.0 } else { 0.0 });
        }
    }
    match (Distribution::normalize(&wa), Distribution::normalize(&wb)) {
        (Ok(p), Ok(q)) => jsd(&p, &q),
        _ => Ok(1.0),
    }
}

/// Confusion counts and rates of "related iff distance < threshold" over
/// unordered pairs of family-labelled entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMetrics {
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tnr: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub pairs: usize,
    /// Fraction of pairs that share a family.
    pub base_rate: f64,
    pub languages: usize,
    pub families: usize,
    pub unlabeled: Vec<String>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate_family_prediction(dm: &DistanceMatrix, fams: &FamilyLabels, threshold: f64) -> Result<FamilyMetrics> {
    let mut labelled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, g) in dm.groups.iter().enumerate() {
        match fams.get(g) {
            Some(f) => labelled.push((i, f)),
            None => unlabeled.push(dm.labels[i].clone()),
        }
    }
    if labelled.len() < 2 {
        return Err(Error::Data(format!("only {} entries carry a family label", labelled.len())));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (x, &(i, fi)) in labelled.iter().enumerate() {
        for &(j, fj) in &labelled[x + 1..] {
            let predicted = dm.d[i][j] < threshold;
            match (predicted, fi == fj) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let pairs = tp + fp + tn + fn_;
    let languages: BTreeSet<&String> = labelled.iter().map(|&(i, _)| &dm.groups[i]).collect();
    let families: BTreeSet<&str> = labelled.iter().map(|&(_, f)| f).collect();
    Ok(FamilyMetrics {
        threshold,
        accuracy: ratio(tp + tn, pairs),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
        pairs,
        base_rate: ratio(tp + fn_, pairs),
        languages: languages.len(),
        families: families.len(),
        unlabeled,
    })
}

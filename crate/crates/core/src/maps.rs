//! Feature maps: pivots that split the marked verses evenly, and the verse
//! clusters formed by their presence signatures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Translation, VerseId};
use crate::error::{Error, Result};
use crate::pivots::{PivotSet, PresenceMatrix};
use crate::tsv::escape_field;

/// Which cluster is split next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// The largest current cluster.
    #[default]
    Largest,
    /// The larger half of the previous split, starting from the head's verses.
    HeadContainingChain,
}

impl std::str::FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "largest" => Ok(SplitPolicy::Largest),
            "head-containing-chain" => Ok(SplitPolicy::HeadContainingChain),
            _ => Err(Error::Argument(format!("unknown split policy {s:?}"))),
        }
    }
}

/// Distance of a column's presence rate on `rows` from one half.
pub fn split_score(matrix: &PresenceMatrix, rows: &[usize], column: usize) -> f64 {
    if rows.is_empty() {
        return 0.5;
    }
    let present = rows.iter().filter(|&&r| matrix.is_present(r, column)).count();
    (present as f64 / rows.len() as f64 - 0.5).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRound {
    pub cluster_size: usize,
    pub chosen: usize,
    pub score: f64,
    /// Score of every unused column on the split cluster.
    pub candidates: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSelection {
    /// Column indices, head first.
    pub columns: Vec<usize>,
    pub rounds: Vec<SplitRound>,
}

/// Picks `rounds` splitting columns after the head (column 0). Each round
/// splits one cluster on the unused column closest to an even split; ties
/// go to the higher association score, then the lower column.
pub fn select_splitting_columns(
    matrix: &PresenceMatrix,
    scores: &[f64],
    rounds: usize,
    policy: SplitPolicy,
) -> Result<SplitSelection> {
    if rounds == 0 {
        return Err(Error::Argument("rounds must be at least 1".into()));
    }
    if matrix.n_pivots() == 0 || scores.len() != matrix.n_pivots() {
        return Err(Error::Argument("scores must match the matrix columns".into()));
    }
    let head_rows: Vec<usize> = (0..matrix.n_verses()).filter(|&r| matrix.is_present(r, 0)).collect();
    let mut clusters: Vec<Vec<usize>> = vec![head_rows];
    let mut next = 0;
    let mut used = vec![false; matrix.n_pivots()];
    used[0] = true;
    let mut selection = SplitSelection {
        columns: vec![0],
        rounds: Vec::new(),
    };
    for round in 0..rounds {
        if used.iter().all(|u| *u) {
            warn!("only {} unused pivots for {rounds} rounds; stopping early", round);
            break;
        }
        if policy == SplitPolicy::Largest {
            next = (0..clusters.len())
                .max_by(|&a, &b| clusters[a].len().cmp(&clusters[b].len()).then(b.cmp(&a)))
                .expect("non-empty cluster list");
        }
        let rows = std::mem::take(&mut clusters[next]);
        let candidates: Vec<(usize, f64)> = (0..matrix.n_pivots())
            .filter(|&c| !used[c])
            .map(|c| (c, split_score(matrix, &rows, c)))
            .collect();
        let &(chosen, score) = candidates
            .iter()
            .min_by(|(ca, sa), (cb, sb)| {
                sa.total_cmp(sb)
                    .then_with(|| scores[*cb].total_cmp(&scores[*ca]))
                    .then(ca.cmp(cb))
            })
            .expect("at least one unused column");
        used[chosen] = true;
        let (with, without): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| matrix.is_present(r, chosen));
        selection.rounds.push(SplitRound {
            cluster_size: rows.len(),
            chosen,
            score,
            candidates,
        });
        selection.columns.push(chosen);
        let larger_with = with.len() >= without.len();
        clusters[next] = with;
        clusters.push(without);
        if policy == SplitPolicy::HeadContainingChain && !larger_with {
            next = clusters.len() - 1;
        }
    }
    Ok(selection)
}

/// [`select_splitting_columns`] on a pivot set whose members index the
/// matrix columns.
pub fn select_splitting_pivots(
    matrix: &PresenceMatrix,
    ps: &PivotSet,
    rounds: usize,
    policy: SplitPolicy,
) -> Result<SplitSelection> {
    if ps.members.len() != matrix.n_pivots() {
        return Err(Error::Argument("pivot set does not match the presence matrix".into()));
    }
    let scores: Vec<f64> = ps.members.iter().map(|p| p.score).collect();
    select_splitting_columns(matrix, &scores, rounds, policy)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureCluster {
    /// One `0`/`1` per selected column, in selection order.
    pub signature: String,
    pub verses: Vec<VerseId>,
}

impl SignatureCluster {
    pub fn size(&self) -> usize {
        self.verses.len()
    }
}

/// Groups the verses present in every selected column's translation by
/// their presence signature; largest first, then by signature.
pub fn signature_clusters(matrix: &PresenceMatrix, columns: &[usize]) -> Result<Vec<SignatureCluster>> {
    if columns.is_empty() {
        return Err(Error::Argument("no columns selected".into()));
    }
    let mut groups: BTreeMap<String, Vec<VerseId>> = BTreeMap::new();
    for r in matrix.shared_rows(columns) {
        let sig: String = columns
            .iter()
            .map(|&c| if matrix.is_present(r, c) { '1' } else { '0' })
            .collect();
        groups.entry(sig).or_default().push(matrix.verses[r]);
    }
    let mut out: Vec<SignatureCluster> = groups
        .into_iter()
        .map(|(signature, verses)| SignatureCluster { signature, verses })
        .collect();
    out.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.signature.cmp(&b.signature)));
    Ok(out)
}

/// `signature<TAB>size`.
pub fn clusters_tsv(clusters: &[SignatureCluster]) -> String {
    let mut out = String::from("signature\tsize\n");
    for c in clusters {
        let _ = writeln!(out, "{}\t{}", c.signature, c.size());
    }
    out
}

/// Share of verses whose planted label is their cluster's majority label.
/// Unlabelled verses are ignored.
pub fn purity(clusters: &[SignatureCluster], labels: &BTreeMap<VerseId, String>) -> f64 {
    let (mut majority, mut total) = (0usize, 0usize);
    for c in clusters {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &c.verses {
            if let Some(l) = labels.get(v) {
                *counts.entry(l).or_default() += 1;
                total += 1;
            }
        }
        majority += counts.values().max().copied().unwrap_or(0);
    }
    if total == 0 {
        0.0
    } else {
        majority as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectedVerse {
    pub verse: VerseId,
    /// `None` when the target lacks the verse.
    pub text: Option<String>,
}

pub fn project_cluster(cluster: &SignatureCluster, target: &Translation) -> Vec<ProjectedVerse> {
    cluster
        .verses
        .iter()
        .map(|&v| ProjectedVerse {
            verse: v,
            text: target.verse(v).map(str::to_string),
        })
        .collect()
}

/// `verse_id<TAB>text<TAB>missing`, with `missing` 1 for absent verses.
pub fn projection_tsv(rows: &[ProjectedVerse]) -> String {
    let mut out = String::from("verse_id\ttext\tmissing\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            r.verse,
            r.text.as_deref().map(escape_field).unwrap_or_default(),
            u8::from(r.text.is_none())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vid(i: usize) -> VerseId {
        VerseId::from_number(43_004_001 + i as u32).unwrap()
    }

    fn matrix(cols: Vec<Vec<bool>>) -> PresenceMatrix {
        let n = cols[0].len();
        PresenceMatrix {
            verses: (0..n).map(vid).collect(),
            labels: (0..cols.len()).map(|i| format!("l{i}_p")).collect(),
            languages: (0..cols.len()).map(|i| format!("l{i}")).collect(),
            columns: cols.into_iter().map(|c| c.into_iter().map(Some).collect()).collect(),
        }
    }

    #[test]
    fn even_split_wins() {
        let head = vec![true; 100];
        let half: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let third: Vec<bool> = (0..100).map(|i| i % 3 == 0).collect();
        let m = matrix(vec![head, third, half]);
        assert_eq!(split_score(&m, &(0..100).collect::<Vec<_>>(), 2), 0.0);
        let s = select_splitting_columns(&m, &[9.0, 5.0, 1.0], 1, SplitPolicy::Largest).unwrap();
        assert_eq!(s.columns, vec![0, 2]);
        assert_eq!(s.rounds[0].score, 0.0);
    }

    #[test]
    fn ties_go_to_higher_score() {
        let head = vec![true; 4];
        let a = vec![true, true, false, false];
        let b = vec![false, false, true, true];
        let m = matrix(vec![head, a, b]);
        let s = select_splitting_columns(&m, &[9.0, 1.0, 2.0], 1, SplitPolicy::Largest).unwrap();
        assert_eq!(s.columns, vec![0, 2]);
    }

    #[test]
    fn stops_when_out_of_pivots() {
        let m = matrix(vec![vec![true; 4], vec![true, false, true, false]]);
        let s = select_splitting_columns(&m, &[1.0, 1.0], 4, SplitPolicy::Largest).unwrap();
        assert_eq!(s.columns, vec![0, 1]);
    }

    #[test]
    fn signatures() {
        let m = matrix(vec![vec![true, true, false], vec![true, false, false]]);
        let c = signature_clusters(&m, &[0, 1]).unwrap();
        let sigs: Vec<(&str, usize)> = c.iter().map(|c| (c.signature.as_str(), c.size())).collect();
        assert_eq!(sigs, [("00", 1), ("10", 1), ("11", 1)]);
        let all = matrix(vec![vec![true; 3]; 5]);
        let c = signature_clusters(&all, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].signature, "11111");
        assert!(clusters_tsv(&c).ends_with("11111\t3\n"));
    }

    #[test]
    fn missing_verses_leave_the_partition() {
        let mut m = matrix(vec![vec![true, true, false], vec![true, false, false]]);
        m.columns[1][2] = None;
        let c = signature_clusters(&m, &[0, 1]).unwrap();
        assert_eq!(c.iter().map(SignatureCluster::size).sum::<usize>(), 2);
    }

    #[test]
    fn projection() {
        let mut t = Translation::new("crs_bible", "crs").unwrap();
        t.insert(vid(30), "Zot ti dir li.");
        let cluster = SignatureCluster {
            signature: "1".into(),
            verses: vec![vid(30), vid(31)],
        };
        let rows = project_cluster(&cluster, &t);
        assert_eq!(rows[0].text.as_deref(), Some("Zot ti dir li."));
        assert_eq!(rows[1].text, None);
        assert_eq!(
            projection_tsv(&rows),
            "verse_id\ttext\tmissing\n43004031\tZot ti dir li.\t0\n43004032\t\t1\n"
        );
        let empty = SignatureCluster {
            signature: "0".into(),
            verses: vec![],
        };
        assert!(project_cluster(&empty, &t).is_empty());
    }

    #[test]
    fn purity_counts_majorities() {
        let c = vec![
            SignatureCluster { signature: "1".into(), verses: vec![vid(0), vid(1), vid(2)] },
            SignatureCluster { signature: "0".into(), verses: vec![vid(3)] },
        ];
        let labels: BTreeMap<VerseId, String> =
            [(vid(0), "a"), (vid(1), "a"), (vid(2), "b"), (vid(3), "b")].into_iter().map(|(v, l)| (v, l.to_string())).collect();
        assert_eq!(purity(&c, &labels), 0.75);
    }
}

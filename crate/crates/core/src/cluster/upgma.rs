//! Average-linkage agglomerative clustering.

use serde::{Deserialize, Serialize};

use super::DistanceMatrix;
use crate::error::{Error, Result};

/// One agglomeration step. Node ids below `n` are leaves; merge `k` creates
/// node `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Half the cluster distance at merge time.
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.labels.len()
    }

    pub fn root(&self) -> usize {
        self.n_leaves() + self.merges.len() - 1
    }

    pub fn height(&self, node: usize) -> f64 {
        node.checked_sub(self.n_leaves()).map_or(0.0, |k| self.merges[k].height)
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        let k = node.checked_sub(self.n_leaves())?;
        let m = self.merges[k];
        Some((m.left, m.right))
    }

    /// Leaf indices under `node`, in tree order.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(x),
            }
        }
        out
    }

    /// Every node sits at least as high as its children.
    pub fn is_ultrametric(&self) -> bool {
        self.merges
            .iter()
            .all(|m| m.height >= self.height(m.left) && m.height >= self.height(m.right))
    }
}

/// Relative gap under which two cluster distances count as tied, so that
/// rounding in the averaged distances cannot override the label order.
const TIE_TOLERANCE: f64 = 1e-12;

/// Clusters `dm` by UPGMA. Distances between clusters are size-weighted
/// means of their members' distances. The closest pair merges first; equal
/// distances go to the pair whose (smallest leaf label, other smallest leaf
/// label) sorts first.
pub fn upgma(dm: &DistanceMatrix) -> Result<Dendrogram> {
    let n = dm.len();
    if n < 2 {
        return Err(Error::Argument("clustering needs at least two labels".into()));
    }
    // node id, size, smallest leaf label
    let mut active: Vec<(usize, usize, String)> = dm.labels.iter().enumerate().map(|(i, l)| (i, 1, l.clone())).collect();
    let mut dist: Vec<Vec<f64>> = dm.d.clone();
    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        let mut best: Option<(usize, usize)> = None;
        for i in 0..active.len() {
            for j in i + 1..active.len() {
                let better = match best {
                    None => true,
                    Some((bi, bj)) => {
                        let (d, bd) = (dist[i][j], dist[bi][bj]);
                        let eps = TIE_TOLERANCE * bd.abs().max(1.0);
                        d < bd - eps || (d <= bd + eps && pair_key(&active, i, j) < pair_key(&active, bi, bj))
                    }
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("at least two active clusters");
        let (si, sj) = (active[i].1, active[j].1);
        let d_ij = dist[i][j];
        let merged: Vec<f64> = (0..active.len())
            .map(|k| (si as f64 * dist[i][k] + sj as f64 * dist[j][k]) / (si + sj) as f64)
            .collect();
        let (left, right) = if active[i].2 <= active[j].2 { (i, j) } else { (j, i) };
        let label = active[left].2.clone();
        merges.push(Merge {
            left: active[left].0,
            right: active[right].0,
            height: d_ij / 2.0,
            size: si + sj,
        });
        // i < j: overwrite slot i with the merged cluster, drop slot j
        active[i] = (n + merges.len() - 1, si + sj, label);
        for k in 0..active.len() {
            dist[i][k] = merged[k];
            dist[k][i] = merged[k];
        }
        dist[i][i] = 0.0;
        active.remove(j);
        dist.remove(j);
        for row in &mut dist {
            row.remove(j);
        }
    }
    Ok(Dendrogram {
        labels: dm.labels.clone(),
        merges,
    })
}

fn pair_key(active: &[(usize, usize, String)], i: usize, j: usize) -> (&str, &str) {
    let (a, b) = (active[i].2.as_str(), active[j].2.as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

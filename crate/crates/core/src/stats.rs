//! Numeric kernel shared by every stage: the 2x2 chi-square association
//! score, the truncated Gaussian kernel used for positional profiles, and
//! base-2 Jensen-Shannon divergence.

use crate::error::{Error, Result};

/// Kernel values further than this many standard deviations from the
/// center are treated as zero.
pub const KERNEL_TRUNCATION: f64 = 4.0;

/// 2x2 table of counts.
///
/// `a` counts joint presence of feature and item, `b` feature without item,
/// `c` item without feature and `d` neither.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContingencyTable {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ContingencyTable {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        ContingencyTable { a, b, c, d }
    }

    /// Builds a table from integer counts.
    pub fn from_counts(a: u64, b: u64, c: u64, d: u64) -> Self {
        ContingencyTable::new(a as f64, b as f64, c as f64, d as f64)
    }

    /// Table for an item observed `joint` times together with a feature,
    /// given the feature total, the item total and the grand total.
    /// Negative cells produced by inconsistent totals are clamped to zero.
    pub fn from_margins(joint: u64, feature_total: u64, item_total: u64, grand_total: u64) -> Self {
        let a = joint;
        let b = feature_total.saturating_sub(a);
        let c = item_total.saturating_sub(a);
        let d = grand_total.saturating_sub(a + b + c);
        ContingencyTable::from_counts(a, b, c, d)
    }

    pub fn total(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    fn check(&self) -> Result<()> {
        if [self.a, self.b, self.c, self.d]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Argument(format!(
                "contingency cells must be finite and non-negative: {self:?}"
            )));
        }
        if self.total() <= 0.0 {
            return Err(Error::Argument("contingency table is empty".into()));
        }
        Ok(())
    }
}

/// Pearson chi-square with positive-association gating: tables where the
/// item is under-represented alongside the feature (`ad < bc`) score 0, as do
/// tables with an empty margin.
pub fn chi2(t: &ContingencyTable) -> Result<f64> {
    t.check()?;
    if t.a * t.d < t.b * t.c {
        return Ok(0.0);
    }
    Ok(pearson(t))
}

/// Pearson chi-square without the sign gate.
pub fn chi2_unsigned(t: &ContingencyTable) -> Result<f64> {
    t.check()?;
    Ok(pearson(t))
}

fn pearson(t: &ContingencyTable) -> f64 {
    let margins = (t.a + t.b) * (t.c + t.d) * (t.a + t.c) * (t.b + t.d);
    if margins == 0.0 {
        return 0.0;
    }
    let cross = t.a * t.d - t.b * t.c;
    t.total() * cross * cross / margins
}

/// Density of a zero-mean Gaussian with standard deviation `sigma` at `x`,
/// truncated to zero for `|x| > 4 sigma`.
pub fn gaussian_density(x: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Argument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(gaussian_unchecked(x, sigma))
}

#[inline]
pub(crate) fn gaussian_unchecked(x: f64, sigma: f64) -> f64 {
    if x.abs() > KERNEL_TRUNCATION * sigma {
        return 0.0;
    }
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Sum of the truncated kernel over all integer offsets.
pub fn truncated_kernel_mass(sigma: f64) -> Result<f64> {
    let radius = kernel_radius(sigma)?;
    Ok((-radius..=radius)
        .map(|x| gaussian_unchecked(x as f64, sigma))
        .sum())
}

/// Largest integer offset at which the truncated kernel is non-zero.
pub fn kernel_radius(sigma: f64) -> Result<i64> {
    gaussian_density(0.0, sigma)?;
    Ok((KERNEL_TRUNCATION * sigma).floor() as i64)
}

/// A probability vector over an indexed support.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Tolerance on the total mass.
    pub const MASS_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument("distribution weights must be non-negative".into()));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > Self::MASS_TOLERANCE {
            return Err(Error::Argument(format!(
                "distribution mass is {mass}, expected 1"
            )));
        }
        Ok(Distribution(weights))
    }

    /// Normalizes non-negative weights. Fails when all weights are zero.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument("distribution weights must be non-negative".into()));
        }
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            return Err(Error::Argument("cannot normalize an all-zero vector".into()));
        }
        Ok(Distribution(weights.iter().map(|w| w / mass).collect()))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Jensen-Shannon divergence with base-2 logarithms, in `[0, 1]`.
pub fn jsd(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Argument(format!(
            "support mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.weights().iter().zip(q.weights()) {
        if pi == qi {
            continue;
        }
        let m = 0.5 * (pi + qi);
        let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        // a single commutative addition keeps jsd(p, q) == jsd(q, p) bitwise
        total += term(pi) + term(qi);
    }
    Ok((0.5 * total).clamp(0.0, 1.0))
}

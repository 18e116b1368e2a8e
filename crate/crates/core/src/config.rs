//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aligner::AlignerConfig;
use crate::error::{Error, Result};
use crate::evaluation::Containment;
use crate::maps::SplitPolicy;
use crate::ngrammine::MiningConfig;
use crate::pivots::{ContingencyMode, PivotConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `{iso3}_{name}.txt` verse files.
    pub corpus: Option<PathBuf>,
    /// `feature<TAB>translation<TAB>forms` query file.
    pub queries: Option<PathBuf>,
    /// Language codes eligible as head pivot, one per line.
    pub allowlist: Option<PathBuf>,
    /// `translation<TAB>feature<TAB>golds` file for MRR.
    pub gold: Option<PathBuf>,
    /// `iso3<TAB>family` file.
    pub families: Option<PathBuf>,
    /// Root under which each run gets its own directory.
    pub output: Option<PathBuf>,
    /// Alignment cache directory; defaults to `<output>/cache/align`.
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Width of the positional Gaussian.
    pub sigma: f64,
    /// Half-width of the n-gram windows.
    pub w: usize,
    /// Pivot set size, head included.
    pub k: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// n-grams kept per (translation, n).
    pub top: usize,
    pub em_iterations: usize,
    pub lambda: f64,
    pub p0: f64,
    /// Number of best-covered verses analysed.
    pub coverage_target: usize,
    /// Verse floor for the language-level distance.
    pub min_shared_verses: usize,
    /// Distance below which two languages are predicted related.
    pub jsd_threshold: f64,
    /// Minimum frequency of a pivot candidate.
    pub min_count: u64,
    pub contingency: ContingencyMode,
    pub map_rounds: usize,
    pub split_policy: SplitPolicy,
    pub containment: Containment,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            sigma: 6.0,
            w: 20,
            k: 100,
            n_min: 2,
            n_max: 6,
            top: 10,
            em_iterations: 5,
            lambda: 4.0,
            p0: 0.08,
            coverage_target: 7958,
            min_shared_verses: 7000,
            jsd_threshold: 0.5,
            min_count: 10,
            contingency: ContingencyMode::Links,
            map_rounds: 4,
            split_policy: SplitPolicy::Largest,
            containment: Containment::Either,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.aligner().validate()?;
        self.mining().validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.coverage_target == 0 {
            return Err(Error::Config("coverage_target must be positive".into()));
        }
        if !(self.jsd_threshold.is_finite() && self.jsd_threshold >= 0.0) {
            return Err(Error::Config("jsd_threshold must be a non-negative number".into()));
        }
        if self.map_rounds == 0 {
            return Err(Error::Config("map_rounds must be at least 1".into()));
        }
        Ok(())
    }

    /// Hash of the analysis settings and input paths; the output location
    /// is left out so that relocated runs hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.output = None;
        c.paths.cache = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn aligner(&self) -> AlignerConfig {
        AlignerConfig {
            em_iterations: self.em_iterations,
            lambda: self.lambda,
            p0: self.p0,
        }
    }

    pub fn pivots(&self) -> PivotConfig {
        PivotConfig {
            min_count: self.min_count,
            mode: self.contingency,
        }
    }

    pub fn mining(&self) -> MiningConfig {
        MiningConfig {
            sigma: self.sigma,
            window: self.w,
            n_min: self.n_min,
            n_max: self.n_max,
            top: self.top,
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.paths.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths
            .cache
            .clone()
            .unwrap_or_else(|| self.output_root().join("cache").join("align"))
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.queries,
            &mut self.allowlist,
            &mut self.gold,
            &mut self.families,
            &mut self.output,
            &mut self.cache,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

//! Command-line front end: argument parsing, stage orchestration and the
//! artifact layout of a run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::aligner::{AlignCache, AlignerConfig};
use crate::cluster::{evaluate_family_prediction, language_distance, marker_distances, to_newick, upgma, FamilyMetrics};
use crate::config::RunConfig;
use crate::corpus::{load_corpus, FamilyLabels, LoadReport, MultiCorpus};
use crate::evaluation::{mrr, GoldMarkers};
use crate::error::{Error, Result};
use crate::manifest::{sha256_hex, RunDir};
use crate::maps::{clusters_tsv, project_cluster, projection_tsv, select_splitting_pivots, signature_clusters, SignatureCluster};
use crate::ngrammine::{mine_all, MiningResult};
use crate::pivots::{
    expand_pivots, find_head_pivot, parse_allowlist, pivot_presence_matrix, token_presence, Expansion, HeadSearch, Pivot,
    PivotConfig, PresenceMatrix, Query, ScoredWord, SearchContext,
};
use crate::synth::{write_synth, SynthSpec};
use crate::tsv::escape_field;

#[derive(Debug, Parser)]
#[command(name = "pivotmine", version, about = "Mine feature markers across a verse-aligned multilingual corpus")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set k=10` or `--set paths.corpus=data`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output root; the run directory is created below it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Name of the run directory (default: command plus a config digest).
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct FeatureArg {
    /// Feature name as listed in the query file.
    #[arg(long)]
    pub feature: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Tense,
    Family,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "tense")]
    pub preset: Preset,
    /// Full generator spec (TOML); overrides the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 3000)]
    pub verses: usize,
    /// Particle-marking languages, query language included.
    #[arg(long, default_value_t = 16)]
    pub particle: usize,
    #[arg(long, default_value_t = 4)]
    pub suffix: usize,
    #[arg(long, default_value_t = 4)]
    pub unmarked: usize,
    #[arg(long, default_value_t = 4)]
    pub families: usize,
    #[arg(long, default_value_t = 5)]
    pub per_family: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Load the corpus and report coverage and the verse selection.
    Ingest,
    /// Write a synthetic corpus with planted markers.
    Synth(SynthArgs),
    /// Find the head pivot of a feature.
    HeadPivot(FeatureArg),
    /// Expand the head pivot to the pivot set.
    ExpandPivots {
        #[command(flatten)]
        feature: FeatureArg,
        /// Use `translation:surface` as head instead of searching.
        #[arg(long)]
        head: Option<String>,
    },
    /// Mine character n-grams around the pivot positions.
    MineNgrams {
        #[command(flatten)]
        feature: FeatureArg,
        /// Restrict to these translations (default: all).
        #[arg(long)]
        translation: Vec<String>,
    },
    /// Distance matrix and tree over a feature's pivot markers.
    ClusterMarkers(FeatureArg),
    /// Language distance averaged over all query features.
    ClusterLanguages,
    /// Select splitting pivots and write verse signature clusters.
    Map(FeatureArg),
    /// Render one signature cluster in a target translation.
    Project {
        #[command(flatten)]
        feature: FeatureArg,
        #[arg(long)]
        signature: String,
        #[arg(long)]
        target: String,
    },
    /// Mean reciprocal rank of mined n-grams against the gold file.
    EvalMrr {
        /// Features to score (default: all in the query file).
        #[arg(long)]
        feature: Vec<String>,
    },
    /// Family prediction from marker and language distances.
    EvalFamily,
    /// Every stage for one feature.
    Pipeline(FeatureArg),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth(_) => "synth",
            Command::HeadPivot(_) => "head-pivot",
            Command::ExpandPivots { .. } => "expand-pivots",
            Command::MineNgrams { .. } => "mine-ngrams",
            Command::ClusterMarkers(_) => "cluster-markers",
            Command::ClusterLanguages => "cluster-languages",
            Command::Map(_) => "map",
            Command::Project { .. } => "project",
            Command::EvalMrr { .. } => "eval-mrr",
            Command::EvalFamily => "eval-family",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

/// Applies `key=value` overrides; values parse as TOML and fall back to
/// plain strings.
pub fn apply_overrides(cfg: RunConfig, overrides: &[String]) -> Result<RunConfig> {
    if overrides.is_empty() {
        return Ok(cfg);
    }
    let mut doc: toml::Table = toml::from_str(&cfg.to_toml()).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("override {o:?} is not KEY=VALUE")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut table = &mut doc;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for p in &parts[..parts.len() - 1] {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
    }
    RunConfig::parse(&toml::to_string(&doc).expect("table serializes"))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = apply_overrides(cfg, &cli.overrides)?;
    if let Some(out) = &cli.out {
        cfg.paths.output = Some(out.clone());
    }
    Ok(cfg)
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is not set")))
}

/// Loaded inputs plus per-feature pivot searches, computed once.
pub struct Session {
    pub cfg: RunConfig,
    pub corpus: MultiCorpus,
    pub report: LoadReport,
    aligner: AlignerConfig,
    pivots: PivotConfig,
    cache: AlignCache,
    heads: BTreeMap<String, HeadSearch>,
    expansions: BTreeMap<String, (Option<HeadSearch>, Expansion)>,
}

impl Session {
    pub fn open(cfg: RunConfig, run: &mut RunDir) -> Result<Self> {
        let root = require(&cfg.paths.corpus, "corpus")?.to_path_buf();
        run.record_input(&root)?;
        let loaded = load_corpus(&root, None)?;
        let selected = loaded.corpus.select_covered_verses(cfg.coverage_target)?;
        let corpus = loaded.corpus.with_selection(selected)?;
        info!(
            "{} translations, {} verses selected",
            corpus.translations().len(),
            corpus.selected_verses().len()
        );
        Ok(Session {
            aligner: cfg.aligner(),
            pivots: cfg.pivots(),
            cache: AlignCache::new(cfg.cache_dir()),
            corpus,
            report: loaded.report,
            cfg,
            heads: BTreeMap::new(),
            expansions: BTreeMap::new(),
        })
    }

    fn ctx(&self) -> SearchContext<'_> {
        SearchContext {
            aligner: &self.aligner,
            pivots: &self.pivots,
            cache: Some(&self.cache),
        }
    }

    pub fn queries(&self, run: &mut RunDir) -> Result<Vec<Query>> {
        let path = require(&self.cfg.paths.queries, "queries")?;
        run.record_input(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let qs = Query::parse_file(&text)?;
        if qs.is_empty() {
            return Err(Error::Data(format!("{}: no queries", path.display())));
        }
        Ok(qs)
    }

    pub fn query(&self, run: &mut RunDir, feature: &str) -> Result<Query> {
        self.queries(run)?
            .into_iter()
            .find(|q| q.feature == feature)
            .ok_or_else(|| Error::Argument(format!("feature {feature:?} is not in the query file")))
    }

    fn allowlist(&self, run: &mut RunDir) -> Result<BTreeSet<String>> {
        let path = require(&self.cfg.paths.allowlist, "allowlist")?;
        run.record_input(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_allowlist(&text)
    }

    fn families(&self, run: &mut RunDir) -> Result<Option<FamilyLabels>> {
        match &self.cfg.paths.families {
            Some(p) => {
                run.record_input(p)?;
                FamilyLabels::load(p).map(Some)
            }
            None => Ok(None),
        }
    }

    pub fn head(&mut self, run: &mut RunDir, feature: &str) -> Result<HeadSearch> {
        if let Some(hs) = self.heads.get(feature) {
            return Ok(hs.clone());
        }
        let q = self.query(run, feature)?;
        let allow = self.allowlist(run)?;
        let hs = run.timed(&format!("head-pivot:{feature}"), |_| find_head_pivot(&self.corpus, &q, &allow, self.ctx()))?;
        self.heads.insert(feature.to_string(), hs.clone());
        Ok(hs)
    }

    fn head_from_spec(&self, spec: &str) -> Result<Pivot> {
        let (tid, surface) = spec
            .split_once(':')
            .ok_or_else(|| Error::Argument(format!("head {spec:?} is not translation:surface")))?;
        let t = self.corpus.require_translation(tid)?;
        let surface = self.corpus.tokenizer().policy(tid).normalize(surface);
        Ok(Pivot {
            language: t.iso3().to_string(),
            translation: tid.to_string(),
            presence: token_presence(&self.corpus, t, &surface),
            surface,
            score: 0.0,
        })
    }

    /// Head search and expansion for `feature`, memoized.
    pub fn expansion(&mut self, run: &mut RunDir, feature: &str, head: Option<&str>) -> Result<&(Option<HeadSearch>, Expansion)> {
        if !self.expansions.contains_key(feature) {
            let (hs, pivot) = match head {
                Some(spec) => (None, self.head_from_spec(spec)?),
                None => {
                    let hs = self.head(run, feature)?;
                    let p = hs.head.clone();
                    (Some(hs), p)
                }
            };
            let k = self.cfg.k;
            let exp = run.timed(&format!("expand-pivots:{feature}"), |_| {
                expand_pivots(&self.corpus, &pivot, k, self.ctx())
            })?;
            self.expansions.insert(feature.to_string(), (hs, exp));
        }
        Ok(&self.expansions[feature])
    }

    pub fn presence(&mut self, run: &mut RunDir, feature: &str) -> Result<(Expansion, PresenceMatrix)> {
        let exp = self.expansion(run, feature, None)?.1.clone();
        let m = pivot_presence_matrix(&self.corpus, &exp.set)?;
        Ok((exp, m))
    }

    pub fn mine(&mut self, run: &mut RunDir, feature: &str, only: &[String]) -> Result<Vec<MiningResult>> {
        let exp = self.expansion(run, feature, None)?.1.clone();
        let cfg = self.cfg.mining();
        let results = run.timed(&format!("mine-ngrams:{feature}"), |_| mine_all(&self.corpus, &exp.set, &cfg))?;
        for t in only {
            self.corpus.require_translation(t)?;
        }
        Ok(results
            .into_iter()
            .filter(|r| only.is_empty() || only.contains(&r.translation))
            .collect())
    }
}

pub fn ranking_tsv(words: &[ScoredWord], allow: Option<&BTreeSet<String>>) -> String {
    let mut out = String::from("rank\tiso3\ttranslation\tsurface\tchi2\tjoint\tfrequency");
    if allow.is_some() {
        out.push_str("\tallowlisted");
    }
    out.push('\n');
    for (i, w) in words.iter().enumerate() {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{}\t{}",
            i + 1,
            w.iso3,
            escape_field(&w.translation),
            escape_field(&w.surface),
            w.score,
            w.joint,
            w.frequency
        );
        if let Some(a) = allow {
            let _ = write!(out, "\t{}", u8::from(a.contains(&w.iso3)));
        }
        out.push('\n');
    }
    out
}

pub fn presence_tsv(m: &PresenceMatrix) -> String {
    let mut out = String::from("verse_id");
    for l in &m.labels {
        out.push('\t');
        out.push_str(&escape_field(l));
    }
    out.push('\n');
    for (r, v) in m.verses.iter().enumerate() {
        let _ = write!(out, "{v}");
        for c in 0..m.n_pivots() {
            out.push_str(match m.get(r, c) {
                Some(true) => "\t1",
                Some(false) => "\t0",
                None => "\tNA",
            });
        }
        out.push('\n');
    }
    out
}

fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

const RANKING_ROWS: usize = 1000;

fn stage_head(s: &mut Session, run: &mut RunDir, feature: &str) -> Result<()> {
    let hs = s.head(run, feature)?;
    let allow = s.allowlist(run)?;
    let f = safe_name(feature);
    let head_row = ranking_tsv(
        &[ScoredWord {
            iso3: hs.head.language.clone(),
            translation: hs.head.translation.clone(),
            surface: hs.head.surface.clone(),
            score: hs.head.score,
            joint: 0,
            frequency: hs.head.occurrences() as u64,
        }],
        None,
    );
    run.write(&format!("head/{f}.tsv"), head_row)?;
    let top = &hs.ranking[..hs.ranking.len().min(RANKING_ROWS)];
    run.write(&format!("head/{f}.ranking.tsv"), ranking_tsv(top, Some(&allow)))?;
    Ok(())
}

fn stage_expand(s: &mut Session, run: &mut RunDir, feature: &str, head: Option<&str>) -> Result<()> {
    let (_, exp) = s.expansion(run, feature, head)?.clone();
    let f = safe_name(feature);
    run.write(&format!("pivots/{f}.tsv"), exp.set.to_tsv())?;
    let top = &exp.ranking[..exp.ranking.len().min(RANKING_ROWS)];
    run.write(&format!("pivots/{f}.ranking.tsv"), ranking_tsv(top, None))?;
    let m = pivot_presence_matrix(&s.corpus, &exp.set)?;
    run.write(&format!("pivots/{f}.presence.tsv"), presence_tsv(&m))?;
    Ok(())
}

fn stage_mine(s: &mut Session, run: &mut RunDir, feature: &str, only: &[String]) -> Result<Vec<MiningResult>> {
    let results = s.mine(run, feature, only)?;
    let f = safe_name(feature);
    let mut summary = String::from("translation\tiso3\tverses\tpivot_verses\toverlapping_windows\ttop_gram\ttop_chi2\n");
    for r in &results {
        run.write(&format!("ngrams/{f}/{}.tsv", safe_name(&r.translation)), r.to_tsv())?;
        let best = r.merged().first().map(|c| (c.gram.clone(), c.chi2));
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
            escape_field(&r.translation),
            r.iso3,
            r.verses,
            r.pivot_verses,
            r.overlapping_windows,
            best.as_ref().map(|(g, _)| crate::tsv::escape_gram(g)).unwrap_or_default(),
            best.map_or(0.0, |(_, c)| c)
        );
    }
    run.write(&format!("ngrams/{f}/summary.tsv"), summary)?;
    Ok(results)
}

#[derive(serde::Serialize)]
struct MarkerSummary<'a> {
    feature: &'a str,
    markers: usize,
    shared_verses: usize,
    dropped: &'a [String],
}

fn stage_cluster_markers(s: &mut Session, run: &mut RunDir, feature: &str, strict: bool) -> Result<Option<FamilyMetrics>> {
    let (_, m) = s.presence(run, feature)?;
    let cols: Vec<usize> = (0..m.n_pivots()).collect();
    let md = run.timed(&format!("cluster-markers:{feature}"), |_| marker_distances(&m, &cols))?;
    let f = safe_name(feature);
    run.write(&format!("markers/{f}.distance.tsv"), md.matrix.to_tsv())?;
    run.write(&format!("markers/{f}.newick"), to_newick(&upgma(&md.matrix)?) + "\n")?;
    run.write_json(
        &format!("markers/{f}.json"),
        &MarkerSummary {
            feature,
            markers: md.matrix.len(),
            shared_verses: md.support,
            dropped: &md.dropped,
        },
    )?;
    let Some(fams) = s.families(run)? else {
        return Ok(None);
    };
    let metrics = match evaluate_family_prediction(&md.matrix, &fams, s.cfg.jsd_threshold) {
        Ok(m) => m,
        Err(e) if !strict => {
            warn!("skipping family evaluation for {feature}: {e}");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    run.write_json(&format!("markers/{f}.family.json"), &metrics)?;
    Ok(Some(metrics))
}

fn stage_cluster_languages(s: &mut Session, run: &mut RunDir) -> Result<Option<FamilyMetrics>> {
    let features: Vec<String> = s.queries(run)?.into_iter().map(|q| q.feature).collect();
    let mut top: BTreeMap<String, BTreeMap<String, ScoredWord>> = BTreeMap::new();
    for f in &features {
        let exp = &s.expansion(run, f, None)?.1;
        top.insert(f.clone(), exp.top_markers());
    }
    let min_shared = s.cfg.min_shared_verses;
    let ld = run.timed("cluster-languages", |_| language_distance(&s.corpus, &top, min_shared))?;
    run.write("languages/distance.tsv", ld.matrix.to_tsv())?;
    run.write("languages/tree.newick", to_newick(&upgma(&ld.matrix)?) + "\n")?;
    let mut excluded = String::from("iso3\treason\n");
    for (l, why) in &ld.excluded {
        let _ = writeln!(excluded, "{l}\t{}", escape_field(why));
    }
    run.write("languages/excluded.tsv", excluded)?;
    let mut markers = String::from("feature\tiso3\ttranslation\tsurface\tchi2\n");
    for (f, per_lang) in &top {
        for w in per_lang.values() {
            let _ = writeln!(
                markers,
                "{}\t{}\t{}\t{}\t{:.6}",
                escape_field(f),
                w.iso3,
                escape_field(&w.translation),
                escape_field(&w.surface),
                w.score
            );
        }
    }
    run.write("languages/top_markers.tsv", markers)?;
    let Some(fams) = s.families(run)? else {
        return Ok(None);
    };
    let metrics = evaluate_family_prediction(&ld.matrix, &fams, s.cfg.jsd_threshold)?;
    run.write_json("languages/family.json", &metrics)?;
    Ok(Some(metrics))
}

fn map_clusters(s: &mut Session, run: &mut RunDir, feature: &str) -> Result<(Expansion, Vec<usize>, Vec<SignatureCluster>, String)> {
    let (exp, m) = s.presence(run, feature)?;
    let sel = select_splitting_pivots(&m, &exp.set, s.cfg.map_rounds, s.cfg.split_policy)?;
    let clusters = signature_clusters(&m, &sel.columns)?;
    let mut splitters = String::from("round\tiso3\ttranslation\tsurface\tcluster_size\tsplit_score\n");
    let head = &exp.set.members[0];
    let _ = writeln!(
        splitters,
        "0\t{}\t{}\t{}\t{}\t",
        head.language,
        escape_field(&head.translation),
        escape_field(&head.surface),
        head.occurrences()
    );
    for (i, r) in sel.rounds.iter().enumerate() {
        let p = &exp.set.members[r.chosen];
        let _ = writeln!(
            splitters,
            "{}\t{}\t{}\t{}\t{}\t{:.6}",
            i + 1,
            p.language,
            escape_field(&p.translation),
            escape_field(&p.surface),
            r.cluster_size,
            r.score
        );
    }
    Ok((exp, sel.columns, clusters, splitters))
}

fn stage_map(s: &mut Session, run: &mut RunDir, feature: &str) -> Result<()> {
    let (_, _, clusters, splitters) = map_clusters(s, run, feature)?;
    let f = safe_name(feature);
    run.write(&format!("map/{f}.splitters.tsv"), splitters)?;
    run.write(&format!("map/{f}.clusters.tsv"), clusters_tsv(&clusters))?;
    for c in &clusters {
        let body: String = c.verses.iter().map(|v| format!("{v}\n")).collect();
        run.write(&format!("map/{f}/{}.txt", c.signature), body)?;
    }
    Ok(())
}

fn stage_project(s: &mut Session, run: &mut RunDir, feature: &str, signature: &str, target: &str) -> Result<()> {
    let (_, _, clusters, _) = map_clusters(s, run, feature)?;
    let t = s.corpus.require_translation(target)?;
    let cluster = clusters
        .iter()
        .find(|c| c.signature == signature)
        .cloned()
        .unwrap_or(SignatureCluster {
            signature: signature.to_string(),
            verses: Vec::new(),
        });
    let rows = project_cluster(&cluster, t);
    run.write(
        &format!("project/{}.{}.{}.tsv", safe_name(feature), safe_name(signature), safe_name(target)),
        projection_tsv(&rows),
    )?;
    Ok(())
}

fn stage_mrr(s: &mut Session, run: &mut RunDir, features: &[String], rel: &str) -> Result<f64> {
    let path = require(&s.cfg.paths.gold, "gold")?.to_path_buf();
    run.record_input(&path)?;
    let gold = GoldMarkers::load(&path)?;
    let mut results = BTreeMap::new();
    for f in features {
        for r in s.mine(run, f, &[])? {
            results.insert((r.translation.clone(), f.clone()), r);
        }
    }
    let report = mrr(&results, &gold, s.cfg.n_min..=s.cfg.n_max, s.cfg.containment)?;
    run.write_json(rel, &report)?;
    Ok(report.aggregate)
}

#[derive(serde::Serialize)]
struct FamilyReport {
    features: BTreeMap<String, FamilyMetrics>,
    languages: Option<FamilyMetrics>,
}

fn stage_eval_family(s: &mut Session, run: &mut RunDir) -> Result<()> {
    if s.cfg.paths.families.is_none() {
        return Err(Error::Config("paths.families is not set".into()));
    }
    let features: Vec<String> = s.queries(run)?.into_iter().map(|q| q.feature).collect();
    let mut report = FamilyReport {
        features: BTreeMap::new(),
        languages: None,
    };
    for f in &features {
        if let Some(m) = stage_cluster_markers(s, run, f, true)? {
            report.features.insert(f.clone(), m);
        }
    }
    report.languages = stage_cluster_languages(s, run)?;
    run.write_json("eval/family.json", &report)?;
    Ok(())
}

fn synth_spec(args: &SynthArgs, seed: u64) -> Result<SynthSpec> {
    let spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => match args.preset {
            Preset::Tense => SynthSpec::tense_benchmark(args.particle, args.suffix, args.unmarked, args.verses, seed),
            Preset::Family => SynthSpec::family_benchmark(args.families, args.per_family, args.verses, seed),
        },
    };
    spec.validate()?;
    Ok(spec)
}

fn default_run_id(cmd: &Command, cfg: &RunConfig) -> String {
    let digest = sha256_hex(format!("{}\n{:?}", cfg.hash(), cmd).as_bytes());
    format!("{}-{}", cmd.name(), &digest[..12])
}

/// Runs one command and returns its run directory.
pub fn run(cli: Cli) -> Result<PathBuf> {
    let cfg = resolve_config(&cli)?;
    let run_id = cli.run_id.clone().unwrap_or_else(|| default_run_id(&cli.command, &cfg));
    let mut run = RunDir::create(&cfg.output_root(), &run_id)?;
    let mut snapshot = cfg.clone();
    snapshot.paths.output = None;
    snapshot.paths.cache = None;
    run.write("config.toml", snapshot.to_toml())?;
    let config_hash = cfg.hash();
    let cmd = cli.command.clone();

    if let Command::Synth(args) = &cmd {
        let spec = synth_spec(args, cfg.seed)?;
        let root = run.root().to_path_buf();
        run.timed("synth", |_| write_synth(&root, &spec))?;
        run.write("spec.toml", toml::to_string(&spec).expect("spec serializes"))?;
        for name in ["corpus", "ground_truth.json", "families.tsv", "allowlist.txt", "queries.tsv", "gold.tsv"] {
            run.adopt(name)?;
        }
        let dir = run.root().to_path_buf();
        run.finish(cmd.name(), &run_id, &config_hash)?;
        return Ok(dir);
    }

    let mut s = run.timed("load", |run| Session::open(cfg, run))?;
    match &cmd {
        Command::Synth(_) => unreachable!(),
        Command::Ingest => {
            let mut cov = Vec::new();
            s.corpus
                .write_coverage_report(&mut cov)
                .map_err(|e| Error::io(run.root().join("coverage.tsv"), e))?;
            run.write("coverage.tsv", cov)?;
            let sel: String = s.corpus.selected_verses().iter().map(|v| format!("{v}\n")).collect();
            run.write("selected_verses.txt", sel)?;
            run.write_json("load_report.json", &s.report)?;
        }
        Command::HeadPivot(f) => stage_head(&mut s, &mut run, &f.feature)?,
        Command::ExpandPivots { feature, head } => stage_expand(&mut s, &mut run, &feature.feature, head.as_deref())?,
        Command::MineNgrams { feature, translation } => {
            stage_mine(&mut s, &mut run, &feature.feature, translation)?;
        }
        Command::ClusterMarkers(f) => {
            stage_cluster_markers(&mut s, &mut run, &f.feature, true)?;
        }
        Command::ClusterLanguages => {
            stage_cluster_languages(&mut s, &mut run)?;
        }
        Command::Map(f) => stage_map(&mut s, &mut run, &f.feature)?,
        Command::Project {
            feature,
            signature,
            target,
        } => stage_project(&mut s, &mut run, &feature.feature, signature, target)?,
        Command::EvalMrr { feature } => {
            let features = if feature.is_empty() {
                s.queries(&mut run)?.into_iter().map(|q| q.feature).collect()
            } else {
                feature.clone()
            };
            stage_mrr(&mut s, &mut run, &features, "eval/mrr.json")?;
        }
        Command::EvalFamily => stage_eval_family(&mut s, &mut run)?,
        Command::Pipeline(f) => {
            let f = f.feature.as_str();
            s.query(&mut run, f)?;
            stage_head(&mut s, &mut run, f)?;
            stage_expand(&mut s, &mut run, f, None)?;
            stage_mine(&mut s, &mut run, f, &[])?;
            stage_cluster_markers(&mut s, &mut run, f, false)?;
            stage_map(&mut s, &mut run, f)?;
            if s.cfg.paths.gold.is_some() {
                stage_mrr(&mut s, &mut run, &[f.to_string()], &format!("eval/{}.mrr.json", safe_name(f)))?;
            }
        }
    }
    let dir = run.root().to_path_buf();
    run.finish(cmd.name(), &run_id, &config_hash)?;
    Ok(dir)
}

//! Deterministic synthetic multiparallel corpora with planted tense markers.
//!
//! Every verse shares one underlying content sequence (a run of nouns
//! followed by a verb) rendered through per-language vocabularies built from
//! language-specific syllable inventories. Languages mark a verse's feature
//! with a particle before the verb, a suffix on the verb, or not at all.
//! Families may share a mask of which feature verses get marked, so
//! languages of one family mark nearly the same verses.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{valid_iso3, write_corpus, MultiCorpus, Translation, VerseId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkingStyle {
    /// Separate token right before the verb.
    Particle,
    /// Attached to the end of the verb.
    Suffix,
    Unmarked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    /// Probability that a verse carries this feature. Verses carry at most
    /// one feature; the remaining mass is unlabeled.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub iso3: String,
    pub translation: String,
    pub style: MarkingStyle,
    /// Marker forms per feature. Multiple forms alternate at random.
    /// Generated automatically when empty for a marking language.
    #[serde(default)]
    pub markers: BTreeMap<String, Vec<String>>,
    pub vocab_size: usize,
    #[serde(default)]
    pub family: Option<String>,
    /// Listed in the head-pivot allowlist.
    #[serde(default)]
    pub creole: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_verses: usize,
    pub features: Vec<FeatureSpec>,
    pub languages: Vec<LanguageSpec>,
    /// Index into `languages` of the language whose markers form the queries.
    pub query_language: usize,
    /// Size of the verb inventory (nouns use each language's vocab_size).
    pub verbs: usize,
    /// Inclusive range of nouns per verse.
    pub nouns_per_verse: (usize, usize),
    /// Probability that a planted marker is dropped.
    pub marker_drop: f64,
    /// Probability that a verse's word order is perturbed (displacement <= 2).
    pub word_order_jitter: f64,
    /// Probability that a family marks a given feature verse at all.
    pub family_keep: f64,
    /// Probability that a language lacks a given verse.
    pub missing_verse_rate: f64,
    pub seed: u64,
}

const FEATURES: [(&str, f64); 3] = [("past", 0.35), ("present", 0.3), ("future", 0.2)];

fn default_features() -> Vec<FeatureSpec> {
    FEATURES
        .iter()
        .map(|(n, r)| FeatureSpec {
            name: n.to_string(),
            rate: *r,
        })
        .collect()
}

/// `qaa`, `qab`, ... codes from the ISO 639-3 local-use range.
fn local_code(i: usize) -> String {
    let second = (b'a' + (i / 26) as u8) as char;
    let third = (b'a' + (i % 26) as u8) as char;
    format!("q{second}{third}")
}

fn query_language() -> LanguageSpec {
    let markers = [
        ("past", vec!["did", "was"]),
        ("present", vec!["is", "are", "am"]),
        ("future", vec!["will"]),
    ]
    .into_iter()
    .map(|(f, forms)| (f.to_string(), forms.into_iter().map(String::from).collect()))
    .collect();
    LanguageSpec {
        iso3: "eng".into(),
        translation: "eng_synth".into(),
        style: MarkingStyle::Particle,
        markers,
        vocab_size: 300,
        family: None,
        creole: false,
    }
}

impl SynthSpec {
    /// Query language plus `particle - 1` further particle languages (the
    /// first four flagged as Creoles), `suffix` suffixing and `unmarked`
    /// unmarked languages.
    pub fn tense_benchmark(particle: usize, suffix: usize, unmarked: usize, n_verses: usize, seed: u64) -> Self {
        let mut languages = vec![query_language()];
        let mut idx = 0;
        let mut push = |style, creole: bool, languages: &mut Vec<LanguageSpec>| {
            let iso = local_code(idx);
            idx += 1;
            languages.push(LanguageSpec {
                translation: format!("{iso}_synth"),
                iso3: iso,
                style,
                markers: BTreeMap::new(),
                vocab_size: 300,
                family: None,
                creole,
            });
        };
        for i in 0..particle.saturating_sub(1) {
            push(MarkingStyle::Particle, i < 4, &mut languages);
        }
        for _ in 0..suffix {
            push(MarkingStyle::Suffix, false, &mut languages);
        }
        for _ in 0..unmarked {
            push(MarkingStyle::Unmarked, false, &mut languages);
        }
        SynthSpec {
            n_verses,
            features: default_features(),
            languages,
            query_language: 0,
            verbs: 40,
            nouns_per_verse: (4, 9),
            marker_drop: 0.05,
            word_order_jitter: 0.3,
            family_keep: 1.0,
            missing_verse_rate: 0.01,
            seed,
        }
    }

    /// Query language plus `families x per_family` particle languages whose
    /// families share which feature verses they mark.
    pub fn family_benchmark(families: usize, per_family: usize, n_verses: usize, seed: u64) -> Self {
        let mut spec = SynthSpec::tense_benchmark(1, 0, 0, n_verses, seed);
        for f in 0..families {
            for l in 0..per_family {
                let iso = local_code(f * per_family + l);
                spec.languages.push(LanguageSpec {
                    translation: format!("{iso}_synth"),
                    iso3: iso,
                    style: MarkingStyle::Particle,
                    markers: BTreeMap::new(),
                    vocab_size: 300,
                    family: Some(format!("family{f}")),
                    creole: l == 0,
                });
            }
        }
        spec.family_keep = 0.35;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.n_verses == 0 || self.n_verses > 999_999 {
            return bad(format!("n_verses must be in 1..=999999, got {}", self.n_verses));
        }
        if self.languages.is_empty() {
            return bad("no languages".into());
        }
        if self.query_language >= self.languages.len() {
            return bad("query_language out of range".into());
        }
        if self.features.is_empty() {
            return bad("no features".into());
        }
        let total_rate: f64 = self.features.iter().map(|f| f.rate).sum();
        if self.features.iter().any(|f| !(0.0..=1.0).contains(&f.rate)) || total_rate > 1.0 + 1e-12 {
            return bad("feature rates must be probabilities summing to at most 1".into());
        }
        let names: BTreeSet<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        if names.len() != self.features.len() {
            return bad("duplicate feature names".into());
        }
        for p in [self.marker_drop, self.word_order_jitter, self.family_keep, self.missing_verse_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability out of range: {p}"));
            }
        }
        if self.verbs == 0 || self.nouns_per_verse.0 > self.nouns_per_verse.1 {
            return bad("invalid verb inventory or noun range".into());
        }
        let mut ids = BTreeSet::new();
        for l in &self.languages {
            if !valid_iso3(&l.iso3) {
                return bad(format!("invalid language code {:?}", l.iso3));
            }
            if !ids.insert(l.translation.as_str()) {
                return bad(format!("duplicate translation {}", l.translation));
            }
            if l.vocab_size == 0 {
                return bad(format!("{}: vocab_size must be positive", l.translation));
            }
            if l.style == MarkingStyle::Unmarked && !l.markers.is_empty() {
                return bad(format!("{}: unmarked languages cannot have markers", l.translation));
            }
            let mut seen = BTreeSet::new();
            for (feature, forms) in &l.markers {
                if !names.contains(feature.as_str()) {
                    return bad(format!("{}: marker for unknown feature {feature}", l.translation));
                }
                for form in forms {
                    if form.is_empty() || form.contains(char::is_whitespace) || !seen.insert(form) {
                        return bad(format!("{}: marker strings must be unique non-empty words", l.translation));
                    }
                }
            }
        }
        Ok(())
    }
}

/// What the generator planted for one translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageTruth {
    pub iso3: String,
    pub translation: String,
    pub style: MarkingStyle,
    pub family: Option<String>,
    pub creole: bool,
    pub markers: BTreeMap<String, Vec<String>>,
    /// Verses on which each feature's marker was actually written.
    pub marked: BTreeMap<String, Vec<VerseId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Feature carried by each verse, if any.
    pub labels: BTreeMap<VerseId, Option<String>>,
    pub languages: Vec<LanguageTruth>,
    pub query_translation: String,
}

impl GroundTruth {
    pub fn language(&self, translation: &str) -> Option<&LanguageTruth> {
        self.languages.iter().find(|l| l.translation == translation)
    }

    pub fn families(&self) -> BTreeMap<String, String> {
        self.languages
            .iter()
            .filter_map(|l| l.family.clone().map(|f| (l.iso3.clone(), f)))
            .collect()
    }

    pub fn allowlist(&self) -> BTreeSet<String> {
        self.languages
            .iter()
            .filter(|l| l.creole)
            .map(|l| l.iso3.clone())
            .collect()
    }

    /// Verses labeled with `feature`, in order.
    pub fn verses_with(&self, feature: &str) -> Vec<VerseId> {
        self.labels
            .iter()
            .filter(|(_, l)| l.as_deref() == Some(feature))
            .map(|(v, _)| *v)
            .collect()
    }

    pub fn query_forms(&self, feature: &str) -> BTreeSet<String> {
        self.language(&self.query_translation)
            .and_then(|l| l.markers.get(feature))
            .map(|f| f.iter().cloned().collect())
            .unwrap_or_default()
    }
}

const CONSONANTS: &[u8] = b"bdfghklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

struct Inventory {
    consonants: Vec<u8>,
}

impl Inventory {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut consonants = CONSONANTS.to_vec();
        consonants.shuffle(rng);
        consonants.truncate(9);
        Inventory { consonants }
    }

    fn syllable(&self, rng: &mut ChaCha8Rng, out: &mut String) {
        out.push(*self.consonants.choose(rng).unwrap() as char);
        out.push(*VOWELS.choose(rng).unwrap() as char);
    }

    fn word(&self, rng: &mut ChaCha8Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
        let n = rng.gen_range(syllables);
        let mut w = String::new();
        for _ in 0..n {
            self.syllable(rng, &mut w);
        }
        w
    }
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    markers: BTreeMap<String, Vec<String>>,
}

fn build_lexicon(spec: &SynthSpec, lang: &LanguageSpec, rng: &mut ChaCha8Rng) -> Lexicon {
    let inv = Inventory::random(rng);
    let mut markers = lang.markers.clone();
    let mut used: HashSet<String> = markers.values().flatten().cloned().collect();
    if lang.style != MarkingStyle::Unmarked {
        for f in &spec.features {
            if markers.contains_key(&f.name) {
                continue;
            }
            // distinct markers none of which contains another
            let m = loop {
                let mut m = String::new();
                inv.syllable(rng, &mut m);
                if lang.style == MarkingStyle::Particle && rng.gen_bool(0.4) {
                    m.push(*inv.consonants.choose(rng).unwrap() as char);
                }
                if !used.iter().any(|u| u.contains(&m) || m.contains(u.as_str())) {
                    break m;
                }
            };
            used.insert(m.clone());
            markers.insert(f.name.clone(), vec![m]);
        }
    }
    let all_markers: Vec<String> = markers.values().flatten().cloned().collect();
    let mut words: HashSet<String> = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng, syllables: std::ops::RangeInclusive<usize>| loop {
        let w = inv.word(rng, syllables.clone());
        if !all_markers.iter().any(|m| w.contains(m.as_str())) && words.insert(w.clone()) {
            break w;
        }
    };
    let nouns = (0..lang.vocab_size).map(|_| fresh(rng, 1..=3)).collect();
    let verbs = (0..spec.verbs).map(|_| fresh(rng, 2..=3)).collect();
    Lexicon { nouns, verbs, markers }
}

struct VerseContent {
    id: VerseId,
    label: Option<usize>,
    /// Noun concepts; each language maps them through its own vocabulary.
    nouns: Vec<usize>,
    verb: usize,
}

fn verse_ids(n: usize) -> Vec<VerseId> {
    // 40 chapters-ish layout: 30 verses per chapter starting at book 40
    (0..n)
        .map(|i| {
            let chapter = i / 30 + 1;
            let verse = i % 30 + 1;
            let book = 40 + chapter / 1000;
            VerseId::from_number((book * 1_000_000 + (chapter % 1000) * 1000 + verse) as u32)
                .expect("eight digits")
        })
        .collect()
}

/// Generates the corpus and its ground truth. Identical specs produce
/// identical output.
pub fn generate(spec: &SynthSpec) -> Result<(MultiCorpus, GroundTruth)> {
    let (translations, truth) = generate_translations(spec)?;
    Ok((MultiCorpus::new(translations)?, truth))
}

pub fn generate_translations(spec: &SynthSpec) -> Result<(Vec<Translation>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let concept_count = spec.languages.iter().map(|l| l.vocab_size).min().unwrap_or(1);
    let content: Vec<VerseContent> = verse_ids(spec.n_verses)
        .into_iter()
        .map(|id| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut label = None;
            for (i, f) in spec.features.iter().enumerate() {
                acc += f.rate;
                if u < acc {
                    label = Some(i);
                    break;
                }
            }
            let k = rng.gen_range(spec.nouns_per_verse.0..=spec.nouns_per_verse.1);
            VerseContent {
                id,
                label,
                nouns: (0..k).map(|_| rng.gen_range(0..concept_count)).collect(),
                verb: rng.gen_range(0..spec.verbs),
            }
        })
        .collect();

    let families: BTreeSet<&str> = spec.languages.iter().filter_map(|l| l.family.as_deref()).collect();
    let family_masks: BTreeMap<&str, Vec<bool>> = families
        .into_iter()
        .map(|f| {
            let mask = content.iter().map(|_| rng.gen_bool(spec.family_keep)).collect();
            (f, mask)
        })
        .collect();

    let mut translations = Vec::with_capacity(spec.languages.len());
    let mut truths = Vec::with_capacity(spec.languages.len());
    for lang in &spec.languages {
        let lex = build_lexicon(spec, lang, &mut rng);
        let mut t = Translation::new(lang.translation.clone(), lang.iso3.clone())?;
        let mut marked: BTreeMap<String, Vec<VerseId>> = BTreeMap::new();
        for (vi, verse) in content.iter().enumerate() {
            let missing = rng.gen_bool(spec.missing_verse_rate);
            let mut words: Vec<String> = verse.nouns.iter().map(|&c| lex.nouns[c].clone()).collect();
            words.push(lex.verbs[verse.verb].clone());
            let jitter = rng.gen_bool(spec.word_order_jitter);
            let mut order: Vec<(f64, usize)> = (0..words.len())
                .map(|i| {
                    let shift = if jitter { rng.gen_range(-1.5..1.5) } else { 0.0 };
                    (i as f64 + shift, i)
                })
                .collect();
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut words: Vec<String> = order.into_iter().map(|(_, i)| std::mem::take(&mut words[i])).collect();
            let verb_pos = words
                .iter()
                .position(|w| *w == lex.verbs[verse.verb])
                .expect("verb present");

            let drop = rng.gen_bool(spec.marker_drop);
            if let Some(fi) = verse.label {
                let feature = &spec.features[fi].name;
                let family_ok = lang
                    .family
                    .as_deref()
                    .is_none_or(|f| family_masks[f][vi]);
                if let (Some(forms), true, false) = (lex.markers.get(feature), family_ok, drop) {
                    let form = forms.choose(&mut rng).expect("non-empty forms").clone();
                    match lang.style {
                        MarkingStyle::Particle => words.insert(verb_pos, form),
                        MarkingStyle::Suffix => words[verb_pos].push_str(&form),
                        MarkingStyle::Unmarked => unreachable!("unmarked languages have no markers"),
                    }
                    if !missing {
                        marked.entry(feature.clone()).or_default().push(verse.id);
                    }
                }
            }
            if missing {
                continue;
            }
            let mut text = words.join(" ");
            if let Some(first) = text.get(0..1) {
                text.replace_range(0..1, &first.to_uppercase());
            }
            text.push('.');
            t.insert(verse.id, text);
        }
        truths.push(LanguageTruth {
            iso3: lang.iso3.clone(),
            translation: lang.translation.clone(),
            style: lang.style,
            family: lang.family.clone(),
            creole: lang.creole,
            markers: lex.markers,
            marked,
        });
        translations.push(t);
    }

    let truth = GroundTruth {
        seed: spec.seed,
        labels: content
            .iter()
            .map(|v| (v.id, v.label.map(|i| spec.features[i].name.clone())))
            .collect(),
        languages: truths,
        query_translation: spec.languages[spec.query_language].translation.clone(),
    };
    Ok((translations, truth))
}

/// Writes the corpus files plus `ground_truth.json`, `families.tsv`,
/// `allowlist.txt`, `queries.tsv` and `gold.tsv` into `dir`.
pub fn write_synth(dir: &Path, spec: &SynthSpec) -> Result<GroundTruth> {
    let (translations, truth) = generate_translations(spec)?;
    let corpus_dir = dir.join("corpus");
    write_corpus(&corpus_dir, &translations)?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write(
        "ground_truth.json",
        serde_json::to_string_pretty(&truth).expect("serializable") + "\n",
    )?;
    write(
        "families.tsv",
        truth.families().iter().map(|(k, v)| format!("{k}\t{v}\n")).collect(),
    )?;
    write(
        "allowlist.txt",
        truth.allowlist().iter().map(|k| format!("{k}\n")).collect(),
    )?;
    let mut queries = String::new();
    for f in &spec.features {
        let forms: Vec<String> = truth.query_forms(&f.name).into_iter().collect();
        queries.push_str(&format!("{}\t{}\t{}\n", f.name, truth.query_translation, forms.join(",")));
    }
    write("queries.tsv", queries)?;
    let mut gold = String::new();
    for l in &truth.languages {
        for (f, forms) in &l.markers {
            gold.push_str(&format!("{}\t{}\t{}\n", l.translation, f, forms.join(",")));
        }
    }
    write("gold.tsv", gold)?;
    Ok(truth)
}

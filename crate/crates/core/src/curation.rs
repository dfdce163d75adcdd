//! The four curated resources (concept map, topic descriptions, term
//! expansions, special rules) and their binding onto flattened rows.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, Strictness};
use crate::query::{ContextCue, TermExpansions};
use crate::text::{self, Stopwords};
use crate::tree::KnowledgeRow;

pub const CONCEPT_MAP_FILE: &str = "concept_map.json";
pub const TOPIC_DESCRIPTIONS_FILE: &str = "topic_descriptions.json";
pub const TERM_EXPANSIONS_FILE: &str = "term_expansions.json";
pub const SPECIAL_RULES_FILE: &str = "special_rules.json";

/// Selects every row matching all of the fields that are set.
///
/// `ka` compares against the KA short code; the patterns are
/// case-insensitive substrings of the topic and IM text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ka: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_pattern: Option<String>,
}

impl RowSelector {
    pub fn ka(ka: &str) -> Self {
        RowSelector {
            ka: Some(ka.into()),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ka.is_none() && self.topic_pattern.is_none() && self.im_pattern.is_none()
    }

    pub fn matches(&self, row: &KnowledgeRow) -> bool {
        let ci_contains = |hay: &str, pat: &str| hay.to_lowercase().contains(&pat.to_lowercase());
        self.ka.as_deref().is_none_or(|ka| row.ka_id.eq_ignore_ascii_case(ka))
            && self.topic_pattern.as_deref().is_none_or(|p| ci_contains(&row.topic, p))
            && self.im_pattern.as_deref().is_none_or(|p| ci_contains(&row.im, p))
    }

    pub fn resolve(&self, rows: &[KnowledgeRow]) -> RowSet {
        RowSet(rows.iter().filter(|r| self.matches(r)).map(|r| r.row_id).collect())
    }

    pub(crate) fn validate(&self, path: &str) -> Result<()> {
        if self.is_empty() {
            return Err(Error::validation(path, "row selector sets no field"));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Sorted set of row ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RowSet(Vec<usize>);

impl RowSet {
    pub fn contains(&self, row_id: usize) -> bool {
        self.0.binary_search(&row_id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }
}

/// A concept-map target: rows to boost when the phrase occurs in a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptTarget {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ka: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_pattern: Option<String>,
    pub boost: f64,
}

impl ConceptTarget {
    pub fn selector(&self) -> RowSelector {
        RowSelector {
            ka: self.ka.clone(),
            topic_pattern: self.topic_pattern.clone(),
            im_pattern: self.im_pattern.clone(),
        }
    }
}

/// Normalized phrase → boosted row targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConceptMap {
    pub entries: BTreeMap<String, Vec<ConceptTarget>>,
}

impl ConceptMap {
    pub fn from_raw(raw: BTreeMap<String, Vec<ConceptTarget>>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (phrase, targets) in raw {
            let path = format!("concept_map[\"{phrase}\"]");
            let key = text::normalize_phrase(&phrase);
            if key.is_empty() {
                return Err(Error::validation(path, "empty phrase"));
            }
            for (i, t) in targets.iter().enumerate() {
                let p = format!("{path}[{i}]");
                t.selector().validate(&p)?;
                check_weight(&p, "boost", t.boost)?;
            }
            if entries.insert(key.clone(), targets).is_some() {
                return Err(Error::validation(path, format!("duplicate phrase \"{key}\"")));
            }
        }
        Ok(ConceptMap { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicDescription {
    pub ka: String,
    pub topic: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub curriculum_phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promotion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ka: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_pattern: Option<String>,
    pub bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demotion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ka: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_pattern: Option<String>,
    pub penalty: f64,
}

impl Promotion {
    pub fn selector(&self) -> RowSelector {
        RowSelector {
            ka: self.ka.clone(),
            topic_pattern: self.topic_pattern.clone(),
            im_pattern: self.im_pattern.clone(),
        }
    }
}

impl Demotion {
    pub fn selector(&self) -> RowSelector {
        RowSelector {
            ka: self.ka.clone(),
            topic_pattern: self.topic_pattern.clone(),
            im_pattern: self.im_pattern.clone(),
        }
    }
}

/// Domain-sensitive promotion/demotion triggered by query phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialRule {
    #[serde(rename = "id")]
    pub rule_id: String,
    pub triggers: Vec<String>,
    #[serde(default)]
    pub promote: Vec<Promotion>,
    #[serde(default)]
    pub demote: Vec<Demotion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required_context: Option<ContextCue>,
}

impl SpecialRule {
    fn normalize(mut self, index: usize) -> Result<Self> {
        let path = format!("special_rules[{index}]({})", self.rule_id);
        if self.rule_id.trim().is_empty() {
            return Err(Error::validation(path, "empty rule id"));
        }
        if self.triggers.is_empty() {
            return Err(Error::validation(path, "rule has no triggers"));
        }
        for t in &mut self.triggers {
            *t = text::normalize_phrase(t);
            if t.is_empty() {
                return Err(Error::validation(&path, "empty trigger phrase"));
            }
        }
        if self.promote.is_empty() && self.demote.is_empty() {
            return Err(Error::validation(path, "rule neither promotes nor demotes"));
        }
        for (i, p) in self.promote.iter().enumerate() {
            let p_path = format!("{path}.promote[{i}]");
            p.selector().validate(&p_path)?;
            check_weight(&p_path, "bonus", p.bonus)?;
        }
        for (i, d) in self.demote.iter().enumerate() {
            let d_path = format!("{path}.demote[{i}]");
            d.selector().validate(&d_path)?;
            check_weight(&d_path, "penalty", d.penalty)?;
        }
        Ok(self)
    }
}

pub(crate) fn check_weight(path: &str, what: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::validation(
            path,
            format!("{what} must be a finite non-negative number, got {v}"),
        ));
    }
    Ok(())
}

/// The four curated resources, each validated on its own.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurationBundle {
    pub concept_map: ConceptMap,
    pub topic_descriptions: Vec<TopicDescription>,
    pub term_expansions: TermExpansions,
    pub special_rules: Vec<SpecialRule>,
}

const BUILTIN_CONCEPT_MAP: &str = include_str!("../data/curation/concept_map.json");
const BUILTIN_TOPIC_DESCRIPTIONS: &str = include_str!("../data/curation/topic_descriptions.json");
const BUILTIN_TERM_EXPANSIONS: &str = include_str!("../data/curation/term_expansions.json");
const BUILTIN_SPECIAL_RULES: &str = include_str!("../data/curation/special_rules.json");

impl CurationBundle {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The shipped default curation.
    pub fn builtin(stopwords: &Stopwords) -> Self {
        Self::from_slices(
            BUILTIN_CONCEPT_MAP.as_bytes(),
            BUILTIN_TOPIC_DESCRIPTIONS.as_bytes(),
            BUILTIN_TERM_EXPANSIONS.as_bytes(),
            BUILTIN_SPECIAL_RULES.as_bytes(),
            stopwords,
            Strictness::Strict,
        )
        .expect("builtin curation is valid")
    }

    /// Loads the four resources from byte streams, in the order concept map,
    /// topic descriptions, term expansions, special rules.
    pub fn load<A: Read, B: Read, C: Read, D: Read>(
        concept_map: A,
        topic_descriptions: B,
        term_expansions: C,
        special_rules: D,
        stopwords: &Stopwords,
        mode: Strictness,
    ) -> Result<Self> {
        fn slurp<R: Read>(mut r: R, name: &str) -> Result<Vec<u8>> {
            let mut buf = Vec::new();
            r.read_to_end(&mut buf).map_err(|e| Error::parse(name, e))?;
            Ok(buf)
        }
        Self::from_slices(
            &slurp(concept_map, CONCEPT_MAP_FILE)?,
            &slurp(topic_descriptions, TOPIC_DESCRIPTIONS_FILE)?,
            &slurp(term_expansions, TERM_EXPANSIONS_FILE)?,
            &slurp(special_rules, SPECIAL_RULES_FILE)?,
            stopwords,
            mode,
        )
    }

    pub fn from_dir(dir: &Path, stopwords: &Stopwords, mode: Strictness) -> Result<Self> {
        let read = |name: &str| json::read_file(&dir.join(name));
        Self::from_slices(
            &read(CONCEPT_MAP_FILE)?,
            &read(TOPIC_DESCRIPTIONS_FILE)?,
            &read(TERM_EXPANSIONS_FILE)?,
            &read(SPECIAL_RULES_FILE)?,
            stopwords,
            mode,
        )
    }

    pub fn from_slices(
        concept_map: &[u8],
        topic_descriptions: &[u8],
        term_expansions: &[u8],
        special_rules: &[u8],
        stopwords: &Stopwords,
        mode: Strictness,
    ) -> Result<Self> {
        let concept_map = ConceptMap::from_raw(json::from_slice(concept_map, CONCEPT_MAP_FILE, mode)?)?;

        let topic_descriptions: Vec<TopicDescription> =
            json::from_slice(topic_descriptions, TOPIC_DESCRIPTIONS_FILE, mode)?;
        for (i, d) in topic_descriptions.iter().enumerate() {
            if d.ka.trim().is_empty() || d.topic.trim().is_empty() {
                return Err(Error::validation(
                    format!("topic_descriptions[{i}]"),
                    "ka and topic are required",
                ));
            }
        }

        let raw_exp: BTreeMap<String, Vec<String>> = json::from_slice(term_expansions, TERM_EXPANSIONS_FILE, mode)?;
        let term_expansions = TermExpansions::new(&raw_exp, stopwords)?;

        let rules: Vec<SpecialRule> = json::from_slice(special_rules, SPECIAL_RULES_FILE, mode)?;
        let special_rules = rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.normalize(i))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = std::collections::HashSet::new();
        for r in &special_rules {
            if !ids.insert(r.rule_id.as_str()) {
                return Err(Error::validation(
                    SPECIAL_RULES_FILE,
                    format!("duplicate rule id \"{}\"", r.rule_id),
                ));
            }
        }

        Ok(CurationBundle {
            concept_map,
            topic_descriptions,
            term_expansions,
            special_rules,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTarget {
    pub rows: RowSet,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConcept {
    pub phrase: String,
    pub targets: Vec<BoundTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRule {
    pub rule_id: String,
    pub triggers: Vec<String>,
    pub required_context: Option<ContextCue>,
    pub promotions: Vec<BoundTarget>,
    pub demotions: Vec<BoundTarget>,
}

/// Curation with every selector resolved to concrete rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCuration {
    /// Rows with topic aliases and curriculum phrases appended to `search_text`.
    pub rows: Vec<KnowledgeRow>,
    /// Normalized aliases/curriculum phrases attached to each row, by row id.
    pub row_phrases: Vec<Vec<String>>,
    pub concepts: Vec<BoundConcept>,
    pub rules: Vec<BoundRule>,
    pub expansions: TermExpansions,
    /// Selectors that matched no row.
    pub warnings: Vec<String>,
}

/// Resolves selectors and enriches rows with topic descriptions.
pub fn bind(bundle: &CurationBundle, rows: &[KnowledgeRow]) -> Result<BoundCuration> {
    let mut rows = rows.to_vec();
    let mut row_phrases = vec![Vec::new(); rows.len()];
    let mut warnings = Vec::new();

    for d in &bundle.topic_descriptions {
        let members: Vec<usize> = rows
            .iter()
            .filter(|r| r.ka_id.eq_ignore_ascii_case(&d.ka) && r.topic.eq_ignore_ascii_case(&d.topic))
            .map(|r| r.row_id)
            .collect();
        if members.is_empty() {
            return Err(Error::Bind(format!(
                "topic description references unknown topic ({}, \"{}\")",
                d.ka, d.topic
            )));
        }
        for id in members {
            for phrase in d.aliases.iter().chain(&d.curriculum_phrases) {
                let norm = text::normalize_phrase(phrase);
                if norm.is_empty() {
                    continue;
                }
                let row = &mut rows[id];
                row.search_text.push(' ');
                row.search_text.push_str(&phrase.to_lowercase());
                row_phrases[id].push(norm);
            }
        }
    }

    let mut resolve = |sel: RowSelector, weight: f64, ctx: &str| {
        let set = sel.resolve(&rows);
        if set.is_empty() {
            let msg = format!("{ctx}: selector {} matches no row", sel.describe());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        BoundTarget { rows: set, weight }
    };

    let concepts = bundle
        .concept_map
        .entries
        .iter()
        .map(|(phrase, targets)| BoundConcept {
            phrase: phrase.clone(),
            targets: targets
                .iter()
                .map(|t| resolve(t.selector(), t.boost, &format!("concept \"{phrase}\"")))
                .collect(),
        })
        .collect();

    let rules = bundle
        .special_rules
        .iter()
        .map(|r| {
            let ctx = format!("rule \"{}\"", r.rule_id);
            BoundRule {
                rule_id: r.rule_id.clone(),
                triggers: r.triggers.clone(),
                required_context: r.required_context,
                promotions: r.promote.iter().map(|p| resolve(p.selector(), p.bonus, &ctx)).collect(),
                demotions: r
                    .demote
                    .iter()
                    .map(|d| resolve(d.selector(), d.penalty, &ctx))
                    .collect(),
            }
        })
        .collect();

    Ok(BoundCuration {
        rows,
        row_phrases,
        concepts,
        rules,
        expansions: bundle.term_expansions.clone(),
        warnings,
    })
}

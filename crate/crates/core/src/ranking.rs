//! Per-row score ledgers: lexical signals, curated boosts, intent/context
//! bonuses, special-rule adjustments and domain-mismatch penalties.
//!
//! Every component in a [`ScoreComponents`] ledger is already weighted, so a
//! row's total is the plain sum of its positive components plus the signed
//! special-rule adjustment, minus the mismatch penalty. [`ScoreComponents::total`]
//! fixes that summation order; nothing else is allowed to compute a total.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::curation::{check_weight, BoundConcept, BoundCuration, BoundRule, RowSelector, RowSet};
use crate::error::{Error, Result};
use crate::json::{self, Strictness};
use crate::query::{ContextCue, EnrichedQuery, QueryCategory};
use crate::text::{self, Stopwords};
use crate::tree::KnowledgeRow;

pub const WEIGHTS_FILE: &str = "weights.json";

/// One non-negative multiplier per ledger component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentWeights {
    pub phrase_match: f64,
    pub token_overlap: f64,
    pub concept_boost: f64,
    pub description_boost: f64,
    pub intent_bonus: f64,
    pub context_bonus: f64,
    pub special_rule_adjust: f64,
    pub mismatch_penalty: f64,
}

impl Default for ComponentWeights {
    fn default() -> Self {
        ComponentWeights {
            phrase_match: 1.0,
            token_overlap: 3.0,
            concept_boost: 1.0,
            description_boost: 1.0,
            intent_bonus: 1.0,
            context_bonus: 1.0,
            special_rule_adjust: 1.0,
            mismatch_penalty: 1.0,
        }
    }
}

impl ComponentWeights {
    fn fields(&self) -> [(&'static str, f64); 8] {
        [
            ("phrase_match", self.phrase_match),
            ("token_overlap", self.token_overlap),
            ("concept_boost", self.concept_boost),
            ("description_boost", self.description_boost),
            ("intent_bonus", self.intent_bonus),
            ("context_bonus", self.context_bonus),
            ("special_rule_adjust", self.special_rule_adjust),
            ("mismatch_penalty", self.mismatch_penalty),
        ]
    }
}

/// A bonus applied to rows whose KA is in `kas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityBonus {
    pub bonus: f64,
    pub kas: Vec<String>,
}

impl AffinityBonus {
    fn applies_to(&self, ka_id: &str) -> bool {
        self.kas.iter().any(|k| k.eq_ignore_ascii_case(ka_id))
    }
}

/// Penalizes the selected rows when the query carries any of `when_any_cue`
/// and none of `unless_any_token` among its expanded tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchClass {
    pub name: String,
    pub when_any_cue: Vec<ContextCue>,
    #[serde(default)]
    pub unless_any_token: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ka: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_pattern: Option<String>,
    pub penalty: f64,
}

impl MismatchClass {
    pub fn selector(&self) -> RowSelector {
        RowSelector {
            ka: self.ka.clone(),
            topic_pattern: self.topic_pattern.clone(),
            im_pattern: self.im_pattern.clone(),
        }
    }

    pub fn fires(&self, query: &EnrichedQuery) -> bool {
        self.when_any_cue.iter().any(|c| query.cues.contains(c))
            && !self
                .unless_any_token
                .iter()
                .any(|t| query.expanded_tokens.iter().any(|q| q == t))
    }
}

/// Absolute score cutoffs for confidence labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceThresholds {
    pub strong: f64,
    pub moderate: f64,
}

impl Default for ConfidenceThresholds {
    fn default() -> Self {
        ConfidenceThresholds {
            strong: 6.0,
            moderate: 3.0,
        }
    }
}

impl ConfidenceThresholds {
    pub fn new(strong: f64, moderate: f64) -> Result<Self> {
        let t = ConfidenceThresholds { strong, moderate };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strong.is_finite() && self.moderate.is_finite()) || self.strong <= self.moderate {
            return Err(Error::InvalidArgument(format!(
                "strong threshold ({}) must exceed moderate threshold ({})",
                self.strong, self.moderate
            )));
        }
        Ok(())
    }
}

/// The whole tuning surface (`weights.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringWeights {
    pub components: ComponentWeights,
    pub exact_phrase_value: f64,
    pub partial_phrase_value: f64,
    pub category_bonus: BTreeMap<QueryCategory, AffinityBonus>,
    pub cue_bonus: BTreeMap<ContextCue, AffinityBonus>,
    pub mismatch_classes: Vec<MismatchClass>,
    pub confidence: ConfidenceThresholds,
}

impl Default for ScoringWeights {
    /// Multipliers and phrase values only; no affinity tables or mismatch
    /// classes. The shipped `weights.json` adds those.
    fn default() -> Self {
        ScoringWeights {
            components: ComponentWeights::default(),
            exact_phrase_value: 4.0,
            partial_phrase_value: 2.0,
            category_bonus: BTreeMap::new(),
            cue_bonus: BTreeMap::new(),
            mismatch_classes: Vec::new(),
            confidence: ConfidenceThresholds::default(),
        }
    }
}

const BUILTIN_WEIGHTS: &str = include_str!("../data/weights.json");

impl ScoringWeights {
    pub fn builtin() -> Self {
        Self::from_slice(BUILTIN_WEIGHTS.as_bytes(), Strictness::Strict).expect("builtin weights are valid")
    }

    /// Parses `weights.json`. Strict mode rejects unknown fields and also
    /// requires every documented field to be present; lenient mode fills
    /// gaps from [`ScoringWeights::default`].
    pub fn from_slice(bytes: &[u8], mode: Strictness) -> Result<Self> {
        let w: ScoringWeights = json::from_slice(bytes, WEIGHTS_FILE, mode)?;
        if mode.is_strict() {
            let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::parse(WEIGHTS_FILE, e))?;
            let missing = missing_fields(&value);
            if !missing.is_empty() {
                return Err(Error::validation(
                    WEIGHTS_FILE,
                    format!("missing field(s): {}", missing.join(", ")),
                ));
            }
        }
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.components.fields() {
            check_weight(&format!("components.{name}"), "multiplier", v)?;
        }
        check_weight("exact_phrase_value", "value", self.exact_phrase_value)?;
        check_weight("partial_phrase_value", "value", self.partial_phrase_value)?;
        for (cat, b) in &self.category_bonus {
            check_weight(&format!("category_bonus.{cat}"), "bonus", b.bonus)?;
        }
        for (cue, b) in &self.cue_bonus {
            check_weight(&format!("cue_bonus.{cue}"), "bonus", b.bonus)?;
        }
        for (i, m) in self.mismatch_classes.iter().enumerate() {
            let path = format!("mismatch_classes[{i}]({})", m.name);
            check_weight(&path, "penalty", m.penalty)?;
            m.selector().validate(&path)?;
            if m.when_any_cue.is_empty() {
                return Err(Error::validation(path, "mismatch class needs at least one cue"));
            }
        }
        self.confidence
            .validate()
            .map_err(|e| Error::validation("confidence", e.to_string()))
    }
}

fn missing_fields(value: &serde_json::Value) -> Vec<String> {
    let reference = serde_json::to_value(ScoringWeights::default()).expect("serializable");
    let mut missing = Vec::new();
    let (Some(expected), Some(actual)) = (reference.as_object(), value.as_object()) else {
        return vec!["<root>".into()];
    };
    for (key, sub) in expected {
        match actual.get(key) {
            None => missing.push(key.clone()),
            // nested structs, not data-keyed maps
            Some(inner) if key == "components" || key == "confidence" => {
                if let Some(sub) = sub.as_object() {
                    for k in sub.keys() {
                        if inner.get(k).is_none() {
                            missing.push(format!("{key}.{k}"));
                        }
                    }
                }
            }
            Some(_) => {}
        }
    }
    missing
}

/// Weighted ledger of one (query, row) scoring.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub phrase_match: f64,
    pub token_overlap: f64,
    pub concept_boost: f64,
    pub description_boost: f64,
    pub intent_bonus: f64,
    pub context_bonus: f64,
    pub special_rule_adjust: f64,
    /// Non-negative; subtracted from the total.
    pub mismatch_penalty: f64,
}

impl ScoreComponents {
    pub fn total(&self) -> f64 {
        self.phrase_match
            + self.token_overlap
            + self.concept_boost
            + self.description_boost
            + self.intent_bonus
            + self.context_bonus
            + self.special_rule_adjust
            - self.mismatch_penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredRow {
    pub row_id: usize,
    pub components: ScoreComponents,
    pub total: f64,
}

/// Token views of a bound row, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTerms {
    pub ka_id: String,
    pub im_normalized: String,
    pub topic_normalized: String,
    pub im_tokens: Vec<String>,
    pub topic_tokens: Vec<String>,
    pub search_tokens: HashSet<String>,
}

impl RowTerms {
    pub fn new(row: &KnowledgeRow, stopwords: &Stopwords) -> Self {
        RowTerms {
            ka_id: row.ka_id.clone(),
            im_normalized: text::normalize_phrase(&row.im),
            topic_normalized: text::normalize_phrase(&row.topic),
            im_tokens: stopwords.content_tokens(&row.im),
            topic_tokens: stopwords.content_tokens(&row.topic),
            search_tokens: stopwords.content_tokens(&row.search_text).into_iter().collect(),
        }
    }
}

/// Bound curation + weights over a fixed row set.
#[derive(Debug, Clone)]
pub struct Ranker {
    curation: BoundCuration,
    weights: ScoringWeights,
    mismatch_rows: Vec<RowSet>,
    terms: Vec<RowTerms>,
}

impl Ranker {
    pub fn new(curation: BoundCuration, weights: ScoringWeights, stopwords: &Stopwords) -> Self {
        let mismatch_rows = weights
            .mismatch_classes
            .iter()
            .map(|m| {
                let set = m.selector().resolve(&curation.rows);
                if set.is_empty() {
                    log::warn!("mismatch class \"{}\" matches no row", m.name);
                }
                set
            })
            .collect();
        let terms = curation.rows.iter().map(|r| RowTerms::new(r, stopwords)).collect();
        Ranker {
            curation,
            weights,
            mismatch_rows,
            terms,
        }
    }

    pub fn rows(&self) -> &[KnowledgeRow] {
        &self.curation.rows
    }

    pub fn curation(&self) -> &BoundCuration {
        &self.curation
    }

    pub fn weights(&self) -> &ScoringWeights {
        &self.weights
    }

    pub fn terms(&self, row_id: usize) -> &RowTerms {
        &self.terms[row_id]
    }

    /// Precomputes which curated entries the query triggers.
    pub fn context<'a>(&'a self, query: &'a EnrichedQuery) -> ScoringContext<'a> {
        let fired_concepts = self
            .curation
            .concepts
            .iter()
            .filter(|c| text::contains_phrase(&query.normalized, &c.phrase))
            .collect();
        let fired_rules = self.curation.rules.iter().filter(|r| rule_fires(r, query)).collect();
        let fired_classes = self
            .weights
            .mismatch_classes
            .iter()
            .zip(&self.mismatch_rows)
            .filter(|(m, _)| m.fires(query))
            .map(|(m, rows)| (m.penalty, rows))
            .collect();
        ScoringContext {
            ranker: self,
            query,
            fired_concepts,
            fired_rules,
            fired_classes,
        }
    }

    /// Ledger for every row, in row order.
    pub fn score_all(&self, query: &EnrichedQuery) -> Vec<ScoredRow> {
        let ctx = self.context(query);
        (0..self.terms.len()).map(|id| ctx.score(id)).collect()
    }
}

fn rule_fires(rule: &BoundRule, query: &EnrichedQuery) -> bool {
    rule.triggers
        .iter()
        .any(|t| text::contains_phrase(&query.normalized, t))
        && rule.required_context.is_none_or(|c| query.cues.contains(&c))
}

/// A query bound to a [`Ranker`]; each method computes one weighted
/// ledger component for one row.
pub struct ScoringContext<'a> {
    ranker: &'a Ranker,
    query: &'a EnrichedQuery,
    fired_concepts: Vec<&'a BoundConcept>,
    fired_rules: Vec<&'a BoundRule>,
    fired_classes: Vec<(f64, &'a RowSet)>,
}

impl ScoringContext<'_> {
    fn w(&self) -> &ScoringWeights {
        &self.ranker.weights
    }

    /// Exact value when the whole normalized query occurs in the IM or topic
    /// text; otherwise partial credit proportional to the longest shared run.
    pub fn phrase_match(&self, row_id: usize) -> f64 {
        let q = self.query;
        if q.tokens.is_empty() {
            return 0.0;
        }
        let t = &self.ranker.terms[row_id];
        let raw = if text::contains_phrase(&t.im_normalized, &q.normalized)
            || text::contains_phrase(&t.topic_normalized, &q.normalized)
        {
            self.w().exact_phrase_value
        } else {
            let run = text::longest_common_run(&q.tokens, &t.im_tokens)
                .max(text::longest_common_run(&q.tokens, &t.topic_tokens));
            self.w().partial_phrase_value * run as f64 / q.tokens.len() as f64
        };
        self.w().components.phrase_match * raw
    }

    /// Fraction of expanded query tokens present in the row's enriched text.
    pub fn token_overlap(&self, row_id: usize) -> f64 {
        let expanded = &self.query.expanded_tokens;
        if expanded.is_empty() {
            return 0.0;
        }
        let row = &self.ranker.terms[row_id].search_tokens;
        let shared = expanded.iter().filter(|t| row.contains(*t)).count();
        self.w().components.token_overlap * shared as f64 / expanded.len() as f64
    }

    /// `(concept_boost, description_boost)`.
    pub fn curated_boosts(&self, row_id: usize) -> (f64, f64) {
        let mut concept = 0.0;
        for c in &self.fired_concepts {
            for t in &c.targets {
                if t.rows.contains(row_id) {
                    concept += t.weight;
                }
            }
        }
        let hits = self.ranker.curation.row_phrases[row_id]
            .iter()
            .filter(|p| text::contains_phrase(&self.query.normalized, p))
            .count();
        let w = &self.w().components;
        (w.concept_boost * concept, w.description_boost * hits as f64)
    }

    /// `(intent_bonus, context_bonus)` from the category and cue affinity tables.
    pub fn intent_context_bonus(&self, row_id: usize) -> (f64, f64) {
        let ka = &self.ranker.terms[row_id].ka_id;
        let w = self.w();
        let intent = w
            .category_bonus
            .get(&self.query.category)
            .filter(|b| b.applies_to(ka))
            .map_or(0.0, |b| b.bonus);
        let mut context = 0.0;
        for cue in &self.query.cues {
            if let Some(b) = w.cue_bonus.get(cue).filter(|b| b.applies_to(ka)) {
                context += b.bonus;
            }
        }
        (w.components.intent_bonus * intent, w.components.context_bonus * context)
    }

    /// Promotions minus demotions of every triggered rule covering the row.
    pub fn special_rule_adjust(&self, row_id: usize) -> f64 {
        let mut promoted = 0.0;
        let mut demoted = 0.0;
        for r in &self.fired_rules {
            for p in &r.promotions {
                if p.rows.contains(row_id) {
                    promoted += p.weight;
                }
            }
            for d in &r.demotions {
                if d.rows.contains(row_id) {
                    demoted += d.weight;
                }
            }
        }
        self.w().components.special_rule_adjust * (promoted - demoted)
    }

    pub fn mismatch_penalty(&self, row_id: usize) -> f64 {
        let mut penalty = 0.0;
        for (p, rows) in &self.fired_classes {
            if rows.contains(row_id) {
                penalty += p;
            }
        }
        self.w().components.mismatch_penalty * penalty
    }

    pub fn score(&self, row_id: usize) -> ScoredRow {
        let (concept_boost, description_boost) = self.curated_boosts(row_id);
        let (intent_bonus, context_bonus) = self.intent_context_bonus(row_id);
        let components = ScoreComponents {
            phrase_match: self.phrase_match(row_id),
            token_overlap: self.token_overlap(row_id),
            concept_boost,
            description_boost,
            intent_bonus,
            context_bonus,
            special_rule_adjust: self.special_rule_adjust(row_id),
            mismatch_penalty: self.mismatch_penalty(row_id),
        };
        ScoredRow {
            row_id,
            components,
            total: components.total(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::{bind, CurationBundle};
    use crate::query::{Lexicons, TermExpansions};
    use crate::tree::KnowledgeTree;

    const TREE: &str = r#"{"knowledge_areas":[
      {"id":"NS","name":"Network Security","topics":[
        {"name":"Network Protocols and Their Security","indicative_material":["Security at the Transport Layer","Security at the Internet Layer"]},
        {"name":"Public Key Infrastructure","indicative_material":["PKI Deployment","Certificate Revocation"]}]},
      {"id":"WAM","name":"Web and Mobile Security","topics":[
        {"name":"Fundamental Concepts and Approaches","indicative_material":["Webification","Web PKI and HTTPS"]}]},
      {"id":"RMG","name":"Risk Management and Governance","topics":[
        {"name":"Risk Governance","indicative_material":["Risk Governance Models"]}]},
      {"id":"C","name":"Cryptography","topics":[
        {"name":"Symmetric Primitives","indicative_material":["Block Ciphers"]}]},
      {"id":"SSL","name":"Secure Software Lifecycle","topics":[
        {"name":"Software Supply Chain Security","indicative_material":["Third-Party Components"]}]}]}"#;

    struct Fixture {
        lex: Lexicons,
        ranker: Ranker,
    }

    fn fixture(cm: &str, td: &str, te: &str, sr: &str, weights: ScoringWeights) -> Fixture {
        let lex = Lexicons::builtin();
        let tree = KnowledgeTree::from_slice(TREE.as_bytes(), Strictness::Strict).unwrap();
        let bundle = CurationBundle::from_slices(
            cm.as_bytes(),
            td.as_bytes(),
            te.as_bytes(),
            sr.as_bytes(),
            &lex.stopwords,
            Strictness::Strict,
        )
        .unwrap();
        let bound = bind(&bundle, &tree.flatten()).unwrap();
        let ranker = Ranker::new(bound, weights, &lex.stopwords);
        Fixture { lex, ranker }
    }

    fn plain() -> Fixture {
        fixture("{}", "[]", "{}", "[]", ScoringWeights::default())
    }

    impl Fixture {
        fn query(&self, raw: &str) -> EnrichedQuery {
            EnrichedQuery::new(raw, &self.lex, &self.ranker.curation().expansions)
        }

        fn row(&self, im: &str) -> usize {
            self.ranker.rows().iter().position(|r| r.im == im).unwrap()
        }
    }

    #[test]
    fn partial_phrase_credit_for_secure_sockets_layer() {
        let f = plain();
        let q = f.query("secure sockets layer");
        let ctx = f.ranker.context(&q);
        let got = ctx.phrase_match(f.row("Security at the Transport Layer"));
        assert_eq!(got, 2.0 * 1.0 / 3.0);
    }

    #[test]
    fn exact_phrase_on_identity_query() {
        let f = plain();
        let q = f.query("Security at the Transport Layer");
        let ctx = f.ranker.context(&q);
        assert_eq!(ctx.phrase_match(f.row("Security at the Transport Layer")), 4.0);
        // topic text counts too
        let q = f.query("risk governance");
        let ctx = f.ranker.context(&q);
        assert_eq!(ctx.phrase_match(f.row("Risk Governance Models")), 4.0);
    }

    #[test]
    fn token_overlap_examples() {
        let f = fixture(
            "{}",
            "[]",
            r#"{"tls":["transport layer security"]}"#,
            "[]",
            ScoringWeights::default(),
        );
        let mut q = f.query("x");
        q.expanded_tokens = vec!["tls".into(), "handshake".into()];
        let terms = f.ranker.terms(0);
        assert!(!terms.search_tokens.contains("tls"));
        assert_eq!(f.ranker.context(&q).token_overlap(0), 0.0);
        let q = f.query("tls handshake");
        // expanded: tls handshake transport layer security; row 0 has transport, layer, security
        assert_eq!(f.ranker.context(&q).token_overlap(0), 3.0 * 3.0 / 5.0);
    }

    #[test]
    fn token_overlap_half_with_alias() {
        let f = fixture(
            "{}",
            r#"[{"ka":"NS","topic":"Network Protocols and Their Security","aliases":["tls"]}]"#,
            "{}",
            "[]",
            ScoringWeights::default(),
        );
        let q = f.query("tls handshake");
        assert_eq!(q.expanded_tokens, vec!["tls".to_string(), "handshake".to_string()]);
        assert_eq!(f.ranker.context(&q).token_overlap(0), 0.5 * 3.0);
    }

    #[test]
    fn concept_boost_single_entry() {
        let f = fixture(
            r#"{"pki":[{"ka":"NS","topic_pattern":"public key infrastructure","boost":2.5}]}"#,
            "[]",
            "{}",
            "[]",
            ScoringWeights::default(),
        );
        let q = f.query("pki deployment");
        let ctx = f.ranker.context(&q);
        for r in f.ranker.rows() {
            let expect = if r.topic == "Public Key Infrastructure" {
                2.5
            } else {
                0.0
            };
            assert_eq!(ctx.curated_boosts(r.row_id).0, expect, "{}", r.im);
        }
    }

    #[test]
    fn description_boost_counts_phrases() {
        let f = fixture(
            "{}",
            r#"[{"ka":"NS","topic":"Network Protocols and Their Security","aliases":["ssl","tls"],"curriculum_phrases":["secure sockets layer"]}]"#,
            "{}",
            "[]",
            ScoringWeights::default(),
        );
        let q = f.query("SSL: the Secure Sockets Layer");
        let ctx = f.ranker.context(&q);
        assert_eq!(ctx.curated_boosts(0).1, 2.0);
        assert_eq!(ctx.curated_boosts(f.row("Block Ciphers")).1, 0.0);
    }

    #[test]
    fn empty_curation_has_no_curated_terms() {
        let f = plain();
        for raw in ["pki deployment", "supply chain", "tls"] {
            let q = f.query(raw);
            let ctx = f.ranker.context(&q);
            for id in 0..f.ranker.rows().len() {
                assert_eq!(ctx.curated_boosts(id), (0.0, 0.0));
                assert_eq!(ctx.special_rule_adjust(id), 0.0);
                assert_eq!(ctx.mismatch_penalty(id), 0.0);
            }
        }
    }

    fn weights_with_tables() -> ScoringWeights {
        let mut w = ScoringWeights::default();
        w.category_bonus.insert(
            QueryCategory::RiskGovernance,
            AffinityBonus {
                bonus: 1.5,
                kas: vec!["RMG".into()],
            },
        );
        w.cue_bonus.insert(
            ContextCue::NetworkSecurity,
            AffinityBonus {
                bonus: 1.0,
                kas: vec!["NS".into(), "PLT".into()],
            },
        );
        w.mismatch_classes.push(MismatchClass {
            name: "webification".into(),
            when_any_cue: vec![ContextCue::NetworkSecurity, ContextCue::Cryptography],
            unless_any_token: vec!["web".into()],
            ka: Some("WAM".into()),
            topic_pattern: Some("fundamental".into()),
            im_pattern: None,
            penalty: 2.0,
        });
        w
    }

    #[test]
    fn intent_and_context_bonuses() {
        let f = fixture("{}", "[]", "{}", "[]", weights_with_tables());
        let q = f.query("ethics of hacking in society today");
        assert_eq!(q.category, QueryCategory::Other);
        assert!(q.cues.is_empty());
        let ctx = f.ranker.context(&q);
        for id in 0..f.ranker.rows().len() {
            assert_eq!(ctx.intent_context_bonus(id), (0.0, 0.0));
        }
        let q = f.query("network tools");
        let ctx = f.ranker.context(&q);
        assert_eq!(ctx.intent_context_bonus(0).1, 1.0);
        assert_eq!(ctx.intent_context_bonus(f.row("Block Ciphers")).1, 0.0);
        let q = f.query("risk assessment and governance");
        let ctx = f.ranker.context(&q);
        let rmg = ctx.intent_context_bonus(f.row("Risk Governance Models")).0;
        let c = ctx.intent_context_bonus(f.row("Block Ciphers")).0;
        assert!(rmg > c);
    }

    #[test]
    fn mismatch_penalty_examples() {
        let f = fixture("{}", "[]", "{}", "[]", weights_with_tables());
        let web = f.row("Webification");
        let q = f.query("ethics");
        assert!(q.cues.is_empty());
        assert_eq!(f.ranker.context(&q).mismatch_penalty(web), 0.0);
        let q = f.query("network protocol handshake");
        assert_eq!(f.ranker.context(&q).mismatch_penalty(web), 2.0);
        assert_eq!(f.ranker.context(&q).mismatch_penalty(0), 0.0);
        let q = f.query("web protocol handshake");
        assert_eq!(f.ranker.context(&q).mismatch_penalty(web), 0.0);
    }

    #[test]
    fn special_rule_single_supply_chain() {
        let f = fixture(
            "{}",
            "[]",
            "{}",
            r#"[{"id":"supply-chain","triggers":["supply chain"],"promote":[{"ka":"SSL","bonus":3}]}]"#,
            ScoringWeights::default(),
        );
        let q = f.query("software supply chain attacks");
        let ctx = f.ranker.context(&q);
        for r in f.ranker.rows() {
            let expect = if r.ka_id == "SSL" { 3.0 } else { 0.0 };
            assert_eq!(ctx.special_rule_adjust(r.row_id), expect);
        }
        let q = f.query("firewall");
        let ctx = f.ranker.context(&q);
        assert!((0..f.ranker.rows().len()).all(|id| ctx.special_rule_adjust(id) == 0.0));
    }

    #[test]
    fn required_context_gates_rules() {
        let f = fixture(
            "{}",
            "[]",
            "{}",
            r#"[{"id":"r","triggers":["layer"],"demote":[{"ka":"NS","penalty":1.5}],"required_context":"privacy"}]"#,
            ScoringWeights::default(),
        );
        let q = f.query("transport layer");
        assert_eq!(f.ranker.context(&q).special_rule_adjust(0), 0.0);
        let q = f.query("privacy at the transport layer");
        assert_eq!(f.ranker.context(&q).special_rule_adjust(0), -1.5);
    }

    #[test]
    fn all_stopword_query_has_no_lexical_terms() {
        let f = plain();
        let q = f.query("the of and");
        assert!(q.tokens.is_empty());
        for s in f.ranker.score_all(&q) {
            assert_eq!(s.components.phrase_match, 0.0);
            assert_eq!(s.components.token_overlap, 0.0);
        }
    }

    #[test]
    fn single_row_tree_recomposes() {
        let lex = Lexicons::builtin();
        let tree = KnowledgeTree::from_slice(
            br#"{"knowledge_areas":[{"id":"NS","name":"Network Security","topics":[{"name":"Tools","indicative_material":["Firewalls"]}]}]}"#,
            Strictness::Strict,
        )
        .unwrap();
        let bound = bind(&CurationBundle::empty(), &tree.flatten()).unwrap();
        let ranker = Ranker::new(bound, ScoringWeights::builtin(), &lex.stopwords);
        let q = EnrichedQuery::new("network firewalls", &lex, &TermExpansions::default());
        let scored = ranker.score_all(&q);
        assert_eq!(scored.len(), 1);
        assert_eq!(scored[0].total, scored[0].components.total());
        assert!(scored[0].total > 0.0);
    }

    #[test]
    fn weights_file_strictness() {
        let builtin = ScoringWeights::builtin();
        assert!(!builtin.mismatch_classes.is_empty());
        assert_eq!(builtin.components, ComponentWeights::default());
        assert_eq!(builtin.confidence, ConfidenceThresholds::default());

        let partial = br#"{"exact_phrase_value":5.0,"components":{"phrase_match":2.0}}"#;
        let lenient = ScoringWeights::from_slice(partial, Strictness::Lenient).unwrap();
        assert_eq!(lenient.exact_phrase_value, 5.0);
        assert_eq!(lenient.components.phrase_match, 2.0);
        assert_eq!(lenient.components.token_overlap, 3.0);
        let err = ScoringWeights::from_slice(partial, Strictness::Strict).unwrap_err();
        assert!(err.to_string().contains("components.token_overlap"), "{err}");
        assert!(err.to_string().contains("partial_phrase_value"), "{err}");

        let neg = br#"{"components":{"concept_boost":-1}}"#;
        assert!(ScoringWeights::from_slice(neg, Strictness::Lenient).is_err());
        let bad_thresholds = br#"{"confidence":{"strong":2,"moderate":3}}"#;
        assert!(ScoringWeights::from_slice(bad_thresholds, Strictness::Lenient).is_err());
    }
}

//! Ordering, top-k diversification, confidence labels and the serialized
//! shape of a mapping result.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::EnrichedQuery;
use crate::ranking::{ConfidenceThresholds, ScoreComponents, ScoredRow};
use crate::table;
use crate::tree::KnowledgeRow;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_CAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Strong,
    Moderate,
    Weak,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Strong => "strong",
            Confidence::Moderate => "moderate",
            Confidence::Weak => "weak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryAnnotation {
    StrongAlignment,
    TopicLevelAlignment,
    NoStrongMatch,
}

impl QueryAnnotation {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryAnnotation::StrongAlignment => "strong_alignment",
            QueryAnnotation::TopicLevelAlignment => "topic_level_alignment",
            QueryAnnotation::NoStrongMatch => "no_strong_match",
        }
    }
}

/// Top-k size, per-topic cap and confidence cutoffs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub top_k: usize,
    pub cap: usize,
    pub thresholds: ConfidenceThresholds,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            top_k: DEFAULT_TOP_K,
            cap: DEFAULT_CAP,
            thresholds: ConfidenceThresholds::default(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        check_k_cap(self.top_k, self.cap)?;
        self.thresholds.validate()
    }
}

fn check_k_cap(k: usize, cap: usize) -> Result<()> {
    if k < 1 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    if cap < 1 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    Ok(())
}

/// Sorts by total descending, then row id ascending.
pub fn order_rows(mut scored: Vec<ScoredRow>) -> Vec<ScoredRow> {
    scored.sort_by(|a, b| {
        b.total
            .partial_cmp(&a.total)
            .unwrap_or(Ordering::Equal)
            .then(a.row_id.cmp(&b.row_id))
    });
    scored
}

/// Two-pass greedy selection over an already ordered list. Returns indices
/// into `ordered`, ascending, so selected items keep their relative order.
pub fn diversify_by<T, K, F>(ordered: &[T], k: usize, cap: usize, key: F) -> Result<Vec<usize>>
where
    K: Eq + Hash,
    F: Fn(&T) -> K,
{
    check_k_cap(k, cap)?;
    let mut taken = vec![false; ordered.len()];
    let mut per_group: HashMap<K, usize> = HashMap::new();
    let mut count = 0;
    for (i, item) in ordered.iter().enumerate() {
        if count == k {
            break;
        }
        let n = per_group.entry(key(item)).or_default();
        if *n < cap {
            *n += 1;
            taken[i] = true;
            count += 1;
        }
    }
    for t in taken.iter_mut() {
        if count == k {
            break;
        }
        if !*t {
            *t = true;
            count += 1;
        }
    }
    Ok(taken.iter().enumerate().filter_map(|(i, t)| t.then_some(i)).collect())
}

/// [`diversify_by`] grouped on `(ka_id, topic)`.
pub fn diversify(ordered: &[ScoredRow], rows: &[KnowledgeRow], k: usize, cap: usize) -> Result<Vec<ScoredRow>> {
    let picked = diversify_by(ordered, k, cap, |s| rows[s.row_id].group_key())?;
    Ok(picked.into_iter().map(|i| ordered[i]).collect())
}

pub fn label_confidence(total: f64, thresholds: &ConfidenceThresholds) -> Result<Confidence> {
    thresholds.validate()?;
    Ok(if total >= thresholds.strong {
        Confidence::Strong
    } else if total >= thresholds.moderate {
        Confidence::Moderate
    } else {
        Confidence::Weak
    })
}

pub fn annotate(candidates: &[ScoredCandidate]) -> QueryAnnotation {
    match candidates.first().map(|c| c.confidence) {
        Some(Confidence::Strong) => QueryAnnotation::StrongAlignment,
        Some(Confidence::Moderate) => QueryAnnotation::TopicLevelAlignment,
        _ => QueryAnnotation::NoStrongMatch,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub rank: usize,
    pub row: KnowledgeRow,
    pub total: f64,
    pub components: ScoreComponents,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingResult {
    pub query: EnrichedQuery,
    pub candidates: Vec<ScoredCandidate>,
    pub annotation: QueryAnnotation,
}

/// Orders, diversifies and labels a full ledger.
pub fn select(scored: Vec<ScoredRow>, rows: &[KnowledgeRow], config: &SelectionConfig) -> Result<Vec<ScoredCandidate>> {
    config.validate()?;
    let ordered = order_rows(scored);
    let picked = diversify(&ordered, rows, config.top_k, config.cap)?;
    picked
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(ScoredCandidate {
                rank: i + 1,
                row: rows[s.row_id].clone(),
                total: s.total,
                components: s.components,
                confidence: label_confidence(s.total, &config.thresholds)?,
            })
        })
        .collect()
}

/// Wire form of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub rank: usize,
    pub ka: String,
    pub topic: String,
    pub im: String,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<ScoreComponents>,
    pub confidence: Confidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub raw: String,
    pub normalized: String,
    pub tokens: Vec<String>,
    pub expanded_tokens: Vec<String>,
    pub category: crate::query::QueryCategory,
    pub cues: Vec<crate::query::ContextCue>,
}

/// Wire form of a [`MappingResult`]. Explain mode adds the query analysis,
/// per-candidate components and the annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingView {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<QueryView>,
    pub candidates: Vec<CandidateView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<QueryAnnotation>,
}

impl MappingResult {
    pub fn view(&self, explain: bool) -> MappingView {
        let q = &self.query;
        MappingView {
            query: q.raw.clone(),
            analysis: explain.then(|| QueryView {
                raw: q.raw.clone(),
                normalized: q.normalized.clone(),
                tokens: q.tokens.clone(),
                expanded_tokens: q.expanded_tokens.clone(),
                category: q.category,
                cues: q.cues.iter().copied().collect(),
            }),
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateView {
                    rank: c.rank,
                    ka: c.row.ka_id.clone(),
                    topic: c.row.topic.clone(),
                    im: c.row.im.clone(),
                    total: c.total,
                    components: explain.then_some(c.components),
                    confidence: c.confidence,
                })
                .collect(),
            annotation: explain.then_some(self.annotation),
        }
    }

    pub fn to_json(&self, explain: bool) -> String {
        serde_json::to_string(&self.view(explain)).expect("mapping view serializes")
    }

    pub fn to_table(&self, explain: bool) -> String {
        let mut headers = vec!["rank", "ka", "topic", "im", "total", "confidence"];
        if explain {
            headers.extend([
                "phrase", "overlap", "concept", "desc", "intent", "context", "special", "mismatch",
            ]);
        }
        let rows: Vec<Vec<String>> = self
            .candidates
            .iter()
            .map(|c| {
                let mut r = vec![
                    c.rank.to_string(),
                    c.row.ka_id.clone(),
                    c.row.topic.clone(),
                    c.row.im.clone(),
                    format!("{:.3}", c.total),
                    c.confidence.as_str().to_string(),
                ];
                if explain {
                    let p = &c.components;
                    for v in [
                        p.phrase_match,
                        p.token_overlap,
                        p.concept_boost,
                        p.description_boost,
                        p.intent_bonus,
                        p.context_bonus,
                        p.special_rule_adjust,
                        p.mismatch_penalty,
                    ] {
                        r.push(format!("{v:.3}"));
                    }
                }
                r
            })
            .collect();
        let mut out = format!("query: {}\n", self.query.raw);
        if explain {
            out.push_str(&format!(
                "normalized: {}\ncategory: {}\ncues: {}\n",
                self.query.normalized,
                self.query.category,
                self.query
                    .cues
                    .iter()
                    .map(|c| c.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        out.push_str(&table::render(&headers, &rows));
        if explain {
            out.push_str(&format!("annotation: {}\n", self.annotation.as_str()));
        }
        out
    }
}

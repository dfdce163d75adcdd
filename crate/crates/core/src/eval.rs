//! EXA-5, structural alignment and ECA-5 over reference datasets, with
//! `***` wildcard granularity and per-dataset / per-split aggregation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::json::{self, Strictness};
use crate::selection::SelectionConfig;
use crate::table;
use crate::tree::KnowledgeRow;

/// Literal wildcard used in reference fields.
pub const WILDCARD: &str = "***";

/// Metrics look at this many leading candidates.
pub const EVAL_DEPTH: usize = 5;

/// A reference field; `None` is the wildcard.
fn field(s: &str) -> Option<String> {
    (s.trim() != WILDCARD).then(|| s.to_string())
}

fn show(f: &Option<String>) -> &str {
    f.as_deref().unwrap_or(WILDCARD)
}

/// Case-insensitive comparison after collapsing whitespace.
pub fn same_text(a: &str, b: &str) -> bool {
    a.split_whitespace()
        .map(str::to_lowercase)
        .eq(b.split_whitespace().map(str::to_lowercase))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReferenceMapping {
    pub ka: Option<String>,
    pub topic: Option<String>,
    pub im: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveGranularity {
    FullTuple,
    KaTopic,
    KaOnly,
    OutOfAnchor,
}

impl ReferenceMapping {
    /// Builds from raw strings, treating `***` as a wildcard, and checks the
    /// wildcard pattern.
    pub fn new(ka: &str, topic: &str, im: &str) -> Result<Self> {
        let r = ReferenceMapping {
            ka: field(ka),
            topic: field(topic),
            im: field(im),
        };
        r.effective_granularity()?;
        Ok(r)
    }

    pub fn effective_granularity(&self) -> Result<EffectiveGranularity> {
        match (&self.ka, &self.topic, &self.im) {
            (Some(_), Some(_), Some(_)) => Ok(EffectiveGranularity::FullTuple),
            (Some(_), Some(_), None) => Ok(EffectiveGranularity::KaTopic),
            (Some(_), None, None) => Ok(EffectiveGranularity::KaOnly),
            (None, None, None) => Ok(EffectiveGranularity::OutOfAnchor),
            _ => Err(Error::validation(
                "reference",
                format!(
                    "wildcards must form a suffix, got ({}, {}, {})",
                    show(&self.ka),
                    show(&self.topic),
                    show(&self.im)
                ),
            )),
        }
    }

    /// Replaces the finest concrete level with a wildcard.
    pub fn coarsen(&self) -> Option<Self> {
        let mut r = self.clone();
        if r.im.is_some() {
            r.im = None;
        } else if r.topic.is_some() {
            r.topic = None;
        } else {
            return None;
        }
        Some(r)
    }
}

impl fmt::Display for ReferenceMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / {}", show(&self.ka), show(&self.topic), show(&self.im))
    }
}

fn ka_matches(row: &KnowledgeRow, ka: &str) -> bool {
    same_text(&row.ka_id, ka) || same_text(&row.ka_name, ka)
}

fn level_match(row: &KnowledgeRow, r: &ReferenceMapping, levels: usize) -> bool {
    let ka = r.ka.as_deref().is_some_and(|k| ka_matches(row, k));
    let topic = levels < 2 || r.topic.as_deref().is_some_and(|t| same_text(&row.topic, t));
    let im = levels < 3 || r.im.as_deref().is_some_and(|i| same_text(&row.im, i));
    ka && topic && im
}

fn depth(g: EffectiveGranularity) -> usize {
    match g {
        EffectiveGranularity::FullTuple => 3,
        EffectiveGranularity::KaTopic => 2,
        EffectiveGranularity::KaOnly => 1,
        EffectiveGranularity::OutOfAnchor => 0,
    }
}

/// Equality on every level the reference fixes. The KA may be given by id
/// or by name. Always false for out-of-anchor references.
pub fn exact_match(row: &KnowledgeRow, reference: &ReferenceMapping) -> bool {
    match reference.effective_granularity() {
        Ok(EffectiveGranularity::OutOfAnchor) | Err(_) => false,
        Ok(g) => level_match(row, reference, depth(g)),
    }
}

pub fn exa5(candidates: &[KnowledgeRow], reference: &ReferenceMapping) -> bool {
    candidates.iter().take(EVAL_DEPTH).any(|c| exact_match(c, reference))
}

/// A match one level coarser than the reference's granularity; a KA-only
/// reference still needs the KA.
pub fn structural_alignment(candidates: &[KnowledgeRow], reference: &ReferenceMapping) -> bool {
    let levels = match reference.effective_granularity() {
        Ok(EffectiveGranularity::OutOfAnchor) | Err(_) => return false,
        Ok(g) => depth(g).saturating_sub(1).max(1),
    };
    candidates
        .iter()
        .take(EVAL_DEPTH)
        .any(|c| level_match(c, reference, levels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertLabel {
    Exact,
    ClosestAcceptable,
    RelevantNotClosest,
    NotAcceptable,
}

impl ExpertLabel {
    pub fn is_acceptable(self) -> bool {
        matches!(self, ExpertLabel::Exact | ExpertLabel::ClosestAcceptable)
    }
}

/// True iff any of the first `n_candidates` (at most five) ranks carries an
/// acceptable label. Every one of those ranks must be labeled.
pub fn eca5(labels: &BTreeMap<usize, ExpertLabel>, n_candidates: usize) -> Result<bool> {
    let n = n_candidates.min(EVAL_DEPTH);
    let mut any = false;
    for rank in 1..=n {
        match labels.get(&rank) {
            Some(l) => any |= l.is_acceptable(),
            None => return Err(Error::IncompleteLabels(format!("rank {rank} of {n} is unlabeled"))),
        }
    }
    Ok(any)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub query_id: String,
    pub kwop: String,
    pub reference: ReferenceMapping,
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub query_id: String,
    pub kwop: String,
    pub ref_ka: String,
    pub ref_topic: String,
    pub ref_im: String,
}

impl From<&DatasetRecord> for RawRecord {
    fn from(r: &DatasetRecord) -> Self {
        RawRecord {
            query_id: r.query_id.clone(),
            kwop: r.kwop.clone(),
            ref_ka: show(&r.reference.ka).to_string(),
            ref_topic: show(&r.reference.topic).to_string(),
            ref_im: show(&r.reference.im).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    /// Parses JSON Lines. Strict mode fails on the first bad line; lenient
    /// mode skips it and returns a warning per skipped line.
    pub fn parse(name: &str, text: &str, mode: Strictness) -> Result<(Self, Vec<String>)> {
        let mut records = Vec::new();
        let mut warnings = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let source = format!("{name}:{}", i + 1);
            let parsed = json::from_slice::<RawRecord>(line.as_bytes(), &source, mode).and_then(|raw| {
                let reference = ReferenceMapping::new(&raw.ref_ka, &raw.ref_topic, &raw.ref_im)
                    .map_err(|e| Error::validation(&source, e.to_string()))?;
                if !ids.insert(raw.query_id.clone()) {
                    return Err(Error::validation(
                        &source,
                        format!("duplicate query_id \"{}\"", raw.query_id),
                    ));
                }
                Ok(DatasetRecord {
                    query_id: raw.query_id,
                    kwop: raw.kwop,
                    reference,
                })
            });
            match parsed {
                Ok(r) => records.push(r),
                Err(e) if !mode.is_strict() => {
                    log::warn!("skipping record: {e}");
                    warnings.push(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        Ok((
            Dataset {
                name: name.to_string(),
                records,
            },
            warnings,
        ))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(&RawRecord::from(r)).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn record(&self, query_id: &str) -> Option<&DatasetRecord> {
        self.records.iter().find(|r| r.query_id == query_id)
    }
}

/// One line of a label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub dataset: String,
    pub query_id: String,
    pub rank: usize,
    pub label: ExpertLabel,
}

/// Effective labels keyed by dataset, then query, then rank.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    entries: BTreeMap<String, BTreeMap<String, BTreeMap<usize, ExpertLabel>>>,
}

impl LabelSet {
    /// Adds one label; a second label for the same cell is an error.
    pub fn insert(&mut self, r: LabelRecord) -> Result<()> {
        if r.rank < 1 {
            return Err(Error::validation(
                format!("{}/{}", r.dataset, r.query_id),
                "ranks start at 1",
            ));
        }
        let cell = self
            .entries
            .entry(r.dataset.clone())
            .or_default()
            .entry(r.query_id.clone())
            .or_default();
        if cell.insert(r.rank, r.label).is_some() {
            return Err(Error::validation(
                format!("{}/{}", r.dataset, r.query_id),
                format!("duplicate label for rank {}", r.rank),
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str, mode: Strictness) -> Result<Self> {
        let mut set = LabelSet::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: LabelRecord = json::from_slice(line.as_bytes(), &format!("labels:{}", i + 1), mode)?;
            set.insert(r)?;
        }
        Ok(set)
    }

    pub fn for_query(&self, dataset: &str, query_id: &str) -> Option<&BTreeMap<usize, ExpertLabel>> {
        self.entries.get(dataset)?.get(query_id)
    }

    pub fn records(&self) -> impl Iterator<Item = LabelRecord> + '_ {
        self.entries.iter().flat_map(|(d, qs)| {
            qs.iter().flat_map(move |(q, ranks)| {
                ranks.iter().map(move |(rank, label)| LabelRecord {
                    dataset: d.clone(),
                    query_id: q.clone(),
                    rank: *rank,
                    label: *label,
                })
            })
        })
    }

    pub fn len(&self) -> usize {
        self.records().count()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|qs| qs.values().all(BTreeMap::is_empty))
    }

    /// JSON Lines, sorted by dataset, query id and rank.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("label serializes"));
            out.push('\n');
        }
        out
    }
}

/// ECA-5 outcome of one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eca5Outcome {
    /// No label source was supplied.
    Unlabeled,
    /// Some of the query's ranks lack labels.
    Pending,
    Decided(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub granularity: EffectiveGranularity,
    pub exa5: bool,
    pub structural: bool,
    pub eca5: Eca5Outcome,
}

/// Scores one record against its candidate list.
pub fn evaluate_query(
    record: &DatasetRecord,
    candidates: &[KnowledgeRow],
    labels: Option<&BTreeMap<usize, ExpertLabel>>,
    labels_supplied: bool,
) -> Result<QueryOutcome> {
    let granularity = record.reference.effective_granularity()?;
    let n = candidates.len().min(EVAL_DEPTH);
    if let Some(ls) = labels {
        if let Some((&rank, _)) = ls.iter().find(|(r, _)| **r > candidates.len()) {
            return Err(Error::validation(
                &record.query_id,
                format!("label for rank {rank} but only {} candidates", candidates.len()),
            ));
        }
    }
    let eca5 = if !labels_supplied || granularity == EffectiveGranularity::OutOfAnchor {
        Eca5Outcome::Unlabeled
    } else {
        let empty = BTreeMap::new();
        match eca5(labels.unwrap_or(&empty), n) {
            Ok(v) => Eca5Outcome::Decided(v),
            Err(Error::IncompleteLabels(_)) => Eca5Outcome::Pending,
            Err(e) => return Err(e),
        }
    };
    Ok(QueryOutcome {
        query_id: record.query_id.clone(),
        granularity,
        exa5: exa5(candidates, &record.reference),
        structural: structural_alignment(candidates, &record.reference),
        eca5,
    })
}

/// Percentage held as integer hundredths; serialized as a number with at
/// most two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(pub u64);

impl Percent {
    /// `100 * successes / denominator`, rounded half-up to two decimals in
    /// exact integer arithmetic.
    pub fn of(successes: usize, denominator: usize) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::EmptyDataset("no anchored queries to score".into()));
        }
        if successes > denominator {
            return Err(Error::InvalidArgument(format!(
                "{successes} successes exceed denominator {denominator}"
            )));
        }
        let (s, d) = (successes as u128, denominator as u128);
        Ok(Percent(((20_000 * s + d) / (2 * d)) as u64))
    }

    pub fn hundredths(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0 as f64 / 100.0)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Percent((v * 100.0).round() as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eca5Status {
    Unlabeled,
    Pending,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eca5Summary {
    pub status: Eca5Status,
    /// Anchored queries whose top candidates are fully labeled.
    pub labeled: usize,
    pub successes: usize,
    pub coverage_pct: Option<Percent>,
    /// Over fully labeled queries only.
    pub partial_pct: Option<Percent>,
    /// Set only when every anchored query is labeled.
    pub pct: Option<Percent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub n_queries: usize,
    pub n_out_of_anchor: usize,
    pub exa5_successes: usize,
    pub structural_successes: usize,
    pub exa5_pct: Percent,
    pub structural_pct: Percent,
    pub eca5: Eca5Summary,
}

/// Raw counts behind a [`ReportRow`]; split rows add these, never
/// percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub n_queries: usize,
    pub n_out_of_anchor: usize,
    pub exa5: usize,
    pub structural: usize,
    pub eca5_labeled: usize,
    pub eca5: usize,
    pub labels_supplied: bool,
}

impl Counts {
    pub fn from_outcomes(outcomes: &[QueryOutcome], labels_supplied: bool) -> Self {
        let mut c = Counts {
            labels_supplied,
            ..Default::default()
        };
        for o in outcomes {
            c.n_queries += 1;
            if o.granularity == EffectiveGranularity::OutOfAnchor {
                c.n_out_of_anchor += 1;
                continue;
            }
            c.exa5 += o.exa5 as usize;
            c.structural += o.structural as usize;
            if let Eca5Outcome::Decided(v) = o.eca5 {
                c.eca5_labeled += 1;
                c.eca5 += v as usize;
            }
        }
        c
    }

    pub fn merge(self, o: Counts) -> Counts {
        Counts {
            n_queries: self.n_queries + o.n_queries,
            n_out_of_anchor: self.n_out_of_anchor + o.n_out_of_anchor,
            exa5: self.exa5 + o.exa5,
            structural: self.structural + o.structural,
            eca5_labeled: self.eca5_labeled + o.eca5_labeled,
            eca5: self.eca5 + o.eca5,
            labels_supplied: self.labels_supplied || o.labels_supplied,
        }
    }

    pub fn anchored(&self) -> usize {
        self.n_queries - self.n_out_of_anchor
    }

    pub fn row(&self, name: &str) -> Result<ReportRow> {
        let d = self.anchored();
        if d == 0 {
            return Err(Error::EmptyDataset(format!("\"{name}\" has no anchored queries")));
        }
        let eca5 = if !self.labels_supplied {
            Eca5Summary {
                status: Eca5Status::Unlabeled,
                labeled: 0,
                successes: 0,
                coverage_pct: None,
                partial_pct: None,
                pct: None,
            }
        } else {
            let complete = self.eca5_labeled == d;
            Eca5Summary {
                status: if complete {
                    Eca5Status::Complete
                } else {
                    Eca5Status::Pending
                },
                labeled: self.eca5_labeled,
                successes: self.eca5,
                coverage_pct: Some(Percent::of(self.eca5_labeled, d)?),
                partial_pct: if self.eca5_labeled > 0 {
                    Some(Percent::of(self.eca5, self.eca5_labeled)?)
                } else {
                    None
                },
                pct: if complete {
                    Some(Percent::of(self.eca5, d)?)
                } else {
                    None
                },
            }
        };
        Ok(ReportRow {
            name: name.to_string(),
            n_queries: self.n_queries,
            n_out_of_anchor: self.n_out_of_anchor,
            exa5_successes: self.exa5,
            structural_successes: self.structural,
            exa5_pct: Percent::of(self.exa5, d)?,
            structural_pct: Percent::of(self.structural, d)?,
            eca5,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub datasets: Vec<ReportRow>,
    pub split: ReportRow,
}

/// Per-dataset rows plus a split row recomputed from summed raw counts.
pub fn aggregate(per_dataset: &[(String, Counts)], split_name: &str) -> Result<EvaluationReport> {
    if per_dataset.is_empty() {
        return Err(Error::EmptyDataset("no datasets".into()));
    }
    let datasets = per_dataset
        .iter()
        .map(|(name, c)| c.row(name))
        .collect::<Result<Vec<_>>>()?;
    let total = per_dataset.iter().fold(Counts::default(), |acc, (_, c)| acc.merge(*c));
    Ok(EvaluationReport {
        datasets,
        split: total.row(split_name)?,
    })
}

/// Outcomes for a dataset whose candidate lists are already known.
pub fn evaluate_dataset(
    dataset: &Dataset,
    candidates: &[Vec<KnowledgeRow>],
    labels: Option<&LabelSet>,
) -> Result<Vec<QueryOutcome>> {
    debug_assert_eq!(dataset.records.len(), candidates.len());
    dataset
        .records
        .iter()
        .zip(candidates)
        .map(|(r, c)| {
            let ls = labels.and_then(|l| l.for_query(&dataset.name, &r.query_id));
            evaluate_query(r, c, ls, labels.is_some())
        })
        .collect()
}

/// Maps every record in parallel, keeping input order.
pub fn map_dataset(engine: &Engine, dataset: &Dataset, config: &SelectionConfig) -> Result<Vec<Vec<KnowledgeRow>>> {
    dataset
        .records
        .par_iter()
        .map(|r| {
            engine
                .map_query(&r.kwop, config)
                .map(|m| m.candidates.into_iter().map(|c| c.row).collect())
        })
        .collect()
}

pub fn run_benchmark(
    engine: &Engine,
    datasets: &[Dataset],
    labels: Option<&LabelSet>,
    split_name: &str,
    config: &SelectionConfig,
) -> Result<EvaluationReport> {
    let mut counts = Vec::with_capacity(datasets.len());
    for d in datasets {
        let candidates = map_dataset(engine, d, config)?;
        let outcomes = evaluate_dataset(d, &candidates, labels)?;
        counts.push((d.name.clone(), Counts::from_outcomes(&outcomes, labels.is_some())));
    }
    aggregate(&counts, split_name)
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per dataset and a final split line.
    pub fn to_table(&self) -> String {
        let fmt_row = |r: &ReportRow| {
            let eca5 = match r.eca5.status {
                Eca5Status::Unlabeled => "—".to_string(),
                Eca5Status::Pending => format!("pending ({}/{})", r.eca5.labeled, r.n_queries - r.n_out_of_anchor),
                Eca5Status::Complete => format!("{}%", r.eca5.pct.expect("complete has pct")),
            };
            vec![
                r.name.clone(),
                r.n_queries.to_string(),
                r.n_out_of_anchor.to_string(),
                format!("{}%", r.exa5_pct),
                format!("{}%", r.structural_pct),
                eca5,
            ]
        };
        let mut rows: Vec<Vec<String>> = self.datasets.iter().map(fmt_row).collect();
        rows.push(fmt_row(&self.split));
        table::render(
            &["dataset", "kwops", "out_of_anchor", "exa5", "structural", "eca5"],
            &rows,
        )
    }
}

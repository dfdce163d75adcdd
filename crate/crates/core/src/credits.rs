//! Module credit allocations aggregated into per-KA and per-category
//! coverage profiles.
//!
//! Sums are taken over sorted value lists, so a profile does not depend on
//! the order modules were supplied in.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, Strictness};
use crate::table;
use crate::tree::KnowledgeTree;

pub const BROAD_CATEGORIES_FILE: &str = "broad_categories.json";
pub const MODULES_FILE: &str = "modules_credits.json";

/// Slack allowed when comparing allocation sums against a module total.
pub const ALLOCATION_EPSILON: f64 = 1e-9;

const BUILTIN_CATEGORIES: &str = include_str!("../data/broad_categories.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub ka: String,
    pub credits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleCredit {
    pub module_name: String,
    /// One credit is ten notional learning hours.
    pub total_credits: f64,
    #[serde(default)]
    pub allocations: Vec<Allocation>,
}

impl ModuleCredit {
    pub fn allocated(&self) -> f64 {
        sorted_sum(self.allocations.iter().map(|a| a.credits))
    }

    /// Checks amounts and KA ids against the tree. Returns the error path
    /// prefix `modules[i]` supplied by the caller.
    pub fn validate(&self, path: &str, tree: &KnowledgeTree) -> Result<()> {
        if self.module_name.trim().is_empty() {
            return Err(Error::validation(format!("{path}.module_name"), "empty module name"));
        }
        if !(self.total_credits.is_finite() && self.total_credits > 0.0) {
            return Err(Error::validation(
                format!("{path}.total_credits"),
                format!("total credits must be positive, got {}", self.total_credits),
            ));
        }
        let mut seen = HashSet::new();
        for (i, a) in self.allocations.iter().enumerate() {
            let a_path = format!("{path}.allocations[{i}]");
            if !(a.credits.is_finite() && a.credits >= 0.0) {
                return Err(Error::validation(
                    a_path,
                    format!("credits must be non-negative, got {}", a.credits),
                ));
            }
            let Some(ka) = tree.knowledge_area(&a.ka) else {
                return Err(Error::validation(
                    a_path,
                    format!("unknown knowledge area \"{}\"", a.ka),
                ));
            };
            if !seen.insert(ka.id.clone()) {
                return Err(Error::validation(
                    a_path,
                    format!("duplicate allocation to \"{}\"", ka.id),
                ));
            }
        }
        let allocated = self.allocated();
        if allocated > self.total_credits + ALLOCATION_EPSILON {
            return Err(Error::validation(
                path,
                format!(
                    "module \"{}\" allocates {allocated} of {} credits",
                    self.module_name, self.total_credits
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulesFile {
    pub modules: Vec<ModuleCredit>,
}

impl ModulesFile {
    pub fn from_slice(bytes: &[u8], mode: Strictness) -> Result<Self> {
        json::from_slice(bytes, MODULES_FILE, mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadCategory {
    pub name: String,
    pub kas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraGroup {
    pub label: String,
    pub kas: Vec<String>,
}

/// KA grouping for reports. Extras are reporting-only groups that may
/// overlap the categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadCategoryMap {
    pub categories: Vec<BroadCategory>,
    #[serde(default)]
    pub extras: Vec<ExtraGroup>,
}

impl BroadCategoryMap {
    pub fn builtin() -> Self {
        Self::from_slice(BUILTIN_CATEGORIES.as_bytes(), Strictness::Strict).expect("builtin categories are valid")
    }

    pub fn from_slice(bytes: &[u8], mode: Strictness) -> Result<Self> {
        let map: BroadCategoryMap = json::from_slice(bytes, BROAD_CATEGORIES_FILE, mode)?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<String, &str> = BTreeMap::new();
        for (i, c) in self.categories.iter().enumerate() {
            for ka in &c.kas {
                if let Some(prev) = owner.insert(ka.to_uppercase(), &c.name) {
                    return Err(Error::validation(
                        format!("categories[{i}]"),
                        format!("knowledge area \"{ka}\" already belongs to \"{prev}\""),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaCredit {
    pub ka: String,
    pub credits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCredit {
    pub category: String,
    pub credits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageProfile {
    /// Descending by credits, then by KA id.
    pub per_ka: Vec<KaCredit>,
    /// In category-map order.
    pub per_category: Vec<CategoryCredit>,
    pub extras: Vec<CategoryCredit>,
    /// Credits on KAs that belong to no category.
    pub uncategorized: f64,
    pub total_credits: f64,
    pub allocated: f64,
    pub unallocated: f64,
}

fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().fold(0.0, |acc, x| acc + x)
}

pub fn aggregate_credits(
    modules: &[ModuleCredit],
    categories: &BroadCategoryMap,
    tree: &KnowledgeTree,
) -> Result<CoverageProfile> {
    categories.validate()?;
    let mut names = HashSet::new();
    for (i, m) in modules.iter().enumerate() {
        let path = format!("modules[{i}]");
        m.validate(&path, tree)?;
        if !names.insert(m.module_name.as_str()) {
            return Err(Error::validation(
                path,
                format!("duplicate module \"{}\"", m.module_name),
            ));
        }
    }

    let mut by_ka: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in modules {
        for a in &m.allocations {
            let id = tree.knowledge_area(&a.ka).map(|k| k.id.clone()).unwrap_or_default();
            by_ka.entry(id).or_default().push(a.credits);
        }
    }
    let ka_totals: BTreeMap<String, f64> = by_ka.into_iter().map(|(k, v)| (k, sorted_sum(v.into_iter()))).collect();
    let lookup = |ka: &str| {
        ka_totals
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(ka))
            .map_or(0.0, |(_, v)| *v)
    };

    let group_total = |kas: &[String]| {
        let mut seen = HashSet::new();
        sorted_sum(kas.iter().filter(|k| seen.insert(k.to_uppercase())).map(|k| lookup(k)))
    };
    let per_category = categories
        .categories
        .iter()
        .map(|c| CategoryCredit {
            category: c.name.clone(),
            credits: group_total(&c.kas),
        })
        .collect();
    let extras = categories
        .extras
        .iter()
        .map(|e| CategoryCredit {
            category: e.label.clone(),
            credits: group_total(&e.kas),
        })
        .collect();
    let categorized: HashSet<String> = categories
        .categories
        .iter()
        .flat_map(|c| c.kas.iter().map(|k| k.to_uppercase()))
        .collect();
    let uncategorized = sorted_sum(
        ka_totals
            .iter()
            .filter(|(k, _)| !categorized.contains(&k.to_uppercase()))
            .map(|(_, v)| *v),
    );

    let mut per_ka: Vec<KaCredit> = ka_totals
        .iter()
        .map(|(ka, credits)| KaCredit {
            ka: ka.clone(),
            credits: *credits,
        })
        .collect();
    per_ka.sort_by(|a, b| b.credits.total_cmp(&a.credits).then_with(|| a.ka.cmp(&b.ka)));

    let total_credits = sorted_sum(modules.iter().map(|m| m.total_credits));
    let allocated = sorted_sum(modules.iter().flat_map(|m| m.allocations.iter().map(|a| a.credits)));
    Ok(CoverageProfile {
        per_ka,
        per_category,
        extras,
        uncategorized,
        total_credits,
        allocated,
        unallocated: total_credits - allocated,
    })
}

impl CoverageProfile {
    /// Chart-ready CSV: a `ka_id,credits` table, a blank line, a
    /// `category,credits` table, and an `extra,credits` table if any.
    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        let mut section = |header: [&str; 2], rows: Vec<(String, f64)>| {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).expect("in-memory write");
            for (name, credits) in rows {
                w.write_record([name, credits.to_string()]).expect("in-memory write");
            }
            let bytes = w.into_inner().expect("in-memory flush");
            if !out.is_empty() {
                out.push(b'\n');
            }
            out.extend(bytes);
        };
        section(
            ["ka_id", "credits"],
            self.per_ka.iter().map(|k| (k.ka.clone(), k.credits)).collect(),
        );
        section(
            ["category", "credits"],
            self.per_category
                .iter()
                .map(|c| (c.category.clone(), c.credits))
                .collect(),
        );
        if !self.extras.is_empty() {
            section(
                ["extra", "credits"],
                self.extras.iter().map(|c| (c.category.clone(), c.credits)).collect(),
            );
        }
        String::from_utf8(out).expect("csv is utf-8")
    }

    pub fn to_table(&self) -> String {
        let ka_rows: Vec<Vec<String>> = self
            .per_ka
            .iter()
            .map(|k| vec![k.ka.clone(), format!("{}", k.credits)])
            .collect();
        let cat_rows: Vec<Vec<String>> = self
            .per_category
            .iter()
            .chain(&self.extras)
            .map(|c| vec![c.category.clone(), format!("{}", c.credits)])
            .collect();
        format!(
            "{}\n{}\nuncategorized: {}\ntotal: {}  allocated: {}  unallocated: {}\n",
            table::render(&["ka", "credits"], &ka_rows),
            table::render(&["category", "credits"], &cat_rows),
            self.uncategorized,
            self.total_credits,
            self.allocated,
            self.unallocated
        )
    }
}

//! The CyBOK knowledge tree: loading, validation, flattening into candidate
//! rows, and hierarchy browsing.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{self, Strictness};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTree {
    pub knowledge_areas: Vec<KnowledgeArea>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeArea {
    /// Short code such as `NS`.
    pub id: String,
    pub name: String,
    pub topics: Vec<Topic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub indicative_material: Vec<String>,
}

/// One flattened (KA, Topic, IM) leaf; the unit of retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRow {
    /// Dense ordinal in tree order.
    pub row_id: usize,
    pub ka_id: String,
    pub ka_name: String,
    pub topic: String,
    pub im: String,
    /// Lowercase concatenation of KA name, topic, IM and any bound aliases.
    pub search_text: String,
}

impl KnowledgeRow {
    /// Topic grouping key used by diversification.
    pub fn group_key(&self) -> (&str, &str) {
        (&self.ka_id, &self.topic)
    }
}

/// Result of [`KnowledgeTree::browse`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum Listing {
    KnowledgeAreas {
        entries: Vec<KaEntry>,
    },
    Topics {
        ka: String,
        entries: Vec<String>,
    },
    IndicativeMaterial {
        ka: String,
        topic: String,
        entries: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaEntry {
    pub id: String,
    pub name: String,
    pub topics: usize,
}

impl KnowledgeTree {
    /// Reads and validates a tree from a JSON byte stream.
    pub fn load<R: Read>(mut source: R, mode: Strictness) -> Result<Self> {
        let mut buf = Vec::new();
        source
            .read_to_end(&mut buf)
            .map_err(|e| Error::parse("knowledge tree", e))?;
        Self::from_slice(&buf, mode)
    }

    pub fn from_slice(bytes: &[u8], mode: Strictness) -> Result<Self> {
        let tree: KnowledgeTree = json::from_slice(bytes, "knowledge tree", mode)?;
        tree.validate()?;
        Ok(tree)
    }

    /// Checks every structural invariant, reporting the first violation with
    /// a path into the document.
    pub fn validate(&self) -> Result<()> {
        if self.knowledge_areas.is_empty() {
            return Err(Error::validation("knowledge_areas", "tree has no knowledge areas"));
        }
        let mut ka_ids = HashSet::new();
        for (ki, ka) in self.knowledge_areas.iter().enumerate() {
            let ka_path = format!("knowledge_areas[{ki}]");
            if ka.id.trim().is_empty() {
                return Err(Error::validation(format!("{ka_path}.id"), "empty KA id"));
            }
            if ka.name.trim().is_empty() {
                return Err(Error::validation(format!("{ka_path}.name"), "empty KA name"));
            }
            if !ka_ids.insert(ka.id.to_lowercase()) {
                return Err(Error::validation(
                    format!("{ka_path}.id"),
                    format!("duplicate KA id \"{}\"", ka.id),
                ));
            }
            if ka.topics.is_empty() {
                return Err(Error::validation(
                    format!("{ka_path}.topics"),
                    format!("KA \"{}\" has no topics", ka.id),
                ));
            }
            let mut topics = HashSet::new();
            for (ti, topic) in ka.topics.iter().enumerate() {
                let t_path = format!("{ka_path}({}).topics[{ti}]", ka.id);
                if topic.name.trim().is_empty() {
                    return Err(Error::validation(format!("{t_path}.name"), "empty topic name"));
                }
                if !topics.insert(topic.name.to_lowercase()) {
                    return Err(Error::validation(
                        t_path,
                        format!("duplicate topic \"{}\" in KA \"{}\"", topic.name, ka.id),
                    ));
                }
                if topic.indicative_material.is_empty() {
                    return Err(Error::validation(
                        format!("{t_path}.indicative_material"),
                        format!("topic \"{}\" has no indicative material", topic.name),
                    ));
                }
                let mut ims = HashSet::new();
                for (ii, im) in topic.indicative_material.iter().enumerate() {
                    let i_path = format!("{t_path}.indicative_material[{ii}]");
                    if im.trim().is_empty() {
                        return Err(Error::validation(i_path, "empty indicative material"));
                    }
                    if !ims.insert(im.to_lowercase()) {
                        return Err(Error::validation(
                            i_path,
                            format!("duplicate indicative material \"{im}\""),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// One row per leaf path, numbered in tree order.
    pub fn flatten(&self) -> Vec<KnowledgeRow> {
        let mut rows = Vec::new();
        for ka in &self.knowledge_areas {
            for topic in &ka.topics {
                for im in &topic.indicative_material {
                    rows.push(KnowledgeRow {
                        row_id: rows.len(),
                        ka_id: ka.id.clone(),
                        ka_name: ka.name.clone(),
                        topic: topic.name.clone(),
                        im: im.clone(),
                        search_text: format!("{} {} {}", ka.name, topic.name, im).to_lowercase(),
                    });
                }
            }
        }
        rows
    }

    pub fn knowledge_area(&self, id: &str) -> Option<&KnowledgeArea> {
        self.knowledge_areas.iter().find(|ka| ka.id.eq_ignore_ascii_case(id))
    }

    /// Lists KAs, the topics of one KA, or the IMs of one topic.
    pub fn browse(&self, ka_id: Option<&str>, topic: Option<&str>) -> Result<Listing> {
        let Some(ka_id) = ka_id else {
            if topic.is_some() {
                return Err(Error::InvalidArgument("a topic filter requires a KA filter".into()));
            }
            return Ok(Listing::KnowledgeAreas {
                entries: self
                    .knowledge_areas
                    .iter()
                    .map(|ka| KaEntry {
                        id: ka.id.clone(),
                        name: ka.name.clone(),
                        topics: ka.topics.len(),
                    })
                    .collect(),
            });
        };
        let ka = self
            .knowledge_area(ka_id)
            .ok_or_else(|| Error::NotFound(format!("knowledge area \"{ka_id}\"")))?;
        match topic {
            None => Ok(Listing::Topics {
                ka: ka.id.clone(),
                entries: ka.topics.iter().map(|t| t.name.clone()).collect(),
            }),
            Some(name) => {
                let t = ka
                    .topics
                    .iter()
                    .find(|t| t.name.eq_ignore_ascii_case(name))
                    .ok_or_else(|| Error::NotFound(format!("topic \"{name}\" in knowledge area \"{}\"", ka.id)))?;
                Ok(Listing::IndicativeMaterial {
                    ka: ka.id.clone(),
                    topic: t.name.clone(),
                    entries: t.indicative_material.clone(),
                })
            }
        }
    }
}

//! Query normalization, curated expansion, classification and context cues.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{self, Stopwords};

/// Coarse intent of a query; exactly one per query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryCategory {
    DirectTermLookup,
    ConceptualDefinition,
    BroadOverview,
    RiskGovernance,
    CryptoProtocol,
    AiForSecurity,
    Other,
}

/// Domain hint derived from the (expanded) query tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextCue {
    Privacy,
    NetworkSecurity,
    Cryptography,
    SoftwareSecurity,
    HumanFactors,
    RiskManagement,
    StorageSecurity,
    FormalMethods,
}

impl ContextCue {
    pub const ALL: [ContextCue; 8] = [
        ContextCue::Privacy,
        ContextCue::NetworkSecurity,
        ContextCue::Cryptography,
        ContextCue::SoftwareSecurity,
        ContextCue::HumanFactors,
        ContextCue::RiskManagement,
        ContextCue::StorageSecurity,
        ContextCue::FormalMethods,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextCue::Privacy => "privacy",
            ContextCue::NetworkSecurity => "network_security",
            ContextCue::Cryptography => "cryptography",
            ContextCue::SoftwareSecurity => "software_security",
            ContextCue::HumanFactors => "human_factors",
            ContextCue::RiskManagement => "risk_management",
            ContextCue::StorageSecurity => "storage_security",
            ContextCue::FormalMethods => "formal_methods",
        }
    }
}

impl fmt::Display for ContextCue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextCue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContextCue::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown context cue \"{s}\"")))
    }
}

impl QueryCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryCategory::DirectTermLookup => "direct_term_lookup",
            QueryCategory::ConceptualDefinition => "conceptual_definition",
            QueryCategory::BroadOverview => "broad_overview",
            QueryCategory::RiskGovernance => "risk_governance",
            QueryCategory::CryptoProtocol => "crypto_protocol",
            QueryCategory::AiForSecurity => "ai_for_security",
            QueryCategory::Other => "other",
        }
    }
}

impl fmt::Display for QueryCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Phrase lists driving the classification cascade. Entries are normalized
/// phrases matched on word boundaries against the normalized query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLexicons {
    pub overview: Vec<String>,
    pub definition: Vec<String>,
    pub risk_governance: Vec<String>,
    pub crypto_protocol: Vec<String>,
    pub ai: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicons {
    pub stopwords: Stopwords,
    pub cues: BTreeMap<ContextCue, BTreeSet<String>>,
    pub categories: CategoryLexicons,
}

const BUILTIN_STOPWORDS: &str = include_str!("../data/lexicons/stopwords.txt");
const BUILTIN_CUES: [(ContextCue, &str); 8] = [
    (ContextCue::Privacy, include_str!("../data/lexicons/cues/privacy.txt")),
    (
        ContextCue::NetworkSecurity,
        include_str!("../data/lexicons/cues/network_security.txt"),
    ),
    (
        ContextCue::Cryptography,
        include_str!("../data/lexicons/cues/cryptography.txt"),
    ),
    (
        ContextCue::SoftwareSecurity,
        include_str!("../data/lexicons/cues/software_security.txt"),
    ),
    (
        ContextCue::HumanFactors,
        include_str!("../data/lexicons/cues/human_factors.txt"),
    ),
    (
        ContextCue::RiskManagement,
        include_str!("../data/lexicons/cues/risk_management.txt"),
    ),
    (
        ContextCue::StorageSecurity,
        include_str!("../data/lexicons/cues/storage_security.txt"),
    ),
    (
        ContextCue::FormalMethods,
        include_str!("../data/lexicons/cues/formal_methods.txt"),
    ),
];
const BUILTIN_CATEGORIES: [(&str, &str); 5] = [
    ("overview", include_str!("../data/lexicons/categories/overview.txt")),
    ("definition", include_str!("../data/lexicons/categories/definition.txt")),
    (
        "risk_governance",
        include_str!("../data/lexicons/categories/risk_governance.txt"),
    ),
    (
        "crypto_protocol",
        include_str!("../data/lexicons/categories/crypto_protocol.txt"),
    ),
    ("ai", include_str!("../data/lexicons/categories/ai.txt")),
];

impl Lexicons {
    /// The lexicons shipped with the crate.
    pub fn builtin() -> Self {
        Self::build(|_| Ok(None)).expect("builtin lexicons are valid")
    }

    /// Loads lexicons from `dir`, falling back to the builtin list for any
    /// file the directory does not provide.
    ///
    /// Layout: `stopwords.txt`, `cues/<cue>.txt`, `categories/<name>.txt`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        Self::build(|rel| {
            let path = dir.join(rel);
            if path.is_file() {
                std::fs::read_to_string(&path)
                    .map(Some)
                    .map_err(|e| Error::io(&path, e))
            } else {
                Ok(None)
            }
        })
    }

    fn build(mut read: impl FnMut(&str) -> Result<Option<String>>) -> Result<Self> {
        let mut load = |rel: String, builtin: &str| -> Result<Vec<String>> {
            Ok(match read(&rel)? {
                Some(text) => text::parse_lines(&text),
                None => text::parse_lines(builtin),
            })
        };
        let stopwords = Stopwords::new(load("stopwords.txt".into(), BUILTIN_STOPWORDS)?);
        let mut cues = BTreeMap::new();
        for (cue, builtin) in BUILTIN_CUES {
            let entries = load(format!("cues/{}.txt", cue.as_str()), builtin)?;
            if let Some(bad) = entries.iter().find(|e| e.contains(' ')) {
                return Err(Error::validation(
                    format!("cues/{}.txt", cue.as_str()),
                    format!("cue lexicon entries are single tokens, got \"{bad}\""),
                ));
            }
            cues.insert(cue, entries.into_iter().collect());
        }
        let mut cats = CategoryLexicons::default();
        for (name, builtin) in BUILTIN_CATEGORIES {
            let entries = load(format!("categories/{name}.txt"), builtin)?;
            let slot = match name {
                "overview" => &mut cats.overview,
                "definition" => &mut cats.definition,
                "risk_governance" => &mut cats.risk_governance,
                "crypto_protocol" => &mut cats.crypto_protocol,
                _ => &mut cats.ai,
            };
            *slot = entries;
        }
        Ok(Lexicons {
            stopwords,
            cues,
            categories: cats,
        })
    }
}

/// One curated rewrite: a term and the text it expands to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Expansion {
    pub text: String,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

/// Curated term → expansions table, keyed by the term's content tokens
/// (one or two tokens) joined by a space.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermExpansions {
    entries: BTreeMap<String, Vec<Expansion>>,
}

impl TermExpansions {
    pub fn new(raw: &BTreeMap<String, Vec<String>>, stopwords: &Stopwords) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (term, expansions) in raw {
            let path = format!("term_expansions[\"{term}\"]");
            let key_tokens = stopwords.content_tokens(term);
            if key_tokens.is_empty() || key_tokens.len() > 2 {
                return Err(Error::validation(path, "term must have one or two content tokens"));
            }
            let key = key_tokens.join(" ");
            if expansions.is_empty() {
                return Err(Error::validation(path, "empty expansion list"));
            }
            let mut list = Vec::with_capacity(expansions.len());
            for text in expansions {
                let tokens = stopwords.content_tokens(text);
                if tokens.is_empty() {
                    return Err(Error::validation(path, "expansion has no content tokens"));
                }
                if tokens.join(" ") == key {
                    return Err(Error::validation(path, "term appears in its own expansion list"));
                }
                list.push(Expansion {
                    text: text::normalize_phrase(text),
                    tokens,
                });
            }
            if entries.insert(key.clone(), list).is_some() {
                return Err(Error::validation(path, format!("duplicate term \"{key}\"")));
            }
        }
        Ok(TermExpansions { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[Expansion]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Expansion])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchedExpansion {
    pub term: String,
    pub expansion: String,
}

/// A raw query after the full enrichment pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnrichedQuery {
    pub raw: String,
    pub normalized: String,
    pub tokens: Vec<String>,
    pub expanded_tokens: Vec<String>,
    pub matched_expansions: Vec<MatchedExpansion>,
    pub category: QueryCategory,
    pub cues: BTreeSet<ContextCue>,
}

impl EnrichedQuery {
    pub fn new(raw: &str, lexicons: &Lexicons, expansions: &TermExpansions) -> Self {
        let (normalized, tokens) = normalize(raw, &lexicons.stopwords);
        let (expanded_tokens, matched_expansions) = expand(&tokens, expansions);
        let category = classify(&normalized, &tokens, &lexicons.categories);
        let cues = infer_cues(&expanded_tokens, lexicons);
        EnrichedQuery {
            raw: raw.to_string(),
            normalized,
            tokens,
            expanded_tokens,
            matched_expansions,
            category,
            cues,
        }
    }
}

/// Lowercases, collapses whitespace and punctuation, and drops stopwords.
///
/// The normalized string keeps stopwords so that phrase lookups such as
/// "denial of service" still match; the token list does not.
pub fn normalize(raw: &str, stopwords: &Stopwords) -> (String, Vec<String>) {
    let words = text::words(raw);
    let normalized = words.join(" ");
    let tokens = words.into_iter().filter(|w| !stopwords.contains(w)).collect();
    (normalized, tokens)
}

/// Applies curated expansions once over unigrams and adjacent bigrams.
///
/// Original tokens always come first; expansion tokens are appended without
/// duplicates and are never expanded themselves.
pub fn expand(tokens: &[String], expansions: &TermExpansions) -> (Vec<String>, Vec<MatchedExpansion>) {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut expanded: Vec<String> = Vec::with_capacity(tokens.len());
    for t in tokens {
        if seen.insert(t) {
            expanded.push(t.clone());
        }
    }
    let mut matched = Vec::new();
    let mut applied: HashSet<String> = HashSet::new();
    let mut additions: Vec<String> = Vec::new();
    for i in 0..tokens.len() {
        let mut keys = vec![tokens[i].clone()];
        if let Some(next) = tokens.get(i + 1) {
            keys.push(format!("{} {}", tokens[i], next));
        }
        for key in keys {
            let Some(list) = expansions.get(&key) else { continue };
            if !applied.insert(key.clone()) {
                continue;
            }
            for exp in list {
                matched.push(MatchedExpansion {
                    term: key.clone(),
                    expansion: exp.text.clone(),
                });
                additions.extend(exp.tokens.iter().cloned());
            }
        }
    }
    for t in additions {
        if !expanded.contains(&t) {
            expanded.push(t);
        }
    }
    (expanded, matched)
}

/// First-match rule cascade: overview, definition, risk/governance,
/// crypto/protocol, AI, short lookup, other.
pub fn classify(normalized: &str, tokens: &[String], lexicons: &CategoryLexicons) -> QueryCategory {
    let hit = |list: &[String]| list.iter().any(|p| text::contains_phrase(normalized, p));
    if hit(&lexicons.overview) {
        QueryCategory::BroadOverview
    } else if hit(&lexicons.definition) {
        QueryCategory::ConceptualDefinition
    } else if hit(&lexicons.risk_governance) {
        QueryCategory::RiskGovernance
    } else if hit(&lexicons.crypto_protocol) {
        QueryCategory::CryptoProtocol
    } else if hit(&lexicons.ai) {
        QueryCategory::AiForSecurity
    } else if (1..=2).contains(&tokens.len()) {
        QueryCategory::DirectTermLookup
    } else {
        QueryCategory::Other
    }
}

/// Every cue whose lexicon shares a token with the expanded query.
pub fn infer_cues(expanded_tokens: &[String], lexicons: &Lexicons) -> BTreeSet<ContextCue> {
    lexicons
        .cues
        .iter()
        .filter(|(_, lex)| expanded_tokens.iter().any(|t| lex.contains(t)))
        .map(|(cue, _)| *cue)
        .collect()
}

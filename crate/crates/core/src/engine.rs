//! A fully bound mapping engine and resource discovery.

use std::path::{Path, PathBuf};

use crate::curation::{bind, CurationBundle};
use crate::error::Result;
use crate::json::{self, Strictness};
use crate::query::{EnrichedQuery, Lexicons};
use crate::ranking::{Ranker, ScoredRow, ScoringWeights, WEIGHTS_FILE};
use crate::selection::{annotate, select, MappingResult, SelectionConfig};
use crate::tree::{KnowledgeRow, KnowledgeTree};

/// Environment variable naming the default resource root.
pub const HOME_ENV: &str = "CYBOKCLAW_HOME";

const BUILTIN_TREE: &str = include_str!("../data/tree.json");

impl KnowledgeTree {
    /// The shipped tree.
    pub fn builtin() -> Self {
        Self::from_slice(BUILTIN_TREE.as_bytes(), Strictness::Strict).expect("builtin tree is valid")
    }
}

/// Tree, curation, lexicons and weights bound over one row set. Immutable
/// and `Sync`; queries can run concurrently.
#[derive(Debug, Clone)]
pub struct Engine {
    tree: KnowledgeTree,
    lexicons: Lexicons,
    ranker: Ranker,
    warnings: Vec<String>,
}

impl Engine {
    pub fn new(
        tree: KnowledgeTree,
        bundle: &CurationBundle,
        lexicons: Lexicons,
        weights: ScoringWeights,
    ) -> Result<Self> {
        tree.validate()?;
        weights.validate()?;
        let bound = bind(bundle, &tree.flatten())?;
        let warnings = bound.warnings.clone();
        let ranker = Ranker::new(bound, weights, &lexicons.stopwords);
        Ok(Engine {
            tree,
            lexicons,
            ranker,
            warnings,
        })
    }

    /// Everything shipped with the crate.
    pub fn builtin() -> Self {
        let lexicons = Lexicons::builtin();
        let bundle = CurationBundle::builtin(&lexicons.stopwords);
        Engine::new(KnowledgeTree::builtin(), &bundle, lexicons, ScoringWeights::builtin())
            .expect("builtin resources bind")
    }

    pub fn tree(&self) -> &KnowledgeTree {
        &self.tree
    }

    pub fn rows(&self) -> &[KnowledgeRow] {
        self.ranker.rows()
    }

    pub fn lexicons(&self) -> &Lexicons {
        &self.lexicons
    }

    pub fn ranker(&self) -> &Ranker {
        &self.ranker
    }

    pub fn weights(&self) -> &ScoringWeights {
        self.ranker.weights()
    }

    /// Non-fatal binding diagnostics (selectors matching nothing).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Default top-k and cap with the thresholds from the weights file.
    pub fn default_selection(&self) -> SelectionConfig {
        SelectionConfig {
            thresholds: self.weights().confidence,
            ..SelectionConfig::default()
        }
    }

    pub fn enrich(&self, raw: &str) -> EnrichedQuery {
        EnrichedQuery::new(raw, &self.lexicons, &self.ranker.curation().expansions)
    }

    pub fn score_all(&self, query: &EnrichedQuery) -> Vec<ScoredRow> {
        self.ranker.score_all(query)
    }

    /// Normalize, expand, classify, score, order, diversify and label.
    pub fn map_query(&self, raw: &str, config: &SelectionConfig) -> Result<MappingResult> {
        config.validate()?;
        let query = self.enrich(raw);
        let candidates = select(self.score_all(&query), self.rows(), config)?;
        let annotation = annotate(&candidates);
        Ok(MappingResult {
            query,
            candidates,
            annotation,
        })
    }
}

/// Where to read each resource from. Unset entries fall back to the
/// matching file under `home` if it exists, else to the shipped default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourcePaths {
    pub home: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub curation_dir: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub lexicon_dir: Option<PathBuf>,
}

impl ResourcePaths {
    /// Reads the home directory from `CYBOKCLAW_HOME`.
    pub fn from_env() -> Self {
        ResourcePaths {
            home: std::env::var_os(HOME_ENV).map(PathBuf::from),
            ..Default::default()
        }
    }

    fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.home.as_ref().map(|h| h.join(name)).filter(|p| p.exists()))
    }

    pub fn tree_path(&self) -> Option<PathBuf> {
        self.resolve(&self.tree, "tree.json")
    }

    pub fn curation_path(&self) -> Option<PathBuf> {
        self.resolve(&self.curation_dir, "curation")
    }

    pub fn weights_path(&self) -> Option<PathBuf> {
        self.resolve(&self.weights, WEIGHTS_FILE)
    }

    pub fn lexicon_path(&self) -> Option<PathBuf> {
        self.resolve(&self.lexicon_dir, "lexicons")
    }

    pub fn categories_path(&self) -> Option<PathBuf> {
        self.resolve(&None, crate::credits::BROAD_CATEGORIES_FILE)
    }

    pub fn load_engine(&self, mode: Strictness) -> Result<Engine> {
        let tree_path = self.tree_path();
        let tree = match &tree_path {
            Some(p) => load_tree(p, mode)?,
            None => KnowledgeTree::builtin(),
        };
        let lexicons = match self.lexicon_path() {
            Some(p) => Lexicons::from_dir(&p)?,
            None => Lexicons::builtin(),
        };
        let bundle = match self.curation_path() {
            Some(p) => CurationBundle::from_dir(&p, &lexicons.stopwords, mode)?,
            // shipped curation targets the shipped tree only
            None if tree_path.is_some() => {
                log::warn!("custom tree without a curation directory; using empty curation");
                CurationBundle::empty()
            }
            None => CurationBundle::builtin(&lexicons.stopwords),
        };
        let weights = match self.weights_path() {
            Some(p) => ScoringWeights::from_slice(&json::read_file(&p)?, mode)?,
            None => ScoringWeights::builtin(),
        };
        let engine = Engine::new(tree, &bundle, lexicons, weights)?;
        for w in engine.warnings() {
            log::warn!("{w}");
        }
        Ok(engine)
    }
}

pub fn load_tree(path: &Path, mode: Strictness) -> Result<KnowledgeTree> {
    KnowledgeTree::from_slice(&json::read_file(path)?, mode)
}

//! Builds an engine over a small hand-written tree and curation bundle.

use cybokclaw::curation::CurationBundle;
use cybokclaw::query::Lexicons;
use cybokclaw::ranking::ScoringWeights;
use cybokclaw::tree::KnowledgeTree;
use cybokclaw::{Engine, Strictness};

const TREE: &str = r#"{"knowledge_areas": [
  {"id": "NET", "name": "Networking", "topics": [
    {"name": "Transport", "indicative_material": ["TCP Handshakes", "Transport Layer Security"]},
    {"name": "Perimeter", "indicative_material": ["Firewalls", "Proxies"]}]},
  {"id": "CRY", "name": "Cryptography", "topics": [
    {"name": "Ciphers", "indicative_material": ["Block Ciphers", "Stream Ciphers"]}]}]}"#;

const CONCEPTS: &str = r#"{"tls": [{"ka": "NET", "im_pattern": "transport layer", "boost": 3.0}]}"#;
const DESCRIPTIONS: &str = r#"[{"ka": "NET", "topic": "Perimeter", "aliases": ["packet filter"]}]"#;
const EXPANSIONS: &str = r#"{"ssl": ["transport layer security"]}"#;
const RULES: &str = "[]";

fn main() -> cybokclaw::Result<()> {
    let lexicons = Lexicons::builtin();
    let tree = KnowledgeTree::from_slice(TREE.as_bytes(), Strictness::Strict)?;
    let bundle = CurationBundle::from_slices(
        CONCEPTS.as_bytes(),
        DESCRIPTIONS.as_bytes(),
        EXPANSIONS.as_bytes(),
        RULES.as_bytes(),
        &lexicons.stopwords,
        Strictness::Strict,
    )?;
    let engine = Engine::new(tree, &bundle, lexicons, ScoringWeights::builtin())?;
    for q in ["ssl", "packet filter", "stream cipher"] {
        let r = engine.map_query(q, &engine.default_selection())?;
        let top = &r.candidates[0];
        println!(
            "{q:<14} -> {} / {} ({:.3}, {})",
            top.row.topic,
            top.row.im,
            top.total,
            top.confidence.as_str()
        );
    }
    Ok(())
}

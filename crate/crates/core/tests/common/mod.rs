//! Random fixtures and a brute-force reference scorer for integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use cybokclaw::curation::CurationBundle;
use cybokclaw::query::{EnrichedQuery, Lexicons};
use cybokclaw::ranking::{ScoreComponents, ScoringWeights};
use cybokclaw::text::{normalize_phrase, words, Stopwords};
use cybokclaw::tree::KnowledgeTree;
use cybokclaw::{Engine, Strictness};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore};
use serde_json::{json, Map, Value};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub const VOCAB: &[&str] = &[
    "network",
    "protocol",
    "security",
    "transport",
    "layer",
    "key",
    "crypto",
    "cipher",
    "malware",
    "web",
    "browser",
    "privacy",
    "data",
    "risk",
    "policy",
    "attack",
    "firewall",
    "tls",
    "x.509",
    "end-to-end",
    "kernel",
    "hardware",
    "audit",
    "trust",
    "learning",
];

const STOP: &[&str] = &["the", "of", "and", "for"];

const CATEGORIES: &[&str] = &[
    "direct_term_lookup",
    "conceptual_definition",
    "broad_overview",
    "risk_governance",
    "crypto_protocol",
    "ai_for_security",
    "other",
];

pub const CUES: &[&str] = &[
    "privacy",
    "network_security",
    "cryptography",
    "software_security",
    "human_factors",
    "risk_management",
    "storage_security",
    "formal_methods",
];

fn word(rng: &mut dyn RngCore) -> &'static str {
    VOCAB.choose(rng).unwrap()
}

fn phrase(rng: &mut dyn RngCore, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

/// A random query over the shared vocabulary, sometimes with stopwords and
/// odd casing.
pub fn random_query(rng: &mut dyn RngCore) -> String {
    let n = rng.random_range(0..=4);
    let mut parts = Vec::new();
    for _ in 0..n {
        if rng.random_bool(0.2) {
            parts.push(STOP.choose(rng).unwrap().to_string());
        }
        let w = word(rng);
        parts.push(if rng.random_bool(0.2) {
            w.to_uppercase()
        } else {
            w.to_string()
        });
    }
    parts.join(if rng.random_bool(0.2) { "   " } else { " " })
}

/// Tree with up to `max_rows` rows; names draw from the shared vocabulary
/// plus a unique tag.
pub fn random_tree(rng: &mut dyn RngCore, max_rows: usize) -> Value {
    let mut rows = 0;
    let mut kas = Vec::new();
    let n_ka = rng.random_range(1..=4);
    for k in 0..n_ka {
        if rows >= max_rows {
            break;
        }
        let mut topics = Vec::new();
        for t in 0..rng.random_range(1..=3) {
            if rows >= max_rows {
                break;
            }
            let mut ims = Vec::new();
            for i in 0..rng.random_range(1..=4) {
                if rows >= max_rows {
                    break;
                }
                ims.push(json!(format!("{} i{k}{t}{i}", phrase(rng, 1, 3))));
                rows += 1;
            }
            topics.push(json!({"name": format!("{} t{k}{t}", phrase(rng, 1, 2)), "indicative_material": ims}));
        }
        kas.push(json!({"id": format!("K{k}"), "name": format!("{} area{k}", phrase(rng, 1, 2)), "topics": topics}));
    }
    json!({ "knowledge_areas": kas })
}

fn ka_ids(tree: &Value) -> Vec<String> {
    tree["knowledge_areas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|k| k["id"].as_str().unwrap().to_string())
        .collect()
}

fn random_selector(rng: &mut dyn RngCore, kas: &[String]) -> Map<String, Value> {
    let mut m = Map::new();
    loop {
        if rng.random_bool(0.5) {
            m.insert("ka".into(), json!(kas.choose(rng).unwrap().to_lowercase()));
        }
        if rng.random_bool(0.4) {
            let w = word(rng);
            let pat = if rng.random_bool(0.3) { &w[..w.len().min(3)] } else { w };
            m.insert("topic_pattern".into(), json!(pat.to_uppercase()));
        }
        if rng.random_bool(0.4) {
            m.insert("im_pattern".into(), json!(word(rng)));
        }
        if !m.is_empty() {
            return m;
        }
    }
}

fn weight(rng: &mut dyn RngCore) -> f64 {
    rng.random_range(0.0..4.0)
}

/// The four curation documents plus weights, all as JSON values.
#[derive(Debug, Clone)]
pub struct Case {
    pub tree: Value,
    pub concept_map: Value,
    pub topic_descriptions: Value,
    pub term_expansions: Value,
    pub special_rules: Value,
    pub weights: Value,
}

pub fn random_case(rng: &mut dyn RngCore, max_rows: usize) -> Case {
    let tree = random_tree(rng, max_rows);
    let kas = ka_ids(&tree);

    let mut concept_map = Map::new();
    for _ in 0..rng.random_range(0..=4) {
        let targets: Vec<Value> = (0..rng.random_range(1..=2))
            .map(|_| {
                let mut sel = random_selector(rng, &kas);
                sel.insert("boost".into(), json!(weight(rng)));
                Value::Object(sel)
            })
            .collect();
        concept_map.insert(phrase(rng, 1, 2), json!(targets));
    }

    let mut descriptions = Vec::new();
    for _ in 0..rng.random_range(0..=2) {
        let ka = tree["knowledge_areas"].as_array().unwrap().choose(rng).unwrap();
        let topic = ka["topics"].as_array().unwrap().choose(rng).unwrap();
        let aliases: Vec<String> = (0..rng.random_range(0..=2)).map(|_| word(rng).to_string()).collect();
        let phrases: Vec<String> = (0..rng.random_range(0..=1)).map(|_| phrase(rng, 2, 2)).collect();
        descriptions.push(json!({
            "ka": ka["id"], "topic": topic["name"], "aliases": aliases, "curriculum_phrases": phrases
        }));
    }

    let mut expansions = Map::new();
    for _ in 0..rng.random_range(0..=3) {
        let key = phrase(rng, 1, 2);
        let list: Vec<String> = (0..rng.random_range(1..=2))
            .map(|_| phrase(rng, 1, 3))
            .filter(|e| *e != key)
            .collect();
        if !list.is_empty() {
            expansions.insert(key, json!(list));
        }
    }

    let mut rules = Vec::new();
    for r in 0..rng.random_range(0..=2) {
        let triggers: Vec<String> = (0..rng.random_range(1..=2)).map(|_| phrase(rng, 1, 2)).collect();
        let mut promote = Vec::new();
        let mut demote = Vec::new();
        for _ in 0..rng.random_range(0..=2) {
            let mut s = random_selector(rng, &kas);
            s.insert("bonus".into(), json!(weight(rng)));
            promote.push(Value::Object(s));
        }
        for _ in 0..rng.random_range(0..=2) {
            let mut s = random_selector(rng, &kas);
            s.insert("penalty".into(), json!(weight(rng)));
            demote.push(Value::Object(s));
        }
        if promote.is_empty() && demote.is_empty() {
            let mut s = random_selector(rng, &kas);
            s.insert("bonus".into(), json!(weight(rng)));
            promote.push(Value::Object(s));
        }
        let mut rule = json!({"id": format!("r{r}"), "triggers": triggers, "promote": promote, "demote": demote});
        if rng.random_bool(0.3) {
            rule["required_context"] = json!(CUES.choose(rng).unwrap());
        }
        rules.push(rule);
    }

    let mut weights = random_weights(rng, &kas);
    let strong = rng.random_range(3.0..8.0);
    weights["confidence"] = json!({"strong": strong, "moderate": rng.random_range(0.5..strong)});

    Case {
        tree,
        concept_map: Value::Object(concept_map),
        topic_descriptions: json!(descriptions),
        term_expansions: Value::Object(expansions),
        special_rules: json!(rules),
        weights,
    }
}

pub fn random_weights(rng: &mut dyn RngCore, kas: &[String]) -> Value {
    let subset = |rng: &mut dyn RngCore| -> Vec<String> {
        let mut v: Vec<String> = kas.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
        v.shuffle(rng);
        v
    };
    let mut category_bonus = Map::new();
    for c in CATEGORIES {
        if rng.random_bool(0.5) {
            category_bonus.insert(c.to_string(), json!({"bonus": weight(rng), "kas": subset(rng)}));
        }
    }
    let mut cue_bonus = Map::new();
    for c in CUES {
        if rng.random_bool(0.5) {
            cue_bonus.insert(c.to_string(), json!({"bonus": weight(rng), "kas": subset(rng)}));
        }
    }
    let mut classes = Vec::new();
    for i in 0..rng.random_range(0..=2) {
        let mut c = random_selector(rng, kas);
        let cues: Vec<&str> = (0..rng.random_range(1..=2))
            .map(|_| *CUES.choose(rng).unwrap())
            .collect();
        let unless: Vec<&str> = (0..rng.random_range(0..=1)).map(|_| word(rng)).collect();
        c.insert("name".into(), json!(format!("m{i}")));
        c.insert("when_any_cue".into(), json!(cues));
        c.insert("unless_any_token".into(), json!(unless));
        c.insert("penalty".into(), json!(weight(rng)));
        classes.push(Value::Object(c));
    }
    json!({
        "components": {
            "phrase_match": rng.random_range(0.0..3.0),
            "token_overlap": rng.random_range(0.0..3.0),
            "concept_boost": rng.random_range(0.0..3.0),
            "description_boost": rng.random_range(0.0..3.0),
            "intent_bonus": rng.random_range(0.0..3.0),
            "context_bonus": rng.random_range(0.0..3.0),
            "special_rule_adjust": rng.random_range(0.0..3.0),
            "mismatch_penalty": rng.random_range(0.0..3.0),
        },
        "exact_phrase_value": rng.random_range(0.0..6.0),
        "partial_phrase_value": rng.random_range(0.0..4.0),
        "category_bonus": category_bonus,
        "cue_bonus": cue_bonus,
        "mismatch_classes": classes,
        "confidence": {"strong": 6.0, "moderate": 3.0},
    })
}

fn bytes(v: &Value) -> Vec<u8> {
    serde_json::to_vec(v).unwrap()
}

impl Case {
    pub fn engine(&self) -> Engine {
        let lex = Lexicons::builtin();
        let tree = KnowledgeTree::from_slice(&bytes(&self.tree), Strictness::Strict).unwrap();
        let bundle = CurationBundle::from_slices(
            &bytes(&self.concept_map),
            &bytes(&self.topic_descriptions),
            &bytes(&self.term_expansions),
            &bytes(&self.special_rules),
            &lex.stopwords,
            Strictness::Strict,
        )
        .unwrap();
        let weights = ScoringWeights::from_slice(&bytes(&self.weights), Strictness::Strict).unwrap();
        Engine::new(tree, &bundle, lex, weights).unwrap()
    }

    pub fn oracle(&self) -> Oracle {
        Oracle::new(self, &Lexicons::builtin().stopwords)
    }
}

#[derive(Debug, Clone)]
struct Sel {
    ka: Option<String>,
    topic: Option<String>,
    im: Option<String>,
}

impl Sel {
    fn from(v: &Value) -> Self {
        let s = |k: &str| v.get(k).and_then(Value::as_str).map(str::to_string);
        Sel {
            ka: s("ka"),
            topic: s("topic_pattern"),
            im: s("im_pattern"),
        }
    }

    fn hit(&self, r: &ORow) -> bool {
        let sub = |hay: &str, pat: &Option<String>| match pat {
            None => true,
            Some(p) => hay.to_lowercase().contains(&p.to_lowercase()),
        };
        let ka_ok = match &self.ka {
            None => true,
            Some(k) => k.to_lowercase() == r.ka_id.to_lowercase(),
        };
        ka_ok && sub(&r.topic, &self.topic) && sub(&r.im, &self.im)
    }
}

#[derive(Debug, Clone)]
pub struct ORow {
    pub row_id: usize,
    pub ka_id: String,
    pub topic: String,
    pub im: String,
    phrases: Vec<String>,
    search: Vec<String>,
    im_words: Vec<String>,
    topic_words: Vec<String>,
    im_content: Vec<String>,
    topic_content: Vec<String>,
}

/// Triggers, required cue, promotions, demotions.
type ORule = (Vec<String>, Option<String>, Vec<(Sel, f64)>, Vec<(Sel, f64)>);

/// Straight-line reimplementation of the scoring formula over the raw JSON
/// documents. Shares only tokenization with the library.
pub struct Oracle {
    pub rows: Vec<ORow>,
    concepts: Vec<(String, Vec<(Sel, f64)>)>,
    rules: Vec<ORule>,
    w: Value,
}

/// True iff `needle` occurs as a contiguous word run in `hay`.
pub fn has_run(hay: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|win| win == needle)
}

/// Longest common contiguous run by checking every start pair.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut n = 0;
            while i + n < a.len() && j + n < b.len() && a[i + n] == b[j + n] {
                n += 1;
            }
            best = best.max(n);
        }
    }
    best
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

impl Oracle {
    pub fn new(case: &Case, sw: &Stopwords) -> Self {
        let content = |s: &str| -> Vec<String> { words(s).into_iter().filter(|w| !sw.contains(w)).collect() };
        let mut rows = Vec::new();
        for ka in case.tree["knowledge_areas"].as_array().unwrap() {
            for t in ka["topics"].as_array().unwrap() {
                for im in t["indicative_material"].as_array().unwrap() {
                    let (ka_id, ka_name) = (ka["id"].as_str().unwrap(), ka["name"].as_str().unwrap());
                    let (topic, im) = (t["name"].as_str().unwrap(), im.as_str().unwrap());
                    let mut text = format!("{ka_name} {topic} {im}");
                    let mut phrases = Vec::new();
                    for d in case.topic_descriptions.as_array().unwrap() {
                        if d["ka"].as_str().unwrap().eq_ignore_ascii_case(ka_id)
                            && d["topic"].as_str().unwrap().eq_ignore_ascii_case(topic)
                        {
                            let list = d["aliases"]
                                .as_array()
                                .unwrap()
                                .iter()
                                .chain(d["curriculum_phrases"].as_array().unwrap());
                            for p in list {
                                text.push(' ');
                                text.push_str(p.as_str().unwrap());
                                phrases.push(normalize_phrase(p.as_str().unwrap()));
                            }
                        }
                    }
                    rows.push(ORow {
                        row_id: rows.len(),
                        ka_id: ka_id.into(),
                        topic: topic.into(),
                        im: im.into(),
                        phrases,
                        search: content(&text),
                        im_words: words(im),
                        topic_words: words(topic),
                        im_content: content(im),
                        topic_content: content(topic),
                    });
                }
            }
        }
        let concepts = case
            .concept_map
            .as_object()
            .unwrap()
            .iter()
            .map(|(p, ts)| {
                (
                    p.clone(),
                    ts.as_array()
                        .unwrap()
                        .iter()
                        .map(|t| (Sel::from(t), f(&t["boost"])))
                        .collect(),
                )
            })
            .collect();
        let rules = case
            .special_rules
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                let list = |k: &str, wk: &str| -> Vec<(Sel, f64)> {
                    r[k].as_array()
                        .unwrap()
                        .iter()
                        .map(|x| (Sel::from(x), f(&x[wk])))
                        .collect()
                };
                (
                    r["triggers"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|t| normalize_phrase(t.as_str().unwrap()))
                        .collect(),
                    r.get("required_context").and_then(Value::as_str).map(str::to_string),
                    list("promote", "bonus"),
                    list("demote", "penalty"),
                )
            })
            .collect();
        Oracle {
            rows,
            concepts,
            rules,
            w: case.weights.clone(),
        }
    }

    fn m(&self, name: &str) -> f64 {
        f(&self.w["components"][name])
    }

    fn affinity(table: &Value, key: &str, ka: &str) -> Option<f64> {
        let e = table.get(key)?;
        e["kas"]
            .as_array()
            .unwrap()
            .iter()
            .any(|k| k.as_str().unwrap().eq_ignore_ascii_case(ka))
            .then(|| f(&e["bonus"]))
    }

    pub fn ledger(&self, q: &EnrichedQuery, r: &ORow) -> ScoreComponents {
        let qwords: Vec<String> = q
            .normalized
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let in_query = |p: &str| has_run(&qwords, &p.split(' ').map(str::to_string).collect::<Vec<_>>());
        let cues: Vec<&str> = q.cues.iter().map(|c| c.as_str()).collect();

        let phrase_raw = if q.tokens.is_empty() {
            0.0
        } else if has_run(&r.im_words, &qwords) || has_run(&r.topic_words, &qwords) {
            f(&self.w["exact_phrase_value"])
        } else {
            let run = brute_lcs(&q.tokens, &r.im_content).max(brute_lcs(&q.tokens, &r.topic_content));
            f(&self.w["partial_phrase_value"]) * run as f64 / q.tokens.len() as f64
        };

        let overlap = if q.expanded_tokens.is_empty() {
            0.0
        } else {
            let shared = q.expanded_tokens.iter().filter(|t| r.search.contains(t)).count();
            self.m("token_overlap") * shared as f64 / q.expanded_tokens.len() as f64
        };

        let mut concept = 0.0;
        for (p, targets) in &self.concepts {
            if in_query(p) {
                for (s, b) in targets {
                    if s.hit(r) {
                        concept += b;
                    }
                }
            }
        }

        let hits = r.phrases.iter().filter(|p| !p.is_empty() && in_query(p)).count();

        let intent = Self::affinity(&self.w["category_bonus"], q.category.as_str(), &r.ka_id).unwrap_or(0.0);
        let mut context = 0.0;
        for c in &cues {
            if let Some(b) = Self::affinity(&self.w["cue_bonus"], c, &r.ka_id) {
                context += b;
            }
        }

        let (mut promoted, mut demoted) = (0.0, 0.0);
        for (triggers, req, promote, demote) in &self.rules {
            let fired = triggers.iter().any(|t| in_query(t)) && req.as_ref().is_none_or(|c| cues.contains(&c.as_str()));
            if !fired {
                continue;
            }
            for (s, b) in promote {
                if s.hit(r) {
                    promoted += b;
                }
            }
            for (s, p) in demote {
                if s.hit(r) {
                    demoted += p;
                }
            }
        }

        let mut mismatch = 0.0;
        for c in self.w["mismatch_classes"].as_array().unwrap() {
            let when = c["when_any_cue"]
                .as_array()
                .unwrap()
                .iter()
                .any(|x| cues.contains(&x.as_str().unwrap()));
            let unless = c.get("unless_any_token").and_then(Value::as_array).is_some_and(|ts| {
                ts.iter()
                    .any(|t| q.expanded_tokens.iter().any(|e| e == t.as_str().unwrap()))
            });
            if when && !unless && Sel::from(c).hit(r) {
                mismatch += f(&c["penalty"]);
            }
        }

        ScoreComponents {
            phrase_match: self.m("phrase_match") * phrase_raw,
            token_overlap: overlap,
            concept_boost: self.m("concept_boost") * concept,
            description_boost: self.m("description_boost") * hits as f64,
            intent_bonus: self.m("intent_bonus") * intent,
            context_bonus: self.m("context_bonus") * context,
            special_rule_adjust: self.m("special_rule_adjust") * (promoted - demoted),
            mismatch_penalty: self.m("mismatch_penalty") * mismatch,
        }
    }

    pub fn total(c: &ScoreComponents) -> f64 {
        c.phrase_match
            + c.token_overlap
            + c.concept_boost
            + c.description_boost
            + c.intent_bonus
            + c.context_bonus
            + c.special_rule_adjust
            - c.mismatch_penalty
    }

    /// Full ledger, then a selection sort on (total desc, row asc), then the
    /// two-pass greedy cap. Returns `(row_id, components, total)`.
    pub fn top_k(&self, q: &EnrichedQuery, k: usize, cap: usize) -> Vec<(usize, ScoreComponents, f64)> {
        let mut pool: Vec<(usize, ScoreComponents, f64)> = self
            .rows
            .iter()
            .map(|r| {
                let c = self.ledger(q, r);
                (r.row_id, c, Self::total(&c))
            })
            .collect();
        let mut ordered = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                let (a, b) = (&pool[i], &pool[best]);
                if a.2 > b.2 || (a.2 == b.2 && a.0 < b.0) {
                    best = i;
                }
            }
            ordered.push(pool.remove(best));
        }
        let group = |id: usize| (self.rows[id].ka_id.clone(), self.rows[id].topic.clone());
        let mut chosen = vec![false; ordered.len()];
        let mut groups: Vec<((String, String), usize)> = Vec::new();
        let mut n = 0;
        for (i, o) in ordered.iter().enumerate() {
            if n == k {
                break;
            }
            let g = group(o.0);
            let pos = groups.iter().position(|(x, _)| *x == g);
            let used = pos.map_or(0, |p| groups[p].1);
            if used < cap {
                match pos {
                    Some(p) => groups[p].1 += 1,
                    None => groups.push((g, 1)),
                }
                chosen[i] = true;
                n += 1;
            }
        }
        for c in chosen.iter_mut() {
            if n == k {
                break;
            }
            if !*c {
                *c = true;
                n += 1;
            }
        }
        ordered
            .into_iter()
            .zip(chosen)
            .filter(|(_, c)| *c)
            .map(|(o, _)| o)
            .collect()
    }
}

pub fn bits(c: &ScoreComponents) -> [u64; 8] {
    [
        c.phrase_match.to_bits(),
        c.token_overlap.to_bits(),
        c.concept_boost.to_bits(),
        c.description_boost.to_bits(),
        c.intent_bonus.to_bits(),
        c.context_bonus.to_bits(),
        c.special_rule_adjust.to_bits(),
        c.mismatch_penalty.to_bits(),
    ]
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

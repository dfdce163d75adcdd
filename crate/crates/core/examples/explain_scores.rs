//! Prints the query analysis and the per-component score ledger.

use cybokclaw::Engine;

fn main() -> cybokclaw::Result<()> {
    let query = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "software supply chain".into());
    let engine = Engine::builtin();
    let q = engine.enrich(&query);
    println!("normalized: {}", q.normalized);
    println!("expanded:   {}", q.expanded_tokens.join(" "));
    println!("category:   {}", q.category.as_str());
    println!(
        "cues:       {:?}",
        q.cues.iter().map(|c| c.as_str()).collect::<Vec<_>>()
    );

    let result = engine.map_query(&query, &engine.default_selection())?;
    for c in &result.candidates {
        let s = &c.components;
        println!(
            "{}. {} / {} / {}  total {:.3}",
            c.rank, c.row.ka_id, c.row.topic, c.row.im, c.total
        );
        println!(
            "   phrase {:.3}  overlap {:.3}  concept {:.3}  desc {:.3}  intent {:.3}  context {:.3}  special {:.3}  mismatch {:.3}",
            s.phrase_match,
            s.token_overlap,
            s.concept_boost,
            s.description_boost,
            s.intent_bonus,
            s.context_bonus,
            s.special_rule_adjust,
            s.mismatch_penalty
        );
    }
    Ok(())
}

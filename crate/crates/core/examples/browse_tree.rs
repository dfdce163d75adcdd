//! Walks the knowledge tree: KAs, then one KA's topics, then one topic's
//! indicative material.

use cybokclaw::tree::{KnowledgeTree, Listing};

fn main() -> cybokclaw::Result<()> {
    let tree = KnowledgeTree::builtin();
    if let Listing::KnowledgeAreas { entries } = tree.browse(None, None)? {
        for e in entries {
            println!("{:<5} {} ({} topics)", e.id, e.name, e.topics);
        }
    }
    if let Listing::Topics { ka, entries } = tree.browse(Some("NS"), None)? {
        println!("\n{ka}:");
        for t in entries {
            println!("  {t}");
        }
    }
    if let Listing::IndicativeMaterial { ka, topic, entries } =
        tree.browse(Some("NS"), Some("Network Security Tools"))?
    {
        println!("\n{ka} / {topic}:");
        for im in entries {
            println!("  {im}");
        }
    }
    println!("\n{} rows in total", tree.flatten().len());
    Ok(())
}

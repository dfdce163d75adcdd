//! Aggregates module credit allocations into per-KA and per-category totals.

use cybokclaw::credits::{aggregate_credits, Allocation, BroadCategoryMap, ModuleCredit};
use cybokclaw::tree::KnowledgeTree;

fn module(name: &str, total: f64, allocations: &[(&str, f64)]) -> ModuleCredit {
    ModuleCredit {
        module_name: name.into(),
        total_credits: total,
        allocations: allocations
            .iter()
            .map(|(ka, credits)| Allocation {
                ka: ka.to_string(),
                credits: *credits,
            })
            .collect(),
    }
}

fn main() -> cybokclaw::Result<()> {
    let modules = [
        module("Network Defence", 15.0, &[("NS", 8.0), ("SOIM", 4.0), ("AC", 2.0)]),
        module("Secure Development", 20.0, &[("SS", 9.0), ("SSL", 6.0), ("WAM", 5.0)]),
        module("Cyber Law", 10.0, &[("LR", 6.0), ("POR", 3.0)]),
    ];
    let profile = aggregate_credits(&modules, &BroadCategoryMap::builtin(), &KnowledgeTree::builtin())?;
    print!("{}", profile.to_table());
    println!("\ncsv:\n{}", profile.to_csv());
    Ok(())
}

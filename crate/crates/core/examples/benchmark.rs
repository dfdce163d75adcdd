//! Scores the bundled fixture datasets, first without and then with a few
//! expert labels.

use std::path::Path;

use cybokclaw::eval::{run_benchmark, Dataset, ExpertLabel, LabelRecord, LabelSet};
use cybokclaw::{Engine, Strictness};

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn load(name: &str) -> Res<Dataset> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/fixtures/{name}.jsonl"));
    let text = std::fs::read_to_string(path)?;
    Ok(Dataset::parse(name, &text, Strictness::Strict)?.0)
}

fn main() -> Res<()> {
    let engine = Engine::builtin();
    let cfg = engine.default_selection();
    let datasets = [load("dev")?, load("test")?];

    let report = run_benchmark(&engine, &datasets, None, "all", &cfg)?;
    print!("{}", report.to_table());

    let mut labels = LabelSet::default();
    for rank in 1..=5 {
        labels.insert(LabelRecord {
            dataset: "dev".into(),
            query_id: "d01".into(),
            rank,
            label: if rank == 1 {
                ExpertLabel::Exact
            } else {
                ExpertLabel::NotAcceptable
            },
        })?;
    }
    let report = run_benchmark(&engine, &datasets, Some(&labels), "all", &cfg)?;
    println!();
    print!("{}", report.to_table());
    Ok(())
}

//! Maps a keyword or phrase to its top five knowledge-tree rows.
//!
//!     cargo run --example map_query -- "secure sockets layer"

use cybokclaw::Engine;

fn main() -> cybokclaw::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "secure sockets layer".into());
    let engine = Engine::builtin();
    let result = engine.map_query(&query, &engine.default_selection())?;
    print!("{}", result.to_table(false));
    println!("annotation: {}", result.annotation.as_str());
    Ok(())
}

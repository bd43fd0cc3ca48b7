//! Writes the fixture corpus as JSON trace documents.
//!
//! Usage: `gen-fixtures [OUT_DIR]` (defaults to `crates/core/tests/fixtures`).

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures"));
    std::fs::create_dir_all(&out)?;
    for f in epg_evmsim::fixtures::all() {
        let text = serde_json::to_string_pretty(&f.doc).expect("serializable document");
        std::fs::write(out.join(format!("{}.json", f.name)), text + "\n")?;
        println!("wrote {}", f.name);
    }
    std::fs::write(out.join("malformed.json"), "{\"tx\": {\"txHash\": \"0x01\", \"from\": }\n")?;
    std::fs::write(out.join("prices.csv"), epg_evmsim::fixtures::price_table())?;
    Ok(())
}

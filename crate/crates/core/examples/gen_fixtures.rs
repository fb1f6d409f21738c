//! Regenerates the fixture plans: `cargo run -p rtqa-core --example gen_fixtures`.

use std::path::PathBuf;

#[path = "../tests/support/plans.rs"]
mod plans;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/plans");
    std::fs::create_dir_all(&dir)?;
    for (name, failing) in [("prostate_pass.json", false), ("prostate_fail.json", true)] {
        let path = dir.join(name);
        std::fs::write(&path, plans::to_json(&plans::prostate_plan(failing)))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

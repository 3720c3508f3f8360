//! Regenerates the files under `fixtures/`.

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;
    for (name, contents) in sph2::cli::bundled_fixtures() {
        std::fs::write(dir.join(name), contents)?;
        println!("wrote fixtures/{name}");
    }
    Ok(())
}

//! Regenerate the committed demo binaries in `programs/`:
//! `cargo run -p armsim-core --example gen_programs`

use armsim_core::catalog::Catalog;
use armsim_core::programs;

fn main() -> std::io::Result<()> {
    let cat = Catalog::bundled();
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../programs");
    std::fs::create_dir_all(&dir)?;
    for (name, words) in [
        ("sum10.bin", programs::sum_1_to_10(cat)),
        ("fib10.bin", programs::fibonacci_10(cat)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, programs::to_bytes(&words))?;
        println!("wrote {} ({} instructions)", path.display(), words.len());
    }
    Ok(())
}

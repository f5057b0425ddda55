// Model bundles: create, save, reload, and confirm the reload is bit-exact.

use swift_core::model::{from_bytes, load_bundle, make_synthetic_model, save_bundle, to_bytes, ArchConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let bundle = make_synthetic_model(1, ArchConfig::new(2, 32, 4, 64, 260, 128), &[3])?;
    let dir = std::env::temp_dir().join(format!("swift-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("tiny.swft");
    save_bundle(&bundle, &path)?;
    let loaded = load_bundle(&path)?;
    assert_eq!(loaded, bundle);
    assert_eq!(to_bytes(&loaded), std::fs::read(&path)?);

    let mut corrupt = to_bytes(&bundle);
    corrupt.truncate(corrupt.len() / 2);
    println!("truncated bundle: {}", from_bytes(&corrupt).unwrap_err());
    println!(
        "{} parameters, {} sublayers, {} bytes on disk",
        loaded.parameter_count(),
        loaded.sublayers(),
        std::fs::metadata(&path)?.len()
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

//! Writes a synthetic dataset as a features/energies/manifest triple, loads
//! it back through the validating reader and reports a malformed copy.
//!
//! cargo run --example dataset_ingest

use std::fs;

use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::{load_dataset, write_dataset, BitDepth};
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};

fn main() -> decenergy::Result<()> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let coefficients = default_true_coefficients(catalog, &default_count_ranges(), 1);
    let mut spec = CorpusSpec::new("Conventional8", BitDepth::EIGHT, 64, coefficients, 1);
    spec.noise_sigma = 0.01;
    let (dataset, _) = generate_synthetic_corpus(catalog, &spec)?;

    let dir = tempfile::tempdir().expect("temporary directory");
    write_dataset(&dataset, dir.path())?;
    let (features, energies, manifest) = (
        dir.path().join("features.csv"),
        dir.path().join("energies.csv"),
        dir.path().join("manifest.toml"),
    );
    let (loaded, check) = load_dataset(&features, &energies, &manifest)?;
    println!(
        "{}: {} records, {} sequences, declared {} / found {}",
        loaded.name,
        loaded.len(),
        loaded.sequences().len(),
        check.declared,
        check.actual
    );

    // Rename one column and try again.
    let text = fs::read_to_string(&features).expect("features file");
    fs::write(&features, text.replacen(",TSF,", ",TransformSkip,", 1)).expect("features file");
    match load_dataset(&features, &energies, &manifest) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}

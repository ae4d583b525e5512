//! Builds paired 8-bit and 10-bit corpora whose mean energy ratio is 1.55
//! and prints the ratio report.
//!
//! cargo run --example ratio_report

use decenergy::bitdepth::reference_phi;
use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::BitDepth;
use decenergy::energy::energy_ratio_report;
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_counts, generate_synthetic_corpus,
    zeta_for_mean_ratio, CorpusSpec,
};

fn main() -> decenergy::Result<()> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let ranges = default_count_ranges();
    let coefficients = default_true_coefficients(catalog, &ranges, 5);
    let phi = reference_phi(catalog)?;
    let (records, seed) = (256, 9);

    // Same count seed on both sides pairs the records one to one.
    let counts = generate_counts(catalog, &ranges, records, seed)?;
    let zeta = zeta_for_mean_ratio(&counts, &coefficients, &phi, 1.55)?;
    let spec8 = CorpusSpec::new(
        "Conventional8",
        BitDepth::EIGHT,
        records,
        coefficients.clone(),
        seed,
    );
    let mut spec10 = CorpusSpec::new("Conventional10", BitDepth::TEN, records, coefficients, seed);
    spec10.extension = Some((zeta, phi));
    let (ds8, _) = generate_synthetic_corpus(catalog, &spec8)?;
    let (ds10, _) = generate_synthetic_corpus(catalog, &spec10)?;

    let report = energy_ratio_report(&ds8, &ds10)?;
    println!("planted zeta {zeta:.4}");
    println!("{}", report.summary());
    Ok(())
}

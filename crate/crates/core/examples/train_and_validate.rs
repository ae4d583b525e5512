//! Trains FU and FA models on a synthetic 8-bit corpus and validates them
//! on held-out 8-bit and 10-bit setups.
//!
//! cargo run --release --example train_and_validate

use decenergy::bitdepth::reference_phi;
use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::{BitDepth, EnergyDataset};
use decenergy::report::render_error_table;
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};
use decenergy::trainer::{train_validate, TrainingConfig};

fn corpus(
    setup: &str,
    depth: BitDepth,
    records: usize,
    seed: u64,
    zeta: Option<f64>,
) -> decenergy::Result<EnergyDataset> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let coefficients = default_true_coefficients(catalog, &default_count_ranges(), 42);
    let mut spec = CorpusSpec::new(setup, depth, records, coefficients, seed);
    spec.noise_sigma = 0.01;
    spec.sequence_prefix = Some(setup.to_lowercase());
    if let Some(zeta) = zeta {
        spec.extension = Some((zeta, reference_phi(catalog)?));
    }
    Ok(generate_synthetic_corpus(catalog, &spec)?.0)
}

fn main() -> decenergy::Result<()> {
    let train_set = corpus("Conventional8", BitDepth::EIGHT, 480, 1, None)?;
    let fisheye = corpus("Fisheye", BitDepth::EIGHT, 160, 2, None)?;
    let hdr10 = corpus("HDR10", BitDepth::TEN, 160, 3, Some(0.66))?;

    let mut combined = None;
    for variant in [CatalogVariant::Fa, CatalogVariant::Fu] {
        let catalog = FeatureCatalog::get(variant);
        let project = |ds: &EnergyDataset| ds.project(catalog);
        let (train_v, fish_v, hdr_v) = (project(&train_set)?, project(&fisheye)?, project(&hdr10)?);
        let (outcome, report) =
            train_validate(&train_v, &[&fish_v, &hdr_v], &TrainingConfig::default())?;
        println!(
            "{variant}: {} iterations, KKT residual {:.1e}",
            outcome.iterations, outcome.kkt_residual
        );
        match &mut combined {
            None => combined = Some(report),
            Some(all) => all.merge(report)?,
        }
    }
    print!("{}", render_error_table(&[combined.expect("two variants")]));
    Ok(())
}

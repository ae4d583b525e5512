//! Sweeps the bit-depth scaling factor of an 8-bit model on a 10-bit
//! corpus planted with zeta 0.66 and prints the curve around its minimum.
//!
//! cargo run --release --example zeta_sweep

use decenergy::bitdepth::{reference_phi, sweep_zeta, ZetaGrid};
use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::BitDepth;
use decenergy::report::format_percent;
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};
use decenergy::trainer::{train, TrainingConfig};

fn main() -> decenergy::Result<()> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let coefficients = default_true_coefficients(catalog, &default_count_ranges(), 7);
    let phi = reference_phi(catalog)?;

    let mut spec8 = CorpusSpec::new(
        "Conventional8",
        BitDepth::EIGHT,
        400,
        coefficients.clone(),
        1,
    );
    spec8.noise_sigma = 0.01;
    let (train8, _) = generate_synthetic_corpus(catalog, &spec8)?;
    let mut spec10 = CorpusSpec::new("Conventional10", BitDepth::TEN, 200, coefficients, 2);
    spec10.noise_sigma = 0.01;
    spec10.extension = Some((0.66, phi.clone()));
    let (val10, _) = generate_synthetic_corpus(catalog, &spec10)?;

    let model = train(&train8, &TrainingConfig::default())?.model;
    let sweep = sweep_zeta(&model, &phi, &val10, &ZetaGrid::standard())?;
    let k = sweep.argmin;
    for i in k.saturating_sub(5)..(k + 6).min(sweep.grid.len()) {
        let marker = if i == k { "  <- argmin" } else { "" };
        println!(
            "zeta={:.2}  {}{marker}",
            sweep.grid[i],
            format_percent(sweep.errors[i])
        );
    }
    println!("unscaled error: {}", format_percent(sweep.errors[0]));
    Ok(())
}

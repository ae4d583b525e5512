//! Plants bit-depth sensitivity on two of six feature groups and recovers
//! the assignment by brute force.
//!
//! cargo run --release --example phi_search

use decenergy::bitdepth::{parse_groups, phi_from_groups, search_phi, ZetaGrid};
use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::BitDepth;
use decenergy::report::format_percent;
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};
use decenergy::trainer::{train, TrainingConfig};

fn main() -> decenergy::Result<()> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let groups = parse_groups(include_str!("pipeline_groups.txt"), catalog)?;
    let coefficients = default_true_coefficients(catalog, &default_count_ranges(), 3);

    let spec8 = CorpusSpec::new(
        "Conventional8",
        BitDepth::EIGHT,
        300,
        coefficients.clone(),
        1,
    );
    let (train8, _) = generate_synthetic_corpus(catalog, &spec8)?;
    let planted = vec![1, 4];
    let mut spec10 = CorpusSpec::new("Conventional10", BitDepth::TEN, 160, coefficients, 2);
    spec10.extension = Some((0.8, phi_from_groups(&groups, &planted, catalog.len())));
    let (val10, _) = generate_synthetic_corpus(catalog, &spec10)?;

    let model = train(&train8, &TrainingConfig::default())?.model;
    let result = search_phi(&model, &groups, &train8, &val10, &ZetaGrid::standard())?;
    let names = |ids: &[usize]| {
        ids.iter()
            .map(|&g| groups[g].name.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("planted:  {} at zeta=0.80", names(&planted));
    println!(
        "found:    {} at zeta={:.2}, error {} ({} subsets)",
        names(&result.selected_groups),
        result.zeta,
        format_percent(result.mean_error),
        result.subsets_evaluated
    );
    Ok(())
}

mod common;

use common::{corpus, fu, true_coefficients};
use decenergy::bitdepth::reference_phi;
use decenergy::dataset::FeatureVector;
use decenergy::energy::energy_ratio_report;
use decenergy::synthetic::{default_count_ranges, generate_counts, zeta_for_mean_ratio};
use decenergy::Error;

#[test]
fn paired_corpora_reproduce_planted_mean_ratio() {
    let phi = reference_phi(fu()).unwrap();
    let coefficients = true_coefficients(3);
    let counts: Vec<FeatureVector> =
        generate_counts(fu(), &default_count_ranges(), 320, 9).unwrap();
    let zeta = zeta_for_mean_ratio(&counts, &coefficients, &phi, 1.55).unwrap();
    let (ds8, _) = corpus("Conventional8", 8, 320, 9, 0.0, 3, None);
    let (ds10, _) = corpus("Conventional10", 10, 320, 9, 0.0, 3, Some((zeta, phi)));
    let report = energy_ratio_report(&ds8, &ds10).unwrap();
    assert_eq!(report.pairs.len(), 320);
    assert!((report.mean - 1.55).abs() <= 0.0155, "{}", report.mean);

    // Independent recomputation of the extremes.
    let ratios: Vec<f64> = ds8
        .records()
        .iter()
        .zip(ds10.records())
        .map(|(a, b)| {
            assert_eq!(a.meta.sequence, b.meta.sequence);
            b.energy / a.energy
        })
        .collect();
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.min, min);
    assert_eq!(report.max, max);
    assert!(report.min < report.mean && report.mean < report.max);
    assert!(report.summary().starts_with("pairs=320 mean_ratio=1.55"));
    assert_eq!(report.scatter_csv().lines().count(), 321);
}

#[test]
fn unpaired_records_are_rejected() {
    let (ds8, _) = corpus("Conventional8", 8, 32, 1, 0.0, 1, None);
    let (ds10, _) = corpus("Conventional10", 10, 16, 1, 0.0, 1, None);
    assert!(matches!(
        energy_ratio_report(&ds8, &ds10),
        Err(Error::Unpairable { .. })
    ));
}

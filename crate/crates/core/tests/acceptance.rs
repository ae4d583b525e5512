//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each,
//! then fails if any criterion failed.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    check_against_grid, corpus, fu, pipeline_workdir, random_small_instance, reference_reports,
    table_cell, tree, true_coefficients, PIPELINE_CONFIG, REFERENCE_ZETA,
};
use decenergy::bitdepth::{
    phi_from_groups, reference_phi, search_phi, sweep_zeta, FeatureGroup, ZetaGrid,
};
use decenergy::catalog::{CatalogVariant, Category, FeatureCatalog};
use decenergy::dataset::FeatureVector;
use decenergy::energy::{
    energy_ratio_report, mean_estimation_error, mean_relative_error, EnergyModel,
};
use decenergy::measurement::{simulate_measurement, DeviceConfig, MeasurementProtocolConfig};
use decenergy::pipeline::run_pipeline;
use decenergy::report::{
    parse_curve, render_curve, render_error_table, render_zeta_table, ZetaTable,
};
use decenergy::synthetic::{default_count_ranges, generate_counts, zeta_for_mean_ratio};
use decenergy::trainer::{fit_nonnegative, kkt_residual, train, Objective, TrainingConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

/// (id, name, runtime limit in seconds, check)
type Criterion = (u32, &'static str, u64, fn() -> Check);

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Hand expansion of the feature taxonomy: (label, depths, category, in FA).
const HAND_EXPANSION: &[(&str, usize, Category, bool)] = &[
    ("E_O", 1, Category::General, true),
    ("Islice", 1, Category::General, true),
    ("Bslice", 1, Category::General, false),
    ("Pslice", 1, Category::General, false),
    ("PBslice", 1, Category::General, true),
    ("intraCU", 1, Category::Intra, true),
    ("pla", 4, Category::Intra, true),
    ("dc", 4, Category::Intra, true),
    ("hvd", 4, Category::Intra, true),
    ("ang", 4, Category::Intra, true),
    ("noMPM", 1, Category::Intra, true),
    ("skip", 4, Category::Inter, true),
    ("merge", 4, Category::Inter, true),
    ("mergeSMP", 4, Category::Inter, true),
    ("mergeAMP", 3, Category::Inter, true),
    ("inter", 4, Category::Inter, true),
    ("interSMP", 4, Category::Inter, true),
    ("interAMP", 3, Category::Inter, true),
    ("fracpelHor", 4, Category::Inter, true),
    ("fracpelVer", 4, Category::Inter, true),
    ("fracpelBoth", 4, Category::Inter, false),
    ("copyPel", 4, Category::Inter, false),
    ("chrHalfpel", 4, Category::Inter, true),
    ("bi", 1, Category::Inter, true),
    ("uni", 1, Category::Inter, false),
    ("MVD", 1, Category::Inter, true),
    ("coeff", 1, Category::Residual, true),
    ("coeffG1", 1, Category::Residual, true),
    ("val", 1, Category::Residual, true),
    ("CSBF", 1, Category::Residual, true),
    ("TrIntraY", 4, Category::Residual, true),
    ("TrIntraC", 4, Category::Residual, true),
    ("TrInterY", 4, Category::Residual, true),
    ("TrInterC", 4, Category::Residual, true),
    ("TSF", 1, Category::Residual, true),
    ("Bs0", 1, Category::InLoop, true),
    ("Bs1", 1, Category::InLoop, true),
    ("Bs2", 1, Category::InLoop, true),
    ("SAO_Y_BO", 1, Category::InLoop, true),
    ("SAO_Y_EO", 1, Category::InLoop, true),
    ("SAO_C_BO", 1, Category::InLoop, true),
    ("SAO_C_EO", 1, Category::InLoop, true),
    ("SAO_allComps", 1, Category::InLoop, true),
];

fn criterion_1_catalog() -> Check {
    for variant in [CatalogVariant::Fu, CatalogVariant::Fa] {
        let catalog = FeatureCatalog::build(variant);
        let wanted = |&&(label, _, _, in_fa): &&(&str, usize, Category, bool)| match variant {
            CatalogVariant::Fu => label != "PBslice",
            CatalogVariant::Fa => in_fa,
        };
        let expected_total: usize = HAND_EXPANSION.iter().filter(wanted).map(|e| e.1).sum();
        let expected_len = if variant == CatalogVariant::Fu {
            100
        } else {
            90
        };
        ensure(
            catalog.len() == expected_len && expected_total == expected_len,
            || {
                format!(
                    "{variant}: {} leaves, hand expansion {expected_total}",
                    catalog.len()
                )
            },
        )?;
        for category in Category::ALL {
            let hand: usize = HAND_EXPANSION
                .iter()
                .filter(wanted)
                .filter(|e| e.2 == category)
                .map(|e| e.1)
                .sum();
            ensure(catalog.category_count(category) == hand, || {
                format!(
                    "{variant} {category:?}: {} vs {hand}",
                    catalog.category_count(category)
                )
            })?;
        }
        for &(label, depths, _, _) in HAND_EXPANSION.iter().filter(wanted) {
            let found = catalog.positions_of_label(label).len();
            ensure(found == depths, || {
                format!("{variant} {label}: {found} leaves, expected {depths}")
            })?;
        }
    }
    let fu: Vec<usize> = Category::ALL
        .iter()
        .map(|&c| fu().category_count(c))
        .collect();
    ensure(fu == vec![4, 18, 49, 21, 8], || {
        format!("FU subtotals {fu:?}")
    })
}

fn random_counts(rng: &mut ChaCha8Rng) -> Vec<u64> {
    (0..100).map(|_| rng.random_range(0..1_000_000)).collect()
}

fn random_coefficients(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..100).map(|_| rng.random_range(0.0..1e-3)).collect()
}

fn fv(counts: Vec<u64>) -> FeatureVector {
    FeatureVector::new(CatalogVariant::Fu, counts).unwrap()
}

/// Plain left-to-right sum, independent of the library's summation.
fn naive(e: &[f64], n: &[u64]) -> f64 {
    e.iter().zip(n).map(|(e, &n)| e * n as f64).sum()
}

fn criterion_2_linear_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let e = random_coefficients(&mut rng);
        let (a, b) = (random_counts(&mut rng), random_counts(&mut rng));
        let model = EnergyModel::new(CatalogVariant::Fu, e.clone()).unwrap();
        let whole = model
            .estimate(&fv(a.clone()).checked_add(&fv(b.clone())).unwrap())
            .unwrap();
        let parts = model.estimate(&fv(a.clone())).unwrap() + model.estimate(&fv(b)).unwrap();
        ensure(close(whole, parts, 1e-12), || {
            format!("case {case}: additivity {whole} vs {parts}")
        })?;
        let est = model.estimate(&fv(a.clone())).unwrap();
        ensure(close(est, naive(&e, &a), 1e-12), || {
            format!("case {case}: naive sum")
        })?;

        let records = rng.random_range(1..50);
        let measured: Vec<f64> = (0..records).map(|_| rng.random_range(1e-3..1e3)).collect();
        let estimated: Vec<f64> = (0..records).map(|_| rng.random_range(1e-3..1e3)).collect();
        ensure(
            mean_relative_error(&measured, &measured).unwrap() == 0.0,
            || format!("case {case}: perfect estimate"),
        )?;
        ensure(
            mean_relative_error(&[2.0 * measured[0]], &measured[..1]).unwrap() == 1.0,
            || format!("case {case}: doubled estimate"),
        )?;
        let c = rng.random_range(1e-3..1e3);
        let base = mean_relative_error(&estimated, &measured).unwrap();
        let est_c: Vec<f64> = estimated.iter().map(|x| x * c).collect();
        let meas_c: Vec<f64> = measured.iter().map(|x| x * c).collect();
        let scaled = mean_relative_error(&est_c, &meas_c).unwrap();
        ensure(close(base, scaled, 1e-12), || {
            format!("case {case}: scale {base} vs {scaled}")
        })?;
    }
    Ok(())
}

fn criterion_3_scaled_degeneracies() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let e = random_coefficients(&mut rng);
        let n = random_counts(&mut rng);
        let phi: Vec<bool> = (0..100).map(|_| rng.random_bool(0.5)).collect();
        let zeta = rng.random_range(0.0..2.0);
        let counts = fv(n.clone());
        let base = EnergyModel::new(CatalogVariant::Fu, e.clone()).unwrap();
        let linear = base.estimate(&counts).unwrap();

        let zero = base.clone().with_extension(0.0, phi.clone()).unwrap();
        ensure(zero.estimate_scaled(&counts).unwrap() == linear, || {
            format!("case {case}: zeta 0")
        })?;

        let ones = base.clone().with_extension(zeta, vec![true; 100]).unwrap();
        let all = ones.estimate_scaled(&counts).unwrap();
        ensure(close(all, (1.0 + zeta) * linear, 1e-12), || {
            format!("case {case}: all flags")
        })?;

        let planted = base.with_extension(zeta, phi.clone()).unwrap();
        let scaled = planted.estimate_scaled(&counts).unwrap();
        let flagged: f64 = e
            .iter()
            .zip(&n)
            .zip(&phi)
            .filter(|(_, &f)| f)
            .map(|((e, &n), _)| e * n as f64)
            .sum();
        let diff = scaled - linear;
        ensure(
            (diff - zeta * flagged).abs() <= 1e-12 * scaled.max(zeta * flagged),
            || format!("case {case}: decomposition {diff} vs {}", zeta * flagged),
        )?;
    }
    Ok(())
}

fn criterion_4_trainer_recovery() -> Check {
    let config = TrainingConfig::default();
    let (ds, truth) = corpus("Conventional8", 8, 500, 1, 0.0, 1, None);
    let counts: Vec<u64> = ds
        .records()
        .iter()
        .flat_map(|r| r.counts.counts().to_vec())
        .collect();
    let nonzero = counts.iter().filter(|&&c| c > 0);
    let (lo, hi) = nonzero.fold((u64::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    ensure(hi >= 1000 * lo, || format!("counts span only {lo}..{hi}"))?;
    let outcome = train(&ds, &config).map_err(|e| e.to_string())?;
    ensure(outcome.converged && outcome.kkt_residual <= 1e-10, || {
        format!("noiseless KKT residual {}", outcome.kkt_residual)
    })?;
    for (i, (e, t)) in outcome
        .model
        .coefficients()
        .iter()
        .zip(truth.model.coefficients())
        .enumerate()
    {
        ensure(((e - t) / t).abs() <= 1e-6, || {
            format!("leaf {i}: {e} vs {t}")
        })?;
    }

    for seed in 0..3 {
        let (train_set, _) = corpus("Conventional8", 8, 500, 10 + seed, 0.01, 2, None);
        let (held_out, _) = corpus("Fisheye", 8, 200, 20 + seed, 0.01, 2, None);
        let outcome = train(&train_set, &config).map_err(|e| e.to_string())?;
        let coefficients = outcome.model.coefficients();
        ensure(coefficients.iter().all(|&e| e >= 0.0), || {
            format!("seed {seed}: negative coefficient")
        })?;
        let kkt = kkt_residual(&train_set, coefficients, Objective::RelativeWeightedLsq);
        ensure(kkt <= 1e-10, || format!("seed {seed}: KKT residual {kkt}"))?;
        let error = mean_estimation_error(&outcome.model, &held_out, false)
            .map_err(|e| e.to_string())?
            .mean;
        ensure(error <= 0.03, || {
            format!("seed {seed}: held-out error {error}")
        })?;
    }
    Ok(())
}

fn criterion_5_trainer_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let config = TrainingConfig {
        objective: Objective::AbsoluteLsq,
        ..TrainingConfig::default()
    };
    for case in 0..50 {
        let (rows, targets) = random_small_instance(&mut rng);
        let solution =
            fit_nonnegative(&rows, &targets, None, &config).map_err(|e| e.to_string())?;
        check_against_grid(&rows, &targets, &solution.x)
            .map_err(|e| format!("case {case}: {e}"))?;
    }
    Ok(())
}

fn criterion_6_zeta_sweep() -> Check {
    let phi = reference_phi(fu()).unwrap();
    let grid = ZetaGrid::standard();
    let (ds10, truth) = corpus(
        "Conventional10",
        10,
        300,
        11,
        0.0,
        11,
        Some((0.66, phi.clone())),
    );
    let exact = truth.model.without_extension();
    let sweep = sweep_zeta(&exact, &phi, &ds10, &grid).map_err(|e| e.to_string())?;
    let (zeta, error) = sweep.best();
    ensure(zeta == 0.66 && error <= 1e-12, || {
        format!("noiseless argmin {zeta}, error {error}")
    })?;

    let trials = 100;
    let mut hits = 0;
    for t in 0..trials {
        let (train8, _) = corpus("Conventional8", 8, 300, 1000 + t, 0.01, 6, None);
        let (val10, _) = corpus(
            "Conventional10",
            10,
            200,
            2000 + t,
            0.01,
            6,
            Some((0.66, phi.clone())),
        );
        let model = train(&train8, &TrainingConfig::default())
            .map_err(|e| e.to_string())?
            .model;
        let (zeta, _) = sweep_zeta(&model, &phi, &val10, &grid)
            .map_err(|e| e.to_string())?
            .best();
        if (zeta - 0.66).abs() <= 0.03 + 1e-9 {
            hits += 1;
        }
    }
    ensure(hits * 100 >= 95 * trials, || {
        format!("noisy argmin within 0.03 in {hits}/{trials} trials")
    })
}

fn criterion_7_phi_search() -> Check {
    let (train8, _) = corpus("Conventional8", 8, 400, 20, 0.0, 20, None);
    let model = train(&train8, &TrainingConfig::default())
        .map_err(|e| e.to_string())?
        .model;
    let groups: Vec<FeatureGroup> = (0..10)
        .map(|k| FeatureGroup {
            name: format!("block{k}"),
            members: (10 * k..10 * k + 10).collect(),
        })
        .collect();
    let grid = ZetaGrid::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for planting in 0..20 {
        let k = rng.random_range(2..=6);
        let mut ids: Vec<usize> = (0..groups.len()).collect();
        ids.shuffle(&mut rng);
        let mut planted = ids[..k].to_vec();
        planted.sort_unstable();
        let zeta = grid.values()[rng.random_range(20..=140)];
        let phi = phi_from_groups(&groups, &planted, 100);
        let (ds10, _) = corpus(
            "Conventional10",
            10,
            160,
            100 + planting,
            0.0,
            20,
            Some((zeta, phi)),
        );
        let result =
            search_phi(&model, &groups, &train8, &ds10, &grid).map_err(|e| e.to_string())?;
        ensure(
            result.selected_groups == planted && result.zeta == zeta,
            || {
                format!(
                    "planting {planting}: got {:?} at {}, planted {planted:?} at {zeta}",
                    result.selected_groups, result.zeta
                )
            },
        )?;
        let again =
            search_phi(&model, &groups, &train8, &ds10, &grid).map_err(|e| e.to_string())?;
        ensure(again == result, || {
            format!("planting {planting}: rerun differs")
        })?;
    }
    Ok(())
}

fn criterion_8_ratio() -> Check {
    let phi = reference_phi(fu()).unwrap();
    let coefficients = true_coefficients(3);
    let counts =
        generate_counts(fu(), &default_count_ranges(), 320, 9).map_err(|e| e.to_string())?;
    let zeta =
        zeta_for_mean_ratio(&counts, &coefficients, &phi, 1.55).map_err(|e| e.to_string())?;
    let (ds8, _) = corpus("Conventional8", 8, 320, 9, 0.0, 3, None);
    let (ds10, _) = corpus("Conventional10", 10, 320, 9, 0.0, 3, Some((zeta, phi)));
    let report = energy_ratio_report(&ds8, &ds10).map_err(|e| e.to_string())?;
    ensure((report.mean - 1.55).abs() <= 0.0155, || {
        format!("mean ratio {}", report.mean)
    })?;
    let ratios: Vec<f64> = ds8
        .records()
        .iter()
        .zip(ds10.records())
        .map(|(a, b)| b.energy / a.energy)
        .collect();
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ensure(report.min == min && report.max == max, || {
        format!("extremes {}..{} vs {min}..{max}", report.min, report.max)
    })
}

fn criterion_9_reporting() -> Check {
    let table = render_error_table(&reference_reports());
    for (row, column, expected) in [
        ("Fisheye", 1, "6.48%"),
        ("Fisheye", 2, "3.88%"),
        ("360D10", 4, "1.73%"),
        ("Conventional10", 1, "35.95%"),
    ] {
        let cell = table_cell(&table, row, column);
        ensure(cell.as_deref() == Some(expected), || {
            format!("{row}/{column}: {cell:?}")
        })?;
    }
    let zeta_table = ZetaTable {
        training_setup: "Conventional8".into(),
        zetas: vec![0.0, 0.66],
        rows: REFERENCE_ZETA
            .iter()
            .map(|&(s, a, b)| (s.to_string(), vec![a, b]))
            .collect(),
    };
    let text = render_zeta_table(&zeta_table);
    for (row, expected) in [
        ("Conventional10", "7.31%"),
        ("360D10", "6.52%"),
        ("HDR10", "9.89%"),
    ] {
        let cell = table_cell(&text, row, 2);
        ensure(cell.as_deref() == Some(expected), || {
            format!("{row}: {cell:?}")
        })?;
    }
    let curve =
        parse_curve(include_str!("fixtures/zeta_curve_subset.csv")).map_err(|e| e.to_string())?;
    let rendered = render_curve(&curve);
    let back = parse_curve(&rendered).map_err(|e| e.to_string())?;
    ensure(
        back.grid == curve.grid && render_curve(&back) == rendered,
        || "curve round trip".into(),
    )
}

fn criterion_10_measurement() -> Check {
    let protocol = MeasurementProtocolConfig::default();
    let device = |sigma: f64, seed: u64| DeviceConfig {
        sigma,
        seed,
        ..DeviceConfig::default()
    };
    for (k, energy) in [0.01, 0.5, 7.25, 300.0].into_iter().enumerate() {
        let m = simulate_measurement(&device(0.0, k as u64), energy, &protocol)
            .map_err(|e| e.to_string())?;
        ensure(m.energy == energy && m.runs == protocol.min_runs, || {
            format!("noiseless: {} in {} runs", m.energy, m.runs)
        })?;
    }
    let trials = 1000;
    let (mut covered, mut contract) = (0, 0);
    for t in 0..trials {
        let truth = 1.0 + (t % 17) as f64;
        let m =
            simulate_measurement(&device(0.01, t), truth, &protocol).map_err(|e| e.to_string())?;
        if m.converged && m.half_width <= protocol.max_relative_halfwidth * m.energy {
            contract += 1;
        }
        if (m.energy - truth).abs() <= m.half_width {
            covered += 1;
        }
    }
    ensure(protocol.max_relative_halfwidth == 0.02, || {
        "contract is not 2%".into()
    })?;
    ensure(
        contract * 100 >= 95 * trials && covered * 100 >= 95 * trials,
        || format!("contract {contract}/{trials}, coverage {covered}/{trials}"),
    )
}

fn criterion_11_determinism() -> Check {
    let a = pipeline_workdir(PIPELINE_CONFIG);
    let b = pipeline_workdir(PIPELINE_CONFIG);
    for dir in [&a, &b] {
        run_pipeline(Path::new("pipeline.toml"), dir.path()).map_err(|e| e.to_string())?;
    }
    let (ta, tb) = (tree(&a.path().join("out")), tree(&b.path().join("out")));
    ensure(ta.len() > 10, || format!("only {} artifacts", ta.len()))?;
    ensure(ta == tb, || {
        let differing: Vec<&String> = ta.keys().filter(|k| tb.get(*k) != ta.get(*k)).collect();
        format!("artifacts differ: {differing:?}")
    })
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        (1, "catalog cardinality", 1, criterion_1_catalog),
        (
            2,
            "linear model identities",
            10,
            criterion_2_linear_identities,
        ),
        (
            3,
            "scaled model degeneracies",
            10,
            criterion_3_scaled_degeneracies,
        ),
        (4, "trainer recovery", 60, criterion_4_trainer_recovery),
        (
            5,
            "trainer oracle equivalence",
            60,
            criterion_5_trainer_oracle,
        ),
        (6, "zeta sweep recovery", 120, criterion_6_zeta_sweep),
        (7, "phi search recovery", 120, criterion_7_phi_search),
        (8, "ratio report", 10, criterion_8_ratio),
        (9, "reporting fixtures", 1, criterion_9_reporting),
        (10, "measurement protocol", 60, criterion_10_measurement),
        (11, "end-to-end determinism", 120, criterion_11_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            ensure(elapsed < Duration::from_secs(limit), || {
                format!("took {elapsed:.2?}, limit {limit} s")
            })
        });
        // Written to stderr directly so the lines survive output capture.
        let line = match &result {
            Ok(()) => format!("criterion {id}: PASS  {name} ({elapsed:.2?})"),
            Err(e) => {
                failed.push(id);
                format!("criterion {id}: FAIL  {name} ({elapsed:.2?}): {e}")
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

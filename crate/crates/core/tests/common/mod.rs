//! Helpers and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::{BitDepth, EnergyDataset};
use decenergy::report::{EvaluationReport, ReportRow};
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
    GroundTruth,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fu() -> &'static FeatureCatalog {
    FeatureCatalog::get(CatalogVariant::Fu)
}

pub fn true_coefficients(seed: u64) -> Vec<f64> {
    default_true_coefficients(fu(), &default_count_ranges(), seed)
}

/// Synthetic FU corpus with coefficients drawn from `coefficient_seed`.
pub fn corpus(
    setup: &str,
    bits: u8,
    records: usize,
    seed: u64,
    noise: f64,
    coefficient_seed: u64,
    extension: Option<(f64, Vec<bool>)>,
) -> (EnergyDataset, GroundTruth) {
    let depth = BitDepth::try_from(bits).unwrap();
    let mut spec = CorpusSpec::new(
        setup,
        depth,
        records,
        true_coefficients(coefficient_seed),
        seed,
    );
    spec.noise_sigma = noise;
    spec.extension = extension;
    generate_synthetic_corpus(fu(), &spec).unwrap()
}

/// `sum_l (sum_i a_li x_i - b_l)^2`, evaluated directly.
pub fn lsq_objective(rows: &[Vec<f64>], targets: &[f64], x: &[f64]) -> f64 {
    rows.iter()
        .zip(targets)
        .map(|(r, b)| {
            let est: f64 = r.iter().zip(x).map(|(a, x)| a * x).sum();
            (est - b).powi(2)
        })
        .sum()
}

fn grid_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|k| lo + k as f64 * step)
        .filter(|v| *v >= 0.0)
        .collect()
}

fn grid_search(rows: &[Vec<f64>], targets: &[f64], axes: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let mut best = (vec![0.0; axes.len()], f64::INFINITY);
    let mut idx = vec![0usize; axes.len()];
    loop {
        let x: Vec<f64> = idx.iter().zip(axes).map(|(&i, a)| a[i]).collect();
        let f = lsq_objective(rows, targets, &x);
        if f < best.1 {
            best = (x, f);
        }
        let mut d = 0;
        loop {
            if d == axes.len() {
                return best;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Dense grid search for nonnegative least squares over `[0, hi]^n` with
/// step `1e-3`. Up to two unknowns the full grid is scanned; with three,
/// a 0.02 grid locates the basin and a 1e-3 grid covers +-0.04 around it.
pub fn nnls_grid_oracle(rows: &[Vec<f64>], targets: &[f64], hi: f64) -> (Vec<f64>, f64) {
    const STEP: f64 = 1e-3;
    let n = rows[0].len();
    assert!((1..=3).contains(&n));
    if n <= 2 {
        let axes = vec![grid_axis(0.0, hi, STEP); n];
        return grid_search(rows, targets, &axes);
    }
    let coarse = vec![grid_axis(0.0, hi, 0.02); n];
    let (center, _) = grid_search(rows, targets, &coarse);
    let axes: Vec<Vec<f64>> = center
        .iter()
        .map(|&c| {
            let lo = ((c - 0.04) / STEP).round() * STEP;
            grid_axis(lo, lo + 0.08, STEP)
        })
        .collect();
    grid_search(rows, targets, &axes)
}

/// Random nonnegative least squares instance with one to three unknowns.
/// Some true coefficients are negative so the bound is active.
pub fn random_small_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(n..=6);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..1.5)).collect();
    let targets = rows
        .iter()
        .map(|r| r.iter().zip(&x).map(|(a, x)| a * x).sum::<f64>() + rng.random_range(-0.05..0.05))
        .collect();
    (rows, targets)
}

/// Compares a solver result with [`nnls_grid_oracle`]. The grid cannot beat
/// the exact minimizer, the grid cell around the minimizer bounds how far
/// above it the best grid point lies, and strong convexity turns that
/// objective gap into a distance bound.
pub fn check_against_grid(rows: &[Vec<f64>], targets: &[f64], x: &[f64]) -> Result<(), String> {
    const STEP: f64 = 1e-3;
    if x.iter().any(|&v| v < 0.0) {
        return Err(format!("negative coefficient in {x:?}"));
    }
    let (grid_x, grid_f) = nnls_grid_oracle(rows, targets, 3.0);
    let f = lsq_objective(rows, targets, x);
    let a = DMatrix::from_fn(rows.len(), rows[0].len(), |l, i| rows[l][i]);
    let eigen = (a.transpose() * a).symmetric_eigen().eigenvalues;
    let (lambda_min, lambda_max) = (eigen.min(), eigen.max());
    let cell = lambda_max * x.len() as f64 * (STEP / 2.0).powi(2);
    if f > grid_f + 1e-12 {
        return Err(format!("solver objective {f} worse than grid {grid_f}"));
    }
    if grid_f - f > cell + 1e-12 {
        return Err(format!("grid gap {} exceeds cell bound {cell}", grid_f - f));
    }
    let distance = x
        .iter()
        .zip(&grid_x)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let bound = ((grid_f - f).max(0.0) / lambda_min).sqrt() + 1e-9;
    if distance > bound {
        return Err(format!(
            "{x:?} vs grid {grid_x:?}: distance {distance} > {bound}"
        ));
    }
    Ok(())
}

/// Reference mean estimation errors as fractions: (validation setup, bit
/// depth, FA, FU) for each training setup.
pub const REFERENCE_CONV8: [(&str, u8, f64, f64); 6] = [
    ("Fisheye", 8, 0.0648, 0.0388),
    ("360D8", 8, 0.0418, 0.0258),
    ("HDR8", 8, 0.0434, 0.0386),
    ("Conventional10", 10, 0.3595, 0.3581),
    ("360D10", 10, 0.3829, 0.3786),
    ("HDR10", 10, 0.4038, 0.4032),
];

pub const REFERENCE_CONV10: [(&str, u8, f64, f64); 6] = [
    ("Conventional8", 8, 0.5946, 0.6021),
    ("Fisheye", 8, 0.6024, 0.6291),
    ("360D8", 8, 0.6029, 0.6112),
    ("HDR8", 8, 0.6889, 0.6917),
    ("360D10", 10, 0.0337, 0.0173),
    ("HDR10", 10, 0.0348, 0.0280),
];

/// Reference errors of the Conventional8 FU model on 10-bit setups:
/// (validation setup, error at zeta 0, error at zeta 0.66).
pub const REFERENCE_ZETA: [(&str, f64, f64); 3] = [
    ("Conventional10", 0.3595, 0.0731),
    ("360D10", 0.3829, 0.0652),
    ("HDR10", 0.4038, 0.0989),
];

fn fixture_report(training: &str, bits: u8, rows: &[(&str, u8, f64, f64)]) -> EvaluationReport {
    let mut report = EvaluationReport::new(training, Some(BitDepth::try_from(bits).unwrap()));
    for &(setup, depth, fa, fu) in rows {
        let depth = Some(BitDepth::try_from(depth).unwrap());
        report
            .rows
            .push(ReportRow::summary(setup, depth, CatalogVariant::Fa, fa));
        report
            .rows
            .push(ReportRow::summary(setup, depth, CatalogVariant::Fu, fu));
    }
    report
}

pub fn reference_reports() -> Vec<EvaluationReport> {
    vec![
        fixture_report("Conventional8", 8, &REFERENCE_CONV8),
        fixture_report("Conventional10", 10, &REFERENCE_CONV10),
    ]
}

/// Cell `(row, column)` of a rendered table, trimmed; column 0 is the
/// row label.
pub fn table_cell(table: &str, row_label: &str, column: usize) -> Option<String> {
    table
        .lines()
        .find(|l| l.split('|').next().map(str::trim) == Some(row_label))
        .and_then(|l| l.split('|').nth(column))
        .map(|c| c.trim().to_string())
}

/// Six coarse groups for a quick phi search.
pub const PIPELINE_GROUPS: &str = "\
general: E_O Islice Bslice Pslice intraCU
intra: pla dc hvd ang noMPM
inter: skip merge mergeSMP mergeAMP inter interSMP interAMP bi uni MVD
interp: fracpelHor fracpelVer fracpelBoth copyPel chrHalfpel
residual: coeff coeffG1 val CSBF TrIntraY TrIntraC TrInterY TrInterC TSF
inloop: Bs0 Bs1 Bs2 SAO_Y_BO SAO_Y_EO SAO_C_BO SAO_C_EO SAO_allComps
";

/// Small synthetic pipeline: train on 8-bit, validate, sweep and search on
/// 10-bit data planted with zeta 0.66.
pub const PIPELINE_CONFIG: &str = r#"
output = "out"
variants = ["fu", "fa"]

[[dataset]]
name = "Conventional8"
[dataset.synthetic]
bit_depth = 8
records = 200
noise = 0.01
seed = 1
coefficient_seed = 9
sequence_prefix = "conv"

[[dataset]]
name = "Conventional10"
[dataset.synthetic]
bit_depth = 10
records = 96
noise = 0.01
seed = 2
coefficient_seed = 9
zeta = 0.66
sequence_prefix = "conv"

[train]
dataset = "Conventional8"

[validate]
datasets = ["Conventional10"]

[sweep]
validate = ["Conventional10"]

[search]
validate = "Conventional10"
groups = "groups.txt"
"#;

/// Every file below `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

pub fn pipeline_workdir(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pipeline.toml"), config).unwrap();
    fs::write(dir.path().join("groups.txt"), PIPELINE_GROUPS).unwrap();
    dir
}

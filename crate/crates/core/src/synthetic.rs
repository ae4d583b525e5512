//! Synthetic ground-truth corpora for plant-and-recover checks.
//!
//! Counts are drawn uniformly from per-category ranges (the initialization
//! feature is fixed at 1) and energies are the linear or bit-depth scaled
//! model evaluated on the planted coefficients, times multiplicative noise.
//! Counts, coefficients and noise come from independent streams of the same
//! seed, so corpora generated with equal seeds share their counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::catalog::{Category, FeatureCatalog};
use crate::dataset::{
    BitDepth, BitstreamMeta, CodingConfig, EnergyDataset, EnergyRecord, FeatureVector, VideoFormat,
    QPS,
};
use crate::energy::{phi_to_bits, scaled_energy, weighted_energy, EnergyModel};
use crate::error::{Error, Result};

const COUNT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const COEFF_STREAM: u64 = 3;

/// Bitstreams per source sequence: four QPs times four configurations.
pub const BITSTREAMS_PER_SEQUENCE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountRange {
    pub min: u64,
    pub max: u64,
}

impl CountRange {
    pub const fn new(min: u64, max: u64) -> Self {
        CountRange { min, max }
    }
}

/// Default ranges span five orders of magnitude across categories.
pub fn default_count_ranges() -> BTreeMap<Category, CountRange> {
    BTreeMap::from([
        (Category::General, CountRange::new(1, 64)),
        (Category::Intra, CountRange::new(10, 10_000)),
        (Category::Inter, CountRange::new(10, 10_000)),
        (Category::Residual, CountRange::new(100, 100_000)),
        (Category::InLoop, CountRange::new(100, 50_000)),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub setup: String,
    pub bit_depth: BitDepth,
    pub format: VideoFormat,
    pub records: usize,
    pub count_ranges: BTreeMap<Category, CountRange>,
    /// Planted coefficients, aligned to the catalog.
    pub coefficients: Vec<f64>,
    /// Planted (zeta, phi); energies follow the scaled model when present.
    pub extension: Option<(f64, Vec<bool>)>,
    /// Relative standard deviation of multiplicative energy noise.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Sequence name prefix; defaults to the setup name without trailing
    /// digits, so `Conventional8` and `Conventional10` share sequences.
    pub sequence_prefix: Option<String>,
}

impl CorpusSpec {
    pub fn new(
        setup: &str,
        bit_depth: BitDepth,
        records: usize,
        coefficients: Vec<f64>,
        seed: u64,
    ) -> Self {
        CorpusSpec {
            setup: setup.to_string(),
            bit_depth,
            format: VideoFormat::Sdr,
            records,
            count_ranges: default_count_ranges(),
            coefficients,
            extension: None,
            noise_sigma: 0.0,
            seed,
            sequence_prefix: None,
        }
    }

    fn prefix(&self) -> String {
        self.sequence_prefix.clone().unwrap_or_else(|| {
            self.setup
                .trim_end_matches(|c: char| c.is_ascii_digit())
                .to_string()
        })
    }
}

/// Planted parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub model: EnergyModel,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GroundTruth {
    /// Model text with `kind`, `sigma` and `seed` header entries; loadable
    /// with [`EnergyModel::from_text`].
    pub fn to_text(&self) -> String {
        let mut model = self.model.clone();
        model
            .attributes
            .insert("kind".into(), "ground_truth".into());
        model
            .attributes
            .insert("sigma".into(), self.noise_sigma.to_string());
        model
            .attributes
            .insert("seed".into(), self.seed.to_string());
        model.to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let model = EnergyModel::from_text(text)?;
        let get = |key: &str| {
            model
                .attribute(key)
                .ok_or_else(|| Error::parse("ground truth", 0, format!("missing `{key}=`")))
        };
        let noise_sigma = get("sigma")?
            .parse()
            .map_err(|_| Error::parse("ground truth", 0, "invalid sigma"))?;
        let seed = get("seed")?
            .parse()
            .map_err(|_| Error::parse("ground truth", 0, "invalid seed"))?;
        Ok(GroundTruth {
            model,
            noise_sigma,
            seed,
        })
    }
}

/// Draws planted coefficients: each leaf gets about `1e-3 J` of energy at
/// the midpoint of its category's count range, scaled by a uniform factor
/// in [0.5, 1.5). The initialization feature gets 0.05 J.
pub fn default_true_coefficients(
    catalog: &FeatureCatalog,
    ranges: &BTreeMap<Category, CountRange>,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COEFF_STREAM);
    let init = catalog.init_position();
    catalog
        .leaves()
        .iter()
        .enumerate()
        .map(|(i, leaf)| {
            let factor: f64 = rng.random_range(0.5..1.5);
            if i == init {
                return 0.05 * factor;
            }
            let range = ranges[&leaf.category];
            let mid = (range.min + range.max) as f64 / 2.0;
            1e-3 * factor / mid
        })
        .collect()
}

/// Draws `records` count vectors for `catalog`.
pub fn generate_counts(
    catalog: &FeatureCatalog,
    ranges: &BTreeMap<Category, CountRange>,
    records: usize,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    for (cat, r) in ranges {
        if r.min > r.max {
            return Err(Error::InvalidConfig(format!(
                "count range for {cat} is empty ({}..={})",
                r.min, r.max
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(COUNT_STREAM);
    let init = catalog.init_position();
    (0..records)
        .map(|_| {
            let counts = catalog
                .leaves()
                .iter()
                .enumerate()
                .map(|(i, leaf)| {
                    if i == init {
                        return Ok(1);
                    }
                    let r = ranges.get(&leaf.category).ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "no count range for category {}",
                            leaf.category
                        ))
                    })?;
                    Ok(rng.random_range(r.min..=r.max))
                })
                .collect::<Result<Vec<u64>>>()?;
            FeatureVector::new(catalog.variant(), counts)
        })
        .collect()
}

fn meta_for(spec: &CorpusSpec, k: usize) -> BitstreamMeta {
    let sequence = format!("{}{:03}", spec.prefix(), k / BITSTREAMS_PER_SEQUENCE);
    let qp = QPS[k % QPS.len()];
    let config = CodingConfig::ALL[(k / QPS.len()) % CodingConfig::ALL.len()];
    BitstreamMeta {
        id: format!("{}_{}_{}_qp{}", spec.setup, sequence, config, qp),
        setup: spec.setup.clone(),
        sequence,
        qp: Some(qp),
        config: Some(config),
        bit_depth: spec.bit_depth,
        format: spec.format,
    }
}

/// Generates a corpus and its ground truth.
pub fn generate_synthetic_corpus(
    catalog: &FeatureCatalog,
    spec: &CorpusSpec,
) -> Result<(EnergyDataset, GroundTruth)> {
    if spec.coefficients.len() != catalog.len() {
        return Err(Error::Alignment {
            expected: catalog.len(),
            found: spec.coefficients.len(),
        });
    }
    if spec.records == 0 {
        return Err(Error::InvalidConfig(
            "corpus needs at least one record".into(),
        ));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
    }
    let mut model = EnergyModel::new(catalog.variant(), spec.coefficients.clone())?;
    if let Some((zeta, phi)) = &spec.extension {
        model = model.with_extension(*zeta, phi.clone())?;
    }

    let counts = generate_counts(catalog, &spec.count_ranges, spec.records, spec.seed)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(NOISE_STREAM);
    let records = counts
        .into_iter()
        .enumerate()
        .map(|(k, counts)| {
            let clean = match &spec.extension {
                Some((zeta, phi)) => scaled_energy(&spec.coefficients, counts.counts(), *zeta, phi),
                None => weighted_energy(&spec.coefficients, counts.counts()),
            };
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            let energy = if spec.noise_sigma == 0.0 {
                clean
            } else {
                clean * (1.0 + spec.noise_sigma * z).max(1e-6)
            };
            EnergyRecord {
                meta: meta_for(spec, k),
                counts,
                energy,
            }
        })
        .collect();
    let mut dataset = EnergyDataset::new(spec.setup.clone(), catalog.variant(), records)?;
    dataset.source = format!("synthetic seed={} sigma={}", spec.seed, spec.noise_sigma);
    Ok((
        dataset,
        GroundTruth {
            model,
            noise_sigma: spec.noise_sigma,
            seed: spec.seed,
        },
    ))
}

/// The zeta that makes the mean 10-bit/8-bit energy ratio equal `target`
/// for the given counts: the per-record ratio is `1 + zeta * B/A` with `A`
/// the unscaled energy and `B` its phi-flagged part.
pub fn zeta_for_mean_ratio(
    counts: &[FeatureVector],
    coefficients: &[f64],
    phi: &[bool],
    target: f64,
) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::InvalidConfig("no counts".into()));
    }
    let flagged: Vec<f64> = coefficients
        .iter()
        .zip(phi)
        .map(|(&e, &p)| if p { e } else { 0.0 })
        .collect();
    let mean_share = counts
        .iter()
        .map(|c| weighted_energy(&flagged, c.counts()) / weighted_energy(coefficients, c.counts()))
        .sum::<f64>()
        / counts.len() as f64;
    if !(mean_share > 0.0) {
        return Err(Error::InvalidConfig("phi flags no energy".into()));
    }
    let zeta = (target - 1.0) / mean_share;
    if zeta < 0.0 {
        return Err(Error::NegativeZeta(zeta));
    }
    Ok(zeta)
}

/// Short human-readable ground-truth summary.
pub fn describe(truth: &GroundTruth) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed={} sigma={}", truth.seed, truth.noise_sigma);
    if let Some(ext) = truth.model.extension() {
        let _ = writeln!(out, "zeta={} phi={}", ext.zeta, phi_to_bits(&ext.phi));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogVariant;

    fn spec(records: usize, seed: u64) -> (FeatureCatalog, CorpusSpec) {
        let cat = FeatureCatalog::build(CatalogVariant::Fu);
        let coeffs = default_true_coefficients(&cat, &default_count_ranges(), seed);
        let spec = CorpusSpec::new("Conventional8", BitDepth::EIGHT, records, coeffs, seed);
        (cat, spec)
    }

    #[test]
    fn noiseless_energies_follow_the_linear_model() {
        let (cat, spec) = spec(40, 3);
        let (ds, truth) = generate_synthetic_corpus(&cat, &spec).unwrap();
        for rec in ds.records() {
            assert_eq!(truth.model.estimate(&rec.counts).unwrap(), rec.energy);
            assert_eq!(rec.counts.counts()[cat.init_position()], 1);
        }
    }

    #[test]
    fn noiseless_energies_follow_the_scaled_model() {
        let (cat, mut spec) = spec(40, 4);
        spec.extension = Some((0.66, cat.phi_vector()));
        let (ds, truth) = generate_synthetic_corpus(&cat, &spec).unwrap();
        for rec in ds.records() {
            assert_eq!(
                truth.model.estimate_scaled(&rec.counts).unwrap(),
                rec.energy
            );
        }
    }

    #[test]
    fn metadata_follows_the_encoding_grid() {
        let (cat, spec) = spec(32, 5);
        let (ds, _) = generate_synthetic_corpus(&cat, &spec).unwrap();
        assert_eq!(ds.sequences().len(), 2);
        assert!(ds.sequences().contains("Conventional000"));
        for rec in ds.records() {
            assert!(QPS.contains(&rec.meta.qp.unwrap()));
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let (cat, mut spec) = spec(20, 6);
        spec.noise_sigma = 0.01;
        let a = generate_synthetic_corpus(&cat, &spec).unwrap();
        let b = generate_synthetic_corpus(&cat, &spec).unwrap();
        assert_eq!(a, b);
        spec.seed = 7;
        let c = generate_synthetic_corpus(&cat, &spec).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let (cat, mut spec) = spec(5, 1);
        spec.count_ranges
            .insert(Category::Intra, CountRange::new(10, 1));
        assert!(generate_synthetic_corpus(&cat, &spec).is_err());
        let (cat, mut spec) = self::spec(5, 1);
        spec.coefficients.pop();
        assert!(generate_synthetic_corpus(&cat, &spec).is_err());
    }

    #[test]
    fn ground_truth_text_round_trip() {
        let (cat, mut spec) = spec(5, 8);
        spec.extension = Some((0.66, cat.phi_vector()));
        spec.noise_sigma = 0.01;
        let (_, truth) = generate_synthetic_corpus(&cat, &spec).unwrap();
        let back = GroundTruth::from_text(&truth.to_text()).unwrap();
        assert_eq!(back.model.coefficients(), truth.model.coefficients());
        assert_eq!(back.model.extension(), truth.model.extension());
        assert_eq!((back.noise_sigma, back.seed), (0.01, 8));
    }
}

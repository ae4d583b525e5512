//! Linear decoding energy model and its bit-depth scaled extension.
//!
//! The estimated energy of a bitstream is the sum over leaves of the
//! feature count times the specific energy coefficient. The extension
//! multiplies the coefficients of bit-depth sensitive leaves (phi = 1) by
//! `1 + zeta`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::catalog::{CatalogVariant, FeatureCatalog};
use crate::dataset::{CodingConfig, EnergyDataset, FeatureVector};
use crate::error::{Error, Result};

/// Neumaier-compensated accumulator; terms are added in call order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `sum_i counts[i] * coefficients[i]` in index order.
pub fn weighted_energy(coefficients: &[f64], counts: &[u64]) -> f64 {
    debug_assert_eq!(coefficients.len(), counts.len());
    coefficients
        .iter()
        .zip(counts)
        .map(|(&e, &n)| n as f64 * e)
        .collect::<CompensatedSum>()
        .value()
}

/// `sum_i (1 + zeta * phi[i]) * coefficients[i] * counts[i]` in index order.
pub fn scaled_energy(coefficients: &[f64], counts: &[u64], zeta: f64, phi: &[bool]) -> f64 {
    debug_assert_eq!(coefficients.len(), counts.len());
    debug_assert_eq!(coefficients.len(), phi.len());
    coefficients
        .iter()
        .zip(counts)
        .zip(phi)
        .map(|((&e, &n), &p)| {
            let scale = if p { 1.0 + zeta } else { 1.0 };
            scale * e * n as f64
        })
        .collect::<CompensatedSum>()
        .value()
}

/// Mean absolute relative error between paired estimates and measurements.
pub fn mean_relative_error(estimates: &[f64], measured: &[f64]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyDataset {
            name: "<estimates>".into(),
        });
    }
    debug_assert_eq!(estimates.len(), measured.len());
    let mut acc = CompensatedSum::default();
    for (&est, &meas) in estimates.iter().zip(measured) {
        if !(meas > 0.0) {
            return Err(Error::NonPositiveEnergy {
                id: "<measurement>".into(),
                value: meas,
            });
        }
        acc.add(((est - meas) / meas).abs());
    }
    Ok(acc.value() / estimates.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitDepthExtension {
    pub zeta: f64,
    pub phi: Vec<bool>,
}

impl BitDepthExtension {
    pub fn new(zeta: f64, phi: Vec<bool>) -> Result<Self> {
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(Error::NegativeZeta(zeta));
        }
        Ok(BitDepthExtension { zeta, phi })
    }
}

/// Trained specific energy coefficients (joules per feature occurrence).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    variant: CatalogVariant,
    coefficients: Vec<f64>,
    untrained: Vec<bool>,
    extension: Option<BitDepthExtension>,
    /// Free-form `key=value` header entries (training setup, provenance).
    pub attributes: BTreeMap<String, String>,
}

impl EnergyModel {
    pub fn new(variant: CatalogVariant, coefficients: Vec<f64>) -> Result<Self> {
        let expected = FeatureCatalog::get(variant).len();
        if coefficients.len() != expected {
            return Err(Error::Alignment {
                expected,
                found: coefficients.len(),
            });
        }
        if let Some(bad) = coefficients
            .iter()
            .find(|e| !(**e >= 0.0) || !e.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "energy coefficients must be finite and >= 0, got {bad}"
            )));
        }
        Ok(EnergyModel {
            variant,
            untrained: vec![false; coefficients.len()],
            coefficients,
            extension: None,
            attributes: BTreeMap::new(),
        })
    }

    pub fn with_untrained(mut self, untrained: Vec<bool>) -> Result<Self> {
        if untrained.len() != self.coefficients.len() {
            return Err(Error::Alignment {
                expected: self.coefficients.len(),
                found: untrained.len(),
            });
        }
        self.untrained = untrained;
        Ok(self)
    }

    /// Attaches (or replaces) the bit-depth extension.
    pub fn with_extension(mut self, zeta: f64, phi: Vec<bool>) -> Result<Self> {
        if phi.len() != self.coefficients.len() {
            return Err(Error::Alignment {
                expected: self.coefficients.len(),
                found: phi.len(),
            });
        }
        self.extension = Some(BitDepthExtension::new(zeta, phi)?);
        Ok(self)
    }

    pub fn without_extension(mut self) -> Self {
        self.extension = None;
        self
    }

    pub fn variant(&self) -> CatalogVariant {
        self.variant
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn untrained(&self) -> &[bool] {
        &self.untrained
    }

    pub fn extension(&self) -> Option<&BitDepthExtension> {
        self.extension.as_ref()
    }

    pub fn attribute(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }

    fn check_aligned(&self, counts: &FeatureVector) -> Result<()> {
        if counts.variant() != self.variant {
            return Err(Error::VariantMismatch {
                expected: self.variant,
                found: counts.variant(),
            });
        }
        if counts.len() != self.coefficients.len() {
            return Err(Error::Alignment {
                expected: self.coefficients.len(),
                found: counts.len(),
            });
        }
        Ok(())
    }

    /// Unscaled estimate in joules.
    pub fn estimate(&self, counts: &FeatureVector) -> Result<f64> {
        self.check_aligned(counts)?;
        Ok(weighted_energy(&self.coefficients, counts.counts()))
    }

    /// Estimate with the model's own bit-depth extension.
    pub fn estimate_scaled(&self, counts: &FeatureVector) -> Result<f64> {
        let ext = self.extension.as_ref().ok_or(Error::MissingExtension)?;
        self.estimate_with(ext.zeta, &ext.phi, counts)
    }

    /// Estimate with an explicit (zeta, phi) pair.
    pub fn estimate_with(&self, zeta: f64, phi: &[bool], counts: &FeatureVector) -> Result<f64> {
        self.check_aligned(counts)?;
        if !(zeta >= 0.0) {
            return Err(Error::NegativeZeta(zeta));
        }
        if phi.len() != self.coefficients.len() {
            return Err(Error::Alignment {
                expected: self.coefficients.len(),
                found: phi.len(),
            });
        }
        Ok(scaled_energy(
            &self.coefficients,
            counts.counts(),
            zeta,
            phi,
        ))
    }

    /// Model text: `key=value` header lines, then `leaf,coefficient` rows.
    /// Untrained leaves carry a third `untrained` field.
    pub fn to_text(&self) -> String {
        let catalog = FeatureCatalog::get(self.variant);
        let mut out = String::new();
        let _ = writeln!(out, "variant={}", self.variant.as_str());
        for (k, v) in &self.attributes {
            let _ = writeln!(out, "{k}={v}");
        }
        if let Some(ext) = &self.extension {
            let _ = writeln!(out, "zeta={}", ext.zeta);
            let _ = writeln!(out, "phi={}", phi_to_bits(&ext.phi));
        }
        out.push_str("leaf,coefficient\n");
        for ((leaf, e), untrained) in catalog
            .leaves()
            .iter()
            .zip(&self.coefficients)
            .zip(&self.untrained)
        {
            let _ = write!(out, "{},{:e}", leaf.name(), e);
            if *untrained {
                out.push_str(",untrained");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const CTX: &str = "model";
        let mut variant = None;
        let mut zeta = None;
        let mut phi = None;
        let mut attributes = BTreeMap::new();
        let mut lines = text.lines().enumerate();
        for (i, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "leaf,coefficient" {
                break;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(CTX, i + 1, format!("expected key=value, got `{line}`"))
            })?;
            match key {
                "variant" => variant = Some(value.parse::<CatalogVariant>()?),
                "zeta" => {
                    zeta =
                        Some(value.parse::<f64>().map_err(|_| {
                            Error::parse(CTX, i + 1, format!("invalid zeta `{value}`"))
                        })?)
                }
                "phi" => phi = Some(phi_from_bits(value).map_err(|m| Error::parse(CTX, i + 1, m))?),
                _ => {
                    attributes.insert(key.to_string(), value.to_string());
                }
            }
        }
        let variant = variant.ok_or_else(|| Error::parse(CTX, 0, "missing `variant=` header"))?;
        let catalog = FeatureCatalog::get(variant);
        let mut coefficients = Vec::with_capacity(catalog.len());
        let mut untrained = Vec::with_capacity(catalog.len());
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let leaf = fields.next().unwrap_or_default();
            let expected = catalog.leaves().get(coefficients.len()).map(|l| l.name());
            if expected.as_deref() != Some(leaf) {
                return Err(Error::parse(
                    CTX,
                    i + 1,
                    format!(
                        "expected leaf `{}`, got `{leaf}`",
                        expected.unwrap_or_default()
                    ),
                ));
            }
            let raw = fields
                .next()
                .ok_or_else(|| Error::parse(CTX, i + 1, "missing coefficient"))?;
            let e: f64 = raw
                .parse()
                .map_err(|_| Error::parse(CTX, i + 1, format!("invalid coefficient `{raw}`")))?;
            coefficients.push(e);
            untrained.push(match fields.next() {
                None => false,
                Some("untrained") => true,
                Some(other) => {
                    return Err(Error::parse(CTX, i + 1, format!("unknown flag `{other}`")))
                }
            });
        }
        let mut model = EnergyModel::new(variant, coefficients)?.with_untrained(untrained)?;
        model.attributes = attributes;
        match (zeta, phi) {
            (Some(z), Some(p)) => model.with_extension(z, p),
            (None, None) => Ok(model),
            _ => Err(Error::parse(
                CTX,
                0,
                "`zeta=` and `phi=` must appear together",
            )),
        }
    }
}

pub fn phi_to_bits(phi: &[bool]) -> String {
    phi.iter().map(|&p| if p { '1' } else { '0' }).collect()
}

/// Parses a 0/1 string; whitespace is ignored.
pub fn phi_from_bits(bits: &str) -> Result<Vec<bool>, String> {
    bits.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(format!("invalid phi character `{other}`")),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub id: String,
    pub estimated: f64,
    pub measured: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    /// Mean estimation error as a fraction.
    pub mean: f64,
    pub residuals: Vec<Residual>,
}

impl ErrorSummary {
    pub fn percent(&self) -> f64 {
        self.mean * 100.0
    }
}

/// Mean estimation error of `model` over `dataset`, using the model's
/// bit-depth extension when `scaled` is set.
pub fn mean_estimation_error(
    model: &EnergyModel,
    dataset: &EnergyDataset,
    scaled: bool,
) -> Result<ErrorSummary> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset {
            name: dataset.name.clone(),
        });
    }
    let mut residuals = Vec::with_capacity(dataset.len());
    let mut acc = CompensatedSum::default();
    for rec in dataset.records() {
        if !(rec.energy > 0.0) {
            return Err(Error::NonPositiveEnergy {
                id: rec.meta.id.clone(),
                value: rec.energy,
            });
        }
        let estimated = if scaled {
            model.estimate_scaled(&rec.counts)?
        } else {
            model.estimate(&rec.counts)?
        };
        let relative_error = ((estimated - rec.energy) / rec.energy).abs();
        acc.add(relative_error);
        residuals.push(Residual {
            id: rec.meta.id.clone(),
            estimated,
            measured: rec.energy,
            relative_error,
        });
    }
    Ok(ErrorSummary {
        mean: acc.value() / dataset.len() as f64,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioPair {
    pub sequence: String,
    pub qp: u8,
    pub config: CodingConfig,
    pub energy8: f64,
    pub energy10: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub pairs: Vec<RatioPair>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl RatioReport {
    /// Scatter data: `sequence,qp,config,energy_8bit,energy_10bit,ratio`.
    pub fn scatter_csv(&self) -> String {
        let mut out = String::from("sequence,qp,config,energy_8bit,energy_10bit,ratio\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.sequence, p.qp, p.config, p.energy8, p.energy10, p.ratio
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "pairs={} mean_ratio={:.4} min_ratio={:.4} max_ratio={:.4}\n",
            self.pairs.len(),
            self.mean,
            self.min,
            self.max
        )
    }
}

/// Pairs 8-bit and 10-bit records by (sequence, qp, config) and reports the
/// energy ratios `E_10bit / E_8bit`.
pub fn energy_ratio_report(
    dataset8: &EnergyDataset,
    dataset10: &EnergyDataset,
) -> Result<RatioReport> {
    let key_of = |rec: &crate::dataset::EnergyRecord| {
        rec.meta.pairing_key().ok_or_else(|| Error::Unpairable {
            key: format!("`{}` (no sequence/qp/config metadata)", rec.meta.id),
        })
    };
    let fmt_key = |k: &(String, u8, CodingConfig)| format!("({}, qp{}, {})", k.0, k.1, k.2);

    let mut tens = BTreeMap::new();
    for rec in dataset10.records() {
        let key = key_of(rec)?;
        if tens.insert(key.clone(), rec.energy).is_some() {
            return Err(Error::Unpairable {
                key: format!("{} (duplicate in 10-bit set)", fmt_key(&key)),
            });
        }
    }
    let mut eights = BTreeMap::new();
    for rec in dataset8.records() {
        let key = key_of(rec)?;
        if eights.insert(key.clone(), rec.energy).is_some() {
            return Err(Error::Unpairable {
                key: format!("{} (duplicate in 8-bit set)", fmt_key(&key)),
            });
        }
    }
    if let Some(key) = tens.keys().find(|k| !eights.contains_key(*k)) {
        return Err(Error::Unpairable { key: fmt_key(key) });
    }
    let mut pairs = Vec::with_capacity(eights.len());
    for (key, e8) in eights {
        let e10 = *tens
            .get(&key)
            .ok_or_else(|| Error::Unpairable { key: fmt_key(&key) })?;
        let (sequence, qp, config) = key;
        pairs.push(RatioPair {
            sequence,
            qp,
            config,
            energy8: e8,
            energy10: e10,
            ratio: e10 / e8,
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset {
            name: dataset8.name.clone(),
        });
    }
    let ratios: Vec<f64> = pairs.iter().map(|p| p.ratio).collect();
    let mean = ratios.iter().copied().collect::<CompensatedSum>().value() / ratios.len() as f64;
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RatioReport {
        pairs,
        min,
        max,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogVariant::Fu;

    #[test]
    fn toy_estimates() {
        assert_eq!(weighted_energy(&[2.0, 3.0], &[10, 5]), 35.0);
        assert_eq!(
            scaled_energy(&[2.0, 3.0], &[10, 5], 0.5, &[true, false]),
            45.0
        );
        assert_eq!(weighted_energy(&[2.0, 3.0], &[0, 0]), 0.0);
    }

    #[test]
    fn unit_vector_picks_coefficient() {
        let cat = FeatureCatalog::get(Fu);
        let coeffs: Vec<f64> = (0..cat.len()).map(|i| 0.25 * i as f64 + 0.1).collect();
        let model = EnergyModel::new(Fu, coeffs.clone()).unwrap();
        for k in [0, 17, 99] {
            let mut counts = vec![0; cat.len()];
            counts[k] = 1;
            let v = FeatureVector::new(Fu, counts).unwrap();
            assert_eq!(model.estimate(&v).unwrap(), coeffs[k]);
        }
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(mean_relative_error(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        assert_eq!(mean_relative_error(&[4.0], &[2.0]).unwrap(), 1.0);
        let e = mean_relative_error(&[1.1, 0.7], &[1.0, 1.0]).unwrap();
        assert!((e - 0.2).abs() < 1e-15);
        assert!(mean_relative_error(&[], &[]).is_err());
        assert!(mean_relative_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn negative_zeta_is_rejected() {
        let model = EnergyModel::new(Fu, vec![1.0; 100]).unwrap();
        assert!(matches!(
            model.clone().with_extension(-0.1, vec![true; 100]),
            Err(Error::NegativeZeta(_))
        ));
        let v = FeatureVector::zeros(Fu);
        assert!(matches!(
            model.estimate_with(-1.0, &[true; 100], &v),
            Err(Error::NegativeZeta(_))
        ));
        assert!(matches!(
            model.estimate_scaled(&v),
            Err(Error::MissingExtension)
        ));
    }

    #[test]
    fn misaligned_counts_are_rejected() {
        let model = EnergyModel::new(Fu, vec![1.0; 100]).unwrap();
        let fa = FeatureVector::zeros(CatalogVariant::Fa);
        assert!(matches!(
            model.estimate(&fa),
            Err(Error::VariantMismatch { .. })
        ));
    }

    #[test]
    fn model_text_round_trip() {
        let coeffs: Vec<f64> = (0..100)
            .map(|i| (i as f64 + 0.3).sqrt() * 1e-7 / 3.0)
            .collect();
        let mut untrained = vec![false; 100];
        untrained[14] = true;
        let mut phi = vec![true; 100];
        phi[3] = false;
        let mut model = EnergyModel::new(Fu, coeffs)
            .unwrap()
            .with_untrained(untrained)
            .unwrap()
            .with_extension(0.66, phi)
            .unwrap();
        model
            .attributes
            .insert("trained_on".into(), "Conventional8".into());
        let text = model.to_text();
        let back = EnergyModel::from_text(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn model_text_requires_both_extension_lines() {
        let model = EnergyModel::new(Fu, vec![1.0; 100]).unwrap();
        let text = model
            .to_text()
            .replace("leaf,coefficient", "zeta=0.5\nleaf,coefficient");
        assert!(EnergyModel::from_text(&text).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            acc.add(x);
        }
        assert_eq!(acc.value(), 2.0);
    }
}

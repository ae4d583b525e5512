//! Per-bitstream feature counts, metadata and measured decoding energies.
//!
//! On disk a dataset is three or four small files:
//!
//! * features CSV: `id` followed by one column per catalog leaf, in
//!   canonical catalog order;
//! * energies CSV: `id,energy_joules`;
//! * manifest (TOML): `name`, `records`, `bit_depth`, `source`, plus
//!   optional `catalog` (`fu` default), `format` and `metadata`;
//! * optional metadata CSV named by the manifest:
//!   `id,sequence,qp,config,format`.
//!
//! Records are sorted by id after loading.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{project_counts, CatalogVariant, FeatureCatalog};
use crate::error::{Error, Result};

pub const FEATURES_FILE: &str = "features.csv";
pub const ENERGIES_FILE: &str = "energies.csv";
pub const METADATA_FILE: &str = "metadata.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Quantization parameters of the encoding grid.
pub const QPS: [u8; 4] = [22, 27, 32, 37];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingConfig {
    Intra,
    Lowdelay,
    #[serde(rename = "lowdelayP")]
    LowdelayP,
    Randomaccess,
}

impl CodingConfig {
    pub const ALL: [CodingConfig; 4] = [
        CodingConfig::Intra,
        CodingConfig::Lowdelay,
        CodingConfig::LowdelayP,
        CodingConfig::Randomaccess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CodingConfig::Intra => "intra",
            CodingConfig::Lowdelay => "lowdelay",
            CodingConfig::LowdelayP => "lowdelayP",
            CodingConfig::Randomaccess => "randomaccess",
        }
    }
}

impl fmt::Display for CodingConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodingConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        CodingConfig::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown coding configuration `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VideoFormat {
    #[serde(rename = "SDR")]
    Sdr,
    #[serde(rename = "HDR")]
    Hdr,
    Fisheye,
    #[serde(rename = "ERP")]
    Erp,
    #[serde(rename = "PERP")]
    Perp,
    #[serde(rename = "CMP")]
    Cmp,
    #[serde(rename = "EAC")]
    Eac,
    #[serde(rename = "ACP")]
    Acp,
    #[serde(rename = "RSP")]
    Rsp,
}

impl VideoFormat {
    pub const ALL: [VideoFormat; 9] = [
        VideoFormat::Sdr,
        VideoFormat::Hdr,
        VideoFormat::Fisheye,
        VideoFormat::Erp,
        VideoFormat::Perp,
        VideoFormat::Cmp,
        VideoFormat::Eac,
        VideoFormat::Acp,
        VideoFormat::Rsp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VideoFormat::Sdr => "SDR",
            VideoFormat::Hdr => "HDR",
            VideoFormat::Fisheye => "Fisheye",
            VideoFormat::Erp => "ERP",
            VideoFormat::Perp => "PERP",
            VideoFormat::Cmp => "CMP",
            VideoFormat::Eac => "EAC",
            VideoFormat::Acp => "ACP",
            VideoFormat::Rsp => "RSP",
        }
    }
}

impl fmt::Display for VideoFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VideoFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        VideoFormat::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown video format `{s}`"))
    }
}

/// Internal coding bit depth, 8 or 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct BitDepth(u8);

impl BitDepth {
    pub const EIGHT: BitDepth = BitDepth(8);
    pub const TEN: BitDepth = BitDepth(10);

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, String> {
        match bits {
            8 | 10 => Ok(BitDepth(bits)),
            other => Err(format!("bit depth must be 8 or 10, got {other}")),
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(b: BitDepth) -> u8 {
        b.0
    }
}

impl fmt::Display for BitDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitstreamMeta {
    pub id: String,
    pub setup: String,
    pub sequence: String,
    pub qp: Option<u8>,
    pub config: Option<CodingConfig>,
    pub bit_depth: BitDepth,
    pub format: VideoFormat,
}

impl BitstreamMeta {
    /// Key pairing the same encoding across bit depths.
    pub fn pairing_key(&self) -> Option<(String, u8, CodingConfig)> {
        Some((self.sequence.clone(), self.qp?, self.config?))
    }
}

/// Per-bitstream feature numbers aligned to a catalog.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    variant: CatalogVariant,
    counts: Vec<u64>,
}

impl FeatureVector {
    pub fn new(variant: CatalogVariant, counts: Vec<u64>) -> Result<Self> {
        let expected = FeatureCatalog::get(variant).len();
        if counts.len() != expected {
            return Err(Error::Alignment {
                expected,
                found: counts.len(),
            });
        }
        Ok(FeatureVector { variant, counts })
    }

    pub fn zeros(variant: CatalogVariant) -> Self {
        FeatureVector {
            variant,
            counts: vec![0; FeatureCatalog::get(variant).len()],
        }
    }

    pub fn variant(&self) -> CatalogVariant {
        self.variant
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Element-wise sum of two aligned vectors.
    pub fn checked_add(&self, other: &FeatureVector) -> Result<FeatureVector> {
        if self.variant != other.variant {
            return Err(Error::VariantMismatch {
                expected: self.variant,
                found: other.variant,
            });
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Ok(FeatureVector {
            variant: self.variant,
            counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub meta: BitstreamMeta,
    pub counts: FeatureVector,
    /// Measured decoding energy in joules.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub records: usize,
    pub bit_depth: BitDepth,
    #[serde(default)]
    pub source: String,
    #[serde(default = "default_catalog")]
    pub catalog: CatalogVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<VideoFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<String>,
}

fn default_catalog() -> CatalogVariant {
    CatalogVariant::Fu
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(path.display().to_string(), line, e.message().to_string())
        })
    }
}

/// Declared versus loaded record count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountCheck {
    pub declared: usize,
    pub actual: usize,
}

impl CountCheck {
    pub fn is_consistent(&self) -> bool {
        self.declared == self.actual
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_consistent() {
            Ok(())
        } else {
            Err(Error::RecordCountMismatch {
                declared: self.declared,
                actual: self.actual,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDataset {
    pub name: String,
    pub source: String,
    variant: CatalogVariant,
    records: Vec<EnergyRecord>,
}

impl EnergyDataset {
    /// Builds a dataset, checking catalog agreement and positive energies.
    /// Records are sorted by id.
    pub fn new(
        name: impl Into<String>,
        variant: CatalogVariant,
        mut records: Vec<EnergyRecord>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for rec in &records {
            if rec.counts.variant() != variant {
                return Err(Error::VariantMismatch {
                    expected: variant,
                    found: rec.counts.variant(),
                });
            }
            if !(rec.energy > 0.0) || !rec.energy.is_finite() {
                return Err(Error::NonPositiveEnergy {
                    id: rec.meta.id.clone(),
                    value: rec.energy,
                });
            }
            if !seen.insert(rec.meta.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: rec.meta.id.clone(),
                    path: PathBuf::from("<memory>"),
                });
            }
        }
        records.sort_by(|a, b| a.meta.id.cmp(&b.meta.id));
        Ok(EnergyDataset {
            name: name.into(),
            source: String::new(),
            variant,
            records,
        })
    }

    pub fn variant(&self) -> CatalogVariant {
        self.variant
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.meta.id.as_str())
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// The common bit depth of all records, if there is one.
    pub fn bit_depth(&self) -> Option<BitDepth> {
        let first = self.records.first()?.meta.bit_depth;
        self.records
            .iter()
            .all(|r| r.meta.bit_depth == first)
            .then_some(first)
    }

    /// Set of distinct source sequence names.
    pub fn sequences(&self) -> BTreeSet<&str> {
        self.records
            .iter()
            .map(|r| r.meta.sequence.as_str())
            .collect()
    }

    /// Concatenates datasets that share a catalog variant.
    pub fn union(name: impl Into<String>, parts: &[&EnergyDataset]) -> Result<Self> {
        let variant = parts
            .first()
            .map(|d| d.variant)
            .unwrap_or(CatalogVariant::Fu);
        let records = parts
            .iter()
            .flat_map(|d| d.records.iter().cloned())
            .collect();
        EnergyDataset::new(name, variant, records)
    }

    /// Re-aligns every record to `target` via [`project_counts`].
    pub fn project(&self, target: &FeatureCatalog) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(EnergyRecord {
                    meta: r.meta.clone(),
                    counts: project_counts(&r.counts, target)?,
                    energy: r.energy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = EnergyDataset::new(self.name.clone(), target.variant(), records)?;
        out.source = self.source.clone();
        Ok(out)
    }

    /// Subset of records encoded with the given configuration.
    pub fn filter_config(&self, config: CodingConfig) -> Self {
        EnergyDataset {
            name: format!("{}[{}]", self.name, config),
            source: self.source.clone(),
            variant: self.variant,
            records: self
                .records
                .iter()
                .filter(|r| r.meta.config == Some(config))
                .cloned()
                .collect(),
        }
    }

    fn with_records(&self, name: String, records: Vec<EnergyRecord>) -> Self {
        EnergyDataset {
            name,
            source: self.source.clone(),
            variant: self.variant,
            records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitRule {
    /// Records whose setup is listed go to training, the rest to validation.
    BySetup { train: Vec<String> },
    /// Distinct sequences are sorted by name and every `holdout_every`-th
    /// one (1-based) goes to validation, so no sequence lands in both halves.
    BySequence { holdout_every: usize },
}

/// Partitions `dataset` into (train, validation).
pub fn split(dataset: &EnergyDataset, rule: &SplitRule) -> Result<(EnergyDataset, EnergyDataset)> {
    let (train, validation): (Vec<_>, Vec<_>) = match rule {
        SplitRule::BySetup { train } => dataset
            .records
            .iter()
            .cloned()
            .partition(|r| train.contains(&r.meta.setup)),
        SplitRule::BySequence { holdout_every } => {
            if *holdout_every < 2 {
                return Err(Error::InvalidConfig(
                    "by-sequence split needs holdout_every >= 2".into(),
                ));
            }
            let held: BTreeSet<&str> = dataset
                .sequences()
                .into_iter()
                .enumerate()
                .filter(|(i, _)| (i + 1) % holdout_every == 0)
                .map(|(_, s)| s)
                .collect();
            dataset
                .records
                .iter()
                .cloned()
                .partition(|r| !held.contains(r.meta.sequence.as_str()))
        }
    };
    if train.is_empty() {
        return Err(Error::EmptySplit { half: "training" });
    }
    if validation.is_empty() {
        return Err(Error::EmptySplit { half: "validation" });
    }
    let train_name = match rule {
        SplitRule::BySetup { train } => train.join("+"),
        SplitRule::BySequence { .. } => format!("{}-train", dataset.name),
    };
    let validation_name = match rule {
        SplitRule::BySetup { .. } => {
            let setups: BTreeSet<&str> = validation.iter().map(|r| r.meta.setup.as_str()).collect();
            setups.into_iter().collect::<Vec<_>>().join("+")
        }
        SplitRule::BySequence { .. } => format!("{}-validation", dataset.name),
    };
    Ok((
        dataset.with_records(train_name, train),
        dataset.with_records(validation_name, validation),
    ))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_count(id: &str, column: &str, raw: &str) -> Result<u64> {
    match raw.parse::<u64>() {
        Ok(v) => Ok(v),
        Err(_) if raw.starts_with('-') && raw[1..].parse::<f64>().is_ok() => {
            Err(Error::NegativeCount {
                id: id.to_string(),
                column: column.to_string(),
                value: raw.to_string(),
            })
        }
        Err(_) => Err(Error::InvalidCount {
            id: id.to_string(),
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn read_features(path: &Path, catalog: &FeatureCatalog) -> Result<Vec<(String, FeatureVector)>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(csv_error(path))?.clone();
    if headers.is_empty() {
        return Err(Error::NoRecords {
            path: path.to_path_buf(),
        });
    }
    if &headers[0] != "id" {
        return Err(Error::ColumnOrder {
            position: 0,
            expected: "id".into(),
            found: headers[0].to_string(),
        });
    }
    let names = catalog.leaf_names();
    for (position, column) in headers.iter().enumerate().skip(1) {
        if catalog.position(column).is_none() {
            return Err(Error::UnknownFeatureColumn {
                column: column.to_string(),
                position,
            });
        }
        if names.get(position - 1).map(String::as_str) != Some(column) {
            return Err(Error::ColumnOrder {
                position,
                expected: names.get(position - 1).cloned().unwrap_or_default(),
                found: column.to_string(),
            });
        }
    }
    if headers.len() - 1 != names.len() {
        return Err(Error::ColumnOrder {
            position: headers.len(),
            expected: names[headers.len() - 1].clone(),
            found: String::new(),
        });
    }

    let init = catalog.init_position();
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error(path))?;
        let id = row[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                path: path.to_path_buf(),
            });
        }
        let counts = row
            .iter()
            .skip(1)
            .zip(&names)
            .map(|(raw, column)| parse_count(&id, column, raw))
            .collect::<Result<Vec<_>>>()?;
        if counts[init] != 1 {
            return Err(Error::InvalidCount {
                id,
                column: names[init].clone(),
                value: format!("{} (initialization feature must be 1)", counts[init]),
            });
        }
        rows.push((id, FeatureVector::new(catalog.variant(), counts)?));
    }
    if rows.is_empty() {
        return Err(Error::NoRecords {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

fn read_energies(path: &Path) -> Result<HashMap<String, f64>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(csv_error(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "energy_joules"] {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            "expected header `id,energy_joules`",
        ));
    }
    let mut energies = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_error(path))?;
        let id = row[0].to_string();
        let value: f64 = row[1].parse().map_err(|_| {
            Error::parse(
                path.display().to_string(),
                i + 2,
                format!("invalid energy `{}` for `{id}`", &row[1]),
            )
        })?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveEnergy { id, value });
        }
        if energies.insert(id.clone(), value).is_some() {
            return Err(Error::DuplicateId {
                id,
                path: path.to_path_buf(),
            });
        }
    }
    Ok(energies)
}

struct MetaRow {
    sequence: String,
    qp: Option<u8>,
    config: Option<CodingConfig>,
    format: Option<VideoFormat>,
}

fn read_metadata(path: &Path) -> Result<HashMap<String, MetaRow>> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(csv_error(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "sequence", "qp", "config", "format"] {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            "expected header `id,sequence,qp,config,format`",
        ));
    }
    let mut out = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_error(path))?;
        let id = row[0].to_string();
        let bad = |message: String| Error::InvalidMetadata {
            id: id.clone(),
            message,
        };
        let qp = match &row[2] {
            "" => None,
            raw => {
                let qp: u8 = raw
                    .parse()
                    .map_err(|_| bad(format!("invalid qp `{raw}`")))?;
                if !QPS.contains(&qp) {
                    return Err(bad(format!("qp {qp} not in {QPS:?}")));
                }
                Some(qp)
            }
        };
        let config = match &row[3] {
            "" => None,
            raw => Some(raw.parse().map_err(bad)?),
        };
        let format = match &row[4] {
            "" => None,
            raw => Some(raw.parse().map_err(bad)?),
        };
        let meta = MetaRow {
            sequence: row[1].to_string(),
            qp,
            config,
            format,
        };
        if out.insert(id.clone(), meta).is_some() {
            return Err(Error::DuplicateId {
                id,
                path: path.to_path_buf(),
            });
        }
    }
    Ok(out)
}

/// Loads and joins a features CSV, an energies CSV and a manifest.
///
/// Returns the dataset along with the declared-versus-actual record count;
/// a count mismatch is reported there rather than as an error.
pub fn load_dataset(
    features_path: &Path,
    energies_path: &Path,
    manifest_path: &Path,
) -> Result<(EnergyDataset, CountCheck)> {
    let manifest = Manifest::load(manifest_path)?;
    let catalog = FeatureCatalog::get(manifest.catalog);
    let features = read_features(features_path, catalog)?;
    let mut energies = read_energies(energies_path)?;
    let mut metadata = match &manifest.metadata {
        Some(rel) => {
            let base = manifest_path.parent().unwrap_or(Path::new("."));
            Some(read_metadata(&base.join(rel))?)
        }
        None => None,
    };

    let default_format = manifest.format.unwrap_or(VideoFormat::Sdr);
    let mut records = Vec::with_capacity(features.len());
    for (id, counts) in features {
        let energy = energies
            .remove(&id)
            .ok_or_else(|| Error::MissingEnergy { id: id.clone() })?;
        let meta = match metadata.as_mut() {
            Some(map) => {
                let row = map.remove(&id).ok_or_else(|| Error::InvalidMetadata {
                    id: id.clone(),
                    message: "no metadata row".into(),
                })?;
                BitstreamMeta {
                    id: id.clone(),
                    setup: manifest.name.clone(),
                    sequence: row.sequence,
                    qp: row.qp,
                    config: row.config,
                    bit_depth: manifest.bit_depth,
                    format: row.format.unwrap_or(default_format),
                }
            }
            None => BitstreamMeta {
                id: id.clone(),
                setup: manifest.name.clone(),
                sequence: id.clone(),
                qp: None,
                config: None,
                bit_depth: manifest.bit_depth,
                format: default_format,
            },
        };
        records.push(EnergyRecord {
            meta,
            counts,
            energy,
        });
    }
    if let Some(orphan) = energies.keys().min() {
        return Err(Error::OrphanEnergy { id: orphan.clone() });
    }
    let check = CountCheck {
        declared: manifest.records,
        actual: records.len(),
    };
    let mut dataset = EnergyDataset::new(manifest.name, manifest.catalog, records)?;
    dataset.source = manifest.source;
    Ok((dataset, check))
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn load_dataset_dir(dir: &Path) -> Result<(EnergyDataset, CountCheck)> {
    load_dataset(
        &dir.join(FEATURES_FILE),
        &dir.join(ENERGIES_FILE),
        &dir.join(MANIFEST_FILE),
    )
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Features CSV text for a dataset.
pub fn features_csv(dataset: &EnergyDataset) -> String {
    let catalog = FeatureCatalog::get(dataset.variant);
    let mut out = String::from("id");
    for name in catalog.leaf_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for rec in &dataset.records {
        out.push_str(&rec.meta.id);
        for c in rec.counts.counts() {
            out.push(',');
            out.push_str(&c.to_string());
        }
        out.push('\n');
    }
    out
}

/// Energies CSV text; values use the shortest exactly round-tripping decimal.
pub fn energies_csv(dataset: &EnergyDataset) -> String {
    let mut out = String::from("id,energy_joules\n");
    for rec in &dataset.records {
        out.push_str(&format!("{},{}\n", rec.meta.id, rec.energy));
    }
    out
}

fn metadata_csv(dataset: &EnergyDataset) -> String {
    let mut out = String::from("id,sequence,qp,config,format\n");
    for rec in &dataset.records {
        let m = &rec.meta;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.id,
            m.sequence,
            m.qp.map(|q| q.to_string()).unwrap_or_default(),
            m.config.map(|c| c.to_string()).unwrap_or_default(),
            m.format
        ));
    }
    out
}

/// Writes `dataset` as a directory that [`load_dataset_dir`] reads back
/// bit-exactly.
pub fn write_dataset(dataset: &EnergyDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bit_depth = dataset.bit_depth().ok_or_else(|| {
        Error::InvalidConfig(format!(
            "dataset `{}` mixes bit depths and cannot be written as one setup",
            dataset.name
        ))
    })?;
    let formats: BTreeMap<VideoFormat, usize> =
        dataset.records.iter().fold(BTreeMap::new(), |mut acc, r| {
            *acc.entry(r.meta.format).or_default() += 1;
            acc
        });
    let manifest = Manifest {
        name: dataset.name.clone(),
        records: dataset.len(),
        bit_depth,
        source: dataset.source.clone(),
        catalog: dataset.variant,
        format: formats.into_iter().max_by_key(|(_, n)| *n).map(|(f, _)| f),
        metadata: Some(METADATA_FILE.to_string()),
    };
    let manifest_text = toml::to_string(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize manifest: {e}")))?;
    write_file(&dir.join(MANIFEST_FILE), &manifest_text)?;
    write_file(&dir.join(FEATURES_FILE), &features_csv(dataset))?;
    write_file(&dir.join(ENERGIES_FILE), &energies_csv(dataset))?;
    write_file(&dir.join(METADATA_FILE), &metadata_csv(dataset))?;
    Ok(())
}

//! Declarative end-to-end runs: ingest, train, validate, then optional
//! zeta sweep and phi search, with every artifact hashed into a manifest.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! output = "out"
//! variants = ["fu", "fa"]
//! objective = "rel"
//!
//! [[dataset]]
//! name = "Conventional8"
//! dir = "data/conv8"            # or features/energies/manifest, or:
//!
//! [[dataset]]
//! name = "Conventional10"
//! synthetic = { bit_depth = 10, records = 320, noise = 0.01, seed = 1, zeta = 0.66 }
//!
//! [train]
//! dataset = "Conventional8"
//!
//! [validate]
//! datasets = ["Conventional10"]
//!
//! [sweep]
//! validate = ["Conventional10"]
//! grid = "0:1.5:0.01"
//! phi = "reference"
//!
//! [search]
//! validate = "Conventional10"
//! groups = "default"
//! ```
//!
//! Relative paths resolve against the working directory. Reruns with the
//! same configuration and inputs produce byte-identical output directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::bitdepth::{
    default_groups, parse_groups, reference_phi, search_phi, sweep_zeta, PhiSearchResult, ZetaGrid,
};
use crate::catalog::{CatalogVariant, FeatureCatalog};
use crate::dataset::{load_dataset, write_dataset, BitDepth, EnergyDataset, Manifest, VideoFormat};
use crate::energy::{mean_estimation_error, phi_from_bits, phi_to_bits, EnergyModel};
use crate::error::{Error, Result};
use crate::report::{
    format_percent, render_curve, render_curve_raw, render_error_table, render_zeta_table,
    EvaluationReport, ReportRow, ZetaTable,
};
use crate::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};
use crate::trainer::{check_disjoint, train, Objective, TrainingConfig};

pub const TOOL_VERSION: &str = concat!("decenergy ", env!("CARGO_PKG_VERSION"));
pub const FAILED_MARKER: &str = "FAILED";
pub const MANIFEST: &str = "manifest.txt";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output: String,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_objective")]
    pub objective: String,
    pub convergence_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<DatasetEntry>,
    pub train: TrainSection,
    pub validate: Option<ValidateSection>,
    pub sweep: Option<SweepSection>,
    pub search: Option<SearchSection>,
}

fn default_variants() -> Vec<String> {
    vec!["fu".into()]
}

fn default_objective() -> String {
    "rel".into()
}

fn default_grid() -> String {
    "0:1.5:0.01".into()
}

fn default_phi() -> String {
    "reference".into()
}

fn default_groups_source() -> String {
    "default".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub dir: Option<String>,
    pub features: Option<String>,
    pub energies: Option<String>,
    pub manifest: Option<String>,
    pub synthetic: Option<SyntheticEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEntry {
    pub bit_depth: u8,
    pub records: usize,
    #[serde(default)]
    pub noise: f64,
    /// Seed of the count and noise streams.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the planted coefficients; equal values share coefficients.
    #[serde(default)]
    pub coefficient_seed: u64,
    /// Planted scaling with the reference phi flags.
    pub zeta: Option<f64>,
    pub format: Option<String>,
    pub sequence_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// The curve is written for the first set; all sets appear in the
    /// fixed-zeta table.
    pub validate: Vec<String>,
    #[serde(default = "default_grid")]
    pub grid: String,
    /// `reference` or a file holding one line of 0/1 flags.
    #[serde(default = "default_phi")]
    pub phi: String,
    /// Zeta values of the fixed-zeta table; defaults to 0 and the argmin.
    pub zetas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub validate: String,
    /// `default` (one group per taxonomy row) or a grouping file.
    #[serde(default = "default_groups_source")]
    pub groups: String,
    #[serde(default = "default_grid")]
    pub grid: String,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            Error::parse("pipeline config", line, e.message().to_string())
        })
    }

    pub fn variants(&self) -> Result<Vec<CatalogVariant>> {
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("`variants` is empty".into()));
        }
        let mut seen = BTreeSet::new();
        self.variants
            .iter()
            .map(|v| {
                let v: CatalogVariant = v.parse()?;
                if !seen.insert(v) {
                    return Err(Error::InvalidConfig(format!("variant `{v}` listed twice")));
                }
                Ok(v)
            })
            .collect()
    }

    pub fn training_config(&self) -> Result<TrainingConfig> {
        let mut config = TrainingConfig {
            objective: self.objective.parse::<Objective>()?,
            max_iterations: self.max_iterations,
            seed: self.seed,
            ..TrainingConfig::default()
        };
        if let Some(tol) = self.convergence_tol {
            config.convergence_tol = tol;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub output: PathBuf,
    /// Artifact paths relative to `output`, sorted.
    pub artifacts: Vec<String>,
    pub mean_errors: Vec<ReportRow>,
    pub sweep_best: Option<(f64, f64)>,
    pub search: Option<PhiSearchResult>,
}

struct Run {
    out: PathBuf,
    artifacts: BTreeMap<String, String>,
    provenance: String,
}

impl Run {
    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.out.join(rel);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.artifacts
            .insert(rel.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    /// Writes a text artifact whose first line is the provenance comment.
    fn write_with_header(&mut self, rel: &str, body: &str) -> Result<()> {
        let text = format!("{}\n{}", self.provenance, body);
        self.write(rel, &text)
    }
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Runs the pipeline described by `config_path`; relative paths in the
/// configuration resolve against `workdir`.
///
/// On a stage failure the output directory keeps what was written so far
/// plus a `FAILED` marker naming the stage.
pub fn run_pipeline(config_path: &Path, workdir: &Path) -> Result<PipelineSummary> {
    let config_file = workdir.join(config_path);
    let config_text = stage("config", read_text(&config_file))?;
    let config = stage("config", PipelineConfig::from_toml(&config_text))?;
    let out = workdir.join(&config.output);
    stage(
        "config",
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e)),
    )?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        stage(
            "config",
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e)),
        )?;
    }
    let mut run = Run {
        out: out.clone(),
        artifacts: BTreeMap::new(),
        provenance: String::new(),
    };
    let config_hash = sha256_hex(config_text.as_bytes());
    match execute(&config, config_path, &config_hash, workdir, &mut run) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            let (name, message) = match &e {
                Error::Stage { stage, source } => (*stage, source.to_string()),
                other => ("pipeline", other.to_string()),
            };
            let text = format!("stage={name}\nerror={message}\n");
            let _ = fs::write(&marker, text);
            Err(e)
        }
    }
}

fn execute(
    config: &PipelineConfig,
    config_path: &Path,
    config_hash: &str,
    workdir: &Path,
    run: &mut Run,
) -> Result<PipelineSummary> {
    let variants = stage("config", config.variants())?;
    let training = stage("config", config.training_config())?;
    let primary = variants[0];

    // Ingest.
    let mut datasets: BTreeMap<String, EnergyDataset> = BTreeMap::new();
    let mut inputs: Vec<String> = Vec::new();
    for entry in &config.datasets {
        let ds = stage("ingest", ingest(entry, workdir, run, &mut inputs))?;
        if datasets.insert(entry.name.clone(), ds).is_some() {
            return stage(
                "ingest",
                Err(Error::InvalidConfig(format!(
                    "dataset `{}` declared twice",
                    entry.name
                ))),
            );
        }
    }
    let inputs_hash = sha256_hex(inputs.join("\n").as_bytes());
    run.provenance =
        format!("# {TOOL_VERSION} config_sha256={config_hash} inputs_sha256={inputs_hash}");
    let lookup = |name: &str| -> Result<&EnergyDataset> {
        datasets
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("no dataset named `{name}`")))
    };
    let as_variant = |ds: &EnergyDataset, v: CatalogVariant| -> Result<EnergyDataset> {
        if ds.variant() == v {
            Ok(ds.clone())
        } else {
            ds.project(FeatureCatalog::get(v))
        }
    };

    // Train.
    let train_set = stage("train", lookup(&config.train.dataset))?;
    let mut models: Vec<EnergyModel> = Vec::new();
    for &v in &variants {
        let data = stage("train", as_variant(train_set, v))?;
        let outcome = stage("train", train(&data, &training))?;
        let mut model = outcome.model;
        model.attributes.insert("tool".into(), TOOL_VERSION.into());
        model
            .attributes
            .insert("config_sha256".into(), config_hash.into());
        model
            .attributes
            .insert("inputs_sha256".into(), inputs_hash.clone());
        let file = if v == primary {
            "model.txt".to_string()
        } else {
            format!("model_{}.txt", v.as_str())
        };
        stage("train", run.write(&file, &model.to_text()))?;
        if !outcome.converged {
            return stage(
                "train",
                Err(Error::NotConverged {
                    iterations: outcome.iterations,
                    kkt_residual: outcome.kkt_residual,
                }),
            );
        }
        models.push(model);
    }

    // Validate.
    let mut report = EvaluationReport::new(&train_set.name, train_set.bit_depth());
    report.provenance.insert("tool".into(), TOOL_VERSION.into());
    report
        .provenance
        .insert("config".into(), config_path.display().to_string());
    report
        .provenance
        .insert("config_sha256".into(), config_hash.into());
    report
        .provenance
        .insert("inputs_sha256".into(), inputs_hash.clone());
    report
        .provenance
        .insert("objective".into(), training.objective.to_string());
    report
        .provenance
        .insert("seed".into(), training.seed.to_string());
    let validation_names = config
        .validate
        .as_ref()
        .map(|v| v.datasets.clone())
        .unwrap_or_default();
    for name in &validation_names {
        let ds = stage("validate", lookup(name))?;
        stage("validate", check_disjoint(train_set, ds))?;
        for (model, &v) in models.iter().zip(&variants) {
            let data = stage("validate", as_variant(ds, v))?;
            let summary = stage("validate", mean_estimation_error(model, &data, false))?;
            report.rows.push(ReportRow {
                validation_setup: ds.name.clone(),
                validation_bit_depth: ds.bit_depth(),
                variant: v,
                mean_error: summary.mean,
                residuals: summary.residuals,
            });
        }
    }

    // Sweep.
    let mut zeta_table = None;
    let mut sweep_best = None;
    if let Some(sweep) = &config.sweep {
        let model = &models[0];
        let catalog = FeatureCatalog::get(primary);
        let phi = stage("sweep", load_phi(&sweep.phi, catalog, workdir))?;
        let grid = stage("sweep", ZetaGrid::parse(&sweep.grid))?;
        if sweep.validate.is_empty() {
            return stage(
                "sweep",
                Err(Error::InvalidConfig("`sweep.validate` is empty".into())),
            );
        }
        let mut rows = Vec::new();
        let mut zetas = sweep.zetas.clone();
        for (i, name) in sweep.validate.iter().enumerate() {
            let ds = stage("sweep", lookup(name))?;
            stage("sweep", check_disjoint(train_set, ds))?;
            let data = stage("sweep", as_variant(ds, primary))?;
            if i == 0 {
                let result = stage("sweep", sweep_zeta(model, &phi, &data, &grid))?;
                stage(
                    "sweep",
                    run.write_with_header("curve.csv", &render_curve(&result)),
                )?;
                stage(
                    "sweep",
                    run.write_with_header("curve_raw.csv", &render_curve_raw(&result)),
                )?;
                let best = result.best();
                sweep_best = Some(best);
                zetas.get_or_insert_with(|| {
                    if best.0 == 0.0 {
                        vec![0.0]
                    } else {
                        vec![0.0, best.0]
                    }
                });
            }
            let zetas = zetas.as_ref().expect("set on first validation set");
            let errors = zetas
                .iter()
                .map(|&z| {
                    let single = ZetaGrid::single(z)?;
                    Ok(sweep_zeta(model, &phi, &data, &single)?.errors[0])
                })
                .collect::<Result<Vec<f64>>>();
            rows.push((ds.name.clone(), stage("sweep", errors)?));
        }
        zeta_table = Some(ZetaTable {
            training_setup: train_set.name.clone(),
            zetas: zetas.unwrap_or_default(),
            rows,
        });
    }

    // Search.
    let mut search = None;
    if let Some(section) = &config.search {
        let model = &models[0];
        let catalog = FeatureCatalog::get(primary);
        let groups = stage(
            "search",
            if section.groups == "default" {
                Ok(default_groups(catalog))
            } else {
                read_text(&workdir.join(&section.groups)).and_then(|t| parse_groups(&t, catalog))
            },
        )?;
        let grid = stage("search", ZetaGrid::parse(&section.grid))?;
        let ds = stage("search", lookup(&section.validate))?;
        let train_data = stage("search", as_variant(train_set, primary))?;
        let data = stage("search", as_variant(ds, primary))?;
        let result = stage(
            "search",
            search_phi(model, &groups, &train_data, &data, &grid),
        )?;
        let mut text = String::new();
        let _ = writeln!(text, "validate={}", ds.name);
        let _ = writeln!(text, "groups={}", groups.len());
        let _ = writeln!(text, "subsets={}", result.subsets_evaluated);
        let names: Vec<&str> = result
            .selected_groups
            .iter()
            .map(|&g| groups[g].name.as_str())
            .collect();
        let _ = writeln!(text, "selected={}", names.join(" "));
        let _ = writeln!(text, "zeta={:.*}", grid.display_decimals(), result.zeta);
        let _ = writeln!(text, "mean_error={}", result.mean_error);
        let _ = writeln!(
            text,
            "mean_error_percent={}",
            format_percent(result.mean_error)
        );
        let _ = writeln!(text, "phi={}", phi_to_bits(&result.phi));
        stage("search", run.write_with_header("search.txt", &text))?;
        search = Some(result);
    }

    // Reports.
    let mut text = render_error_table(std::slice::from_ref(&report));
    if let Some(table) = &zeta_table {
        text.push('\n');
        text.push_str(&render_zeta_table(table));
    }
    stage("report", run.write_with_header("report.txt", &text))?;
    stage(
        "report",
        run.write_with_header("report.csv", &report.to_csv()),
    )?;
    stage(
        "report",
        run.write_with_header("residuals.csv", &report.residuals_csv()),
    )?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "tool={TOOL_VERSION}");
    let _ = writeln!(
        manifest,
        "config={} sha256={config_hash}",
        config_path.display()
    );
    for line in &inputs {
        let _ = writeln!(manifest, "{line}");
    }
    for (file, hash) in &run.artifacts {
        let _ = writeln!(manifest, "artifact {file} sha256={hash}");
    }
    stage("report", run.write(MANIFEST, &manifest))?;

    Ok(PipelineSummary {
        output: run.out.clone(),
        artifacts: run.artifacts.keys().cloned().collect(),
        mean_errors: report.rows,
        sweep_best,
        search,
    })
}

fn ingest(
    entry: &DatasetEntry,
    workdir: &Path,
    run: &mut Run,
    inputs: &mut Vec<String>,
) -> Result<EnergyDataset> {
    let sources = [
        entry.dir.is_some(),
        entry.features.is_some() || entry.energies.is_some() || entry.manifest.is_some(),
        entry.synthetic.is_some(),
    ];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "dataset `{}` needs exactly one of `dir`, `features`/`energies`/`manifest`, `synthetic`",
            entry.name
        )));
    }
    if let Some(spec) = &entry.synthetic {
        return synthesize(entry, spec, run, inputs);
    }
    let (features, energies, manifest) = match &entry.dir {
        Some(dir) => (
            format!("{dir}/{}", crate::dataset::FEATURES_FILE),
            format!("{dir}/{}", crate::dataset::ENERGIES_FILE),
            format!("{dir}/{}", crate::dataset::MANIFEST_FILE),
        ),
        None => match (&entry.features, &entry.energies, &entry.manifest) {
            (Some(f), Some(e), Some(m)) => (f.clone(), e.clone(), m.clone()),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "dataset `{}` needs `features`, `energies` and `manifest`",
                    entry.name
                )))
            }
        },
    };
    let mut files = vec![features.clone(), energies.clone(), manifest.clone()];
    let manifest_meta = Manifest::load(&workdir.join(&manifest))?;
    if let Some(meta) = &manifest_meta.metadata {
        let base = Path::new(&manifest).parent().unwrap_or(Path::new(""));
        files.push(base.join(meta).display().to_string());
    }
    for f in &files {
        inputs.push(format!(
            "input {} {f} sha256={}",
            entry.name,
            hash_file(&workdir.join(f))?
        ));
    }
    let (mut ds, check) = load_dataset(
        &workdir.join(&features),
        &workdir.join(&energies),
        &workdir.join(&manifest),
    )?;
    check.into_result()?;
    ds.name = entry.name.clone();
    Ok(ds)
}

fn synthesize(
    entry: &DatasetEntry,
    spec: &SyntheticEntry,
    run: &mut Run,
    inputs: &mut Vec<String>,
) -> Result<EnergyDataset> {
    let catalog = FeatureCatalog::get(CatalogVariant::Fu);
    let bit_depth = BitDepth::try_from(spec.bit_depth)
        .map_err(|e| Error::InvalidConfig(format!("dataset `{}`: {e}", entry.name)))?;
    let ranges = default_count_ranges();
    let coefficients = default_true_coefficients(catalog, &ranges, spec.coefficient_seed);
    let mut corpus = CorpusSpec::new(
        &entry.name,
        bit_depth,
        spec.records,
        coefficients,
        spec.seed,
    );
    corpus.count_ranges = ranges;
    corpus.noise_sigma = spec.noise;
    corpus.sequence_prefix = spec.sequence_prefix.clone();
    if let Some(format) = &spec.format {
        corpus.format = format
            .parse::<VideoFormat>()
            .map_err(|e| Error::InvalidConfig(format!("dataset `{}`: {e}", entry.name)))?;
    }
    if let Some(zeta) = spec.zeta {
        corpus.extension = Some((zeta, reference_phi(catalog)?));
    }
    let (ds, truth) = generate_synthetic_corpus(catalog, &corpus)?;
    let rel = format!("data/{}", entry.name);
    let dir = run.out.join(&rel);
    write_dataset(&ds, &dir)?;
    for file in [
        crate::dataset::MANIFEST_FILE,
        crate::dataset::FEATURES_FILE,
        crate::dataset::ENERGIES_FILE,
        crate::dataset::METADATA_FILE,
    ] {
        let path = format!("{rel}/{file}");
        run.artifacts
            .insert(path.clone(), hash_file(&run.out.join(&path))?);
    }
    run.write(&format!("{rel}/ground_truth.txt"), &truth.to_text())?;
    inputs.push(format!(
        "input {} synthetic bit_depth={} records={} noise={} seed={} coefficient_seed={} zeta={}",
        entry.name,
        spec.bit_depth,
        spec.records,
        spec.noise,
        spec.seed,
        spec.coefficient_seed,
        spec.zeta
            .map(|z| z.to_string())
            .unwrap_or_else(|| "none".into())
    ));
    Ok(ds)
}

/// `reference` or a file holding one line of 0/1 flags; `#` comments allowed.
pub fn load_phi(source: &str, catalog: &FeatureCatalog, workdir: &Path) -> Result<Vec<bool>> {
    if source == "reference" {
        return reference_phi(catalog);
    }
    let path = workdir.join(source);
    let text = read_text(&path)?;
    let context = path.display().to_string();
    let (line_no, bits) = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::parse(&context, 0, "no phi flags found"))?;
    let bits = bits.strip_prefix("phi=").unwrap_or(bits);
    let phi = phi_from_bits(bits).map_err(|m| Error::parse(&context, line_no, m))?;
    if phi.len() != catalog.len() {
        return Err(Error::Alignment {
            expected: catalog.len(),
            found: phi.len(),
        });
    }
    Ok(phi)
}

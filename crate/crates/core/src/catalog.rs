//! Feature taxonomy of the FA and FU decoding energy models.
//!
//! Features are declared as compact rows (one or more labels sharing a depth
//! range, category and bit-depth flag) and expanded into leaf features. A
//! leaf is named `<label>` when it has no depth and `<label>@<depth>`
//! otherwise; these names are the canonical CSV column headers.
//!
//! Depth indexes square block sizes: depth 0 is 64x64, depth 4 is 4x4.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CatalogVariant {
    /// Reference feature-accurate model.
    Fa,
    /// Feature-universal model with the additional inter and slice features.
    Fu,
}

impl CatalogVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CatalogVariant::Fa => "fa",
            CatalogVariant::Fu => "fu",
        }
    }
}

impl fmt::Display for CatalogVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CatalogVariant::Fa => "FA",
            CatalogVariant::Fu => "FU",
        })
    }
}

impl FromStr for CatalogVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fa" => Ok(CatalogVariant::Fa),
            "fu" => Ok(CatalogVariant::Fu),
            other => Err(Error::InvalidConfig(format!(
                "unknown model variant `{other}` (expected fa or fu)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    General,
    Intra,
    Inter,
    Residual,
    InLoop,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::General,
        Category::Intra,
        Category::Inter,
        Category::Residual,
        Category::InLoop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::General => "General",
            Category::Intra => "Intra",
            Category::Inter => "Inter",
            Category::Residual => "Residual",
            Category::InLoop => "In-loop",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One leaf feature of a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDefinition {
    pub label: &'static str,
    pub category: Category,
    pub depth: Option<u8>,
    pub phi: bool,
    pub in_fa: bool,
    pub in_fu: bool,
    /// Index of the taxonomy row this leaf was expanded from.
    pub row: usize,
    pub counting_rule: &'static str,
}

impl FeatureDefinition {
    pub fn name(&self) -> String {
        match self.depth {
            Some(d) => format!("{}@{}", self.label, d),
            None => self.label.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaMembership {
    Yes,
    No,
    /// Present in FA only as the merged `PBslice` leaf.
    Merged,
}

struct Row {
    labels: &'static [&'static str],
    category: Category,
    depths: Option<(u8, u8)>,
    fa: FaMembership,
    phi: bool,
    rule: &'static str,
}

/// Label of the merged B/P slice feature used by the FA model.
pub const MERGED_SLICE_LABEL: &str = "PBslice";
/// Label of the initialization energy feature, counted once per bitstream.
pub const INIT_LABEL: &str = "E_O";

const MERGED_SLICE_RULE: &str = "number of B- and P-slices (sum of Bslice and Pslice)";

use Category::*;
use FaMembership::{Merged, No, Yes};

const ROWS: &[Row] = &[
    Row {
        labels: &[INIT_LABEL],
        category: General,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "decoder initialization; exactly 1 per decoded bitstream",
    },
    Row {
        labels: &["Islice"],
        category: General,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "number of intra-coded slices",
    },
    Row {
        labels: &["Bslice", "Pslice"],
        category: General,
        depths: None,
        fa: Merged,
        phi: true,
        rule: "number of B-slices (Bslice) or P-slices (Pslice); FA counts their sum as PBslice",
    },
    Row {
        labels: &["intraCU"],
        category: Intra,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "number of intra-predicted coding units",
    },
    Row {
        labels: &["pla", "dc", "hvd", "ang"],
        category: Intra,
        depths: Some((1, 4)),
        fa: Yes,
        phi: true,
        rule: "intra prediction blocks per direction class (planar, DC, horizontal/vertical/diagonal, angular) at the block depth",
    },
    Row {
        labels: &["noMPM"],
        category: Intra,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "intra modes not signalled through the most-probable-mode list",
    },
    Row {
        labels: &["skip", "merge", "mergeSMP"],
        category: Inter,
        depths: Some((0, 3)),
        fa: Yes,
        phi: true,
        rule: "skipped CUs, merged PUs and merged symmetric-partition PUs at the CU depth",
    },
    Row {
        labels: &["mergeAMP"],
        category: Inter,
        depths: Some((0, 2)),
        fa: Yes,
        phi: true,
        rule: "merged asymmetric-partition PUs at the CU depth",
    },
    Row {
        labels: &["inter", "interSMP"],
        category: Inter,
        depths: Some((0, 3)),
        fa: Yes,
        phi: true,
        rule: "inter-predicted PUs with explicit motion (square and symmetric partitions) at the CU depth",
    },
    Row {
        labels: &["interAMP"],
        category: Inter,
        depths: Some((0, 2)),
        fa: Yes,
        phi: true,
        rule: "inter-predicted asymmetric-partition PUs at the CU depth",
    },
    Row {
        labels: &["fracpelHor", "fracpelVer"],
        category: Inter,
        depths: Some((0, 3)),
        fa: Yes,
        phi: true,
        rule: "luma pels of the PU when the horizontal (Hor) or vertical (Ver) MV component is fractional; both when both are; FA additionally adds 6*w border rows to fracpelHor, w = PU width",
    },
    Row {
        labels: &["fracpelBoth", "copyPel"],
        category: Inter,
        depths: Some((0, 3)),
        fa: No,
        phi: true,
        rule: "fracpelBoth: 6*w extra filtered border pels when both MV components are fractional, w = PU width; copyPel: luma pels of the PU when both MV components are integer",
    },
    Row {
        labels: &["chrHalfpel"],
        category: Inter,
        depths: Some((0, 3)),
        fa: Yes,
        phi: true,
        rule: "chroma pels interpolated at half-pel positions",
    },
    Row {
        labels: &["bi"],
        category: Inter,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "bi-predicted 4x4 sub-blocks",
    },
    Row {
        labels: &["uni"],
        category: Inter,
        depths: None,
        fa: No,
        phi: true,
        rule: "uni-predicted 4x4 sub-blocks",
    },
    Row {
        labels: &["MVD"],
        category: Inter,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "coded motion vector differences",
    },
    Row {
        labels: &["coeff", "coeffG1", "val"],
        category: Residual,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "nonzero coefficients, coefficients greater than one, and accumulated coefficient values",
    },
    Row {
        labels: &["CSBF"],
        category: Residual,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "coded sub-block flags",
    },
    Row {
        labels: &["TrIntraY", "TrIntraC", "TrInterY", "TrInterC"],
        category: Residual,
        depths: Some((1, 4)),
        fa: Yes,
        phi: true,
        rule: "inverse transforms of intra/inter luma/chroma blocks at the transform depth",
    },
    Row {
        labels: &["TSF"],
        category: Residual,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "transform-skip flags",
    },
    Row {
        labels: &["Bs0", "Bs1", "Bs2"],
        category: InLoop,
        depths: None,
        fa: Yes,
        phi: true,
        rule: "deblocking edges per boundary strength 0, 1 and 2",
    },
    Row {
        labels: &["SAO_Y_BO", "SAO_Y_EO"],
        category: InLoop,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "luma SAO blocks in band-offset (BO) or edge-offset (EO) mode",
    },
    Row {
        labels: &["SAO_C_BO", "SAO_C_EO"],
        category: InLoop,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "chroma SAO blocks in band-offset (BO) or edge-offset (EO) mode",
    },
    Row {
        labels: &["SAO_allComps"],
        category: InLoop,
        depths: None,
        fa: Yes,
        phi: false,
        rule: "SAO blocks applied to all colour components",
    },
];

/// Number of compact taxonomy rows.
pub fn row_count() -> usize {
    ROWS.len()
}

/// Display name of a taxonomy row, e.g. `pla,dc,hvd,ang`.
pub fn row_name(row: usize) -> String {
    ROWS[row].labels.join(",")
}

/// Expanded, deterministically ordered feature list for one model variant.
#[derive(Debug, Clone)]
pub struct FeatureCatalog {
    variant: CatalogVariant,
    leaves: Vec<FeatureDefinition>,
    index: HashMap<String, usize>,
}

impl PartialEq for FeatureCatalog {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant && self.leaves == other.leaves
    }
}

impl FeatureCatalog {
    /// Expands the taxonomy rows for `variant`: row order, then label order
    /// within a row, then ascending depth.
    pub fn build(variant: CatalogVariant) -> Self {
        let mut leaves = Vec::new();
        for (row_idx, row) in ROWS.iter().enumerate() {
            if variant == CatalogVariant::Fa {
                match row.fa {
                    No => continue,
                    Merged => {
                        leaves.push(FeatureDefinition {
                            label: MERGED_SLICE_LABEL,
                            category: row.category,
                            depth: None,
                            phi: row.phi,
                            in_fa: true,
                            in_fu: false,
                            row: row_idx,
                            counting_rule: MERGED_SLICE_RULE,
                        });
                        continue;
                    }
                    Yes => {}
                }
            }
            for &label in row.labels {
                let depths: Vec<Option<u8>> = match row.depths {
                    Some((lo, hi)) => (lo..=hi).map(Some).collect(),
                    None => vec![None],
                };
                for depth in depths {
                    leaves.push(FeatureDefinition {
                        label,
                        category: row.category,
                        depth,
                        phi: row.phi,
                        in_fa: row.fa == Yes,
                        in_fu: true,
                        row: row_idx,
                        counting_rule: row.rule,
                    });
                }
            }
        }
        let index = leaves
            .iter()
            .enumerate()
            .map(|(i, leaf)| (leaf.name(), i))
            .collect();
        FeatureCatalog {
            variant,
            leaves,
            index,
        }
    }

    /// Shared immutable instance.
    pub fn get(variant: CatalogVariant) -> &'static FeatureCatalog {
        static FA: OnceLock<FeatureCatalog> = OnceLock::new();
        static FU: OnceLock<FeatureCatalog> = OnceLock::new();
        match variant {
            CatalogVariant::Fa => FA.get_or_init(|| FeatureCatalog::build(CatalogVariant::Fa)),
            CatalogVariant::Fu => FU.get_or_init(|| FeatureCatalog::build(CatalogVariant::Fu)),
        }
    }

    pub fn variant(&self) -> CatalogVariant {
        self.variant
    }

    pub fn leaves(&self) -> &[FeatureDefinition] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Leaf names in canonical order (the CSV header after `id`).
    pub fn leaf_names(&self) -> Vec<String> {
        self.leaves.iter().map(FeatureDefinition::name).collect()
    }

    /// Positions of every leaf with the given base label, ascending depth.
    pub fn positions_of_label(&self, label: &str) -> Vec<usize> {
        self.leaves
            .iter()
            .enumerate()
            .filter(|(_, leaf)| leaf.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Position of the initialization-energy leaf.
    pub fn init_position(&self) -> usize {
        self.index[INIT_LABEL]
    }

    /// Bit-depth sensitivity flag of every leaf.
    pub fn phi_vector(&self) -> Vec<bool> {
        self.leaves.iter().map(|leaf| leaf.phi).collect()
    }

    pub fn category_count(&self, category: Category) -> usize {
        self.leaves
            .iter()
            .filter(|l| l.category == category)
            .count()
    }

    /// Fixed-width documentation table: label, category, depth, phi, FA, FU.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:<9} {:>5} {:>3} {:>3} {:>3}\n",
            "label", "category", "depth", "phi", "FA", "FU"
        ));
        for leaf in &self.leaves {
            let depth = leaf.depth.map_or("-".to_string(), |d| d.to_string());
            out.push_str(&format!(
                "{:<16} {:<9} {:>5} {:>3} {:>3} {:>3}\n",
                leaf.name(),
                leaf.category.as_str(),
                depth,
                u8::from(leaf.phi),
                if leaf.in_fa { "x" } else { "-" },
                if leaf.in_fu { "x" } else { "-" },
            ));
        }
        out
    }
}

/// Projects FU-aligned counts onto `target`.
///
/// For an FA target, `PBslice = Bslice + Pslice`, FU-only leaves are
/// dropped and shared leaves are copied. The FA fracpel leaves differ from
/// FU at the counting stage (FA folds the border rows into `fracpelHor`),
/// which cannot be undone from FU counts, so the fracpel entries of the
/// result are approximate.
pub fn project_counts(counts: &FeatureVector, target: &FeatureCatalog) -> Result<FeatureVector> {
    let source = FeatureCatalog::get(counts.variant());
    if counts.len() != source.len() {
        return Err(Error::Alignment {
            expected: source.len(),
            found: counts.len(),
        });
    }
    match (counts.variant(), target.variant()) {
        (a, b) if a == b => return Ok(counts.clone()),
        (CatalogVariant::Fa, CatalogVariant::Fu) => {
            return Err(Error::VariantMismatch {
                expected: CatalogVariant::Fu,
                found: CatalogVariant::Fa,
            })
        }
        _ => {}
    }
    let values = counts.counts();
    let projected = target
        .leaves()
        .iter()
        .map(|leaf| {
            if leaf.label == MERGED_SLICE_LABEL {
                let b = source.position("Bslice").expect("FU catalog has Bslice");
                let p = source.position("Pslice").expect("FU catalog has Pslice");
                values[b] + values[p]
            } else {
                let pos = source
                    .position(&leaf.name())
                    .expect("every FA leaf except PBslice exists in FU");
                values[pos]
            }
        })
        .collect();
    FeatureVector::new(target.variant(), projected)
}

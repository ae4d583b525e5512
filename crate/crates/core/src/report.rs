//! Evaluation reports and their text renderings.
//!
//! Percentages are printed with two decimals; machine-readable CSV output
//! keeps the raw fractions next to them. All renderers are pure functions
//! of their input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::bitdepth::ZetaSweepResult;
use crate::catalog::CatalogVariant;
use crate::dataset::BitDepth;
use crate::energy::Residual;
use crate::error::{Error, Result};

/// `0.0648` -> `"6.48%"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub validation_setup: String,
    pub validation_bit_depth: Option<BitDepth>,
    pub variant: CatalogVariant,
    /// Mean estimation error as a fraction.
    pub mean_error: f64,
    pub residuals: Vec<Residual>,
}

impl ReportRow {
    /// Row without residuals, e.g. for rendering reference numbers.
    pub fn summary(
        setup: &str,
        bit_depth: Option<BitDepth>,
        variant: CatalogVariant,
        mean_error: f64,
    ) -> Self {
        ReportRow {
            validation_setup: setup.to_string(),
            validation_bit_depth: bit_depth,
            variant,
            mean_error,
            residuals: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub training_setup: String,
    pub training_bit_depth: Option<BitDepth>,
    pub rows: Vec<ReportRow>,
    /// Configuration, seeds and input hashes needed to rerun.
    pub provenance: BTreeMap<String, String>,
}

impl EvaluationReport {
    pub fn new(training_setup: &str, training_bit_depth: Option<BitDepth>) -> Self {
        EvaluationReport {
            training_setup: training_setup.to_string(),
            training_bit_depth,
            rows: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }

    /// Whether a row validates on a different bit depth than training.
    pub fn is_cross_depth(&self, row: &ReportRow) -> bool {
        matches!(
            (self.training_bit_depth, row.validation_bit_depth),
            (Some(a), Some(b)) if a != b
        )
    }

    /// Appends the rows of another report on the same training setup.
    pub fn merge(&mut self, other: EvaluationReport) -> Result<()> {
        if other.training_setup != self.training_setup {
            return Err(Error::InvalidConfig(format!(
                "cannot merge reports trained on `{}` and `{}`",
                self.training_setup, other.training_setup
            )));
        }
        self.rows.extend(other.rows);
        self.provenance.extend(other.provenance);
        Ok(())
    }

    /// `training_setup,validation_setup,variant,cross_bit_depth,mean_error,mean_error_percent`
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("training_setup,validation_setup,variant,cross_bit_depth,mean_error,mean_error_percent\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.2}",
                self.training_setup,
                row.validation_setup,
                row.variant,
                self.is_cross_depth(row),
                row.mean_error,
                row.mean_error * 100.0
            );
        }
        out
    }

    /// `setup,variant,id,estimated,measured,relative_error` for every record.
    pub fn residuals_csv(&self) -> String {
        let mut out = String::from("setup,variant,id,estimated,measured,relative_error\n");
        for row in &self.rows {
            for r in &row.residuals {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    row.validation_setup,
                    row.variant,
                    r.id,
                    r.estimated,
                    r.measured,
                    r.relative_error
                );
            }
        }
        out
    }
}

const CELL: usize = 8;

/// Fixed-width table of mean estimation errors: one row per validation
/// setup, one column pair (per model variant) per training setup.
///
/// Cells for the training setup itself, or missing combinations, show `-`.
/// The trailing `cross-depth` column names the training setups whose bit
/// depth differs from the row's. A rule separates rows of different bit
/// depth.
pub fn render_error_table(reports: &[EvaluationReport]) -> String {
    let mut variants: Vec<CatalogVariant> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.variant))
        .collect();
    variants.sort();
    variants.dedup();
    if variants.is_empty() {
        variants = vec![CatalogVariant::Fa, CatalogVariant::Fu];
    }

    // Rows in order of first appearance, training setups included, then
    // grouped by bit depth.
    let mut setups: Vec<(String, Option<BitDepth>)> = Vec::new();
    for report in reports {
        let own = (!report.rows.is_empty())
            .then(|| (report.training_setup.clone(), report.training_bit_depth));
        let rows = report
            .rows
            .iter()
            .map(|row| (row.validation_setup.clone(), row.validation_bit_depth));
        for (setup, depth) in own.into_iter().chain(rows) {
            if !setups.iter().any(|(s, _)| *s == setup) {
                setups.push((setup, depth));
            }
        }
    }
    setups.sort_by_key(|(_, depth)| depth.map_or(u8::MAX, |d| d.bits()));

    let label = "Validation setup";
    let first = setups
        .iter()
        .map(|(s, _)| s.len())
        .chain([label.len(), "Training setup".len()])
        .max()
        .unwrap_or(label.len());
    let group_width = variants.len() * (CELL + 3) - 3;

    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "Training setup");
    for report in reports {
        let _ = write!(out, " | {:<group_width$}", report.training_setup);
    }
    out.push_str(" |\n");
    let _ = write!(out, "{label:<first$}");
    for _ in reports {
        for v in &variants {
            let _ = write!(out, " | {:>CELL$}", v.to_string());
        }
    }
    out.push_str(" | cross-depth\n");
    let rule = {
        let mut r = "-".repeat(first);
        for _ in 0..reports.len() * variants.len() {
            r.push_str("-+-");
            r.push_str(&"-".repeat(CELL));
        }
        r.push_str("-+-");
        r.push_str(&"-".repeat("cross-depth".len()));
        r.push('\n');
        r
    };
    out.push_str(&rule);

    let mut previous_depth = None;
    for (i, (setup, depth)) in setups.iter().enumerate() {
        if i > 0 && *depth != previous_depth {
            out.push_str(&rule);
        }
        previous_depth = *depth;
        let _ = write!(out, "{setup:<first$}");
        let mut cross = Vec::new();
        for report in reports {
            for v in &variants {
                let cell = report
                    .rows
                    .iter()
                    .find(|r| r.validation_setup == *setup && r.variant == *v)
                    .map(|r| format_percent(r.mean_error))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " | {cell:>CELL$}");
            }
            let row_depth = report
                .rows
                .iter()
                .find(|r| r.validation_setup == *setup)
                .and_then(|r| r.validation_bit_depth);
            if matches!((report.training_bit_depth, row_depth), (Some(a), Some(b)) if a != b) {
                cross.push(report.training_setup.as_str());
            }
        }
        let cross = if cross.is_empty() {
            "-".to_string()
        } else {
            cross.join(",")
        };
        let _ = writeln!(out, " | {cross}");
    }
    out
}

/// Mean estimation errors of one trained model at several fixed zeta values.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaTable {
    pub training_setup: String,
    pub zetas: Vec<f64>,
    /// (validation setup, one error fraction per zeta)
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn render_zeta_table(table: &ZetaTable) -> String {
    let label = "Validation setup";
    let first = table
        .rows
        .iter()
        .map(|(s, _)| s.len())
        .chain([label.len()])
        .max()
        .unwrap_or(label.len());
    let headers: Vec<String> = table.zetas.iter().map(|z| format!("zeta={z}")).collect();
    let widths: Vec<usize> = headers.iter().map(|h| h.len().max(CELL)).collect();

    let mut out = String::new();
    let _ = writeln!(out, "Training: {}", table.training_setup);
    let _ = write!(out, "{label:<first$}");
    for (h, w) in headers.iter().zip(&widths) {
        let _ = write!(out, " | {h:>w$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(first));
    for w in &widths {
        out.push_str("-+-");
        out.push_str(&"-".repeat(*w));
    }
    out.push('\n');
    for (setup, errors) in &table.rows {
        let _ = write!(out, "{setup:<first$}");
        for (i, w) in widths.iter().enumerate() {
            let cell = errors
                .get(i)
                .map(|e| format_percent(*e))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " | {cell:>w$}");
        }
        out.push('\n');
    }
    out
}

/// Curve CSV: `zeta,mean_error_percent` rows and an argmin trailer.
pub fn render_curve(sweep: &ZetaSweepResult) -> String {
    let d = sweep.decimals;
    let mut out = String::from("zeta,mean_error_percent\n");
    for (z, e) in sweep.grid.iter().zip(&sweep.errors) {
        let _ = writeln!(out, "{:.d$},{:.2}", z, e * 100.0);
    }
    let (z, e) = sweep.best();
    let _ = writeln!(out, "# argmin zeta={:.d$}, error={:.2}%", z, e * 100.0);
    out
}

/// Raw curve CSV with full-precision fractions: `zeta,mean_error`.
pub fn render_curve_raw(sweep: &ZetaSweepResult) -> String {
    let mut out = String::from("zeta,mean_error\n");
    for (z, e) in sweep.grid.iter().zip(&sweep.errors) {
        let _ = writeln!(out, "{z},{e}");
    }
    out
}

/// Parses the output of [`render_curve`]; comment lines other than the
/// argmin trailer are skipped.
pub fn parse_curve(text: &str) -> Result<ZetaSweepResult> {
    let mut grid = Vec::new();
    let mut errors = Vec::new();
    let mut decimals = None;
    let mut saw_header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "zeta,mean_error_percent" {
                return Err(Error::parse(
                    "curve",
                    i + 1,
                    "expected header `zeta,mean_error_percent`",
                ));
            }
            saw_header = true;
            continue;
        }
        let (z, e) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("curve", i + 1, "expected `zeta,error`"))?;
        if decimals.is_none() {
            decimals = Some(z.split_once('.').map_or(0, |(_, frac)| frac.len()));
        }
        let z: f64 = z
            .parse()
            .map_err(|_| Error::parse("curve", i + 1, "invalid zeta"))?;
        let e: f64 = e
            .parse()
            .map_err(|_| Error::parse("curve", i + 1, "invalid error"))?;
        grid.push(z);
        errors.push(e / 100.0);
    }
    ZetaSweepResult::new(grid, errors, decimals.unwrap_or(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(0.0648), "6.48%");
        assert_eq!(format_percent(0.3595), "35.95%");
        assert_eq!(format_percent(0.0173), "1.73%");
        assert_eq!(format_percent(0.0), "0.00%");
    }

    #[test]
    fn empty_table_is_header_only() {
        let table = render_error_table(&[]);
        assert_eq!(table.lines().count(), 3);
        let report = EvaluationReport::new("Conventional8", Some(BitDepth::EIGHT));
        let table = render_error_table(&[report]);
        assert_eq!(table.lines().count(), 3);
        assert!(table.starts_with("Training setup"));
    }

    #[test]
    fn curve_of_single_point() {
        let sweep = ZetaSweepResult::new(vec![0.0], vec![0.3595], 2).unwrap();
        assert_eq!(
            render_curve(&sweep),
            "zeta,mean_error_percent\n0.00,35.95\n# argmin zeta=0.00, error=35.95%\n"
        );
    }

    #[test]
    fn constant_curve_argmin_is_first_point() {
        let sweep = ZetaSweepResult::new(vec![0.0, 0.5, 1.0], vec![0.2; 3], 2).unwrap();
        assert!(render_curve(&sweep).ends_with("# argmin zeta=0.00, error=20.00%\n"));
    }

    #[test]
    fn curve_parse_rejects_garbage() {
        assert!(parse_curve("zeta,err\n0,1\n").is_err());
        assert!(parse_curve("zeta,mean_error_percent\n").is_err());
    }
}

//! Bit-depth extension fitting: zeta sweeps for a fixed phi assignment and
//! brute-force search of phi over feature groups.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;

use crate::catalog::{row_name, CatalogVariant, FeatureCatalog};
use crate::dataset::EnergyDataset;
use crate::energy::{weighted_energy, CompensatedSum, EnergyModel};
use crate::error::{Error, Result};
use crate::trainer::check_disjoint;

/// Above this many groups the search logs a warning.
pub const SEARCH_WARN_GROUPS: usize = 24;
const SEARCH_MAX_GROUPS: usize = 40;

/// Reference bit-depth sensitivity flags, one per FU leaf.
pub fn reference_phi(catalog: &FeatureCatalog) -> Result<Vec<bool>> {
    if catalog.variant() != CatalogVariant::Fu {
        return Err(Error::VariantMismatch {
            expected: CatalogVariant::Fu,
            found: catalog.variant(),
        });
    }
    Ok(catalog.phi_vector())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroup {
    pub name: String,
    /// Leaf positions, ascending.
    pub members: Vec<usize>,
}

/// One group per taxonomy row, covering every depth of the row's labels.
pub fn default_groups(catalog: &FeatureCatalog) -> Vec<FeatureGroup> {
    let mut groups: Vec<FeatureGroup> = Vec::new();
    for (i, leaf) in catalog.leaves().iter().enumerate() {
        let name = if catalog.variant() == CatalogVariant::Fa
            && leaf.label == crate::catalog::MERGED_SLICE_LABEL
        {
            leaf.label.to_string()
        } else {
            row_name(leaf.row)
        };
        match groups.last_mut() {
            Some(g) if g.name == name => g.members.push(i),
            _ => groups.push(FeatureGroup {
                name,
                members: vec![i],
            }),
        }
    }
    groups
}

/// Parses a grouping file. Each non-comment line is `name: item item ...`
/// where an item is a leaf name (`skip@0`) or a base label (`skip`, meaning
/// every depth).
pub fn parse_groups(text: &str, catalog: &FeatureCatalog) -> Result<Vec<FeatureGroup>> {
    let mut groups = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, items) = line
            .split_once(':')
            .ok_or_else(|| Error::parse("groups", i + 1, "expected `name: members`"))?;
        let mut members = BTreeSet::new();
        for item in items
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
        {
            match catalog.position(item) {
                Some(p) => {
                    members.insert(p);
                }
                None => {
                    let positions = catalog.positions_of_label(item);
                    if positions.is_empty() {
                        return Err(Error::parse(
                            "groups",
                            i + 1,
                            format!("unknown feature `{item}`"),
                        ));
                    }
                    members.extend(positions);
                }
            }
        }
        groups.push(FeatureGroup {
            name: name.trim().to_string(),
            members: members.into_iter().collect(),
        });
    }
    validate_partition(&groups, catalog)?;
    Ok(groups)
}

pub fn groups_to_text(groups: &[FeatureGroup], catalog: &FeatureCatalog) -> String {
    let mut out = String::new();
    for g in groups {
        out.push_str(&g.name);
        out.push(':');
        for &m in &g.members {
            out.push(' ');
            out.push_str(&catalog.leaves()[m].name());
        }
        out.push('\n');
    }
    out
}

/// Checks that `groups` are nonempty and cover every leaf exactly once.
pub fn validate_partition(groups: &[FeatureGroup], catalog: &FeatureCatalog) -> Result<()> {
    let mut owner = vec![None; catalog.len()];
    for (gi, g) in groups.iter().enumerate() {
        if g.members.is_empty() {
            return Err(Error::InvalidGroups(format!("group `{}` is empty", g.name)));
        }
        for &m in &g.members {
            let slot = owner.get_mut(m).ok_or_else(|| {
                Error::InvalidGroups(format!("group `{}` has out-of-range leaf {m}", g.name))
            })?;
            if let Some(prev) = *slot {
                let prev: &FeatureGroup = &groups[prev];
                return Err(Error::InvalidGroups(format!(
                    "leaf `{}` is in both `{}` and `{}`",
                    catalog.leaves()[m].name(),
                    prev.name,
                    g.name
                )));
            }
            *slot = Some(gi);
        }
    }
    if let Some(missing) = owner.iter().position(Option::is_none) {
        return Err(Error::InvalidGroups(format!(
            "leaf `{}` is not in any group",
            catalog.leaves()[missing].name()
        )));
    }
    Ok(())
}

/// Expands a set of flagged groups into a per-leaf phi vector.
pub fn phi_from_groups(groups: &[FeatureGroup], selected: &[usize], leaves: usize) -> Vec<bool> {
    let mut phi = vec![false; leaves];
    for &g in selected {
        for &m in &groups[g].members {
            phi[m] = true;
        }
    }
    phi
}

/// Evenly spaced zeta values held as integer multiples of `10^-decimals`,
/// so every grid point is the double nearest to its decimal value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZetaGrid {
    start_units: u64,
    step_units: u64,
    count: usize,
    decimals: u32,
}

fn decimals_of(x: f64) -> Option<u32> {
    (0..=9).find(|&d| {
        let scaled = x * 10f64.powi(d as i32);
        (scaled - scaled.round()).abs() < 1e-6
    })
}

impl ZetaGrid {
    /// Grid from `start` to `stop` inclusive.
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start >= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "start must be >= 0, got {start}"
            )));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be > 0, got {step}")));
        }
        if !(stop >= start) {
            return Err(Error::InvalidGrid(format!(
                "stop {stop} is below start {start}"
            )));
        }
        let decimals = decimals_of(start)
            .zip(decimals_of(step))
            .map(|(a, b)| a.max(b))
            .ok_or_else(|| Error::InvalidGrid("start and step need at most 9 decimals".into()))?;
        let unit = 10f64.powi(decimals as i32);
        let start_units = (start * unit).round() as u64;
        let step_units = (step * unit).round() as u64;
        let span = ((stop * unit).round() as u64).saturating_sub(start_units);
        let count = (span / step_units) as usize + 1;
        Ok(ZetaGrid {
            start_units,
            step_units,
            count,
            decimals,
        })
    }

    /// A grid holding only `value`.
    pub fn single(value: f64) -> Result<Self> {
        ZetaGrid::new(value, value, 1.0)
    }

    /// The default 0 to 1.5 grid with step 0.01.
    pub fn standard() -> Self {
        ZetaGrid::new(0.0, 1.5, 0.01).expect("static grid")
    }

    /// Parses `start:stop:step`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(Error::InvalidGrid(format!(
                "expected start:stop:step, got `{spec}`"
            )));
        };
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidGrid(format!("invalid number `{s}` in `{spec}`")))
        };
        ZetaGrid::new(num(start)?, num(stop)?, num(step)?)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Decimals used when printing grid values (at least 2).
    pub fn display_decimals(&self) -> usize {
        self.decimals.max(2) as usize
    }

    pub fn values(&self) -> Vec<f64> {
        let unit = 10f64.powi(self.decimals as i32);
        (0..self.count as u64)
            .map(|k| (self.start_units + k * self.step_units) as f64 / unit)
            .collect()
    }

    pub fn to_spec(&self) -> String {
        let d = self.decimals as usize;
        let v = self.values();
        format!(
            "{:.d$}:{:.d$}:{:.d$}",
            v[0],
            v[v.len() - 1],
            self.step_units as f64 / 10f64.powi(self.decimals as i32)
        )
    }
}

/// Mean estimation error at each grid point of a zeta sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaSweepResult {
    pub grid: Vec<f64>,
    pub errors: Vec<f64>,
    pub argmin: usize,
    pub decimals: usize,
}

impl ZetaSweepResult {
    pub fn new(grid: Vec<f64>, errors: Vec<f64>, decimals: usize) -> Result<Self> {
        if grid.is_empty() || grid.len() != errors.len() {
            return Err(Error::InvalidGrid(
                "sweep needs equally many grid points and errors".into(),
            ));
        }
        let argmin = first_min(&errors);
        Ok(ZetaSweepResult {
            grid,
            errors,
            argmin,
            decimals,
        })
    }

    pub fn best(&self) -> (f64, f64) {
        (self.grid[self.argmin], self.errors[self.argmin])
    }
}

fn first_min(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn check_inputs(model: &EnergyModel, phi: &[bool], validation: &EnergyDataset) -> Result<()> {
    if validation.is_empty() {
        return Err(Error::EmptyDataset {
            name: validation.name.clone(),
        });
    }
    if validation.variant() != model.variant() {
        return Err(Error::VariantMismatch {
            expected: model.variant(),
            found: validation.variant(),
        });
    }
    if phi.len() != model.coefficients().len() {
        return Err(Error::Alignment {
            expected: model.coefficients().len(),
            found: phi.len(),
        });
    }
    Ok(())
}

/// Evaluates the scaled model on `validation` for every zeta of `grid`.
pub fn sweep_zeta(
    model: &EnergyModel,
    phi: &[bool],
    validation: &EnergyDataset,
    grid: &ZetaGrid,
) -> Result<ZetaSweepResult> {
    check_inputs(model, phi, validation)?;
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let zetas = grid.values();
    let errors = zetas
        .par_iter()
        .map(|&zeta| {
            let mut acc = CompensatedSum::default();
            for rec in validation.records() {
                let est = model.estimate_with(zeta, phi, &rec.counts)?;
                acc.add(((est - rec.energy) / rec.energy).abs());
            }
            Ok(acc.value() / validation.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    ZetaSweepResult::new(zetas, errors, grid.display_decimals())
}

/// Per-record sums of group contributions for every subset of groups,
/// tabulated in chunks of up to 12 groups. A subset sum is the chunk sums
/// added in chunk order, so it does not depend on enumeration order.
struct SubsetSums {
    records: usize,
    chunks: Vec<Vec<f64>>,
}

const CHUNK_BITS: usize = 12;

impl SubsetSums {
    fn new(contrib: &[Vec<f64>], groups: usize) -> Self {
        let records = contrib.len();
        let mut chunks = Vec::new();
        let mut first = 0;
        while first < groups {
            let bits = CHUNK_BITS.min(groups - first);
            let mut table = vec![0.0; (1 << bits) * records];
            for part in 0..1usize << bits {
                for (l, c) in contrib.iter().enumerate() {
                    let mut acc = CompensatedSum::default();
                    for b in 0..bits {
                        if part >> b & 1 == 1 {
                            acc.add(c[first + b]);
                        }
                    }
                    table[part * records + l] = acc.value();
                }
            }
            chunks.push(table);
            first += bits;
        }
        SubsetSums { records, chunks }
    }

    fn fill(&self, mask: u64, out: &mut [f64]) {
        out.fill(0.0);
        for (i, table) in self.chunks.iter().enumerate() {
            let part = (mask >> (i * CHUNK_BITS)) as usize & ((1 << CHUNK_BITS) - 1);
            let row = &table[part * self.records..(part + 1) * self.records];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
    }
}

/// Mean of `|offset_l + zeta * slope_l|`, summed in record order.
fn mean_abs(offset: &[f64], slope: &[f64], zeta: f64) -> f64 {
    let sum: CompensatedSum = offset
        .iter()
        .zip(slope)
        .map(|(a, b)| (a + zeta * b).abs())
        .collect();
    sum.value() / offset.len() as f64
}

/// First grid minimum of `zeta -> mean_abs(offset, slope, zeta)` for
/// nonnegative slopes.
///
/// The function is convex and piecewise linear, minimized on an interval
/// whose left end is the lower weighted median of the kinks `-offset/slope`
/// (weights `slope`). Over a grid, the first minimum is one of the two grid
/// points around that left end, so only those are evaluated.
fn grid_minimum(
    offset: &[f64],
    slope: &[f64],
    zetas: &[f64],
    kinks: &mut Vec<(f64, f64)>,
) -> (usize, f64) {
    kinks.clear();
    kinks.extend(
        offset
            .iter()
            .zip(slope)
            .filter(|(_, &b)| b > 0.0)
            .map(|(&a, &b)| (-a / b, b)),
    );
    if kinks.is_empty() {
        return (0, mean_abs(offset, slope, zetas[0]));
    }
    kinks.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let half: f64 = kinks.iter().map(|k| k.1).sum::<f64>() / 2.0;
    let mut cumulative = 0.0;
    let mut left = kinks[kinks.len() - 1].0;
    for &(z, w) in kinks.iter() {
        cumulative += w;
        if cumulative >= half {
            left = z;
            break;
        }
    }
    let above = zetas.partition_point(|&z| z < left);
    let candidates = [above.checked_sub(1), (above < zetas.len()).then_some(above)];
    let mut best: Option<(usize, f64)> = None;
    for i in candidates.into_iter().flatten() {
        let e = mean_abs(offset, slope, zetas[i]);
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.expect("grid is not empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiSearchResult {
    pub phi: Vec<bool>,
    /// Indices of the groups flagged as bit-depth sensitive.
    pub selected_groups: Vec<usize>,
    pub zeta: f64,
    pub mean_error: f64,
    pub subsets_evaluated: u64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    mask: u64,
    zeta_index: usize,
    error: f64,
}

/// Total order: lower error, then fewer flagged groups, then the
/// lexicographically smaller list of flagged group indices.
fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.error
        .total_cmp(&b.error)
        .then(a.mask.count_ones().cmp(&b.mask.count_ones()))
        .then_with(|| {
            let bits = |m: u64| (0..64).filter(move |i| m >> i & 1 == 1);
            bits(a.mask).cmp(bits(b.mask))
        })
}

/// Brute-force search over every assignment of phi that is constant within
/// each group. For every assignment the zeta grid is swept on the 10-bit
/// validation set and the overall (phi, zeta) with the lowest mean
/// estimation error wins.
///
/// `train8` is the set `model` was trained on; it must not share bitstream
/// ids with `validation10`.
pub fn search_phi(
    model: &EnergyModel,
    groups: &[FeatureGroup],
    train8: &EnergyDataset,
    validation10: &EnergyDataset,
    grid: &ZetaGrid,
) -> Result<PhiSearchResult> {
    let catalog = FeatureCatalog::get(model.variant());
    validate_partition(groups, catalog)?;
    check_inputs(model, &vec![false; catalog.len()], validation10)?;
    check_disjoint(train8, validation10)?;
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    let g = groups.len();
    if g > SEARCH_MAX_GROUPS {
        return Err(Error::InvalidGroups(format!(
            "{g} groups; exhaustive search is limited to {SEARCH_MAX_GROUPS}"
        )));
    }
    if g > SEARCH_WARN_GROUPS {
        warn!("searching 2^{g} phi assignments");
    }

    // Per record l, relative to the measurement: the unscaled estimate a_l
    // and the contribution of each group. For a flagged set S the relative
    // error at zeta is |a_l - 1 + zeta * s_l| with s_l = sum_{k in S} g_lk.
    let coefficients = model.coefficients();
    let r = validation10.len();
    let mut offset = Vec::with_capacity(r);
    let mut contrib = Vec::with_capacity(r);
    for rec in validation10.records() {
        let counts = rec.counts.counts();
        offset.push(weighted_energy(coefficients, counts) / rec.energy - 1.0);
        contrib.push(
            groups
                .iter()
                .map(|grp| {
                    let e: Vec<f64> = grp.members.iter().map(|&m| coefficients[m]).collect();
                    let n: Vec<u64> = grp.members.iter().map(|&m| counts[m]).collect();
                    weighted_energy(&e, &n) / rec.energy
                })
                .collect::<Vec<f64>>(),
        );
    }
    let tables = SubsetSums::new(&contrib, g);
    let zetas = grid.values();

    let total: u64 = 1u64 << g;
    let best = (0..total)
        .into_par_iter()
        .map_init(
            || (vec![0.0; r], Vec::with_capacity(r)),
            |(s, scratch), mask| {
                tables.fill(mask, s);
                let (zeta_index, error) = grid_minimum(&offset, s, &zetas, scratch);
                Candidate {
                    mask,
                    zeta_index,
                    error,
                }
            },
        )
        .min_by(candidate_order)
        .expect("at least the empty assignment is evaluated");

    let selected_groups: Vec<usize> = (0..g).filter(|k| best.mask >> k & 1 == 1).collect();
    Ok(PhiSearchResult {
        phi: phi_from_groups(groups, &selected_groups, catalog.len()),
        selected_groups,
        zeta: zetas[best.zeta_index],
        mean_error: best.error,
        subsets_evaluated: total,
    })
}

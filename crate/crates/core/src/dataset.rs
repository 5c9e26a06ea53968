//! Latin hypercube generation of labelled crank-rocker samples.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{self, ConditionPair};
use crate::error::{Error, Result};
use crate::kinematics::{self, Linkage};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 7] = ["l2", "l3", "l4", "ee_x", "ee_y", "d_max", "eta_min"];

/// Closed interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

impl From<[f64; 2]> for Interval {
    fn from([min, max]: [f64; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.min, i.max]
    }
}

/// Sampling box of the five design parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthRanges {
    pub l2: Interval,
    pub l3: Interval,
    pub l4: Interval,
    pub ee_x: Interval,
    pub ee_y: Interval,
}

impl Default for LengthRanges {
    fn default() -> Self {
        Self {
            l2: Interval::new(0.05, 0.95),
            l3: Interval::new(0.05, 2.00),
            l4: Interval::new(0.05, 3.00),
            ee_x: Interval::new(-0.50, 2.50),
            ee_y: Interval::new(-1.50, 1.50),
        }
    }
}

impl LengthRanges {
    pub fn as_array(&self) -> [Interval; 5] {
        [self.l2, self.l3, self.l4, self.ee_x, self.ee_y]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in Linkage::FIELDS.iter().zip(self.as_array()) {
            if !(r.min.is_finite() && r.max.is_finite() && r.min < r.max) {
                return Err(Error::Config(format!("range for {name} must satisfy min < max")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, linkage: &Linkage) -> bool {
        self.as_array().iter().zip(linkage.to_array()).all(|(r, x)| r.contains(x))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ranges: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        ranges.validate()?;
        Ok(ranges)
    }
}

/// Latin hypercube design over the five linkage parameters.
///
/// Each axis is cut into `n` equal bins; every bin holds exactly one point,
/// bins are paired across axes by independent permutations and points are
/// jittered uniformly inside their bin.
pub fn lhs_sample(n: usize, ranges: &LengthRanges, seed: u64) -> Vec<Linkage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = [(); 5].map(|_| Vec::with_capacity(n));
    for (column, range) in columns.iter_mut().zip(ranges.as_array()) {
        let mut bins: Vec<usize> = (0..n).collect();
        bins.shuffle(&mut rng);
        for bin in bins {
            let u = (bin as f64 + rng.random::<f64>()) / n as f64;
            column.push(range.min + u * range.width());
        }
    }
    (0..n)
        .map(|i| Linkage::new(columns[0][i], columns[1][i], columns[2][i], columns[3][i], columns[4][i]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSample {
    pub linkage: Linkage,
    pub conditions: ConditionPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub ranges: LengthRanges,
    pub n_steps: usize,
    pub rejected_count: u64,
    pub schema_version: u32,
    /// Row count, used to detect truncated files.
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<MechanismSample>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn conditions(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|s| s.conditions.to_array()).collect()
    }

    /// Writes the CSV and its `<stem>.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = self.meta.clone();
        meta.n_samples = self.samples.len();
        crate::error::ensure_parent(path)?;
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", CSV_HEADER.join(","))?;
        for s in &self.samples {
            let [a, b, c, d, e] = s.linkage.to_array();
            let ConditionPair { d_max, eta_min } = s.conditions;
            writeln!(out, "{a},{b},{c},{d},{e},{d_max},{eta_min}")?;
        }
        out.flush()?;
        let meta_json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        std::fs::write(meta_path(path), meta_json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = meta_path(path);
        let meta_text = std::fs::read_to_string(&sidecar)
            .map_err(|e| Error::format(&sidecar, format!("missing metadata sidecar: {e}")))?;
        let raw: serde_json::Value =
            serde_json::from_str(&meta_text).map_err(|e| Error::format(&sidecar, e))?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            other => {
                return Err(Error::version(
                    &sidecar,
                    format!("schema_version {other:?}, expected {SCHEMA_VERSION}"),
                ))
            }
        }
        let meta: DatasetMeta =
            serde_json::from_value(raw).map_err(|e| Error::format(&sidecar, e))?;

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::format(path, e))?;
        let header = reader.headers().map_err(|e| Error::format(path, e))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::format(path, format!("unexpected header {header:?}")));
        }
        let mut samples = Vec::with_capacity(meta.n_samples);
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format(path, e))?;
            let values = parse_row(&record).map_err(|m| Error::format(path, format!("row {}: {m}", row + 1)))?;
            samples.push(MechanismSample {
                linkage: Linkage::new(values[0], values[1], values[2], values[3], values[4]),
                conditions: ConditionPair::new(values[5], values[6]),
            });
        }
        if samples.len() != meta.n_samples {
            return Err(Error::format(
                path,
                format!("expected {} rows, found {}", meta.n_samples, samples.len()),
            ));
        }
        Ok(Self { samples, meta })
    }
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<[f64; 7], String> {
    if record.len() != 7 {
        return Err(format!("expected 7 fields, got {}", record.len()));
    }
    let mut values = [0.0f64; 7];
    for (v, field) in values.iter_mut().zip(record.iter()) {
        *v = field.trim().parse().map_err(|e| format!("{field:?}: {e}"))?;
        if !v.is_finite() {
            return Err(format!("non-finite value {field:?}"));
        }
    }
    Ok(values)
}

/// `data/train.csv` -> `data/train.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

/// Draws LHS batches, drops non-crank-rockers and labels the survivors until
/// `n_valid_target` samples are collected.
pub fn generate(
    n_valid_target: usize,
    ranges: &LengthRanges,
    n_steps: usize,
    seed: u64,
) -> Result<Dataset> {
    ranges.validate()?;
    if n_steps < kinematics::MIN_STEPS {
        return Err(Error::TooFewSteps { min: kinematics::MIN_STEPS, got: n_steps });
    }
    let mut samples = Vec::with_capacity(n_valid_target);
    let mut rejected = 0u64;
    let mut batch_index = 0u64;
    while samples.len() < n_valid_target {
        let remaining = n_valid_target - samples.len();
        let batch_seed = seed.wrapping_add(batch_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        batch_index += 1;
        let draws = lhs_sample((4 * remaining).max(64), ranges, batch_seed);
        let mut accepted = Vec::with_capacity(remaining);
        for linkage in draws {
            if accepted.len() == remaining {
                break;
            }
            if kinematics::is_valid_crank_rocker(&linkage) {
                accepted.push(linkage);
            } else {
                rejected += 1;
            }
        }
        let labelled: Vec<MechanismSample> = accepted
            .into_par_iter()
            .map(|linkage| {
                conditions::evaluate(&linkage, n_steps)
                    .map(|conditions| MechanismSample { linkage, conditions })
            })
            .collect::<Result<_>>()?;
        samples.extend(labelled);
        log::info!("generated {}/{} samples ({} rejected)", samples.len(), n_valid_target, rejected);
    }
    let meta = DatasetMeta {
        seed,
        ranges: *ranges,
        n_steps,
        rejected_count: rejected,
        schema_version: SCHEMA_VERSION,
        n_samples: samples.len(),
    };
    Ok(Dataset { samples, meta })
}

/// `normalized = (raw - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub fn from_interval(interval: Interval) -> Self {
        let width = interval.width();
        Self { offset: interval.min, scale: if width > 0.0 { width } else { 1.0 } }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }
}

/// Maps linkage fields and conditions to the unit interval for the networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub linkage: [Affine; 5],
    pub conditions: [Affine; 2],
    /// Observed condition bounds the condition transform was fitted on.
    pub condition_bounds: [Interval; 2],
    pub ranges: LengthRanges,
}

impl Normalizer {
    pub fn new(ranges: &LengthRanges, condition_bounds: [Interval; 2]) -> Self {
        Self {
            linkage: ranges.as_array().map(Affine::from_interval),
            conditions: condition_bounds.map(Affine::from_interval),
            condition_bounds,
            ranges: *ranges,
        }
    }

    /// Length ranges from the dataset metadata, condition bounds observed.
    pub fn fit(dataset: &Dataset) -> Self {
        let mut bounds = [Interval::new(f64::INFINITY, f64::NEG_INFINITY); 2];
        for s in &dataset.samples {
            for (b, v) in bounds.iter_mut().zip(s.conditions.to_array()) {
                b.min = b.min.min(v);
                b.max = b.max.max(v);
            }
        }
        if dataset.is_empty() {
            bounds = [Interval::new(0.0, 1.0); 2];
        }
        Self::new(&dataset.meta.ranges, bounds)
    }

    pub fn linkage_to_unit(&self, linkage: &Linkage) -> [f64; 5] {
        let v = linkage.to_array();
        std::array::from_fn(|k| self.linkage[k].apply(v[k]))
    }

    pub fn linkage_from_unit(&self, unit: [f64; 5]) -> Linkage {
        Linkage::from_array(std::array::from_fn(|k| self.linkage[k].invert(unit[k])))
    }

    pub fn conditions_to_unit(&self, c: [f64; 2]) -> [f64; 2] {
        [self.conditions[0].apply(c[0]), self.conditions[1].apply(c[1])]
    }

    pub fn conditions_from_unit(&self, u: [f64; 2]) -> [f64; 2] {
        [self.conditions[0].invert(u[0]), self.conditions[1].invert(u[1])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lhs_one_point_per_bin() {
        let ranges = LengthRanges::default();
        let pts = lhs_sample(10, &ranges, 3);
        let mut bins: Vec<usize> =
            pts.iter().map(|p| ((p.l2 - 0.05) / 0.09).floor() as usize).collect();
        bins.sort_unstable();
        assert_eq!(bins, (0..10).collect::<Vec<_>>());
        for p in &pts {
            assert!(ranges.contains(p));
        }
    }

    #[test]
    fn lhs_single_point_and_determinism() {
        let ranges = LengthRanges::default();
        let one = lhs_sample(1, &ranges, 9);
        assert_eq!(one.len(), 1);
        assert!(ranges.contains(&one[0]));
        assert_eq!(lhs_sample(1000, &ranges, 42), lhs_sample(1000, &ranges, 42));
        assert_ne!(lhs_sample(1000, &ranges, 42), lhs_sample(1000, &ranges, 43));
    }

    #[test]
    fn generate_small() {
        let ds = generate(100, &LengthRanges::default(), 90, 1).unwrap();
        assert_eq!(ds.len(), 100);
        assert!(ds.meta.rejected_count > 0);
        for s in &ds.samples {
            assert!(s.linkage.is_valid_crank_rocker());
            assert!(s.conditions.d_max > 0.0 && s.conditions.eta_min > 0.0);
        }
    }

    #[test]
    fn normalizer_maps_ranges_to_unit() {
        let ranges = LengthRanges::default();
        let n = Normalizer::new(&ranges, [Interval::new(0.2, 4.0), Interval::new(0.1, 9.0)]);
        let lo = n.linkage_to_unit(&Linkage::new(0.05, 0.05, 0.05, -0.5, -1.5));
        let hi = n.linkage_to_unit(&Linkage::new(0.95, 2.0, 3.0, 2.5, 1.5));
        for k in 0..5 {
            assert!(lo[k].abs() < 1e-15);
            assert!((hi[k] - 1.0).abs() < 1e-15);
        }
        assert_eq!(n.conditions_to_unit([0.2, 0.1]), [0.0, 0.0]);
        let x = Linkage::new(0.31, 1.7, 0.4, 2.2, -1.1);
        let back = n.linkage_from_unit(n.linkage_to_unit(&x)).to_array();
        for (a, b) in back.iter().zip(x.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn meta_path_replaces_extension() {
        assert_eq!(meta_path(Path::new("a/train.csv")), PathBuf::from("a/train.meta.json"));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let r = LengthRanges { l3: Interval::new(2.0, 1.0), ..LengthRanges::default() };
        assert!(matches!(generate(10, &r, 90, 0), Err(Error::Config(_))));
    }
}

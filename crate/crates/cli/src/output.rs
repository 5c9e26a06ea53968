//! CSV and JSON artifacts written by the commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use linksynth::nsga2::Population;
use linksynth::{ConditionPair, Linkage, Normalizer};
use serde::Serialize;

pub const SAMPLE_HEADER: [&str; 9] = ["l2", "l3", "l4", "ee_x", "ee_y", "d_t", "eta_t", "d_r", "eta_r"];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn row(linkage: &Linkage, target: [f64; 2], actual: Option<ConditionPair>) -> Vec<String> {
    let mut fields: Vec<String> = linkage.to_array().iter().map(f64::to_string).collect();
    fields.push(target[0].to_string());
    fields.push(target[1].to_string());
    match actual {
        Some(c) => {
            fields.push(c.d_max.to_string());
            fields.push(c.eta_min.to_string());
        }
        None => fields.extend([String::new(), String::new()]),
    }
    fields
}

/// One row per synthesized linkage; exact conditions are empty for invalid ones.
pub fn write_samples(
    path: &Path,
    linkages: &[Linkage],
    targets: &[[f64; 2]],
    actual: &[Option<ConditionPair>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SAMPLE_HEADER)?;
    for ((l, t), a) in linkages.iter().zip(targets).zip(actual) {
        w.write_record(row(l, *t, *a))?;
    }
    w.flush()?;
    Ok(())
}

/// Final NSGA-II population with its validity flag and non-domination rank.
pub fn write_population(path: &Path, pop: &Population, normalizer: &Normalizer) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(SAMPLE_HEADER.iter().chain(&["valid", "rank"]))?;
    for (ind, l) in pop.individuals.iter().zip(pop.linkages(normalizer)) {
        let mut fields = row(&l, pop.target, ind.exact);
        fields.push(ind.valid.unwrap_or(false).to_string());
        fields.push(ind.rank.to_string());
        w.write_record(fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

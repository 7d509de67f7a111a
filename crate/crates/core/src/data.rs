//! Datasets on disk and synthetic data generation.
//!
//! The on-disk format is plain CSV: an `id` column, feature columns,
//! and optionally a trailing `label` column. Writing is byte
//! deterministic (floats use Rust's shortest-roundtrip form), so a
//! dataset survives a write/read/write cycle unchanged.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bigmath::mix_seed;
use crate::error::{Error, Result};
use crate::federation::PartyData;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Column-major: `columns[j][i]` is feature `j` of row `i`.
    pub columns: Vec<Vec<f64>>,
    pub labels: Option<Vec<u8>>,
}

fn field_ok(s: &str) -> bool {
    !s.is_empty() && !s.contains([',', '"', '\n', '\r'])
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn features(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() {
            return Err(Error::validation("dataset has no rows"));
        }
        let n = self.ids.len();
        {
            let mut seen = std::collections::HashSet::with_capacity(n);
            for id in &self.ids {
                if !field_ok(id) {
                    return Err(Error::validation(format!("bad id {id:?}")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::validation(format!("duplicate id {id:?}")));
                }
            }
        }
        if self.feature_names.len() != self.columns.len() {
            return Err(Error::validation(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.columns.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.feature_names {
            if !field_ok(name) || name == "id" || name == "label" {
                return Err(Error::validation(format!("bad feature name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::validation(format!("duplicate feature {name:?}")));
            }
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::validation(format!(
                    "column {j} has {} values for {n} rows",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "non-finite value in column {j}, row {i}"
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::validation(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            if labels.iter().any(|&y| y > 1) {
                return Err(Error::validation("labels must be 0 or 1"));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut out = String::from("id");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        if self.labels.is_some() {
            out.push_str(",label");
        }
        out.push('\n');
        for i in 0..self.rows() {
            out.push_str(&self.ids[i]);
            for col in &self.columns {
                out.push(',');
                out.push_str(&format!("{:?}", col[i]));
            }
            if let Some(labels) = &self.labels {
                out.push(',');
                out.push(if labels[i] == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::input("empty file"))?;
        let mut cols: Vec<&str> = header.split(',').map(|s| s.trim_end_matches('\r')).collect();
        if cols.first() != Some(&"id") {
            return Err(Error::input("first column must be `id`"));
        }
        let has_label = cols.last() == Some(&"label");
        if has_label {
            cols.pop();
        }
        let feature_names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
        let d = feature_names.len();

        let mut ids = Vec::new();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
        let mut labels: Vec<u8> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let expected = 1 + d + usize::from(has_label);
            if fields.len() != expected {
                return Err(Error::input(format!(
                    "line {}: {} fields, expected {expected}",
                    lineno + 2,
                    fields.len()
                )));
            }
            ids.push(fields[0].to_string());
            for j in 0..d {
                let v: f64 = fields[1 + j].parse().map_err(|_| {
                    Error::input(format!(
                        "line {}: bad number {:?}",
                        lineno + 2,
                        fields[1 + j]
                    ))
                })?;
                columns[j].push(v);
            }
            if has_label {
                match fields[1 + d] {
                    "0" => labels.push(0),
                    "1" => labels.push(1),
                    other => {
                        return Err(Error::input(format!(
                            "line {}: bad label {other:?}",
                            lineno + 2
                        )))
                    }
                }
            }
        }
        let data = Dataset {
            ids,
            feature_names,
            columns,
            labels: has_label.then_some(labels),
        };
        data.validate()?;
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_csv(&text)
    }
}

fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Generates a labeled dataset whose classes are separated by a linear
/// score over the features plus two interaction terms, with early
/// features carrying most of the coefficient mass. Labels are assigned
/// by thresholding the score at its empirical quantile, so the positive
/// count is exactly `round(n * positive_rate)`.
pub fn synth(n: usize, d: usize, positive_rate: f64, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || d == 0 {
        return Err(Error::validation("need at least 2 rows and 1 feature"));
    }
    if !(positive_rate > 0.0 && positive_rate < 1.0) {
        return Err(Error::validation("positive_rate must be in (0, 1)"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::validation("noise must be finite and non-negative"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x7379_6e74_6800_0001));
    let mut columns = vec![vec![0.0f64; n]; d];
    for col in &mut columns {
        for v in col.iter_mut() {
            *v = standard_normal(&mut rng);
        }
    }
    let mut score = vec![0.0f64; n];
    for (j, col) in columns.iter().enumerate() {
        let beta = 2.0 * 0.8f64.powi(j as i32) * if j % 2 == 0 { 1.0 } else { -1.0 };
        for (s, &x) in score.iter_mut().zip(col) {
            *s += beta * x;
        }
    }
    if d >= 2 {
        for i in 0..n {
            score[i] += columns[0][i] * columns[1][i];
        }
    }
    if d >= 4 {
        for i in 0..n {
            score[i] -= 0.8 * columns[2][i] * columns[3][i];
        }
    }
    if noise > 0.0 {
        for s in score.iter_mut() {
            *s += noise * standard_normal(&mut rng);
        }
    }
    let positives = ((n as f64 * positive_rate).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]));
    let mut labels = vec![0u8; n];
    for &i in order.iter().take(positives) {
        labels[i] = 1;
    }
    let data = Dataset {
        ids: (0..n).map(|i| format!("x{i:07}")).collect(),
        feature_names: (0..d).map(|j| format!("f{j}")).collect(),
        columns,
        labels: Some(labels),
    };
    data.validate()?;
    Ok(data)
}

/// Splits a labeled dataset vertically across `party_count` parties:
/// contiguous feature slices, as even as possible, with earlier parties
/// taking the wider slices. Each party keeps an independent uniform
/// sample of `row_keep * n` rows (everyone keeps everything at 1.0), so
/// the parties' id sets overlap only partially below that. Returns the
/// per-party views in id order together with the labels for party 1's
/// rows.
pub fn vertical_split(
    data: &Dataset,
    party_count: u32,
    row_keep: f64,
    seed: u64,
) -> Result<(Vec<PartyData>, Vec<u8>)> {
    if party_count == 0 {
        return Err(Error::validation("party_count must be at least 1"));
    }
    let parties = party_count as usize;
    let d = data.features();
    if d < parties {
        return Err(Error::validation(format!(
            "{d} features cannot be split across {parties} parties"
        )));
    }
    let base = d / parties;
    let extra = d % parties;
    let widths: Vec<usize> = (0..parties)
        .map(|p| base + usize::from(p < extra))
        .collect();
    vertical_split_widths(data, &widths, row_keep, seed)
}

/// Like [`vertical_split`], but with an explicit feature count per party:
/// party k+1 takes the next `widths[k]` columns, in order. Every column
/// must be assigned (the widths must sum to the feature count); the
/// labels always stay with party 1.
pub fn vertical_split_widths(
    data: &Dataset,
    widths: &[usize],
    row_keep: f64,
    seed: u64,
) -> Result<(Vec<PartyData>, Vec<u8>)> {
    data.validate()?;
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::validation("vertical split needs a labeled dataset"))?;
    if widths.is_empty() {
        return Err(Error::validation("need at least one party"));
    }
    let d = data.features();
    if widths.iter().sum::<usize>() != d || widths.contains(&0) {
        return Err(Error::config(format!(
            "width spec {widths:?} does not assign each of the {d} columns to exactly one party"
        )));
    }
    if !(row_keep > 0.0 && row_keep <= 1.0) {
        return Err(Error::validation("row_keep must be in (0, 1]"));
    }

    let n = data.rows();
    let mut out = Vec::with_capacity(widths.len());
    let mut labels_for_active = Vec::new();
    let mut start = 0usize;
    for (p, &width) in widths.iter().enumerate() {
        let party_id = p as u32 + 1;

        let keep: Vec<usize> = if row_keep >= 1.0 {
            (0..n).collect()
        } else {
            let want = ((n as f64 * row_keep).round() as usize).clamp(1, n);
            let mut rng =
                ChaCha20Rng::seed_from_u64(mix_seed(seed, 0x6b65_6570_0000_0000 | party_id as u64));
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..want {
                let j = rng.gen_range(i..n);
                pool.swap(i, j);
            }
            let mut kept = pool[..want].to_vec();
            kept.sort_unstable();
            kept
        };

        let columns: Vec<Vec<f64>> = (start..start + width)
            .map(|j| keep.iter().map(|&i| data.columns[j][i]).collect())
            .collect();
        if party_id == 1 {
            labels_for_active = keep.iter().map(|&i| labels[i]).collect();
        }
        let party = PartyData {
            party_id,
            ids: keep.iter().map(|&i| data.ids[i].clone()).collect(),
            feature_names: data.feature_names[start..start + width].to_vec(),
            columns,
        };
        party.validate()?;
        out.push(party);
        start += width;
    }
    Ok((out, labels_for_active))
}

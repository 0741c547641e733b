//! Per-speaker duration distributions and their eight descriptors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::align::{AgeUnit, Corpus, SpeakerRecord};
use crate::error::{Error, Result};
use crate::phone::{expand_categories, CategoryKey, PhoneInventory};

/// Histogram bin width used for the entropy descriptor (one 10 ms frame).
pub const BIN_WIDTH: f64 = 0.01;

/// Number of descriptors per category.
pub const N_FUNCTIONALS: usize = 8;

pub const FUNCTIONAL_NAMES: [&str; N_FUNCTIONALS] = [
    "mean", "variance", "min", "max", "skewness", "kurtosis", "entropy", "mad",
];

/// Value stored in masked (absent) cells of a [`FeatureMatrix`].
pub const MISSING_SENTINEL: f64 = 0.0;

// Variance below this is treated as zero for shape statistics.
const ZERO_VARIANCE: f64 = 1e-12;

/// 10 ms bin index of a duration. A small slack keeps values printed on the
/// frame grid (0.29 → bin 29) from falling into the bin below through
/// floating-point division error.
pub fn bin_index(duration: f64) -> i64 {
    (duration / BIN_WIDTH + 1e-6).floor() as i64
}

/// Speaker id → category → ascending durations (seconds).
pub type SpeakerDurations = BTreeMap<CategoryKey, Vec<f64>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DurationTable {
    pub speakers: BTreeMap<String, SpeakerDurations>,
}

impl DurationTable {
    pub fn get(&self, speaker: &str, key: &CategoryKey) -> Option<&[f64]> {
        self.speakers
            .get(speaker)
            .and_then(|m| m.get(key))
            .map(Vec::as_slice)
    }
}

pub fn accumulate(corpus: &Corpus, inventory: &PhoneInventory) -> DurationTable {
    let mut table = DurationTable::default();
    for speaker in &corpus.speakers {
        let mut cats: SpeakerDurations = BTreeMap::new();
        for seg in &speaker.segments {
            for key in expand_categories(&seg.label, inventory.with_stress) {
                if inventory.index_of(&key).is_some() {
                    cats.entry(key).or_default().push(seg.duration);
                }
            }
        }
        if cats.is_empty() {
            continue;
        }
        for v in cats.values_mut() {
            v.sort_by(f64::total_cmp);
        }
        table
            .speakers
            .insert(speaker.record.speaker_id.clone(), cats);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalVector {
    pub mean: f64,
    pub variance: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub skewness: f64,
    /// Excess kurtosis (0 for a normal distribution).
    pub kurtosis: f64,
    /// Shannon entropy in nats of the 10 ms histogram.
    pub entropy: f64,
    pub mean_abs_deviation: f64,
}

impl FunctionalVector {
    pub fn to_array(&self) -> [f64; N_FUNCTIONALS] {
        [
            self.mean,
            self.variance,
            self.minimum,
            self.maximum,
            self.skewness,
            self.kurtosis,
            self.entropy,
            self.mean_abs_deviation,
        ]
    }
}

/// Population moments, histogram entropy and mean absolute deviation.
/// Input order does not matter.
pub fn compute_functionals(durations: &[f64]) -> Result<FunctionalVector> {
    let n = durations.len();
    if n == 0 {
        return Err(Error::EmptyInput("duration sequence"));
    }
    let nf = n as f64;
    let mean = durations.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4, mut mad) = (0.0, 0.0, 0.0, 0.0);
    let mut minimum = f64::INFINITY;
    let mut maximum = f64::NEG_INFINITY;
    for &x in durations {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mad += d.abs();
        minimum = minimum.min(x);
        maximum = maximum.max(x);
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    mad /= nf;
    let (skewness, kurtosis) = if m2 < ZERO_VARIANCE {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };

    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &x in durations {
        *bins.entry(bin_index(x)).or_default() += 1;
    }
    let entropy = bins
        .values()
        .map(|&c| {
            let p = c as f64 / nf;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0);

    Ok(FunctionalVector {
        mean,
        variance: m2,
        minimum,
        maximum,
        skewness,
        kurtosis,
        entropy,
        mean_abs_deviation: mad,
    })
}

/// Speakers × (categories × 8 descriptors), with a presence mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub speaker_ids: Vec<String>,
    pub inventory: PhoneInventory,
    /// Row-major, `inventory.len() * 8` values per speaker.
    pub values: Vec<Vec<f64>>,
    pub present: Vec<Vec<bool>>,
    pub ages: Vec<f64>,
    pub age_unit: AgeUnit,
}

impl FeatureMatrix {
    pub fn n_speakers(&self) -> usize {
        self.speaker_ids.len()
    }

    pub fn n_categories(&self) -> usize {
        self.inventory.len()
    }

    /// The 8 descriptors of category `c` for speaker `s`.
    pub fn block(&self, s: usize, c: usize) -> &[f64] {
        &self.values[s][c * N_FUNCTIONALS..(c + 1) * N_FUNCTIONALS]
    }

    /// Keep only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            speaker_ids: rows.iter().map(|&r| self.speaker_ids[r].clone()).collect(),
            inventory: self.inventory.clone(),
            values: rows.iter().map(|&r| self.values[r].clone()).collect(),
            present: rows.iter().map(|&r| self.present[r].clone()).collect(),
            ages: rows.iter().map(|&r| self.ages[r]).collect(),
            age_unit: self.age_unit,
        }
    }

    /// Row indices ordered by speaker id.
    pub fn rows_by_speaker_id(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.n_speakers()).collect();
        rows.sort_by(|&a, &b| self.speaker_ids[a].cmp(&self.speaker_ids[b]));
        rows
    }
}

pub fn build_feature_matrix(
    table: &DurationTable,
    inventory: &PhoneInventory,
    speakers: &[SpeakerRecord],
) -> Result<FeatureMatrix> {
    let unit = match speakers.first() {
        Some(r) => r.age_unit,
        None => return Err(Error::EmptyCorpus),
    };
    if speakers.iter().any(|r| r.age_unit != unit) {
        return Err(Error::MixedAgeUnits);
    }
    let known: BTreeSet<&str> = speakers.iter().map(|r| r.speaker_id.as_str()).collect();
    let orphans: Vec<String> = table
        .speakers
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        return Err(Error::UnknownSpeakers(orphans));
    }

    let k = inventory.len();
    let mut m = FeatureMatrix {
        speaker_ids: Vec::new(),
        inventory: inventory.clone(),
        values: Vec::new(),
        present: Vec::new(),
        ages: Vec::new(),
        age_unit: unit,
    };
    for record in speakers {
        let Some(durations) = table.speakers.get(&record.speaker_id) else {
            continue;
        };
        let mut row = vec![MISSING_SENTINEL; k * N_FUNCTIONALS];
        let mut mask = vec![false; k];
        for (c, key) in inventory.keys.iter().enumerate() {
            if let Some(d) = durations.get(key).filter(|d| !d.is_empty()) {
                let f = compute_functionals(d)?;
                row[c * N_FUNCTIONALS..(c + 1) * N_FUNCTIONALS].copy_from_slice(&f.to_array());
                mask[c] = true;
            }
        }
        m.speaker_ids.push(record.speaker_id.clone());
        m.values.push(row);
        m.present.push(mask);
        m.ages.push(record.age_value);
    }
    if m.speaker_ids.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureRecord {
    speaker_id: String,
    age: f64,
    age_unit: AgeUnit,
    features: BTreeMap<CategoryKey, [f64; N_FUNCTIONALS]>,
    missing: Vec<CategoryKey>,
}

/// One JSON object per speaker; keys in inventory order.
pub fn write_jsonl<W: Write>(mut w: W, m: &FeatureMatrix) -> Result<()> {
    for s in 0..m.n_speakers() {
        let mut features = BTreeMap::new();
        let mut missing = Vec::new();
        for (c, key) in m.inventory.keys.iter().enumerate() {
            if m.present[s][c] {
                let mut block = [0.0; N_FUNCTIONALS];
                block.copy_from_slice(m.block(s, c));
                features.insert(key.clone(), block);
            } else {
                missing.push(key.clone());
            }
        }
        let rec = FeatureRecord {
            speaker_id: m.speaker_ids[s].clone(),
            age: m.ages[s],
            age_unit: m.age_unit,
            features,
            missing,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<features>", e))?;
    }
    Ok(())
}

/// Read a JSON-lines feature file. The inventory is the union of every
/// record's present and missing categories.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<FeatureMatrix> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FeatureRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        records.push(rec);
    }
    let first = records.first().ok_or(Error::EmptyCorpus)?;
    let unit = first.age_unit;
    let keys: BTreeSet<CategoryKey> = records
        .iter()
        .flat_map(|r| r.features.keys().chain(r.missing.iter()).cloned())
        .collect();
    let inventory = PhoneInventory::from_keys(keys, true, 0.0);
    let k = inventory.len();

    let mut m = FeatureMatrix {
        speaker_ids: Vec::new(),
        inventory,
        values: Vec::new(),
        present: Vec::new(),
        ages: Vec::new(),
        age_unit: unit,
    };
    let mut seen = BTreeSet::new();
    for rec in records {
        if rec.age_unit != unit {
            return Err(Error::MixedAgeUnits);
        }
        if !seen.insert(rec.speaker_id.clone()) {
            return Err(Error::Manifest(format!(
                "duplicate speaker id `{}` in features",
                rec.speaker_id
            )));
        }
        let mut row = vec![MISSING_SENTINEL; k * N_FUNCTIONALS];
        let mut mask = vec![false; k];
        for (key, block) in &rec.features {
            let c = m.inventory.index_of(key).expect("key collected above");
            row[c * N_FUNCTIONALS..(c + 1) * N_FUNCTIONALS].copy_from_slice(block);
            mask[c] = true;
        }
        let listed = rec.features.len() + rec.missing.len();
        if listed != k {
            return Err(Error::LayoutMismatch(format!(
                "speaker {} lists {listed} categories, expected {k}",
                rec.speaker_id
            )));
        }
        m.speaker_ids.push(rec.speaker_id);
        m.values.push(row);
        m.present.push(mask);
        m.ages.push(rec.age);
    }
    Ok(m)
}

/// Flat CSV export: `speaker_id,age,<key>.<functional>,...`; masked cells are empty.
pub fn write_csv<W: Write>(mut w: W, m: &FeatureMatrix) -> std::io::Result<()> {
    write!(w, "speaker_id,age")?;
    for key in &m.inventory.keys {
        for f in FUNCTIONAL_NAMES {
            write!(w, ",{key}.{f}")?;
        }
    }
    writeln!(w)?;
    for s in 0..m.n_speakers() {
        write!(w, "{},{}", m.speaker_ids[s], m.ages[s])?;
        for c in 0..m.n_categories() {
            for v in m.block(s, c) {
                if m.present[s][c] {
                    write!(w, ",{v}")?;
                } else {
                    write!(w, ",")?;
                }
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{join_segments, AlignmentSegment};
    use crate::phone::parse_phone_label;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn symmetric_three_points() {
        let f = compute_functionals(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(f.mean, 2.0));
        assert!(close(f.variance, 2.0 / 3.0));
        assert_eq!(f.minimum, 1.0);
        assert_eq!(f.maximum, 3.0);
        assert!(f.skewness.abs() < 1e-12);
        assert!(close(f.kurtosis, -1.5));
        assert!(close(f.entropy, 3f64.ln()));
        assert!(close(f.mean_abs_deviation, 2.0 / 3.0));
    }

    #[test]
    fn single_value_is_degenerate() {
        let f = compute_functionals(&[0.1]).unwrap();
        assert_eq!(f.to_array(), [0.1, 0.0, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(compute_functionals(&[]).is_err());
    }

    #[test]
    fn frame_grid_values_bin_correctly() {
        assert_eq!(bin_index(0.25), 25);
        assert_eq!(bin_index(0.29), 29);
        assert_eq!(bin_index(0.07), 7);
        assert_eq!(bin_index(0.0999), 9);
    }

    fn seg(spk: &str, label: &str, start: f64, dur: f64) -> AlignmentSegment {
        AlignmentSegment {
            utterance_id: format!("{spk}-u1"),
            speaker_id: spk.into(),
            channel: 1,
            start,
            duration: dur,
            raw_label: label.into(),
            label: parse_phone_label(label).unwrap(),
        }
    }

    fn rec(id: &str, age: f64) -> SpeakerRecord {
        SpeakerRecord {
            speaker_id: id.into(),
            age_value: age,
            age_unit: AgeUnit::Grade,
            utterance_prefix: None,
        }
    }

    #[test]
    fn accumulate_expands_occurrences() {
        let corpus = join_segments(
            vec![rec("a", 1.0)],
            vec![
                seg("a", "T_I", 0.0, 0.11),
                seg("a", "T_I", 0.11, 0.09),
                seg("a", "SIL", 0.2, 0.5),
            ],
        )
        .unwrap()
        .corpus;
        let inv = crate::phone::build_inventory(&corpus, true, 0.0).unwrap();
        let t = accumulate(&corpus, &inv);
        let a = &t.speakers["a"];
        assert_eq!(a.len(), 5);
        for k in ["T_I", "T", "NONSILENCE", "CONSONANTS"] {
            assert_eq!(a[&CategoryKey::from(k)], vec![0.09, 0.11]);
        }
        assert_eq!(a[&CategoryKey::from("SIL")], vec![0.5]);
    }

    #[test]
    fn matrix_shape_and_mask() {
        let corpus = join_segments(
            vec![rec("a", 1.0), rec("b", 2.0)],
            vec![
                seg("a", "T_I", 0.0, 0.1),
                seg("a", "SPN", 0.1, 0.3),
                seg("b", "T_I", 0.0, 0.2),
                seg("b", "SIL", 0.2, 0.2),
            ],
        )
        .unwrap()
        .corpus;
        let inv = crate::phone::build_inventory(&corpus, true, 0.0).unwrap();
        assert_eq!(inv.len(), 6);
        let t = accumulate(&corpus, &inv);
        let m = build_feature_matrix(&t, &inv, &corpus.records()).unwrap();
        assert_eq!(m.values.len(), 2);
        assert_eq!(m.values[0].len(), 48);
        assert_eq!(m.present[0].len(), 6);
        let spn = inv.index_of(&"SPN".into()).unwrap();
        assert!(m.present[0][spn]);
        assert!(!m.present[1][spn]);
        assert!(m.block(1, spn).iter().all(|&v| v == MISSING_SENTINEL));
        assert_eq!(m.ages, vec![1.0, 2.0]);

        let mut buf = Vec::new();
        write_jsonl(&mut buf, &m).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back.values, m.values);
        assert_eq!(back.present, m.present);
        assert_eq!(back.inventory.keys, m.inventory.keys);

        let mut csv = Vec::new();
        write_csv(&mut csv, &m).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 2 + 48);
        assert!(header.starts_with("speaker_id,age,CONSONANTS.mean,CONSONANTS.variance"));
    }

    #[test]
    fn mixed_units_rejected() {
        let t = DurationTable::default();
        let inv = PhoneInventory::from_keys([CategoryKey::from("SIL")], true, 0.0);
        let mut b = rec("b", 7.0);
        b.age_unit = AgeUnit::Years;
        assert!(matches!(
            build_feature_matrix(&t, &inv, &[rec("a", 1.0), b]),
            Err(Error::MixedAgeUnits)
        ));
    }
}

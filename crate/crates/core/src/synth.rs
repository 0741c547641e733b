//! Seeded synthetic corpora with age-dependent phone durations.
//!
//! Younger speakers get longer and more variable durations: the mean falls
//! linearly with age and both the within-speaker spread and the per-speaker
//! offsets shrink geometrically. Each speaker also has a developmental offset,
//! in grades, shared by every signal category. Durations lie on the 10 ms
//! frame grid.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{write_ctm, write_manifest, AgeUnit, AlignmentSegment, Corpus, SpeakerRecord, SpeakerSegments};
use crate::error::{Error, Result};
use crate::functionals::{bin_index, DurationTable, BIN_WIDTH};
use crate::phone::{CategoryKey, PhoneClassTable};
use crate::rng;

/// Shortest duration a phone can have: one 10 ms frame, in centiseconds.
const MIN_FRAMES: i64 = 1;
const MAX_REJECTIONS: usize = 64;
const SEGMENTS_PER_UTTERANCE: usize = 40;
const DEVELOPMENT_KEY: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCategory {
    pub label: String,
    /// Mean duration at age 0, seconds.
    pub base_mean: f64,
    /// Change in mean per grade, seconds (negative).
    pub slope: f64,
    /// Within-speaker std at the youngest age, seconds.
    pub std0: f64,
    /// Std of the per-speaker offset at the youngest age, seconds.
    pub speaker_std0: f64,
    /// Fractional shrinkage of both spreads per grade.
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCategory {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    pub speaker_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_speakers: usize,
    /// Inclusive grade range.
    pub age_range: [i64; 2],
    /// Std, in grades at the youngest age, of the per-speaker developmental
    /// offset applied through each signal category's slope.
    pub speaker_age_std0: f64,
    pub signal: Vec<SignalCategory>,
    pub noise: Vec<NoiseCategory>,
    /// Inclusive per-category occurrence range per speaker.
    pub occurrences: [usize; 2],
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let [low, high] = self.age_range;
        if low < 0 || high < low {
            return Err(Error::Config(format!("invalid age range [{low}, {high}]")));
        }
        if !(self.speaker_age_std0 >= 0.0) {
            return Err(Error::Config("speaker_age_std0 must be non-negative".into()));
        }
        if self.n_speakers == 0 {
            return Err(Error::Config("n_speakers must be positive".into()));
        }
        let [omin, omax] = self.occurrences;
        if omin == 0 || omax < omin {
            return Err(Error::Config(format!("invalid occurrence range [{omin}, {omax}]")));
        }
        if self.signal.is_empty() && self.noise.is_empty() {
            return Err(Error::Config("spec has no categories".into()));
        }
        let classes = PhoneClassTable::arpabet();
        let mut seen = std::collections::BTreeSet::new();
        for label in self.labels() {
            classes.parse(label)?;
            if !seen.insert(label) {
                return Err(Error::Config(format!("label {label} listed twice")));
            }
        }
        for s in &self.signal {
            let lo = s.base_mean + s.slope * high as f64;
            if s.base_mean <= 0.0 || lo <= 0.0 {
                return Err(Error::Config(format!(
                    "category {} has a non-positive mean duration within the age range",
                    s.label
                )));
            }
            if s.std0 < 0.0 || s.speaker_std0 < 0.0 || !(0.0..1.0).contains(&s.decay) {
                return Err(Error::Config(format!("category {}: invalid spread", s.label)));
            }
        }
        for n in &self.noise {
            if n.mean <= 0.0 {
                return Err(Error::Config(format!(
                    "category {} has a non-positive mean duration",
                    n.label
                )));
            }
            if n.std < 0.0 || n.speaker_std < 0.0 {
                return Err(Error::Config(format!("category {}: invalid spread", n.label)));
            }
        }
        Ok(())
    }

    fn labels(&self) -> impl Iterator<Item = &str> {
        self.signal
            .iter()
            .map(|s| s.label.as_str())
            .chain(self.noise.iter().map(|n| n.label.as_str()))
    }

    /// Same layout with every age effect removed.
    pub fn without_signal(&self) -> Self {
        let mut s = self.clone();
        for c in &mut s.signal {
            c.slope = 0.0;
            c.decay = 0.0;
        }
        s
    }

    pub fn signal_keys(&self) -> Vec<CategoryKey> {
        self.signal.iter().map(|s| CategoryKey::new(&s.label)).collect()
    }

    pub fn age_of(&self, speaker: usize) -> i64 {
        let [low, high] = self.age_range;
        low + (speaker as i64) % (high - low + 1)
    }
}

const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];
const CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH", "T",
    "TH", "V", "W", "Y", "Z", "ZH",
];

fn spread(i: usize, lo: f64, hi: f64, n: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64
}

/// 220 speakers over grades 0–10; silence, every vowel and every consonant
/// carry signal, and 20 word-position variants carry none.
pub fn default_spec() -> SynthSpec {
    let mut signal = vec![SignalCategory {
        label: "SIL".into(),
        base_mean: 0.30,
        slope: -0.01,
        std0: 0.03,
        speaker_std0: 0.006,
        decay: 0.04,
    }];
    let families = [(&VOWELS[..], 0.11, 0.17), (&CONSONANTS[..], 0.06, 0.11)];
    for (symbols, lo, hi) in families {
        for (i, v) in symbols.iter().enumerate() {
            let base = spread(i, lo, hi, symbols.len());
            signal.push(SignalCategory {
                label: (*v).into(),
                base_mean: base,
                slope: -0.03 * base,
                std0: 0.08 * base,
                speaker_std0: 0.02 * base,
                decay: 0.04,
            });
        }
    }
    let mut noise = Vec::new();
    for (i, v) in VOWELS.iter().take(10).enumerate() {
        noise.push(NoiseCategory {
            label: format!("{v}_B"),
            mean: spread(i, 0.08, 0.14, 10),
            std: 0.02,
            speaker_std: 0.005,
        });
    }
    for (i, c) in CONSONANTS.iter().take(10).enumerate() {
        noise.push(NoiseCategory {
            label: format!("{c}_E"),
            mean: spread(i, 0.05, 0.10, 10),
            std: 0.015,
            speaker_std: 0.004,
        });
    }
    SynthSpec {
        n_speakers: 220,
        age_range: [0, 10],
        speaker_age_std0: 0.75,
        signal,
        noise,
        occurrences: [20, 40],
        seed: 42,
    }
}

/// Signal only in `SIL` and four vowels; the aggregates are diluted by many
/// age-independent categories.
pub fn planted_spec() -> SynthSpec {
    let mut spec = default_spec();
    let planted = ["SIL", "AA", "IY", "ER", "OW"];
    let mut signal = Vec::new();
    let mut noise = Vec::new();
    for s in spec.signal {
        if planted.contains(&s.label.as_str()) {
            signal.push(s);
        } else {
            noise.push(NoiseCategory {
                label: s.label,
                mean: s.base_mean * 0.8,
                std: s.std0 * 0.7,
                speaker_std: 0.1 * s.base_mean,
            });
        }
    }
    spec.signal = signal;
    spec.noise = noise;
    spec
}

struct Draw {
    mean: f64,
    std: f64,
}

fn frames(rng: &mut impl Rng, d: &Draw) -> i64 {
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = rng.sample(StandardNormal);
        let x = d.mean + d.std * z;
        let f = (x / BIN_WIDTH).round() as i64;
        if f >= MIN_FRAMES {
            return f;
        }
    }
    MIN_FRAMES
}

/// Standard-normal developmental offsets, centred within each age bucket so
/// that bucket means follow the population trend.
fn developmental_offsets(spec: &SynthSpec) -> Vec<f64> {
    let mut z: Vec<f64> = (0..spec.n_speakers)
        .map(|i| rng::stream(spec.seed, &[i as u64, DEVELOPMENT_KEY]).sample(StandardNormal))
        .collect();
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for (i, v) in z.iter().enumerate() {
        let e = sums.entry(spec.age_of(i)).or_default();
        e.0 += v;
        e.1 += 1;
    }
    for (i, v) in z.iter_mut().enumerate() {
        let (s, n) = sums[&spec.age_of(i)];
        *v -= s / n as f64;
    }
    z
}

fn speaker_segments(
    spec: &SynthSpec,
    index: usize,
    speaker_id: &str,
    development: f64,
) -> Result<Vec<AlignmentSegment>> {
    let classes = PhoneClassTable::arpabet();
    let mut rng = rng::stream(spec.seed, &[index as u64]);
    let age = spec.age_of(index);
    let steps = (age - spec.age_range[0]) as i32;

    let mut tokens: Vec<(usize, i64)> = Vec::new();
    let mut labels = Vec::new();
    for s in &spec.signal {
        let shrink = (1.0 - s.decay).powi(steps);
        let z: f64 = rng.sample(StandardNormal);
        let offset = spec.speaker_age_std0 * shrink * development;
        let mean = s.base_mean + s.slope * (age as f64 + offset) + s.speaker_std0 * shrink * z;
        labels.push(s.label.as_str());
        push_tokens(&mut rng, &mut tokens, labels.len() - 1, spec.occurrences, &Draw { mean, std: s.std0 * shrink });
    }
    for n in &spec.noise {
        let z: f64 = rng.sample(StandardNormal);
        let mean = n.mean + n.speaker_std * z;
        labels.push(n.label.as_str());
        push_tokens(&mut rng, &mut tokens, labels.len() - 1, spec.occurrences, &Draw { mean, std: n.std });
    }
    tokens.shuffle(&mut rng);

    let parsed: Vec<_> = labels.iter().map(|l| classes.parse(l)).collect::<Result<_>>()?;
    let mut segments = Vec::with_capacity(tokens.len());
    for (u, chunk) in tokens.chunks(SEGMENTS_PER_UTTERANCE).enumerate() {
        let utterance_id = format!("{speaker_id}-u{:03}", u + 1);
        let mut t = 0i64;
        for &(l, f) in chunk {
            segments.push(AlignmentSegment {
                utterance_id: utterance_id.clone(),
                speaker_id: speaker_id.to_string(),
                channel: 1,
                start: t as f64 / 100.0,
                duration: f as f64 / 100.0,
                raw_label: labels[l].to_string(),
                label: parsed[l].clone(),
            });
            t += f;
        }
    }
    Ok(segments)
}

fn push_tokens(rng: &mut impl Rng, out: &mut Vec<(usize, i64)>, label: usize, occ: [usize; 2], d: &Draw) {
    let k = rng.random_range(occ[0]..=occ[1]);
    for _ in 0..k {
        out.push((label, frames(rng, d)));
    }
}

/// Generate the corpus described by `spec`. Speakers are `spkNNNN`.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let width = spec.n_speakers.to_string().len().max(4);
    let development = developmental_offsets(spec);
    let speakers = (0..spec.n_speakers)
        .into_par_iter()
        .map(|i| {
            let speaker_id = format!("spk{i:0width$}");
            let segments = speaker_segments(spec, i, &speaker_id, development[i])?;
            Ok(SpeakerSegments {
                record: SpeakerRecord {
                    speaker_id,
                    age_value: spec.age_of(i) as f64,
                    age_unit: AgeUnit::Grade,
                    utterance_prefix: None,
                },
                segments,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { speakers })
}

/// Write one `<speaker>.ctm` per speaker and `manifest.csv` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in &corpus.speakers {
        let path = dir.join(format!("{}.ctm", s.record.speaker_id));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        write_ctm(&mut f, &s.segments)
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("manifest.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
    write_manifest(&mut f, &corpus.records())
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub age: i64,
    pub bin: i64,
    pub count: usize,
}

/// 10 ms bin counts of one category per age bucket. Every bucket gets a row
/// for each bin between the lowest and highest occupied bin overall.
pub fn export_histogram(
    table: &DurationTable,
    records: &[SpeakerRecord],
    category: &CategoryKey,
) -> Result<Vec<HistogramRow>> {
    let mut counts: BTreeMap<i64, BTreeMap<i64, usize>> = BTreeMap::new();
    for r in records {
        let bucket = counts.entry(r.age_unit.bucket(r.age_value)).or_default();
        if let Some(d) = table.get(&r.speaker_id, category) {
            for &x in d {
                *bucket.entry(bin_index(x)).or_default() += 1;
            }
        }
    }
    let occupied = counts.values().flat_map(|b| b.keys().copied());
    let (lo, hi) = occupied.fold((i64::MAX, i64::MIN), |(lo, hi), b| (lo.min(b), hi.max(b)));
    if lo > hi {
        return Err(Error::Config(format!("category {category} has no durations")));
    }
    Ok(counts
        .iter()
        .flat_map(|(&age, bins)| {
            (lo..=hi).map(move |bin| HistogramRow {
                age,
                bin,
                count: bins.get(&bin).copied().unwrap_or(0),
            })
        })
        .collect())
}

pub fn write_histogram_csv<W: Write>(mut w: W, rows: &[HistogramRow]) -> std::io::Result<()> {
    writeln!(w, "age,bin_start,bin_end,count")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.2},{:.2},{}",
            r.age,
            r.bin as f64 * BIN_WIDTH,
            (r.bin + 1) as f64 * BIN_WIDTH,
            r.count
        )?;
    }
    Ok(())
}

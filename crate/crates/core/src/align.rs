//! Forced-alignment input: CTM files and the speaker manifest.
//!
//! CTM lines are `<utterance_id> <channel> <start> <duration> <phone_label>`;
//! `;;` lines are comments. The speaker of an utterance is the part of its id
//! before the first `-`, unless a manifest row declares an `utterance_prefix`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phone::{PhoneClassTable, PhoneLabel};

/// Segments within one utterance may overlap by at most this much (seconds).
pub const OVERLAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSegment {
    pub utterance_id: String,
    pub speaker_id: String,
    pub channel: u8,
    pub start: f64,
    pub duration: f64,
    pub raw_label: String,
    pub label: PhoneLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeUnit {
    Grade,
    Years,
}

impl AgeUnit {
    /// Integer bucket an age falls into for per-age reporting.
    pub fn bucket(self, age: f64) -> i64 {
        match self {
            AgeUnit::Grade => age.round() as i64,
            AgeUnit::Years => age.floor() as i64,
        }
    }
}

impl fmt::Display for AgeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgeUnit::Grade => "grade",
            AgeUnit::Years => "years",
        })
    }
}

impl std::str::FromStr for AgeUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grade" => Ok(AgeUnit::Grade),
            "years" => Ok(AgeUnit::Years),
            other => Err(Error::Manifest(format!("unknown age unit `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub age_value: f64,
    pub age_unit: AgeUnit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSegments {
    pub record: SpeakerRecord,
    pub segments: Vec<AlignmentSegment>,
}

/// Speakers in manifest order, each with at least one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub speakers: Vec<SpeakerSegments>,
}

impl Corpus {
    pub fn records(&self) -> Vec<SpeakerRecord> {
        self.speakers.iter().map(|s| s.record.clone()).collect()
    }

    pub fn n_segments(&self) -> usize {
        self.speakers.iter().map(|s| s.segments.len()).sum()
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

/// Maps utterance ids to speaker ids.
#[derive(Debug, Clone, Default)]
pub struct SpeakerResolver {
    // Longest prefix first.
    prefixes: Vec<(String, String)>,
}

impl SpeakerResolver {
    pub fn from_records(records: &[SpeakerRecord]) -> Self {
        let mut prefixes: Vec<(String, String)> = records
            .iter()
            .filter_map(|r| {
                r.utterance_prefix
                    .as_ref()
                    .map(|p| (p.clone(), r.speaker_id.clone()))
            })
            .collect();
        prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Self { prefixes }
    }

    pub fn speaker_of(&self, utterance_id: &str) -> String {
        for (prefix, speaker) in &self.prefixes {
            if utterance_id.starts_with(prefix.as_str()) {
                return speaker.clone();
            }
        }
        match utterance_id.split_once('-') {
            Some((head, _)) => head.to_string(),
            None => utterance_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CtmOptions {
    pub classes: PhoneClassTable,
    /// Skip zero/negative durations with a warning instead of failing.
    pub skip_nonpositive: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CtmParse {
    pub segments: Vec<AlignmentSegment>,
    pub warnings: Vec<String>,
}

pub fn parse_ctm<R: BufRead>(
    reader: R,
    options: &CtmOptions,
    resolver: &SpeakerResolver,
) -> Result<CtmParse> {
    let mut out = CtmParse::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                lineno,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let channel: u8 = fields[1]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad channel `{}`", fields[1])))?;
        let start: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad start `{}`", fields[2])))?;
        let duration: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad duration `{}`", fields[3])))?;
        if !start.is_finite() || start < 0.0 {
            return Err(Error::parse(lineno, format!("bad start `{}`", fields[2])));
        }
        if !duration.is_finite() {
            return Err(Error::parse(lineno, format!("bad duration `{}`", fields[3])));
        }
        if duration <= 0.0 {
            if options.skip_nonpositive {
                out.warnings
                    .push(format!("line {lineno}: skipped non-positive duration {duration}"));
                continue;
            }
            return Err(Error::NonPositiveDuration {
                line: lineno,
                duration,
            });
        }
        let label = options.classes.parse(fields[4]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        out.segments.push(AlignmentSegment {
            utterance_id: fields[0].to_string(),
            speaker_id: resolver.speaker_of(fields[0]),
            channel,
            start,
            duration,
            raw_label: fields[4].to_string(),
            label,
        });
    }
    Ok(out)
}

/// Serialize segments as CTM with two-decimal times.
pub fn write_ctm<W: Write>(mut w: W, segments: &[AlignmentSegment]) -> std::io::Result<()> {
    for s in segments {
        writeln!(
            w,
            "{} {} {:.2} {:.2} {}",
            s.utterance_id, s.channel, s.start, s.duration, s.raw_label
        )?;
    }
    Ok(())
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<SpeakerRecord>> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((i, Err(e))) => return Err(Error::parse(i + 1, e.to_string())),
            None => return Err(Error::Manifest("missing header".into())),
        }
    };
    let columns: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[..3] != ["speaker_id", "age_value", "age_unit"] {
        return Err(Error::Manifest(format!(
            "header must start with speaker_id,age_value,age_unit (got `{}`)",
            header.trim()
        )));
    }
    let prefix_col = columns.iter().position(|c| *c == "utterance_prefix");

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Manifest(format!(
                "line {lineno}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let speaker_id = fields[0];
        if !valid_id(speaker_id) {
            return Err(Error::Manifest(format!(
                "line {lineno}: invalid speaker id `{speaker_id}`"
            )));
        }
        let age_value: f64 = fields[1].parse().map_err(|_| {
            Error::Manifest(format!("line {lineno}: bad age value `{}`", fields[1]))
        })?;
        let age_unit: AgeUnit = fields[2].parse()?;
        if !age_value.is_finite() || age_value < 0.0 {
            return Err(Error::Manifest(format!(
                "line {lineno}: negative age {age_value}"
            )));
        }
        match age_unit {
            AgeUnit::Grade if age_value.fract() != 0.0 || age_value > 12.0 => {
                return Err(Error::Manifest(format!(
                    "line {lineno}: grade must be a whole number 0-12, got {age_value}"
                )));
            }
            AgeUnit::Years if age_value <= 0.0 => {
                return Err(Error::Manifest(format!(
                    "line {lineno}: age in years must be positive"
                )));
            }
            _ => {}
        }
        if !seen.insert(speaker_id.to_string()) {
            return Err(Error::Manifest(format!(
                "line {lineno}: duplicate speaker id `{speaker_id}`"
            )));
        }
        let utterance_prefix = prefix_col
            .map(|c| fields[c])
            .filter(|p| !p.is_empty())
            .map(str::to_string);
        records.push(SpeakerRecord {
            speaker_id: speaker_id.to_string(),
            age_value,
            age_unit,
            utterance_prefix,
        });
    }
    Ok(records)
}

pub fn write_manifest<W: Write>(mut w: W, records: &[SpeakerRecord]) -> std::io::Result<()> {
    let with_prefix = records.iter().any(|r| r.utterance_prefix.is_some());
    if with_prefix {
        writeln!(w, "speaker_id,age_value,age_unit,utterance_prefix")?;
    } else {
        writeln!(w, "speaker_id,age_value,age_unit")?;
    }
    for r in records {
        write!(w, "{},{},{}", r.speaker_id, r.age_value, r.age_unit)?;
        if with_prefix {
            write!(w, ",{}", r.utterance_prefix.as_deref().unwrap_or(""))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// Check that segments of each utterance, sorted by start, do not overlap
/// beyond [`OVERLAP_TOLERANCE`].
pub fn check_overlaps(segments: &[AlignmentSegment]) -> Result<()> {
    let mut by_utt: BTreeMap<(&str, u8), Vec<(f64, f64)>> = BTreeMap::new();
    for s in segments {
        by_utt
            .entry((s.utterance_id.as_str(), s.channel))
            .or_default()
            .push((s.start, s.duration));
    }
    for ((utt, _), mut spans) in by_utt {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in spans.windows(2) {
            let end = pair[0].0 + pair[0].1;
            let overlap = end - pair[1].0;
            if overlap > OVERLAP_TOLERANCE {
                return Err(Error::Overlap {
                    utterance: utt.to_string(),
                    start: pair[1].0,
                    overlap,
                });
            }
        }
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufReader::new(f))
}

/// Parse every CTM file (concurrently) and join segments to manifest records.
pub fn load_corpus(
    ctm_paths: &[PathBuf],
    manifest_path: &Path,
    options: &CtmOptions,
) -> Result<LoadedCorpus> {
    let records = parse_manifest(read_file(manifest_path)?)?;
    let resolver = SpeakerResolver::from_records(&records);

    let parsed: Vec<Result<CtmParse>> = ctm_paths
        .par_iter()
        .map(|p| {
            parse_ctm(read_file(p)?, options, &resolver).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse {
                    line,
                    msg: format!("{}: {msg}", p.display()),
                },
                other => other,
            })
        })
        .collect();

    let mut warnings = Vec::new();
    let mut segments = Vec::new();
    for (path, result) in ctm_paths.iter().zip(parsed) {
        let p = result?;
        warnings.extend(p.warnings.into_iter().map(|w| format!("{}: {w}", path.display())));
        segments.extend(p.segments);
    }
    let loaded = join_segments(records, segments)?;
    warnings.extend(loaded.warnings);
    Ok(LoadedCorpus {
        corpus: loaded.corpus,
        warnings,
    })
}

/// Group parsed segments under their manifest speakers.
pub fn join_segments(
    records: Vec<SpeakerRecord>,
    segments: Vec<AlignmentSegment>,
) -> Result<LoadedCorpus> {
    check_overlaps(&segments)?;
    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.speaker_id.as_str(), i))
        .collect();
    let mut unknown = BTreeSet::new();
    let mut grouped: Vec<Vec<AlignmentSegment>> = vec![Vec::new(); records.len()];
    for seg in segments {
        match index.get(seg.speaker_id.as_str()) {
            Some(&i) => grouped[i].push(seg),
            None => {
                unknown.insert(seg.speaker_id);
            }
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownSpeakers(unknown.into_iter().collect()));
    }

    let mut warnings = Vec::new();
    let speakers: Vec<SpeakerSegments> = records
        .into_iter()
        .zip(grouped)
        .filter_map(|(record, segments)| {
            if segments.is_empty() {
                warnings.push(format!(
                    "speaker {} has no segments; dropped",
                    record.speaker_id
                ));
                None
            } else {
                Some(SpeakerSegments { record, segments })
            }
        })
        .collect();
    if speakers.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(LoadedCorpus {
        corpus: Corpus { speakers },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phone::{PhoneClass, Position};

    fn parse(text: &str, skip: bool) -> Result<CtmParse> {
        let opts = CtmOptions {
            skip_nonpositive: skip,
            ..Default::default()
        };
        parse_ctm(text.as_bytes(), &opts, &SpeakerResolver::default())
    }

    #[test]
    fn parses_one_line() {
        let p = parse("spk007-u1 1 0.25 0.09 T_I\n", false).unwrap();
        assert_eq!(p.segments.len(), 1);
        let s = &p.segments[0];
        assert_eq!(s.utterance_id, "spk007-u1");
        assert_eq!(s.speaker_id, "spk007");
        assert_eq!(s.channel, 1);
        assert_eq!(s.start, 0.25);
        assert_eq!(s.duration, 0.09);
        assert_eq!(s.label.base, "T");
        assert_eq!(s.label.position, Position::Intermediate);
        assert_eq!(s.label.class, PhoneClass::Consonant);
    }

    #[test]
    fn skips_comments_and_blanks() {
        let p = parse(";; comment\n\n   \n", false).unwrap();
        assert!(p.segments.is_empty());
    }

    #[test]
    fn zero_duration_skip_mode_warns() {
        let text = "a-1 1 0.00 0.10 T_I\na-1 1 0.10 0.00 T_I\na-1 1 0.10 0.05 SIL\na-1 1 0.15 0.05 K\n";
        let p = parse(text, true).unwrap();
        assert_eq!(p.segments.len(), 3);
        assert_eq!(p.warnings.len(), 1);
        assert!(matches!(
            parse(text, false),
            Err(Error::NonPositiveDuration { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse("a-1 1 0.0 0.1\n", false),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse(";;x\na-1 1 zero 0.1 T\n", false),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse("a-1 1 0.0 abc T\n", false),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_rows() {
        let m = parse_manifest("speaker_id,age_value,age_unit\nk12,0,grade\nados_031,7.25,years\n".as_bytes()).unwrap();
        assert_eq!(m[0].age_value, 0.0);
        assert_eq!(m[0].age_unit, AgeUnit::Grade);
        assert_eq!(m[1].age_value, 87.0 / 12.0);
        assert_eq!(m[1].age_unit, AgeUnit::Years);

        let dup = parse_manifest("speaker_id,age_value,age_unit\na,1,grade\na,2,grade\n".as_bytes());
        assert!(matches!(dup, Err(Error::Manifest(m)) if m.contains("duplicate")));
        let unit = parse_manifest("speaker_id,age_value,age_unit\na,1,months\n".as_bytes());
        assert!(matches!(unit, Err(Error::Manifest(m)) if m.contains("unit")));
        let neg = parse_manifest("speaker_id,age_value,age_unit\na,-1,years\n".as_bytes());
        assert!(matches!(neg, Err(Error::Manifest(m)) if m.contains("negative")));
        let grade = parse_manifest("speaker_id,age_value,age_unit\na,2.5,grade\n".as_bytes());
        assert!(grade.is_err());
    }

    #[test]
    fn manifest_prefix_overrides_speaker() {
        let m = parse_manifest(
            "speaker_id,age_value,age_unit,utterance_prefix\nkid1,3,grade,ogi_0042\nkid2,4,grade,\n"
                .as_bytes(),
        )
        .unwrap();
        let r = SpeakerResolver::from_records(&m);
        assert_eq!(r.speaker_of("ogi_0042_utt7"), "kid1");
        assert_eq!(r.speaker_of("kid2-u1"), "kid2");
        assert_eq!(r.speaker_of("loner"), "loner");
    }

    fn seg(utt: &str, start: f64, dur: f64) -> AlignmentSegment {
        AlignmentSegment {
            utterance_id: utt.into(),
            speaker_id: utt.split('-').next().unwrap().into(),
            channel: 1,
            start,
            duration: dur,
            raw_label: "T_I".into(),
            label: crate::phone::parse_phone_label("T_I").unwrap(),
        }
    }

    fn rec(id: &str) -> SpeakerRecord {
        SpeakerRecord {
            speaker_id: id.into(),
            age_value: 1.0,
            age_unit: AgeUnit::Grade,
            utterance_prefix: None,
        }
    }

    #[test]
    fn join_drops_silent_speakers_and_rejects_unknown() {
        let segs = vec![seg("a-1", 0.0, 0.1), seg("b-1", 0.0, 0.1)];
        let l = join_segments(vec![rec("a"), rec("b"), rec("c")], segs.clone()).unwrap();
        let ids: Vec<_> = l.corpus.speakers.iter().map(|s| s.record.speaker_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(l.warnings.len(), 1);
        assert!(l.warnings[0].contains('c'));

        let mut more = segs;
        more.push(seg("d-1", 0.0, 0.1));
        assert!(matches!(
            join_segments(vec![rec("a"), rec("b")], more),
            Err(Error::UnknownSpeakers(v)) if v == ["d"]
        ));
        assert!(matches!(
            join_segments(vec![rec("a")], vec![]),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn overlap_tolerance() {
        assert!(check_overlaps(&[seg("a-1", 0.0, 0.1005), seg("a-1", 0.1, 0.1)]).is_ok());
        assert!(matches!(
            check_overlaps(&[seg("a-1", 0.1, 0.1), seg("a-1", 0.0, 0.12)]),
            Err(Error::Overlap { .. })
        ));
        // Different utterances never conflict.
        assert!(check_overlaps(&[seg("a-1", 0.0, 0.5), seg("a-2", 0.0, 0.5)]).is_ok());
    }
}

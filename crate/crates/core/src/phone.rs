//! Phone labels and the category families durations are pooled into.
//!
//! A raw alignment label such as `AH1_B` carries a base symbol, an optional
//! lexical stress digit and an optional word-position suffix. Each occurrence
//! is expanded into every category it belongs to: the position-dependent
//! phone, the position-independent phone, and the global pools
//! (`NONSILENCE`, `VOWELS`, `CONSONANTS`). Silence and noise labels form
//! their own single-key categories.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Begin,
    Intermediate,
    End,
    Singleton,
    None,
}

impl Position {
    fn suffix(self) -> Option<char> {
        match self {
            Position::Begin => Some('B'),
            Position::Intermediate => Some('I'),
            Position::End => Some('E'),
            Position::Singleton => Some('S'),
            Position::None => None,
        }
    }

    fn from_suffix(c: char) -> Option<Self> {
        match c {
            'B' => Some(Position::Begin),
            'I' => Some(Position::Intermediate),
            'E' => Some(Position::End),
            'S' => Some(Position::Singleton),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stress {
    None,
    Unstressed,
    Primary,
    Secondary,
}

impl Stress {
    fn digit(self) -> Option<char> {
        match self {
            Stress::None => None,
            Stress::Unstressed => Some('0'),
            Stress::Primary => Some('1'),
            Stress::Secondary => Some('2'),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneClass {
    Vowel,
    Consonant,
    Silence,
    SpokenNoise,
    OtherNoise,
}

impl PhoneClass {
    pub fn is_speech(self) -> bool {
        matches!(self, PhoneClass::Vowel | PhoneClass::Consonant)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhoneLabel {
    pub base: String,
    pub position: Position,
    pub stress: Stress,
    pub class: PhoneClass,
}

const ARPABET_VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

const ARPABET_CONSONANTS: [&str; 24] = [
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH",
    "T", "TH", "V", "W", "Y", "Z", "ZH",
];

/// Symbol → class lookup. Lookups are case-insensitive.
#[derive(Debug, Clone)]
pub struct PhoneClassTable {
    classes: HashMap<String, PhoneClass>,
}

impl Default for PhoneClassTable {
    fn default() -> Self {
        Self::arpabet()
    }
}

impl PhoneClassTable {
    pub fn arpabet() -> Self {
        let mut classes = HashMap::new();
        for v in ARPABET_VOWELS {
            classes.insert(v.to_string(), PhoneClass::Vowel);
        }
        for c in ARPABET_CONSONANTS {
            classes.insert(c.to_string(), PhoneClass::Consonant);
        }
        classes.insert("SIL".into(), PhoneClass::Silence);
        classes.insert("SPN".into(), PhoneClass::SpokenNoise);
        classes.insert("NSN".into(), PhoneClass::OtherNoise);
        Self { classes }
    }

    /// Add or replace entries, e.g. from a JSON override file.
    pub fn extend(&mut self, overrides: impl IntoIterator<Item = (String, PhoneClass)>) {
        for (sym, class) in overrides {
            self.classes.insert(sym.to_ascii_uppercase(), class);
        }
    }

    /// Load the built-in table extended with a JSON `{"symbol": "class"}` map.
    pub fn with_override_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: HashMap<String, PhoneClass> = serde_json::from_str(&text)?;
        let mut table = Self::arpabet();
        table.extend(map);
        Ok(table)
    }

    pub fn class_of(&self, symbol: &str) -> Option<PhoneClass> {
        self.classes.get(&symbol.to_ascii_uppercase()).copied()
    }

    /// Parse a raw label of the form `BASE[0|1|2][_B|_I|_E|_S]`.
    pub fn parse(&self, raw: &str) -> Result<PhoneLabel> {
        if raw.is_empty() {
            return Err(Error::InvalidLabel {
                label: raw.into(),
                msg: "empty label".into(),
            });
        }
        let mut rest = raw;
        let mut position = Position::None;
        if let Some((head, tail)) = raw.rsplit_once('_') {
            let mut chars = tail.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if let Some(p) = Position::from_suffix(c.to_ascii_uppercase()) {
                    position = p;
                    rest = head;
                }
            }
        }

        // Reserved symbols and table overrides win over stress parsing so that
        // symbols ending in a digit can be registered directly.
        if let Some(class) = self.class_of(rest) {
            return self.finish(raw, rest, position, Stress::None, class);
        }

        let (base, stress) = match rest.as_bytes().last() {
            Some(b'0') => (&rest[..rest.len() - 1], Stress::Unstressed),
            Some(b'1') => (&rest[..rest.len() - 1], Stress::Primary),
            Some(b'2') => (&rest[..rest.len() - 1], Stress::Secondary),
            _ => (rest, Stress::None),
        };
        let class = self
            .class_of(base)
            .ok_or_else(|| Error::UnknownPhone(base.to_string()))?;
        self.finish(raw, base, position, stress, class)
    }

    fn finish(
        &self,
        raw: &str,
        base: &str,
        position: Position,
        stress: Stress,
        class: PhoneClass,
    ) -> Result<PhoneLabel> {
        if stress != Stress::None && class != PhoneClass::Vowel {
            return Err(Error::InvalidLabel {
                label: raw.into(),
                msg: "stress marker on a non-vowel".into(),
            });
        }
        let base = match class {
            PhoneClass::Silence => "SIL".to_string(),
            PhoneClass::SpokenNoise => "SPN".to_string(),
            PhoneClass::OtherNoise => "NSN".to_string(),
            _ => base.to_ascii_uppercase(),
        };
        // Silence and noise carry no word position even if the aligner wrote one.
        let position = if class.is_speech() {
            position
        } else {
            Position::None
        };
        Ok(PhoneLabel {
            base,
            position,
            stress,
            class,
        })
    }
}

/// Parse with the built-in ARPAbet table.
pub fn parse_phone_label(raw: &str) -> Result<PhoneLabel> {
    PhoneClassTable::arpabet().parse(raw)
}

/// Name of a duration category: a phone, a position-dependent phone, or one
/// of the pooled aggregates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryKey(pub String);

impl CategoryKey {
    pub const NONSILENCE: &'static str = "NONSILENCE";
    pub const VOWELS: &'static str = "VOWELS";
    pub const CONSONANTS: &'static str = "CONSONANTS";

    pub fn new(s: impl Into<String>) -> Self {
        CategoryKey(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_aggregate(&self) -> bool {
        matches!(
            self.0.as_str(),
            Self::NONSILENCE | Self::VOWELS | Self::CONSONANTS
        )
    }
}

impl fmt::Display for CategoryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CategoryKey {
    fn from(s: &str) -> Self {
        CategoryKey(s.to_string())
    }
}

/// Every category a single occurrence of `label` contributes its duration to.
pub fn expand_categories(label: &PhoneLabel, with_stress: bool) -> BTreeSet<CategoryKey> {
    let mut keys = BTreeSet::new();
    match label.class {
        PhoneClass::Silence => {
            keys.insert(CategoryKey::new("SIL"));
        }
        PhoneClass::SpokenNoise => {
            keys.insert(CategoryKey::new("SPN"));
        }
        PhoneClass::OtherNoise => {
            keys.insert(CategoryKey::new("NSN"));
        }
        PhoneClass::Vowel | PhoneClass::Consonant => {
            let mut symbol = label.base.clone();
            if with_stress {
                if let Some(d) = label.stress.digit() {
                    symbol.push(d);
                    keys.insert(CategoryKey::new(label.base.clone()));
                }
            }
            if let Some(p) = label.position.suffix() {
                keys.insert(CategoryKey::new(format!("{symbol}_{p}")));
            }
            keys.insert(CategoryKey::new(symbol));
            keys.insert(CategoryKey::new(CategoryKey::NONSILENCE));
            keys.insert(CategoryKey::new(if label.class == PhoneClass::Vowel {
                CategoryKey::VOWELS
            } else {
                CategoryKey::CONSONANTS
            }));
        }
    }
    keys
}

/// The ordered set of categories forming the feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneInventory {
    pub keys: Vec<CategoryKey>,
    pub with_stress: bool,
    pub min_speaker_fraction: f64,
}

impl PhoneInventory {
    /// Build from an explicit key list (sorted and deduplicated).
    pub fn from_keys(
        keys: impl IntoIterator<Item = CategoryKey>,
        with_stress: bool,
        min_speaker_fraction: f64,
    ) -> Self {
        let set: BTreeSet<CategoryKey> = keys.into_iter().collect();
        Self {
            keys: set.into_iter().collect(),
            with_stress,
            min_speaker_fraction,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: &CategoryKey) -> Option<usize> {
        self.keys.binary_search(key).ok()
    }

    pub fn same_layout(&self, other: &PhoneInventory) -> bool {
        self.keys == other.keys
    }
}

pub fn build_inventory(
    corpus: &Corpus,
    with_stress: bool,
    min_speaker_fraction: f64,
) -> Result<PhoneInventory> {
    if corpus.speakers.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut speaker_counts: HashMap<CategoryKey, usize> = HashMap::new();
    for speaker in &corpus.speakers {
        let mut seen = BTreeSet::new();
        for seg in &speaker.segments {
            seen.extend(expand_categories(&seg.label, with_stress));
        }
        for key in seen {
            *speaker_counts.entry(key).or_default() += 1;
        }
    }
    let n = corpus.speakers.len() as f64;
    let keys = speaker_counts
        .into_iter()
        .filter(|(k, c)| k.is_aggregate() || *c as f64 / n >= min_speaker_fraction)
        .map(|(k, _)| k);
    let inventory = PhoneInventory::from_keys(keys, with_stress, min_speaker_fraction);
    if inventory.is_empty() {
        return Err(Error::EmptyInventory);
    }
    Ok(inventory)
}

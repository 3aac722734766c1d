//! Big Five trait space, the twenty agent personas and prompt headers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseEnumError;

/// One of the five Big Five dimensions, in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraitDimension {
    #[serde(rename = "EXT")]
    Extroversion,
    #[serde(rename = "AGR")]
    Agreeableness,
    #[serde(rename = "OPE")]
    Openness,
    #[serde(rename = "CON")]
    Conscientiousness,
    #[serde(rename = "NEU")]
    Neuroticism,
}

impl TraitDimension {
    /// Canonical ordering used by every report.
    pub const ALL: [TraitDimension; 5] = [
        TraitDimension::Extroversion,
        TraitDimension::Agreeableness,
        TraitDimension::Openness,
        TraitDimension::Conscientiousness,
        TraitDimension::Neuroticism,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TraitDimension::Extroversion => "EXT",
            TraitDimension::Agreeableness => "AGR",
            TraitDimension::Openness => "OPE",
            TraitDimension::Conscientiousness => "CON",
            TraitDimension::Neuroticism => "NEU",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraitDimension::Extroversion => "Extroversion",
            TraitDimension::Agreeableness => "Agreeableness",
            TraitDimension::Openness => "Openness",
            TraitDimension::Conscientiousness => "Conscientiousness",
            TraitDimension::Neuroticism => "Neuroticism",
        }
    }

    /// Position in [`TraitDimension::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TraitDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TraitDimension {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraitDimension::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(s) || t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseEnumError::new("trait", s))
    }
}

/// Whether a label denotes the trait itself or its opposite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    pub fn code(self) -> &'static str {
        match self {
            Polarity::Positive => "POSITIVE",
            Polarity::Negative => "NEGATIVE",
        }
    }

    fn short(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Polarity {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Positive),
            "negative" | "neg" => Ok(Polarity::Negative),
            _ => Err(ParseEnumError::new("polarity", s)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    A,
    B,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::A, Gender::B];

    pub fn code(self) -> &'static str {
        match self {
            Gender::A => "A",
            Gender::B => "B",
        }
    }
}

/// A (trait, polarity) pair: one of the ten classification targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraitClass {
    pub trait_dim: TraitDimension,
    pub polarity: Polarity,
}

impl TraitClass {
    pub fn new(trait_dim: TraitDimension, polarity: Polarity) -> Self {
        Self {
            trait_dim,
            polarity,
        }
    }

    /// All ten classes; index `2 * trait + (0 for positive, 1 for negative)`.
    pub fn all() -> impl Iterator<Item = TraitClass> {
        TraitDimension::ALL.into_iter().flat_map(|t| {
            Polarity::ALL
                .into_iter()
                .map(move |p| TraitClass::new(t, p))
        })
    }

    pub fn index(self) -> usize {
        2 * self.trait_dim.index()
            + match self.polarity {
                Polarity::Positive => 0,
                Polarity::Negative => 1,
            }
    }

    pub fn from_index(index: usize) -> Option<TraitClass> {
        TraitClass::all().nth(index)
    }
}

impl fmt::Display for TraitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.trait_dim.code(), self.polarity.short())
    }
}

/// Adjective description of a trait pole, exactly as printed in the
/// reference table (casing and trailing punctuation included).
pub fn trait_description(trait_dim: TraitDimension, polarity: Polarity) -> &'static str {
    use Polarity::*;
    use TraitDimension::*;
    match (trait_dim, polarity) {
        (Neuroticism, Positive) => "Anxious, depressed, angry, and insecure",
        (Neuroticism, Negative) => "Calm, poised, and emotionally stable.",
        (Openness, Positive) => "Intellectual, imaginative, sensitive, and open-minded.",
        (Openness, Negative) => "down-to-earth, insensitive, and conventional.",
        (Agreeableness, Positive) => "good-natured, compliant, modest, gentle, and cooperative.",
        (Agreeableness, Negative) => "irritable, ruthless, suspicious, and inflexible.",
        (Conscientiousness, Positive) => {
            "careful, thorough, responsible, organized, and scrupulous."
        }
        (Conscientiousness, Negative) => "irresponsible, disorganized, and unscrupulous.",
        (Extroversion, Positive) => "sociable, talkative, assertive, and active.",
        (Extroversion, Negative) => "retiring, reserved, and cautious.",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub id: String,
    #[serde(rename = "trait")]
    pub trait_dim: TraitDimension,
    pub polarity: Polarity,
    pub gender: Gender,
    pub description: String,
}

impl PersonaSpec {
    pub fn new(trait_dim: TraitDimension, polarity: Polarity, gender: Gender) -> Self {
        Self {
            id: format!(
                "{}-{}-{}",
                trait_dim.code(),
                polarity.short(),
                gender.code()
            ),
            trait_dim,
            polarity,
            gender,
            description: trait_description(trait_dim, polarity).to_owned(),
        }
    }

    pub fn class(&self) -> TraitClass {
        TraitClass::new(self.trait_dim, self.polarity)
    }
}

/// The full set of twenty personas, ordered trait × polarity × gender.
pub fn enumerate_personas() -> Vec<PersonaSpec> {
    TraitClass::all()
        .flat_map(|c| {
            Gender::ALL
                .into_iter()
                .map(move |g| PersonaSpec::new(c.trait_dim, c.polarity, g))
        })
        .collect()
}

pub fn find_persona(id: &str) -> Option<PersonaSpec> {
    enumerate_personas().into_iter().find(|p| p.id == id)
}

/// JSON document listing every persona.
pub fn personas_json() -> String {
    serde_json::to_string_pretty(&enumerate_personas()).expect("persona set serializes")
}

pub const HEADER_PREFIX: &str = "The following is your conversation with your friend";

/// Rendering options for the prompt header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeaderStyle {
    /// Insert the gender clause (`your friend, a man, who is ...`).
    pub gender_clause: bool,
    pub gender_a_clause: String,
    pub gender_b_clause: String,
    /// Lower-case the first letter of the description, as the prompts in
    /// the worked generation examples do.
    pub lowercase_initial: bool,
}

impl Default for HeaderStyle {
    fn default() -> Self {
        Self {
            gender_clause: true,
            gender_a_clause: "a man".to_owned(),
            gender_b_clause: "a woman".to_owned(),
            lowercase_initial: false,
        }
    }
}

impl HeaderStyle {
    /// The exact form used by the two worked generation examples.
    pub fn plain() -> Self {
        Self {
            gender_clause: false,
            lowercase_initial: true,
            ..Self::default()
        }
    }
}

pub fn build_prompt_header(persona: &PersonaSpec, style: &HeaderStyle) -> String {
    let description = if style.lowercase_initial {
        lowercase_first(&persona.description)
    } else {
        persona.description.clone()
    };
    if style.gender_clause {
        let clause = match persona.gender {
            Gender::A => &style.gender_a_clause,
            Gender::B => &style.gender_b_clause,
        };
        format!("{HEADER_PREFIX}, {clause}, who is {description}")
    } else {
        format!("{HEADER_PREFIX}, who is {description}")
    }
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Recovers the (trait, polarity) whose description appears in a prompt
/// header line. Matching ignores the case of the description's first letter.
pub fn class_from_header(header: &str) -> Option<TraitClass> {
    let rest = header.strip_prefix(HEADER_PREFIX)?;
    let (_, description) = rest.split_once("who is ")?;
    let description = description.trim_end();
    TraitClass::all().find(|c| {
        lowercase_first(trait_description(c.trait_dim, c.polarity)) == lowercase_first(description)
    })
}

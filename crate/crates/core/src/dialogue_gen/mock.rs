use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CompletionProvider, ProviderParams};
use crate::error::{Error, Result};
use crate::hashing::{fnv1a, splitmix};
use crate::personas::{class_from_header, Polarity, TraitClass, TraitDimension};

/// Characteristic keywords for each class. Every mock completion carries
/// at least one keyword of its persona's class.
pub fn lexicon(class: TraitClass) -> &'static [&'static str] {
    use Polarity::*;
    use TraitDimension::*;
    match (class.trait_dim, class.polarity) {
        (Extroversion, Positive) => &[
            "sociable",
            "talkative",
            "assertive",
            "active",
            "outgoing",
            "energetic",
            "partying",
            "crowds",
        ],
        (Extroversion, Negative) => &[
            "retiring",
            "reserved",
            "cautious",
            "quiet",
            "alone",
            "shy",
            "solitude",
            "introverted",
        ],
        (Agreeableness, Positive) => &[
            "good-natured",
            "compliant",
            "modest",
            "gentle",
            "cooperative",
            "kind",
            "helpful",
            "forgiving",
        ],
        (Agreeableness, Negative) => &[
            "irritable",
            "ruthless",
            "suspicious",
            "inflexible",
            "rude",
            "stubborn",
            "hostile",
            "distrustful",
        ],
        (Openness, Positive) => &[
            "intellectual",
            "imaginative",
            "sensitive",
            "open-minded",
            "curious",
            "creative",
            "artistic",
            "philosophical",
        ],
        (Openness, Negative) => &[
            "down-to-earth",
            "insensitive",
            "conventional",
            "practical",
            "traditional",
            "routine",
            "ordinary",
            "realistic",
        ],
        (Conscientiousness, Positive) => &[
            "careful",
            "thorough",
            "responsible",
            "organized",
            "scrupulous",
            "planned",
            "diligent",
            "punctual",
        ],
        (Conscientiousness, Negative) => &[
            "irresponsible",
            "disorganized",
            "unscrupulous",
            "careless",
            "messy",
            "lazy",
            "late",
            "sloppy",
        ],
        (Neuroticism, Positive) => &[
            "anxious",
            "depressed",
            "angry",
            "insecure",
            "worried",
            "nervous",
            "stressed",
            "upset",
        ],
        (Neuroticism, Negative) => &[
            "calm",
            "poised",
            "emotionally stable",
            "relaxed",
            "composed",
            "peaceful",
            "steady",
            "serene",
        ],
    }
}

const TEMPLATES: &[&str] = &[
    "I guess I'm just {} about it.",
    "Honestly, I feel {} when that happens.",
    "You know me, always {}.",
    "People say I'm {} and they're right.",
    "I'd try to stay {} and see what happens.",
    "Being {} is how I deal with things like that.",
    "That makes me feel {}.",
    "Well, I tend to get {} in moments like this.",
    "My advice? Be {}.",
    "I'm the {} type, so I'd handle it my way.",
    "It's {} of me, but that's what I'd do.",
    "Sounds like something a {} person would say.",
];

/// Topic-neutral filler shared by all classes.
pub const NEUTRAL_SENTENCES: &[&str] = &[
    "That reminds me of last week.",
    "Did you eat lunch yet?",
    "It's been a long day.",
    "Let me think about that.",
    "What happened next?",
    "Tell me more.",
    "Anyway, how are you otherwise?",
    "That's a lot to take in.",
];

/// Deterministic stand-in for a large language model. It recognises the
/// persona from the prompt header and writes short replies built from that
/// persona's keyword lexicon.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn complete(&self, prompt: &str, params: &ProviderParams) -> Result<String> {
        let header = prompt.lines().next().unwrap_or_default();
        let class = class_from_header(header)
            .ok_or_else(|| Error::Provider("prompt has no recognizable persona header".into()))?;
        let call_seed = params.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ fnv1a(call_seed, prompt.as_bytes())));

        let words = lexicon(class);
        let mut sentences = Vec::with_capacity(3);
        let keyword_sentences = if rng.gen_bool(0.5) { 2 } else { 1 };
        for _ in 0..keyword_sentences {
            let template = TEMPLATES.choose(&mut rng).expect("templates non-empty");
            let word = words.choose(&mut rng).expect("lexicon non-empty");
            sentences.push(template.replace("{}", word));
        }
        if rng.gen_bool(0.5) {
            let filler = NEUTRAL_SENTENCES
                .choose(&mut rng)
                .expect("filler non-empty");
            sentences.push((*filler).to_owned());
        }
        sentences.shuffle(&mut rng);
        Ok(format!(" {}", sentences.join(" ")))
    }
}

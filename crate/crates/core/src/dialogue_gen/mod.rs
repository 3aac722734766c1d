//! Persona-conditioned conversation simulation and extraction of
//! trait-labeled agent messages.
//!
//! A conversation alternates `You:` (user) and `Friend:` (agent) lines under
//! a persona header. Each agent turn is produced by asking a
//! [`CompletionProvider`] to continue the rendered context after a trailing
//! `Friend:` cue.

mod mock;
mod remote;

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::CorpusSource;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::personas::{
    build_prompt_header, enumerate_personas, HeaderStyle, PersonaSpec, Polarity, TraitClass,
    TraitDimension,
};

pub use mock::{lexicon, MockProvider, NEUTRAL_SENTENCES};
pub use remote::{RateLimiter, RemoteProvider, RemoteProviderConfig};

pub const USER_TAG: &str = "You:";
pub const AGENT_TAG: &str = "Friend:";

/// Opaque sampling parameters passed through to a provider.
pub type ProviderParams = BTreeMap<String, serde_json::Value>;

/// A text-completion backend.
pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    /// True when equal `(prompt, params)` always produce equal completions.
    fn is_deterministic(&self) -> bool;

    fn complete(&self, prompt: &str, params: &ProviderParams) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub speaker: Speaker,
    pub text: String,
    pub turn_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub persona_id: String,
    pub turns: Vec<ConversationTurn>,
    pub provider_name: String,
    pub created_at: DateTime<Utc>,
}

impl Conversation {
    pub fn agent_turns(&self) -> impl Iterator<Item = &ConversationTurn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Agent)
    }
}

/// One utterance with its gold label (generated data) or without one
/// (ingested real-world data).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMessage {
    pub id: String,
    pub text: String,
    #[serde(rename = "trait")]
    pub trait_dim: Option<TraitDimension>,
    pub polarity: Option<Polarity>,
    pub source: CorpusSource,
    pub conversation_id: Option<String>,
    pub turn_index: Option<u32>,
}

impl LabeledMessage {
    pub fn class(&self) -> Option<TraitClass> {
        Some(TraitClass::new(self.trait_dim?, self.polarity?))
    }
}

/// Supplies the user side of a conversation.
pub trait UserTurnSource {
    fn next_user_turn(&mut self, history: &[ConversationTurn]) -> Result<String>;
}

/// Replays a fixed list of utterances.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    lines: Vec<String>,
    cursor: usize,
}

impl ScriptedUser {
    pub fn new(lines: Vec<String>) -> Self {
        Self { lines, cursor: 0 }
    }
}

impl UserTurnSource for ScriptedUser {
    fn next_user_turn(&mut self, _history: &[ConversationTurn]) -> Result<String> {
        let line = self.lines.get(self.cursor).cloned().ok_or_else(|| {
            Error::Contract(format!("user script exhausted after {} lines", self.cursor))
        })?;
        self.cursor += 1;
        Ok(line)
    }
}

/// Reads user turns from stdin.
pub struct InteractiveUser;

impl UserTurnSource for InteractiveUser {
    fn next_user_turn(&mut self, history: &[ConversationTurn]) -> Result<String> {
        if let Some(last) = history.last() {
            println!("{AGENT_TAG} {}", last.text);
        }
        print!("{USER_TAG} ");
        std::io::Write::flush(&mut std::io::stdout()).map_err(|e| Error::io("<stdout>", e))?;
        let mut line = String::new();
        std::io::stdin()
            .read_line(&mut line)
            .map_err(|e| Error::io("<stdin>", e))?;
        let line = line.trim().to_owned();
        if line.is_empty() {
            return Err(Error::Invalid("empty user turn".into()));
        }
        Ok(line)
    }
}

/// Reads a user-script file: UTF-8, one utterance per line, blank lines ignored.
pub fn read_user_script(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_user_script(&text))
}

pub fn parse_user_script(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Built-in pool of 100 user utterances (ten scripts of ten exchanges).
pub fn default_user_lines() -> Vec<String> {
    parse_user_script(include_str!("../../resources/user_lines.txt"))
}

fn check_alternation(history: &[ConversationTurn]) -> Result<()> {
    for (i, turn) in history.iter().enumerate() {
        let expected = if i % 2 == 0 {
            Speaker::User
        } else {
            Speaker::Agent
        };
        if turn.speaker != expected {
            return Err(Error::Contract(format!(
                "turn {i} is {:?}, expected {expected:?}",
                turn.speaker
            )));
        }
        if turn.text.trim().is_empty() {
            return Err(Error::Contract(format!("turn {i} has empty text")));
        }
    }
    Ok(())
}

/// Renders the prompt for the next agent completion: header, the
/// alternating transcript, and a trailing `Friend:` cue.
pub fn render_context(
    persona: &PersonaSpec,
    history: &[ConversationTurn],
    style: &HeaderStyle,
) -> Result<String> {
    check_alternation(history)?;
    match history.last() {
        Some(t) if t.speaker == Speaker::User => {}
        _ => {
            return Err(Error::Contract(
                "history must be non-empty and end with a user turn".into(),
            ))
        }
    }
    let mut out = build_prompt_header(persona, style);
    for turn in history {
        let tag = match turn.speaker {
            Speaker::User => USER_TAG,
            Speaker::Agent => AGENT_TAG,
        };
        out.push('\n');
        out.push_str(tag);
        out.push(' ');
        out.push_str(&turn.text);
    }
    out.push('\n');
    out.push_str(AGENT_TAG);
    Ok(out)
}

/// Strips an echoed `Friend:` tag and cuts the completion at the first line
/// that starts a new speaker turn. Returns `None` if nothing is left.
pub fn clean_completion(raw: &str) -> Option<String> {
    let mut text = raw.trim_start();
    if let Some(rest) = text.strip_prefix(AGENT_TAG) {
        text = rest;
    }
    let mut kept = Vec::new();
    for line in text.lines() {
        let l = line.trim_start();
        if l.starts_with(USER_TAG) || l.starts_with(AGENT_TAG) {
            break;
        }
        kept.push(line.trim());
    }
    let joined = kept
        .into_iter()
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    (!joined.is_empty()).then_some(joined)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
        }
    }
}

/// Per-conversation settings.
#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub conversation_id: String,
    pub seed: u64,
    pub header_style: HeaderStyle,
    pub params: ProviderParams,
    pub retry: RetryPolicy,
}

impl SimulationOptions {
    pub fn new(conversation_id: impl Into<String>, seed: u64) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            seed,
            header_style: HeaderStyle::default(),
            params: ProviderParams::new(),
            retry: RetryPolicy::default(),
        }
    }
}

fn complete_with_retry(
    provider: &dyn CompletionProvider,
    prompt: &str,
    params: &ProviderParams,
    retry: &RetryPolicy,
) -> (usize, Result<String>) {
    let attempts = if provider.is_deterministic() {
        1
    } else {
        retry.attempts.max(1)
    };
    let mut last = Err(Error::Provider("no attempt made".into()));
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(Duration::from_millis(retry.base_delay_ms << (attempt - 1)));
        }
        last = provider.complete(prompt, params).and_then(|raw| {
            clean_completion(&raw).ok_or_else(|| Error::Provider("empty completion".into()))
        });
        if last.is_ok() {
            return (attempt + 1, last);
        }
        log::warn!("{}: attempt {} failed", provider.name(), attempt + 1);
    }
    (attempts, last)
}

/// Runs `n_exchanges` user/agent exchanges against `persona`.
pub fn simulate_conversation(
    provider: &dyn CompletionProvider,
    user_source: &mut dyn UserTurnSource,
    persona: &PersonaSpec,
    n_exchanges: usize,
    options: &SimulationOptions,
) -> Result<Conversation> {
    if n_exchanges == 0 {
        return Err(Error::Invalid("n_exchanges must be at least 1".into()));
    }
    let mut conversation = Conversation {
        id: options.conversation_id.clone(),
        persona_id: persona.id.clone(),
        turns: Vec::with_capacity(2 * n_exchanges),
        provider_name: provider.name().to_owned(),
        created_at: Utc::now(),
    };
    let mut params = options.params.clone();
    params.insert("seed".into(), options.seed.into());

    for _ in 0..n_exchanges {
        let user_text = user_source.next_user_turn(&conversation.turns)?;
        if user_text.trim().is_empty() {
            return Err(Error::Contract("user source produced an empty turn".into()));
        }
        conversation.turns.push(ConversationTurn {
            speaker: Speaker::User,
            text: user_text.trim().to_owned(),
            turn_index: conversation.turns.len() as u32,
        });
        let prompt = render_context(persona, &conversation.turns, &options.header_style)?;
        let (attempts, result) = complete_with_retry(provider, &prompt, &params, &options.retry);
        match result {
            Ok(text) => conversation.turns.push(ConversationTurn {
                speaker: Speaker::Agent,
                text,
                turn_index: conversation.turns.len() as u32,
            }),
            Err(e) => {
                return Err(Error::Generation {
                    conversation_id: conversation.id.clone(),
                    attempts,
                    message: e.to_string(),
                    partial: Box::new(conversation),
                })
            }
        }
    }
    Ok(conversation)
}

/// One labeled message per agent turn, carrying the persona's class.
pub fn extract_labeled_messages(
    conversation: &Conversation,
    persona: &PersonaSpec,
) -> Result<Vec<LabeledMessage>> {
    if conversation.persona_id != persona.id {
        return Err(Error::Contract(format!(
            "conversation {} belongs to persona {}, not {}",
            conversation.id, conversation.persona_id, persona.id
        )));
    }
    Ok(conversation
        .agent_turns()
        .map(|t| LabeledMessage {
            id: format!("{}-{:02}", conversation.id, t.turn_index),
            text: t.text.clone(),
            trait_dim: Some(persona.trait_dim),
            polarity: Some(persona.polarity),
            source: CorpusSource::Generated,
            conversation_id: Some(conversation.id.clone()),
            turn_index: Some(t.turn_index),
        })
        .collect())
}

/// How many conversations to run and with which user scripts.
#[derive(Debug, Clone)]
pub struct CorpusPlan {
    /// Pool of user utterances; script `k` uses lines `k*exchanges .. (k+1)*exchanges`.
    pub user_lines: Vec<String>,
    pub scripts: usize,
    pub exchanges: usize,
    pub seed: u64,
    pub header_style: HeaderStyle,
    pub params: ProviderParams,
    pub retry: RetryPolicy,
}

impl CorpusPlan {
    pub fn message_count(&self) -> usize {
        self.scripts * enumerate_personas().len() * self.exchanges
    }

    fn script(&self, k: usize) -> Result<Vec<String>> {
        let start = k * self.exchanges;
        let end = start + self.exchanges;
        if end > self.user_lines.len() {
            return Err(Error::Invalid(format!(
                "plan needs {} user lines ({} scripts x {} exchanges), pool has {}",
                self.scripts * self.exchanges,
                self.scripts,
                self.exchanges,
                self.user_lines.len()
            )));
        }
        Ok(self.user_lines[start..end].to_vec())
    }
}

pub fn conversation_id(script: usize, persona: &PersonaSpec) -> String {
    format!("c{script:04}-{}", persona.id)
}

/// Runs every (script, persona) conversation of the plan on `workers`
/// threads and returns the labeled agent messages in plan order. Seeds are
/// derived from the conversation id, so the result does not depend on the
/// worker count when the provider is deterministic.
pub fn generate_corpus(
    provider: &dyn CompletionProvider,
    plan: &CorpusPlan,
    workers: usize,
) -> Result<Vec<LabeledMessage>> {
    if plan.scripts == 0 || plan.exchanges == 0 {
        return Err(Error::Invalid(
            "plan needs at least one script and one exchange".into(),
        ));
    }
    let personas = enumerate_personas();
    let mut jobs = Vec::with_capacity(plan.scripts * personas.len());
    for k in 0..plan.scripts {
        let script = plan.script(k)?;
        for p in &personas {
            jobs.push((conversation_id(k, p), script.clone(), p));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;

    let batches: Vec<Result<Vec<LabeledMessage>>> = pool.install(|| {
        jobs.par_iter()
            .map(|(id, script, persona)| {
                let mut options = SimulationOptions::new(id.clone(), derive_seed(plan.seed, id));
                options.header_style = plan.header_style.clone();
                options.params = plan.params.clone();
                options.retry = plan.retry.clone();
                let mut user = ScriptedUser::new(script.clone());
                let conversation =
                    simulate_conversation(provider, &mut user, persona, plan.exchanges, &options)?;
                extract_labeled_messages(&conversation, persona)
            })
            .collect()
    });

    let mut out = Vec::with_capacity(plan.message_count());
    for batch in batches {
        out.extend(batch?);
    }
    Ok(out)
}

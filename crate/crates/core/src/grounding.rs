//! Free-text action grounding.
//!
//! An utterance such as "grab some water from the water reservoir" is mapped
//! onto one member of the agent's admissible action set. Templates are picked
//! by verb synonyms; slot fillers are scored against object ids with a
//! [`SimilarityProvider`]. Anything below the threshold is rejected rather
//! than guessed.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::action::{ActionKind, Direction, HighLevelAction, Supply};
use crate::world::{ObjectKind, ObservationBundle};

/// Default rejection threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

/// Number of runner-up candidates kept in a [`MatchResult`].
const MAX_ALTERNATIVES: usize = 4;

/// Admissible actions for one agent plus the kind of every object they
/// reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub actions: BTreeSet<HighLevelAction>,
    pub kinds: BTreeMap<String, ObjectKind>,
}

impl AdmissibleSet {
    /// Every template instantiated over `kinds`, plus the four moves,
    /// Explore, StayIdle and Done.
    pub fn from_objects(kinds: BTreeMap<String, ObjectKind>) -> Self {
        let mut actions = BTreeSet::new();
        for direction in Direction::CARDINAL {
            actions.insert(HighLevelAction::Move { direction });
        }
        actions.insert(HighLevelAction::Explore);
        actions.insert(HighLevelAction::StayIdle);
        actions.insert(HighLevelAction::Done);
        let deposits: Vec<&String> =
            kinds.iter().filter(|(_, k)| matches!(k, ObjectKind::Deposit)).map(|(id, _)| id).collect();
        for (id, kind) in &kinds {
            actions.insert(HighLevelAction::NavigateTo { target: id.clone() });
            match kind {
                ObjectKind::Fire { .. } => {
                    for supply in [Supply::Water, Supply::Sand] {
                        actions.insert(HighLevelAction::UseSupply { fire: id.clone(), supply });
                    }
                }
                ObjectKind::Reservoir { .. } => {
                    actions.insert(HighLevelAction::GetSupplyFromReservoir { reservoir: id.clone() });
                }
                ObjectKind::Deposit => {
                    actions.insert(HighLevelAction::StoreSupply { deposit: id.clone() });
                    for supply in [Supply::Water, Supply::Sand] {
                        actions.insert(HighLevelAction::GetSupplyFromDeposit { deposit: id.clone(), supply });
                    }
                }
                ObjectKind::Person => {
                    actions.insert(HighLevelAction::Carry { person: id.clone() });
                    for d in &deposits {
                        actions.insert(HighLevelAction::DropOff { person: id.clone(), deposit: (*d).clone() });
                    }
                }
            }
        }
        Self { actions, kinds }
    }

    pub fn contains(&self, action: &HighLevelAction) -> bool {
        self.actions.contains(action)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Canonical forms, one per line, for prompt listings.
    pub fn listing(&self) -> Vec<String> {
        self.actions.iter().map(ToString::to_string).collect()
    }
}

/// Admissible set over the objects named in `obs` and everything the agent
/// has seen so far.
pub fn admissible_actions(obs: &ObservationBundle) -> AdmissibleSet {
    let mut kinds = obs.known.clone();
    for f in &obs.fires {
        kinds.entry(f.name.clone()).or_insert(ObjectKind::Fire { class: f.class });
    }
    for r in &obs.reservoirs {
        kinds.entry(r.name.clone()).or_insert(ObjectKind::Reservoir { supply: r.supply });
    }
    for d in &obs.deposits {
        kinds.entry(d.name.clone()).or_insert(ObjectKind::Deposit);
    }
    for p in &obs.persons {
        kinds.entry(p.name.clone()).or_insert(ObjectKind::Person);
    }
    AdmissibleSet::from_objects(kinds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub action: HighLevelAction,
    pub score: f64,
    /// Runner-up candidates, best first.
    pub alternatives: Vec<(HighLevelAction, f64)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no admissible match for `{text}`")]
pub struct UngroundableAction {
    pub text: String,
    pub best: Option<(HighLevelAction, f64)>,
}

/// String similarity in `[0, 1]` between a piece of an utterance and an
/// object id, both already normalized.
pub trait SimilarityProvider: Send + Sync {
    fn name(&self) -> &str;
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// max(token Jaccard, character-trigram cosine).
#[derive(Debug, Clone, Copy, Default)]
pub struct Lexical;

impl SimilarityProvider for Lexical {
    fn name(&self) -> &str {
        "lexical"
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        token_jaccard(a, b).max(trigram_cosine(a, b))
    }
}

/// Cosine between feature-hashed character-trigram embeddings. Stands in
/// for a learned sentence encoder.
#[derive(Debug, Clone, Copy)]
pub struct HashedTrigram {
    pub dims: usize,
}

impl Default for HashedTrigram {
    fn default() -> Self {
        Self { dims: 256 }
    }
}

impl HashedTrigram {
    pub fn embed(&self, s: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims];
        for (g, n) in trigrams(s) {
            // FNV-1a
            let mut h: u64 = 0xcbf29ce484222325;
            for b in g.bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x100000001b3);
            }
            v[(h % self.dims as u64) as usize] += n as f64;
        }
        v
    }
}

impl SimilarityProvider for HashedTrigram {
    fn name(&self) -> &str {
        "hashed-trigram"
    }

    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (x, y) = (self.embed(a), self.embed(b));
        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        let ny = y.iter().map(|q| q * q).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            (dot / (nx * ny)).clamp(0.0, 1.0)
        }
    }
}

/// Looks up a provider by its configured name.
pub fn provider_by_name(name: &str) -> Option<Box<dyn SimilarityProvider>> {
    match name {
        "lexical" => Some(Box::new(Lexical)),
        "hashed-trigram" => Some(Box::new(HashedTrigram::default())),
        _ => None,
    }
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let x: BTreeSet<&str> = a.split_whitespace().collect();
    let y: BTreeSet<&str> = b.split_whitespace().collect();
    let union = x.union(&y).count();
    if union == 0 {
        return 0.0;
    }
    x.intersection(&y).count() as f64 / union as f64
}

/// Trigram counts of ` s ` (space padded).
fn trigrams(s: &str) -> HashMap<String, usize> {
    let chars: Vec<char> = format!(" {s} ").chars().collect();
    let mut out = HashMap::new();
    for w in chars.windows(3) {
        *out.entry(w.iter().collect::<String>()).or_insert(0) += 1;
    }
    out
}

pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    let (x, y) = (trigrams(a), trigrams(b));
    let dot: usize = x.iter().filter_map(|(g, n)| y.get(g).map(|m| n * m)).sum();
    let nx = x.values().map(|n| n * n).sum::<usize>() as f64;
    let ny = y.values().map(|n| n * n).sum::<usize>() as f64;
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    dot as f64 / (nx.sqrt() * ny.sqrt())
}

/// Light suffix stripping so inflections share a form.
pub fn stem(word: &str) -> String {
    let w = word;
    let n = w.len();
    let mut s = if n > 5 && w.ends_with("ing") {
        undouble(&w[..n - 3])
    } else if n > 4 && (w.ends_with("ied") || w.ends_with("ies")) {
        format!("{}y", &w[..n - 3])
    } else if n > 3 && w.ends_with("ed") {
        undouble(&w[..n - 2])
    } else if n > 3 && w.ends_with("es") {
        w[..n - 2].to_string()
    } else if n > 3 && w.ends_with('s') && !w.ends_with("ss") {
        w[..n - 1].to_string()
    } else {
        w.to_string()
    };
    if s.len() > 3 && s.ends_with('e') {
        s.pop();
    }
    s
}

fn undouble(s: &str) -> String {
    let b = s.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !matches!(b[n - 1], b'l' | b's' | b'z') && b[n - 1].is_ascii_alphabetic()
    {
        s[..n - 1].to_string()
    } else {
        s.to_string()
    }
}

/// Splits camelCase and letter/digit boundaries, lowercases, replaces
/// punctuation by spaces.
fn raw_tokens(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() * 2);
    let mut prev: Option<char> = None;
    for c in text.chars() {
        if let Some(p) = prev {
            let boundary = (p.is_lowercase() && c.is_uppercase())
                || (p.is_alphabetic() && c.is_ascii_digit())
                || (p.is_ascii_digit() && c.is_alphabetic());
            if boundary {
                spaced.push(' ');
            }
        }
        spaced.push(if c.is_alphanumeric() { c } else { ' ' });
        prev = Some(c);
    }
    spaced.to_lowercase().split_whitespace().map(str::to_string).collect()
}

const ALIASES: &[(&str, &str)] = &[
    ("victim", "person"),
    ("survivor", "person"),
    ("casualty", "person"),
    ("civilian", "person"),
    ("human", "person"),
    ("individual", "person"),
    ("blaze", "fire"),
    ("flame", "fire"),
    ("flames", "fire"),
    ("inferno", "fire"),
    ("lake", "reservoir"),
    ("pond", "reservoir"),
    ("well", "reservoir"),
    ("depot", "deposit"),
    ("base", "deposit"),
    ("shelter", "deposit"),
    ("dirt", "sand"),
    ("soil", "sand"),
    ("north", "up"),
    ("upward", "up"),
    ("upwards", "up"),
    ("south", "down"),
    ("downward", "down"),
    ("downwards", "down"),
    ("west", "left"),
    ("east", "right"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("first", "1"),
    ("second", "2"),
    ("third", "3"),
];

const STOPWORDS: &[&str] = &[
    "the", "a", "an", "to", "at", "from", "with", "on", "onto", "in", "into", "of", "some", "it", "them", "him",
    "her", "and", "then", "please", "toward", "towards", "for", "my", "your", "our", "this", "that", "s", "i", "we",
    "will", "should", "now", "next", "by", "using", "use", "unit", "units", "more", "over", "there", "nearby",
    "near", "closest", "nearest", "lost",
];

#[derive(Debug, Clone)]
struct Normalized {
    /// All stemmed tokens, for verb matching.
    full: Vec<String>,
    /// Stemmed tokens minus stopwords, for slot matching.
    content: Vec<String>,
}

fn normalize(text: &str) -> Normalized {
    let mut full = Vec::new();
    let mut content = Vec::new();
    let tokens = raw_tokens(text);
    let mut i = 0;
    while i < tokens.len() {
        let mut t = tokens[i].as_str();
        // Two-word aliases.
        if let Some(next) = tokens.get(i + 1) {
            let pair = match (t, next.as_str()) {
                ("safe", "zone") | ("drop", "zone") | ("safe", "area") | ("safety", "zone") => Some("deposit"),
                ("water", "source") => Some("water reservoir"),
                ("sand", "pit") => Some("sand reservoir"),
                _ => None,
            };
            if let Some(p) = pair {
                for w in p.split(' ') {
                    full.push(stem(w));
                    content.push(stem(w));
                }
                i += 2;
                continue;
            }
        }
        if let Some((_, to)) = ALIASES.iter().find(|(from, _)| *from == t) {
            t = to;
        }
        let s = stem(t);
        if !STOPWORDS.contains(&tokens[i].as_str()) {
            content.push(s.clone());
        }
        full.push(s);
        i += 1;
    }
    Normalized { full, content }
}

/// Normalized, space-joined form of an object id, e.g. `WaterReservoir_1`
/// becomes `water reservoir 1`.
pub fn normalize_id(id: &str) -> String {
    raw_tokens(id).iter().map(|t| stem(t)).collect::<Vec<_>>().join(" ")
}

/// Verb synonyms per template. `GetSupply` covers both source kinds.
const VERBS: &[(ActionKind, &[&str])] = &[
    (ActionKind::NavigateTo, &[
        "navigate", "go to", "go over to", "go toward", "move to", "move toward", "head to", "head toward",
        "head over to", "walk to", "walk toward", "travel to", "approach", "run to", "proceed to", "get to",
        "make way to", "get close to", "get near", "go near", "reach",
    ]),
    (ActionKind::Carry, &[
        "carry", "pick up", "lift", "grab", "rescue", "take", "hold", "evacuate", "save", "hoist", "attach",
    ]),
    (ActionKind::DropOff, &[
        "drop off", "drop", "deliver", "put down", "set down", "lower", "release", "leave", "bring",
    ]),
    (ActionKind::StoreSupply, &["store", "stash", "stock", "unload", "empty", "deposit supply", "stockpile"]),
    (ActionKind::UseSupply, &[
        "use", "extinguish", "put out", "douse", "spray", "pour", "throw", "apply", "dump", "fight", "smother",
        "quench", "splash", "suppress", "tackle", "attack", "using",
    ]),
    (ActionKind::GetSupply, &[
        "get", "fetch", "collect", "take", "grab", "refill", "fill", "obtain", "gather", "retrieve", "draw",
        "load", "pick up", "acquire", "scoop",
    ]),
    (ActionKind::Move, &["move", "step", "go", "walk", "head", "shift", "travel"]),
    (ActionKind::Explore, &[
        "explore", "search", "scout", "look around", "look for", "wander", "survey", "roam", "patrol",
    ]),
    (ActionKind::StayIdle, &[
        "stay idle", "idle", "wait", "do nothing", "stay", "remain", "rest", "pause", "hold position", "stand by",
        "standby", "no op", "noop",
    ]),
    (ActionKind::Done, &["done", "finish", "finished", "all complete", "task complete", "complete"]),
];

fn find_phrase(tokens: &[String], phrase: &[String]) -> Option<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return None;
    }
    tokens.windows(phrase.len()).position(|w| w == phrase)
}

#[derive(Debug, Clone)]
struct TemplateTable {
    verbs: Vec<(ActionKind, Vec<Vec<String>>)>,
}

impl TemplateTable {
    fn new() -> Self {
        let verbs = VERBS
            .iter()
            .map(|(kind, phrases)| {
                let stemmed = phrases.iter().map(|p| p.split(' ').map(stem).collect()).collect();
                (*kind, stemmed)
            })
            .collect();
        Self { verbs }
    }

    /// Earliest verb position per matched template.
    fn detect(&self, tokens: &[String]) -> BTreeMap<ActionKind, usize> {
        let mut out = BTreeMap::new();
        for (kind, phrases) in &self.verbs {
            if let Some(pos) = phrases.iter().filter_map(|p| find_phrase(tokens, p)).min() {
                out.insert(*kind, pos);
            }
        }
        out
    }
}

fn direction_word(tokens: &[String]) -> Option<Direction> {
    tokens.iter().find_map(|t| match t.as_str() {
        "up" => Some(Direction::Up),
        "down" => Some(Direction::Down),
        "left" => Some(Direction::Left),
        "right" => Some(Direction::Right),
        _ => None,
    })
}

/// Grounds free text against an admissible set.
pub struct Grounder {
    provider: Box<dyn SimilarityProvider>,
    threshold: f64,
    table: TemplateTable,
}

impl Default for Grounder {
    fn default() -> Self {
        Self::new(Box::new(Lexical), DEFAULT_THRESHOLD)
    }
}

impl std::fmt::Debug for Grounder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grounder")
            .field("provider", &self.provider.name())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl Grounder {
    pub fn new(provider: Box<dyn SimilarityProvider>, threshold: f64) -> Self {
        Self { provider, threshold, table: TemplateTable::new() }
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Best similarity between any window of `content` and the id.
    fn slot_score(&self, content: &[String], id: &str) -> f64 {
        let target = normalize_id(id);
        let width = target.split(' ').count() + 1;
        let mut best: f64 = 0.0;
        for len in 1..=width.min(content.len()) {
            for w in content.windows(len) {
                best = best.max(self.provider.similarity(&w.join(" "), &target));
            }
        }
        best
    }

    fn supply_score(mentioned: &BTreeSet<Supply>, supply: Supply, preferred: Option<Supply>) -> f64 {
        if mentioned.is_empty() {
            if preferred == Some(supply) {
                1.0
            } else {
                0.5
            }
        } else if mentioned.contains(&supply) {
            1.0
        } else {
            0.0
        }
    }

    fn score(&self, action: &HighLevelAction, norm: &Normalized, set: &AdmissibleSet) -> f64 {
        let content = &norm.content;
        let mentioned: BTreeSet<Supply> = content
            .iter()
            .filter_map(|t| match t.as_str() {
                "water" => Some(Supply::Water),
                "sand" => Some(Supply::Sand),
                _ => None,
            })
            .collect();
        let secondary = |s: f64| 0.75 + 0.25 * s;
        match action {
            HighLevelAction::Move { direction } => {
                if direction_word(content) == Some(*direction) {
                    1.0
                } else {
                    0.0
                }
            }
            HighLevelAction::NavigateTo { target } => self.slot_score(content, target),
            HighLevelAction::Carry { person } => self.slot_score(content, person),
            HighLevelAction::DropOff { person, deposit } => {
                self.slot_score(content, person) * secondary(self.slot_score(content, deposit))
            }
            HighLevelAction::StoreSupply { deposit } => self.slot_score(content, deposit),
            HighLevelAction::UseSupply { fire, supply } => {
                let preferred = match set.kinds.get(fire) {
                    Some(ObjectKind::Fire { class }) => Some(class.extinguisher()),
                    _ => None,
                };
                self.slot_score(content, fire) * secondary(Self::supply_score(&mentioned, *supply, preferred))
            }
            HighLevelAction::GetSupplyFromDeposit { deposit, supply } => {
                self.slot_score(content, deposit) * secondary(Self::supply_score(&mentioned, *supply, None))
            }
            HighLevelAction::GetSupplyFromReservoir { reservoir } => self.slot_score(content, reservoir),
            HighLevelAction::Explore | HighLevelAction::StayIdle | HighLevelAction::Done => 1.0,
        }
    }

    /// Maps `text` onto a member of `set`, or rejects it.
    pub fn ground(&self, text: &str, set: &AdmissibleSet) -> Result<MatchResult, UngroundableAction> {
        let reject = |best| UngroundableAction { text: text.to_string(), best };
        if text.trim().is_empty() {
            return Err(reject(None));
        }
        if let Ok(exact) = text.trim().trim_end_matches(['.', '!']).parse::<HighLevelAction>() {
            if exact.object_ids().iter().any(|id| !set.kinds.contains_key(*id)) || !set.contains(&exact) {
                return Err(reject(None));
            }
            return Ok(MatchResult { action: exact, score: 1.0, alternatives: Vec::new() });
        }
        let norm = normalize(text);
        let templates = self.table.detect(&norm.full);
        if templates.is_empty() {
            return Err(reject(None));
        }
        let mut ranked: Vec<(HighLevelAction, f64, usize)> = set
            .actions
            .iter()
            .filter_map(|a| templates.get(&a.kind()).map(|&pos| (a, pos)))
            .map(|(a, pos)| (a.clone(), self.score(a, &norm, set).clamp(0.0, 1.0), pos))
            .collect();
        // Quantize so that float noise cannot reorder genuine ties.
        ranked.sort_by_key(|(a, s, pos)| (Reverse((s * 1e9).round() as u64), *pos, a.clone()));
        let mut it = ranked.into_iter();
        let Some((action, score, _)) = it.next() else {
            return Err(reject(None));
        };
        if score < self.threshold {
            return Err(reject(Some((action, score))));
        }
        let alternatives = it.take(MAX_ALTERNATIVES).map(|(a, s, _)| (a, s)).collect();
        Ok(MatchResult { action, score, alternatives })
    }
}

/// [`Grounder::ground`] with the default lexical provider and threshold.
pub fn ground(text: &str, set: &AdmissibleSet) -> Result<MatchResult, UngroundableAction> {
    Grounder::default().ground(text, set)
}

/// One line of the utterance corpus: `utterance<TAB>expected_action`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub utterance: String,
    pub expected: HighLevelAction,
}

/// Parses a corpus file; blank lines and `#` comments are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusEntry>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (u, a) = line.split_once('\t').ok_or_else(|| format!("line {}: missing tab", n + 1))?;
        let expected = a.trim().parse().map_err(|e| format!("line {}: {e}", n + 1))?;
        out.push(CorpusEntry { utterance: u.trim().to_string(), expected });
    }
    Ok(out)
}

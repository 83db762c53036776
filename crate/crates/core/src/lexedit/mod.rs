//! Tokenization, lexicon-driven POS tagging and the four token edit actions.
//!
//! An edit is a `(kind, position)` pair. The 4 kinds times 32 positions form a
//! flat action space of 128 ids: `flat = kind_index * 32 + position`.
//! Positions always index the current token list, so after a `Remove@0` the
//! old token 1 becomes position 0.

mod lexicon;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::Lexicon;

/// Maximum editable token position (exclusive).
pub const MAX_POSITIONS: usize = 32;
/// Number of flat action ids.
pub const ACTION_SPACE: usize = 4 * MAX_POSITIONS;

#[derive(Debug, Error)]
pub enum LexError {
    #[error("claim is empty after tokenization")]
    EmptyClaim,
    #[error("illegal action {action} for claim of {len} tokens")]
    IllegalAction { action: EditAction, len: usize },
    #[error("flat action id {0} outside [0, 128)")]
    OutOfRange(usize),
    #[error("no synonym for {0:?}")]
    NoSynonym(String),
    #[error("{file}:{line}: {message}")]
    LexiconFormat {
        file: String,
        line: usize,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosCategory {
    Verb,
    Noun,
    Adjective,
    Adverb,
    StopWord,
    Other,
}

impl PosCategory {
    /// Lower wins when a word carries several tags.
    fn priority(self) -> u8 {
        match self {
            PosCategory::Verb => 0,
            PosCategory::Noun => 1,
            PosCategory::Adjective => 2,
            PosCategory::Adverb => 3,
            PosCategory::StopWord => 4,
            PosCategory::Other => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosCategory::Verb => "VERB",
            PosCategory::Noun => "NOUN",
            PosCategory::Adjective => "ADJ",
            PosCategory::Adverb => "ADV",
            PosCategory::StopWord => "STOP",
            PosCategory::Other => "OTHER",
        }
    }

    /// Edit kinds this category admits before lexicon checks.
    pub fn permits(self, kind: EditKind) -> bool {
        match self {
            PosCategory::Verb => true,
            PosCategory::Noun | PosCategory::Adjective | PosCategory::Adverb => {
                kind != EditKind::PresentTense
            }
            PosCategory::StopWord | PosCategory::Other => kind == EditKind::Remove,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditKind {
    SwapSynonym,
    AddSynonym,
    PresentTense,
    Remove,
}

impl EditKind {
    pub const ALL: [EditKind; 4] = [
        EditKind::SwapSynonym,
        EditKind::AddSynonym,
        EditKind::PresentTense,
        EditKind::Remove,
    ];

    pub fn index(self) -> usize {
        match self {
            EditKind::SwapSynonym => 0,
            EditKind::AddSynonym => 1,
            EditKind::PresentTense => 2,
            EditKind::Remove => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::SwapSynonym => "swap_synonym",
            EditKind::AddSynonym => "add_synonym",
            EditKind::PresentTense => "present_tense",
            EditKind::Remove => "remove",
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single edit: a kind applied at a token position below 32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EditAction {
    pub kind: EditKind,
    pub position: usize,
}

impl EditAction {
    pub fn new(kind: EditKind, position: usize) -> Result<Self, LexError> {
        if position >= MAX_POSITIONS {
            return Err(LexError::OutOfRange(kind.index() * MAX_POSITIONS + position));
        }
        Ok(EditAction { kind, position })
    }

    pub fn flatten(self) -> usize {
        self.kind.index() * MAX_POSITIONS + self.position
    }

    pub fn unflatten(flat: usize) -> Result<Self, LexError> {
        if flat >= ACTION_SPACE {
            return Err(LexError::OutOfRange(flat));
        }
        Ok(EditAction {
            kind: EditKind::from_index(flat / MAX_POSITIONS).expect("kind < 4"),
            position: flat % MAX_POSITIONS,
        })
    }
}

impl fmt::Display for EditAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.position)
    }
}

pub fn flatten_action(action: EditAction) -> usize {
    action.flatten()
}

pub fn unflatten_action(flat: usize) -> Result<EditAction, LexError> {
    EditAction::unflatten(flat)
}

/// The query state: surface tokens with their POS tags and applied edits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedClaim {
    claim_id: String,
    tokens: Vec<String>,
    pos: Vec<PosCategory>,
    edit_history: Vec<EditAction>,
}

impl TokenizedClaim {
    pub fn claim_id(&self) -> &str {
        &self.claim_id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos(&self) -> &[PosCategory] {
        &self.pos
    }

    pub fn edit_history(&self) -> &[EditAction] {
        &self.edit_history
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false for a constructed claim; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    pub fn with_claim_id(mut self, id: impl Into<String>) -> Self {
        self.claim_id = id.into();
        self
    }

    /// Rebuilds a claim from tokens, re-tagging each one.
    pub fn from_tokens(
        claim_id: impl Into<String>,
        tokens: Vec<String>,
        edit_history: Vec<EditAction>,
        lexicon: &Lexicon,
    ) -> Result<Self, LexError> {
        if tokens.is_empty() {
            return Err(LexError::EmptyClaim);
        }
        let pos = tokens.iter().map(|t| lexicon.tag(t)).collect();
        Ok(TokenizedClaim {
            claim_id: claim_id.into(),
            tokens,
            pos,
            edit_history,
        })
    }

    /// Lowercased token list; used as a state key.
    pub fn key(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.to_lowercase()).collect()
    }
}

fn is_connector(c: char) -> bool {
    matches!(c, '\'' | '’' | '-' | '_')
}

/// Whitespace split with punctuation detached. Letters, digits and connectors
/// (`'`, `-`, `_`) flanked by alphanumerics form words; any other
/// non-space character is a token of its own.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if c.is_alphanumeric() || (is_connector(c) && !word.is_empty() && next_alnum) {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

fn attaches_left(tok: &str) -> bool {
    matches!(tok, "." | "," | "!" | "?" | ";" | ":" | ")" | "]" | "}" | "%")
}

fn attaches_right(tok: &str) -> bool {
    matches!(tok, "(" | "[" | "{")
}

/// Joins tokens into text such that `split_tokens(detokenize(t)) == t`.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for tok in tokens {
        if !glue_next && !attaches_left(tok) {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = attaches_right(tok);
    }
    out
}

pub fn tokenize(text: &str, lexicon: &Lexicon) -> Result<TokenizedClaim, LexError> {
    TokenizedClaim::from_tokens("", split_tokens(text), Vec::new(), lexicon)
}

/// Actions permitted by POS gating and lexicon coverage, in flat-id order.
pub fn legal_actions(claim: &TokenizedClaim, lexicon: &Lexicon) -> Vec<EditAction> {
    let editable = claim.len().min(MAX_POSITIONS);
    let mut out = Vec::new();
    for kind in EditKind::ALL {
        for position in 0..editable {
            if is_legal(claim, EditAction { kind, position }, lexicon) {
                out.push(EditAction { kind, position });
            }
        }
    }
    out
}

/// Same as [`legal_actions`] but as a 128-entry mask indexed by flat id.
pub fn legal_mask(claim: &TokenizedClaim, lexicon: &Lexicon) -> [bool; ACTION_SPACE] {
    let mut mask = [false; ACTION_SPACE];
    for a in legal_actions(claim, lexicon) {
        mask[a.flatten()] = true;
    }
    mask
}

pub fn is_legal(claim: &TokenizedClaim, action: EditAction, lexicon: &Lexicon) -> bool {
    let p = action.position;
    if p >= MAX_POSITIONS || p >= claim.len() {
        return false;
    }
    let token = &claim.tokens[p];
    if !claim.pos[p].permits(action.kind) {
        return false;
    }
    match action.kind {
        EditKind::SwapSynonym | EditKind::AddSynonym => !lexicon.synonyms(token).is_empty(),
        EditKind::PresentTense => lexicon
            .verb_base(token)
            .is_some_and(|base| base != token.as_str()),
        EditKind::Remove => claim.len() > 1,
    }
}

pub fn apply_action(
    claim: &TokenizedClaim,
    action: EditAction,
    lexicon: &Lexicon,
) -> Result<TokenizedClaim, LexError> {
    if !is_legal(claim, action, lexicon) {
        return Err(LexError::IllegalAction {
            action,
            len: claim.len(),
        });
    }
    let p = action.position;
    let mut tokens = claim.tokens.clone();
    let mut pos = claim.pos.clone();
    match action.kind {
        EditKind::Remove => {
            tokens.remove(p);
            pos.remove(p);
        }
        EditKind::SwapSynonym => {
            let syn = lexicon.choose_synonym(&tokens[p])?.to_string();
            pos[p] = lexicon.tag(&syn);
            tokens[p] = syn;
        }
        EditKind::AddSynonym => {
            let syn = lexicon.choose_synonym(&tokens[p])?.to_string();
            pos.insert(p + 1, lexicon.tag(&syn));
            tokens.insert(p + 1, syn);
        }
        EditKind::PresentTense => {
            let base = lexicon
                .verb_base(&tokens[p])
                .expect("checked by is_legal")
                .to_string();
            pos[p] = lexicon.tag(&base);
            tokens[p] = base;
        }
    }
    let mut edit_history = claim.edit_history.clone();
    edit_history.push(action);
    Ok(TokenizedClaim {
        claim_id: claim.claim_id.clone(),
        tokens,
        pos,
        edit_history,
    })
}

pub fn choose_synonym<'a>(word: &str, lexicon: &'a Lexicon) -> Result<&'a str, LexError> {
    lexicon.choose_synonym(word)
}

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::{LexError, PosCategory};

const BUNDLED_SYNONYMS: &str = include_str!("../../data/lexicon/synonyms.tsv");
const BUNDLED_POS: &str = include_str!("../../data/lexicon/pos.tsv");
const BUNDLED_VERBS: &str = include_str!("../../data/lexicon/verbs.tsv");

/// Word tables backing POS tagging and the edit actions.
///
/// All keys are stored lowercase; lookups are case-insensitive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    synonyms: HashMap<String, Vec<String>>,
    pos_table: HashMap<String, Vec<PosCategory>>,
    verb_forms: HashMap<String, String>,
    stopwords: HashSet<String>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_tab<'a>(file: &str, lineno: usize, line: &'a str) -> Result<(&'a str, &'a str), LexError> {
    line.split_once('\t')
        .map(|(a, b)| (a.trim(), b.trim()))
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| LexError::LexiconFormat {
            file: file.to_string(),
            line: lineno,
            message: "expected `word<TAB>value`".to_string(),
        })
}

/// A synonym or base form must survive tokenization as exactly one token.
fn is_single_token(word: &str) -> bool {
    super::split_tokens(word).len() == 1
}

impl Lexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_SYNONYMS, BUNDLED_POS, BUNDLED_VERBS)
            .expect("bundled lexicon is well-formed")
    }

    /// Loads `synonyms.tsv`, `pos.tsv` and `verbs.tsv` from a directory.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, LexError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| LexError::Io {
                path: dir.join(name).display().to_string(),
                source: e,
            })
        };
        Self::from_tsv(&read("synonyms.tsv")?, &read("pos.tsv")?, &read("verbs.tsv")?)
    }

    pub fn from_tsv(synonyms: &str, pos: &str, verbs: &str) -> Result<Self, LexError> {
        let mut lex = Lexicon::default();
        for (lineno, line) in data_lines(synonyms) {
            let (word, list) = split_tab("synonyms.tsv", lineno, line)?;
            let word = word.to_lowercase();
            let entry = lex.synonyms.entry(word.clone()).or_default();
            for syn in list.split(',').map(|s| s.trim().to_lowercase()) {
                if syn.is_empty() || syn == word || entry.contains(&syn) || !is_single_token(&syn) {
                    continue;
                }
                entry.push(syn);
            }
        }
        lex.synonyms.retain(|_, v| !v.is_empty());

        for (lineno, line) in data_lines(pos) {
            let (word, tag) = split_tab("pos.tsv", lineno, line)?;
            let word = word.to_lowercase();
            let cat = match tag.to_ascii_uppercase().as_str() {
                "VERB" => PosCategory::Verb,
                "NOUN" => PosCategory::Noun,
                "ADJ" => PosCategory::Adjective,
                "ADV" => PosCategory::Adverb,
                "STOP" => {
                    lex.stopwords.insert(word.clone());
                    PosCategory::StopWord
                }
                other => {
                    return Err(LexError::LexiconFormat {
                        file: "pos.tsv".into(),
                        line: lineno,
                        message: format!("unknown tag {other:?}"),
                    })
                }
            };
            let tags = lex.pos_table.entry(word).or_default();
            if !tags.contains(&cat) {
                tags.push(cat);
            }
        }

        for (lineno, line) in data_lines(verbs) {
            let (inflected, base) = split_tab("verbs.tsv", lineno, line)?;
            let base = base.to_lowercase();
            if !is_single_token(&base) {
                return Err(LexError::LexiconFormat {
                    file: "verbs.tsv".into(),
                    line: lineno,
                    message: format!("base form {base:?} is not a single token"),
                });
            }
            lex.verb_forms.insert(inflected.to_lowercase(), base);
        }
        Ok(lex)
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.synonyms
            .get(&word.to_lowercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Present-simple form of an inflected verb, if listed.
    pub fn verb_base(&self, word: &str) -> Option<&str> {
        self.verb_forms.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    /// POS category using the priority Verb > Noun > Adjective > Adverb > StopWord > Other.
    /// Words listed as inflections in the verb table count as verbs.
    pub fn tag(&self, word: &str) -> PosCategory {
        let key = word.to_lowercase();
        let mut best = PosCategory::Other;
        if let Some(tags) = self.pos_table.get(&key) {
            for &t in tags {
                if t.priority() < best.priority() {
                    best = t;
                }
            }
        }
        if self.verb_forms.contains_key(&key) {
            best = PosCategory::Verb;
        }
        best
    }

    /// Deterministic synonym choice: the first entry in stored order.
    pub fn choose_synonym(&self, word: &str) -> Result<&str, LexError> {
        self.synonyms(word)
            .first()
            .map(String::as_str)
            .ok_or_else(|| LexError::NoSynonym(word.to_string()))
    }

    /// Every word that appears anywhere in the tables.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut words: HashSet<&str> = HashSet::new();
        words.extend(self.pos_table.keys().map(String::as_str));
        words.extend(self.stopwords.iter().map(String::as_str));
        for (k, v) in &self.synonyms {
            words.insert(k);
            words.extend(v.iter().map(String::as_str));
        }
        for (k, v) in &self.verb_forms {
            words.insert(k);
            words.insert(v);
        }
        let mut out: Vec<String> = words.into_iter().map(str::to_string).collect();
        out.sort();
        out
    }

    /// Words carrying the given tag in the POS table.
    pub fn words_tagged(&self, cat: PosCategory) -> Vec<String> {
        let mut out: Vec<String> = self
            .pos_table
            .iter()
            .filter(|(_, tags)| tags.contains(&cat))
            .map(|(w, _)| w.clone())
            .collect();
        out.sort();
        out
    }

    /// Inflected verb forms whose base is `base`, sorted.
    pub fn inflections_of(&self, base: &str) -> Vec<String> {
        let base = base.to_lowercase();
        let mut out: Vec<String> = self
            .verb_forms
            .iter()
            .filter(|(inf, b)| **b == base && **inf != base)
            .map(|(inf, _)| inf.clone())
            .collect();
        out.sort();
        out
    }

    pub fn insert_synonyms(&mut self, word: &str, syns: &[&str]) {
        let word = word.to_lowercase();
        let entry = self.synonyms.entry(word.clone()).or_default();
        for s in syns {
            let s = s.to_lowercase();
            if s != word && !entry.contains(&s) {
                entry.push(s);
            }
        }
        if entry.is_empty() {
            self.synonyms.remove(&word);
        }
    }

    pub fn insert_pos(&mut self, word: &str, cat: PosCategory) {
        let word = word.to_lowercase();
        if cat == PosCategory::StopWord {
            self.stopwords.insert(word.clone());
        }
        if cat != PosCategory::Other {
            let tags = self.pos_table.entry(word).or_default();
            if !tags.contains(&cat) {
                tags.push(cat);
            }
        }
    }

    pub fn insert_verb_form(&mut self, inflected: &str, base: &str) {
        self.verb_forms
            .insert(inflected.to_lowercase(), base.to_lowercase());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_multi_tags() {
        let lex = Lexicon::from_tsv(
            "# c\nflat\tlevel,even,flat\n",
            "is\tSTOP\nis\tVERB\nearth\tNOUN\n",
            "ran\trun\n",
        )
        .unwrap();
        assert_eq!(lex.synonyms("FLAT"), ["level", "even"]);
        assert_eq!(lex.tag("is"), PosCategory::Verb);
        assert_eq!(lex.tag("Earth"), PosCategory::Noun);
        assert_eq!(lex.tag("ran"), PosCategory::Verb);
        assert_eq!(lex.verb_base("Ran"), Some("run"));
        assert!(lex.is_stopword("is"));
    }

    #[test]
    fn rejects_bad_tag_with_line_number() {
        let err = Lexicon::from_tsv("", "# header\nfoo\tBAR\n", "").unwrap_err();
        match err {
            LexError::LexiconFormat { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bundled_lexicon_invariants() {
        let lex = Lexicon::bundled();
        for w in lex.vocabulary() {
            assert!(!lex.synonyms(&w).iter().any(|s| *s == w), "{w} lists itself");
            if let Some(b) = lex.verb_base(&w) {
                assert!(!b.is_empty());
            }
        }
        assert_eq!(lex.choose_synonym("flat").unwrap(), "level");
        assert!(matches!(lex.choose_synonym("texas"), Err(LexError::NoSynonym(_))));
    }
}

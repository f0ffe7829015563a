//! Dictionary pattern kinds.
//!
//! A pattern entry declares its `kind`; the kind is looked up in
//! [`matcher_kinds`] and compiles the entry text into a [`Matcher`].
//! Matchers always receive [`normalize`]d utterance text.

use std::fmt;
use std::sync::{Arc, OnceLock};

use regex::Regex;

use crate::error::{Error, Result};
use crate::registry::Registry;

pub trait Matcher: Send + Sync + fmt::Debug {
    fn is_match(&self, normalized: &str) -> bool;
}

pub trait MatcherKind: Send + Sync {
    fn compile(&self, pattern: &str) -> Result<Box<dyn Matcher>>;
}

/// Lowercases and collapses runs of whitespace to a single space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn matcher_kinds() -> &'static Registry<dyn MatcherKind> {
    static KINDS: OnceLock<Registry<dyn MatcherKind>> = OnceLock::new();
    KINDS.get_or_init(|| {
        let mut reg: Registry<dyn MatcherKind> = Registry::new("pattern kind");
        reg.register("keyword", Arc::new(KeywordKind));
        reg.register("regex", Arc::new(RegexKind));
        reg
    })
}

struct KeywordKind;

impl MatcherKind for KeywordKind {
    fn compile(&self, pattern: &str) -> Result<Box<dyn Matcher>> {
        let phrase = normalize(pattern);
        if phrase.is_empty() {
            return Err(Error::Schema("keyword pattern is empty".into()));
        }
        Ok(Box::new(KeywordMatcher { phrase }))
    }
}

/// Phrase containment; an alphanumeric edge of the phrase must sit on a word boundary.
#[derive(Debug)]
struct KeywordMatcher {
    phrase: String,
}

impl Matcher for KeywordMatcher {
    fn is_match(&self, text: &str) -> bool {
        let first_word = self.phrase.chars().next().is_some_and(char::is_alphanumeric);
        let last_word = self
            .phrase
            .chars()
            .next_back()
            .is_some_and(char::is_alphanumeric);
        text.match_indices(self.phrase.as_str()).any(|(start, m)| {
            let end = start + m.len();
            let before_ok =
                !first_word || !text[..start].chars().next_back().is_some_and(char::is_alphanumeric);
            let after_ok = !last_word || !text[end..].chars().next().is_some_and(char::is_alphanumeric);
            before_ok && after_ok
        })
    }
}

struct RegexKind;

impl MatcherKind for RegexKind {
    fn compile(&self, pattern: &str) -> Result<Box<dyn Matcher>> {
        let re = Regex::new(&format!(r"(?i)^\s*(?:{pattern})"))
            .map_err(|e| Error::Schema(format!("invalid regex {pattern:?}: {e}")))?;
        Ok(Box::new(RegexMatcher(re)))
    }
}

#[derive(Debug)]
struct RegexMatcher(Regex);

impl Matcher for RegexMatcher {
    fn is_match(&self, text: &str) -> bool {
        self.0.is_match(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(p: &str) -> Box<dyn Matcher> {
        matcher_kinds().get("keyword").unwrap().compile(p).unwrap()
    }

    #[test]
    fn keyword_respects_word_boundaries() {
        let m = kw("Thanks");
        assert!(m.is_match(&normalize("Thanks!")));
        assert!(m.is_match(&normalize("ok,  thanks a lot")));
        assert!(!m.is_match(&normalize("thanksgiving plans")));
        assert!(kw("i see.").is_match("i see. right"));
    }

    #[test]
    fn keyword_collapses_whitespace() {
        assert!(kw("count  the\twords").is_match(&normalize("Can you COUNT the words?")));
    }

    #[test]
    fn regex_is_anchored_and_case_insensitive() {
        let m = matcher_kinds().get("regex").unwrap().compile("what is").unwrap();
        assert!(m.is_match(&normalize("What is a thesis?")));
        assert!(!m.is_match(&normalize("so what is it")));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matcher_kinds().get("keyword").unwrap().compile("  ").is_err());
        assert!(matcher_kinds().get("regex").unwrap().compile("(").is_err());
        assert!(matcher_kinds().get("fuzzy").is_err());
    }
}

//! Text normalization applied to every piece of text before it reaches a
//! tokenizer, a vocabulary, or a length statistic.

use regex::Regex;
use std::sync::OnceLock;
use unicode_normalization::UnicodeNormalization;

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)[^\s<>]+").unwrap())
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+").unwrap())
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // US-style and international-ish numbers: optional country code, then
    // 3-3-4 digit groups with common separators.
    RE.get_or_init(|| {
        Regex::new(r"(?:\+?\d{1,3}[\s.-]?)?\(?\d{3}\)?[\s.-]?\d{3}[\s.-]?\d{4}\b").unwrap()
    })
}

fn currency_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{Sc}").unwrap())
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").unwrap())
}

fn whitespace_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s+").unwrap())
}

/// Normalizes raw text, in this fixed order: NFC unicode normalization,
/// lowercasing, then replacement of URLs, emails, phone numbers, currency
/// symbols, and digit runs with `<url>` `<email>` `<phone>` `<cur>`
/// `<number>`, and finally whitespace collapsing and trimming.
///
/// Total on any input and idempotent: the replacement tags contain nothing
/// a later pass would match again.
pub fn clean_text(raw: &str) -> String {
    let text: String = raw.nfc().collect();
    let text = text.to_lowercase();
    let text = url_re().replace_all(&text, "<url>");
    let text = email_re().replace_all(&text, "<email>");
    let text = phone_re().replace_all(&text, "<phone>");
    let text = currency_re().replace_all(&text, "<cur>");
    let text = number_re().replace_all(&text, "<number>");
    let text = whitespace_re().replace_all(&text, " ");
    text.trim().to_string()
}

/// Whitespace tokens of already-cleaned text. Empty text yields no tokens.
pub fn tokens(cleaned: &str) -> impl Iterator<Item = &str> {
    cleaned.split_whitespace()
}

/// Whitespace token count of cleaned text.
pub fn token_count(cleaned: &str) -> usize {
    tokens(cleaned).count()
}

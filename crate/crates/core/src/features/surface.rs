use std::collections::HashSet;
use std::sync::OnceLock;

use super::{tokenize, FeatureVector};

pub const MODALS: [&str; 10] = [
    "can", "could", "may", "might", "must", "shall", "should", "will", "would", "ought",
];

const QUOTES: [char; 6] = ['"', '\u{201C}', '\u{201D}', '\u{201E}', '\u{00AB}', '\u{00BB}'];

pub const SURFACE_NAMES: [&str; 8] = [
    "surface.quote_ratio",
    "surface.exclamation_ratio",
    "surface.modal_ratio",
    "surface.stopword_ratio",
    "surface.type_token_ratio",
    "surface.mean_word_length",
    "surface.mean_sentence_length",
    "surface.complex_words",
];

fn stopwords() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        include_str!("../../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Vowel groups (a, e, i, o, u, y), minus a silent final `e` unless the
/// word ends in `le`; never less than one.
pub fn count_syllables(word: &str) -> usize {
    let w: Vec<char> = word.to_lowercase().chars().collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0;
    let mut prev = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    let n = w.len();
    let silent_e = n >= 2 && w[n - 1] == 'e' && !is_vowel(w[n - 2]) && !(n >= 3 && w[n - 2] == 'l' && !is_vowel(w[n - 3]));
    if silent_e && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

/// Segments between `.`, `!` and `?` that contain at least one
/// alphanumeric character.
pub fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count()
}

/// [quote, exclamation, modal, stopword] ratios over tokens, type-token
/// ratio, mean word length in chars, tokens per sentence, and the number of
/// words with at least three syllables. Empty text gives all zeros.
pub fn surface_features(text: &str) -> FeatureVector {
    let names = SURFACE_NAMES.iter().map(|s| s.to_string()).collect();
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return FeatureVector::new(names, vec![0.0; SURFACE_NAMES.len()]);
    }
    let n = tokens.len() as f64;
    let quotes = text.chars().filter(|c| QUOTES.contains(c)).count() as f64;
    let bangs = text.chars().filter(|&c| c == '!').count() as f64;
    let modals = tokens.iter().filter(|t| MODALS.contains(&t.as_str())).count() as f64;
    let stops = tokens.iter().filter(|t| is_stopword(t)).count() as f64;
    let types = tokens.iter().collect::<HashSet<_>>().len() as f64;
    let chars = tokens.iter().map(|t| t.chars().count()).sum::<usize>() as f64;
    let sentences = sentence_count(text).max(1) as f64;
    let complex = tokens.iter().filter(|t| count_syllables(t) >= 3).count() as f64;
    FeatureVector::new(
        names,
        vec![
            quotes / n,
            bangs / n,
            modals / n,
            stops / n,
            types / n,
            chars / n,
            n / sentences,
            complex,
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Readability {
    pub coleman_liau: f64,
    pub flesch: f64,
}

/// Coleman-Liau index `0.0588 L - 0.296 S - 15.8` (L letters and S
/// sentences per 100 words) and Flesch reading ease
/// `206.835 - 1.015 words/sentence - 84.6 syllables/word`. `None` when the
/// text has no words.
pub fn readability(text: &str) -> Option<Readability> {
    let tokens = tokenize(text);
    let sentences = sentence_count(text);
    if tokens.is_empty() || sentences == 0 {
        return None;
    }
    let words = tokens.len() as f64;
    let sentences = sentences as f64;
    let letters = tokens.iter().flat_map(|t| t.chars()).filter(|c| c.is_alphabetic()).count() as f64;
    let syllables = tokens.iter().map(|t| count_syllables(t)).sum::<usize>() as f64;
    let l = letters / words * 100.0;
    let s = sentences / words * 100.0;
    Some(Readability {
        coleman_liau: 0.0588 * l - 0.296 * s - 15.8,
        flesch: 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syllable_heuristic() {
        for (w, n) in [
            ("cat", 1),
            ("the", 1),
            ("make", 1),
            ("table", 2),
            ("reading", 2),
            ("beautiful", 3),
            ("rhythm", 1),
            ("xyz", 1),
            ("readability", 5),
        ] {
            assert_eq!(count_syllables(w), n, "{w}");
        }
    }

    #[test]
    fn exclamations_and_types() {
        let f = surface_features("Stop! Stop!");
        assert_eq!(f.get("surface.exclamation_ratio"), Some(1.0));
        assert_eq!(f.get("surface.type_token_ratio"), Some(0.5));
    }

    #[test]
    fn modal_ratio_counts_shipped_list() {
        let f = surface_features("We must act. We should act now.");
        assert!((f.get("surface.modal_ratio").unwrap() - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(f.get("surface.mean_sentence_length"), Some(3.5));
    }

    #[test]
    fn empty_text_is_all_zero() {
        assert!(surface_features("").values.iter().all(|&x| x == 0.0));
        assert!(readability("").is_none());
        assert!(readability("?!").is_none());
    }

    #[test]
    fn readability_plugins() {
        let r = readability("cat").unwrap();
        assert!((r.coleman_liau - -27.76).abs() < 1e-9);
        let r = readability("The cat sat.").unwrap();
        assert!((r.flesch - 119.19).abs() < 1e-9);
    }
}

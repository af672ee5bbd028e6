//! Tokenizers shared by term mining, BM25 and ROUGE.
//!
//! All of them lowercase and split on any non-alphanumeric character. They
//! differ only in whether purely numeric tokens survive.

/// Lowercased alphanumeric tokens, digits kept.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Like [`word_tokens`] but drops tokens made only of digits.
pub fn term_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !t.chars().all(|c| c.is_ascii_digit()))
        .map(str::to_lowercase)
        .collect()
}

/// Lowercase and collapse internal whitespace runs to one space.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse a one-entry-per-line word list. Blank lines and `#` comments are skipped.
pub fn parse_word_list(contents: &str) -> impl Iterator<Item = &str> {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(word_tokens("Wi-Fi was FREE!"), ["wi", "fi", "was", "free"]);
    }

    #[test]
    fn term_tokens_drop_pure_digits() {
        assert_eq!(term_tokens("Room 101 had 2nd floor"), ["room", "had", "2nd", "floor"]);
        assert_eq!(word_tokens("Room 101"), ["room", "101"]);
    }

    #[test]
    fn phrase_normalization() {
        assert_eq!(normalize_phrase("  Room \t Bathroom "), "room bathroom");
    }
}

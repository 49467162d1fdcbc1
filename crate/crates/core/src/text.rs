//! Tokenizers shared by the feature extractors.

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercased maximal runs of at least two word characters (letters, digits,
/// underscore).
pub fn word_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut len = 0usize;
    for c in lower.chars() {
        if is_word_char(c) {
            cur.push(c);
            len += 1;
        } else {
            if len >= 2 {
                out.push(std::mem::take(&mut cur));
            }
            cur.clear();
            len = 0;
        }
    }
    if len >= 2 {
        out.push(cur);
    }
    out
}

/// Contiguous three-character windows over the lowercased text, with every
/// whitespace run normalized to a single space.
pub fn char_trigrams(text: &str) -> Vec<String> {
    let mut chars: Vec<char> = Vec::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !in_space {
                chars.push(' ');
            }
            in_space = true;
        } else {
            chars.push(c);
            in_space = false;
        }
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Whitespace tokens, lowercased, with surrounding punctuation stripped.
/// Inner apostrophes survive so contractions such as `don't` stay whole.
pub fn function_word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|t| {
            let t = t
                .trim_matches(|c: char| !c.is_alphanumeric())
                .replace('\u{2019}', "'")
                .to_lowercase();
            (!t.is_empty()).then_some(t)
        })
        .collect()
}

/// Whitespace tokens of a sentence, minus single-character non-alphanumeric
/// tokens (punctuation, stray symbols).
pub fn length_tokens(sentence: &str) -> impl Iterator<Item = &str> {
    sentence.split_whitespace().filter(|t| {
        let mut cs = t.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => c.is_alphanumeric(),
            _ => true,
        }
    })
}

/// Tokenization for tagging: whitespace tokens with leading and trailing
/// punctuation split off into their own tokens.
pub fn tagger_tokens(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for tok in sentence.split_whitespace() {
        let chars: Vec<char> = tok.chars().collect();
        let start = chars.iter().position(|c| c.is_alphanumeric());
        let Some(start) = start else {
            out.extend(chars.iter().map(|c| c.to_string()));
            continue;
        };
        let end = chars.iter().rposition(|c| c.is_alphanumeric()).unwrap() + 1;
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        out.push(chars[start..end].iter().collect());
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

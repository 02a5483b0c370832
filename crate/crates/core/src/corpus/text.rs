//! Text normalization and truncation.

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Caption,
    Question,
    Answer,
}

impl Role {
    /// Maximum token count kept for this role.
    pub const fn max_len(self) -> usize {
        match self {
            Role::Caption => 24,
            Role::Question => 16,
            Role::Answer => 8,
        }
    }
}

const CONTRACTIONS: &[(&str, &str)] = &[
    ("won't", "will not"),
    ("can't", "can not"),
    ("n't", " not"),
    ("'re", " are"),
    ("'s", " is"),
    ("'d", " would"),
    ("'ll", " will"),
    ("'ve", " have"),
    ("'m", " am"),
];

const PUNCT: &[char] = &['?', '.', ',', '!', ';', ':', '"', '(', ')'];

/// Lowercase, spell out numbers, expand contractions, then split on
/// whitespace. Punctuation marks become tokens of their own.
pub fn preprocess(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase().replace('’', "'");
    let spelled = digits_to_words(&lowered);
    let mut expanded = spelled;
    for (from, to) in CONTRACTIONS {
        expanded = expanded.replace(from, to);
    }
    let mut spaced = String::with_capacity(expanded.len() + 8);
    for ch in expanded.chars() {
        if PUNCT.contains(&ch) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    spaced.split_whitespace().map(str::to_owned).collect()
}

/// Preprocess, map to ids (OOV → UNK) and keep the leading tokens up to the
/// role's cap.
pub fn tokenize_and_truncate(vocab: &Vocabulary, text: &str, role: Role) -> Vec<usize> {
    preprocess(text)
        .iter()
        .take(role.max_len())
        .map(|t| vocab.id_or_unk(t))
        .collect()
}

fn digits_to_words(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut digits = String::new();
    let flush = |digits: &mut String, out: &mut String| {
        if !digits.is_empty() {
            out.push(' ');
            out.push_str(&number_words(digits));
            out.push(' ');
            digits.clear();
        }
    };
    for ch in text.chars() {
        if ch.is_ascii_digit() {
            digits.push(ch);
        } else {
            flush(&mut digits, &mut out);
            out.push(ch);
        }
    }
    flush(&mut digits, &mut out);
    out
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Numbers below one thousand are spelled as words; anything longer is read
/// digit by digit.
fn number_words(digits: &str) -> String {
    let spell_digits = || {
        digits
            .chars()
            .map(|c| ONES[c.to_digit(10).unwrap() as usize])
            .collect::<Vec<_>>()
            .join(" ")
    };
    if digits.len() > 3 || (digits.len() > 1 && digits.starts_with('0')) {
        return spell_digits();
    }
    let n: usize = digits.parse().unwrap();
    below_thousand(n)
}

fn below_thousand(n: usize) -> String {
    if n < 20 {
        return ONES[n].to_owned();
    }
    if n < 100 {
        return if n % 10 == 0 {
            TENS[n / 10].to_owned()
        } else {
            format!("{} {}", TENS[n / 10], ONES[n % 10])
        };
    }
    let rest = n % 100;
    if rest == 0 {
        format!("{} hundred", ONES[n / 100])
    } else {
        format!("{} hundred {}", ONES[n / 100], below_thousand(rest))
    }
}

//! Utterance tokenisation: lowercase, drop every character that is neither
//! alphanumeric nor whitespace, split on whitespace. Characters are removed
//! rather than replaced, so `"don't"` becomes `"dont"` and `"2.0"` becomes
//! `"20"`. Letters and digits of any script survive.

pub const UNK: &str = "unk";
pub const PAD: &str = "pad";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    /// Nothing survived cleaning; `tokens` is the single unknown token.
    pub was_empty: bool,
}

pub fn tokenize_flagged(text: &str) -> Tokenized {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        Tokenized { tokens: vec![UNK.to_string()], was_empty: true }
    } else {
        Tokenized { tokens, was_empty: false }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_flagged(text).tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_punctuation_and_lowercases() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
    }

    #[test]
    fn empty_input_becomes_unk() {
        let t = tokenize_flagged("");
        assert_eq!(t.tokens, vec!["unk"]);
        assert!(t.was_empty);
        assert!(tokenize_flagged("?!  ...").was_empty);
    }

    #[test]
    fn mixed_script_fixture() {
        assert_eq!(
            tokenize("Ça coûte 42€ — 東京タワー!! (v2.0) I'm ΣΟΦΙΑ_7"),
            vec!["ça", "coûte", "42", "東京タワー", "v20", "im", "σοφια7"]
        );
    }

    proptest! {
        #[test]
        fn idempotent_on_own_output(s in "\\PC{0,40}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}

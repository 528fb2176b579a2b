//! Script-fair tokenizer used for chunk budgets and the mock embedder.
//!
//! A token is either one maximal run of letters/digits outside the CJK blocks,
//! or a single CJK character. Whitespace and punctuation are separators and
//! never count toward a budget.

use std::ops::Range;

/// One token with its byte span in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub span: (usize, usize),
}

impl Token<'_> {
    pub fn byte_range(&self) -> Range<usize> {
        self.span.0..self.span.1
    }
}

/// True for ideographs, kana and hangul syllables: each one is its own token.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF       // CJK Extension A
        | 0x4E00..=0x9FFF     // CJK Unified Ideographs
        | 0xF900..=0xFAFF     // Compatibility Ideographs
        | 0x20000..=0x2EBEF   // Extensions B..F
        | 0x30000..=0x3134F   // Extension G
        | 0x3040..=0x309F     // Hiragana
        | 0x30A0..=0x30FF     // Katakana
        | 0xAC00..=0xD7AF     // Hangul syllables
    )
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;

    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(start) = run_start.take() {
            tokens.push(Token { text: &text[start..i], span: (start, i) });
        }
        if is_cjk(c) {
            let end = i + c.len_utf8();
            tokens.push(Token { text: &text[i..end], span: (i, end) });
        }
    }
    if let Some(start) = run_start {
        tokens.push(Token { text: &text[start..], span: (start, text.len()) });
    }
    tokens
}

/// Token count without materializing the list.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ,.;  ").is_empty());
    }

    #[test]
    fn latin_words_split_on_whitespace() {
        let toks: Vec<_> = tokenize("myopia control lenses").iter().map(|t| t.text).collect();
        assert_eq!(toks, ["myopia", "control", "lenses"]);
    }

    #[test]
    fn mixed_script_counts_each_cjk_char() {
        // 近 视 防 控 are four tokens; "myopia" and "control" are two more.
        let toks: Vec<_> = tokenize("近视防控: myopia control.").iter().map(|t| t.text).collect();
        assert_eq!(toks, ["近", "视", "防", "控", "myopia", "control"]);
    }

    #[test]
    fn cjk_adjacent_to_latin_splits() {
        let toks: Vec<_> = tokenize("OK镜2025年").iter().map(|t| t.text).collect();
        assert_eq!(toks, ["OK", "镜", "2025", "年"]);
    }

    #[test]
    fn digits_and_letters_form_one_run() {
        let toks: Vec<_> = tokenize("0.01% atropine, -6.00D").iter().map(|t| t.text).collect();
        assert_eq!(toks, ["0", "01", "atropine", "6", "00D"]);
    }

    proptest! {
        #[test]
        fn tokens_reconstruct_non_separator_content(s in "\\PC{0,80}") {
            let joined: String = tokenize(&s).iter().map(|t| t.text).collect();
            let expected: String = s.chars().filter(|&c| is_word_char(c) || is_cjk(c)).collect();
            prop_assert_eq!(joined, expected);
        }

        #[test]
        fn spans_are_ordered_and_match_text(s in "[a-z 近视,.]{0,60}") {
            let toks = tokenize(&s);
            let mut last = 0;
            for t in &toks {
                prop_assert!(t.span.0 >= last);
                prop_assert_eq!(&s[t.byte_range()], t.text);
                last = t.span.1;
            }
        }
    }
}

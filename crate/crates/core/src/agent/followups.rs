use crate::Language;

pub const FOLLOW_UP_DELIMITER: &str = "---FOLLOW-UP---";
pub const MAX_SUGGESTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFollowups {
    pub answer: String,
    pub suggestions: Vec<String>,
    /// No usable suggestion was found and the defaults were substituted.
    pub fallback: bool,
}

/// Strips a leading list marker (`1.`, `2)`, `-`, `*`, `•`) and makes the
/// line end in a question mark. Returns `None` for a line with no content.
pub fn normalize_question(line: &str, language: Language) -> Option<String> {
    let mut s = line.trim();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', '、', '．', '）']) {
            s = r;
        }
    } else if let Some(r) = s.strip_prefix(['-', '*', '•']) {
        s = r;
    }
    let s = s.trim().trim_end_matches(['.', '。', ':', '：', ';', '；']).trim_end();
    if s.is_empty() || s.chars().all(|c| matches!(c, '?' | '？')) {
        return None;
    }
    if s.ends_with(['?', '？']) {
        return Some(s.to_string());
    }
    let mark = match language {
        Language::En => '?',
        Language::Zh => '？',
    };
    Some(format!("{s}{mark}"))
}

/// Splits provider output at the first delimiter line. Never fails: without a
/// delimiter, or with nothing usable after it, `defaults` are returned.
pub fn parse_followups(raw: &str, language: Language, defaults: &[String]) -> ParsedFollowups {
    let mut answer_lines = Vec::new();
    let mut after: Option<Vec<&str>> = None;
    for line in raw.lines() {
        match after.as_mut() {
            Some(rest) => rest.push(line),
            None if line.trim() == FOLLOW_UP_DELIMITER => after = Some(Vec::new()),
            None => answer_lines.push(line),
        }
    }
    let answer = answer_lines.join("\n").trim().to_string();
    let suggestions: Vec<String> = after
        .unwrap_or_default()
        .into_iter()
        .filter_map(|l| normalize_question(l, language))
        .take(MAX_SUGGESTIONS)
        .collect();
    if suggestions.is_empty() {
        let defaults = defaults.iter().take(MAX_SUGGESTIONS).cloned().collect();
        return ParsedFollowups { answer, suggestions: defaults, fallback: true };
    }
    ParsedFollowups { answer, suggestions, fallback: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults() -> Vec<String> {
        vec!["D1?".into(), "D2?".into(), "D3?".into()]
    }

    #[test]
    fn stated_grammar() {
        let p = parse_followups("Answer.\n---FOLLOW-UP---\n1. Q1?\n2. Q2?", Language::En, &defaults());
        assert_eq!(p.answer, "Answer.");
        assert_eq!(p.suggestions, vec!["Q1?", "Q2?"]);
        assert!(!p.fallback);
    }

    #[test]
    fn missing_delimiter_falls_back() {
        let p = parse_followups("Just an answer.\n1. Not a suggestion?", Language::En, &defaults());
        assert_eq!(p.answer, "Just an answer.\n1. Not a suggestion?");
        assert_eq!(p.suggestions, defaults());
        assert!(p.fallback);
    }

    #[test]
    fn five_lines_keep_first_three() {
        let raw = format!("A\n{FOLLOW_UP_DELIMITER}\n1. a?\n2. b?\n3. c?\n4. d?\n5. e?");
        let p = parse_followups(&raw, Language::En, &defaults());
        assert_eq!(p.suggestions, vec!["a?", "b?", "c?"]);
    }

    #[test]
    fn bullets_and_missing_marks_are_normalized() {
        let raw = "A\n---FOLLOW-UP---\n- What is atropine\n* Is it safe.\n\n• 需要复查吗";
        let p = parse_followups(raw, Language::Zh, &defaults());
        assert_eq!(p.suggestions, vec!["What is atropine？", "Is it safe？", "需要复查吗？"]);
        assert_eq!(normalize_question("3) Why?", Language::En).as_deref(), Some("Why?"));
        assert_eq!(normalize_question("  2.  ", Language::En), None);
    }

    #[test]
    fn empty_follow_up_section_falls_back() {
        let p = parse_followups("A\n---FOLLOW-UP---\n\n", Language::En, &defaults());
        assert!(p.fallback);
        assert_eq!(p.suggestions.len(), 3);
    }

    proptest! {
        #[test]
        fn always_one_to_three_question_suggestions(raw in "\\PC{0,60}(\n---FOLLOW-UP---)?(\n\\PC{0,30}){0,6}") {
            let p = parse_followups(&raw, Language::En, &defaults());
            prop_assert!((1..=3).contains(&p.suggestions.len()));
            for s in &p.suggestions {
                prop_assert!(s.ends_with('?') || s.ends_with('？'), "{:?}", s);
            }
        }
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Language;

/// Myopic maculopathy category, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GradeLabel {
    C0,
    C1,
    C2,
    C3,
    C4,
}

impl GradeLabel {
    pub const ALL: [GradeLabel; 5] = [GradeLabel::C0, GradeLabel::C1, GradeLabel::C2, GradeLabel::C3, GradeLabel::C4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        ["C0", "C1", "C2", "C3", "C4"][self.index()]
    }

    pub fn display_name(self) -> &'static str {
        match self {
            GradeLabel::C0 => "No myopic changes",
            GradeLabel::C1 => "Tessellated fundus",
            GradeLabel::C2 => "Diffuse chorioretinal atrophy",
            GradeLabel::C3 => "Patchy chorioretinal atrophy",
            GradeLabel::C4 => "Macular atrophy",
        }
    }
}

impl fmt::Display for GradeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown grade label {0:?}")]
pub struct ParseGradeError(pub String);

/// Accepts `C0`..`C4`, bare indices `0`..`4` and the display names (case-insensitive).
impl FromStr for GradeLabel {
    type Err = ParseGradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        GradeLabel::ALL
            .into_iter()
            .find(|g| {
                t.eq_ignore_ascii_case(g.code())
                    || t == g.index().to_string()
                    || t.eq_ignore_ascii_case(g.display_name())
            })
            .ok_or_else(|| ParseGradeError(s.to_string()))
    }
}

/// Validated five-way probability vector (each in [0, 1], sum 1 within 1e-6).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradeProbabilities([f64; 5]);

impl GradeProbabilities {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    /// Accepts an already-normalized vector.
    pub fn new(probs: [f64; 5]) -> Option<Self> {
        let sum: f64 = probs.iter().sum();
        let in_range = probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        (in_range && (sum - 1.0).abs() <= Self::SUM_TOLERANCE).then_some(Self(probs))
    }

    pub(crate) fn renormalized(probs: [f64; 5]) -> Self {
        let sum: f64 = probs.iter().sum();
        Self(probs.map(|p| (p / sum).clamp(0.0, 1.0)))
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.0
    }

    pub fn get(&self, label: GradeLabel) -> f64 {
        self.0[label.index()]
    }

    /// Highest-probability category; ties go to the less severe one.
    pub fn argmax(&self) -> GradeLabel {
        let mut best = 0;
        for i in 1..5 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        GradeLabel::ALL[best]
    }
}

/// Per-category explanatory sentence appended to a grading summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeSentences([String; 5]);

impl GradeSentences {
    pub fn new(sentences: [String; 5]) -> Self {
        Self(sentences)
    }

    pub fn builtin(language: Language) -> Self {
        let s: [&str; 5] = match language {
            Language::En => [
                "No myopic degeneration of the macula is visible on this photograph; keep up regular eye examinations.",
                "The choroidal vessels show through a thinned retina, an early myopic change that needs routine monitoring by an eye care practitioner.",
                "Yellowish areas of diffuse thinning appear around the optic disc and macula; regular review by an eye care practitioner is recommended.",
                "Well-defined patches of atrophy are present at the back of the eye; please arrange a review with an eye care practitioner soon.",
                "Atrophy involves the central macula and can affect central vision; please see an ophthalmologist promptly.",
            ],
            Language::Zh => [
                "照片中未见黄斑区近视性退行性改变，请继续定期进行眼科检查。",
                "视网膜变薄后可透见脉络膜血管（豹纹状眼底），属于早期近视改变，需由眼科专业人员定期随访。",
                "视盘及黄斑周围可见弥漫性黄白色萎缩区，建议定期由眼科专业人员复查。",
                "眼底后极部可见边界清楚的斑片状萎缩灶，请尽快安排眼科复查。",
                "萎缩已累及黄斑中心，可能影响中心视力，请尽快就诊眼科医生。",
            ],
        };
        Self(s.map(str::to_string))
    }

    /// Parses lines of the form `C2: sentence`. All five categories are required.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut slots: [Option<String>; 5] = Default::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, sentence) = line.split_once(':').ok_or_else(|| format!("line {}: expected `C<n>: sentence`", n + 1))?;
            let label: GradeLabel = key.parse().map_err(|e: ParseGradeError| format!("line {}: {e}", n + 1))?;
            slots[label.index()] = Some(sentence.trim().to_string());
        }
        let mut out: [String; 5] = Default::default();
        for (i, slot) in slots.into_iter().enumerate() {
            out[i] = slot.ok_or_else(|| format!("missing sentence for C{i}"))?;
        }
        Ok(Self(out))
    }

    pub fn sentence(&self, label: GradeLabel) -> &str {
        &self.0[label.index()]
    }
}

/// Patient-facing grading summary: code, display name, probability to two
/// decimals and the category's explanatory sentence.
pub fn grade_report(probs: &GradeProbabilities, label: GradeLabel, sentences: &GradeSentences) -> String {
    format!(
        "Fundus photo grading: {} {} (probability {:.2}). {}",
        label.code(),
        label.display_name(),
        probs.get(label),
        sentences.sentence(label)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: [f64; 5]) -> GradeProbabilities {
        GradeProbabilities::new(v).unwrap()
    }

    #[test]
    fn five_ordered_categories() {
        assert_eq!(GradeLabel::ALL.len(), 5);
        assert!(GradeLabel::ALL.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(GradeLabel::C3.display_name(), "Patchy chorioretinal atrophy");
    }

    #[test]
    fn argmax_and_lower_index_tie_break() {
        assert_eq!(p([1.0, 0.0, 0.0, 0.0, 0.0]).argmax(), GradeLabel::C0);
        assert_eq!(p([0.5, 0.5, 0.0, 0.0, 0.0]).argmax(), GradeLabel::C0);
        assert_eq!(p([0.0, 0.2, 0.0, 0.4, 0.4]).argmax(), GradeLabel::C3);
        assert_eq!(p([0.0, 0.0, 0.0, 0.0, 1.0]).argmax(), GradeLabel::C4);
    }

    #[test]
    fn parse_labels() {
        assert_eq!("c2".parse::<GradeLabel>().unwrap(), GradeLabel::C2);
        assert_eq!("4".parse::<GradeLabel>().unwrap(), GradeLabel::C4);
        assert_eq!("tessellated fundus".parse::<GradeLabel>().unwrap(), GradeLabel::C1);
        assert!("C5".parse::<GradeLabel>().is_err());
    }

    #[test]
    fn probability_contract() {
        assert!(GradeProbabilities::new([0.2; 5]).is_some());
        assert!(GradeProbabilities::new([0.3; 5]).is_none());
        assert!(GradeProbabilities::new([1.2, -0.2, 0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn report_names_label_and_probability() {
        let s = GradeSentences::builtin(Language::En);
        let r = grade_report(&p([0.97, 0.03, 0.0, 0.0, 0.0]), GradeLabel::C0, &s);
        assert!(r.contains("No myopic changes") && r.contains("0.97"), "{r}");
        let r = grade_report(&p([0.0, 0.0, 0.1, 0.9, 0.0]), GradeLabel::C3, &s);
        assert!(r.contains("Patchy chorioretinal atrophy"));
    }

    #[test]
    fn report_uses_configured_sentence() {
        let table = "C0: zero\nC1: one\n# comment\nC2: two\nC3: three\nC4: four\n";
        let s = GradeSentences::parse(table).unwrap();
        for (label, expected) in GradeLabel::ALL.into_iter().zip(["zero", "one", "two", "three", "four"]) {
            let mut v = [0.0; 5];
            v[label.index()] = 1.0;
            let r = grade_report(&p(v), label, &s);
            assert!(r.ends_with(expected), "{r}");
            assert_eq!(s.sentence(label), expected);
        }
        assert!(GradeSentences::parse("C0: a\nC1: b").is_err());
    }
}

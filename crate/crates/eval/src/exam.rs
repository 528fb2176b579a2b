//! Single-choice exam scoring and group comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fixtures::{parse_choice, read_csv, FixtureError};
use crate::stats::{chi_square_independence, cohen_kappa, lsd_posthoc, mixed_rm_anova, RmAnova, StatResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Knowledge,
    Scenario,
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ItemKind::Knowledge => "knowledge",
            ItemKind::Scenario => "scenario",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScqItem {
    pub item_id: String,
    pub exam_id: u8,
    pub kind: ItemKind,
    /// 0-based index of the correct option.
    pub answer_key: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RespondentGroup {
    System,
    GeneralEcp,
    Specialist,
}

impl RespondentGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            RespondentGroup::System => "system",
            RespondentGroup::GeneralEcp => "general_ecp",
            RespondentGroup::Specialist => "specialist",
        }
    }
}

impl fmt::Display for RespondentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One respondent's answers; unanswered items count as incorrect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSheet {
    pub respondent_id: String,
    pub group: RespondentGroup,
    pub answers: BTreeMap<String, u8>,
}

impl ResponseSheet {
    fn correct(&self, item: &ScqItem) -> bool {
        self.answers.get(&item.item_id) == Some(&item.answer_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExamError {
    #[error("exam has no items")]
    EmptyExam,
    #[error("no {0} items")]
    NoItemsOfKind(ItemKind),
    #[error("layout check failed: {0}")]
    Layout(String),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

/// 100 × correct / total over the given items of one exam.
pub fn score_exam(sheet: &ResponseSheet, items: &[ScqItem]) -> Result<f64, ExamError> {
    if items.is_empty() {
        return Err(ExamError::EmptyExam);
    }
    let correct = items.iter().filter(|i| sheet.correct(i)).count();
    Ok(100.0 * correct as f64 / items.len() as f64)
}

/// Percentage of correct answers on items of `kind`, pooled over all sheets and exams.
pub fn subgroup_accuracy(sheets: &[ResponseSheet], items: &[ScqItem], kind: ItemKind) -> Result<f64, ExamError> {
    let of_kind: Vec<&ScqItem> = items.iter().filter(|i| i.kind == kind).collect();
    if of_kind.is_empty() {
        return Err(ExamError::NoItemsOfKind(kind));
    }
    if sheets.is_empty() {
        return Err(ExamError::Layout("no response sheets".into()));
    }
    let correct: usize = sheets.iter().map(|s| of_kind.iter().filter(|i| s.correct(i)).count()).sum();
    Ok(100.0 * correct as f64 / (of_kind.len() * sheets.len()) as f64)
}

/// Three exams of 50 items each, 39 knowledge and 11 scenario.
pub fn validate_paper_layout(items: &[ScqItem]) -> Result<(), ExamError> {
    let mut per_exam: BTreeMap<u8, (usize, usize)> = BTreeMap::new();
    for item in items {
        let e = per_exam.entry(item.exam_id).or_default();
        match item.kind {
            ItemKind::Knowledge => e.0 += 1,
            ItemKind::Scenario => e.1 += 1,
        }
    }
    if per_exam.keys().copied().collect::<Vec<_>>() != [1, 2, 3] {
        return Err(ExamError::Layout(format!("expected exams 1, 2, 3, found {:?}", per_exam.keys())));
    }
    for (exam, (k, s)) in per_exam {
        if (k, s) != (39, 11) {
            return Err(ExamError::Layout(format!("exam {exam} has {k} knowledge and {s} scenario items, expected 39 and 11")));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct ItemRow {
    item_id: String,
    exam_id: u8,
    kind: ItemKind,
    answer_key: String,
}

#[derive(Deserialize)]
struct ResponseRow {
    respondent_id: String,
    group: RespondentGroup,
    item_id: String,
    choice: String,
}

/// Reads `item_id,exam_id,kind,answer_key`.
pub fn load_items(path: &Path) -> Result<Vec<ScqItem>, ExamError> {
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for (line, row) in read_csv::<ItemRow>(path)? {
        let err = |m: String| ExamError::Fixture(FixtureError::new(path, Some(line), m));
        let answer_key = parse_choice(&row.answer_key).ok_or_else(|| err(format!("bad answer_key {:?}", row.answer_key)))?;
        if row.item_id.is_empty() {
            return Err(err("empty item_id".into()));
        }
        if !seen.insert(row.item_id.clone()) {
            return Err(err(format!("duplicate item_id {}", row.item_id)));
        }
        items.push(ScqItem { item_id: row.item_id, exam_id: row.exam_id, kind: row.kind, answer_key });
    }
    if items.is_empty() {
        return Err(ExamError::EmptyExam);
    }
    Ok(items)
}

/// Reads `respondent_id,group,item_id,choice`. An empty choice means unanswered.
pub fn load_responses(path: &Path, items: &[ScqItem]) -> Result<Vec<ResponseSheet>, ExamError> {
    let known: BTreeSet<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    let mut sheets: BTreeMap<String, ResponseSheet> = BTreeMap::new();
    for (line, row) in read_csv::<ResponseRow>(path)? {
        let err = |m: String| ExamError::Fixture(FixtureError::new(path, Some(line), m));
        if !known.contains(row.item_id.as_str()) {
            return Err(err(format!("unknown item_id {}", row.item_id)));
        }
        let sheet = sheets.entry(row.respondent_id.clone()).or_insert_with(|| ResponseSheet {
            respondent_id: row.respondent_id.clone(),
            group: row.group,
            answers: BTreeMap::new(),
        });
        if sheet.group != row.group {
            return Err(err(format!("respondent {} listed under two groups", row.respondent_id)));
        }
        if row.choice.is_empty() {
            continue;
        }
        let choice = parse_choice(&row.choice).ok_or_else(|| err(format!("bad choice {:?}", row.choice)))?;
        if sheet.answers.insert(row.item_id.clone(), choice).is_some() {
            return Err(err(format!("respondent {} answered {} twice", row.respondent_id, row.item_id)));
        }
    }
    Ok(sheets.into_values().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespondentScores {
    pub respondent_id: String,
    pub group: RespondentGroup,
    /// One score per exam, in exam-id order.
    pub exam_scores: Vec<f64>,
    pub mean_score: f64,
    pub knowledge_accuracy: f64,
    pub scenario_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: RespondentGroup,
    pub n: usize,
    pub mean_score: f64,
    pub knowledge_accuracy: Option<f64>,
    pub scenario_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub result: StatResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub group: RespondentGroup,
    pub a: String,
    pub b: String,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScqReport {
    pub exam_ids: Vec<u8>,
    pub respondents: Vec<RespondentScores>,
    pub groups: Vec<GroupSummary>,
    /// `None` when the design cannot support the test; see `notes`.
    pub anova: Option<RmAnova>,
    pub posthoc: Vec<PairComparison>,
    /// Chi-square on correct/incorrect counts of the system against each human respondent.
    pub system_vs_individuals: Vec<PairComparison>,
    /// Kappa on chosen answers for each pair of respondents within a group.
    pub agreement: Vec<Agreement>,
    pub notes: Vec<String>,
}

pub fn scq_report(items: &[ScqItem], sheets: &[ResponseSheet]) -> Result<ScqReport, ExamError> {
    if items.is_empty() {
        return Err(ExamError::EmptyExam);
    }
    if sheets.is_empty() {
        return Err(ExamError::Layout("no response sheets".into()));
    }
    let mut by_exam: BTreeMap<u8, Vec<ScqItem>> = BTreeMap::new();
    for item in items {
        by_exam.entry(item.exam_id).or_default().push(item.clone());
    }
    let exam_ids: Vec<u8> = by_exam.keys().copied().collect();
    let mut notes = Vec::new();

    let mut respondents = Vec::new();
    for sheet in sheets {
        let exam_scores = by_exam.values().map(|its| score_exam(sheet, its)).collect::<Result<Vec<_>, _>>()?;
        let one = std::slice::from_ref(sheet);
        let acc = |kind| subgroup_accuracy(one, items, kind).unwrap_or(f64::NAN);
        respondents.push(RespondentScores {
            respondent_id: sheet.respondent_id.clone(),
            group: sheet.group,
            mean_score: exam_scores.iter().sum::<f64>() / exam_scores.len() as f64,
            exam_scores,
            knowledge_accuracy: acc(ItemKind::Knowledge),
            scenario_accuracy: acc(ItemKind::Scenario),
        });
    }

    let mut group_sheets: BTreeMap<RespondentGroup, Vec<ResponseSheet>> = BTreeMap::new();
    for s in sheets {
        group_sheets.entry(s.group).or_default().push(s.clone());
    }
    let groups = group_sheets
        .iter()
        .map(|(&group, members)| {
            let scores: Vec<f64> =
                respondents.iter().filter(|r| r.group == group).map(|r| r.mean_score).collect();
            GroupSummary {
                group,
                n: members.len(),
                mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
                knowledge_accuracy: subgroup_accuracy(members, items, ItemKind::Knowledge).ok(),
                scenario_accuracy: subgroup_accuracy(members, items, ItemKind::Scenario).ok(),
            }
        })
        .collect();

    let score_rows: Vec<Vec<f64>> = respondents.iter().map(|r| r.exam_scores.clone()).collect();
    let labels: Vec<String> = respondents.iter().map(|r| r.group.to_string()).collect();
    let mut posthoc = Vec::new();
    let anova = match mixed_rm_anova(&score_rows, &labels) {
        Ok(a) => {
            // Group means are means over exams, so the error mean square is scaled by the exam count.
            match lsd_posthoc(&a.group_means, a.ms_between_error, a.df_between_error, exam_ids.len() as f64) {
                Ok(pairs) => posthoc = pairs.into_iter().map(|(a, b, result)| PairComparison { a, b, result }).collect(),
                Err(e) => notes.push(format!("post-hoc skipped: {e}")),
            }
            Some(a)
        }
        Err(e) => {
            notes.push(format!("RM-ANOVA skipped: {e}"));
            None
        }
    };

    let mut system_vs_individuals = Vec::new();
    let count = |s: &ResponseSheet| {
        let c = items.iter().filter(|i| s.correct(i)).count() as f64;
        vec![c, items.len() as f64 - c]
    };
    for sys in sheets.iter().filter(|s| s.group == RespondentGroup::System) {
        for human in sheets.iter().filter(|s| s.group != RespondentGroup::System) {
            match chi_square_independence(&[count(sys), count(human)]) {
                Ok(result) => system_vs_individuals.push(PairComparison {
                    a: sys.respondent_id.clone(),
                    b: human.respondent_id.clone(),
                    result,
                }),
                Err(e) => notes.push(format!("chi-square {} vs {} skipped: {e}", sys.respondent_id, human.respondent_id)),
            }
        }
    }

    let mut agreement = Vec::new();
    for (&group, members) in &group_sheets {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let choices = |s: &ResponseSheet| items.iter().map(|it| s.answers.get(&it.item_id).copied()).collect::<Vec<_>>();
                if let Ok(kappa) = cohen_kappa(&choices(&members[i]), &choices(&members[j])) {
                    agreement.push(Agreement {
                        group,
                        a: members[i].respondent_id.clone(),
                        b: members[j].respondent_id.clone(),
                        kappa,
                    });
                }
            }
        }
    }

    Ok(ScqReport { exam_ids, respondents, groups, anova, posthoc, system_vs_individuals, agreement, notes })
}

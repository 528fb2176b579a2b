//! Evaluations print one long-format table: `section,subject,measure,value`.

use myopia_eval::exam::{load_items, load_responses, scq_report};
use myopia_eval::questionnaire::{load_questionnaires, rct_report, SubscaleMap};
use myopia_eval::ratings::{load_ratings, ratings_report};
use myopia_eval::StatResult;

use crate::output::{Cell, Table};
use crate::{CliError, EvalCommand};

struct Rows(Table);

impl Rows {
    fn new() -> Self {
        Self(Table::new(&["section", "subject", "measure", "value"]))
    }

    fn put(&mut self, section: &str, subject: &str, measure: &str, value: impl Into<Cell>) {
        self.0.push(vec![section.into(), subject.into(), measure.into(), value.into()]);
    }

    fn stat(&mut self, section: &str, subject: &str, r: &StatResult) {
        self.put(section, subject, "method", r.method.as_str());
        self.put(section, subject, "statistic", r.statistic);
        if let Some(df) = r.df {
            self.put(section, subject, "df", df);
        }
        if let Some(df2) = r.df2 {
            self.put(section, subject, "df2", df2);
        }
        self.put(section, subject, "p_value", r.p_value);
        self.put(section, subject, "p_mode", format!("{:?}", r.mode).to_lowercase());
    }

    fn stat_or_note(&mut self, section: &str, subject: &str, r: &Result<StatResult, String>) {
        match r {
            Ok(r) => self.stat(section, subject, r),
            Err(e) => self.put(section, subject, "unavailable", e.as_str()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

pub fn run(cmd: &EvalCommand) -> Result<Table, CliError> {
    let mut rows = Rows::new();
    match cmd {
        EvalCommand::Scq { items, responses } => {
            let items = load_items(items).map_err(invalid)?;
            let sheets = load_responses(responses, &items).map_err(invalid)?;
            let report = scq_report(&items, &sheets).map_err(invalid)?;
            for g in &report.groups {
                let name = g.group.to_string();
                rows.put("group", &name, "n", g.n);
                rows.put("group", &name, "mean_score", g.mean_score);
                rows.put("group", &name, "knowledge_accuracy", g.knowledge_accuracy);
                rows.put("group", &name, "scenario_accuracy", g.scenario_accuracy);
            }
            for r in &report.respondents {
                let id = r.respondent_id.as_str();
                rows.put("respondent", id, "group", r.group.to_string());
                for (exam, score) in report.exam_ids.iter().zip(&r.exam_scores) {
                    rows.put("respondent", id, &format!("exam_{exam}"), *score);
                }
                rows.put("respondent", id, "mean_score", r.mean_score);
                rows.put("respondent", id, "knowledge_accuracy", r.knowledge_accuracy);
                rows.put("respondent", id, "scenario_accuracy", r.scenario_accuracy);
            }
            if let Some(a) = &report.anova {
                rows.stat("anova", "group", &a.group);
                rows.stat("anova", "exam", &a.exam);
                rows.stat("anova", "group_x_exam", &a.interaction);
            }
            for p in &report.posthoc {
                rows.stat("posthoc", &format!("{} vs {}", p.a, p.b), &p.result);
            }
            for p in &report.system_vs_individuals {
                rows.stat("system_vs_individual", &format!("{} vs {}", p.a, p.b), &p.result);
            }
            for a in &report.agreement {
                rows.put("agreement", &format!("{} vs {}", a.a, a.b), "kappa", a.kappa);
            }
            for n in &report.notes {
                rows.put("note", "", "text", n.as_str());
            }
        }
        EvalCommand::Ratings { ratings } => {
            let records = load_ratings(ratings).map_err(invalid)?;
            let report = ratings_report(&records).map_err(invalid)?;
            for d in &report.distribution {
                let subject = format!("{}/{}", d.source, d.criterion);
                rows.put("distribution", &subject, "n", d.n);
                for level in 0..3 {
                    rows.put("distribution", &subject, &format!("count_{}", level + 1), d.counts[level]);
                    rows.put("distribution", &subject, &format!("percent_{}", level + 1), d.percent[level]);
                }
            }
            let adjudicated = report.adjudicated.iter().filter(|a| a.adjudicated).count();
            rows.put("adjudication", "all", "third_rater_decisions", adjudicated);
            for a in &report.agreement {
                let subject = format!("{} vs {}", a.rater_a, a.rater_b);
                rows.put("agreement", &subject, "n", a.n);
                rows.put("agreement", &subject, "kappa", a.kappa);
            }
            for c in &report.comparisons {
                rows.stat_or_note("comparison", &format!("{}/{}", c.criterion, c.label), &c.result);
            }
        }
        EvalCommand::Rct { questionnaires, cmissr_map, dcs_map } => {
            let responses = load_questionnaires(questionnaires).map_err(invalid)?;
            let cmissr = match cmissr_map {
                Some(spec) => SubscaleMap::parse(spec).map_err(invalid)?,
                None => SubscaleMap::default_cmissr(),
            };
            let dcs = match dcs_map {
                Some(spec) => SubscaleMap::parse(spec).map_err(invalid)?,
                None => SubscaleMap::default(),
            };
            let report = rct_report(&responses, &cmissr, &dcs).map_err(invalid)?;
            for c in &report.comparisons {
                rows.put("arms", &c.outcome, "n_agent", c.n_agent);
                rows.put("arms", &c.outcome, "n_leaflet", c.n_leaflet);
                rows.put("arms", &c.outcome, "mean_agent", c.mean_agent);
                rows.put("arms", &c.outcome, "mean_leaflet", c.mean_leaflet);
                rows.stat_or_note("arms", &c.outcome, &c.result);
            }
            for c in &report.correlations {
                let subject = format!("{} ~ {}", c.x, c.y);
                rows.put("correlation", &subject, "n", c.n);
                rows.stat_or_note("correlation", &subject, &c.result);
            }
        }
    }
    Ok(rows.0)
}

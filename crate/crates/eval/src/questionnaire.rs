//! Trial questionnaires: C-MISS-R satisfaction, the 7-aspect perspective
//! scale and the Decision Conflict Scale, plus the between-arm comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fixtures::{read_csv, FixtureError};
use crate::stats::{mann_whitney_u, spearman_rho, StatResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Agent,
    Leaflet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Cmissr,
    Perspective,
    Dcs,
}

impl Instrument {
    pub fn item_count(self) -> usize {
        match self {
            Instrument::Cmissr | Instrument::Dcs => 10,
            Instrument::Perspective => 7,
        }
    }

    /// Inclusive item score range.
    pub fn range(self) -> (u8, u8) {
        match self {
            Instrument::Cmissr | Instrument::Perspective => (1, 5),
            Instrument::Dcs => (0, 4),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Cmissr => "cmissr",
            Instrument::Perspective => "perspective",
            Instrument::Dcs => "dcs",
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuestionnaireError {
    #[error("{instrument} needs {expected} items, got {actual}")]
    ItemCount { instrument: Instrument, expected: usize, actual: usize },
    #[error("{instrument} item {item} = {value} is outside {min}..={max}")]
    OutOfRange { instrument: Instrument, item: usize, value: u8, min: u8, max: u8 },
    #[error("invalid subscale map: {0}")]
    BadMap(String),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

/// Named subsets of 1-based item indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubscaleMap(pub BTreeMap<String, Vec<usize>>);

impl SubscaleMap {
    /// Items 1–5 cognitive and 6–10 affective. The published instrument's
    /// mapping is not reproduced here; replace this with the validated one.
    pub fn default_cmissr() -> Self {
        Self(BTreeMap::from([("cognitive".to_string(), (1..=5).collect()), ("affective".to_string(), (6..=10).collect())]))
    }

    /// Parses `name=1-5;other=6,7,8`.
    pub fn parse(spec: &str) -> Result<Self, QuestionnaireError> {
        let bad = |m: String| QuestionnaireError::BadMap(m);
        let mut map = BTreeMap::new();
        for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, items) = part.split_once('=').ok_or_else(|| bad(format!("{part:?} lacks '='")))?;
            let mut idx = Vec::new();
            for tok in items.split(',').map(str::trim) {
                let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(format!("bad item index {s:?}")));
                match tok.split_once('-') {
                    Some((a, b)) => idx.extend(num(a)?..=num(b)?),
                    None => idx.push(num(tok)?),
                }
            }
            map.insert(name.trim().to_string(), idx);
        }
        Ok(Self(map))
    }

    fn validate(&self, n_items: usize, partition: bool) -> Result<(), QuestionnaireError> {
        let mut seen = vec![0usize; n_items];
        for (name, items) in &self.0 {
            if items.is_empty() {
                return Err(QuestionnaireError::BadMap(format!("subscale {name} has no items")));
            }
            for &i in items {
                if !(1..=n_items).contains(&i) {
                    return Err(QuestionnaireError::BadMap(format!("subscale {name} lists item {i} outside 1..={n_items}")));
                }
                seen[i - 1] += 1;
            }
        }
        if partition && seen.iter().any(|&c| c != 1) {
            return Err(QuestionnaireError::BadMap("subscales must cover every item exactly once".into()));
        }
        Ok(())
    }
}

fn check_items(instrument: Instrument, items: &[u8]) -> Result<(), QuestionnaireError> {
    if items.len() != instrument.item_count() {
        return Err(QuestionnaireError::ItemCount {
            instrument,
            expected: instrument.item_count(),
            actual: items.len(),
        });
    }
    let (min, max) = instrument.range();
    if let Some((i, &v)) = items.iter().enumerate().find(|(_, v)| !(min..=max).contains(*v)) {
        return Err(QuestionnaireError::OutOfRange { instrument, item: i + 1, value: v, min, max });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleScore {
    pub total: f64,
    pub subscales: BTreeMap<String, f64>,
}

/// Total and subscale sums. The map must partition the 10 items.
pub fn score_cmissr(items: &[u8], map: &SubscaleMap) -> Result<ScaleScore, QuestionnaireError> {
    check_items(Instrument::Cmissr, items)?;
    map.validate(10, true)?;
    let sum = |idx: &[usize]| idx.iter().map(|&i| items[i - 1] as f64).sum::<f64>();
    Ok(ScaleScore {
        total: items.iter().map(|&v| v as f64).sum(),
        subscales: map.0.iter().map(|(k, v)| (k.clone(), sum(v))).collect(),
    })
}

/// Mean item score × 25 on 0–100, for the total and each mapped subdomain.
pub fn score_dcs(items: &[u8], map: &SubscaleMap) -> Result<ScaleScore, QuestionnaireError> {
    check_items(Instrument::Dcs, items)?;
    map.validate(10, false)?;
    let scaled = |idx: &[usize]| idx.iter().map(|&i| items[i - 1] as f64).sum::<f64>() / idx.len() as f64 * 25.0;
    let all: Vec<usize> = (1..=10).collect();
    Ok(ScaleScore { total: scaled(&all), subscales: map.0.iter().map(|(k, v)| (k.clone(), scaled(v))).collect() })
}

/// Sum of the 7 aspects, each item kept as its own outcome.
pub fn score_perspective(items: &[u8]) -> Result<ScaleScore, QuestionnaireError> {
    check_items(Instrument::Perspective, items)?;
    Ok(ScaleScore {
        total: items.iter().map(|&v| v as f64).sum(),
        subscales: items.iter().enumerate().map(|(i, &v)| (format!("item{}", i + 1), v as f64)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionnaireResponse {
    pub participant_id: String,
    pub arm: Arm,
    pub instrument: Instrument,
    /// Item scores in item order.
    pub items: Vec<u8>,
}

#[derive(Deserialize)]
struct Row {
    participant_id: String,
    arm: Arm,
    instrument: Instrument,
    item_index: usize,
    value: u8,
}

/// Reads `participant_id,arm,instrument,item_index,value` (1-based item index).
pub fn load_questionnaires(path: &Path) -> Result<Vec<QuestionnaireResponse>, QuestionnaireError> {
    let mut sheets: BTreeMap<(String, Instrument), (Arm, BTreeMap<usize, u8>, u64)> = BTreeMap::new();
    for (line, row) in read_csv::<Row>(path)? {
        let err = |m: String| QuestionnaireError::Fixture(FixtureError::new(path, Some(line), m));
        let n = row.instrument.item_count();
        if !(1..=n).contains(&row.item_index) {
            return Err(err(format!("item_index {} outside 1..={n} for {}", row.item_index, row.instrument)));
        }
        let (min, max) = row.instrument.range();
        if !(min..=max).contains(&row.value) {
            return Err(err(format!("value {} outside {min}..={max} for {}", row.value, row.instrument)));
        }
        let entry = sheets
            .entry((row.participant_id.clone(), row.instrument))
            .or_insert_with(|| (row.arm, BTreeMap::new(), line));
        if entry.0 != row.arm {
            return Err(err(format!("participant {} appears in both arms", row.participant_id)));
        }
        if entry.1.insert(row.item_index, row.value).is_some() {
            return Err(err(format!("duplicate item {} for participant {}", row.item_index, row.participant_id)));
        }
    }
    let mut arms: BTreeMap<&str, Arm> = BTreeMap::new();
    let mut out = Vec::new();
    for ((pid, instrument), (arm, items, first_line)) in &sheets {
        if *arms.entry(pid).or_insert(*arm) != *arm {
            return Err(FixtureError::new(path, Some(*first_line), format!("participant {pid} appears in both arms")).into());
        }
        if items.len() != instrument.item_count() {
            return Err(FixtureError::new(
                path,
                Some(*first_line),
                format!("participant {pid} has {} of {} {instrument} items", items.len(), instrument.item_count()),
            )
            .into());
        }
        out.push(QuestionnaireResponse {
            participant_id: pid.clone(),
            arm: *arm,
            instrument: *instrument,
            items: items.values().copied().collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmComparison {
    /// e.g. `cmissr.total`, `cmissr.cognitive`, `perspective.item3`.
    pub outcome: String,
    pub n_agent: usize,
    pub n_leaflet: usize,
    pub mean_agent: f64,
    pub mean_leaflet: f64,
    pub result: Result<StatResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub x: String,
    pub y: String,
    pub n: usize,
    pub result: Result<StatResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RctReport {
    pub comparisons: Vec<ArmComparison>,
    pub correlations: Vec<Correlation>,
}

/// Mann-Whitney comparisons of every outcome between arms, and Spearman
/// correlations of the C-MISS-R total with each perspective aspect.
pub fn rct_report(
    responses: &[QuestionnaireResponse],
    cmissr_map: &SubscaleMap,
    dcs_map: &SubscaleMap,
) -> Result<RctReport, QuestionnaireError> {
    // outcome → participant → (arm, value)
    let mut outcomes: BTreeMap<String, BTreeMap<&str, (Arm, f64)>> = BTreeMap::new();
    for r in responses {
        let score = match r.instrument {
            Instrument::Cmissr => score_cmissr(&r.items, cmissr_map)?,
            Instrument::Dcs => score_dcs(&r.items, dcs_map)?,
            Instrument::Perspective => score_perspective(&r.items)?,
        };
        let mut put = |name: String, v: f64| {
            outcomes.entry(name).or_default().insert(r.participant_id.as_str(), (r.arm, v));
        };
        put(format!("{}.total", r.instrument), score.total);
        for (k, v) in score.subscales {
            put(format!("{}.{k}", r.instrument), v);
        }
    }

    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mut comparisons = Vec::new();
    for (name, values) in &outcomes {
        let pick = |arm| values.values().filter(|(a, _)| *a == arm).map(|(_, v)| *v).collect::<Vec<_>>();
        let (a, l) = (pick(Arm::Agent), pick(Arm::Leaflet));
        comparisons.push(ArmComparison {
            outcome: name.clone(),
            n_agent: a.len(),
            n_leaflet: l.len(),
            mean_agent: mean(&a),
            mean_leaflet: mean(&l),
            result: mann_whitney_u(&a, &l).map_err(|e| e.to_string()),
        });
    }

    let mut correlations = Vec::new();
    if let Some(sat) = outcomes.get("cmissr.total") {
        for (name, values) in outcomes.iter().filter(|(k, _)| k.starts_with("perspective.item")) {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                sat.iter().filter_map(|(pid, (_, x))| values.get(pid).map(|(_, y)| (*x, *y))).unzip();
            correlations.push(Correlation {
                x: "cmissr.total".into(),
                y: name.clone(),
                n: xs.len(),
                result: spearman_rho(&xs, &ys).map_err(|e| e.to_string()),
            });
        }
    }
    Ok(RctReport { comparisons, correlations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cmissr_scoring() {
        let map = SubscaleMap::default_cmissr();
        let s = score_cmissr(&[1; 10], &map).unwrap();
        assert_eq!(s.total, 10.0);
        let s = score_cmissr(&[3; 10], &map).unwrap();
        assert_eq!((s.subscales["cognitive"], s.subscales["affective"]), (15.0, 15.0));
        assert!(matches!(score_cmissr(&[3; 9], &map), Err(QuestionnaireError::ItemCount { .. })));
        assert!(score_cmissr(&[3; 10], &SubscaleMap::parse("a=1-5;b=5-10").unwrap()).is_err());
    }

    #[test]
    fn dcs_scoring() {
        let none = SubscaleMap::default();
        assert_eq!(score_dcs(&[0; 10], &none).unwrap().total, 0.0);
        assert_eq!(score_dcs(&[4; 10], &none).unwrap().total, 100.0);
        let s = score_dcs(&[1, 1, 1, 1, 2, 2, 2, 2, 3, 3], &SubscaleMap::parse("uncertainty=1-3").unwrap()).unwrap();
        assert!((s.total - 45.0).abs() < 1e-12);
        assert_eq!(s.subscales["uncertainty"], 25.0);
        assert!(matches!(score_dcs(&[5; 10], &none), Err(QuestionnaireError::OutOfRange { .. })));
    }

    #[test]
    fn map_parsing() {
        let m = SubscaleMap::parse("cognitive=1-3,5; affective = 4,6-10").unwrap();
        assert_eq!(m.0["cognitive"], vec![1, 2, 3, 5]);
        assert_eq!(m.0["affective"], vec![4, 6, 7, 8, 9, 10]);
        assert!(SubscaleMap::parse("x").is_err());
    }

    #[test]
    fn identical_arms_give_p_one() {
        let mut rs = Vec::new();
        for (i, v) in [3u8, 4, 5, 4, 3, 2].iter().enumerate() {
            for arm in [Arm::Agent, Arm::Leaflet] {
                rs.push(QuestionnaireResponse {
                    participant_id: format!("{arm:?}{i}"),
                    arm,
                    instrument: Instrument::Cmissr,
                    items: vec![*v; 10],
                });
            }
        }
        let r = rct_report(&rs, &SubscaleMap::default_cmissr(), &SubscaleMap::default()).unwrap();
        let total = r.comparisons.iter().find(|c| c.outcome == "cmissr.total").unwrap();
        assert_eq!(total.result.as_ref().unwrap().p_value, 1.0);
    }
}

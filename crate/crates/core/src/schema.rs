//! Feature vocabulary, behavioral windows, labels, and score types shared
//! by every other module.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of days in a behavioral window.
pub const DEFAULT_WINDOW_LEN: usize = 14;

/// Behavioral domain a sensing feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Sleep,
    Mobility,
    Activity,
    PhoneUse,
    Communication,
}

/// One sensing feature: stable key, descriptive label, unit, domain, and a
/// one-sentence semantic description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub key: String,
    pub label: String,
    pub unit: String,
    pub domain: Domain,
    pub description: String,
}

/// Identifier for a feature schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum SchemaName {
    Globem,
    CollegeExperience,
    Custom(String),
}

impl From<SchemaName> for String {
    fn from(n: SchemaName) -> String {
        match n {
            SchemaName::Globem => "GLOBEM".to_string(),
            SchemaName::CollegeExperience => "CollegeExperience".to_string(),
            SchemaName::Custom(s) => s,
        }
    }
}

impl From<String> for SchemaName {
    fn from(s: String) -> SchemaName {
        match s.as_str() {
            "GLOBEM" => SchemaName::Globem,
            "CollegeExperience" => SchemaName::CollegeExperience,
            _ => SchemaName::Custom(s),
        }
    }
}

/// An ordered feature vocabulary of `d` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: SchemaName,
    pub features: Vec<FeatureSpec>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown built-in schema name: {0}")]
    UnknownName(String),
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("failed to read schema file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse schema file: {0}")]
    Json(#[from] serde_json::Error),
}

impl FeatureSchema {
    /// Returns a built-in schema by name (`"GLOBEM"` or `"CollegeExperience"`).
    pub fn builtin(name: &str) -> Result<FeatureSchema, SchemaError> {
        match name {
            "GLOBEM" => Ok(globem_schema()),
            "CollegeExperience" => Ok(college_experience_schema()),
            other => Err(SchemaError::UnknownName(other.to_string())),
        }
    }

    /// Loads a custom schema from a JSON file and checks its invariants.
    pub fn from_json_file(path: &Path) -> Result<FeatureSchema, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        let schema: FeatureSchema = serde_json::from_str(&text)?;
        schema.check()?;
        Ok(schema)
    }

    /// Number of features `d`.
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.features.iter().any(|f| f.key == key)
    }

    pub fn feature(&self, key: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.key == key)
    }

    /// Validates the schema invariants: at least one feature, pairwise
    /// distinct non-empty keys, non-empty units.
    pub fn check(&self) -> Result<(), SchemaError> {
        if self.features.is_empty() {
            return Err(SchemaError::Invalid("schema has no features".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            if f.key.is_empty() {
                return Err(SchemaError::Invalid("empty feature key".into()));
            }
            if f.unit.is_empty() {
                return Err(SchemaError::Invalid(format!("feature {} has empty unit", f.key)));
            }
            if !seen.insert(f.key.as_str()) {
                return Err(SchemaError::Invalid(format!("duplicate feature key {}", f.key)));
            }
        }
        Ok(())
    }
}

fn spec(key: &str, label: &str, unit: &str, domain: Domain, description: &str) -> FeatureSpec {
    FeatureSpec {
        key: key.to_string(),
        label: label.to_string(),
        unit: unit.to_string(),
        domain,
        description: description.to_string(),
    }
}

fn globem_schema() -> FeatureSchema {
    use Domain::*;
    FeatureSchema {
        name: SchemaName::Globem,
        features: vec![
            spec(
                "f_slp:fitbit_sleep_intraday_rapids_sumdurationasleepunifiedmain",
                "Total time asleep",
                "minutes",
                Sleep,
                "Total time asleep during the main sleep period; sleep quantity.",
            ),
            spec(
                "f_slp:fitbit_sleep_intraday_rapids_ratiodurationasleepunifiedwithinmain",
                "Sleep efficiency",
                "ratio (0-1)",
                Sleep,
                "Proportion of time in bed actually asleep; sleep efficiency.",
            ),
            spec(
                "f_loc:phone_locations_doryab_timeathome",
                "Time at home",
                "minutes",
                Mobility,
                "Time spent at the inferred home location; stay-at-home behavior.",
            ),
            spec(
                "f_loc:phone_locations_doryab_numberofsignificantplaces",
                "Significant places visited",
                "count",
                Mobility,
                "Number of unique significant locations visited; life-space breadth.",
            ),
            spec(
                "f_loc:phone_locations_locmap_duration_in_locmap_greens",
                "Time in green spaces",
                "minutes",
                Mobility,
                "Time spent in green spaces or parks; restorative out-of-home context.",
            ),
            spec(
                "f_loc:phone_locations_barnett_circdnrtn",
                "Mobility routine deviation",
                "index (0-1)",
                Mobility,
                "Deviation of the daily mobility pattern from the user's norm; routine consistency.",
            ),
            spec(
                "f_steps:fitbit_steps_intraday_rapids_sumsteps",
                "Daily steps",
                "count",
                Activity,
                "Total daily step count; overall movement volume.",
            ),
            spec(
                "f_steps:fitbit_steps_intraday_rapids_avgdurationactivebout",
                "Average active bout length",
                "minutes",
                Activity,
                "Average length of sustained active bouts; intentional activity vs. incidental motion.",
            ),
            spec(
                "f_screen:phone_screen_rapids_countepisodeunlock",
                "Phone unlock episodes",
                "count",
                PhoneUse,
                "Number of phone unlock episodes; device-checking frequency.",
            ),
            spec(
                "f_screen:phone_screen_rapids_firstuseafter00unlock",
                "First unlock after midnight",
                "minutes",
                PhoneUse,
                "Minutes after midnight until the first unlock; morning-activation timing.",
            ),
            spec(
                "f_call:phone_calls_rapids_outgoing_sumduration",
                "Outgoing call duration",
                "minutes",
                Communication,
                "Total outgoing call duration; active social initiative.",
            ),
            spec(
                "f_blue:phone_bluetooth_doryab_uniquedevicesothers",
                "Unique Bluetooth devices nearby",
                "count",
                Communication,
                "Unique nearby Bluetooth devices; ambient social density.",
            ),
        ],
    }
}

fn college_experience_schema() -> FeatureSchema {
    use Domain::*;
    FeatureSchema {
        name: SchemaName::CollegeExperience,
        features: vec![
            spec(
                "sleep_duration",
                "Sleep duration",
                "hours",
                Sleep,
                "Estimated total time asleep for the day; sleep quantity.",
            ),
            spec(
                "sleep_start",
                "Sleep start time",
                "8-min bins",
                Sleep,
                "Sleep onset time as offset from 8:00 PM; bedtime regularity.",
            ),
            spec(
                "sleep_end",
                "Sleep end time",
                "8-min bins",
                Sleep,
                "Wake time as offset from 8:00 PM; morning-activation timing.",
            ),
            spec(
                "loc_home_dur",
                "Time at home",
                "hours",
                Mobility,
                "Time spent at the inferred home location; stay-at-home behavior.",
            ),
            spec(
                "loc_visit_num_ep_0",
                "Locations visited",
                "count",
                Mobility,
                "Number of distinct locations visited; life-space breadth.",
            ),
            spec(
                "loc_dist_ep_0",
                "Distance traveled",
                "meters",
                Mobility,
                "Total distance traveled; overall mobility volume.",
            ),
            spec(
                "loc_social_dur",
                "Time at social locations",
                "hours",
                Mobility,
                "Time at social locations; in-person social engagement.",
            ),
            spec(
                "loc_study_dur",
                "Time at study locations",
                "hours",
                Mobility,
                "Time at study locations such as libraries; academic engagement.",
            ),
            spec(
                "loc_leisure_dur",
                "Time at leisure locations",
                "hours",
                Mobility,
                "Time at leisure locations such as parks or shops; restorative context.",
            ),
            spec(
                "loc_food_dur",
                "Time at food locations",
                "hours",
                Mobility,
                "Time at food locations; routine eating context.",
            ),
            spec(
                "loc_workout_dur",
                "Time at workout locations",
                "hours",
                Mobility,
                "Time at workout locations such as gyms; intentional activity.",
            ),
            spec(
                "act_still_ep_0",
                "Stationary time",
                "seconds",
                Activity,
                "Total stationary duration; physical inactivity.",
            ),
            spec(
                "act_walking_ep_0",
                "Walking time",
                "seconds",
                Activity,
                "Total walking duration; everyday movement volume.",
            ),
            spec(
                "unlock_num_ep_0",
                "Phone unlocks",
                "count",
                PhoneUse,
                "Number of phone unlock events; device-checking frequency.",
            ),
            spec(
                "unlock_duration_ep_0",
                "Phone unlocked time",
                "seconds",
                PhoneUse,
                "Total time the phone was in the unlocked state; overall device engagement.",
            ),
        ],
    }
}

/// One day of sensing data. Missing values are encoded by absent keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub subject_id: String,
    pub date: NaiveDate,
    pub values: BTreeMap<String, f64>,
}

impl DailyRecord {
    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// `T` consecutive days of data for one subject, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralWindow {
    pub subject_id: String,
    pub days: Vec<DailyRecord>,
}

impl BehavioralWindow {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Mean of a feature over the days where it is present.
    pub fn feature_mean(&self, key: &str) -> Option<f64> {
        let vals: Vec<f64> = self.days.iter().filter_map(|d| d.value(key)).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("window has {got} days, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("dates not consecutive: {prev} is not followed by {next}")]
    NonConsecutiveDates { prev: NaiveDate, next: NaiveDate },
    #[error("window mixes subjects: expected {expected}, found {found}")]
    MixedSubjects { expected: String, found: String },
    #[error("unknown feature key in window: {key}")]
    UnknownFeatureKey { key: String },
}

/// Checks the window invariants against a schema: expected length, strictly
/// consecutive dates, single subject, and all value keys in the schema.
pub fn validate_window(
    w: &BehavioralWindow,
    schema: &FeatureSchema,
    expected_len: usize,
) -> Result<(), WindowError> {
    if w.days.len() != expected_len {
        return Err(WindowError::WrongLength { expected: expected_len, got: w.days.len() });
    }
    for pair in w.days.windows(2) {
        let next_expected = pair[0].date.succ_opt().expect("date overflow");
        if pair[1].date != next_expected {
            return Err(WindowError::NonConsecutiveDates { prev: pair[0].date, next: pair[1].date });
        }
    }
    for day in &w.days {
        if day.subject_id != w.subject_id {
            return Err(WindowError::MixedSubjects {
                expected: w.subject_id.clone(),
                found: day.subject_id.clone(),
            });
        }
        for key in day.values.keys() {
            if !schema.contains_key(key) {
                return Err(WindowError::UnknownFeatureKey { key: key.clone() });
            }
        }
    }
    Ok(())
}

/// An ordinal questionnaire subscore in 0..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Score(u8);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("score {0} out of range 0..=6")]
pub struct ScoreOutOfRange(pub u64);

impl Score {
    pub const MIN: u8 = 0;
    pub const MAX: u8 = 6;

    pub fn new(value: u8) -> Result<Score, ScoreOutOfRange> {
        if value <= Score::MAX {
            Ok(Score(value))
        } else {
            Err(ScoreOutOfRange(value as u64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// All seven valid scores in ascending order.
    pub fn all() -> impl Iterator<Item = Score> {
        (Score::MIN..=Score::MAX).map(Score)
    }
}

impl TryFrom<u8> for Score {
    type Error = ScoreOutOfRange;
    fn try_from(v: u8) -> Result<Score, ScoreOutOfRange> {
        Score::new(v)
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

impl std::fmt::Display for Score {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which subscore of a labeled sample is the prediction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Anxiety,
    Depression,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Anxiety => "anxiety",
            TaskKind::Depression => "depression",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "anxiety" => Ok(TaskKind::Anxiety),
            "depression" => Ok(TaskKind::Depression),
            other => Err(format!("unknown task: {other} (expected anxiety|depression)")),
        }
    }
}

/// A behavioral window paired with its questionnaire labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub window: BehavioralWindow,
    pub label_date: NaiveDate,
    pub subset: String,
    pub anxiety: Score,
    pub depression: Score,
}

impl LabeledSample {
    /// The target score for the given task.
    pub fn target(&self, task: TaskKind) -> Score {
        match task {
            TaskKind::Anxiety => self.anxiety,
            TaskKind::Depression => self.depression,
        }
    }
}

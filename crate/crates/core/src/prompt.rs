//! Deterministic prompt rendering for both stages.
//!
//! Stage 1 lays the raw window out day by day with descriptive labels and
//! units. Stage 2 sees nothing but the summary text and the task name, so
//! the bottleneck holds by construction.

use thiserror::Error;

use crate::schema::{validate_window, BehavioralWindow, FeatureSchema, TaskKind, WindowError};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("summary is empty after trimming")]
    EmptySummary,
}

/// Formats a value as the shortest decimal with at most two fractional
/// digits, rounding ties to even and trimming trailing zeros.
pub fn format_value(value: f64) -> String {
    let scaled = (value * 100.0).round_ties_even();
    let v = scaled / 100.0;
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

/// Renders the Stage-1 abstraction prompt for a window.
///
/// Every present value appears with its descriptive label and unit in
/// schema order; missing values render as "not recorded". The exact line
/// grammar is a stable contract: tests and the toy policy parse it back.
pub fn render_stage1(w: &BehavioralWindow, schema: &FeatureSchema) -> Result<String, PromptError> {
    validate_window(w, schema, w.len())?;
    if w.is_empty() {
        return Err(PromptError::Window(WindowError::WrongLength { expected: 1, got: 0 }));
    }
    let t = w.len();
    let mut out = String::new();
    out.push_str(&format!(
        "You are analyzing {t} days of passive sensing data for one person.\n"
    ));
    out.push_str("Data (one block per day, oldest first):\n");
    for (i, day) in w.days.iter().enumerate() {
        out.push_str(&format!("Day {} ({}):\n", i + 1, day.date.format("%Y-%m-%d")));
        for f in &schema.features {
            match day.value(&f.key) {
                Some(v) => {
                    out.push_str(&format!("- {}: {} {}\n", f.label, format_value(v), f.unit))
                }
                None => out.push_str(&format!("- {}: not recorded\n", f.label)),
            }
        }
    }
    out.push_str(
        "Task: Summarize this person's behavioral patterns, trajectories, and notable \
         fluctuations over the full period in natural language. Do not restate every number.",
    );
    Ok(out)
}

/// Renders the Stage-2 inference prompt from a summary alone.
///
/// The output depends only on the summary text and the task name; it embeds
/// the summary verbatim exactly once.
pub fn render_stage2(summary: &str, task: TaskKind) -> Result<String, PromptError> {
    if summary.trim().is_empty() {
        return Err(PromptError::EmptySummary);
    }
    Ok(format!(
        "You are given a behavioral summary of one person's past two weeks.\n\
         Summary:\n\
         {summary}\n\
         Based only on this summary, infer the person's PHQ-4 {task} subscore, an integer \
         from 0 to 6 where 0 means no symptoms and 6 means severe symptoms.\n\
         Respond with exactly one line: score: <integer>",
        summary = summary,
        task = task.name(),
    ))
}

/// Pulls the embedded summary back out of a Stage-2 prompt.
///
/// Used by the toy policy, which receives only prompt text through the
/// provider interface.
pub fn extract_stage2_summary(prompt: &str) -> Option<&str> {
    let start = prompt.find("Summary:\n")? + "Summary:\n".len();
    let end = prompt[start..].rfind("\nBased only on this summary,")? + start;
    Some(&prompt[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{DailyRecord, Domain, FeatureSpec, SchemaName};
    use chrono::NaiveDate;

    fn tiny_schema() -> FeatureSchema {
        FeatureSchema {
            name: SchemaName::Custom("tiny".to_string()),
            features: vec![FeatureSpec {
                key: "sleep_duration".to_string(),
                label: "Total sleep".to_string(),
                unit: "hours".to_string(),
                domain: Domain::Sleep,
                description: "Total time asleep.".to_string(),
            }],
        }
    }

    fn one_day_window(value: Option<f64>) -> BehavioralWindow {
        let date: NaiveDate = "2024-03-01".parse().unwrap();
        let mut values = std::collections::BTreeMap::new();
        if let Some(v) = value {
            values.insert("sleep_duration".to_string(), v);
        }
        BehavioralWindow {
            subject_id: "s1".to_string(),
            days: vec![DailyRecord { subject_id: "s1".to_string(), date, values }],
        }
    }

    #[test]
    fn stage1_exact_grammar() {
        let p = render_stage1(&one_day_window(Some(7.5)), &tiny_schema()).unwrap();
        let expected = "You are analyzing 1 days of passive sensing data for one person.\n\
             Data (one block per day, oldest first):\n\
             Day 1 (2024-03-01):\n\
             - Total sleep: 7.5 hours\n\
             Task: Summarize this person's behavioral patterns, trajectories, and notable \
             fluctuations over the full period in natural language. Do not restate every number.";
        assert_eq!(p, expected);
    }

    #[test]
    fn stage1_missing_value_renders_not_recorded() {
        let p = render_stage1(&one_day_window(None), &tiny_schema()).unwrap();
        assert!(p.contains("- Total sleep: not recorded\n"));
        assert!(!p.contains("not recorded hours"));
    }

    #[test]
    fn stage1_trims_trailing_zero() {
        let p = render_stage1(&one_day_window(Some(7.50)), &tiny_schema()).unwrap();
        assert!(p.contains("- Total sleep: 7.5 hours\n"));
    }

    #[test]
    fn value_formatting_rules() {
        assert_eq!(format_value(7.5), "7.5");
        assert_eq!(format_value(7.0), "7");
        assert_eq!(format_value(0.125), "0.12"); // ties to even
        assert_eq!(format_value(0.135), "0.14");
        assert_eq!(format_value(432.10), "432.1");
        assert_eq!(format_value(-0.001), "0");
        assert_eq!(format_value(1234.567), "1234.57");
    }

    #[test]
    fn stage1_is_deterministic_and_value_sensitive() {
        let s = tiny_schema();
        let a = render_stage1(&one_day_window(Some(7.5)), &s).unwrap();
        let b = render_stage1(&one_day_window(Some(7.5)), &s).unwrap();
        assert_eq!(a, b);
        let c = render_stage1(&one_day_window(Some(6.5)), &s).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stage2_names_task_and_embeds_summary_once() {
        let summary = "Stable sleep, declining mobility.";
        let p = render_stage2(summary, TaskKind::Anxiety).unwrap();
        assert!(p.contains("anxiety"));
        assert!(!p.contains("depression"));
        assert_eq!(p.matches(summary).count(), 1);

        let pd = render_stage2(summary, TaskKind::Depression).unwrap();
        assert!(pd.contains("depression"));
    }

    #[test]
    fn stage2_rejects_empty_summary() {
        assert!(matches!(render_stage2("   ", TaskKind::Anxiety), Err(PromptError::EmptySummary)));
    }

    #[test]
    fn stage2_depends_only_on_summary() {
        // identical summaries from different windows yield byte-identical
        // prompts; render_stage2 does not even see the window
        let a = render_stage2("same text", TaskKind::Anxiety).unwrap();
        let b = render_stage2("same text", TaskKind::Anxiety).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage2_summary_roundtrip() {
        let summary = "Multi-line\nsummary text.";
        let p = render_stage2(summary, TaskKind::Depression).unwrap();
        assert_eq!(extract_stage2_summary(&p), Some(summary));
    }
}

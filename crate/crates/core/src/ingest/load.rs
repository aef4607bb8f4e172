//! CSV loading and writing for feature and label tables.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};

use super::{Dataset, IngestError};
use crate::schema::{
    validate_window, BehavioralWindow, DailyRecord, FeatureSchema, LabeledSample, Score,
};

/// Windowing knobs for [`load_dataset`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Days per behavioral window.
    pub window_len: usize,
    /// Minimum number of window days with at least one present value.
    pub min_coverage: usize,
    /// When set, the window ends on the label day itself instead of the
    /// day before.
    pub include_label_day: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { window_len: 14, min_coverage: 10, include_label_day: false }
    }
}

fn malformed(path: &Path, detail: impl Into<String>) -> IngestError {
    IngestError::MalformedCsv { path: path.display().to_string(), detail: detail.into() }
}

type DayTable = BTreeMap<(String, NaiveDate), BTreeMap<String, f64>>;

fn read_features(
    path: &Path,
    schema: &FeatureSchema,
) -> Result<DayTable, IngestError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| malformed(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    let cols: Vec<String> = headers.iter().map(String::from).collect();
    if cols.len() < 2 || cols[0] != "subject_id" || cols[1] != "date" {
        return Err(malformed(path, "expected header subject_id,date,<feature keys>"));
    }
    for c in &cols[2..] {
        if !schema.contains_key(c) {
            return Err(IngestError::UnknownFeatureColumn { column: c.clone() });
        }
    }
    let mut table = DayTable::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(path, e.to_string()))?;
        if record.len() != cols.len() {
            return Err(malformed(path, format!("row {} has {} fields", i + 2, record.len())));
        }
        let subject = record[0].to_string();
        let date: NaiveDate = record[1]
            .parse()
            .map_err(|_| malformed(path, format!("row {}: bad date {:?}", i + 2, &record[1])))?;
        let mut values = BTreeMap::new();
        for (j, key) in cols[2..].iter().enumerate() {
            let cell = &record[j + 2];
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| malformed(path, format!("row {}: bad number {cell:?}", i + 2)))?;
            if !v.is_finite() {
                return Err(malformed(path, format!("row {}: non-finite value", i + 2)));
            }
            values.insert(key.clone(), v);
        }
        if table.insert((subject.clone(), date), values).is_some() {
            return Err(malformed(path, format!("duplicate feature row for {subject} on {date}")));
        }
    }
    Ok(table)
}

struct LabelRow {
    subject: String,
    date: NaiveDate,
    subset: String,
    anxiety: Score,
    depression: Score,
}

fn parse_score(path: &Path, row: usize, field: &str, raw: &str) -> Result<Score, IngestError> {
    let v: i64 = raw.parse().map_err(|_| {
        malformed(path, format!("row {row}: {field} is not an integer: {raw:?}"))
    })?;
    if !(0..=Score::MAX as i64).contains(&v) {
        return Err(IngestError::LabelOutOfRange {
            path: path.display().to_string(),
            row,
            detail: format!("{field}={v}"),
        });
    }
    Ok(Score::new(v as u8).unwrap())
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>, IngestError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| malformed(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| malformed(path, e.to_string()))?.clone();
    let expected = ["subject_id", "date", "subset", "anxiety", "depression"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(path, "expected header subject_id,date,subset,anxiety,depression"));
    }
    let mut rows = Vec::new();
    let mut seen: BTreeMap<(String, NaiveDate), ()> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(path, e.to_string()))?;
        let row_no = i + 2;
        if record.len() != 5 {
            return Err(malformed(path, format!("row {row_no} has {} fields", record.len())));
        }
        let subject = record[0].to_string();
        let date: NaiveDate = record[1]
            .parse()
            .map_err(|_| malformed(path, format!("row {row_no}: bad date {:?}", &record[1])))?;
        let subset = record[2].to_string();
        if subset.is_empty() {
            return Err(malformed(path, format!("row {row_no}: empty subset tag")));
        }
        if seen.insert((subject.clone(), date), ()).is_some() {
            return Err(IngestError::DuplicateLabelRow { subject, date: date.to_string() });
        }
        rows.push(LabelRow {
            subject,
            date,
            subset,
            anxiety: parse_score(path, row_no, "anxiety", &record[3])?,
            depression: parse_score(path, row_no, "depression", &record[4])?,
        });
    }
    Ok(rows)
}

/// Loads feature and label CSVs and assembles labeled windows.
///
/// One sample per label row whose preceding window has at least
/// `min_coverage` days with data. Output is sorted by
/// (subset, subject, label date), so input row order never matters.
pub fn load_dataset(
    features_path: &Path,
    labels_path: &Path,
    schema: &FeatureSchema,
    opts: &LoadOptions,
) -> Result<Dataset, IngestError> {
    let days = read_features(features_path, schema)?;
    let labels = read_labels(labels_path)?;

    let mut samples = Vec::new();
    for label in labels {
        let last_day = if opts.include_label_day {
            label.date
        } else {
            label.date.pred_opt().expect("date underflow")
        };
        let first_day = last_day
            .checked_sub_days(Days::new(opts.window_len as u64 - 1))
            .expect("date underflow");

        let mut window_days = Vec::with_capacity(opts.window_len);
        let mut covered = 0usize;
        let mut date = first_day;
        while date <= last_day {
            let values = days
                .get(&(label.subject.clone(), date))
                .cloned()
                .unwrap_or_default();
            if !values.is_empty() {
                covered += 1;
            }
            window_days.push(DailyRecord { subject_id: label.subject.clone(), date, values });
            date = date.succ_opt().expect("date overflow");
        }
        if covered < opts.min_coverage {
            continue;
        }
        let window = BehavioralWindow { subject_id: label.subject.clone(), days: window_days };
        validate_window(&window, schema, opts.window_len)?;
        samples.push(LabeledSample {
            window,
            label_date: label.date,
            subset: label.subset,
            anxiety: label.anxiety,
            depression: label.depression,
        });
    }
    samples.sort_by(|a, b| {
        (&a.subset, &a.window.subject_id, a.label_date)
            .cmp(&(&b.subset, &b.window.subject_id, b.label_date))
    });
    Ok(Dataset { schema: schema.clone(), samples })
}

/// Writes a dataset back out as the canonical `features.csv` and
/// `labels.csv` pair.
pub fn write_dataset_csvs(
    dataset: &Dataset,
    features_path: &Path,
    labels_path: &Path,
) -> Result<(), IngestError> {
    // de-duplicate overlapping window days
    let mut days: DayTable = BTreeMap::new();
    for s in &dataset.samples {
        for d in &s.window.days {
            if !d.values.is_empty() {
                days.insert((d.subject_id.clone(), d.date), d.values.clone());
            }
        }
    }

    let mut fw = csv::Writer::from_path(features_path)?;
    let mut header = vec!["subject_id".to_string(), "date".to_string()];
    header.extend(dataset.schema.features.iter().map(|f| f.key.clone()));
    fw.write_record(&header)?;
    for ((subject, date), values) in &days {
        let mut row = vec![subject.clone(), date.to_string()];
        for f in &dataset.schema.features {
            row.push(values.get(&f.key).map(|v| format!("{v}")).unwrap_or_default());
        }
        fw.write_record(&row)?;
    }
    fw.flush()?;

    let mut lw = csv::Writer::from_path(labels_path)?;
    lw.write_record(["subject_id", "date", "subset", "anxiety", "depression"])?;
    for s in &dataset.samples {
        lw.write_record([
            s.window.subject_id.as_str(),
            &s.label_date.to_string(),
            s.subset.as_str(),
            &s.anxiety.to_string(),
            &s.depression.to_string(),
        ])?;
    }
    lw.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_schema() -> FeatureSchema {
        FeatureSchema::builtin("CollegeExperience").unwrap()
    }

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    fn features_csv(rows: &[(&str, &str, &str)]) -> String {
        let mut s = "subject_id,date,sleep_duration\n".to_string();
        for (subj, date, v) in rows {
            s.push_str(&format!("{subj},{date},{v}\n"));
        }
        s
    }

    #[test]
    fn twenty_days_one_label_yields_one_sample() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        let start: NaiveDate = "2024-01-01".parse().unwrap();
        let rows: Vec<(String, String, String)> = (0..20)
            .map(|i| ("s1".to_string(), (start + Days::new(i)).to_string(), "7".to_string()))
            .collect();
        let refs: Vec<(&str, &str, &str)> =
            rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
        write(&f, &features_csv(&refs));
        // label on day 15 (2024-01-15): window covers days 1..=14
        write(&l, "subject_id,date,subset,anxiety,depression\ns1,2024-01-15,DS2,3,2\n");
        let d = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap();
        assert_eq!(d.len(), 1);
        let w = &d.samples[0].window;
        assert_eq!(w.days.first().unwrap().date.to_string(), "2024-01-01");
        assert_eq!(w.days.last().unwrap().date.to_string(), "2024-01-14");
    }

    #[test]
    fn include_label_day_shifts_window() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        let start: NaiveDate = "2024-01-01".parse().unwrap();
        let rows: Vec<(String, String, String)> = (0..20)
            .map(|i| ("s1".to_string(), (start + Days::new(i)).to_string(), "7".to_string()))
            .collect();
        let refs: Vec<(&str, &str, &str)> =
            rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
        write(&f, &features_csv(&refs));
        write(&l, "subject_id,date,subset,anxiety,depression\ns1,2024-01-15,DS2,3,2\n");
        let opts = LoadOptions { include_label_day: true, ..Default::default() };
        let d = load_dataset(&f, &l, &tiny_schema(), &opts).unwrap();
        assert_eq!(d.samples[0].window.days.last().unwrap().date.to_string(), "2024-01-15");
    }

    #[test]
    fn label_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        write(&f, &features_csv(&[("s1", "2024-01-01", "7")]));
        write(&l, "subject_id,date,subset,anxiety,depression\ns1,2024-01-15,DS2,7,2\n");
        let err = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::LabelOutOfRange { .. }));
    }

    #[test]
    fn unknown_feature_column() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        write(&f, "subject_id,date,bogus_feature\ns1,2024-01-01,7\n");
        write(&l, "subject_id,date,subset,anxiety,depression\n");
        let err = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::UnknownFeatureColumn { .. }));
    }

    #[test]
    fn duplicate_label_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        write(&f, &features_csv(&[("s1", "2024-01-01", "7")]));
        write(
            &l,
            "subject_id,date,subset,anxiety,depression\n\
             s1,2024-01-15,DS2,3,2\ns1,2024-01-15,DS2,3,2\n",
        );
        let err = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::DuplicateLabelRow { .. }));
    }

    #[test]
    fn malformed_csv_reports_detail() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        write(&f, "subject_id,date,sleep_duration\ns1,not-a-date,7\n");
        write(&l, "subject_id,date,subset,anxiety,depression\n");
        let err = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, IngestError::MalformedCsv { .. }));
    }

    #[test]
    fn low_coverage_window_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("features.csv");
        let l = dir.path().join("labels.csv");
        let start: NaiveDate = "2024-01-01".parse().unwrap();
        // only 9 of 14 window days have data
        let rows: Vec<(String, String, String)> = (0..9)
            .map(|i| ("s1".to_string(), (start + Days::new(i)).to_string(), "7".to_string()))
            .collect();
        let refs: Vec<(&str, &str, &str)> =
            rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
        write(&f, &features_csv(&refs));
        write(&l, "subject_id,date,subset,anxiety,depression\ns1,2024-01-15,DS2,3,2\n");
        let d = load_dataset(&f, &l, &tiny_schema(), &LoadOptions::default()).unwrap();
        assert!(d.is_empty());
        // with a permissive threshold the sample is kept
        let opts = LoadOptions { min_coverage: 9, ..Default::default() };
        let d = load_dataset(&f, &l, &tiny_schema(), &opts).unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn row_order_does_not_matter() {
        let dir = tempfile::tempdir().unwrap();
        let f1 = dir.path().join("a.csv");
        let f2 = dir.path().join("b.csv");
        let l1 = dir.path().join("la.csv");
        let l2 = dir.path().join("lb.csv");
        let start: NaiveDate = "2024-01-01".parse().unwrap();
        let mut rows: Vec<(String, String, String)> = Vec::new();
        for subj in ["s1", "s2"] {
            for i in 0..20 {
                rows.push((subj.to_string(), (start + Days::new(i)).to_string(), "6".to_string()));
            }
        }
        let refs: Vec<(&str, &str, &str)> =
            rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.as_str())).collect();
        let mut rev = refs.clone();
        rev.reverse();
        write(&f1, &features_csv(&refs));
        write(&f2, &features_csv(&rev));
        write(
            &l1,
            "subject_id,date,subset,anxiety,depression\n\
             s1,2024-01-15,DS2,3,2\ns2,2024-01-15,DS3,1,0\n",
        );
        write(
            &l2,
            "subject_id,date,subset,anxiety,depression\n\
             s2,2024-01-15,DS3,1,0\ns1,2024-01-15,DS2,3,2\n",
        );
        let schema = tiny_schema();
        let a = load_dataset(&f1, &l1, &schema, &LoadOptions::default()).unwrap();
        let b = load_dataset(&f2, &l2, &schema, &LoadOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}

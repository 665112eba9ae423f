//! Survival records, ordered datasets and CSV ingestion.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: follow-up end, event flag, delayed entry and covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    /// Left-truncation time; 0 when the subject is followed from the origin.
    pub entry: f64,
    pub covariates: Vec<f64>,
    /// Value the sequence is ordered by (e.g. calendar year of onset).
    pub order_key: f64,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>, order_key: f64) -> Self {
        Self {
            time,
            event,
            entry: 0.0,
            covariates,
            order_key,
        }
    }

    pub fn with_entry(mut self, entry: f64) -> Self {
        self.entry = entry;
        self
    }

    /// Linear predictor `x . beta`.
    #[inline]
    pub fn linear_predictor(&self, beta: &[f64]) -> f64 {
        self.covariates.iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    fn validate(&self, row: usize, p: usize) -> Result<()> {
        if self.covariates.len() != p {
            return Err(Error::CovariateArity {
                row,
                expected: p,
                found: self.covariates.len(),
            });
        }
        if !self.time.is_finite() {
            return Err(Error::NonFinite {
                row,
                column: "time".into(),
            });
        }
        if !self.entry.is_finite() {
            return Err(Error::NonFinite {
                row,
                column: "entry".into(),
            });
        }
        if !self.order_key.is_finite() {
            return Err(Error::NonFinite {
                row,
                column: "order_key".into(),
            });
        }
        if let Some(j) = self.covariates.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row,
                column: format!("covariate[{j}]"),
            });
        }
        if self.time < 0.0 {
            return Err(Error::NegativeTime {
                row,
                time: self.time,
            });
        }
        if self.entry < 0.0 || self.entry > self.time {
            return Err(Error::EntryAfterExit {
                row,
                entry: self.entry,
                time: self.time,
            });
        }
        Ok(())
    }
}

/// Whether entry times were supplied by the data source.
///
/// Selects the emission path: `Provided` evaluates the cumulative hazard over
/// `[entry, time]`, `Absent` over `[0, time]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryMode {
    Absent,
    Provided,
}

/// Records sorted by `order_key` (stable with respect to input order).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    p: usize,
    entry_mode: EntryMode,
    reordered: usize,
}

impl Dataset {
    /// Validates and stably sorts `records` by `order_key`.
    ///
    /// The entry mode is `Provided` when any record has a positive entry time.
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let mode = if records.iter().any(|r| r.entry > 0.0) {
            EntryMode::Provided
        } else {
            EntryMode::Absent
        };
        Self::with_entry_mode(records, mode)
    }

    pub fn with_entry_mode(records: Vec<SurvivalRecord>, entry_mode: EntryMode) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::TooFewRecords(records.len()));
        }
        let p = records[0].covariates.len();
        for (i, r) in records.iter().enumerate() {
            r.validate(i + 1, p)?;
            if entry_mode == EntryMode::Absent && r.entry != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "row {}: entry time {} given but entry mode is absent",
                    i + 1,
                    r.entry
                )));
            }
        }
        let mut idx: Vec<usize> = (0..records.len()).collect();
        idx.sort_by(|&a, &b| records[a].order_key.total_cmp(&records[b].order_key));
        let reordered = idx.iter().enumerate().filter(|(pos, &i)| *pos != i).count();
        let mut slots: Vec<Option<SurvivalRecord>> = records.into_iter().map(Some).collect();
        let records = idx
            .into_iter()
            .map(|i| slots[i].take().expect("each index taken once"))
            .collect();
        Ok(Self {
            records,
            p,
            entry_mode,
            reordered,
        })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entry_mode(&self) -> EntryMode {
        self.entry_mode
    }

    /// Number of input rows whose position changed when sorting.
    pub fn reordered(&self) -> usize {
        self.reordered
    }

    /// Number of positions `i >= 1` whose order key differs from position `i - 1`.
    pub fn distinct_key_changes(&self) -> usize {
        self.records
            .windows(2)
            .filter(|w| w[0].order_key != w[1].order_key)
            .count()
    }

    /// Event times, ascending.
    pub fn sorted_event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.event)
            .map(|r| r.time)
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }
}

/// Column mapping for CSV ingestion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub event: String,
    pub entry: Option<String>,
    pub order_key: Option<String>,
    pub covariates: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            event: "event".into(),
            entry: None,
            order_key: None,
            covariates: Vec::new(),
        }
    }
}

/// Reads a headed CSV stream into a validated, sorted [`Dataset`].
///
/// Missing `entry` and `order_key` columns default to 0 and the 1-based row
/// index respectively. A named optional column that is absent from the header
/// is an error.
pub fn load_dataset<R: Read>(source: R, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let column = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let time_col = column(&schema.time)?;
    let event_col = column(&schema.event)?;
    let entry_col = schema.entry.as_deref().map(column).transpose()?;
    let order_col = schema.order_key.as_deref().map(column).transpose()?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let event_raw = row.get(event_col).unwrap_or("");
        let event = parse_event(event_raw).ok_or_else(|| Error::Parse {
            row: line,
            column: schema.event.clone(),
            value: event_raw.to_string(),
        })?;
        let covariates = cov_cols
            .iter()
            .zip(&schema.covariates)
            .map(|(&c, name)| field(c, name))
            .collect::<Result<Vec<_>>>()?;
        let entry = match (entry_col, &schema.entry) {
            (Some(c), Some(name)) => field(c, name)?,
            _ => 0.0,
        };
        let order_key = match (order_col, &schema.order_key) {
            (Some(c), Some(name)) => field(c, name)?,
            _ => line as f64,
        };
        records.push(SurvivalRecord {
            time: field(time_col, &schema.time)?,
            event,
            entry,
            covariates,
            order_key,
        });
    }
    let mode = if entry_col.is_some() {
        EntryMode::Provided
    } else {
        EntryMode::Absent
    };
    Dataset::with_entry_mode(records, mode)
}

fn parse_event(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "t" | "yes" => Some(true),
        "0" | "0.0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, schema: &Schema) -> Result<Dataset> {
        load_dataset(text.as_bytes(), schema)
    }

    fn schema_with_order() -> Schema {
        Schema {
            order_key: Some("year".into()),
            covariates: vec!["x".into()],
            ..Schema::default()
        }
    }

    #[test]
    fn sorts_by_order_key() {
        let ds = load(
            "time,event,x,year\n1,1,0,5\n2,0,1,1\n3,1,0,3\n",
            &schema_with_order(),
        )
        .unwrap();
        let keys: Vec<f64> = ds.records().iter().map(|r| r.order_key).collect();
        assert_eq!(keys, vec![1.0, 3.0, 5.0]);
        assert_eq!(ds.records()[0].time, 2.0);
        assert_eq!(ds.reordered(), 3);
        assert_eq!(ds.entry_mode(), EntryMode::Absent);
    }

    #[test]
    fn ties_keep_input_order() {
        let ds = load(
            "time,event,x,year\n1,1,0,2\n2,0,1,1\n3,1,0,2\n4,1,0,1\n",
            &schema_with_order(),
        )
        .unwrap();
        let times: Vec<f64> = ds.records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn entry_after_exit_names_row() {
        let schema = Schema {
            entry: Some("entry".into()),
            ..Schema::default()
        };
        let err = load("time,event,entry\n3,1,0\n1,0,2\n", &schema).unwrap_err();
        match err {
            Error::EntryAfterExit { row, entry, time } => {
                assert_eq!(row, 2);
                assert_eq!(entry, 2.0);
                assert_eq!(time, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_columns_are_errors() {
        let err = load("time,status\n1,1\n2,0\n", &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "event"));
        let schema = Schema {
            entry: Some("entry".into()),
            ..Schema::default()
        };
        let err = load("time,event\n1,1\n2,0\n", &schema).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "entry"));
    }

    #[test]
    fn non_finite_and_unparsable_values_rejected() {
        let schema = Schema {
            covariates: vec!["x".into()],
            ..Schema::default()
        };
        let err = load("time,event,x\n1,1,0\n2,0,inf\n", &schema).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 2, .. }));
        let err = load("time,event,x\n1,1,0\n2,0,\n", &schema).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
        let err = load("time,event,x\n1,maybe,0\n2,0,1\n", &schema).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
    }

    #[test]
    fn defaults_without_optional_columns() {
        let ds = load("time,event\n1,true\n2,0\n", &Schema::default()).unwrap();
        assert_eq!(ds.p(), 0);
        assert!(ds.records().iter().all(|r| r.entry == 0.0));
        assert_eq!(ds.records()[1].order_key, 2.0);
        assert!(ds.records()[0].event);
    }

    #[test]
    fn entry_column_sets_provided_mode() {
        let schema = Schema {
            entry: Some("entry".into()),
            ..Schema::default()
        };
        let ds = load("time,event,entry\n1,1,0\n2,0,0\n", &schema).unwrap();
        assert_eq!(ds.entry_mode(), EntryMode::Provided);
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(
            load("time,event\n1,1\n", &Schema::default()),
            Err(Error::TooFewRecords(1))
        ));
    }
}

//! Trial records and the flat CSV table they export to.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns of the exported sample table. Games have at most two actions per
/// player in the experiments; missing dimensions are written as empty fields.
pub const EXPORT_HEADER: [&str; 12] =
    ["pubkey", "t", "h_1", "h_2", "m_1", "m_2", "cost_H", "cost_M", "alpha", "trial_index", "s_1", "s_2"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One tick of a trial. `h` is the cursor action in the participant's screen
/// frame (before the trial's mirror symmetry); costs are evaluated on the
/// mirrored action the game actually sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub t: f64,
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    #[serde(rename = "cost_H")]
    pub cost_h: f64,
    #[serde(rename = "cost_M")]
    pub cost_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub participant_key: String,
    #[serde(default)]
    pub session_id: String,
    pub trial_index: usize,
    pub alpha: f64,
    /// Mirror signs, one per human action dimension.
    pub symmetry: Vec<f64>,
    pub samples: Vec<Sample>,
}

impl TrialRecord {
    pub fn d_h(&self) -> usize {
        self.symmetry.len()
    }

    pub fn d_m(&self) -> Option<usize> {
        self.samples.first().map(|s| s.m.len())
    }

    /// Schema checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        if self.participant_key.trim().is_empty() {
            return Err(Error::Record("participant_key is empty".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Record(format!("alpha {} is not a valid rate", self.alpha)));
        }
        if self.symmetry.is_empty() || self.symmetry.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::Record("symmetry must be a non-empty vector of ±1".into()));
        }
        let d_m = self.d_m().unwrap_or(0);
        let mut prev = f64::NEG_INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            if s.h.len() != self.d_h() || s.m.len() != d_m || d_m == 0 {
                return Err(Error::Record(format!("sample {i} has inconsistent action dimensions")));
            }
            let finite = s.t.is_finite()
                && s.cost_h.is_finite()
                && s.cost_m.is_finite()
                && s.h.iter().chain(&s.m).all(|x| x.is_finite());
            if !finite {
                return Err(Error::Record(format!("sample {i} has non-finite values")));
            }
            if s.t <= prev {
                return Err(Error::Record(format!("sample {i}: time is not strictly increasing")));
            }
            prev = s.t;
        }
        Ok(())
    }

    /// Canonical serialized form, used for storage and duplicate detection.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("trial record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: Self = serde_json::from_str(text)?;
        record.validate()?;
        Ok(record)
    }
}

fn cell(values: &[f64], i: usize) -> String {
    values.get(i).map_or_else(String::new, |&x| fmt_f64(x))
}

/// Writes the flat sample table, one row per sample.
pub fn write_trials_csv<'a, W, I>(trials: I, out: W) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPORT_HEADER)?;
    let mut rows = 0;
    for trial in trials {
        if trial.d_h() > 2 || trial.d_m().unwrap_or(0) > 2 {
            return Err(Error::Dimension("the export table holds at most two actions per player".into()));
        }
        for s in &trial.samples {
            w.write_record([
                trial.participant_key.clone(),
                fmt_f64(s.t),
                cell(&s.h, 0),
                cell(&s.h, 1),
                cell(&s.m, 0),
                cell(&s.m, 1),
                fmt_f64(s.cost_h),
                fmt_f64(s.cost_m),
                fmt_f64(trial.alpha),
                trial.trial_index.to_string(),
                cell(&trial.symmetry, 0),
                cell(&trial.symmetry, 1),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

fn parse_num(field: &str, col: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Record(format!("line {line}: bad {col} value {field:?}")))
}

fn parse_opt(fields: [&str; 2], col: &str, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .filter(|f| !f.trim().is_empty())
        .map(|f| parse_num(f, col, line))
        .collect()
}

/// Reads the flat sample table back into trials, grouped by
/// `(pubkey, trial_index)` in order of first appearance.
pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != EXPORT_HEADER {
        return Err(Error::Record(format!("unexpected header {header:?}")));
    }
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut index: HashMap<(String, usize), usize> = HashMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let key = f(0).to_string();
        let trial_index: usize =
            f(9).trim().parse().map_err(|_| Error::Record(format!("line {line}: bad trial_index")))?;
        let sample = crate::records::Sample {
            t: parse_num(f(1), "t", line)?,
            h: parse_opt([f(2), f(3)], "h", line)?,
            m: parse_opt([f(4), f(5)], "m", line)?,
            cost_h: parse_num(f(6), "cost_H", line)?,
            cost_m: parse_num(f(7), "cost_M", line)?,
        };
        let alpha = parse_num(f(8), "alpha", line)?;
        let symmetry = parse_opt([f(10), f(11)], "s", line)?;
        let slot = *index.entry((key.clone(), trial_index)).or_insert_with(|| {
            trials.push(TrialRecord {
                participant_key: key,
                session_id: String::new(),
                trial_index,
                alpha,
                symmetry,
                samples: Vec::new(),
            });
            trials.len() - 1
        });
        trials[slot].samples.push(sample);
    }
    for t in &trials {
        t.validate()?;
    }
    Ok(trials)
}

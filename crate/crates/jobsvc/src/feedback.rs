//! The three-question survey shown at the end of a session.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Useful {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimeSaved {
    #[serde(rename = "none", alias = "No Savings")]
    None,
    #[serde(rename = "1-5m", alias = "1-5 minutes")]
    Min1To5,
    #[serde(rename = "6-15m", alias = "6-15 minutes")]
    Min6To15,
    #[serde(rename = ">30m", alias = "More than 30 minutes", alias = ">30 minutes")]
    Over30,
}

impl TimeSaved {
    pub const ALL: [TimeSaved; 4] = [TimeSaved::None, TimeSaved::Min1To5, TimeSaved::Min6To15, TimeSaved::Over30];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeSaved::None => "none",
            TimeSaved::Min1To5 => "1-5m",
            TimeSaved::Min6To15 => "6-15m",
            TimeSaved::Over30 => ">30m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub job_id: String,
    pub q1_useful: Useful,
    pub q2_time_saved: TimeSaved,
    #[serde(default)]
    pub q3_text: String,
    #[serde(default = "Utc::now")]
    pub submitted: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSummary {
    /// Jobs with feedback; a later entry for a job replaces the earlier one.
    pub entries: usize,
    pub useful: usize,
    pub useful_rate: f64,
    pub q2: BTreeMap<String, usize>,
}

pub fn summarize(log: &[FeedbackEntry]) -> FeedbackSummary {
    let mut latest: BTreeMap<&str, &FeedbackEntry> = BTreeMap::new();
    for e in log {
        latest.insert(&e.job_id, e);
    }
    let mut q2: BTreeMap<String, usize> = TimeSaved::ALL.iter().map(|t| (t.as_str().to_owned(), 0)).collect();
    let mut useful = 0;
    for e in latest.values() {
        *q2.get_mut(e.q2_time_saved.as_str()).unwrap() += 1;
        useful += usize::from(e.q1_useful == Useful::Yes);
    }
    let entries = latest.len();
    FeedbackSummary {
        entries,
        useful,
        useful_rate: if entries == 0 { 0.0 } else { useful as f64 / entries as f64 },
        q2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(job: &str, q1: Useful, q2: TimeSaved) -> FeedbackEntry {
        FeedbackEntry { job_id: job.into(), q1_useful: q1, q2_time_saved: q2, q3_text: String::new(), submitted: Utc::now() }
    }

    #[test]
    fn useful_rate_of_yes_no_yes() {
        let log = [
            entry("a", Useful::Yes, TimeSaved::Over30),
            entry("b", Useful::No, TimeSaved::None),
            entry("c", Useful::Yes, TimeSaved::Min6To15),
        ];
        let s = summarize(&log);
        assert_eq!(s.entries, 3);
        assert!((s.useful_rate - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_matches_hand_count() {
        use TimeSaved::*;
        let answers = [Over30, Over30, Min1To5, None, Over30, Min6To15, Min1To5, Over30];
        let log: Vec<_> = answers.iter().enumerate().map(|(i, &t)| entry(&format!("j{i}"), Useful::Yes, t)).collect();
        let q2 = summarize(&log).q2;
        let counts: Vec<_> = ["none", "1-5m", "6-15m", ">30m"].iter().map(|k| q2[*k]).collect();
        assert_eq!(counts, [1, 2, 1, 4]);
    }

    #[test]
    fn last_write_wins_per_job() {
        let log = [entry("a", Useful::No, TimeSaved::None), entry("a", Useful::Yes, TimeSaved::Over30)];
        let s = summarize(&log);
        assert_eq!((s.entries, s.useful, s.q2[">30m"], s.q2["none"]), (1, 1, 1, 0));
    }

    #[test]
    fn survey_wording_is_accepted() {
        let e: FeedbackEntry = serde_json::from_str(
            r#"{"job_id":"a","q1_useful":"yes","q2_time_saved":"More than 30 minutes","q3_text":"ok"}"#,
        )
        .unwrap();
        assert_eq!(e.q2_time_saved, TimeSaved::Over30);
        assert!(serde_json::from_str::<FeedbackEntry>(r#"{"job_id":"a","q1_useful":"maybe","q2_time_saved":"none"}"#).is_err());
    }
}

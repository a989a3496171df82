//! Outbreak reconstruction from weekly case counts.
//!
//! An outbreak is a maximal run of weeks in one province in which no more
//! than `gap_limit` consecutive weeks pass without a case. Durations are
//! counted as last case week minus first case week, so a single-week
//! outbreak lasts 0 weeks.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::OutbreakSizeRecord;

pub const DEFAULT_GAP_LIMIT: u32 = 3;

/// How week labels are written in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekFormat {
    Integer,
    /// `YYYY-Www`
    Iso,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklySeries {
    pub province: String,
    /// Linear index of the first week.
    pub first_week: i64,
    /// Cases for weeks `first_week, first_week + 1, ...`.
    pub cases: Vec<u64>,
    pub format: WeekFormat,
}

impl WeeklySeries {
    pub fn new(province: impl Into<String>, first_week: i64, cases: Vec<u64>) -> Self {
        WeeklySeries { province: province.into(), first_week, cases, format: WeekFormat::Integer }
    }

    pub fn week_label(&self, week: i64) -> String {
        format_week(week, self.format)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutbreakRecord {
    pub province: String,
    pub start_week: i64,
    /// Every week from the first to the last case week, zeros included.
    pub case_weeks: Vec<(i64, u64)>,
    pub initial_cases: u64,
    pub duration_weeks: u64,
    pub total_cases: u64,
}

/// Splits a series into outbreaks separated by more than `gap_limit`
/// consecutive zero-case weeks.
pub fn segment_outbreaks(series: &WeeklySeries, gap_limit: u32) -> Vec<OutbreakRecord> {
    let mut records = Vec::new();
    let mut current: Option<(usize, usize)> = None; // first and last case position
    let gap_limit = gap_limit as usize;

    let close = |first: usize, last: usize, records: &mut Vec<OutbreakRecord>| {
        let case_weeks: Vec<(i64, u64)> =
            (first..=last).map(|i| (series.first_week + i as i64, series.cases[i])).collect();
        records.push(OutbreakRecord {
            province: series.province.clone(),
            start_week: series.first_week + first as i64,
            initial_cases: series.cases[first],
            duration_weeks: (last - first) as u64,
            total_cases: series.cases[first..=last].iter().sum(),
            case_weeks,
        });
    };

    for (i, &c) in series.cases.iter().enumerate() {
        if c == 0 {
            continue;
        }
        current = match current {
            Some((first, last)) if i - last - 1 <= gap_limit => Some((first, i)),
            Some((first, last)) => {
                close(first, last, &mut records);
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    if let Some((first, last)) = current {
        close(first, last, &mut records);
    }
    records
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Keep only outbreaks whose first week has exactly this many cases.
    pub initial_cases: Option<u64>,
    /// Keep only outbreaks lasting at most this many weeks.
    pub max_duration_weeks: Option<u64>,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions { initial_cases: Some(1), max_duration_weeks: Some(9) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Kept,
    DroppedInitialCases,
    DroppedDuration,
}

impl FilterOptions {
    pub fn verdict(&self, record: &OutbreakRecord) -> Verdict {
        if self.initial_cases.is_some_and(|a| record.initial_cases != a) {
            Verdict::DroppedInitialCases
        } else if self.max_duration_weeks.is_some_and(|d| record.duration_weeks > d) {
            Verdict::DroppedDuration
        } else {
            Verdict::Kept
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<OutbreakRecord>,
    pub dropped_initial_cases: usize,
    pub dropped_duration: usize,
}

pub fn filter_outbreaks(records: &[OutbreakRecord], opts: &FilterOptions) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for r in records {
        match opts.verdict(r) {
            Verdict::Kept => out.kept.push(r.clone()),
            Verdict::DroppedInitialCases => out.dropped_initial_cases += 1,
            Verdict::DroppedDuration => out.dropped_duration += 1,
        }
    }
    out
}

/// `a` = cases in the first week, `n` = the remaining cases.
pub fn size_records(records: &[OutbreakRecord]) -> Vec<OutbreakSizeRecord> {
    records
        .iter()
        .map(|r| OutbreakSizeRecord { a: r.initial_cases, n: r.total_cases - r.initial_cases })
        .collect()
}

// Monday of ISO week 1970-W02, the origin of linear ISO week indices.
fn iso_origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 5).expect("valid date")
}

fn parse_week(label: &str) -> Result<(i64, WeekFormat)> {
    let label = label.trim();
    if let Ok(w) = label.parse::<i64>() {
        return Ok((w, WeekFormat::Integer));
    }
    let parsed = label.split_once("-W").and_then(|(y, w)| {
        let year = y.parse::<i32>().ok()?;
        let week = w.parse::<u32>().ok()?;
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
    });
    match parsed {
        Some(date) => Ok(((date - iso_origin()).num_days().div_euclid(7), WeekFormat::Iso)),
        None => Err(Error::Parse(format!("unrecognized week `{label}` (integer or YYYY-Www)"))),
    }
}

pub fn format_week(week: i64, format: WeekFormat) -> String {
    match format {
        WeekFormat::Integer => week.to_string(),
        WeekFormat::Iso => {
            let date = iso_origin() + chrono::Duration::weeks(week);
            let iso = date.iso_week();
            format!("{}-W{:02}", iso.year(), iso.week())
        }
    }
}

#[derive(Debug, Deserialize)]
struct WeeklyRow {
    province: String,
    week: String,
    cases: u64,
}

/// Reads `province,week,cases` rows into one series per province (sorted by
/// province). Weeks missing inside a province's range become zero-case weeks
/// and are reported in the returned warnings.
pub fn read_weekly_csv<R: Read>(reader: R) -> Result<(Vec<WeeklySeries>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by_province: BTreeMap<String, (WeekFormat, BTreeMap<i64, u64>)> = BTreeMap::new();
    for (line, row) in rdr.deserialize::<WeeklyRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        let (week, format) = parse_week(&row.week)?;
        let entry = by_province.entry(row.province.clone()).or_insert_with(|| (format, BTreeMap::new()));
        if entry.0 != format {
            return Err(Error::Parse(format!("province `{}` mixes week formats", row.province)));
        }
        if entry.1.insert(week, row.cases).is_some() {
            return Err(Error::Parse(format!("province `{}` lists week `{}` twice", row.province, row.week)));
        }
    }
    let mut warnings = Vec::new();
    let mut series = Vec::new();
    for (province, (format, weeks)) in by_province {
        let first = *weeks.keys().next().expect("nonempty");
        let last = *weeks.keys().next_back().expect("nonempty");
        let mut cases = Vec::with_capacity((last - first + 1) as usize);
        for w in first..=last {
            match weeks.get(&w) {
                Some(&c) => cases.push(c),
                None => {
                    warnings.push(format!("{province}: week {} missing, treated as 0 cases", format_week(w, format)));
                    cases.push(0);
                }
            }
        }
        series.push(WeeklySeries { province, first_week: first, cases, format });
    }
    Ok((series, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn starts(records: &[OutbreakRecord]) -> Vec<(i64, u64)> {
        records.iter().map(|r| (r.start_week, r.duration_weeks)).collect()
    }

    #[test]
    fn segmentation_examples() {
        let s = WeeklySeries::new("A", 1, vec![1, 0, 0, 0, 0, 2]);
        assert_eq!(starts(&segment_outbreaks(&s, 3)), vec![(1, 0), (6, 0)]);
        let s = WeeklySeries::new("A", 1, vec![1, 0, 0, 0, 2]);
        let r = segment_outbreaks(&s, 3);
        assert_eq!(starts(&r), vec![(1, 4)]);
        assert_eq!(r[0].total_cases, 3);
        assert_eq!(r[0].case_weeks.len(), 5);
        let s = WeeklySeries::new("A", 1, vec![2]);
        let r = segment_outbreaks(&s, 3);
        assert_eq!(starts(&r), vec![(1, 0)]);
        assert_eq!(r[0].initial_cases, 2);
        assert!(segment_outbreaks(&WeeklySeries::new("A", 0, vec![0, 0]), 3).is_empty());
    }

    #[test]
    fn filtering() {
        let mk = |initial, duration| OutbreakRecord {
            province: "A".into(),
            start_week: 0,
            case_weeks: vec![],
            initial_cases: initial,
            duration_weeks: duration,
            total_cases: initial,
        };
        let records = vec![mk(1, 12), mk(2, 0), mk(1, 0), mk(1, 9), mk(1, 10)];
        let out = filter_outbreaks(&records, &FilterOptions::default());
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.dropped_duration, 2);
        assert_eq!(out.dropped_initial_cases, 1);
    }

    #[test]
    fn sizes() {
        let s = WeeklySeries::new("A", 0, vec![1, 2, 0, 0, 0, 0, 1]);
        let r = segment_outbreaks(&s, 3);
        assert_eq!(size_records(&r), vec![OutbreakSizeRecord { a: 1, n: 2 }, OutbreakSizeRecord { a: 1, n: 0 }]);
    }

    #[test]
    fn csv_with_gaps_and_iso_weeks() {
        let data = "province,week,cases\nSofia,2010-W52,1\nSofia,2011-W02,3\nPlovdiv,4,0\nPlovdiv,5,2\n";
        let (series, warnings) = read_weekly_csv(data.as_bytes()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].province, "Plovdiv");
        let sofia = &series[1];
        assert_eq!(sofia.cases, vec![1, 0, 3]);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("2011-W01"));
        assert_eq!(sofia.week_label(sofia.first_week), "2010-W52");
        assert!(read_weekly_csv("province,week,cases\nA,1,1\nA,1,2\n".as_bytes()).is_err());
        assert!(read_weekly_csv("province,week,cases\nA,1,1\nA,2011-W01,2\n".as_bytes()).is_err());
        assert!(read_weekly_csv("province,week,cases\nA,x,1\n".as_bytes()).is_err());
    }

    #[test]
    fn iso_weeks_are_contiguous_across_53_week_years() {
        // 2015 has 53 ISO weeks
        let (a, _) = parse_week("2015-W53").unwrap();
        let (b, _) = parse_week("2016-W01").unwrap();
        assert_eq!(b - a, 1);
        assert_eq!(format_week(a, WeekFormat::Iso), "2015-W53");
    }

    proptest! {
        #[test]
        fn segmentation_properties(cases in proptest::collection::vec(prop_oneof![3 => Just(0u64), 1 => 1u64..5], 0..80),
                                   gap in 0u32..5) {
            let s = WeeklySeries::new("P", 10, cases.clone());
            let records = segment_outbreaks(&s, gap);
            // partition of cases
            prop_assert_eq!(records.iter().map(|r| r.total_cases).sum::<u64>(), cases.iter().sum::<u64>());
            for r in &records {
                prop_assert!(r.case_weeks.first().unwrap().1 >= 1);
                prop_assert!(r.case_weeks.last().unwrap().1 >= 1);
                prop_assert_eq!(r.duration_weeks as usize + 1, r.case_weeks.len());
                let mut run = 0;
                for &(_, c) in &r.case_weeks {
                    run = if c == 0 { run + 1 } else { 0 };
                    prop_assert!(run <= gap);
                }
            }
            for w in records.windows(2) {
                let end = w[0].case_weeks.last().unwrap().0;
                prop_assert!(w[1].start_week - end - 1 > gap as i64);
            }
            // idempotence: re-segmenting outbreaks laid out with wide gaps
            let mut rebuilt = Vec::new();
            for r in &records {
                rebuilt.extend(r.case_weeks.iter().map(|x| x.1));
                rebuilt.extend(std::iter::repeat_n(0, gap as usize + 1));
            }
            let again = segment_outbreaks(&WeeklySeries::new("P", 0, rebuilt), gap);
            let shape = |rs: &[OutbreakRecord]| rs.iter().map(|r| (r.initial_cases, r.duration_weeks, r.total_cases)).collect::<Vec<_>>();
            prop_assert_eq!(shape(&again), shape(&records));
        }
    }
}

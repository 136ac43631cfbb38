//! MMWR epidemiological weeks: Sunday through Saturday, week 1 being the
//! first week with at least four days in the new calendar year.

use std::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_YEAR: i32 = 1990;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MmwrWeek {
    pub year: i32,
    pub week: u32,
    pub start: NaiveDate,
}

/// Sunday that opens week 1 of MMWR year `year`: the Sunday of the week
/// holding January 4th.
pub fn year_start(year: i32) -> NaiveDate {
    let jan4 = NaiveDate::from_ymd_opt(year, 1, 4).expect("valid year");
    jan4 - Duration::days(jan4.weekday().num_days_from_sunday() as i64)
}

/// Number of MMWR weeks (52 or 53) in `year`.
pub fn weeks_in_year(year: i32) -> u32 {
    ((year_start(year + 1) - year_start(year)).num_days() / 7) as u32
}

pub fn mmwr_week_of(date: NaiveDate) -> Result<MmwrWeek> {
    if !(MIN_YEAR..=MAX_YEAR).contains(&date.year()) {
        return Err(Error::Range(format!(
            "{date} outside supported years {MIN_YEAR}-{MAX_YEAR}"
        )));
    }
    let mut year = date.year();
    if date < year_start(year) {
        year -= 1;
    } else if date >= year_start(year + 1) {
        year += 1;
    }
    let offset = (date - year_start(year)).num_days();
    let week = (offset / 7) as u32 + 1;
    let start = year_start(year) + Duration::days((week as i64 - 1) * 7);
    Ok(MmwrWeek { year, week, start })
}

impl MmwrWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        if !(MIN_YEAR - 1..=MAX_YEAR + 1).contains(&year) {
            return Err(Error::Range(format!("MMWR year {year}")));
        }
        if week == 0 || week > weeks_in_year(year) {
            return Err(Error::Range(format!("MMWR {year} has no week {week}")));
        }
        let start = year_start(year) + Duration::days((week as i64 - 1) * 7);
        Ok(Self { year, week, start })
    }

    /// Saturday closing the week.
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(6)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end()
    }

    pub fn next(&self) -> Self {
        let start = self.start + Duration::days(7);
        if self.week < weeks_in_year(self.year) {
            Self {
                year: self.year,
                week: self.week + 1,
                start,
            }
        } else {
            Self {
                year: self.year + 1,
                week: 1,
                start,
            }
        }
    }

    /// Whole weeks from `self` to `other` (negative when `other` is earlier).
    pub fn weeks_until(&self, other: &MmwrWeek) -> i64 {
        (other.start - self.start).num_days() / 7
    }
}

impl fmt::Display for MmwrWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-W{:02}", self.year, self.week)
    }
}

/// All weeks from `first` through `last` inclusive.
pub fn week_range(first: MmwrWeek, last: MmwrWeek) -> Vec<MmwrWeek> {
    let mut out = Vec::new();
    let mut w = first;
    while w.start <= last.start {
        out.push(w);
        w = w.next();
    }
    out
}

#[cfg(test)]
pub(crate) fn is_sunday(d: NaiveDate) -> bool {
    d.weekday() == chrono::Weekday::Sun
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn known_weeks() {
        let w = mmwr_week_of(d(2006, 1, 1)).unwrap();
        assert_eq!((w.year, w.week, w.start), (2006, 1, d(2006, 1, 1)));
        // 2015-01-04 is a Sunday, so the three days before it close 2014
        let w = mmwr_week_of(d(2015, 1, 1)).unwrap();
        assert_eq!((w.year, w.week, w.start), (2014, 53, d(2014, 12, 28)));
        let w = mmwr_week_of(d(2020, 1, 1)).unwrap();
        assert_eq!((w.year, w.week, w.start), (2020, 1, d(2019, 12, 29)));
        // 2016-01-01 is a Friday: belongs to week 52 of 2015
        let w = mmwr_week_of(d(2016, 1, 1)).unwrap();
        assert_eq!((w.year, w.week), (2015, 52));
        assert_eq!(weeks_in_year(2014), 53);
        assert_eq!(weeks_in_year(2015), 52);
    }

    #[test]
    fn sunday_opens_its_week_and_span_is_shared() {
        let s = d(2019, 6, 2);
        assert!(is_sunday(s));
        let w = mmwr_week_of(s).unwrap();
        assert_eq!(w.start, s);
        assert_eq!(mmwr_week_of(s + Duration::days(6)).unwrap(), w);
        assert_ne!(mmwr_week_of(s + Duration::days(7)).unwrap(), w);
    }

    #[test]
    fn out_of_range_dates_are_rejected() {
        assert!(matches!(mmwr_week_of(d(1989, 12, 31)), Err(Error::Range(_))));
        assert!(mmwr_week_of(d(2101, 1, 1)).is_err());
    }

    #[test]
    fn next_crosses_year_boundary() {
        let w = MmwrWeek::new(2014, 53).unwrap();
        let n = w.next();
        assert_eq!((n.year, n.week), (2015, 1));
        assert_eq!(w.weeks_until(&n), 1);
        assert!(MmwrWeek::new(2015, 53).is_err());
    }
}

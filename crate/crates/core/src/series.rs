use alloc::vec::Vec;

use chrono::{Days, NaiveDate};

use crate::{Error, Result};

/// A contiguous daily count series: non-negative event counts `x_{1:T}`
/// anchored at a start date, with day `i` implied at `start_date + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSeries {
    start_date: NaiveDate,
    counts: Vec<u64>,
}

impl ObservationSeries {
    /// Build a series from a start date and at least one count.
    pub fn new(start_date: NaiveDate, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptySeries);
        }
        Ok(Self { start_date, counts })
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    /// Calendar date of day `index` (0-based).
    pub fn date(&self, index: usize) -> NaiveDate {
        self.start_date + Days::new(index as u64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.counts.len() - 1)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of days `T`.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    /// Arithmetic mean of the counts.
    pub fn mean(&self) -> f64 {
        self.counts.iter().map(|&c| c as f64).sum::<f64>() / self.counts.len() as f64
    }
}

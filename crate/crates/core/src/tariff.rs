//! Time-of-Use tariffs and their extremal-price structure.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Rate;

const HOURS_PER_DAY: f64 = 24.0;
const HOUR_EPS: f64 = 1e-9;

/// One contiguous block of the day billed at a single rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Period {
    pub start: f64,
    pub end: f64,
    pub rate: Rate,
}

impl Period {
    pub fn new(start: f64, end: f64, rate: Rate) -> Self {
        Self { start, end, rate }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TariffError {
    #[error("tariff has no periods")]
    Empty,
    #[error("periods do not tile the day: {0}")]
    GapOrOverlap(String),
    #[error("period {index} has non-positive rate {rate}")]
    NonPositiveRate { index: usize, rate: Rate },
    #[error("last period rate {last} is not the daily minimum {min}")]
    LastPeriodNotOffPeak { last: Rate, min: Rate },
    #[error("tariff needs at least two distinct-rate periods, found {0} after merging")]
    TooFewPeriods(usize),
}

/// A validated daily tariff.
///
/// Periods tile `[0, 24)` hours in order, adjacent periods never share a rate,
/// and the final period is the off-peak one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TouScheme {
    periods: Vec<Period>,
    /// Raw input indices merged into each period.
    groups: Vec<Range<usize>>,
}

impl TouScheme {
    pub fn validate(raw: &[Period]) -> Result<Self, TariffError> {
        if raw.is_empty() {
            return Err(TariffError::Empty);
        }
        for (index, p) in raw.iter().enumerate() {
            if !p.rate.is_positive() {
                return Err(TariffError::NonPositiveRate { index, rate: p.rate });
            }
        }
        if raw[0].start.abs() > HOUR_EPS {
            return Err(TariffError::GapOrOverlap(format!(
                "first period starts at {} h, expected 0",
                raw[0].start
            )));
        }
        for (index, p) in raw.iter().enumerate() {
            if !(p.start.is_finite() && p.end.is_finite()) || p.end <= p.start + HOUR_EPS {
                return Err(TariffError::GapOrOverlap(format!(
                    "period {index} spans [{}, {}) h",
                    p.start, p.end
                )));
            }
            if index > 0 {
                let prev_end = raw[index - 1].end;
                if (p.start - prev_end).abs() > HOUR_EPS {
                    let kind = if p.start > prev_end { "gap" } else { "overlap" };
                    return Err(TariffError::GapOrOverlap(format!(
                        "{kind} between {prev_end} h and {} h at period {index}",
                        p.start
                    )));
                }
            }
        }
        let last_end = raw[raw.len() - 1].end;
        if (last_end - HOURS_PER_DAY).abs() > HOUR_EPS {
            return Err(TariffError::GapOrOverlap(format!("last period ends at {last_end} h, expected 24")));
        }

        let mut periods: Vec<Period> = Vec::with_capacity(raw.len());
        let mut groups: Vec<Range<usize>> = Vec::with_capacity(raw.len());
        for (index, p) in raw.iter().enumerate() {
            match periods.last_mut() {
                Some(prev) if prev.rate == p.rate => {
                    prev.end = p.end;
                    groups.last_mut().expect("group per period").end = index + 1;
                }
                _ => {
                    periods.push(*p);
                    groups.push(index..index + 1);
                }
            }
        }
        if periods.len() < 2 {
            return Err(TariffError::TooFewPeriods(periods.len()));
        }
        let min = periods.iter().map(|p| p.rate).min().expect("nonempty");
        let last = periods[periods.len() - 1].rate;
        if last != min {
            return Err(TariffError::LastPeriodNotOffPeak { last, min });
        }
        Ok(Self { periods, groups })
    }

    /// Convenience constructor for equal-length periods with the given rates.
    pub fn from_rates(rates: &[Rate]) -> Result<Self, TariffError> {
        let width = HOURS_PER_DAY / rates.len().max(1) as f64;
        let raw: Vec<Period> = rates
            .iter()
            .enumerate()
            .map(|(k, &rate)| {
                let end = if k + 1 == rates.len() { HOURS_PER_DAY } else { (k + 1) as f64 * width };
                Period::new(k as f64 * width, end, rate)
            })
            .collect();
        Self::validate(&raw)
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Which raw input periods were merged into each validated period.
    pub fn merged_groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn raw_len(&self) -> usize {
        self.groups.last().map_or(0, |g| g.end)
    }

    pub fn rates(&self) -> Vec<Rate> {
        self.periods.iter().map(|p| p.rate).collect()
    }

    pub fn rates_f64(&self) -> Vec<f64> {
        self.periods.iter().map(|p| p.rate.cents()).collect()
    }

    pub fn rate(&self, period: usize) -> Rate {
        self.periods[period].rate
    }

    pub fn off_peak_rate(&self) -> Rate {
        self.periods[self.periods.len() - 1].rate
    }
}

/// Paired local price extrema: `maxima[k]` follows `minima[k]` along a
/// rate-increasing run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtremalPrices {
    pub maxima: Vec<Rate>,
    pub minima: Vec<Rate>,
}

impl ExtremalPrices {
    pub fn spread(&self) -> Rate {
        self.maxima.iter().zip(&self.minima).map(|(&h, &l)| h - l).sum()
    }
}

/// Day's rate sequence with the overnight off-peak rate prepended.
fn cyclic_rates(scheme: &TouScheme) -> Vec<Rate> {
    let mut seq = Vec::with_capacity(scheme.len() + 1);
    seq.push(scheme.off_peak_rate());
    seq.extend(scheme.rates());
    seq
}

pub fn local_extrema(scheme: &TouScheme) -> ExtremalPrices {
    let mut seq = cyclic_rates(scheme);
    seq.dedup();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    let mut k = 0;
    while k + 1 < seq.len() {
        if seq[k + 1] > seq[k] {
            let low = seq[k];
            while k + 1 < seq.len() && seq[k + 1] > seq[k] {
                k += 1;
            }
            minima.push(low);
            maxima.push(seq[k]);
        } else {
            k += 1;
        }
    }
    ExtremalPrices { maxima, minima }
}

/// Maximal daily revenue of one unit of storage: the summed spread of paired
/// local extrema.
pub fn pi_max(scheme: &TouScheme) -> Rate {
    local_extrema(scheme).spread()
}

/// The same quantity as [`pi_max`], computed as the sum of positive rate
/// increments over the overnight-wrapped sequence.
pub fn pi_max_by_increments(scheme: &TouScheme) -> Rate {
    cyclic_rates(scheme)
        .windows(2)
        .map(|w| if w[1] > w[0] { w[1] - w[0] } else { Rate::ZERO })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(s: &str) -> Rate {
        s.parse().unwrap()
    }

    fn weekday() -> Vec<Period> {
        vec![
            Period::new(0.0, 7.0, r("6.7")),
            Period::new(7.0, 11.0, r("12.4")),
            Period::new(11.0, 17.0, r("10.4")),
            Period::new(17.0, 19.0, r("12.4")),
            Period::new(19.0, 24.0, r("6.7")),
        ]
    }

    fn rates(xs: &[&str]) -> TouScheme {
        TouScheme::from_rates(&xs.iter().map(|s| r(s)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn weekday_scheme_is_valid() {
        let scheme = TouScheme::validate(&weekday()).unwrap();
        assert_eq!(scheme.len(), 5);
        assert_eq!(scheme.off_peak_rate(), r("6.7"));
    }

    #[test]
    fn rejects_peak_at_end_of_day() {
        let raw = [Period::new(0.0, 12.0, r("10")), Period::new(12.0, 24.0, r("12"))];
        assert!(matches!(
            TouScheme::validate(&raw),
            Err(TariffError::LastPeriodNotOffPeak { .. })
        ));
    }

    #[test]
    fn merges_equal_adjacent_rates() {
        let raw = [
            Period::new(0.0, 8.0, r("5")),
            Period::new(8.0, 16.0, r("5")),
            Period::new(16.0, 24.0, r("3")),
        ];
        let scheme = TouScheme::validate(&raw).unwrap();
        assert_eq!(scheme.len(), 2);
        assert_eq!(scheme.periods()[0].end, 16.0);
        assert_eq!(scheme.merged_groups(), &[0..2, 2..3]);
        assert_eq!(scheme.raw_len(), 3);
    }

    #[test]
    fn rejects_flat_day() {
        let raw = [Period::new(0.0, 12.0, r("5")), Period::new(12.0, 24.0, r("5"))];
        assert_eq!(TouScheme::validate(&raw), Err(TariffError::TooFewPeriods(1)));
    }

    #[test]
    fn rejects_gaps_overlaps_and_bad_rates() {
        let gap = [Period::new(0.0, 10.0, r("8")), Period::new(11.0, 24.0, r("5"))];
        assert!(matches!(TouScheme::validate(&gap), Err(TariffError::GapOrOverlap(_))));
        let overlap = [Period::new(0.0, 12.0, r("8")), Period::new(11.0, 24.0, r("5"))];
        assert!(matches!(TouScheme::validate(&overlap), Err(TariffError::GapOrOverlap(_))));
        let short = [Period::new(0.0, 12.0, r("8")), Period::new(12.0, 23.0, r("5"))];
        assert!(matches!(TouScheme::validate(&short), Err(TariffError::GapOrOverlap(_))));
        let late = [Period::new(1.0, 12.0, r("8")), Period::new(12.0, 24.0, r("5"))];
        assert!(matches!(TouScheme::validate(&late), Err(TariffError::GapOrOverlap(_))));
        let free = [Period::new(0.0, 12.0, r("8")), Period::new(12.0, 24.0, r("0"))];
        assert!(matches!(
            TouScheme::validate(&free),
            Err(TariffError::NonPositiveRate { index: 1, .. })
        ));
        assert_eq!(TouScheme::validate(&[]), Err(TariffError::Empty));
    }

    #[test]
    fn weekday_extrema_and_pi_max() {
        let scheme = TouScheme::validate(&weekday()).unwrap();
        let ext = local_extrema(&scheme);
        assert_eq!(ext.maxima, vec![r("12.4"), r("12.4")]);
        assert_eq!(ext.minima, vec![r("6.7"), r("10.4")]);
        assert_eq!(pi_max(&scheme), r("7.7"));
        assert_eq!(pi_max_by_increments(&scheme), r("7.7"));
    }

    #[test]
    fn small_extrema_cases() {
        let ext = local_extrema(&rates(&["5", "4"]));
        assert_eq!((ext.maxima, ext.minima), (vec![r("5")], vec![r("4")]));
        let ext = local_extrema(&rates(&["3", "9", "3"]));
        assert_eq!((ext.maxima, ext.minima), (vec![r("9")], vec![r("3")]));
        assert_eq!(pi_max(&rates(&["5", "10", "5"])), r("5"));
    }

    #[test]
    fn overnight_wrap_counts_morning_rise() {
        let scheme = rates(&["9", "7", "4"]);
        assert_eq!(pi_max(&scheme), r("5"));
        assert_eq!(pi_max_by_increments(&scheme), r("5"));
    }

    fn scheme_strategy() -> impl Strategy<Value = TouScheme> {
        prop::collection::vec(1i64..2000, 1..9).prop_filter_map("valid scheme", |mut units| {
            let min = *units.iter().min().unwrap();
            units.push(min);
            let rates: Vec<Rate> = units.into_iter().map(Rate::from_hundredths).collect();
            TouScheme::from_rates(&rates).ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn both_pi_max_formulas_agree(scheme in scheme_strategy()) {
            prop_assert_eq!(pi_max(&scheme), pi_max_by_increments(&scheme));
            prop_assert!(pi_max(&scheme) > Rate::ZERO);
        }

        #[test]
        fn extrema_alternate(scheme in scheme_strategy()) {
            let ext = local_extrema(&scheme);
            prop_assert_eq!(ext.maxima.len(), ext.minima.len());
            for (k, (&h, &l)) in ext.maxima.iter().zip(&ext.minima).enumerate() {
                prop_assert!(h > l);
                if k + 1 < ext.minima.len() {
                    prop_assert!(ext.minima[k + 1] < h);
                }
            }
        }
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Segment cost: twice the profiled Gaussian negative log-likelihood of the
//! fitted decay model, `m·(ln 2π + 1 + ln(rss/m))`.
//!
//! A segment whose fit does not converge, or that is too short to fit at all,
//! gets the finite stand-in [`SENTINEL`] for an infinite cost.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;

use crate::decay_model::Covariate;
use crate::error::{Error, Result};
use crate::nls::{fit_segment, FitConfig, FitResult};
use crate::timeseries::SoilSeries;

/// Stand-in for an infinite segment cost.
pub const SENTINEL: f64 = 1e12;

/// Fewest points the three-parameter model can be fitted to.
pub const MIN_FIT_LEN: usize = 3;

/// Default number of entries a [`CostCache`] holds before it stops inserting.
pub const DEFAULT_CACHE_CAPACITY: usize = 1 << 20;

/// Cost of one candidate segment `values[start..end]`, i.e. the segment that
/// follows changepoint `τ = start` and ends at `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEntry {
    pub start: usize,
    pub end: usize,
    pub cost: f64,
    pub fit: FitResult,
}

impl CostEntry {
    /// True when the cost is a real likelihood value rather than [`SENTINEL`].
    pub fn is_finite(&self) -> bool {
        self.fit.converged
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// `m·(ln 2π + 1 + ln(rss/m))`, with `rss` floored at the smallest positive
/// normal so a perfect fit stays finite.
pub fn cost_from_rss(rss: f64, m: usize) -> f64 {
    let m = m as f64;
    m * ((2.0 * std::f64::consts::PI).ln() + 1.0 + (rss.max(f64::MIN_POSITIVE) / m).ln())
}

/// Fits `series.values()[start..end]` and returns its cost.
pub fn segment_cost(series: &SoilSeries, start: usize, end: usize, config: &FitConfig) -> Result<CostEntry> {
    segment_cost_with(series.values(), &Covariate::None, start, end, config)
}

/// As [`segment_cost`] on a raw value slice, with an optional covariate.
pub fn segment_cost_with(
    values: &[f64],
    covariate: &Covariate,
    start: usize,
    end: usize,
    config: &FitConfig,
) -> Result<CostEntry> {
    check_range(values.len(), start, end)?;
    let design = covariate.segment_design(start, end)?;
    let m = end - start;
    if m < MIN_FIT_LEN + design.dim() {
        return Ok(CostEntry {
            start,
            end,
            cost: SENTINEL,
            fit: FitResult::unfitted(m, design.dim()),
        });
    }
    let fit = fit_segment(&values[start..end], config, &design)?;
    Ok(entry_from_fit(start, end, fit))
}

/// Builds the entry for an already computed fit.
pub fn entry_from_fit(start: usize, end: usize, fit: FitResult) -> CostEntry {
    let cost = if fit.converged && fit.rss.is_finite() {
        cost_from_rss(fit.rss, end - start)
    } else {
        SENTINEL
    };
    CostEntry { start, end, cost, fit }
}

pub(crate) fn check_range(len: usize, start: usize, end: usize) -> Result<()> {
    if start >= end || end > len {
        return Err(Error::InvalidRange { start, end, len });
    }
    Ok(())
}

/// Memo of segment costs keyed by `(start, end)`.
///
/// The key omits the fit configuration, so one cache must only ever serve a
/// single series and configuration. Concurrent inserts of the same key are
/// idempotent. Once `capacity` entries are stored, further results are
/// computed but not kept; capacity 0 disables caching.
#[derive(Debug)]
pub struct CostCache {
    map: DashMap<(usize, usize), Arc<CostEntry>>,
    capacity: usize,
    fits: AtomicUsize,
}

impl Default for CostCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl CostCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: DashMap::new(),
            capacity,
            fits: AtomicUsize::new(0),
        }
    }

    pub fn disabled() -> Self {
        Self::new(0)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of times a cost had to be computed rather than looked up.
    pub fn fit_count(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    pub fn get(&self, start: usize, end: usize) -> Option<Arc<CostEntry>> {
        self.map.get(&(start, end)).map(|e| Arc::clone(e.value()))
    }

    pub fn clear(&self) {
        self.map.clear();
    }

    /// Returns the stored entry for `(start, end)` or computes and stores it.
    pub fn get_or_compute<F>(&self, start: usize, end: usize, compute: F) -> Result<Arc<CostEntry>>
    where
        F: FnOnce() -> Result<CostEntry>,
    {
        if let Some(hit) = self.get(start, end) {
            return Ok(hit);
        }
        let entry = Arc::new(compute()?);
        self.fits.fetch_add(1, Ordering::Relaxed);
        if self.map.len() < self.capacity {
            self.map.insert((start, end), Arc::clone(&entry));
        }
        Ok(entry)
    }
}

/// Memoized [`segment_cost`].
pub fn cached_cost(
    cache: &CostCache,
    series: &SoilSeries,
    start: usize,
    end: usize,
    config: &FitConfig,
) -> Result<Arc<CostEntry>> {
    cache.get_or_compute(start, end, || segment_cost(series, start, end, config))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::decay_model::DecayParams;

    fn decay_series(params: DecayParams, n: usize) -> SoilSeries {
        SoilSeries::from_values((1..=n).map(|u| params.value_at(u as f64)).collect()).unwrap()
    }

    #[test]
    fn cost_formula_examples() {
        assert_relative_eq!(cost_from_rss(10.0, 10), 28.37877066409345, max_relative = 1e-12);
        assert!((cost_from_rss(10.0, 10) - 28.379).abs() < 1e-3);
        // 100·(ln 2π + 1 + ln(1e-22)), evaluated once and frozen.
        assert_relative_eq!(cost_from_rss(1e-20, 100), -4781.899497945966, max_relative = 1e-12);
        assert!(cost_from_rss(0.0, 100).is_finite());
    }

    #[test]
    fn constant_segment_gets_sentinel() {
        let s = SoilSeries::from_values(vec![0.2; 50]).unwrap();
        let e = segment_cost(&s, 0, 50, &FitConfig::default()).unwrap();
        assert_eq!(e.cost, SENTINEL);
        assert!(!e.is_finite());
    }

    #[test]
    fn short_segments_get_sentinel() {
        let s = decay_series(DecayParams::new(0.06, 0.11, -2.0), 10);
        for end in 1..3 {
            let e = segment_cost(&s, 0, end, &FitConfig::default()).unwrap();
            assert_eq!(e.cost, SENTINEL);
        }
        assert!(segment_cost(&s, 0, 3, &FitConfig::default()).is_ok());
    }

    #[test]
    fn invalid_ranges_error() {
        let s = decay_series(DecayParams::new(0.06, 0.11, -2.0), 10);
        let cfg = FitConfig::default();
        assert!(matches!(segment_cost(&s, 5, 5, &cfg), Err(Error::InvalidRange { .. })));
        assert!(matches!(segment_cost(&s, 6, 5, &cfg), Err(Error::InvalidRange { .. })));
        assert!(matches!(segment_cost(&s, 0, 11, &cfg), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn noiseless_segment_is_very_cheap() {
        let s = decay_series(DecayParams::new(0.06, 0.11, -3.0), 100);
        let e = segment_cost(&s, 0, 100, &FitConfig::default()).unwrap();
        assert!(e.is_finite());
        assert!(e.cost < cost_from_rss(1e-12, 100));
    }

    #[test]
    fn cache_computes_each_key_once() {
        let s = decay_series(DecayParams::new(0.06, 0.11, -3.0), 60);
        let cfg = FitConfig::default();
        let cache = CostCache::new(16);
        let a = cached_cost(&cache, &s, 0, 40, &cfg).unwrap();
        let b = cached_cost(&cache, &s, 0, 40, &cfg).unwrap();
        assert_eq!(cache.fit_count(), 1);
        assert_eq!(a, b);
        let c = cached_cost(&cache, &s, 10, 40, &cfg).unwrap();
        assert_eq!(cache.fit_count(), 2);
        assert_eq!((c.start, c.end), (10, 40));
        assert_ne!(a.cost, c.cost);
    }

    #[test]
    fn disabled_cache_is_transparent() {
        let s = decay_series(DecayParams::new(0.06, 0.11, -3.0), 60);
        let cfg = FitConfig::default();
        let off = CostCache::disabled();
        let on = CostCache::default();
        for (a, b) in [(0, 30), (0, 30), (5, 60)] {
            let x = cached_cost(&off, &s, a, b, &cfg).unwrap();
            let y = cached_cost(&on, &s, a, b, &cfg).unwrap();
            let z = segment_cost(&s, a, b, &cfg).unwrap();
            assert_eq!(*x, *y);
            assert_eq!(*x, z);
        }
        assert!(off.is_empty());
        assert_eq!(off.fit_count(), 3);
        assert_eq!(on.fit_count(), 2);
    }
}

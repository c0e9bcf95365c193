// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic soil-moisture series with known changepoints.
//!
//! Changepoints arrive as a Poisson process. Each segment decays
//! geometrically toward its own asymptote, `X_t − α0 = φ·(X_{t−1} − α0)`,
//! and a changepoint adds a positive jump `Δ` on top of the decayed state.
//! Gaussian noise is added last.
//!
//! Every replicate draws from its own ChaCha8 stream: the key is the spec's
//! seed and the stream number is the replicate index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::decay_model::gamma_of_phi;
use crate::error::{Error, Result};
use crate::timeseries::SoilSeries;

/// Changepoints closer than this are merged into the earlier one.
pub const MIN_SPACING: usize = 3;

/// Smallest jump amplitude α1 a simulated segment may have.
const MIN_AMPLITUDE: f64 = 0.001;

/// Redraws of α0 before falling back to the bottom of its range.
const ASYMPTOTE_TRIES: usize = 64;

/// Scenario identifiers with a built-in parameterisation.
pub const SCENARIOS: [&str; 6] = ["1a", "1b", "2a", "2b", "3a", "3b"];

/// Closed-open uniform range `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub low: f64,
    pub high: f64,
}

impl UniformRange {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::invalid(format!(
                "{name} range must satisfy low < high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// How changepoints arrive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arrivals {
    /// One rate over the whole series.
    Single { rate: f64 },
    /// `first` over the first half, `second` over the second half.
    HalfSplit { first: f64, second: f64 },
    /// `global` over the whole series, plus small-scale changepoints at
    /// `nested` rate inside its longest gap.
    Nested { global: f64, nested: f64 },
}

/// Parameters of one simulation scenario.
///
/// `decay_ranges` and `jump_ranges` hold two regimes. For [`Arrivals::Single`]
/// and [`Arrivals::HalfSplit`] the regime is the half of the series the
/// segment starts in; for [`Arrivals::Nested`] it is large-scale (0) or
/// small-scale (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    pub n: usize,
    pub arrivals: Arrivals,
    /// Ranges of the per-step decay factor φ.
    pub decay_ranges: [UniformRange; 2],
    pub jump_ranges: [UniformRange; 2],
    pub asymptote_range: UniformRange,
    pub noise_sd: f64,
    pub seed: u64,
}

/// Built-in parameterisation of a named scenario, at length 5000.
pub fn default_spec(id: &str) -> Result<ScenarioSpec> {
    let (family, noise_sd) = match id {
        "1a" | "2a" | "3a" => (&id[..1], 0.0005),
        "1b" | "2b" | "3b" => (&id[..1], 0.001),
        _ => return Err(Error::UnknownScenario(id.to_string())),
    };
    let slow_fast = [UniformRange::new(0.99, 0.995), UniformRange::new(0.95, 0.99)];
    let large = UniformRange::new(0.1, 0.12);
    let (arrivals, decay_ranges, jump_ranges) = match family {
        "1" => (Arrivals::Single { rate: 0.003 }, slow_fast, [large, large]),
        "2" => (
            Arrivals::HalfSplit {
                first: 0.002,
                second: 0.005,
            },
            slow_fast,
            [large, UniformRange::new(0.05, 0.1)],
        ),
        _ => (
            Arrivals::Nested {
                global: 0.002,
                nested: 0.02,
            },
            [UniformRange::new(0.98, 0.99), UniformRange::new(0.95, 0.99)],
            [large, UniformRange::new(0.01, 0.02)],
        ),
    };
    Ok(ScenarioSpec {
        id: id.to_string(),
        n: 5000,
        arrivals,
        decay_ranges,
        jump_ranges,
        asymptote_range: UniformRange::new(0.05, 0.08),
        noise_sd,
        seed: 0,
    })
}

impl ScenarioSpec {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 * MIN_SPACING + 1 {
            return Err(Error::invalid(format!("series length {} is too short to simulate", self.n)));
        }
        let rates: &[f64] = match &self.arrivals {
            Arrivals::Single { rate } => &[*rate],
            Arrivals::HalfSplit { first, second } => &[*first, *second],
            Arrivals::Nested { global, nested } => &[*global, *nested],
        };
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("arrival rates must be finite and > 0"));
        }
        for r in &self.decay_ranges {
            r.validate("decay")?;
            if !(r.low > 0.0 && r.high < 1.0) {
                return Err(Error::invalid("decay factors must lie in (0, 1)"));
            }
        }
        for r in &self.jump_ranges {
            r.validate("jump")?;
            if !(r.low > 0.0) {
                return Err(Error::invalid("jumps must be positive"));
            }
        }
        self.asymptote_range.validate("asymptote")?;
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Parameters of one simulated segment `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueSegment {
    pub start: usize,
    pub end: usize,
    pub alpha0: f64,
    pub alpha1: f64,
    pub phi: f64,
    pub gamma: f64,
    /// Jump added at `start`; for the first segment, the initial excess over α0.
    pub jump: f64,
    /// False for the small-scale changepoints of a nested scenario.
    pub large: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub replicate: u64,
    pub changepoints: Vec<usize>,
    pub segments: Vec<TrueSegment>,
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.clean.len()
    }

    /// Changepoints of the large-scale process.
    pub fn large_changepoints(&self) -> Vec<usize> {
        self.segments.iter().skip(1).filter(|s| s.large).map(|s| s.start).collect()
    }

    /// Changepoints of the small-scale process.
    pub fn small_changepoints(&self) -> Vec<usize> {
        self.segments.iter().skip(1).filter(|s| !s.large).map(|s| s.start).collect()
    }

    /// True γ at every index.
    pub fn gamma_track(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n());
        for s in &self.segments {
            out.extend(std::iter::repeat(s.gamma).take(s.end - s.start));
        }
        out
    }

    /// The noisy series on an hourly grid starting at the Unix epoch.
    pub fn series(&self) -> Result<SoilSeries> {
        Ok(SoilSeries::from_values(self.noisy.clone())?.with_source_id(format!(
            "scenario {} seed {} replicate {}",
            self.scenario, self.seed, self.replicate
        )))
    }
}

/// Generates replicate 0 of `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<GroundTruth> {
    generate_replicate(spec, 0)
}

/// Generates one replicate; each replicate index selects its own RNG stream.
pub fn generate_replicate(spec: &ScenarioSpec, replicate: u64) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(replicate);
    let n = spec.n;
    let half = n / 2;

    let mut arrivals = match spec.arrivals {
        Arrivals::Single { rate } => poisson_points(&mut rng, rate, 0.0, n as f64)?
            .into_iter()
            .map(|t| (t, true))
            .collect::<Vec<_>>(),
        Arrivals::HalfSplit { first, second } => {
            let mut pts = poisson_points(&mut rng, first, 0.0, half as f64)?;
            pts.extend(poisson_points(&mut rng, second, half as f64, n as f64)?);
            pts.into_iter().map(|t| (t, true)).collect()
        }
        Arrivals::Nested { global, nested } => {
            let coarse = poisson_points(&mut rng, global, 0.0, n as f64)?;
            let mut edges = Vec::with_capacity(coarse.len() + 2);
            edges.push(0);
            edges.extend(&coarse);
            edges.push(n);
            let (a, b) = edges
                .windows(2)
                .map(|w| (w[0], w[1]))
                .max_by_key(|&(a, b)| (b - a, std::cmp::Reverse(a)))
                .expect("at least one gap");
            let fine = poisson_points(&mut rng, nested, a as f64, b as f64)?;
            let mut all: Vec<(usize, bool)> = coarse.into_iter().map(|t| (t, true)).collect();
            all.extend(fine.into_iter().filter(|&t| t > a).map(|t| (t, false)));
            all.sort_by_key(|&(t, large)| (t, !large));
            all
        }
    };
    arrivals.retain(|&(t, _)| t >= MIN_SPACING && t + MIN_SPACING <= n);

    let regime_of = |start: usize, large: bool| match spec.arrivals {
        Arrivals::Nested { .. } => usize::from(!large),
        _ => usize::from(start >= half),
    };

    // Jumps, merged when closer than MIN_SPACING.
    let mut points: Vec<(usize, f64, bool)> = Vec::with_capacity(arrivals.len());
    for (t, large) in arrivals {
        let jump = spec.jump_ranges[regime_of(t, large)].sample(&mut rng);
        match points.last_mut() {
            Some(last) if t < last.0 + MIN_SPACING => {
                last.1 += jump;
                last.2 |= large;
            }
            _ => points.push((t, jump, large)),
        }
    }

    let mut starts = vec![(0usize, spec.jump_ranges[regime_of(0, true)].sample(&mut rng), true)];
    starts.extend(points);
    let mut segments = Vec::with_capacity(starts.len());
    let mut clean = Vec::with_capacity(n);
    for (i, &(start, jump, large)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(n, |s| s.0);
        let regime = regime_of(start, large);
        let phi = spec.decay_ranges[regime].sample(&mut rng);
        let prev = clean.last().copied();
        let mut alpha0 = spec.asymptote_range.sample(&mut rng);
        let amplitude = |a0: f64| match prev {
            Some(x) => x - a0 + jump / phi,
            None => jump / phi,
        };
        let mut tries = 0;
        while amplitude(alpha0) <= MIN_AMPLITUDE {
            tries += 1;
            alpha0 = if tries < ASYMPTOTE_TRIES {
                spec.asymptote_range.sample(&mut rng)
            } else {
                spec.asymptote_range.low
            };
            if tries >= ASYMPTOTE_TRIES {
                break;
            }
        }
        let alpha1 = amplitude(alpha0);
        let mut excess = alpha1;
        for _ in start..end {
            excess *= phi;
            clean.push(alpha0 + excess);
        }
        segments.push(TrueSegment {
            start,
            end,
            alpha0,
            alpha1,
            phi,
            gamma: gamma_of_phi(phi)?,
            jump,
            large,
        });
    }

    let noisy = if spec.noise_sd > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
        clean.iter().map(|&x| x + noise.sample(&mut rng)).collect()
    } else {
        clean.clone()
    };

    Ok(GroundTruth {
        scenario: spec.id.clone(),
        seed: spec.seed,
        replicate,
        changepoints: segments.iter().skip(1).map(|s| s.start).collect(),
        segments,
        clean,
        noisy,
    })
}

/// Integer arrival times of a rate-`rate` Poisson process on `[from, to)`.
fn poisson_points<R: Rng>(rng: &mut R, rate: f64, from: f64, to: f64) -> Result<Vec<usize>> {
    let exp = Exp::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = from;
    loop {
        t += exp.sample(rng);
        if t >= to {
            return Ok(out);
        }
        out.push(t.floor() as usize);
    }
}

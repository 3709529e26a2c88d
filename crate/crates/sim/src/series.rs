//! Seeded regime-switching series and CSV ingestion.
//!
//! Generator: ChaCha8 seeded with `seed_from_u64(seed)`. Exactly one
//! standard-normal draw (ziggurat, `rand_distr::StandardNormal`) is taken
//! per observation, in time order, so a series is a prefix of any longer
//! series with the same seed and regimes.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::report::SCHEMA_VERSION;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub level: f64,
    pub duration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSpec {
    pub seed: u64,
    pub length: usize,
    /// Played in order and repeated cyclically if `length` exceeds their
    /// total duration.
    pub regimes: Vec<Regime>,
    pub noise_sd: f64,
}

/// Seed of the committed default series.
pub const DEFAULT_SEED: u64 = 7;

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            length: 320,
            regimes: [(0.0, 80), (100.0, 80), (-50.0, 80), (50.0, 80)]
                .into_iter()
                .map(|(level, duration)| Regime { level, duration })
                .collect(),
            noise_sd: 30.0,
        }
    }
}

impl SeriesSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.length == 0 {
            return Err(HarnessError::config("series length must be positive"));
        }
        if self.regimes.is_empty() || self.regimes.iter().all(|r| r.duration == 0) {
            return Err(HarnessError::config(
                "series needs at least one regime with positive duration",
            ));
        }
        if let Some(r) = self.regimes.iter().find(|r| !r.level.is_finite()) {
            return Err(HarnessError::config(format!("regime level {} is not finite", r.level)));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(HarnessError::config(format!(
                "noise_sd {} must be finite and non-negative",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// Observations with optional ground-truth means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub observations: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub length: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub first: f64,
    pub last: f64,
}

/// Contents of `gen-series`'s `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub schema_version: u32,
    pub spec: SeriesSpec,
    pub stats: SeriesStats,
}

impl SeriesSummary {
    pub fn new(spec: &SeriesSpec, series: &Series) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            spec: spec.clone(),
            stats: series.stats(),
        }
    }
}

pub fn generate_series(spec: &SeriesSpec) -> Result<Series, HarnessError> {
    spec.validate()?;
    let levels = spec
        .regimes
        .iter()
        .flat_map(|r| std::iter::repeat_n(r.level, r.duration))
        .cycle()
        .take(spec.length);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (observations, truth) = levels
        .map(|level| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (level + spec.noise_sd * z, level)
        })
        .unzip();
    Ok(Series {
        observations,
        truth: Some(truth),
    })
}

impl Series {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Unit time steps.
    pub fn inputs(&self) -> Vec<(f64, f64)> {
        self.observations.iter().map(|&u| (u, 1.0)).collect()
    }

    pub fn stats(&self) -> SeriesStats {
        let u = &self.observations;
        let n = u.len() as f64;
        let mean = u.iter().sum::<f64>() / n;
        let var = u.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        SeriesStats {
            length: u.len(),
            mean,
            sd: var.sqrt(),
            min: u.iter().copied().fold(f64::INFINITY, f64::min),
            max: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            first: u.first().copied().unwrap_or(f64::NAN),
            last: u.last().copied().unwrap_or(f64::NAN),
        }
    }

    /// One observation per line with an optional second column of
    /// ground-truth means. A leading non-numeric line is taken as a header.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, HarnessError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut observations = Vec::new();
        let mut truth = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| HarnessError::config(format!("series CSV: {e}")))?;
            let parse = |i: usize| record.get(i).filter(|s| !s.is_empty()).map(str::parse::<f64>);
            match parse(0) {
                None => continue,
                Some(Err(_)) if line == 0 => continue,
                Some(Err(e)) => return Err(HarnessError::config(format!("series CSV line {}: {e}", line + 1))),
                Some(Ok(u)) if !u.is_finite() => {
                    return Err(HarnessError::config(format!(
                        "series CSV line {}: non-finite value",
                        line + 1
                    )))
                }
                Some(Ok(u)) => observations.push(u),
            }
            match parse(1) {
                Some(Ok(m)) => truth.push(m),
                Some(Err(e)) => return Err(HarnessError::config(format!("series CSV line {}: {e}", line + 1))),
                None => {}
            }
        }
        if observations.is_empty() {
            return Err(HarnessError::config("series CSV has no observations"));
        }
        if !truth.is_empty() && truth.len() != observations.len() {
            return Err(HarnessError::config(
                "ground-truth column must be given on every line or on none",
            ));
        }
        Ok(Self {
            observations,
            truth: (!truth.is_empty()).then_some(truth),
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.truth {
            Some(truth) => {
                writeln!(out, "u,truth")?;
                for (u, m) in self.observations.iter().zip(truth) {
                    writeln!(out, "{u},{m}")?;
                }
            }
            None => {
                writeln!(out, "u")?;
                for u in &self.observations {
                    writeln!(out, "{u}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_single_regime_is_constant() {
        let spec = SeriesSpec {
            noise_sd: 0.0,
            regimes: vec![Regime {
                level: 0.0,
                duration: 10,
            }],
            length: 25,
            ..SeriesSpec::default()
        };
        let s = generate_series(&spec).unwrap();
        assert_eq!(s.len(), 25);
        assert!(s.observations.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn same_seed_same_series() {
        let spec = SeriesSpec::default();
        assert_eq!(generate_series(&spec).unwrap(), generate_series(&spec).unwrap());
        let other = SeriesSpec {
            seed: spec.seed + 1,
            ..spec.clone()
        };
        assert_ne!(generate_series(&spec).unwrap(), generate_series(&other).unwrap());
    }

    #[test]
    fn shorter_series_is_a_prefix() {
        let long = generate_series(&SeriesSpec::default()).unwrap();
        let short = generate_series(&SeriesSpec {
            length: 100,
            ..SeriesSpec::default()
        })
        .unwrap();
        assert_eq!(&long.observations[..100], &short.observations[..]);
    }

    #[test]
    fn regimes_cycle() {
        let spec = SeriesSpec {
            noise_sd: 0.0,
            regimes: vec![
                Regime {
                    level: 1.0,
                    duration: 2,
                },
                Regime {
                    level: 2.0,
                    duration: 1,
                },
            ],
            length: 7,
            seed: 0,
        };
        let s = generate_series(&spec).unwrap();
        assert_eq!(s.observations, vec![1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn csv_round_trip() {
        let s = generate_series(&SeriesSpec {
            length: 20,
            ..SeriesSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(Series::read_csv(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn csv_without_header_or_truth() {
        let s = Series::read_csv("1.5\n-2\n3e1\n".as_bytes()).unwrap();
        assert_eq!(s.observations, vec![1.5, -2.0, 30.0]);
        assert!(s.truth.is_none());
        assert!(Series::read_csv("u\nabc\n".as_bytes()).is_err());
        assert!(Series::read_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(Series::read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SeriesSpec {
                length: 0,
                ..SeriesSpec::default()
            },
            SeriesSpec {
                noise_sd: -1.0,
                ..SeriesSpec::default()
            },
            SeriesSpec {
                regimes: vec![],
                ..SeriesSpec::default()
            },
        ] {
            assert!(generate_series(&spec).is_err());
        }
    }
}

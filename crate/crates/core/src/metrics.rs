//! Speedup, efficiency and Amdahl serial-fraction estimates.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("times must be positive")]
    NonPositiveTime,
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("no single-worker baseline measurement")]
    MissingBaseline,
    #[error("no measurement with more than one worker")]
    NoParallelPoints,
}

/// One timed trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    pub workers: usize,
    pub wall_time: Duration,
    pub checksum: u64,
    pub trial: usize,
}

impl Measurement {
    pub fn new(
        workers: usize,
        wall_time: Duration,
        checksum: u64,
        trial: usize,
    ) -> Result<Self, MetricsError> {
        if workers == 0 {
            return Err(MetricsError::ZeroWorkers);
        }
        if wall_time.is_zero() {
            return Err(MetricsError::NonPositiveTime);
        }
        Ok(Self {
            workers,
            wall_time,
            checksum,
            trial,
        })
    }
}

pub fn speedup(t1: Duration, tp: Duration) -> Result<f64, MetricsError> {
    if t1.is_zero() || tp.is_zero() {
        return Err(MetricsError::NonPositiveTime);
    }
    Ok(t1.as_secs_f64() / tp.as_secs_f64())
}

pub fn efficiency(speedup: f64, workers: usize) -> Result<f64, MetricsError> {
    if workers == 0 {
        return Err(MetricsError::ZeroWorkers);
    }
    Ok(speedup / workers as f64)
}

/// Median, averaging the middle pair for even counts.
pub fn median(times: &[Duration]) -> Option<Duration> {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => {
            let (a, b) = (sorted[n / 2 - 1].as_nanos(), sorted[n / 2].as_nanos());
            Some(Duration::from_nanos(((a + b) / 2) as u64))
        }
    }
}

/// Median wall time per worker count.
pub fn median_times(measurements: &[Measurement]) -> BTreeMap<usize, Duration> {
    let mut by_workers: BTreeMap<usize, Vec<Duration>> = BTreeMap::new();
    for m in measurements {
        by_workers.entry(m.workers).or_default().push(m.wall_time);
    }
    by_workers
        .into_iter()
        .map(|(p, times)| (p, median(&times).expect("groups are non-empty")))
        .collect()
}

/// Unclamped serial fraction implied by speedup `s` at `p` workers.
pub fn amdahl_point(s: f64, p: usize) -> f64 {
    let p = p as f64;
    (p / s - 1.0) / (p - 1.0)
}

/// Per-point Amdahl inversion `(p / S_p - 1) / (p - 1)` for every `p > 1`,
/// each clamped to `[0, 1]` and then averaged.
pub fn amdahl_fraction(measurements: &[Measurement]) -> Result<f64, MetricsError> {
    let points = amdahl_points(&median_times(measurements))?;
    Ok(points.iter().map(|&(_, f)| f.clamp(0.0, 1.0)).sum::<f64>() / points.len() as f64)
}

fn amdahl_points(medians: &BTreeMap<usize, Duration>) -> Result<Vec<(usize, f64)>, MetricsError> {
    let &t1 = medians.get(&1).ok_or(MetricsError::MissingBaseline)?;
    let points: Vec<(usize, f64)> = medians
        .iter()
        .filter(|(&p, _)| p > 1)
        .map(|(&p, &tp)| Ok((p, amdahl_point(speedup(t1, tp)?, p))))
        .collect::<Result<_, MetricsError>>()?;
    if points.is_empty() {
        return Err(MetricsError::NoParallelPoints);
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfPoint {
    pub workers: usize,
    pub median: Duration,
    pub speedup: f64,
    pub efficiency: f64,
    /// Unclamped serial fraction at this point; `None` at `p = 1`.
    pub serial_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerfReport {
    pub baseline: Duration,
    pub points: Vec<PerfPoint>,
    /// `None` when only the baseline was measured.
    pub amdahl_fraction: Option<f64>,
    /// Some point ran faster than linear (negative serial fraction).
    pub super_linear: bool,
}

impl PerfReport {
    pub fn from_measurements(measurements: &[Measurement]) -> Result<Self, MetricsError> {
        let medians = median_times(measurements);
        let &baseline = medians.get(&1).ok_or(MetricsError::MissingBaseline)?;
        let mut points = Vec::with_capacity(medians.len());
        for (&p, &tp) in &medians {
            let s = speedup(baseline, tp)?;
            points.push(PerfPoint {
                workers: p,
                median: tp,
                speedup: s,
                efficiency: efficiency(s, p)?,
                serial_fraction: (p > 1).then(|| amdahl_point(s, p)),
            });
        }
        let fractions: Vec<f64> = points.iter().filter_map(|pt| pt.serial_fraction).collect();
        let super_linear = fractions.iter().any(|&f| f < 0.0);
        let amdahl_fraction = (!fractions.is_empty()).then(|| {
            fractions.iter().map(|f| f.clamp(0.0, 1.0)).sum::<f64>() / fractions.len() as f64
        });
        Ok(Self {
            baseline,
            points,
            amdahl_fraction,
            super_linear,
        })
    }
}

impl fmt::Display for PerfReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "workers,median_ns,speedup,efficiency,serial_fraction")?;
        for pt in &self.points {
            let sf = pt
                .serial_fraction
                .map(|x| format!("{x:.6}"))
                .unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{},{},{:.6},{:.6},{sf}",
                pt.workers,
                pt.median.as_nanos(),
                pt.speedup,
                pt.efficiency
            )?;
        }
        match self.amdahl_fraction {
            Some(a) => write!(f, "amdahl_fraction={a:.6}")?,
            None => write!(f, "amdahl_fraction=-")?,
        }
        if self.super_linear {
            write!(f, " (super-linear speedup observed)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ns(n: u64) -> Duration {
        Duration::from_nanos(n)
    }

    fn m(p: usize, t: u64) -> Measurement {
        Measurement::new(p, ns(t), 0, 0).unwrap()
    }

    /// Times `T(p) = T1 (f + (1 - f) / p)`; `T1` is chosen so every value is
    /// a whole number of nanoseconds for the fractions used here.
    fn synthetic(f: f64, ps: &[usize]) -> Vec<Measurement> {
        let t1 = 1_600_000_000.0;
        std::iter::once(1)
            .chain(ps.iter().copied())
            .map(|p| m(p, (t1 * (f + (1.0 - f) / p as f64)).round() as u64))
            .collect()
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(ns(100), ns(25)).unwrap(), 4.0);
        assert_eq!(speedup(ns(100), ns(100)).unwrap(), 1.0);
        assert_eq!(speedup(ns(100), ns(200)).unwrap(), 0.5);
        assert!(speedup(ns(0), ns(1)).is_err());
        assert!(speedup(ns(1), ns(0)).is_err());
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency(4.0, 8).unwrap(), 0.5);
        assert_eq!(efficiency(1.0, 1).unwrap(), 1.0);
        assert!((efficiency(5.263, 10).unwrap() - 0.5263).abs() < 1e-12);
        assert!(efficiency(1.0, 0).is_err());
    }

    #[test]
    fn amdahl_examples() {
        let f = amdahl_fraction(&[m(1, 1000), m(4, 325)]).unwrap();
        assert!((f - 0.1).abs() < 1e-12, "{f}");
        assert_eq!(amdahl_fraction(&[m(1, 100), m(4, 25)]).unwrap(), 0.0);
        assert_eq!(amdahl_fraction(&[m(1, 100), m(4, 100)]).unwrap(), 1.0);
        assert_eq!(
            amdahl_fraction(&[m(4, 100)]),
            Err(MetricsError::MissingBaseline)
        );
        assert_eq!(
            amdahl_fraction(&[m(1, 100)]),
            Err(MetricsError::NoParallelPoints)
        );
    }

    #[test]
    fn amdahl_round_trip() {
        for f in [0.0, 0.1, 0.25, 0.5, 1.0] {
            let est = amdahl_fraction(&synthetic(f, &[2, 4, 8, 16])).unwrap();
            assert!((est - f).abs() < 1e-9, "f={f}: {est}");
        }
    }

    #[test]
    fn super_linear_is_clamped_and_flagged() {
        let report = PerfReport::from_measurements(&[m(1, 100), m(2, 40)]).unwrap();
        assert!(report.super_linear);
        assert_eq!(report.amdahl_fraction, Some(0.0));
        assert!(report.points[1].serial_fraction.unwrap() < 0.0);
    }

    #[test]
    fn report_identities() {
        let report = PerfReport::from_measurements(&synthetic(0.25, &[2, 4])).unwrap();
        assert_eq!(report.points[0].speedup, 1.0);
        assert_eq!(report.points[0].serial_fraction, None);
        for pt in &report.points {
            assert!((pt.efficiency - pt.speedup / pt.workers as f64).abs() < 1e-15);
        }
        assert!(!report.super_linear);
        let text = report.to_string();
        assert!(text.starts_with("workers,median_ns"));
        assert!(text.contains("amdahl_fraction=0.250000"));
    }

    #[test]
    fn median_of_trials() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[ns(3), ns(1), ns(2)]), Some(ns(2)));
        assert_eq!(median(&[ns(4), ns(1), ns(2), ns(3)]), Some(ns(2)));
        let trials = [m(1, 90), m(1, 100), m(1, 140), m(2, 60), m(2, 50), m(2, 70)];
        let base = PerfReport::from_measurements(&trials).unwrap();
        let mut dup = trials.to_vec();
        dup.extend([m(1, 100), m(2, 60)]);
        assert_eq!(PerfReport::from_measurements(&dup).unwrap(), base);
    }

    #[test]
    fn invalid_measurements() {
        assert_eq!(
            Measurement::new(0, ns(1), 0, 0),
            Err(MetricsError::ZeroWorkers)
        );
        assert_eq!(
            Measurement::new(1, ns(0), 0, 0),
            Err(MetricsError::NonPositiveTime)
        );
    }

    proptest! {
        #[test]
        fn speedup_is_scale_invariant(t1 in 1u64..1_000_000, tp in 1u64..1_000_000, c in 1u64..1000) {
            let a = speedup(ns(t1), ns(tp)).unwrap();
            let b = speedup(ns(t1 * c), ns(tp * c)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            prop_assert_eq!(efficiency(speedup(ns(t1), ns(t1)).unwrap(), 1).unwrap(), 1.0);
        }

        #[test]
        fn amdahl_estimate_is_in_unit_interval(times in prop::collection::vec((1usize..17, 1u64..10_000), 1..20), t1 in 1u64..10_000) {
            let mut ms: Vec<Measurement> = times.into_iter().map(|(p, t)| m(p, t)).collect();
            ms.push(m(1, t1));
            if let Ok(f) = amdahl_fraction(&ms) {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
    }
}

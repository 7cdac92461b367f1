//! Speed-versus-time driving cycles with linear interpolation.

use std::path::Path;

use crate::error::{ConfigError, CycleError};

const KPH_TO_MPS: f64 = 1.0 / 3.6;

const ECE15_CSV: &str = include_str!("../data/ece15.csv");

/// A validated cycle: strictly increasing times, non-negative speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    pub name: String,
    samples: Vec<(f64, f64)>,
}

impl DriveCycle {
    /// Builds a cycle from `(time_s, speed_mps)` pairs.
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self, CycleError> {
        // rows are reported 1-based with the header on line 1
        validate(&samples, |i| i + 2)?;
        Ok(Self {
            name: name.into(),
            samples,
        })
    }

    /// The bundled urban ECE-15 profile, 195 s, peak 50 km/h.
    pub fn ece15() -> Self {
        parse_cycle("ece15", ECE15_CSV).expect("bundled ECE-15 fixture is valid")
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn peak_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(0.0, f64::max)
    }

    /// Index of the segment active at `t`; a knot belongs to the segment on
    /// its right. `None` outside the cycle.
    fn segment(&self, t: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|s| s.0 <= t);
        (idx >= 1 && idx < self.samples.len()).then(|| idx - 1)
    }

    /// Interpolated speed, m/s, clamped to the end values outside the cycle.
    pub fn speed_at(&self, t: f64) -> f64 {
        let n = self.samples.len();
        if t <= self.samples[0].0 {
            return self.samples[0].1;
        }
        if t >= self.samples[n - 1].0 {
            return self.samples[n - 1].1;
        }
        let k = self.segment(t).expect("t inside cycle");
        let (t0, v0) = self.samples[k];
        let (t1, v1) = self.samples[k + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Slope of the active segment, m/s²; zero outside the cycle.
    pub fn accel_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(k) => {
                let (t0, v0) = self.samples[k];
                let (t1, v1) = self.samples[k + 1];
                (v1 - v0) / (t1 - t0)
            }
            None => 0.0,
        }
    }

    /// Serializes as `time_s,speed_mps`. Floats use shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,speed_mps\n");
        for (t, v) in &self.samples {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }
}

fn validate(samples: &[(f64, f64)], line_of: impl Fn(usize) -> usize) -> Result<(), CycleError> {
    if samples.len() < 2 {
        return Err(CycleError::TooShort(samples.len()));
    }
    for (i, &(t, v)) in samples.iter().enumerate() {
        if !t.is_finite() || !v.is_finite() {
            return Err(CycleError::Validation {
                line: line_of(i),
                message: "non-finite value".into(),
            });
        }
        if v < 0.0 {
            return Err(CycleError::Validation {
                line: line_of(i),
                message: format!("negative speed {v}"),
            });
        }
        if i > 0 && t <= samples[i - 1].0 {
            return Err(CycleError::Validation {
                line: line_of(i),
                message: format!("time {t} does not increase (previous {})", samples[i - 1].0),
            });
        }
    }
    Ok(())
}

/// Parses a two-column CSV with header `time_s,speed_mps` or
/// `time_s,speed_kph`. Kilometres per hour are converted on load.
pub fn parse_cycle(name: &str, text: &str) -> Result<DriveCycle, CycleError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(&e, 1))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let scale = match cols.as_slice() {
        ["time_s", "speed_mps"] => 1.0,
        ["time_s", "speed_kph"] => KPH_TO_MPS,
        _ => {
            return Err(CycleError::Parse {
                line: 1,
                column: 1,
                message: format!(
                    "expected header `time_s,speed_mps` or `time_s,speed_kph`, found `{}`",
                    cols.join(",")
                ),
            })
        }
    };
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(CycleError::Parse {
                line,
                column: record.len().min(2) + 1,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let mut vals = [0.0; 2];
        for (c, field) in record.iter().enumerate() {
            vals[c] = field.parse::<f64>().map_err(|_| CycleError::Parse {
                line,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })?;
        }
        samples.push((vals[0], vals[1] * scale));
        lines.push(line);
    }
    validate(&samples, |i| lines[i])?;
    Ok(DriveCycle {
        name: name.to_owned(),
        samples,
    })
}

fn csv_error(e: &csv::Error, fallback_line: usize) -> CycleError {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    CycleError::Parse {
        line,
        column: 1,
        message: e.to_string(),
    }
}

/// Reads a cycle file; the file stem becomes the cycle name.
pub fn load_cycle(path: &Path) -> Result<DriveCycle, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cycle");
    Ok(parse_cycle(name, &text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_sample_cycle() {
        let c = parse_cycle("t", "time_s,speed_mps\n0,0\n10,5\n").unwrap();
        assert_eq!(c.samples(), &[(0.0, 0.0), (10.0, 5.0)]);
        assert_eq!(c.speed_at(5.0), 2.5);
        assert_eq!(c.accel_at(5.0), 0.5);
    }

    #[test]
    fn clamps_outside() {
        let c = parse_cycle("t", "time_s,speed_mps\n1,2\n10,5\n").unwrap();
        assert_eq!(c.speed_at(-3.0), 2.0);
        assert_eq!(c.speed_at(30.0), 5.0);
        assert_eq!(c.accel_at(-3.0), 0.0);
        assert_eq!(c.accel_at(30.0), 0.0);
    }

    #[test]
    fn knot_uses_right_segment() {
        let c = DriveCycle::new("k", vec![(0.0, 0.0), (10.0, 5.0), (20.0, 5.0)]).unwrap();
        assert_eq!(c.accel_at(10.0), 0.0);
        assert_eq!(c.accel_at(0.0), 0.5);
        assert_eq!(c.speed_at(10.0), 5.0);
    }

    #[test]
    fn non_monotone_time_names_the_row() {
        let err = parse_cycle("t", "time_s,speed_mps\n0,0\n5,1\n4,2\n").unwrap_err();
        assert!(matches!(err, CycleError::Validation { line: 4, .. }), "{err:?}");
        let err = parse_cycle("t", "time_s,speed_mps\n0,0\n5,-1\n").unwrap_err();
        assert!(matches!(err, CycleError::Validation { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_cycle("t", "time_s,speed_mps\n0,0\n5,abc\n").unwrap_err();
        assert_eq!(
            err,
            CycleError::Parse {
                line: 3,
                column: 2,
                message: "`abc` is not a number".into()
            }
        );
        assert!(matches!(parse_cycle("t", "t,v\n0,0\n1,1\n"), Err(CycleError::Parse { line: 1, .. })));
        assert_eq!(parse_cycle("t", "time_s,speed_mps\n0,0\n"), Err(CycleError::TooShort(1)));
    }

    #[test]
    fn kph_converted() {
        let c = parse_cycle("t", "time_s,speed_kph\n0,0\n10,36\n").unwrap();
        assert_eq!(c.samples()[1].1, 36.0 / 3.6);
    }

    #[test]
    fn ece15_fixture() {
        let c = DriveCycle::ece15();
        assert_eq!(c.duration(), 195.0);
        assert!((c.peak_speed() - 50.0 / 3.6).abs() < 1e-12);
    }

    #[test]
    fn accel_integrates_back_to_speed() {
        let c = DriveCycle::ece15();
        let dt = 1e-3;
        let mut v = c.speed_at(0.0);
        let n = (c.duration() / dt).round() as usize;
        for k in 0..n {
            v += c.accel_at(k as f64 * dt) * dt;
        }
        assert!((v - c.speed_at(c.end())).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn csv_round_trip(raw in proptest::collection::vec((0.001f64..100.0, 0.0f64..40.0), 2..30)) {
            let mut t = 0.0;
            let samples: Vec<(f64, f64)> = raw.iter().map(|&(dt, v)| { t += dt; (t, v) }).collect();
            let c = DriveCycle::new("p", samples).unwrap();
            let back = parse_cycle("p", &c.to_csv()).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn speed_continuous(t in 0.0f64..195.0) {
            let c = DriveCycle::ece15();
            let h = 1e-7;
            prop_assert!((c.speed_at(t + h) - c.speed_at(t)).abs() < 1e-5);
        }
    }
}

//! Current load profiles: zero-order-hold `(time, current)` samples.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// `(t [s], I [A])`; `I_k` holds on `[t_k, t_{k+1})`, the last sample marks the end.
    samples: Vec<(f64, f64)>,
}

impl LoadProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(ModelError::Config("load profile is empty".into()));
        }
        if samples.iter().any(|(t, i)| !t.is_finite() || !i.is_finite()) {
            return Err(ModelError::Config("load profile has non-finite entries".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::Config("load profile times must be strictly increasing".into()));
        }
        Ok(LoadProfile { samples })
    }

    pub fn constant(current: f64, duration: f64) -> Result<Self> {
        LoadProfile::new(vec![(0.0, current), (duration, current)])
    }

    /// Consecutive constant-current segments `(current, duration)`.
    pub fn segments(segs: &[(f64, f64)]) -> Result<Self> {
        let mut t = 0.0;
        let mut samples = Vec::with_capacity(segs.len() + 1);
        for &(i, d) in segs {
            if !(d > 0.0) {
                return Err(ModelError::Config(format!("segment duration must be > 0, got {d}")));
            }
            samples.push((t, i));
            t += d;
        }
        let last = segs.last().map_or(0.0, |s| s.0);
        samples.push((t, last));
        LoadProfile::new(samples)
    }

    /// `cycles` x (charge, discharge) at `current` magnitude, each half lasting
    /// `half_duration`, optionally separated by rests.
    pub fn cc_cycles(current: f64, half_duration: f64, cycles: usize, rest: f64) -> Result<Self> {
        let mut segs = Vec::new();
        for _ in 0..cycles {
            segs.push((-current.abs(), half_duration));
            if rest > 0.0 {
                segs.push((0.0, rest));
            }
            segs.push((current.abs(), half_duration));
            if rest > 0.0 {
                segs.push((0.0, rest));
            }
        }
        LoadProfile::segments(&segs)
    }

    /// Urban-driving-like dynamic profile: 1 s samples, smooth accelerations,
    /// idle periods and regenerative (charging) pulses. `peak` is the largest
    /// discharge current. Deterministic in `seed`.
    pub fn udds_like(peak: f64, duration: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = duration.round() as usize;
        let mut samples = Vec::with_capacity(n + 1);
        let mut speed: f64 = 0.0;
        let mut target: f64 = 0.0;
        let mut hold = 0usize;
        for k in 0..n {
            if hold == 0 {
                // new phase of the drive: cruise, stop, or accelerate
                target = match rng.gen_range(0..4) {
                    0 => 0.0,
                    _ => rng.gen_range(0.2..1.0),
                };
                hold = rng.gen_range(15..60);
            }
            hold -= 1;
            let accel = (target - speed).clamp(-0.06, 0.04);
            speed = (speed + accel).max(0.0);
            // traction power ~ speed * (drag + acceleration); braking regenerates
            let power = speed * (0.35 + 0.5 * speed) + 6.0 * accel * speed.max(0.1);
            let current = if power >= 0.0 { peak * power.min(1.0) } else { 0.6 * peak * power.max(-1.0) };
            samples.push((k as f64, current));
        }
        samples.push((n as f64, 0.0));
        LoadProfile::new(samples)
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

    fn index_at(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.0 <= t).saturating_sub(1)
    }

    pub fn current_at(&self, t: f64) -> f64 {
        self.samples[self.index_at(t)].1
    }

    /// First sample time strictly after `t` (or the end).
    pub fn next_break(&self, t: f64) -> f64 {
        let k = self.samples.partition_point(|s| s.0 <= t);
        self.samples.get(k).map_or(self.end(), |s| s.0)
    }

    /// Backward difference of the held current at `t` over the previous sample.
    pub fn current_rate(&self, t: f64) -> f64 {
        let k = self.index_at(t);
        if k == 0 {
            return 0.0;
        }
        let (t0, i0) = self.samples[k - 1];
        let (t1, i1) = self.samples[k];
        (i1 - i0) / (t1 - t0)
    }

    /// Total charge delivered [C] between the start and `t`.
    pub fn charge_until(&self, t: f64) -> f64 {
        let mut q = 0.0;
        for w in self.samples.windows(2) {
            let (a, i) = w[0];
            let b = w[1].0.min(t);
            if b > a {
                q += i * (b - a);
            }
        }
        q
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| ModelError::Config(format!("{}: expected time_s,current_A", path.display())))?
                    .parse::<f64>()
                    .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
            };
            samples.push((parse(0)?, parse(1)?));
        }
        LoadProfile::new(samples)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_s", "current_A"])?;
        for (t, i) in &self.samples {
            w.write_record([t.to_string(), i.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_hold() {
        let p = LoadProfile::new(vec![(0.0, 1.0), (10.0, -2.0), (20.0, 0.0)]).unwrap();
        assert_eq!(p.current_at(0.0), 1.0);
        assert_eq!(p.current_at(9.999), 1.0);
        assert_eq!(p.current_at(10.0), -2.0);
        assert_eq!(p.next_break(3.0), 10.0);
        assert_eq!(p.next_break(10.0), 20.0);
        assert_eq!(p.charge_until(15.0), 10.0 - 10.0);
        assert_eq!(p.charge_until(20.0), 10.0 - 20.0);
        assert_eq!(p.current_rate(12.0), -0.3);
        assert_eq!(p.current_rate(5.0), 0.0);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(LoadProfile::new(vec![]).is_err());
        assert!(LoadProfile::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(LoadProfile::new(vec![(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn cycles_alternate_and_balance() {
        let p = LoadProfile::cc_cycles(2.0, 100.0, 3, 10.0).unwrap();
        assert_eq!(p.end(), 3.0 * 220.0);
        assert_eq!(p.current_at(50.0), -2.0);
        assert_eq!(p.current_at(150.0), 2.0);
        assert_eq!(p.charge_until(p.end()), 0.0);
    }

    #[test]
    fn udds_like_is_deterministic_and_mixed_sign() {
        let a = LoadProfile::udds_like(10.0, 1370.0, 7).unwrap();
        let b = LoadProfile::udds_like(10.0, 1370.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().any(|s| s.1 < 0.0));
        assert!(a.samples().iter().any(|s| s.1 > 5.0));
        assert!(a.samples().iter().all(|s| s.1 <= 10.0 && s.1 >= -6.0));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = LoadProfile::udds_like(3.0, 50.0, 1).unwrap();
        p.write_csv(&path).unwrap();
        assert_eq!(LoadProfile::read_csv(&path).unwrap(), p);
    }
}

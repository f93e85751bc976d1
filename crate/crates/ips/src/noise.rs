//! Reproducible per-vertex marked Poisson driving noise on
//! (time, level, jump).
//!
//! The level axis is partitioned into bands of width `band_width`. Each
//! (vertex key, band) pair owns a counter-derived sub-seed and its events
//! are generated by Poisson-count-then-uniform placement over
//! `(0, horizon] x band`. Raising the level cap therefore extends, never
//! invalidates, previously observed events, and two graphs sharing vertex
//! keys receive identical event streams at shared keys.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{IpsError, Result};
use crate::seeding::{combine, tagged, Tag};

/// The jump set J with a finite positive weight per jump (the measure ς).
#[derive(Clone, Debug)]
pub struct JumpSpec {
    jumps: Vec<i64>,
    weights: Vec<f64>,
    total: f64,
}

impl JumpSpec {
    pub fn new(pairs: &[(i64, f64)]) -> Result<JumpSpec> {
        let mut jumps = Vec::new();
        let mut weights = Vec::new();
        for &(j, w) in pairs {
            if j == 0 {
                return Err(IpsError::InvalidParameter("jump 0 not allowed".into()));
            }
            if jumps.contains(&j) {
                return Err(IpsError::InvalidParameter(format!("duplicate jump {j}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(IpsError::InvalidParameter(format!(
                    "jump weight {w} must be positive and finite"
                )));
            }
            jumps.push(j);
            weights.push(w);
        }
        if jumps.is_empty() {
            return Err(IpsError::InvalidParameter("empty jump set".into()));
        }
        let total = weights.iter().sum();
        Ok(JumpSpec {
            jumps,
            weights,
            total,
        })
    }

    /// Unit weight per jump, matching the built-in models' convention.
    pub fn unit(jumps: &[i64]) -> JumpSpec {
        JumpSpec::new(&jumps.iter().map(|&j| (j, 1.0)).collect::<Vec<_>>()).unwrap()
    }

    pub fn jumps(&self) -> &[i64] {
        &self.jumps
    }

    /// ς(J).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn weight(&self, j: i64) -> f64 {
        self.jumps
            .iter()
            .position(|&x| x == j)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Inverse-CDF draw from ς/ς(J), u in [0,1).
    fn sample(&self, u: f64) -> i64 {
        let target = u * self.total;
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return self.jumps[i];
            }
        }
        *self.jumps.last().unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEvent {
    pub t: f64,
    pub r: f64,
    pub j: i64,
}

#[derive(Clone, Debug)]
pub struct DrivingNoise {
    pub global_seed: u64,
    pub horizon: f64,
    pub band_width: f64,
    pub jump_spec: JumpSpec,
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

impl DrivingNoise {
    pub fn new(global_seed: u64, horizon: f64, jump_spec: JumpSpec) -> DrivingNoise {
        DrivingNoise {
            global_seed,
            horizon,
            band_width: 1.0,
            jump_spec,
        }
    }

    /// All events of one (vertex, band) pair over (0, horizon], sorted by
    /// time. Pure function of (global_seed, vertex_key, band).
    fn band_events(&self, vertex_key: u64, band: u64) -> Vec<NoiseEvent> {
        let sub = combine(
            tagged(self.global_seed, Tag::NoiseBand),
            combine(vertex_key, band),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        let mean = self.horizon * self.band_width * self.jump_spec.total();
        let count = if mean > 0.0 {
            Poisson::new(mean).unwrap().sample(&mut rng) as usize
        } else {
            0
        };
        let lo = band as f64 * self.band_width;
        let mut events: Vec<NoiseEvent> = (0..count)
            .map(|_| {
                let t = self.horizon * (1.0 - rng.gen::<f64>());
                let r = lo + self.band_width * (1.0 - rng.gen::<f64>());
                let j = self.jump_spec.sample(rng.gen::<f64>());
                NoiseEvent { t, r, j }
            })
            .collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        // deterministic tie perturbation; f64 uniform draws collide with
        // probability ~ 0, but keep jump times strictly increasing
        for i in 1..events.len() {
            if events[i].t <= events[i - 1].t {
                events[i].t = next_up(events[i - 1].t);
            }
        }
        events
    }

    /// All events with level <= `level_cap` and time in `(t1, t2]`, sorted
    /// by time. Raising `level_cap` yields a superset with previously
    /// returned events unchanged.
    pub fn events(
        &self,
        vertex_key: u64,
        level_cap: f64,
        window: (f64, f64),
    ) -> Result<Vec<NoiseEvent>> {
        let (t1, t2) = window;
        if !(0.0 <= t1 && t1 <= t2 && t2 <= self.horizon) {
            return Err(IpsError::WindowOutOfRange {
                t1,
                t2,
                horizon: self.horizon,
            });
        }
        if !(level_cap > 0.0) {
            return Err(IpsError::InvalidParameter(format!(
                "level cap {level_cap} must be positive"
            )));
        }
        let bands = (level_cap / self.band_width).ceil() as u64;
        let mut out: Vec<NoiseEvent> = Vec::new();
        for band in 0..bands {
            out.extend(
                self.band_events(vertex_key, band)
                    .into_iter()
                    .filter(|e| e.r <= level_cap && e.t > t1 && e.t <= t2),
            );
        }
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(out)
    }

    /// Earliest event with time > `t` and level <= `level_cap`, if any.
    pub fn first_event_after(
        &self,
        vertex_key: u64,
        level_cap: f64,
        t: f64,
    ) -> Result<Option<NoiseEvent>> {
        Ok(self
            .events(vertex_key, level_cap, (t.max(0.0), self.horizon))?
            .into_iter()
            .next())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64) -> DrivingNoise {
        DrivingNoise::new(seed, 1.0, JumpSpec::unit(&[-1, 1]))
    }

    #[test]
    fn empty_window_is_empty() {
        let n = noise(7);
        assert!(n.events(3, 5.0, (0.4, 0.4)).unwrap().is_empty());
    }

    #[test]
    fn window_out_of_range() {
        let n = noise(7);
        assert!(matches!(
            n.events(3, 5.0, (0.0, 2.0)),
            Err(IpsError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn cap_monotonicity_exact_subset() {
        for seed in 0..40 {
            let n = noise(seed);
            for key in 0..25 {
                let small = n.events(key, 2.0, (0.0, 1.0)).unwrap();
                let large = n.events(key, 5.0, (0.0, 1.0)).unwrap();
                let mut it = large.iter();
                for e in &small {
                    assert!(it.any(|x| x == e), "band layering must nest");
                }
            }
        }
    }

    #[test]
    fn fractional_cap_monotonicity() {
        let n = noise(11);
        for key in 0..50 {
            let small = n.events(key, 2.3, (0.0, 1.0)).unwrap();
            let large = n.events(key, 2.9, (0.0, 1.0)).unwrap();
            let mut it = large.iter();
            for e in &small {
                assert!(it.any(|x| x == e));
            }
        }
    }

    #[test]
    fn determinism() {
        let a = noise(42).events(9, 3.0, (0.0, 1.0)).unwrap();
        let b = noise(42).events(9, 3.0, (0.0, 1.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn times_strictly_increasing_and_in_window() {
        let n = noise(3);
        for key in 0..100 {
            let ev = n.events(key, 4.0, (0.2, 0.9)).unwrap();
            for w in ev.windows(2) {
                assert!(w[0].t < w[1].t);
            }
            for e in &ev {
                assert!(e.t > 0.2 && e.t <= 0.9);
                assert!(e.r > 0.0 && e.r <= 4.0);
                assert!(e.j == 1 || e.j == -1);
            }
        }
    }

    #[test]
    fn first_event_consistency() {
        let n = noise(5);
        for key in 0..200 {
            let all = n.events(key, 3.0, (0.0, 1.0)).unwrap();
            assert_eq!(n.first_event_after(key, 3.0, 0.0).unwrap(), all.first().copied());
            if let Some(last) = all.last() {
                assert_eq!(n.first_event_after(key, 3.0, last.t).unwrap(), None);
            }
            // interleaved cap raise: merged earliest must match full list
            let big = n.events(key, 5.0, (0.0, 1.0)).unwrap();
            let mut t = 0.0;
            for e in &big {
                assert_eq!(n.first_event_after(key, 5.0, t).unwrap(), Some(*e));
                t = e.t;
            }
        }
    }

    #[test]
    fn mean_event_count_matches_intensity() {
        // levelCap=3, T=1, sigma(J)=2 -> Poisson mean 6
        let n = noise(1234);
        let reps = 10_000usize;
        let mut sum = 0.0;
        for key in 0..reps as u64 {
            sum += n.events(key, 3.0, (0.0, 1.0)).unwrap().len() as f64;
        }
        let mean = sum / reps as f64;
        let se = (6.0f64 / reps as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean} not within 3 se of 6");
    }
}

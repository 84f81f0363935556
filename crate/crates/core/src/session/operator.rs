use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::OperatorParams;

/// Seeded stand-in for a study participant: how long they take to react
/// and to work, and where they are.
#[derive(Debug, Clone)]
pub struct OperatorAgent {
    params: OperatorParams,
    rng: ChaCha8Rng,
    /// Distance from the robot base.
    distance: f64,
    walk: Option<Walk>,
    pub switch_held: bool,
}

#[derive(Debug, Clone, Copy)]
struct Walk {
    from: f64,
    to: f64,
    start: f64,
    end: f64,
}

impl OperatorAgent {
    pub fn new(params: OperatorParams, seed: u64) -> Self {
        let distance = (params.station[0].powi(2) + params.station[1].powi(2)).sqrt();
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            distance,
            walk: None,
            switch_held: false,
        }
    }

    pub fn params(&self) -> &OperatorParams {
        &self.params
    }

    pub fn station_distance(&self) -> f64 {
        (self.params.station[0].powi(2) + self.params.station[1].powi(2)).sqrt()
    }

    pub fn reaction_latency(&mut self) -> f64 {
        let j = self.params.latency_jitter;
        self.params.reaction_latency * (1.0 + self.rng.random_range(-j..=j))
    }

    pub fn work_duration(&mut self, nominal: f64) -> f64 {
        let j = self.params.duration_jitter;
        nominal * (1.0 + self.rng.random_range(-j..=j))
    }

    /// Starts walking to `distance` from the base; returns the arrival time.
    pub fn walk_to(&mut self, distance: f64, now: f64) -> f64 {
        let from = self.distance_at(now);
        let end = now + (distance - from).abs() / self.params.walk_speed;
        self.walk = Some(Walk {
            from,
            to: distance,
            start: now,
            end,
        });
        end
    }

    pub fn distance_at(&self, now: f64) -> f64 {
        match self.walk {
            Some(w) if now < w.end => w.from + (w.to - w.from) * (now - w.start) / (w.end - w.start),
            Some(w) => w.to,
            None => self.distance,
        }
    }

    pub fn is_walking(&self, now: f64) -> bool {
        self.walk.is_some_and(|w| now < w.end)
    }
}

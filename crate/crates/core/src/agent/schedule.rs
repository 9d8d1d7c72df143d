use serde::{Deserialize, Serialize};

/// Probability of acting greedily, ramping linearly from `start` to `end`
/// over `ramp_iterations` and holding afterwards. Exploration probability
/// is the complement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreSchedule {
    pub start: f64,
    pub end: f64,
    pub ramp_iterations: u64,
}

impl Default for ExploreSchedule {
    fn default() -> Self {
        Self {
            start: 0.0,
            end: 0.9995,
            ramp_iterations: 35_000,
        }
    }
}

impl ExploreSchedule {
    pub fn greedy_probability(&self, iteration: u64) -> f64 {
        if self.ramp_iterations == 0 || iteration >= self.ramp_iterations {
            return self.end;
        }
        let frac = iteration as f64 / self.ramp_iterations as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_ramp() {
        let s = ExploreSchedule::default();
        assert_eq!(s.greedy_probability(0), 0.0);
        assert_eq!(s.greedy_probability(17_500), 0.49975);
        assert_eq!(s.greedy_probability(35_000), 0.9995);
        assert_eq!(s.greedy_probability(1_000_000), 0.9995);
    }

    #[test]
    fn zero_ramp_is_immediately_final() {
        let s = ExploreSchedule { ramp_iterations: 0, ..Default::default() };
        assert_eq!(s.greedy_probability(0), 0.9995);
    }
}

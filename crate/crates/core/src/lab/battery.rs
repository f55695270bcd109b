use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{FamilyName, ScenarioConfig, Shape};

/// `n` reproducible bistable and combustion scenarios with random forcing, thresholds
/// and initial data, each limited to `max_periods`.
pub fn random_battery(seed: u64, n: usize, max_periods: usize) -> Vec<ScenarioConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut cfg = ScenarioConfig::default();
            cfg.seed = seed;
            cfg.time.max_periods = max_periods;
            let n = &mut cfg.nonlinearity;
            n.family = if k % 2 == 0 { FamilyName::Bistable } else { FamilyName::Combustion };
            n.theta = rng.gen_range(0.2..0.4);
            n.q1 = rng.gen_range(0.2..0.4);
            n.beta = rng.gen_range(0.0..0.8);
            let d = &mut cfg.initial_data;
            d.shape = match rng.gen_range(0..3) {
                0 => Shape::Box,
                1 => Shape::Gaussian,
                _ => Shape::TwoBoxes,
            };
            d.sigma = rng.gen_range(0.2..1.5);
            d.l = rng.gen_range(0.5..3.0);
            d.center = rng.gen_range(-3.0..3.0);
            d.sigma2 = rng.gen_range(0.1..1.0);
            d.l2 = rng.gen_range(0.3..1.5);
            d.center2 = d.center + rng.gen_range(3.5..6.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            cfg
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_reproducible_and_valid() {
        let a = random_battery(11, 20, 50);
        let b = random_battery(11, 20, 50);
        assert_eq!(a, b);
        assert_ne!(a, random_battery(12, 20, 50));
        for cfg in &a {
            cfg.validate().unwrap();
        }
    }
}

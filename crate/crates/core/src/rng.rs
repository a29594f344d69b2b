//! Seeding and uniform draws shared by every engine.

use rand_core::{RngCore, SeedableRng};

/// Random number generator used for a single program run.
pub type RunRng = rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of run `index` from a base seed.
///
/// `mix64(seed, i) = splitmix64(seed ^ splitmix64(i))`. Engines derive every
/// per-run seed through this function, so a batch of runs produces the same
/// traces whether it is executed sequentially or in parallel.
pub fn mix64(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn rng_from_seed(seed: u64) -> RunRng {
    RunRng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index drawn from unnormalized non-negative weights. Returns `None` when
/// the weights sum to zero.
pub fn categorical(rng: &mut impl RngCore, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = uniform(rng) * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = Some(i);
        }
        acc += w;
        if u < acc {
            return Some(i);
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix64_separates_indices() {
        let a = mix64(7, 0);
        let b = mix64(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, mix64(7, 0));
        assert_ne!(mix64(7, 0), mix64(8, 0));
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let i = categorical(&mut rng, &[0.0, 1.0, 0.0]).unwrap();
            assert_eq!(i, 1);
        }
        assert_eq!(categorical(&mut rng, &[0.0, 0.0]), None);
    }
}

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fusion::{MorphSpec, OpType};

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one purpose. `parts` are folded in order.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(master: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, parts))
}

/// Crossover with probability `p_crossover`, otherwise Mutation.
pub fn choose_operation(rng: &mut impl Rng, p_crossover: f64) -> OpType {
    if rng.random_bool(p_crossover.clamp(0.0, 1.0)) {
        OpType::Crossover
    } else {
        OpType::Mutation
    }
}

/// Uniform over {0.0, 0.1, ..., 1.0}.
pub fn draw_mutation_alpha(rng: &mut impl Rng) -> MorphSpec {
    MorphSpec::Tenths(rng.random_range(0..=10u8))
}

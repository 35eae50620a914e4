//! Agent-based simulation of a campus population moving over a road + pedestrian
//! network, with close-contact measurement and density-sweep experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod net;
pub mod pop;
pub mod plan;
pub mod contact;
pub mod sim;
pub mod experiments;
pub mod scenario;

/// Independent random stream `salt` derived from a run seed.
pub(crate) fn stream(seed: u64, salt: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

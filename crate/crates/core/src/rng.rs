//! Seeded random streams.
//!
//! Every run carries a single 64-bit seed. Randomness for distinct concerns
//! (learner initialization, concept noise, prediction tie-breaks, teacher
//! draws, data generation) is taken from separate ChaCha streams keyed by
//! that seed, so adding draws to one concern never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the engine.
pub type StreamRng = ChaCha8Rng;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    LearnerInit,
    Noise,
    TieBreak,
    Teacher,
    /// Example sampling for the SGD baseline, which has no teacher model.
    Sgd,
    Data,
    Split,
    Evaluation,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::LearnerInit => 1,
            Stream::Noise => 2,
            Stream::TieBreak => 3,
            Stream::Teacher => 4,
            Stream::Data => 5,
            Stream::Split => 6,
            Stream::Evaluation => 7,
            Stream::Sgd => 8,
        }
    }
}

/// Words of keystream reserved for each step by [`step_rng`].
const STEP_WINDOW: u128 = 1 << 20;

/// Generator for one named stream of `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Generator positioned at a window of the stream owned by a single step.
///
/// Draws made while handling step `t` depend only on `(seed, stream, t)`, so a
/// session rebuilt from its log resumes with exactly the draws an
/// uninterrupted run would have made.
pub fn step_rng(seed: u64, stream: Stream, step: usize) -> StreamRng {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(step as u128 * STEP_WINDOW);
    rng
}

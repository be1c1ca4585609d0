//! Seeded random streams.
//!
//! Every consumer of randomness (each client's reveal process, its training
//! shuffles, its link chain, the server's sampler, ...) draws from its own
//! ChaCha stream derived from the experiment seed. Results therefore do not
//! depend on the order in which clients are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

/// Identifies an independent random stream within one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Server-side sampling of clients.
    Server,
    /// Global model initialization.
    GlobalInit,
    /// Synthetic data generation.
    Synth,
    /// Per-client availability plan.
    Plan(usize),
    /// Per-client streaming reveal.
    Reveal(usize),
    /// Per-client minibatch shuffling.
    Train(usize),
    /// Per-client evaluation batch sampling in decentralized rounds.
    Eval(usize),
    /// Per-client online/offline chain.
    Link(usize),
}

impl Stream {
    fn id(self) -> u64 {
        let (tag, client) = match self {
            Stream::Server => (1u64, 0usize),
            Stream::GlobalInit => (2, 0),
            Stream::Synth => (3, 0),
            Stream::Plan(c) => (5, c),
            Stream::Reveal(c) => (6, c),
            Stream::Train(c) => (7, c),
            Stream::Eval(c) => (8, c),
            Stream::Link(c) => (9, c),
        };
        (tag << 32) | (client as u64 & 0xffff_ffff)
    }
}

/// Returns the generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

//! Deterministic, splittable random streams.
//!
//! A [`Stream`] is a value: deriving a child by `(label, index)` is a pure
//! function of the parent's key, independent of how much the parent has been
//! consumed. The generator underneath is ChaCha8 (counter based), so chunked
//! estimators can hand every chunk its own stream and reduce in chunk order,
//! making results invariant to the number of workers.
//!
//! Normal variates come from the ziggurat method (`rand_distr::StandardNormal`);
//! reports record this because it pins the exact draw sequence.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::orthogonal::OrthogonalMatrix;

/// Generator identifier echoed into report headers.
pub const GENERATOR_ID: &str = "chacha8/sha256-derive/ziggurat";

/// Default number of samples per parallel chunk.
pub const CHUNK_SIZE: u64 = 1 << 16;

/// A splittable random stream with value semantics.
#[derive(Clone, Debug)]
pub struct Stream {
    key: [u8; 32],
    path: String,
    rng: ChaCha8Rng,
}

impl Stream {
    /// Root stream for a 64-bit seed.
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"corrlab-stream-root");
        h.update(seed.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        Stream {
            key,
            path: format!("root({seed})"),
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Child stream fully determined by `(self.key, label, index)`.
    ///
    /// Children are independent of the parent's consumption state; deriving
    /// the same `(label, index)` twice yields identical byte streams.
    pub fn derive(&self, label: &str, index: u64) -> Stream {
        let mut h = Sha256::new();
        h.update(b"corrlab-stream-derive");
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        Stream {
            key,
            path: format!("{}/{}[{}]", self.path, label, index),
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// The derivation path, for diagnostics.
    pub fn path(&self) -> &str {
        &self.path
    }

    /// Mutable access to the underlying generator.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// One standard normal draw, advancing the stream.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// `n` independent standard normal variates, advancing the stream.
pub fn std_normal_vector(stream: &mut Stream, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_std_normal(stream.rng(), &mut out);
    out
}

/// Fill a slice with standard normal draws from `rng`.
pub fn fill_std_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// Haar-distributed orthogonal matrix.
///
/// Fills an n-by-n matrix with standard normals, takes its QR factorization
/// and multiplies each column of Q by the sign of the matching diagonal entry
/// of R; the sign fix makes the distribution exactly Haar.
pub fn haar_orthogonal(stream: &mut Stream, n: usize) -> OrthogonalMatrix {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| stream.normal());
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        let mut degenerate = false;
        for j in 0..n {
            let d = r[(j, j)];
            if d == 0.0 {
                degenerate = true;
                break;
            }
            if d < 0.0 {
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        if degenerate {
            continue; // probability zero; resample
        }
        return OrthogonalMatrix::from_matrix_unchecked(q);
    }
}

/// Chunked deterministic map-reduce over `n_samples` draws.
///
/// Chunk `i` derives `stream.derive(label, i)` and processes a fixed number
/// of samples (`CHUNK_SIZE` except possibly the last), so the partition does
/// not depend on worker count. Partial results are merged in chunk order.
pub fn chunked_reduce<A, I, B, M>(
    n_samples: u64,
    stream: &Stream,
    label: &str,
    init: I,
    body: B,
    merge: M,
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    B: Fn(&mut A, &mut ChaCha8Rng, u64) + Sync,
    M: Fn(A, A) -> A,
{
    if n_samples == 0 {
        return init();
    }
    let n_chunks = n_samples.div_ceil(CHUNK_SIZE);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut child = stream.derive(label, ci);
            let count = CHUNK_SIZE.min(n_samples - ci * CHUNK_SIZE);
            let mut acc = init();
            body(&mut acc, child.rng(), count);
            acc
        })
        .collect();
    let mut it = partials.into_iter();
    let first = it.next().expect("at least one chunk");
    it.fold(first, merge)
}

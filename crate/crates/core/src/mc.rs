//! Seeded substreams and worker-count independent reduction of path samples.
//!
//! Path `i` always draws from ChaCha8 stream `i` of the master seed. Paths are
//! grouped into fixed chunks of [`CHUNK`] indices, each chunk is accumulated
//! sequentially, and chunk results are merged in a balanced pairwise tree whose
//! shape depends only on the number of chunks. The result is therefore the
//! same bit pattern for any thread count, with or without the `parallel`
//! feature.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Paths accumulated sequentially before entering the merge tree.
pub const CHUNK: u64 = 256;

/// Master seed used when a config does not set one.
pub const DEFAULT_SEED: u64 = 0x5EED_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
    pub index: u64,
}

impl SeedSpec {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

/// Streaming mean and spread of a complex sample (Welford / Chan).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexMoments {
    pub n: u64,
    pub mean: Complex64,
    pub m2_re: f64,
    pub m2_im: f64,
}

impl ComplexMoments {
    #[inline]
    pub fn push(&mut self, x: Complex64) {
        self.n += 1;
        let n = self.n as f64;
        let d = x - self.mean;
        self.mean += d / n;
        let d2 = x - self.mean;
        self.m2_re += d.re * d2.re;
        self.m2_im += d.im * d2.im;
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return *self;
        }
        if self.n == 0 {
            return *other;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let d = other.mean - self.mean;
        Self {
            n: self.n + other.n,
            mean: self.mean + d * (nb / n),
            m2_re: self.m2_re + other.m2_re + d.re * d.re * na * nb / n,
            m2_im: self.m2_im + other.m2_im + d.im * d.im * na * nb / n,
        }
    }

    /// Sample variance of `|x − mean|²`, i.e. the sum of real and imaginary
    /// variances.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2_re + self.m2_im) / (self.n - 1) as f64
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Moments of several complex observables sharing the same paths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tally {
    pub moments: Vec<ComplexMoments>,
    pub rejected: u64,
}

impl Tally {
    fn new(width: usize) -> Self {
        Self {
            moments: vec![ComplexMoments::default(); width],
            rejected: 0,
        }
    }

    fn merge(&self, other: &Self) -> Self {
        Self {
            moments: self
                .moments
                .iter()
                .zip(&other.moments)
                .map(|(a, b)| a.merge(b))
                .collect(),
            rejected: self.rejected + other.rejected,
        }
    }

    pub fn accepted(&self) -> u64 {
        self.moments.first().map_or(0, |m| m.n)
    }

    pub fn total(&self) -> u64 {
        self.accepted() + self.rejected
    }
}

fn run_chunk<F>(chunk: u64, n_paths: u64, width: usize, sample: &F) -> Tally
where
    F: Fn(u64, &mut [Complex64]) -> bool,
{
    let mut tally = Tally::new(width);
    let mut buf = vec![Complex64::new(0.0, 0.0); width];
    let lo = chunk * CHUNK;
    let hi = (lo + CHUNK).min(n_paths);
    for i in lo..hi {
        if sample(i, &mut buf) {
            for (m, &x) in tally.moments.iter_mut().zip(&buf) {
                m.push(x);
            }
        } else {
            tally.rejected += 1;
        }
    }
    tally
}

fn tree_merge(parts: &[Tally]) -> Tally {
    match parts.len() {
        0 => unreachable!("tree_merge on empty slice"),
        1 => parts[0].clone(),
        n => {
            let (a, b) = parts.split_at(n / 2);
            tree_merge(a).merge(&tree_merge(b))
        }
    }
}

/// Runs `sample(i, out)` for every path index `i < n_paths`. The closure
/// writes `width` observables into `out` and returns `false` to reject the
/// path (e.g. a non-finite weight).
pub fn sample_paths<F>(n_paths: u64, width: usize, sample: F) -> Tally
where
    F: Fn(u64, &mut [Complex64]) -> bool + Sync,
{
    if n_paths == 0 {
        return Tally::new(width);
    }
    let n_chunks = n_paths.div_ceil(CHUNK);

    #[cfg(feature = "parallel")]
    let parts: Vec<Tally> = {
        use rayon::prelude::*;
        (0..n_chunks)
            .into_par_iter()
            .map(|c| run_chunk(c, n_paths, width, &sample))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Tally> = (0..n_chunks)
        .map(|c| run_chunk(c, n_paths, width, &sample))
        .collect();

    tree_merge(&parts)
}

/// Sequential reference for [`sample_paths`]; identical output by construction.
pub fn sample_paths_sequential<F>(n_paths: u64, width: usize, sample: F) -> Tally
where
    F: Fn(u64, &mut [Complex64]) -> bool,
{
    if n_paths == 0 {
        return Tally::new(width);
    }
    let parts: Vec<Tally> = (0..n_paths.div_ceil(CHUNK))
        .map(|c| run_chunk(c, n_paths, width, &sample))
        .collect();
    tree_merge(&parts)
}

/// Maps `f` over `items` in order, fanning out to workers when available.
pub(crate) fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Permutation of `0..n` determined by `(seed, stream)`.
pub fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Index batches for one epoch; the final batch may be short.
pub fn batch_iter(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    shuffled(n, seed, epoch)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Endless stream of fixed-size batches over `0..n`, reshuffling on each
/// pass. A tail shorter than the batch size is skipped.
#[derive(Clone, Debug)]
pub struct CyclicBatches {
    n: usize,
    seed: u64,
    pass: u64,
    order: Vec<usize>,
    pos: usize,
}

impl CyclicBatches {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            pass: 0,
            order: shuffled(n, seed, 0),
            pos: 0,
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.n);
        if self.pos + size > self.n {
            self.pass += 1;
            self.order = shuffled(self.n, self.seed, self.pass);
            self.pos = 0;
        }
        let batch = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        batch
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::SystemParameters;
use crate::storage::AssignmentMatrix;

/// Shuffles `r/T` tokens per partition and deals `batch_size` tokens to each
/// batch in index order. Every column receives exactly its `r/T` tokens, so
/// the deal never needs rejection.
pub fn random_assign(p: &SystemParameters, seed: u64) -> AssignmentMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_partition = p.rows_per_partition() as usize;
    let mut tokens: Vec<usize> = (0..p.partitions() as usize)
        .flat_map(|t| std::iter::repeat_n(t, per_partition))
        .collect();
    tokens.shuffle(&mut rng);
    let mut matrix = AssignmentMatrix::for_params(p);
    for (b, deal) in tokens.chunks(p.batch_size() as usize).enumerate() {
        for &t in deal {
            *matrix.entry_mut(b, t) += 1;
        }
    }
    matrix
}

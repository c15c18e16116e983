use rand::seq::SliceRandom;
use rand::Rng;

/// Splits `0..lengths.len()` into batches of similar length.
///
/// Indices are shuffled, stably sorted by length (so equal lengths stay in
/// shuffled order), cut into consecutive chunks of `batch_size`, and the chunk
/// order is shuffled again.
pub fn length_grouped_batches(lengths: &[usize], batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn batches_partition_the_indices(lengths in proptest::collection::vec(1usize..30, 0..100), bs in 1usize..20, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batches = length_grouped_batches(&lengths, bs, &mut rng);
            let mut all: Vec<usize> = batches.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..lengths.len()).collect::<Vec<_>>());
            prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= bs));
        }
    }

    #[test]
    fn batches_are_length_sorted_and_seeded() {
        let lengths: Vec<usize> = (0..64).map(|i| (i * 7) % 13 + 1).collect();
        let a = length_grouped_batches(&lengths, 8, &mut ChaCha8Rng::seed_from_u64(1));
        let b = length_grouped_batches(&lengths, 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for batch in &a {
            let ls: Vec<usize> = batch.iter().map(|&i| lengths[i]).collect();
            assert!(ls.iter().max().unwrap() - ls.iter().min().unwrap() <= 2, "{ls:?}");
        }
    }
}

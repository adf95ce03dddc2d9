//! Top-k cosine neighbors, reusing one index for several k and alpha.

use causal_neighbors::data::SparseBinaryMatrix;
use causal_neighbors::similarity::SimilarityIndex;
use rand::{Rng, SeedableRng};

fn main() -> causal_neighbors::error::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let x = SparseBinaryMatrix::from_fn(2000, 500, |_, _| rng.random_bool(0.05));

    let start = std::time::Instant::now();
    let index = SimilarityIndex::build(&x, 100)?;
    println!("index over {} rows built in {:.2?}", x.n_rows(), start.elapsed());

    for (k, alpha) in [(10, 1.0), (10, 3.0), (100, 0.5)] {
        let sets = index.neighbor_sets(k, alpha, true)?;
        let s = &sets[0];
        let top: Vec<String> = s.neighbors.iter().take(4).map(|(v, w)| format!("{v}:{w:.3}")).collect();
        println!("k={k:<3} alpha={alpha}: row 0 weight sum {:.3}, first {}", s.weight_sum(), top.join(" "));
    }
    Ok(())
}

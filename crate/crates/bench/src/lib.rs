//! Synthetic inputs shared by the criterion benchmarks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use omnitab_core::data::{AttrKind, Attribute, Cell, Dataset, Provenance, Schema};

/// Markov chain over `j` categorical attributes with `card` values each:
/// attribute 0 is uniform, each later attribute copies its left neighbor
/// except for a 10% resample. Plenty of edges for the structure learner.
pub fn chain_dataset(n: usize, j: usize, card: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs = (0..j)
        .map(|idx| Attribute {
            name: format!("a{idx}"),
            index: idx,
            kind: AttrKind::Categorical((0..card).map(|v| format!("v{v}")).collect()),
        })
        .collect();
    let schema = Arc::new(Schema { attrs });
    let rows = (0..n)
        .map(|_| {
            let mut row = Vec::with_capacity(j);
            let mut prev = rng.gen_range(0..card);
            row.push(Cell::Cat(prev));
            for _ in 1..j {
                if rng.gen_bool(0.1) {
                    prev = rng.gen_range(0..card);
                }
                row.push(Cell::Cat(prev));
            }
            row
        })
        .collect();
    Dataset { schema, rows, provenance: Provenance::default() }
}

/// `j` continuous attributes driven by one latent factor plus noise.
pub fn factor_dataset(n: usize, j: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs = (0..j)
        .map(|idx| Attribute {
            name: format!("x{idx}"),
            index: idx,
            kind: AttrKind::Continuous,
        })
        .collect();
    let schema = Arc::new(Schema { attrs });
    let rows = (0..n)
        .map(|_| {
            let t: f64 = rng.gen_range(-1.0..1.0);
            (0..j)
                .map(|idx| {
                    let slope = 1.0 + idx as f64 * 0.3;
                    Cell::Num(slope * t + 0.05 * rng.gen_range(-1.0..1.0))
                })
                .collect()
        })
        .collect();
    Dataset { schema, rows, provenance: Provenance::default() }
}

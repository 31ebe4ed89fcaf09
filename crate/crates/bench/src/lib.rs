//! Shared fixtures for the benchmarks.

use irn_core::kbc::{CandidateSet, KbcConfig, KbcModel};
use irn_core::kgdata::{Direction, Query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A mid-sized KBC model: 50-dim embeddings, 32 × 100 memory, `T_max` 5.
pub fn kbc_model(num_entities: usize, num_relations: usize) -> KbcModel {
    let mut config = KbcConfig::new(num_entities, num_relations);
    config.entity_dim = 50;
    config.relation_dim = 50;
    config.memory_size = 32;
    config.memory_dim = 100;
    KbcModel::new(config, &mut ChaCha8Rng::seed_from_u64(7)).expect("valid bench config")
}

/// `n` random queries, each with `negatives` sampled candidates.
pub fn kbc_batch(model: &KbcModel, n: usize, negatives: usize) -> Vec<(Query, CandidateSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = &model.config;
    (0..n)
        .map(|_| {
            let q = Query {
                subject: rng.random_range(0..c.num_entities),
                relation: rng.random_range(0..c.num_relations),
                object: rng.random_range(0..c.num_entities),
                direction: Direction::Original,
            };
            let cands = CandidateSet::sampled(&mut rng, q.object, negatives, c.num_entities).expect("enough entities");
            (q, cands)
        })
        .collect()
}

//! Small generated knowledge bases for tests, benchmarks and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::store::{shuffle, Triple, TripleStore, Vocab};

fn vocab_with(n_entities: usize, relations: &[&str]) -> Vocab {
    let mut vocab = Vocab::default();
    for e in 0..n_entities {
        vocab.add_entity(&format!("e{e}"), true);
    }
    for r in relations {
        vocab.add_relation(r, true);
    }
    vocab
}

/// `e0 -next-> e1 -next-> … -next-> e{n-1}` with every fact in training
/// and the last few duplicated into validation and test.
pub fn chain_kb(n_entities: usize) -> (Vocab, TripleStore) {
    assert!(n_entities >= 3);
    let vocab = vocab_with(n_entities, &["next"]);
    let train: Vec<Triple> = (0..n_entities - 1).map(|i| Triple::new(i, 0, i + 1)).collect();
    let valid = train[train.len() - 2..].to_vec();
    let test = train[..2].to_vec();
    (
        vocab,
        TripleStore {
            train,
            valid,
            test,
            base_relations: 1,
            augmented: false,
        },
    )
}

/// How `r1` and `r2` act on entities in [`composition_kb`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompositionKind {
    /// Independent random maps over all entities.
    Random,
    /// Entities are pairs `(a, b)` on a `k × k` grid; `r1` permutes `a`
    /// and `r2` permutes `b`, each by a random permutation.
    Factored,
}

/// Parameters of [`composition_kb`].
#[derive(Clone, Debug)]
pub struct CompositionSpec {
    /// Target entity count; [`CompositionKind::Factored`] rounds down to a
    /// square.
    pub n_entities: usize,
    /// Fraction of heads whose composed fact is withheld from training.
    pub held_out: f64,
    pub seed: u64,
    pub kind: CompositionKind,
}

impl Default for CompositionSpec {
    fn default() -> Self {
        CompositionSpec {
            n_entities: 200,
            held_out: 0.3,
            seed: 17,
            kind: CompositionKind::Factored,
        }
    }
}

fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    shuffle(&mut p, rng);
    p
}

/// Relations `r1`, `r2` and their composition `r3(h) = r2(r1(h))`.
///
/// Every `r1` and `r2` fact is in training. The `r3` facts of a random
/// `held_out` share of heads are split evenly between validation and test;
/// the remaining `r3` facts are trained on. All evaluation facts are
/// therefore composed facts that are only derivable by chaining `r1` then
/// `r2`.
pub fn composition_kb(spec: &CompositionSpec) -> (Vocab, TripleStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, r1, r2): (usize, Vec<usize>, Vec<usize>) = match spec.kind {
        CompositionKind::Random => {
            let n = spec.n_entities;
            assert!(n >= 4);
            let r1 = (0..n).map(|_| rng.random_range(0..n)).collect();
            let r2 = (0..n).map(|_| rng.random_range(0..n)).collect();
            (n, r1, r2)
        }
        CompositionKind::Factored => {
            let k = (spec.n_entities as f64).sqrt().floor() as usize;
            assert!(k >= 2);
            let f = permutation(k, &mut rng);
            let g = permutation(k, &mut rng);
            let n = k * k;
            let r1 = (0..n).map(|e| f[e / k] * k + e % k).collect();
            let r2 = (0..n).map(|e| (e / k) * k + g[e % k]).collect();
            (n, r1, r2)
        }
    };
    let vocab = vocab_with(n, &["r1", "r2", "r3"]);

    let mut heads: Vec<usize> = (0..n).collect();
    shuffle(&mut heads, &mut rng);
    let n_held = ((n as f64) * spec.held_out).round() as usize;
    let (held, kept) = heads.split_at(n_held);

    let mut train = Vec::with_capacity(3 * n);
    for h in 0..n {
        train.push(Triple::new(h, 0, r1[h]));
        train.push(Triple::new(h, 1, r2[h]));
    }
    let mut kept = kept.to_vec();
    kept.sort_unstable();
    for &h in &kept {
        train.push(Triple::new(h, 2, r2[r1[h]]));
    }
    let composed = |h: usize| Triple::new(h, 2, r2[r1[h]]);
    let half = held.len() / 2;
    let valid = held[..half].iter().map(|&h| composed(h)).collect();
    let test = held[half..].iter().map(|&h| composed(h)).collect();
    (
        vocab,
        TripleStore {
            train,
            valid,
            test,
            base_relations: 3,
            augmented: false,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_facts_are_composed() {
        for kind in [CompositionKind::Random, CompositionKind::Factored] {
            check_composed(&CompositionSpec {
                kind,
                ..CompositionSpec::default()
            });
        }
    }

    fn check_composed(spec: &CompositionSpec) {
        let (vocab, store) = composition_kb(spec);
        let n = vocab.num_entities();
        assert_eq!(n, if spec.kind == CompositionKind::Factored { 196 } else { 200 });
        let f = |r: usize, h: usize| {
            store
                .train
                .iter()
                .find(|t| t.relation == r && t.head == h)
                .map(|t| t.tail)
                .unwrap()
        };
        for t in store.valid.iter().chain(&store.test) {
            assert_eq!(t.relation, 2);
            assert_eq!(t.tail, f(1, f(0, t.head)));
            assert!(!store.train.iter().any(|x| x.relation == 2 && x.head == t.head));
        }
        assert_eq!(store.valid.len() + store.test.len(), (n as f64 * 0.3).round() as usize);
    }

    #[test]
    fn deterministic() {
        let a = composition_kb(&CompositionSpec::default()).1;
        let b = composition_kb(&CompositionSpec::default()).1;
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
struct Interner {
    ids: HashMap<String, usize>,
    names: Vec<String>,
    seen_in_train: Vec<bool>,
}

impl Interner {
    fn intern(&mut self, name: &str, train: bool) -> usize {
        let id = match self.ids.get(name) {
            Some(&id) => id,
            None => {
                let id = self.names.len();
                self.ids.insert(name.to_owned(), id);
                self.names.push(name.to_owned());
                self.seen_in_train.push(false);
                id
            }
        };
        if train {
            self.seen_in_train[id] = true;
        }
        id
    }
}

/// Bidirectional string ↔ id maps for entities and relations.
///
/// Ids are contiguous from zero in order of first appearance, train split
/// first. Names that only occur in validation or test data are registered
/// but not marked as seen in training.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    entities: Interner,
    relations: Interner,
}

impl Vocab {
    pub fn num_entities(&self) -> usize {
        self.entities.names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entities.ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> &str {
        &self.entities.names[id]
    }

    pub fn relation_name(&self, id: usize) -> &str {
        &self.relations.names[id]
    }

    pub fn entity_seen_in_train(&self, id: usize) -> bool {
        self.entities.seen_in_train[id]
    }

    pub fn relation_seen_in_train(&self, id: usize) -> bool {
        self.relations.seen_in_train[id]
    }

    pub fn add_entity(&mut self, name: &str, train: bool) -> usize {
        self.entities.intern(name, train)
    }

    pub fn add_relation(&mut self, name: &str, train: bool) -> usize {
        self.relations.intern(name, train)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Integer-coded train/valid/test splits.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    /// Relation count before reverse augmentation.
    pub base_relations: usize,
    /// Whether relation `r + base_relations` is the reverse of `r`.
    pub augmented: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `(h, r, ?)`
    Original,
    /// `(?, r, t)` posed as `(t, r⁻¹, ?)`
    Reversed,
}

/// A tail-prediction query `(subject, relation, ?)` with its gold object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub direction: Direction,
}

impl TripleStore {
    pub fn split(&self, name: &str) -> Option<&[Triple]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn inverse_relation(&self, r: usize) -> Option<usize> {
        if !self.augmented {
            return None;
        }
        let n = self.base_relations;
        Some(if r < n { r + n } else { r - n })
    }

    fn direction_of(&self, relation: usize) -> Direction {
        if self.augmented && relation >= self.base_relations {
            Direction::Reversed
        } else {
            Direction::Original
        }
    }

    /// One query per training triple, reverse triples included.
    pub fn train_queries(&self) -> Vec<Query> {
        self.train
            .iter()
            .map(|t| Query {
                subject: t.head,
                relation: t.relation,
                object: t.tail,
                direction: self.direction_of(t.relation),
            })
            .collect()
    }

    /// Evaluation queries for `triples`: tail prediction for each triple
    /// and, when reverse relations exist, head prediction through the
    /// reverse relation.
    pub fn eval_queries(&self, triples: &[Triple]) -> Vec<Query> {
        let mut out = Vec::with_capacity(triples.len() * 2);
        for t in triples {
            out.push(Query {
                subject: t.head,
                relation: t.relation,
                object: t.tail,
                direction: Direction::Original,
            });
            if let Some(inv) = self.inverse_relation(t.relation) {
                out.push(Query {
                    subject: t.tail,
                    relation: inv,
                    object: t.head,
                    direction: Direction::Reversed,
                });
            }
        }
        out
    }
}

fn parse_file(path: &Path, vocab: &mut Vocab, train: bool) -> Result<Vec<Triple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    let mut duplicates = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected 3 fields (head, relation, tail), found {}", fields.len()),
            });
        }
        let h = vocab.add_entity(fields[0], train);
        let r = vocab.add_relation(fields[1], train);
        let t = vocab.add_entity(fields[2], train);
        let triple = Triple::new(h, r, t);
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("{}: dropped {duplicates} duplicate triple(s)", path.display());
    }
    if triples.is_empty() {
        return Err(Error::Empty(format!("triple file {}", path.display())));
    }
    Ok(triples)
}

/// Reads a single tab-separated `head<TAB>relation<TAB>tail` file as the
/// training split.
pub fn load_triples(path: impl AsRef<Path>) -> Result<(Vocab, TripleStore)> {
    let mut vocab = Vocab::default();
    let train = parse_file(path.as_ref(), &mut vocab, true)?;
    let store = TripleStore {
        train,
        base_relations: vocab.num_relations(),
        ..Default::default()
    };
    Ok((vocab, store))
}

/// Reads `train.txt`, `valid.txt` and `test.txt` from `dir`.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Vocab, TripleStore)> {
    let dir = dir.as_ref();
    let mut vocab = Vocab::default();
    let train = parse_file(&dir.join("train.txt"), &mut vocab, true)?;
    let valid = parse_file(&dir.join("valid.txt"), &mut vocab, false)?;
    let test = parse_file(&dir.join("test.txt"), &mut vocab, false)?;
    let store = TripleStore {
        train,
        valid,
        test,
        base_relations: vocab.num_relations(),
        augmented: false,
    };
    Ok((vocab, store))
}

pub fn reverse_relation_name(name: &str) -> String {
    format!("{name}^-1")
}

/// Adds relation `r⁻¹ = r + |R|` for every relation and a reversed copy
/// `(t, r⁻¹, h)` of every training triple.
pub fn augment_reverse(store: &TripleStore, vocab: &Vocab) -> (TripleStore, Vocab) {
    if store.augmented {
        return (store.clone(), vocab.clone());
    }
    let mut vocab = vocab.clone();
    let n = vocab.num_relations();
    for r in 0..n {
        let name = reverse_relation_name(vocab.relation_name(r));
        let seen = vocab.relation_seen_in_train(r);
        let id = vocab.add_relation(&name, seen);
        assert_eq!(id, r + n, "reverse relation name collides with {name}");
    }
    let mut seen: HashSet<Triple> = store.train.iter().copied().collect();
    let mut train = store.train.clone();
    for t in &store.train {
        let rev = Triple::new(t.tail, t.relation + n, t.head);
        if seen.insert(rev) {
            train.push(rev);
        }
    }
    let out = TripleStore {
        train,
        valid: store.valid.clone(),
        test: store.test.clone(),
        base_relations: n,
        augmented: true,
    };
    (out, vocab)
}

/// Known true objects for every `(subject, relation)` pair across all splits.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    known: HashMap<(usize, usize), HashSet<usize>>,
}

impl FilterIndex {
    pub fn build(store: &TripleStore) -> Self {
        let mut idx = FilterIndex::default();
        for t in store.train.iter().chain(&store.valid).chain(&store.test) {
            idx.insert(t.head, t.relation, t.tail);
            if let Some(inv) = store.inverse_relation(t.relation) {
                idx.insert(t.tail, inv, t.head);
            }
        }
        idx
    }

    pub fn insert(&mut self, subject: usize, relation: usize, object: usize) {
        self.known.entry((subject, relation)).or_default().insert(object);
    }

    pub fn contains(&self, subject: usize, relation: usize, object: usize) -> bool {
        self.known
            .get(&(subject, relation))
            .is_some_and(|s| s.contains(&object))
    }

    pub fn objects(&self, subject: usize, relation: usize) -> Option<&HashSet<usize>> {
        self.known.get(&(subject, relation))
    }
}

/// `n` distinct entity ids drawn uniformly from all entities except `gold`.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    gold: usize,
    n: usize,
    num_entities: usize,
) -> Result<Vec<usize>> {
    if gold >= num_entities {
        return Err(Error::contract(
            "sample_negatives",
            format!("gold id {gold} outside {num_entities} entities"),
        ));
    }
    if n >= num_entities {
        return Err(Error::contract(
            "sample_negatives",
            format!("cannot draw {n} negatives from {num_entities} entities"),
        ));
    }
    Ok(index::sample(rng, num_entities - 1, n)
        .into_iter()
        .map(|i| if i >= gold { i + 1 } else { i })
        .collect())
}

/// Durstenfeld shuffle: for `i` from the last index down to 1, swap
/// element `i` with a uniform `j ∈ [0, i]` drawn as a `u32`.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=(i as u32)) as usize;
        items.swap(i, j);
    }
}

/// Mini-batches over one epoch of a seeded shuffle.
pub struct Batches<'a, T> {
    items: &'a [T],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<'a, T: Clone> Batches<'a, T> {
    /// Shuffles `items` with `rng` and yields batches of `batch_size`; the
    /// final batch may be shorter.
    pub fn new<R: Rng + ?Sized>(items: &'a [T], batch_size: usize, rng: &mut R) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        let mut order: Vec<usize> = (0..items.len()).collect();
        shuffle(&mut order, rng);
        Batches {
            items,
            order,
            batch_size,
            pos: 0,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl<T: Clone> Iterator for Batches<'_, T> {
    type Item = Vec<T>;

    fn next(&mut self) -> Option<Vec<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end]
            .iter()
            .map(|&i| self.items[i].clone())
            .collect();
        self.pos = end;
        Some(batch)
    }
}

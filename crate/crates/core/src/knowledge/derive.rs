use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{write_edge_list, write_embeddings, Embeddings, KnowledgeError, MatrixKind, Vocab};
use crate::scene::SceneSample;

type Rows = Vec<(String, String, f64)>;

/// Co-occurrence edge lists counted from annotated scenes, in the same
/// layout as the curated sources: class-pair and class-predicate counts for
/// the VG-style matrices and a binary relatedness list for every pair of
/// classes that appear in a common relationship. The WUP list comes from
/// [`synthetic_wup`]. Category is declared by groups and not derived.
pub fn derive_edge_lists(scenes: &[SceneSample], vocab: &Vocab) -> BTreeMap<MatrixKind, Rows> {
    let mut counts: BTreeMap<MatrixKind, BTreeMap<(String, String), f64>> = BTreeMap::new();
    let mut bump = |kind, a: &str, b: &str| {
        *counts
            .entry(kind)
            .or_default()
            .entry((a.to_string(), b.to_string()))
            .or_default() += 1.0;
    };
    for scene in scenes {
        let index = scene.id_to_index();
        for t in &scene.gt_triplets {
            let class = |id: u32| scene.segments[index[&id]].gt_class;
            let (Some(s), Some(o)) = (class(t.subject), class(t.object)) else { continue };
            let (s, o) = (&vocab.objects()[s], &vocab.objects()[o]);
            let p = &vocab.predicates()[t.predicate];
            bump(MatrixKind::VgSubjectObject, s, o);
            bump(MatrixKind::VgObjectSubject, o, s);
            bump(MatrixKind::VgSubPred, s, p);
            bump(MatrixKind::VgObjPred, o, p);
            bump(MatrixKind::VgPredSub, p, s);
            bump(MatrixKind::VgPredObj, p, o);
            bump(MatrixKind::ConceptnetRelatedTo, s, o);
        }
    }
    let mut out: BTreeMap<MatrixKind, Rows> = MatrixKind::ALL
        .into_iter()
        .filter(|k| *k != MatrixKind::Category)
        .map(|k| (k, Vec::new()))
        .collect();
    for (kind, pairs) in counts {
        let rows = out.get_mut(&kind).expect("derived kinds are listed");
        for ((a, b), c) in pairs {
            let w = if kind == MatrixKind::ConceptnetRelatedTo { 1.0 } else { c };
            rows.push((a, b, w));
        }
    }
    out.insert(MatrixKind::Wup, synthetic_wup(vocab));
    out
}

/// Hand-assigned Wu-Palmer style similarities between the synthetic
/// predicates. Pairs naming predicates outside `vocab` are dropped.
pub fn synthetic_wup(vocab: &Vocab) -> Rows {
    let table = [
        ("on", "under", 0.8),
        ("on", "near", 0.5),
        ("under", "near", 0.5),
        ("bigger_than", "smaller_than", 0.9),
        ("near", "bigger_than", 0.2),
        ("near", "smaller_than", 0.2),
    ];
    table
        .iter()
        .filter(|(a, b, _)| vocab.predicate_index(a).is_some() && vocab.predicate_index(b).is_some())
        .map(|(a, b, w)| (a.to_string(), b.to_string(), *w))
        .collect()
}

/// Predicate groups for the category matrix: inverse spatial pairs and
/// comparisons, restricted to predicates present in `vocab`.
pub fn default_category_groups(vocab: &Vocab) -> Vec<Vec<String>> {
    let groups: [&[&str]; 4] = [
        &["left", "right", "behind", "front"],
        &["on", "under"],
        &["bigger_than", "smaller_than", "higher_than", "lower_than"],
        &["attached_to", "standing_on", "lying_on"],
    ];
    groups
        .iter()
        .map(|g| {
            g.iter()
                .filter(|p| vocab.predicate_index(p).is_some())
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
        })
        .filter(|g| g.len() > 1)
        .collect()
}

/// Seeded random word vectors for every word of every vocabulary label.
pub fn synthetic_embeddings(vocab: &Vocab, dim: usize, seed: u64) -> Embeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emb = Embeddings::new(dim);
    let labels = vocab.objects().iter().chain(vocab.predicates());
    for label in labels {
        for w in label.split(|c: char| c.is_whitespace() || c == '_').filter(|w| !w.is_empty()) {
            if emb.get(w).is_none() {
                let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                emb.insert(w, v);
            }
        }
    }
    emb
}

/// Writes `embeddings.txt` and one `<matrix>.tsv` per derived list.
pub fn write_kg_dir(
    dir: &Path,
    scenes: &[SceneSample],
    vocab: &Vocab,
    embedding_dim: usize,
    seed: u64,
) -> Result<(), KnowledgeError> {
    std::fs::create_dir_all(dir).map_err(|e| KnowledgeError::io(dir, e))?;
    write_embeddings(&dir.join("embeddings.txt"), &synthetic_embeddings(vocab, embedding_dim, seed))?;
    for (kind, rows) in derive_edge_lists(scenes, vocab) {
        write_edge_list(&dir.join(kind.file_name()), &rows)?;
    }
    Ok(())
}

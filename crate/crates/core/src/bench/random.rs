//! Random problem instances for property checks and benchmarks.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::model::{
    build_dictionary, validate_tree, Group, MultimodalDictionary, MultimodalSample,
    TreeGroupStructure,
};

/// A random laminar family over `s` modalities with weights in [0.1, 2].
///
/// The full set is split recursively into random blocks, each kept as a
/// group at random; every modality ends up in at least one group.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, s: usize) -> TreeGroupStructure {
    fn split<R: Rng + ?Sized>(
        rng: &mut R,
        set: Vec<usize>,
        covered: bool,
        groups: &mut Vec<Group>,
    ) {
        let keep = if covered {
            rng.random_bool(0.6)
        } else {
            set.len() == 1 || rng.random_bool(0.7)
        };
        if keep {
            groups.push(Group::new(set.clone(), rng.random_range(0.1..2.0)));
        }
        let covered = covered || keep;
        if set.len() < 2 {
            return;
        }
        // an uncovered set must split so that every block gets its own chance
        let min_parts = if covered { 1 } else { 2 };
        let parts = rng.random_range(min_parts..=set.len().min(3));
        if parts == 1 {
            for &m in &set {
                if rng.random_bool(0.6) {
                    groups.push(Group::new(vec![m], rng.random_range(0.1..2.0)));
                }
            }
            return;
        }
        let mut shuffled = set;
        shuffled.shuffle(rng);
        let mut cuts: Vec<usize> = (1..shuffled.len()).collect();
        cuts.shuffle(rng);
        let mut cuts: Vec<usize> = cuts.into_iter().take(parts - 1).collect();
        cuts.sort_unstable();
        let mut start = 0;
        for end in cuts.into_iter().chain(std::iter::once(shuffled.len())) {
            let mut block = shuffled[start..end].to_vec();
            block.sort_unstable();
            split(rng, block, covered, groups);
            start = end;
        }
    }
    let mut groups = Vec::new();
    split(rng, (0..s).collect(), false, &mut groups);
    validate_tree(groups, s).expect("random tree is laminar")
}

/// Uniform [-1, 1] data: `classes × per_class` training samples and one test
/// sample, `modalities` modalities of dimension `n`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    per_class: usize,
    classes: usize,
    modalities: usize,
) -> Result<(MultimodalDictionary, MultimodalSample)> {
    let mut draw = || -> MultimodalSample {
        MultimodalSample::new(
            (0..modalities)
                .map(|_| Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..1.0)))
                .collect(),
        )
    };
    let classes: Vec<Vec<MultimodalSample>> = (0..classes)
        .map(|_| (0..per_class).map(|_| draw()).collect())
        .collect();
    let y = draw();
    Ok((build_dictionary(&classes)?, y))
}

/// Uniform entries in [-scale, scale].
pub fn random_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    scale: f64,
) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

//! Fixtures shared by the criterion benchmarks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treefuse::bench::{synth_generate, Dataset, SyntheticSpec};
use treefuse::{Group, TreeGroupStructure};

/// Uniform entries in [-1, 1].
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    treefuse::bench::random::random_matrix(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols, 1.0)
}

/// Root plus consecutive pairs plus singletons over `s` modalities.
pub fn pair_tree(s: usize) -> TreeGroupStructure {
    let mut groups = vec![Group::new((0..s).collect::<Vec<_>>(), 1.0)];
    for start in (0..s).step_by(2) {
        if start + 1 < s && s > 2 {
            groups.push(Group::new(vec![start, start + 1], 1.0));
        }
    }
    groups.extend((0..s).map(|i| Group::new(vec![i], 1.0)));
    treefuse::validate_tree(groups, s).expect("pair tree is laminar")
}

pub fn dataset(
    classes: usize,
    modalities: usize,
    dim: usize,
    per_class: usize,
    seed: u64,
) -> Dataset {
    synth_generate(&SyntheticSpec {
        classes,
        modalities,
        dims: vec![dim; modalities],
        subspace_dim: 3,
        train_per_class: per_class,
        test_per_class: 2,
        latent_groups: vec![],
        noise: vec![0.05; modalities],
        class_overlap: 0.0,
        prototypes: 0,
        prototype_jitter: 0.1,
        seed,
    })
    .expect("valid benchmark spec")
}

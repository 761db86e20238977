//! Proximal operators for the per-modality ℓ1, the row-wise ℓ1/ℓ2 and the
//! tree-structured group norms.
//!
//! The tree operator works row by row. For a row `v` and groups visited
//! children-before-parents, each group's dual variable is the projection of
//! the current residual (restricted to the group) onto the ball of radius
//! `β·ω_g`; the output is `v` minus the sum of dual variables. One pass is
//! exact for laminar families.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::TreeGroupStructure;

/// `sign(x) · max(|x| − τ, 0)`.
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    let mag = x.abs() - tau;
    if mag > 0.0 {
        mag.copysign(x)
    } else {
        0.0
    }
}

/// Shrinks `v` towards the origin by `tau` in Euclidean norm, or zeroes it.
pub fn group_soft_threshold(v: ArrayView1<'_, f64>, tau: f64) -> Array1<f64> {
    let mut out = v.to_owned();
    group_soft_threshold_inplace(out.view_mut(), tau);
    out
}

pub fn group_soft_threshold_inplace(mut v: ArrayViewMut1<'_, f64>, tau: f64) {
    if tau == 0.0 {
        return;
    }
    let norm = v.dot(&v).sqrt();
    // a norm within rounding of tau would otherwise leave ulp-sized residue
    if norm <= tau * (1.0 + 4.0 * f64::EPSILON) {
        v.fill(0.0);
    } else {
        v *= 1.0 - tau / norm;
    }
}

/// Inputs of the tree proximal step: `argmin_U Ω(U) + ‖U − V‖²_F / (2β)`.
#[derive(Debug, Clone)]
pub struct ProxProblem<'a> {
    pub input: ArrayView2<'a, f64>,
    pub tree: &'a TreeGroupStructure,
    pub beta: f64,
}

impl<'a> ProxProblem<'a> {
    pub fn new(
        input: ArrayView2<'a, f64>,
        tree: &'a TreeGroupStructure,
        beta: f64,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param(format!(
                "prox scale must be positive, got {beta}"
            )));
        }
        if input.ncols() != tree.num_modalities() {
            return Err(Error::dim(format!(
                "input has {} columns, tree covers {} modalities",
                input.ncols(),
                tree.num_modalities()
            )));
        }
        Ok(ProxProblem { input, tree, beta })
    }
}

/// Exact proximal operator of the tree-structured norm, applied row-wise.
pub fn prox_tree(problem: &ProxProblem<'_>) -> Array2<f64> {
    let mut out = problem.input.to_owned();
    prox_tree_inplace(&mut out, problem.tree, problem.beta);
    out
}

pub(crate) fn prox_tree_inplace(u: &mut Array2<f64>, tree: &TreeGroupStructure, beta: f64) {
    let mut eta = Vec::with_capacity(tree.num_modalities());
    for mut row in u.axis_iter_mut(Axis(0)) {
        // `row` holds the residual v_j − Σ_{h processed} η^h; unprocessed
        // groups still have η^h = 0.
        for g in tree.groups() {
            let radius = beta * g.weight;
            eta.clear();
            eta.extend(g.members.iter().map(|&m| row[m]));
            let norm = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > radius {
                // η^g = radius · u_g / ‖u_g‖, so the residual keeps the rest
                let keep = 1.0 - radius / norm;
                for &m in &g.members {
                    row[m] *= keep;
                }
            } else {
                // η^g = u_g: the whole group is absorbed by its dual variable
                for &m in &g.members {
                    row[m] = 0.0;
                }
            }
        }
    }
}

/// Row-wise group soft-thresholding: the prox of `τ·Σ_j ‖a_j‖₂`.
pub fn prox_joint(v: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    let mut out = v.to_owned();
    for row in out.axis_iter_mut(Axis(0)) {
        group_soft_threshold_inplace(row, tau);
    }
    out
}

/// Elementwise soft-thresholding: the prox of `τ·Σ|a_ij|`.
pub fn prox_l1(v: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    v.mapv(|x| soft_threshold_scalar(x, tau))
}

/// Dual norm of the ℓ1/ℓ2 penalty: the largest row norm.
pub fn dual_norm_joint(g: ArrayView2<'_, f64>) -> f64 {
    g.axis_iter(Axis(0))
        .map(|row| row.dot(&row).sqrt())
        .fold(0.0, f64::max)
}

/// `Σ_g ω_g ‖u_g‖₂` for a single row.
pub fn tree_penalty_row(row: ArrayView1<'_, f64>, tree: &TreeGroupStructure) -> f64 {
    tree.groups()
        .iter()
        .map(|g| {
            g.weight
                * g.members
                    .iter()
                    .map(|&m| row[m] * row[m])
                    .sum::<f64>()
                    .sqrt()
        })
        .sum()
}

/// The tree-structured norm Ω summed over rows.
pub fn tree_penalty(a: ArrayView2<'_, f64>, tree: &TreeGroupStructure) -> f64 {
    a.axis_iter(Axis(0))
        .map(|row| tree_penalty_row(row, tree))
        .sum()
}

pub fn joint_penalty(a: ArrayView2<'_, f64>) -> f64 {
    a.axis_iter(Axis(0)).map(|row| row.dot(&row).sqrt()).sum()
}

pub fn l1_penalty(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// Value of the prox objective `Ω(U) + ‖U − V‖²_F / (2β)`.
pub fn prox_objective(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    tree: &TreeGroupStructure,
    beta: f64,
) -> f64 {
    let mut dist = 0.0;
    Zip::from(&u)
        .and(&v)
        .for_each(|a, b| dist += (a - b) * (a - b));
    tree_penalty(u, tree) + dist / (2.0 * beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_tree, Group};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn binary_tree() -> TreeGroupStructure {
        validate_tree(
            vec![
                Group::new([0], 1.0),
                Group::new([1], 1.0),
                Group::new([0, 1], 1.0),
            ],
            2,
        )
        .unwrap()
    }

    fn four_tree() -> TreeGroupStructure {
        validate_tree(
            vec![
                Group::new([0], 0.3),
                Group::new([1], 0.5),
                Group::new([0, 1], 0.7),
                Group::new([2], 0.2),
                Group::new([3], 0.4),
                Group::new([2, 3], 0.6),
                Group::new([0, 1, 2, 3], 1.1),
            ],
            4,
        )
        .unwrap()
    }

    #[test]
    fn scalar_threshold() {
        assert_eq!(soft_threshold_scalar(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold_scalar(-2.0, 1.0), -1.0);
        assert_eq!(soft_threshold_scalar(3.0, 0.0), 3.0);
    }

    #[test]
    fn group_threshold() {
        assert_eq!(
            group_soft_threshold(array![3.0, 4.0].view(), 5.0),
            array![0.0, 0.0]
        );
        assert_eq!(
            group_soft_threshold(array![3.0, 4.0].view(), 2.5),
            array![1.5, 2.0]
        );
        assert_eq!(
            group_soft_threshold(array![0.0, 0.0].view(), 1.0),
            array![0.0, 0.0]
        );
        assert_eq!(
            group_soft_threshold(array![1.0, -7.0].view(), 0.0),
            array![1.0, -7.0]
        );
    }

    #[test]
    fn prox_tree_examples() {
        let root = TreeGroupStructure::root_only(2, 1.0).unwrap();
        let zero = Array2::<f64>::zeros((3, 2));
        assert_eq!(
            prox_tree(&ProxProblem::new(zero.view(), &root, 1.0).unwrap()),
            zero
        );

        let v = array![[3.0, 4.0]];
        let u = prox_tree(&ProxProblem::new(v.view(), &root, 2.5).unwrap());
        assert_abs_diff_eq!(u, array![[1.5, 2.0]], epsilon = 1e-15);

        let singles = TreeGroupStructure::singletons(2, 1.0).unwrap();
        let u = prox_tree(&ProxProblem::new(array![[0.5, -2.0]].view(), &singles, 1.0).unwrap());
        assert_eq!(u, array![[0.0, -1.0]]);
    }

    // Frozen from the numeric oracle (see oracle::tests): singleton pass
    // gives (2, 3), the root pass scales by 1 − 1/√13.
    #[test]
    fn prox_tree_binary_example() {
        let tree = binary_tree();
        let u = prox_tree(&ProxProblem::new(array![[3.0, 4.0]].view(), &tree, 1.0).unwrap());
        let k = 1.0 - 1.0 / 13f64.sqrt();
        assert_abs_diff_eq!(u[[0, 0]], 2.0 * k, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[0, 1]], 3.0 * k, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[0, 0]], 1.44529, epsilon = 1e-5);
        assert_abs_diff_eq!(u[[0, 1]], 2.16795, epsilon = 1e-5);
    }

    #[test]
    fn prox_joint_examples() {
        let v = array![[3.0, 4.0], [0.3, 0.4]];
        assert_abs_diff_eq!(
            prox_joint(v.view(), 2.5),
            array![[1.5, 2.0], [0.0, 0.0]],
            epsilon = 1e-15
        );
        assert_eq!(prox_joint(v.view(), 0.0), v);
    }

    #[test]
    fn dual_norm() {
        assert_eq!(dual_norm_joint(array![[3.0, 4.0], [1.0, 0.0]].view()), 5.0);
        assert_eq!(dual_norm_joint(Array2::zeros((3, 2)).view()), 0.0);
        assert_abs_diff_eq!(
            dual_norm_joint(array![[1.5, -2.0]].view()),
            2.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ball_projection_not_unit_vector() {
        // A printed variant of the dual update uses u/‖u‖ instead of the
        // radius-scaled projection; that would not reproduce group shrinkage.
        let root = TreeGroupStructure::root_only(2, 1.0).unwrap();
        let u = prox_tree(&ProxProblem::new(array![[6.0, 8.0]].view(), &root, 3.0).unwrap());
        assert_abs_diff_eq!(u, array![[4.2, 5.6]], epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_beta() {
        let root = TreeGroupStructure::root_only(2, 1.0).unwrap();
        let v = Array2::zeros((1, 2));
        assert!(ProxProblem::new(v.view(), &root, 0.0).is_err());
        assert!(ProxProblem::new(v.view(), &root, -1.0).is_err());
        assert!(ProxProblem::new(Array2::zeros((1, 3)).view(), &root, 1.0).is_err());
    }

    fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
        proptest::collection::vec(-3.0..3.0f64, rows * cols)
            .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
    }

    proptest! {
        #[test]
        fn nonexpansive(v in matrix(5, 4), w in matrix(5, 4), beta in 0.05..2.0f64) {
            let tree = four_tree();
            let pv = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
            let pw = prox_tree(&ProxProblem::new(w.view(), &tree, beta).unwrap());
            let lhs = (&pv - &pw).mapv(|x| x * x).sum().sqrt();
            let rhs = (&v - &w).mapv(|x| x * x).sum().sqrt();
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn optimal_against_perturbations(v in matrix(3, 4), beta in 0.05..2.0f64,
                                         noise in proptest::collection::vec(matrix(3, 4), 100)) {
            let tree = four_tree();
            let u = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
            let best = prox_objective(u.view(), v.view(), &tree, beta);
            for n in noise {
                let other = &u + &(n * 0.01);
                prop_assert!(best <= prox_objective(other.view(), v.view(), &tree, beta) + 1e-12);
            }
        }

        #[test]
        fn zero_pattern_is_union_of_groups(v in matrix(6, 4), beta in 0.05..3.0f64) {
            let tree = four_tree();
            let u = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
            for row in u.rows() {
                let zero: Vec<bool> = row.iter().map(|x| x.abs() <= 1e-10).collect();
                prop_assert!(tree.is_union_of_groups(&zero));
            }
        }

        #[test]
        fn reductions(v in matrix(6, 3), tau in 0.0..2.0f64) {
            let root = TreeGroupStructure::root_only(3, 1.0).unwrap();
            let singles = TreeGroupStructure::singletons(3, 1.0).unwrap();
            let beta = tau.max(1e-9);
            let by_tree = prox_tree(&ProxProblem::new(v.view(), &root, beta).unwrap());
            let joint = prox_joint(v.view(), beta);
            prop_assert!((&by_tree - &joint).iter().all(|d| d.abs() <= 1e-12));
            let by_tree = prox_tree(&ProxProblem::new(v.view(), &singles, beta).unwrap());
            let l1 = prox_l1(v.view(), beta);
            prop_assert!((&by_tree - &l1).iter().all(|d| d.abs() <= 1e-12));
        }

        #[test]
        fn rows_are_independent(v in matrix(5, 4), beta in 0.1..2.0f64) {
            let tree = four_tree();
            let u = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
            let perm = [3usize, 0, 4, 1, 2];
            let vp = v.select(Axis(0), &perm);
            let up = prox_tree(&ProxProblem::new(vp.view(), &tree, beta).unwrap());
            prop_assert_eq!(up, u.select(Axis(0), &perm));
        }

        #[test]
        fn disjoint_sibling_order_irrelevant(v in matrix(4, 4), beta in 0.1..2.0f64) {
            let tree = four_tree();
            let mut groups = tree.groups().to_vec();
            // swap the two pair groups, which are disjoint
            let a = groups.iter().position(|g| g.members == [0, 1]).unwrap();
            let b = groups.iter().position(|g| g.members == [2, 3]).unwrap();
            groups.swap(a, b);
            let swapped = validate_tree(groups, 4).unwrap();
            let u1 = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
            let u2 = prox_tree(&ProxProblem::new(v.view(), &swapped, beta).unwrap());
            prop_assert!((&u1 - &u2).iter().all(|d| d.abs() <= 1e-15));
        }
    }
}

//! Domain types shared by every other module: multimodal dictionaries,
//! tree-structured modality groups, coefficient matrices and samples.

use std::ops::Range;
use std::sync::OnceLock;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that dictionary columns have unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// One observation of an event, seen through every modality.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalSample {
    modalities: Vec<Array1<f64>>,
}

impl MultimodalSample {
    pub fn new(modalities: Vec<Array1<f64>>) -> Self {
        MultimodalSample { modalities }
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn modality(&self, s: usize) -> ArrayView1<'_, f64> {
        self.modalities[s].view()
    }

    pub fn modality_mut(&mut self, s: usize) -> &mut Array1<f64> {
        &mut self.modalities[s]
    }

    pub fn modalities(&self) -> &[Array1<f64>] {
        &self.modalities
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.len()).collect()
    }

    /// All modalities stacked into one long feature vector.
    pub fn concatenated(&self) -> MultimodalSample {
        let data: Vec<f64> = self
            .modalities
            .iter()
            .flat_map(|m| m.iter().copied())
            .collect();
        MultimodalSample::new(vec![Array1::from(data)])
    }
}

/// Per-modality dictionaries whose columns are unit-norm training samples,
/// stored class-contiguously (all of class 0, then class 1, ...).
#[derive(Debug, Clone)]
pub struct MultimodalDictionary {
    atoms: Vec<Array2<f64>>,
    labels: Vec<usize>,
    class_ranges: Vec<Range<usize>>,
    // squared spectral norm per modality, filled on first use by the solver
    spectral: OnceLock<Vec<f64>>,
}

/// Builds a dictionary from training samples grouped by class.
///
/// `classes[c]` lists the samples of class `c`; every sample must carry the
/// same number of modalities with consistent per-modality dimensions.
/// Columns are normalised to unit Euclidean norm; a zero sample is rejected
/// because it cannot be normalised.
pub fn build_dictionary(classes: &[Vec<MultimodalSample>]) -> Result<MultimodalDictionary> {
    if classes.is_empty() {
        return Err(Error::dim("no classes"));
    }
    if let Some(c) = classes.iter().position(|v| v.is_empty()) {
        return Err(Error::EmptyClass { class: c });
    }
    let dims = classes[0][0].dims();
    if dims.is_empty() {
        return Err(Error::dim("samples have no modalities"));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::dim(format!("modality of dimension {d}")));
    }
    let total: usize = classes.iter().map(Vec::len).sum();
    let mut atoms: Vec<Array2<f64>> = dims.iter().map(|&n| Array2::zeros((n, total))).collect();
    let mut labels = Vec::with_capacity(total);
    let mut class_ranges = Vec::with_capacity(classes.len());

    let mut col = 0;
    for (c, samples) in classes.iter().enumerate() {
        let start = col;
        for (j, sample) in samples.iter().enumerate() {
            if sample.dims() != dims {
                return Err(Error::dim(format!(
                    "class {c} sample {j} has dimensions {:?}, expected {dims:?}",
                    sample.dims()
                )));
            }
            for (s, x) in sample.modalities().iter().enumerate() {
                let norm = x.dot(x).sqrt();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::ZeroNormColumn {
                        class: c,
                        sample: j,
                        modality: s,
                    });
                }
                atoms[s].column_mut(col).assign(&(x / norm));
            }
            labels.push(c);
            col += 1;
        }
        class_ranges.push(start..col);
    }

    Ok(MultimodalDictionary {
        atoms,
        labels,
        class_ranges,
        spectral: OnceLock::new(),
    })
}

impl MultimodalDictionary {
    /// Groups labelled samples by class (stable order within a class) and
    /// builds the dictionary.
    pub fn from_labeled(
        samples: &[MultimodalSample],
        labels: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let mut classes = vec![Vec::new(); num_classes];
        for (sample, &label) in samples.iter().zip(labels) {
            if label >= num_classes {
                return Err(Error::ClassOutOfRange {
                    class: label,
                    classes: num_classes,
                });
            }
            classes[label].push(sample.clone());
        }
        build_dictionary(&classes)
    }

    pub fn num_modalities(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_ranges.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.labels.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.atoms.iter().map(|x| x.nrows()).collect()
    }

    pub fn atoms(&self, s: usize) -> ArrayView2<'_, f64> {
        self.atoms[s].view()
    }

    /// Class index of every column.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_range(&self, c: usize) -> Range<usize> {
        self.class_ranges[c].clone()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.class_ranges.iter().map(|r| r.len()).collect()
    }

    /// Columns of class `c` in modality `s`.
    pub fn class_atoms(&self, c: usize, s: usize) -> ArrayView2<'_, f64> {
        self.atoms[s].slice(s![.., self.class_ranges[c].clone()])
    }

    /// The stored columns, regrouped as per-class samples.
    pub fn class_samples(&self) -> Vec<Vec<MultimodalSample>> {
        self.class_ranges
            .iter()
            .map(|range| {
                range
                    .clone()
                    .map(|j| {
                        MultimodalSample::new(
                            self.atoms.iter().map(|x| x.column(j).to_owned()).collect(),
                        )
                    })
                    .collect()
            })
            .collect()
    }

    pub fn check_sample(&self, sample: &MultimodalSample) -> Result<()> {
        if sample.dims() != self.dims() {
            return Err(Error::dim(format!(
                "sample dimensions {:?} do not match dictionary {:?}",
                sample.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn check_coefficients(&self, a: &CoefficientMatrix) -> Result<()> {
        if a.shape() != (self.num_atoms(), self.num_modalities()) {
            return Err(Error::dim(format!(
                "coefficient matrix is {:?}, dictionary needs ({}, {})",
                a.shape(),
                self.num_atoms(),
                self.num_modalities()
            )));
        }
        Ok(())
    }

    /// Single-modality dictionary whose columns are the concatenated
    /// per-modality columns, renormalised.
    pub fn concatenated(&self) -> MultimodalDictionary {
        let views: Vec<_> = self.atoms.iter().map(|x| x.view()).collect();
        let mut stacked = ndarray::concatenate(Axis(0), &views).expect("equal column counts");
        for mut col in stacked.columns_mut() {
            let norm = col.dot(&col).sqrt();
            col /= norm;
        }
        MultimodalDictionary {
            atoms: vec![stacked],
            labels: self.labels.clone(),
            class_ranges: self.class_ranges.clone(),
            spectral: OnceLock::new(),
        }
    }

    /// Dictionary restricted to a subset of modalities (in the given order).
    pub fn select_modalities(&self, modalities: &[usize]) -> MultimodalDictionary {
        MultimodalDictionary {
            atoms: modalities.iter().map(|&s| self.atoms[s].clone()).collect(),
            labels: self.labels.clone(),
            class_ranges: self.class_ranges.clone(),
            spectral: OnceLock::new(),
        }
    }

    pub(crate) fn spectral_cache(&self) -> &OnceLock<Vec<f64>> {
        &self.spectral
    }
}

/// Keeps the entries of `v` at rows labelled `class` and zeroes the rest.
pub fn class_select(
    v: ArrayView1<'_, f64>,
    class: usize,
    dictionary: &MultimodalDictionary,
) -> Result<Array1<f64>> {
    if class >= dictionary.num_classes() {
        return Err(Error::ClassOutOfRange {
            class,
            classes: dictionary.num_classes(),
        });
    }
    if v.len() != dictionary.num_atoms() {
        return Err(Error::dim(format!(
            "vector of length {} for {} atoms",
            v.len(),
            dictionary.num_atoms()
        )));
    }
    let range = dictionary.class_range(class);
    let mut out = Array1::zeros(v.len());
    out.slice_mut(s![range.clone()]).assign(&v.slice(s![range]));
    Ok(out)
}

/// N × S matrix of representation coefficients; column `s` belongs to modality `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    pub fn new(inner: Array2<f64>) -> Self {
        CoefficientMatrix(inner)
    }

    pub fn zeros(num_atoms: usize, num_modalities: usize) -> Self {
        CoefficientMatrix(Array2::zeros((num_atoms, num_modalities)))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn column(&self, s: usize) -> ArrayView1<'_, f64> {
        self.0.column(s)
    }
}

impl From<Array2<f64>> for CoefficientMatrix {
    fn from(a: Array2<f64>) -> Self {
        CoefficientMatrix(a)
    }
}

/// A group of modalities (0-based indices) with its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub members: Vec<usize>,
    pub weight: f64,
}

impl Group {
    pub fn new(members: impl Into<Vec<usize>>, weight: f64) -> Self {
        Group {
            members: members.into(),
            weight,
        }
    }

    fn contains_all(&self, other: &Group) -> bool {
        other.members.iter().all(|m| self.members.contains(m))
    }

    fn intersects(&self, other: &Group) -> bool {
        other.members.iter().any(|m| self.members.contains(m))
    }
}

/// A laminar family of modality groups covering every modality, stored so
/// that each group precedes all of its strict supersets.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeGroupStructure {
    groups: Vec<Group>,
    num_modalities: usize,
}

/// Validates a family of groups and sorts it into children-before-parents
/// order. Idempotent on valid input.
pub fn validate_tree(groups: Vec<Group>, num_modalities: usize) -> Result<TreeGroupStructure> {
    if num_modalities == 0 {
        return Err(Error::InvalidTree("no modalities".into()));
    }
    let mut groups = groups;
    for g in &mut groups {
        if g.members.is_empty() {
            return Err(Error::InvalidTree("empty group".into()));
        }
        if !(g.weight > 0.0) || !g.weight.is_finite() {
            return Err(Error::InvalidTree(format!(
                "non-positive weight {} on group {:?}",
                g.weight, g.members
            )));
        }
        g.members.sort_unstable();
        if g.members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTree(format!(
                "repeated member in group {:?}",
                g.members
            )));
        }
        if let Some(&m) = g.members.iter().find(|&&m| m >= num_modalities) {
            return Err(Error::InvalidTree(format!(
                "modality {m} out of range (modalities: {num_modalities})"
            )));
        }
    }
    let mut covered = vec![false; num_modalities];
    for m in groups.iter().flat_map(|g| g.members.iter()) {
        covered[*m] = true;
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::InvalidTree(format!(
            "union of groups does not cover modality {missing}"
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        for h in &groups[i + 1..] {
            if g.intersects(h) && !g.contains_all(h) && !h.contains_all(g) {
                return Err(Error::InvalidTree(format!(
                    "not laminar: {:?} and {:?} overlap without nesting",
                    g.members, h.members
                )));
            }
        }
    }
    // In a laminar family a strict superset is strictly larger, so a stable
    // sort by size puts children before parents.
    groups.sort_by_key(|g| g.members.len());
    Ok(TreeGroupStructure {
        groups,
        num_modalities,
    })
}

impl TreeGroupStructure {
    /// A single group holding every modality.
    pub fn root_only(num_modalities: usize, weight: f64) -> Result<Self> {
        validate_tree(
            vec![Group::new((0..num_modalities).collect::<Vec<_>>(), weight)],
            num_modalities,
        )
    }

    /// One group per modality.
    pub fn singletons(num_modalities: usize, weight: f64) -> Result<Self> {
        validate_tree(
            (0..num_modalities)
                .map(|s| Group::new([s], weight))
                .collect(),
            num_modalities,
        )
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn num_modalities(&self) -> usize {
        self.num_modalities
    }

    /// Multiplies the weight of every group with more than one member.
    pub fn scale_nonsingleton_weights(&self, factor: f64) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let w = if g.members.len() > 1 {
                    g.weight * factor
                } else {
                    g.weight
                };
                Group::new(g.members.clone(), w)
            })
            .collect();
        validate_tree(groups, self.num_modalities)
    }

    /// Whether the coordinates flagged in `zero` form a union of groups.
    pub fn is_union_of_groups(&self, zero: &[bool]) -> bool {
        (0..self.num_modalities).filter(|&i| zero[i]).all(|i| {
            self.groups
                .iter()
                .any(|g| g.members.contains(&i) && g.members.iter().all(|&m| zero[m]))
        })
    }

    /// Parses the tree JSON format (1-based modality indices).
    pub fn from_json(text: &str, num_modalities: usize) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(text)?;
        file.into_tree(num_modalities)
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            groups: self
                .groups
                .iter()
                .map(|g| {
                    Group::new(
                        g.members.iter().map(|m| m + 1).collect::<Vec<_>>(),
                        g.weight,
                    )
                })
                .collect(),
        }
    }
}

/// On-disk tree description: `{"groups": [{"members": [1, 2], "weight": 1.0}]}`
/// with 1-based modality indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub groups: Vec<Group>,
}

impl TreeFile {
    pub fn into_tree(self, num_modalities: usize) -> Result<TreeGroupStructure> {
        let groups = self
            .groups
            .into_iter()
            .map(|g| {
                if g.members.contains(&0) {
                    return Err(Error::InvalidTree(
                        "modality indices are 1-based; found 0".into(),
                    ));
                }
                Ok(Group::new(
                    g.members.iter().map(|m| m - 1).collect::<Vec<_>>(),
                    g.weight,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        validate_tree(groups, num_modalities)
    }
}

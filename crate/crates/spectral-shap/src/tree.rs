//! Binary decision trees over binary features and their exact recursive
//! Walsh-Hadamard transform.
//!
//! Branching convention: the left child is taken when the split feature is
//! 0. A tree `t` with root feature `i` and child functions `L`, `R`
//! satisfies
//!
//! ```text
//! t(x) = (1 + (-1)^{x_i})/2 * L(x) + (1 - (-1)^{x_i})/2 * R(x)
//! ```
//!
//! so its spectrum is `(L + R)/2 + shift_i(L - R)/2`, where `shift_i` XORs
//! bit `i` into every frequency. Model files that branch the other way must
//! be transposed by their loader.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::spectrum::{Frequency, PointVector, SparseSpectrum, ZERO_DROP_THRESHOLD};

/// Maximum tree depth accepted by the transform.
pub const MAX_TREE_DEPTH: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf { value }
    }

    pub fn split(feature: usize, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Depth of the unique root-to-leaf path selected by `x`; leaves have
    /// depth 0.
    pub fn depth(&self) -> usize {
        // Iterative to keep arbitrarily deep (invalid) inputs from blowing
        // the stack before the guard can reject them.
        let mut max_depth = 0;
        let mut stack = vec![(self, 0usize)];
        while let Some((node, d)) = stack.pop() {
            match node {
                TreeNode::Leaf { .. } => max_depth = max_depth.max(d),
                TreeNode::Split { left, right, .. } => {
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        max_depth
    }

    pub fn node_count(&self) -> usize {
        let mut count = 0;
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            count += 1;
            if let TreeNode::Split { left, right, .. } = node {
                stack.push(left);
                stack.push(right);
            }
        }
        count
    }

    fn max_feature(&self) -> Option<usize> {
        let mut max = None;
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let TreeNode::Split {
                feature,
                left,
                right,
            } = node
            {
                max = Some(max.map_or(*feature, |m: usize| m.max(*feature)));
                stack.push(left);
                stack.push(right);
            }
        }
        max
    }
}

/// Value of the unique root-to-leaf path: left on 0, right on 1.
pub fn eval_tree(root: &TreeNode, x: &PointVector) -> f64 {
    let mut node = root;
    loop {
        match node {
            TreeNode::Leaf { value } => return *value,
            TreeNode::Split {
                feature,
                left,
                right,
            } => {
                node = if x.get(*feature) { right } else { left };
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedTree {
    pub weight: f64,
    pub root: TreeNode,
}

/// Weighted sum of binary decision trees: `prediction(x) = sum_t w_t t(x)`.
/// Random-forest averaging uses weights `1/T`; boosted models keep native
/// weights of 1.
#[derive(Debug, Clone, Serialize)]
pub struct TreeEnsemble {
    pub n_features: usize,
    pub trees: Vec<WeightedTree>,
}

impl TreeEnsemble {
    pub fn new(n_features: usize, trees: Vec<WeightedTree>) -> Result<Self> {
        for (ti, tree) in trees.iter().enumerate() {
            if let Some(max) = tree.root.max_feature() {
                if max >= n_features {
                    return Err(Error::InvalidParameter {
                        name: "trees",
                        message: format!(
                            "tree {ti} references feature {max}, n_features is {n_features}"
                        ),
                    });
                }
            }
            if !tree.weight.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "trees",
                    message: format!("tree {ti} has non-finite weight"),
                });
            }
        }
        Ok(TreeEnsemble { n_features, trees })
    }

    /// Uniform 1/T weights over the given roots.
    pub fn averaged(n_features: usize, roots: Vec<TreeNode>) -> Result<Self> {
        let w = 1.0 / roots.len().max(1) as f64;
        Self::new(
            n_features,
            roots
                .into_iter()
                .map(|root| WeightedTree { weight: w, root })
                .collect(),
        )
    }

    pub fn predict(&self, x: &PointVector) -> f64 {
        self.trees
            .iter()
            .map(|t| t.weight * eval_tree(&t.root, x))
            .sum()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(|t| t.root.depth()).max().unwrap_or(0)
    }
}

/// Construction statistics from the recursive transform, used to audit the
/// per-node sparsity recursion `|supp| <= 2 (k_left + k_right)`.
#[derive(Debug, Clone, Default)]
pub struct TransformAudit {
    pub node_count: usize,
    pub max_depth: usize,
    pub max_node_support: usize,
    pub bound_violations: usize,
}

/// Exact spectrum of a single tree. Evaluating the result reproduces
/// `eval_tree` at every point of the cube.
pub fn tree_to_spectrum(root: &TreeNode, n: usize) -> Result<SparseSpectrum> {
    transform_with_audit(root, n).map(|(s, _)| s)
}

/// [`tree_to_spectrum`] plus per-node audit counters.
pub fn transform_with_audit(root: &TreeNode, n: usize) -> Result<(SparseSpectrum, TransformAudit)> {
    if let Some(max) = root.max_feature() {
        if max >= n {
            return Err(Error::dim("tree feature index", n, max + 1));
        }
    }

    enum Task<'a> {
        Enter(&'a TreeNode, usize),
        Combine(usize),
    }

    let mut audit = TransformAudit::default();
    let mut tasks = vec![Task::Enter(root, 0)];
    let mut results: Vec<HashMap<Frequency, f64>> = Vec::new();

    while let Some(task) = tasks.pop() {
        match task {
            Task::Enter(node, depth) => {
                audit.node_count += 1;
                audit.max_depth = audit.max_depth.max(depth);
                match node {
                    TreeNode::Leaf { value } => {
                        let mut map = HashMap::new();
                        if *value != 0.0 {
                            map.insert(Frequency::empty(n), *value);
                        }
                        results.push(map);
                    }
                    TreeNode::Split {
                        feature,
                        left,
                        right,
                    } => {
                        if depth >= MAX_TREE_DEPTH {
                            return Err(Error::ResourceGuard(format!(
                                "tree depth exceeds guard {MAX_TREE_DEPTH}"
                            )));
                        }
                        tasks.push(Task::Combine(*feature));
                        tasks.push(Task::Enter(right, depth + 1));
                        tasks.push(Task::Enter(left, depth + 1));
                    }
                }
            }
            Task::Combine(feature) => {
                let right = results.pop().expect("combine follows two children");
                let left = results.pop().expect("combine follows two children");
                let bound = 2 * (left.len() + right.len());
                let merged = merge_children(left, right, feature);
                if merged.len() > bound {
                    audit.bound_violations += 1;
                }
                audit.max_node_support = audit.max_node_support.max(merged.len());
                results.push(merged);
            }
        }
    }

    let map = results.pop().expect("transform leaves one result");
    debug_assert!(results.is_empty());
    let spectrum = SparseSpectrum::from_map(n, map, 0.0)?;
    Ok((spectrum, audit))
}

/// `(L + R)/2 + shift_i(L - R)/2`; exact zeros from cancellation are
/// dropped.
fn merge_children(
    left: HashMap<Frequency, f64>,
    right: HashMap<Frequency, f64>,
    feature: usize,
) -> HashMap<Frequency, f64> {
    let mut acc: HashMap<Frequency, f64> = HashMap::with_capacity(2 * (left.len() + right.len()));
    for (f, c) in &left {
        let half = 0.5 * c;
        *acc.entry(f.clone()).or_insert(0.0) += half;
        *acc.entry(f.toggled(feature)).or_insert(0.0) += half;
    }
    for (f, c) in &right {
        let half = 0.5 * c;
        *acc.entry(f.clone()).or_insert(0.0) += half;
        *acc.entry(f.toggled(feature)).or_insert(0.0) -= half;
    }
    acc.retain(|_, c| *c != 0.0);
    acc
}

/// Weighted termwise sum of per-tree spectra. Per-tree transforms run in
/// parallel; the accumulation is an ordered reduction over tree index, and
/// cancellations below [`ZERO_DROP_THRESHOLD`] are dropped.
pub fn ensemble_to_spectrum(ensemble: &TreeEnsemble) -> Result<SparseSpectrum> {
    let n = ensemble.n_features;
    let per_tree: Vec<SparseSpectrum> = ensemble
        .trees
        .par_iter()
        .map(|t| tree_to_spectrum(&t.root, n))
        .collect::<Result<_>>()?;

    let mut acc: HashMap<Frequency, f64> = HashMap::new();
    for (tree, spectrum) in ensemble.trees.iter().zip(per_tree) {
        for (f, c) in spectrum.terms() {
            *acc.entry(f.clone()).or_insert(0.0) += tree.weight * c;
        }
    }
    SparseSpectrum::from_map(n, acc, ZERO_DROP_THRESHOLD)
}

// ---------------------------------------------------------------------------
// Model file format
// ---------------------------------------------------------------------------

/// Serializes the native model format:
/// `{"n_features", "combine": "weighted_sum", "trees": [{"weight", "root"}]}`
/// with `root` nodes as `{"feature", "left", "right"}` or `{"value"}`.
pub fn tree_model_to_json(ensemble: &TreeEnsemble) -> String {
    #[derive(Serialize)]
    struct ModelFile<'a> {
        n_features: usize,
        combine: &'static str,
        trees: &'a [WeightedTree],
    }
    serde_json::to_string_pretty(&ModelFile {
        n_features: ensemble.n_features,
        combine: "weighted_sum",
        trees: &ensemble.trees,
    })
    .expect("model serialization cannot fail")
}

pub fn write_tree_model_file(path: &Path, ensemble: &TreeEnsemble) -> Result<()> {
    std::fs::write(path, tree_model_to_json(ensemble)).map_err(|e| Error::io(path, e))
}

pub fn tree_model_from_json(text: &str) -> Result<TreeEnsemble> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::schema("", e.to_string()))?;
    tree_model_from_value(&value)
}

pub fn read_tree_model_file(path: &Path) -> Result<TreeEnsemble> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tree_model_from_json(&text)
}

/// Schema violations report the JSON-pointer path of the offending node.
fn tree_model_from_value(value: &Value) -> Result<TreeEnsemble> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema("", "expected a JSON object"))?;
    let n_features = obj
        .get("n_features")
        .ok_or_else(|| Error::schema("/n_features", "missing field"))?
        .as_u64()
        .ok_or_else(|| Error::schema("/n_features", "expected a non-negative integer"))?
        as usize;
    let combine = obj
        .get("combine")
        .ok_or_else(|| Error::schema("/combine", "missing field"))?
        .as_str()
        .ok_or_else(|| Error::schema("/combine", "expected a string"))?;
    if combine != "weighted_sum" {
        return Err(Error::schema(
            "/combine",
            format!("expected \"weighted_sum\", got {combine:?}"),
        ));
    }
    let trees_value = obj
        .get("trees")
        .ok_or_else(|| Error::schema("/trees", "missing field"))?
        .as_array()
        .ok_or_else(|| Error::schema("/trees", "expected an array"))?;

    let mut trees = Vec::with_capacity(trees_value.len());
    for (ti, tree) in trees_value.iter().enumerate() {
        let pointer = format!("/trees/{ti}");
        let tree = tree
            .as_object()
            .ok_or_else(|| Error::schema(&pointer, "expected an object"))?;
        let weight = tree
            .get("weight")
            .ok_or_else(|| Error::schema(format!("{pointer}/weight"), "missing field"))?
            .as_f64()
            .ok_or_else(|| Error::schema(format!("{pointer}/weight"), "expected a number"))?;
        if !weight.is_finite() {
            return Err(Error::schema(
                format!("{pointer}/weight"),
                "weight must be finite",
            ));
        }
        let root_value = tree
            .get("root")
            .ok_or_else(|| Error::schema(format!("{pointer}/root"), "missing field"))?;
        let root = node_from_value(root_value, &format!("{pointer}/root"), n_features)?;
        trees.push(WeightedTree { weight, root });
    }
    TreeEnsemble::new(n_features, trees)
        .map_err(|e| Error::schema("/trees", e.to_string()))
}

fn node_from_value(value: &Value, pointer: &str, n_features: usize) -> Result<TreeNode> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::schema(pointer, "expected an object"))?;
    if let Some(v) = obj.get("value") {
        let value = v
            .as_f64()
            .ok_or_else(|| Error::schema(format!("{pointer}/value"), "expected a number"))?;
        if !value.is_finite() {
            return Err(Error::schema(
                format!("{pointer}/value"),
                "leaf value must be finite",
            ));
        }
        if obj.len() > 1 {
            return Err(Error::schema(
                pointer,
                "leaf node must have only a \"value\" field",
            ));
        }
        return Ok(TreeNode::Leaf { value });
    }
    let feature = obj
        .get("feature")
        .ok_or_else(|| Error::schema(pointer, "node needs \"value\" or \"feature\""))?
        .as_u64()
        .ok_or_else(|| Error::schema(format!("{pointer}/feature"), "expected a non-negative integer"))?
        as usize;
    if feature >= n_features {
        return Err(Error::schema(
            format!("{pointer}/feature"),
            format!("feature {feature} >= n_features {n_features}"),
        ));
    }
    let left = obj
        .get("left")
        .ok_or_else(|| Error::schema(format!("{pointer}/left"), "missing field"))?;
    let right = obj
        .get("right")
        .ok_or_else(|| Error::schema(format!("{pointer}/right"), "missing field"))?;
    Ok(TreeNode::split(
        feature,
        node_from_value(left, &format!("{pointer}/left"), n_features)?,
        node_from_value(right, &format!("{pointer}/right"), n_features)?,
    ))
}

// ---------------------------------------------------------------------------
// Foreign-format converters
// ---------------------------------------------------------------------------
//
// Extension points for vendor model dumps. Only the native format above is
// implemented; each converter documents the expected input so a future
// implementation slots in behind a stable name.

/// Converts an XGBoost JSON dump. Unimplemented: thresholds on continuous
/// features must first be rebinarized, which this crate does not do.
pub fn ensemble_from_xgboost_json(_text: &str) -> Result<TreeEnsemble> {
    Err(Error::UnsupportedModelFormat("xgboost-json"))
}

/// Converts a LightGBM text dump. Unimplemented.
pub fn ensemble_from_lightgbm_text(_text: &str) -> Result<TreeEnsemble> {
    Err(Error::UnsupportedModelFormat("lightgbm-text"))
}

/// Converts a CatBoost JSON export. Unimplemented.
pub fn ensemble_from_catboost_json(_text: &str) -> Result<TreeEnsemble> {
    Err(Error::UnsupportedModelFormat("catboost-json"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Frequency;

    #[test]
    fn eval_leaf_is_constant() {
        let t = TreeNode::leaf(7.0);
        let x = PointVector::from_bits(&[1, 0, 1]).unwrap();
        assert_eq!(eval_tree(&t, &x), 7.0);
    }

    #[test]
    fn eval_takes_left_on_zero() {
        let t = TreeNode::split(0, TreeNode::leaf(1.0), TreeNode::leaf(0.0));
        assert_eq!(eval_tree(&t, &PointVector::from_bits(&[0, 1]).unwrap()), 1.0);
        assert_eq!(eval_tree(&t, &PointVector::from_bits(&[1, 1]).unwrap()), 0.0);
    }

    #[test]
    fn stump_spectrum_by_hand() {
        // t(x) = (a+b)/2 + (a-b)/2 * (-1)^{x_0} with a=1, b=0.
        let t = TreeNode::split(0, TreeNode::leaf(1.0), TreeNode::leaf(0.0));
        let s = tree_to_spectrum(&t, 1).unwrap();
        assert_eq!(s.support_size(), 2);
        assert_eq!(s.coefficient(&Frequency::empty(1)), Some(0.5));
        assert_eq!(s.coefficient(&Frequency::single(1, 0).unwrap()), Some(0.5));
    }

    #[test]
    fn leaf_spectrum_is_constant_term() {
        let s = tree_to_spectrum(&TreeNode::leaf(-2.5), 4).unwrap();
        assert_eq!(s.support_size(), 1);
        assert_eq!(s.coefficient(&Frequency::empty(4)), Some(-2.5));
    }

    #[test]
    fn random_tree_transform_is_exact_exhaustively() {
        let tree = crate::synth::random_tree(8, 4, &mut crate::synth::seeded_rng(3));
        let (s, audit) = transform_with_audit(&tree, 8).unwrap();
        assert_eq!(audit.bound_violations, 0);
        for idx in 0..256u64 {
            let x = PointVector::from_truth_table_index(8, idx);
            let direct = eval_tree(&tree, &x);
            let via_spectrum = s.evaluate(&x).unwrap();
            assert!((direct - via_spectrum).abs() <= 1e-12);
        }
        assert!(s.degree() as usize <= tree.depth());
    }

    #[test]
    fn identical_trees_average_to_one_tree() {
        let root = TreeNode::split(1, TreeNode::leaf(2.0), TreeNode::leaf(-1.0));
        let ensemble = TreeEnsemble::new(
            3,
            vec![
                WeightedTree {
                    weight: 0.5,
                    root: root.clone(),
                },
                WeightedTree {
                    weight: 0.5,
                    root: root.clone(),
                },
            ],
        )
        .unwrap();
        let single = tree_to_spectrum(&root, 3).unwrap();
        let combined = ensemble_to_spectrum(&ensemble).unwrap();
        assert_eq!(combined.support_size(), single.support_size());
        for (f, c) in single.terms() {
            assert!((combined.coefficient(f).unwrap() - c).abs() <= 1e-15);
        }
    }

    #[test]
    fn negated_tree_cancels_to_empty_spectrum() {
        let root = TreeNode::split(0, TreeNode::leaf(1.5), TreeNode::leaf(-0.5));
        let negated = TreeNode::split(0, TreeNode::leaf(-1.5), TreeNode::leaf(0.5));
        let ensemble = TreeEnsemble::new(
            2,
            vec![
                WeightedTree { weight: 1.0, root },
                WeightedTree {
                    weight: 1.0,
                    root: negated,
                },
            ],
        )
        .unwrap();
        let s = ensemble_to_spectrum(&ensemble).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn random_ensemble_matches_prediction_on_samples() {
        let ensemble = crate::synth::random_ensemble(10, 5, 3, 17);
        let s = ensemble_to_spectrum(&ensemble).unwrap();
        let points = crate::synth::random_points(10, 200, 99);
        for x in &points {
            let direct = ensemble.predict(x);
            let via = s.evaluate(x).unwrap();
            assert!((direct - via).abs() <= 1e-12, "{direct} vs {via}");
        }
    }

    #[test]
    fn stumps_on_distinct_features_stay_degree_one() {
        let roots: Vec<TreeNode> = (0..6)
            .map(|i| {
                TreeNode::split(
                    i,
                    TreeNode::leaf(i as f64),
                    TreeNode::leaf(-(i as f64) - 1.0),
                )
            })
            .collect();
        let ensemble = TreeEnsemble::averaged(6, roots).unwrap();
        let s = ensemble_to_spectrum(&ensemble).unwrap();
        assert!(s.degree() <= 1);
        assert!(s.support_size() <= 7);
    }

    #[test]
    fn model_json_round_trip() {
        let ensemble = crate::synth::random_ensemble(5, 3, 3, 4);
        let text = tree_model_to_json(&ensemble);
        let back = tree_model_from_json(&text).unwrap();
        assert_eq!(back.n_features, 5);
        assert_eq!(back.trees.len(), 3);
        let x = PointVector::from_bits(&[1, 0, 1, 1, 0]).unwrap();
        assert_eq!(ensemble.predict(&x), back.predict(&x));
    }

    #[test]
    fn model_json_pointer_on_bad_feature() {
        let text = r#"{"n_features": 2, "combine": "weighted_sum",
            "trees": [{"weight": 1.0,
                       "root": {"feature": 0,
                                "left": {"value": 1.0},
                                "right": {"feature": 5,
                                          "left": {"value": 0.0},
                                          "right": {"value": 1.0}}}}]}"#;
        let err = tree_model_from_json(text).unwrap_err();
        match err {
            Error::SchemaViolation { pointer, .. } => {
                assert_eq!(pointer, "/trees/0/root/right/feature");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn converter_stubs_report_unsupported() {
        assert!(matches!(
            ensemble_from_xgboost_json("{}"),
            Err(Error::UnsupportedModelFormat("xgboost-json"))
        ));
    }
}

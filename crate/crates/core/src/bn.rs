//! Discrete Bayesian-network structure, conditional belief tables, and
//! probability evaluation.
//!
//! A [`BnStructure`] is a DAG of categorical nodes. A [`BnModel`] pairs a
//! structure with one conditional belief table ([`Cbt`]) per node, learned
//! elsewhere by counting. Models are immutable after construction; structural
//! edits produce new values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How probability queries handle a parent configuration that never occurred
/// in training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroCountPolicy {
    /// Unseen configurations raise [`Error::UnseenConfig`].
    Strict,
    /// Unseen configurations fall back to the uniform distribution over the
    /// child's states; such rows have support 0 and are never materialized.
    #[default]
    Uniform,
}

/// A categorical network variable: a name plus its ordered state labels.
///
/// State order is fixed at construction and preserved across serialization;
/// table columns are aligned to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub states: Vec<String>,
}

impl NodeSpec {
    /// Builds a node spec, requiring a non-empty name and at least two
    /// unique, non-empty state labels.
    pub fn new<N, S, I>(name: N, states: I) -> Result<Self>
    where
        N: Into<String>,
        S: Into<String>,
        I: IntoIterator<Item = S>,
    {
        let name = name.into();
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        if name.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "node name must be non-empty".into(),
            });
        }
        if states.len() < 2 {
            return Err(Error::InvalidStates {
                node: name,
                got: states.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for s in &states {
            if s.is_empty() {
                return Err(Error::InvalidConfig {
                    reason: format!("node '{name}' has an empty state label"),
                });
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::InvalidConfig {
                    reason: format!("node '{name}' declares state '{s}' twice"),
                });
            }
        }
        Ok(NodeSpec { name, states })
    }

    /// Position of `state` in the declared state order, if it is declared.
    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// A directed acyclic graph of categorical nodes.
///
/// Nodes keep insertion order; the parents of a node are reported in edge
/// insertion order. All mutators re-validate acyclicity before committing.
#[derive(Debug, Clone)]
pub struct BnStructure {
    nodes: Vec<NodeSpec>,
    edges: Vec<(String, String)>,
    index: BTreeMap<String, usize>,
    parents: BTreeMap<String, Vec<String>>,
    children: BTreeMap<String, Vec<String>>,
}

impl PartialEq for BnStructure {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Default for BnStructure {
    fn default() -> Self {
        Self::new()
    }
}

impl BnStructure {
    /// An empty structure; populate with [`add_node`](Self::add_node) and
    /// [`add_edge`](Self::add_edge).
    pub fn new() -> Self {
        BnStructure {
            nodes: Vec::new(),
            edges: Vec::new(),
            index: BTreeMap::new(),
            parents: BTreeMap::new(),
            children: BTreeMap::new(),
        }
    }

    /// Adds a node. Rejects duplicate names and malformed state lists.
    pub fn add_node(&mut self, spec: NodeSpec) -> Result<()> {
        // Re-validate even pre-built specs so every entry point enforces the
        // same rules.
        let spec = NodeSpec::new(spec.name, spec.states)?;
        if self.index.contains_key(&spec.name) {
            return Err(Error::DuplicateNode { name: spec.name });
        }
        self.index.insert(spec.name.clone(), self.nodes.len());
        self.parents.insert(spec.name.clone(), Vec::new());
        self.children.insert(spec.name.clone(), Vec::new());
        self.nodes.push(spec);
        Ok(())
    }

    /// Adds a directed edge `from -> to`, rejecting unknown endpoints,
    /// duplicates, self-loops, and anything that would close a cycle.
    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<()> {
        for end in [from, to] {
            if !self.index.contains_key(end) {
                return Err(Error::UnknownNode { name: end.into() });
            }
        }
        if from == to {
            return Err(Error::CyclicGraph { node: from.into() });
        }
        if self.edges.iter().any(|(f, t)| f == from && t == to) {
            return Err(Error::DuplicateEdge {
                from: from.into(),
                to: to.into(),
            });
        }
        let mut candidate = self.edges.clone();
        candidate.push((from.to_string(), to.to_string()));
        assert_acyclic(&self.nodes, &self.index, &candidate)?;
        self.edges.push((from.to_string(), to.to_string()));
        self.parents.get_mut(to).unwrap().push(from.to_string());
        self.children.get_mut(from).unwrap().push(to.to_string());
        Ok(())
    }

    /// Removes the edge `from -> to`; both nodes are retained.
    pub fn remove_edge(&mut self, from: &str, to: &str) -> Result<()> {
        let pos = self
            .edges
            .iter()
            .position(|(f, t)| f == from && t == to)
            .ok_or_else(|| Error::NoSuchEdge {
                from: from.into(),
                to: to.into(),
            })?;
        self.edges.remove(pos);
        self.parents.get_mut(to).unwrap().retain(|p| p != from);
        self.children.get_mut(from).unwrap().retain(|c| c != to);
        Ok(())
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    /// Looks a node up by name.
    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Parents of `name` in edge insertion order.
    pub fn parents(&self, name: &str) -> Result<&[String]> {
        self.parents
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownNode { name: name.into() })
    }

    /// Children of `name` in edge insertion order.
    pub fn children(&self, name: &str) -> Result<&[String]> {
        self.children
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownNode { name: name.into() })
    }

    /// A topological order of the node names. Always succeeds because every
    /// constructed structure is a DAG.
    pub fn topological_order(&self) -> Vec<String> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (_, to) in &self.edges {
            indeg[self.index[to]] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            order.push(self.nodes[i].name.clone());
            for child in &self.children[&self.nodes[i].name] {
                let ci = self.index[child];
                indeg[ci] -= 1;
                if indeg[ci] == 0 {
                    queue.push(ci);
                }
            }
        }
        debug_assert_eq!(order.len(), n);
        order
    }
}

/// Validates a structure from parts; this is the one-shot constructor.
pub fn build_structure(nodes: Vec<NodeSpec>, edges: Vec<(String, String)>) -> Result<BnStructure> {
    let mut s = BnStructure::new();
    for node in nodes {
        s.add_node(node)?;
    }
    for (from, to) in edges {
        s.add_edge(&from, &to)?;
    }
    Ok(s)
}

/// Kahn's algorithm over a tentative edge list; reports the first node (in
/// insertion order) left unprocessed when a cycle exists.
fn assert_acyclic(
    nodes: &[NodeSpec],
    index: &BTreeMap<String, usize>,
    edges: &[(String, String)],
) -> Result<()> {
    let n = nodes.len();
    let mut indeg = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (from, to) in edges {
        indeg[index[to]] += 1;
        children[index[from]].push(index[to]);
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut done = vec![false; n];
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        done[i] = true;
        for &ci in &children[i] {
            indeg[ci] -= 1;
            if indeg[ci] == 0 {
                queue.push(ci);
            }
        }
    }
    match done.iter().position(|d| !d) {
        None => Ok(()),
        Some(i) => Err(Error::CyclicGraph {
            node: nodes[i].name.clone(),
        }),
    }
}

/// One joint assignment of a node's parents, keyed canonically: entries are
/// held in a sorted map, so two configs with the same bindings compare and
/// hash identically no matter the order they were built in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParentConfig(BTreeMap<String, String>);

impl ParentConfig {
    /// The empty configuration used for root nodes.
    pub fn empty() -> Self {
        ParentConfig(BTreeMap::new())
    }

    pub fn from_pairs<K, V, I>(pairs: I) -> Self
    where
        K: Into<String>,
        V: Into<String>,
        I: IntoIterator<Item = (K, V)>,
    {
        ParentConfig(
            pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }

    pub fn insert(&mut self, parent: impl Into<String>, state: impl Into<String>) {
        self.0.insert(parent.into(), state.into());
    }

    pub fn get(&self, parent: &str) -> Option<&str> {
        self.0.get(parent).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parent names in canonical (sorted) order.
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for ParentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "}}")
    }
}

/// One table row: per-state observation counts, the probability vector they
/// induce, and the row's total support.
///
/// Counts are the source of truth; `probs[i]` caches `counts[i] / support` as
/// an exact floating-point quotient of the two integers. Hand-authored rows
/// may instead carry authoritative probabilities with zero counts and zero
/// support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbtRow {
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
    pub support: u64,
}

impl CbtRow {
    /// Builds a row from counts alone; `support` becomes the count total and
    /// each probability the exact integer-count ratio.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let support: u64 = counts.iter().sum();
        let probs = counts
            .iter()
            .map(|&c| {
                if support == 0 {
                    0.0
                } else {
                    c as f64 / support as f64
                }
            })
            .collect();
        CbtRow {
            counts,
            probs,
            support,
        }
    }

    /// Builds an authored row: probabilities given directly, no counts.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        CbtRow {
            counts: vec![0; probs.len()],
            probs,
            support: 0,
        }
    }
}

/// The conditional belief table of one node: a row per observed parent
/// configuration.
///
/// Only configurations that actually occurred are materialized; queries for
/// absent rows are resolved by the owning model's [`ZeroCountPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cbt {
    pub child: String,
    /// The child's parent list in structure (edge insertion) order.
    pub parent_names: Vec<String>,
    pub rows: BTreeMap<ParentConfig, CbtRow>,
}

/// Maximum drift tolerated in a stored row's probability vector: the row sum
/// may differ from 1 by at most this, and each probability may differ from
/// its counts ratio by at most this.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

impl Cbt {
    /// Checks row shapes, probability bounds, row sums, and count/probability
    /// consistency against the child's state list.
    fn validate(&self, spec: &NodeSpec, structure_parents: &[String]) -> Result<()> {
        let k = spec.states.len();
        let name = &self.child;
        let expected: BTreeSet<&str> = structure_parents.iter().map(String::as_str).collect();
        let got: BTreeSet<&str> = self.parent_names.iter().map(String::as_str).collect();
        if expected != got || self.parent_names.len() != structure_parents.len() {
            return Err(Error::ParentConfigMismatch {
                node: name.clone(),
                expected: structure_parents.to_vec(),
                got: self.parent_names.clone(),
            });
        }
        for (config, row) in &self.rows {
            let config_vars: BTreeSet<&str> = config.vars().collect();
            if config_vars != expected {
                return Err(Error::ParentConfigMismatch {
                    node: name.clone(),
                    expected: structure_parents.to_vec(),
                    got: config.vars().map(str::to_string).collect(),
                });
            }
            if row.counts.len() != k || row.probs.len() != k {
                return Err(Error::Parse {
                    reason: format!(
                        "table row {config} for '{name}' has {} entries, node has {k} states",
                        row.counts.len().max(row.probs.len())
                    ),
                });
            }
            if row.support != row.counts.iter().sum::<u64>() {
                return Err(Error::Parse {
                    reason: format!("table row {config} for '{name}': support differs from count total"),
                });
            }
            let mut sum = 0.0;
            for (i, &p) in row.probs.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Parse {
                        reason: format!("table row {config} for '{name}' has probability {p} outside [0, 1]"),
                    });
                }
                if row.support > 0 {
                    let ratio = row.counts[i] as f64 / row.support as f64;
                    if (p - ratio).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::Parse {
                            reason: format!(
                                "table row {config} for '{name}': probability {p} disagrees with counts ratio {ratio}"
                            ),
                        });
                    }
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Parse {
                    reason: format!("table row {config} for '{name}' sums to {sum}, expected 1"),
                });
            }
        }
        Ok(())
    }
}

/// A structure plus its learned (or authored) tables and the policy for
/// resolving unseen parent configurations.
///
/// Immutable after construction: learning and refinement build new models.
#[derive(Debug, Clone, PartialEq)]
pub struct BnModel {
    pub structure: BnStructure,
    /// One table per parameterized node, keyed by child name. Nodes without a
    /// table are answered entirely by the zero-count policy.
    pub cbts: BTreeMap<String, Cbt>,
    pub zero_count_policy: ZeroCountPolicy,
}

impl BnModel {
    /// Assembles and validates a model. Every table must belong to a
    /// structure node, match its parent set, and hold well-formed rows.
    pub fn new(structure: BnStructure, cbts: Vec<Cbt>, policy: ZeroCountPolicy) -> Result<Self> {
        let mut by_child = BTreeMap::new();
        for cbt in cbts {
            let spec = structure
                .node(&cbt.child)
                .ok_or_else(|| Error::UnknownNode {
                    name: cbt.child.clone(),
                })?;
            cbt.validate(spec, structure.parents(&cbt.child)?)?;
            if by_child.insert(cbt.child.clone(), cbt).is_some() {
                return Err(Error::Parse {
                    reason: format!("two tables supplied for node '{}'", by_child.keys().last().unwrap()),
                });
            }
        }
        Ok(BnModel {
            structure,
            cbts: by_child,
            zero_count_policy: policy,
        })
    }

    /// A model with no tables; every query is resolved by the policy.
    pub fn structure_only(structure: BnStructure, policy: ZeroCountPolicy) -> Self {
        BnModel {
            structure,
            cbts: BTreeMap::new(),
            zero_count_policy: policy,
        }
    }

    /// Probability of `child = state` given a full assignment of the child's
    /// parents. Unseen configurations follow the zero-count policy.
    pub fn conditional_prob(
        &self,
        child: &str,
        state: &str,
        config: &ParentConfig,
    ) -> Result<f64> {
        let spec = self
            .structure
            .node(child)
            .ok_or_else(|| Error::UnknownNode {
                name: child.to_string(),
            })?;
        let state_ix = spec.state_index(state).ok_or_else(|| Error::UnknownState {
            node: child.to_string(),
            state: state.to_string(),
        })?;
        let parents = self.structure.parents(child)?;
        if config.len() != parents.len() || !parents.iter().all(|p| config.get(p).is_some()) {
            return Err(Error::ParentConfigMismatch {
                node: child.to_string(),
                expected: parents.to_vec(),
                got: config.vars().map(str::to_string).collect(),
            });
        }
        for parent in parents {
            let value = config.get(parent).unwrap();
            let pspec = self.structure.node(parent).unwrap();
            if pspec.state_index(value).is_none() {
                return Err(Error::UnknownState {
                    node: parent.clone(),
                    state: value.to_string(),
                });
            }
        }
        match self.cbts.get(child).and_then(|cbt| cbt.rows.get(config)) {
            Some(row) => Ok(row.probs[state_ix]),
            None => match self.zero_count_policy {
                ZeroCountPolicy::Uniform => Ok(1.0 / spec.states.len() as f64),
                ZeroCountPolicy::Strict => Err(Error::UnseenConfig {
                    node: child.to_string(),
                    config: config.to_string(),
                }),
            },
        }
    }

    /// Joint probability of a full assignment: the product over nodes of
    /// their conditional probabilities. The assignment must cover every node
    /// and name only known nodes.
    pub fn joint_prob(&self, assignment: &BTreeMap<String, String>) -> Result<f64> {
        for name in assignment.keys() {
            if !self.structure.contains(name) {
                return Err(Error::UnknownNode { name: name.clone() });
            }
        }
        let mut product = 1.0;
        for spec in self.structure.nodes() {
            let value = assignment
                .get(&spec.name)
                .ok_or_else(|| Error::IncompleteAssignment {
                    node: spec.name.clone(),
                })?;
            let mut config = ParentConfig::empty();
            for parent in self.structure.parents(&spec.name)? {
                let pv = assignment
                    .get(parent)
                    .ok_or_else(|| Error::IncompleteAssignment {
                        node: parent.clone(),
                    })?;
                config.insert(parent.clone(), pv.clone());
            }
            product *= self.conditional_prob(&spec.name, value, &config)?;
        }
        Ok(product)
    }

    /// Short content hash of the serialized model, recorded in reports so a
    /// result can be traced to the exact parameterization that produced it.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    /// Serializes to the model file format (pretty JSON, trailing newline).
    pub fn to_json(&self) -> String {
        let repr = ModelRepr::from_model(self);
        let mut s = serde_json::to_string_pretty(&repr).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    /// Parses and fully validates a model file.
    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr = serde_json::from_str(text)?;
        repr.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// On-disk model layout: nodes, edges, and one table block per node, with
/// rows listed in canonical parent-configuration order.
#[derive(Serialize, Deserialize)]
struct ModelRepr {
    zero_count_policy: ZeroCountPolicy,
    nodes: Vec<NodeSpec>,
    edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cbts: Vec<CbtRepr>,
}

#[derive(Serialize, Deserialize)]
struct CbtRepr {
    child: String,
    parents: Vec<String>,
    rows: Vec<RowRepr>,
}

#[derive(Serialize, Deserialize)]
struct RowRepr {
    config: BTreeMap<String, String>,
    counts: Vec<u64>,
    probs: Vec<f64>,
    support: u64,
}

impl ModelRepr {
    fn from_model(model: &BnModel) -> Self {
        ModelRepr {
            zero_count_policy: model.zero_count_policy,
            nodes: model.structure.nodes().to_vec(),
            edges: model.structure.edges().to_vec(),
            cbts: model
                .cbts
                .values()
                .map(|cbt| CbtRepr {
                    child: cbt.child.clone(),
                    parents: cbt.parent_names.clone(),
                    rows: cbt
                        .rows
                        .iter()
                        .map(|(config, row)| RowRepr {
                            config: config.iter().map(|(k, v)| (k.into(), v.into())).collect(),
                            counts: row.counts.clone(),
                            probs: row.probs.clone(),
                            support: row.support,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn into_model(self) -> Result<BnModel> {
        let structure = build_structure(self.nodes, self.edges)?;
        let mut cbts = Vec::new();
        for repr in self.cbts {
            let mut rows = BTreeMap::new();
            for row in repr.rows {
                let config = ParentConfig::from_pairs(row.config);
                if rows
                    .insert(
                        config.clone(),
                        CbtRow {
                            counts: row.counts,
                            probs: row.probs,
                            support: row.support,
                        },
                    )
                    .is_some()
                {
                    return Err(Error::Parse {
                        reason: format!(
                            "table for '{}' lists configuration {config} twice",
                            repr.child
                        ),
                    });
                }
            }
            cbts.push(Cbt {
                child: repr.child,
                parent_names: repr.parents,
                rows,
            });
        }
        BnModel::new(structure, cbts, self.zero_count_policy)
    }
}

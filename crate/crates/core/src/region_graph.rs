//! Random region graphs.
//!
//! A region graph is a bipartite DAG alternating between *regions* (subsets
//! of the variables) and *partitions* (splits of a region into two disjoint
//! sub-regions). It fixes the layout of a circuit without saying anything
//! about node counts or parameters; see [`crate::circuit`] for that.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ValidationReport;

pub type RegionId = usize;
pub type PartitionId = usize;

/// How many permutations are drawn for one split before the split is skipped.
const MAX_SPLIT_DRAWS: usize = 64;

/// Sorted, duplicate-free set of 0-based variable indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariableScope(Vec<usize>);

impl VariableScope {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        if v.is_empty() {
            return Err(Error::invalid("scope must not be empty"));
        }
        v.sort_unstable();
        if v.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "scope {v:?} has repeated variables"
            )));
        }
        Ok(VariableScope(v))
    }

    /// The scope `{0, .., num_vars - 1}`.
    pub fn full(num_vars: usize) -> Result<Self> {
        Self::new(0..num_vars)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, var: usize) -> bool {
        self.0.binary_search(&var).is_ok()
    }

    pub fn is_disjoint(&self, other: &VariableScope) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn union(&self, other: &VariableScope) -> VariableScope {
        let set: BTreeSet<usize> = self.0.iter().chain(&other.0).copied().collect();
        VariableScope(set.into_iter().collect())
    }
}

impl fmt::Display for VariableScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionKind {
    Root,
    Internal,
    Leaf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub scope: VariableScope,
    /// Partitions that split this region, in insertion order.
    pub children: Vec<PartitionId>,
    /// Partitions that list this region as one of their two halves.
    pub parents: Vec<PartitionId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Partition {
    pub parent: RegionId,
    /// The larger (or equal) half first.
    pub children: [RegionId; 2],
}

/// Generative description of a random region graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphConfig {
    pub depth: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionGraph {
    num_vars: usize,
    config: GraphConfig,
    regions: Vec<Region>,
    partitions: Vec<Partition>,
    root: RegionId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphViolation {
    BadScope {
        region: RegionId,
        reason: String,
    },
    RootNotFull {
        region: RegionId,
    },
    RootHasParent {
        region: RegionId,
    },
    Orphan {
        region: RegionId,
    },
    DegeneratePartition {
        partition: PartitionId,
    },
    Overlap {
        partition: PartitionId,
    },
    NotCovering {
        partition: PartitionId,
    },
    Adjacency {
        detail: String,
    },
    DuplicateScope {
        first: RegionId,
        second: RegionId,
    },
    DuplicatePartition {
        first: PartitionId,
        second: PartitionId,
    },
    Cycle {
        region: RegionId,
    },
}

impl fmt::Display for GraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphViolation::BadScope { region, reason } => {
                write!(f, "region {region} has an invalid scope: {reason}")
            }
            GraphViolation::RootNotFull { region } => {
                write!(f, "root region {region} does not cover all variables")
            }
            GraphViolation::RootHasParent { region } => {
                write!(f, "root region {region} has a parent partition")
            }
            GraphViolation::Orphan { region } => {
                write!(f, "region {region} has no parent partition")
            }
            GraphViolation::DegeneratePartition { partition } => {
                write!(f, "partition {partition} uses the same region twice")
            }
            GraphViolation::Overlap { partition } => {
                write!(f, "partition {partition} has overlapping children")
            }
            GraphViolation::NotCovering { partition } => {
                write!(f, "partition {partition} does not cover parent")
            }
            GraphViolation::Adjacency { detail } => write!(f, "inconsistent adjacency: {detail}"),
            GraphViolation::DuplicateScope { first, second } => {
                write!(f, "duplicate scope: regions {first} and {second}")
            }
            GraphViolation::DuplicatePartition { first, second } => {
                write!(f, "duplicate partition: partitions {first} and {second}")
            }
            GraphViolation::Cycle { region } => write!(f, "cycle through region {region}"),
        }
    }
}

/// Builds a random region graph by `repetitions` independent recursive
/// balanced splits of the full scope, each at most `depth` levels deep.
///
/// Regions are keyed by scope, so splits drawn in different repetitions that
/// produce the same sub-scope share a single region node. A non-singleton
/// scope is only ever placed at one distance from the root: a split whose
/// halves would reuse a scope living at a different level is redrawn, which
/// keeps every root-to-leaf path at most `depth` partitions long.
pub fn random_region_graph(
    num_vars: usize,
    depth: usize,
    repetitions: usize,
    seed: u64,
) -> Result<RegionGraph> {
    if num_vars == 0 {
        return Err(Error::invalid("num_vars must be at least 1"));
    }
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    let config = GraphConfig {
        depth,
        repetitions,
        seed,
    };
    let mut builder = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        by_scope: HashMap::new(),
        by_partition: HashMap::new(),
        level: Vec::new(),
        regions: Vec::new(),
        partitions: Vec::new(),
    };
    let root = builder.region(VariableScope::full(num_vars)?, 0);
    if num_vars > 1 {
        for _ in 0..repetitions {
            builder.split(root, depth);
        }
    }
    Ok(RegionGraph {
        num_vars,
        config,
        regions: builder.regions,
        partitions: builder.partitions,
        root,
    })
}

struct Builder {
    rng: ChaCha8Rng,
    by_scope: HashMap<VariableScope, RegionId>,
    by_partition: HashMap<(RegionId, RegionId, RegionId), PartitionId>,
    level: Vec<usize>,
    regions: Vec<Region>,
    partitions: Vec<Partition>,
}

impl Builder {
    fn region(&mut self, scope: VariableScope, level: usize) -> RegionId {
        if let Some(&id) = self.by_scope.get(&scope) {
            return id;
        }
        let id = self.regions.len();
        self.by_scope.insert(scope.clone(), id);
        self.level.push(level);
        self.regions.push(Region {
            scope,
            children: Vec::new(),
            parents: Vec::new(),
        });
        id
    }

    fn fits(&self, scope: &VariableScope, level: usize) -> bool {
        scope.len() == 1
            || self
                .by_scope
                .get(scope)
                .is_none_or(|&id| self.level[id] == level)
    }

    fn split(&mut self, region: RegionId, depth: usize) {
        let child_level = self.level[region] + 1;
        let mut vars = self.regions[region].scope.as_slice().to_vec();
        let cut = vars.len().div_ceil(2);
        let mut halves = None;
        for _ in 0..MAX_SPLIT_DRAWS {
            vars.shuffle(&mut self.rng);
            let a = VariableScope::new(vars[..cut].iter().copied()).expect("non-empty half");
            let b = VariableScope::new(vars[cut..].iter().copied()).expect("non-empty half");
            if self.fits(&a, child_level) && self.fits(&b, child_level) {
                halves = Some((a, b));
                break;
            }
        }
        let Some((a, b)) = halves else {
            return;
        };
        let (len_a, len_b) = (a.len(), b.len());
        let ra = self.region(a, child_level);
        let rb = self.region(b, child_level);
        let key = (region, ra.min(rb), ra.max(rb));
        if !self.by_partition.contains_key(&key) {
            let id = self.partitions.len();
            self.by_partition.insert(key, id);
            self.partitions.push(Partition {
                parent: region,
                children: [ra, rb],
            });
            self.regions[region].children.push(id);
            self.regions[ra].parents.push(id);
            self.regions[rb].parents.push(id);
        }
        if depth > 1 {
            if len_a > 1 {
                self.split(ra, depth - 1);
            }
            if len_b > 1 {
                self.split(rb, depth - 1);
            }
        }
    }
}

impl RegionGraph {
    /// Assembles a graph from explicit region scopes and partitions.
    ///
    /// Only index bounds are checked here; run [`RegionGraph::validate`] for
    /// the structural conditions.
    pub fn from_parts(
        num_vars: usize,
        config: GraphConfig,
        scopes: Vec<VariableScope>,
        partitions: Vec<Partition>,
        root: RegionId,
    ) -> Result<Self> {
        let n = scopes.len();
        if root >= n {
            return Err(Error::structure(format!(
                "root index {root} out of range ({n} regions)"
            )));
        }
        let mut regions: Vec<Region> = scopes
            .into_iter()
            .map(|scope| Region {
                scope,
                children: Vec::new(),
                parents: Vec::new(),
            })
            .collect();
        for (id, p) in partitions.iter().enumerate() {
            if p.parent >= n || p.children.iter().any(|&c| c >= n) {
                return Err(Error::structure(format!(
                    "partition {id} references a region outside 0..{n}"
                )));
            }
            regions[p.parent].children.push(id);
            for &c in &p.children {
                if !regions[c].parents.contains(&id) {
                    regions[c].parents.push(id);
                }
            }
        }
        Ok(RegionGraph {
            num_vars,
            config,
            regions,
            partitions,
            root,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn config(&self) -> GraphConfig {
        self.config
    }

    pub fn root(&self) -> RegionId {
        self.root
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id]
    }

    pub fn partition(&self, id: PartitionId) -> &Partition {
        &self.partitions[id]
    }

    pub fn kind(&self, id: RegionId) -> RegionKind {
        if id == self.root {
            RegionKind::Root
        } else if self.regions[id].children.is_empty() {
            RegionKind::Leaf
        } else {
            RegionKind::Internal
        }
    }

    pub fn is_leaf(&self, id: RegionId) -> bool {
        self.regions[id].children.is_empty()
    }

    /// Longest path, counted in partitions, from each region down to a leaf region.
    ///
    /// Assumes the graph is acyclic.
    pub fn heights(&self) -> Vec<usize> {
        let mut height = vec![usize::MAX; self.regions.len()];
        for id in 0..self.regions.len() {
            self.height_of(id, &mut height);
        }
        height
    }

    fn height_of(&self, id: RegionId, memo: &mut [usize]) -> usize {
        if memo[id] != usize::MAX {
            return memo[id];
        }
        let mut h = 0;
        for &p in &self.regions[id].children {
            for &c in &self.partitions[p].children {
                h = h.max(1 + self.height_of(c, memo));
            }
        }
        memo[id] = h;
        h
    }

    /// Longest root-to-leaf path length in partitions.
    pub fn depth(&self) -> usize {
        self.heights()[self.root]
    }

    /// Checks the region-graph conditions and reports every violation found.
    pub fn validate(&self) -> ValidationReport<GraphViolation> {
        let mut out = Vec::new();
        let n = self.regions.len();

        for (id, r) in self.regions.iter().enumerate() {
            let s = r.scope.as_slice();
            if s.is_empty() {
                out.push(GraphViolation::BadScope {
                    region: id,
                    reason: "empty".into(),
                });
            } else if let Some(&v) = s.iter().find(|&&v| v >= self.num_vars) {
                out.push(GraphViolation::BadScope {
                    region: id,
                    reason: format!("variable {v} out of range (num_vars = {})", self.num_vars),
                });
            }
        }

        if self.regions[self.root].scope.len() != self.num_vars {
            out.push(GraphViolation::RootNotFull { region: self.root });
        }
        if !self.regions[self.root].parents.is_empty() {
            out.push(GraphViolation::RootHasParent { region: self.root });
        }
        for (id, r) in self.regions.iter().enumerate() {
            if id != self.root && r.parents.is_empty() {
                out.push(GraphViolation::Orphan { region: id });
            }
        }

        for (id, p) in self.partitions.iter().enumerate() {
            let [a, b] = p.children;
            if a == b {
                out.push(GraphViolation::DegeneratePartition { partition: id });
                continue;
            }
            let (sa, sb) = (&self.regions[a].scope, &self.regions[b].scope);
            if !sa.is_disjoint(sb) {
                out.push(GraphViolation::Overlap { partition: id });
            }
            if sa.union(sb) != self.regions[p.parent].scope {
                out.push(GraphViolation::NotCovering { partition: id });
            }
        }

        // Adjacency lists must mirror the partition table exactly.
        for (id, r) in self.regions.iter().enumerate() {
            for &p in &r.children {
                if p >= self.partitions.len() || self.partitions[p].parent != id {
                    out.push(GraphViolation::Adjacency {
                        detail: format!("region {id} lists partition {p} as a child"),
                    });
                }
            }
            for &p in &r.parents {
                if p >= self.partitions.len() || !self.partitions[p].children.contains(&id) {
                    out.push(GraphViolation::Adjacency {
                        detail: format!("region {id} lists partition {p} as a parent"),
                    });
                }
            }
        }
        for (id, p) in self.partitions.iter().enumerate() {
            if !self.regions[p.parent].children.contains(&id) {
                out.push(GraphViolation::Adjacency {
                    detail: format!("partition {id} missing from parent region {}", p.parent),
                });
            }
            for &c in &p.children {
                if !self.regions[c].parents.contains(&id) {
                    out.push(GraphViolation::Adjacency {
                        detail: format!("partition {id} missing from child region {c}"),
                    });
                }
            }
        }

        let mut seen: HashMap<&VariableScope, RegionId> = HashMap::new();
        for (id, r) in self.regions.iter().enumerate() {
            if let Some(&first) = seen.get(&r.scope) {
                out.push(GraphViolation::DuplicateScope { first, second: id });
            } else {
                seen.insert(&r.scope, id);
            }
        }
        let mut seen_p: HashMap<(RegionId, RegionId, RegionId), PartitionId> = HashMap::new();
        for (id, p) in self.partitions.iter().enumerate() {
            let [a, b] = p.children;
            let key = (p.parent, a.min(b), a.max(b));
            if let Some(&first) = seen_p.get(&key) {
                out.push(GraphViolation::DuplicatePartition { first, second: id });
            } else {
                seen_p.insert(key, id);
            }
        }

        // Iterative three-colour DFS over region -> partition -> region edges.
        let mut state = vec![0u8; n];
        for start in 0..n {
            if state[start] != 0 {
                continue;
            }
            let mut stack: Vec<(RegionId, usize)> = vec![(start, 0)];
            state[start] = 1;
            while let Some(&mut (r, ref mut next)) = stack.last_mut() {
                let succ: Vec<RegionId> = self.regions[r]
                    .children
                    .iter()
                    .filter(|&&p| p < self.partitions.len())
                    .flat_map(|&p| self.partitions[p].children)
                    .collect();
                if *next < succ.len() {
                    let c = succ[*next];
                    *next += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            stack.push((c, 0));
                        }
                        1 => out.push(GraphViolation::Cycle { region: c }),
                        _ => {}
                    }
                } else {
                    state[r] = 2;
                    stack.pop();
                }
            }
        }

        ValidationReport::from_violations(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope(v: &[usize]) -> VariableScope {
        VariableScope::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn seven_variables_two_repetitions() {
        for seed in 0..20 {
            let g = random_region_graph(7, 2, 2, seed).unwrap();
            assert!(g.validate().is_ok());
            let root = g.region(g.root());
            assert_eq!(root.scope.len(), 7);
            assert!(!root.children.is_empty() && root.children.len() <= 2);
            for &p in &root.children {
                let [a, b] = g.partition(p).children;
                assert_eq!(g.region(a).scope.len(), 4);
                assert_eq!(g.region(b).scope.len(), 3);
                // second level: 4 -> {2, 2}, 3 -> {2, 1}
                for (c, sizes) in [(a, [2, 2]), (b, [2, 1])] {
                    assert!(!g.region(c).children.is_empty());
                    for &q in &g.region(c).children {
                        let [x, y] = g.partition(q).children;
                        assert_eq!([g.region(x).scope.len(), g.region(y).scope.len()], sizes);
                        assert!(g.is_leaf(x) && g.is_leaf(y));
                    }
                }
            }
            assert_eq!(g.depth(), 2);
        }
    }

    #[test]
    fn single_variable_has_no_partitions() {
        let g = random_region_graph(1, 3, 5, 11).unwrap();
        assert_eq!(g.regions().len(), 1);
        assert!(g.partitions().is_empty());
        assert_eq!(g.kind(g.root()), RegionKind::Root);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn four_variables_stop_at_singletons() {
        let g = random_region_graph(4, 3, 1, 5).unwrap();
        assert_eq!(g.regions().len(), 7);
        assert_eq!(g.partitions().len(), 3);
        let singles = g.regions().iter().filter(|r| r.scope.len() == 1).count();
        assert_eq!(singles, 4);
        assert_eq!(g.depth(), 2);
    }

    #[test]
    fn zero_variables_rejected() {
        assert!(matches!(
            random_region_graph(0, 1, 1, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(random_region_graph(3, 0, 1, 0).is_err());
        assert!(random_region_graph(3, 1, 0, 0).is_err());
    }

    #[test]
    fn non_covering_partition_reported() {
        let cfg = GraphConfig {
            depth: 1,
            repetitions: 1,
            seed: 0,
        };
        let g = RegionGraph::from_parts(
            4,
            cfg,
            vec![scope(&[0, 1, 2, 3]), scope(&[0, 1]), scope(&[2])],
            vec![Partition {
                parent: 0,
                children: [1, 2],
            }],
            0,
        )
        .unwrap();
        let report = g.validate();
        assert!(report
            .violations()
            .contains(&GraphViolation::NotCovering { partition: 0 }));
        assert!(report
            .to_string()
            .contains("partition 0 does not cover parent"));
    }

    #[test]
    fn duplicate_scope_reported() {
        let cfg = GraphConfig {
            depth: 1,
            repetitions: 2,
            seed: 0,
        };
        let g = RegionGraph::from_parts(
            2,
            cfg,
            vec![scope(&[0, 1]), scope(&[0]), scope(&[1]), scope(&[0])],
            vec![
                Partition {
                    parent: 0,
                    children: [1, 2],
                },
                Partition {
                    parent: 0,
                    children: [3, 2],
                },
            ],
            0,
        )
        .unwrap();
        let report = g.validate();
        assert_eq!(
            report.violations(),
            &[GraphViolation::DuplicateScope {
                first: 1,
                second: 3
            }]
        );
        assert!(report.to_string().contains("duplicate scope"));
    }

    #[test]
    fn cycle_and_orphan_reported() {
        let cfg = GraphConfig {
            depth: 1,
            repetitions: 1,
            seed: 0,
        };
        // region 1 = {0,1} splits into {0} and region 3, and region 3 splits back into 1.
        let g = RegionGraph::from_parts(
            3,
            cfg,
            vec![
                scope(&[0, 1, 2]),
                scope(&[0, 1]),
                scope(&[2]),
                scope(&[5]),
                scope(&[1]),
            ],
            vec![
                Partition {
                    parent: 0,
                    children: [1, 2],
                },
                Partition {
                    parent: 1,
                    children: [1, 4],
                },
            ],
            0,
        )
        .unwrap();
        let v = g.validate();
        assert!(v
            .violations()
            .iter()
            .any(|x| matches!(x, GraphViolation::Cycle { .. })));
        assert!(v
            .violations()
            .contains(&GraphViolation::Orphan { region: 3 }));
        assert!(v
            .violations()
            .iter()
            .any(|x| matches!(x, GraphViolation::BadScope { region: 3, .. })));
    }

    #[test]
    fn scope_ops() {
        let a = scope(&[3, 1]);
        let b = scope(&[2]);
        assert_eq!(a.as_slice(), &[1, 3]);
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b), scope(&[1, 2, 3]));
        assert!(!a.is_disjoint(&scope(&[3, 7])));
        assert!(VariableScope::new([1, 1]).is_err());
        assert!(VariableScope::new([]).is_err());
        assert_eq!(a.to_string(), "{1,3}");
    }
}

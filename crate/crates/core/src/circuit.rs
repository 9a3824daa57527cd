//! Tensorized circuits built on top of a region graph.
//!
//! Every leaf region gets a block of `leaves` input distributions, the root a
//! block of `classes` sums, and every other region a block of `sums` sums.
//! Every partition gets the full cross product of its two child blocks, and
//! every product feeds every sum of the partition's parent region.
//!
//! Block ordering is part of the model file contract:
//!
//! * leaf blocks follow ascending region index over leaf regions;
//! * sum blocks follow ascending region index over non-leaf regions (plus
//!   the root of a single-variable circuit);
//! * the inputs of a sum block are its region's child partitions in ascending
//!   partition index, each contributing `w1 * w2` columns where column
//!   `i * w2 + j` is the product of node `i` of the first child and node `j`
//!   of the second child.

use std::fmt;

use crate::error::{Error, Result};
use crate::region_graph::{PartitionId, RegionGraph, RegionId, VariableScope};
use crate::ValidationReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LeafKind {
    #[default]
    Gaussian,
    /// Factorised Bernoulli leaves over binary data.
    Bernoulli,
}

impl LeafKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LeafKind::Gaussian => "gaussian",
            LeafKind::Bernoulli => "bernoulli",
        }
    }
}

/// Node counts used to populate a region graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CircuitShape {
    /// Sum nodes in the root region (one per class).
    pub classes: usize,
    /// Sum nodes in every internal region.
    pub sums: usize,
    /// Input distributions in every leaf region.
    pub leaves: usize,
    pub leaf: LeafKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafBlock {
    pub region: RegionId,
    pub scope: VariableScope,
    pub width: usize,
    /// Offset of this block's `width * scope.len()` parameters.
    pub param_offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductBlock {
    pub partition: PartitionId,
    pub scope: VariableScope,
    /// Regions whose output blocks are multiplied.
    pub inputs: [RegionId; 2],
    pub widths: [usize; 2],
    /// Sum block consuming these products.
    pub sum_block: usize,
    /// First column of this block within the consumer's inputs.
    pub column_offset: usize,
}

impl ProductBlock {
    pub fn width(&self) -> usize {
        self.widths[0] * self.widths[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumInput {
    Products(usize),
    Leaves(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumBlock {
    pub region: RegionId,
    pub scope: VariableScope,
    pub width: usize,
    pub inputs: Vec<SumInput>,
    pub num_inputs: usize,
    /// Offset of this block's `width * num_inputs` logits (row-major per node).
    pub logit_offset: usize,
}

/// The block holding a region's output values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionOutput {
    Leaf(usize),
    Sum(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Leaves(Vec<usize>),
    Products(Vec<usize>),
    Sums(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterCount {
    pub num_sum_logits: usize,
    pub num_leaf_params: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CircuitViolation {
    Completeness { sum: usize, detail: String },
    Decomposability { product: usize, detail: String },
    Scope { detail: String },
    Wiring { detail: String },
}

impl fmt::Display for CircuitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircuitViolation::Completeness { sum, detail } => {
                write!(f, "completeness violated at sum block {sum}: {detail}")
            }
            CircuitViolation::Decomposability { product, detail } => {
                write!(
                    f,
                    "decomposability violated at product block {product}: {detail}"
                )
            }
            CircuitViolation::Scope { detail } => write!(f, "scope bookkeeping: {detail}"),
            CircuitViolation::Wiring { detail } => write!(f, "wiring: {detail}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    graph: RegionGraph,
    shape: CircuitShape,
    pub(crate) leaf_blocks: Vec<LeafBlock>,
    pub(crate) product_blocks: Vec<ProductBlock>,
    pub(crate) sum_blocks: Vec<SumBlock>,
    pub(crate) region_output: Vec<RegionOutput>,
    pub(crate) layers: Vec<Layer>,
    root_block: usize,
    num_sum_logits: usize,
    num_leaf_slots: usize,
}

impl Circuit {
    /// Populates `graph` with node blocks. The graph must validate.
    pub fn new(graph: RegionGraph, shape: CircuitShape) -> Result<Self> {
        if shape.classes == 0 || shape.sums == 0 || shape.leaves == 0 {
            return Err(Error::invalid(format!(
                "classes, sums and leaves must be positive (got {}, {}, {})",
                shape.classes, shape.sums, shape.leaves
            )));
        }
        let report = graph.validate();
        if !report.is_ok() {
            return Err(Error::structure(format!("invalid region graph: {report}")));
        }

        let root = graph.root();
        let mut leaf_blocks = Vec::new();
        let mut sum_blocks: Vec<SumBlock> = Vec::new();
        let mut region_output = Vec::with_capacity(graph.regions().len());
        let mut param_offset = 0;

        for (id, region) in graph.regions().iter().enumerate() {
            if graph.is_leaf(id) {
                let lb = leaf_blocks.len();
                leaf_blocks.push(LeafBlock {
                    region: id,
                    scope: region.scope.clone(),
                    width: shape.leaves,
                    param_offset,
                });
                param_offset += shape.leaves * region.scope.len();
                if id == root {
                    // Single variable: the root mixes the leaves directly.
                    region_output.push(RegionOutput::Sum(sum_blocks.len()));
                    sum_blocks.push(SumBlock {
                        region: id,
                        scope: region.scope.clone(),
                        width: shape.classes,
                        inputs: vec![SumInput::Leaves(lb)],
                        num_inputs: shape.leaves,
                        logit_offset: 0,
                    });
                } else {
                    region_output.push(RegionOutput::Leaf(lb));
                }
            } else {
                region_output.push(RegionOutput::Sum(sum_blocks.len()));
                sum_blocks.push(SumBlock {
                    region: id,
                    scope: region.scope.clone(),
                    width: if id == root {
                        shape.classes
                    } else {
                        shape.sums
                    },
                    inputs: Vec::new(),
                    num_inputs: 0,
                    logit_offset: 0,
                });
            }
        }

        let width_of = |out: RegionOutput, sums: &[SumBlock]| match out {
            RegionOutput::Leaf(_) => shape.leaves,
            RegionOutput::Sum(s) => sums[s].width,
        };
        let mut product_blocks = Vec::with_capacity(graph.partitions().len());
        for (pid, p) in graph.partitions().iter().enumerate() {
            let [a, b] = p.children;
            let widths = [
                width_of(region_output[a], &sum_blocks),
                width_of(region_output[b], &sum_blocks),
            ];
            let RegionOutput::Sum(consumer) = region_output[p.parent] else {
                unreachable!("a partition's parent is never a leaf region");
            };
            let pb = product_blocks.len();
            let sb = &mut sum_blocks[consumer];
            product_blocks.push(ProductBlock {
                partition: pid,
                scope: graph.region(a).scope.union(&graph.region(b).scope),
                inputs: [a, b],
                widths,
                sum_block: consumer,
                column_offset: sb.num_inputs,
            });
            sb.inputs.push(SumInput::Products(pb));
            sb.num_inputs += widths[0] * widths[1];
        }

        let mut logit_offset = 0;
        for sb in &mut sum_blocks {
            sb.logit_offset = logit_offset;
            logit_offset += sb.width * sb.num_inputs;
        }

        let RegionOutput::Sum(root_block) = region_output[root] else {
            unreachable!("the root region always carries a sum block");
        };
        let layers = layering(
            &graph,
            &leaf_blocks,
            &product_blocks,
            &sum_blocks,
            &region_output,
        );

        let circuit = Circuit {
            graph,
            shape,
            leaf_blocks,
            product_blocks,
            sum_blocks,
            region_output,
            layers,
            root_block,
            num_sum_logits: logit_offset,
            num_leaf_slots: param_offset,
        };
        let report = circuit.validate();
        if !report.is_ok() {
            return Err(Error::structure(format!(
                "circuit failed validation: {report}"
            )));
        }
        Ok(circuit)
    }

    pub fn graph(&self) -> &RegionGraph {
        &self.graph
    }

    pub fn shape(&self) -> CircuitShape {
        self.shape
    }

    pub fn num_vars(&self) -> usize {
        self.graph.num_vars()
    }

    pub fn num_classes(&self) -> usize {
        self.shape.classes
    }

    pub fn leaf_kind(&self) -> LeafKind {
        self.shape.leaf
    }

    pub fn leaf_blocks(&self) -> &[LeafBlock] {
        &self.leaf_blocks
    }

    pub fn product_blocks(&self) -> &[ProductBlock] {
        &self.product_blocks
    }

    pub fn sum_blocks(&self) -> &[SumBlock] {
        &self.sum_blocks
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn region_output(&self, region: RegionId) -> RegionOutput {
        self.region_output[region]
    }

    /// Index of the sum block holding the class roots.
    pub fn root_block(&self) -> usize {
        self.root_block
    }

    /// Number of sum and product layers above the leaves.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !matches!(l, Layer::Leaves(_)))
            .count()
    }

    pub fn num_sum_logits(&self) -> usize {
        self.num_sum_logits
    }

    /// Leaf parameter slots per leaf parameter vector (means, or Bernoulli logits).
    pub fn num_leaf_slots(&self) -> usize {
        self.num_leaf_slots
    }

    pub fn count_parameters(&self, train_variance: bool) -> ParameterCount {
        let per_slot = if train_variance && self.shape.leaf == LeafKind::Gaussian {
            2
        } else {
            1
        };
        let num_leaf_params = per_slot * self.num_leaf_slots;
        ParameterCount {
            num_sum_logits: self.num_sum_logits,
            num_leaf_params,
            total: self.num_sum_logits + num_leaf_params,
        }
    }

    fn output_scope(&self, region: RegionId) -> &VariableScope {
        match self.region_output[region] {
            RegionOutput::Leaf(b) => &self.leaf_blocks[b].scope,
            RegionOutput::Sum(b) => &self.sum_blocks[b].scope,
        }
    }

    fn output_width(&self, region: RegionId) -> usize {
        match self.region_output[region] {
            RegionOutput::Leaf(b) => self.leaf_blocks[b].width,
            RegionOutput::Sum(b) => self.sum_blocks[b].width,
        }
    }

    /// Checks completeness, decomposability, scope bookkeeping and wiring widths.
    pub fn validate(&self) -> ValidationReport<CircuitViolation> {
        let mut out = Vec::new();
        let nr = self.region_output.len();

        for (pi, p) in self.product_blocks.iter().enumerate() {
            if p.inputs.iter().any(|&r| r >= nr) || p.sum_block >= self.sum_blocks.len() {
                out.push(CircuitViolation::Wiring {
                    detail: format!("product block {pi} references a missing block"),
                });
                continue;
            }
            let (sa, sb) = (
                self.output_scope(p.inputs[0]),
                self.output_scope(p.inputs[1]),
            );
            if !sa.is_disjoint(sb) {
                out.push(CircuitViolation::Decomposability {
                    product: pi,
                    detail: format!("children {sa} and {sb} share variables"),
                });
            }
            if sa.union(sb) != p.scope {
                out.push(CircuitViolation::Scope {
                    detail: format!("product block {pi} scope {} != {sa} ∪ {sb}", p.scope),
                });
            }
            for k in 0..2 {
                let w = self.output_width(p.inputs[k]);
                if p.widths[k] != w {
                    out.push(CircuitViolation::Wiring {
                        detail: format!(
                            "product block {pi} expects width {} from region {}, block has {w}",
                            p.widths[k], p.inputs[k]
                        ),
                    });
                }
            }
        }

        let mut logit_offset = 0;
        for (si, s) in self.sum_blocks.iter().enumerate() {
            let mut columns = 0;
            for input in &s.inputs {
                let (scope, width) = match *input {
                    SumInput::Products(p) if p < self.product_blocks.len() => {
                        let pb = &self.product_blocks[p];
                        if pb.sum_block != si || pb.column_offset != columns {
                            out.push(CircuitViolation::Wiring {
                                detail: format!(
                                    "product block {p} is not wired to columns {columns}.. of sum block {si}"
                                ),
                            });
                        }
                        (&pb.scope, pb.width())
                    }
                    SumInput::Leaves(l) if l < self.leaf_blocks.len() => {
                        let lb = &self.leaf_blocks[l];
                        (&lb.scope, lb.width)
                    }
                    other => {
                        out.push(CircuitViolation::Wiring {
                            detail: format!("sum block {si} input {other:?} does not exist"),
                        });
                        continue;
                    }
                };
                if *scope != s.scope {
                    out.push(CircuitViolation::Completeness {
                        sum: si,
                        detail: format!("input scope {scope} differs from {}", s.scope),
                    });
                }
                columns += width;
            }
            if columns != s.num_inputs {
                out.push(CircuitViolation::Wiring {
                    detail: format!(
                        "sum block {si} declares {} inputs but is wired to {columns}",
                        s.num_inputs
                    ),
                });
            }
            if s.num_inputs == 0 {
                out.push(CircuitViolation::Wiring {
                    detail: format!("sum block {si} has no inputs"),
                });
            }
            if s.logit_offset != logit_offset {
                out.push(CircuitViolation::Wiring {
                    detail: format!(
                        "sum block {si} logits start at {}, expected {logit_offset}",
                        s.logit_offset
                    ),
                });
            }
            logit_offset += s.width * s.num_inputs;
            if s.region < nr && s.scope != self.graph.region(s.region).scope {
                out.push(CircuitViolation::Scope {
                    detail: format!("sum block {si} scope differs from region {}", s.region),
                });
            }
        }
        if logit_offset != self.num_sum_logits {
            out.push(CircuitViolation::Wiring {
                detail: format!(
                    "{} logits recorded, blocks need {logit_offset}",
                    self.num_sum_logits
                ),
            });
        }

        let mut slots = 0;
        for (li, l) in self.leaf_blocks.iter().enumerate() {
            if l.param_offset != slots {
                out.push(CircuitViolation::Wiring {
                    detail: format!(
                        "leaf block {li} parameters start at {}, expected {slots}",
                        l.param_offset
                    ),
                });
            }
            slots += l.width * l.scope.len();
        }
        if slots != self.num_leaf_slots {
            out.push(CircuitViolation::Wiring {
                detail: format!(
                    "{} leaf slots recorded, blocks need {slots}",
                    self.num_leaf_slots
                ),
            });
        }

        if self.root_block >= self.sum_blocks.len()
            || self.sum_blocks[self.root_block].scope.len() != self.graph.num_vars()
        {
            out.push(CircuitViolation::Scope {
                detail: "root block does not cover all variables".into(),
            });
        }

        ValidationReport::from_violations(out)
    }
}

/// Leaves first, then a product layer and a sum layer per region height.
fn layering(
    graph: &RegionGraph,
    leaf_blocks: &[LeafBlock],
    product_blocks: &[ProductBlock],
    sum_blocks: &[SumBlock],
    region_output: &[RegionOutput],
) -> Vec<Layer> {
    let heights = graph.heights();
    let max_h = heights[graph.root()];
    let mut layers = vec![Layer::Leaves((0..leaf_blocks.len()).collect())];
    if max_h == 0 {
        layers.push(Layer::Sums((0..sum_blocks.len()).collect()));
        return layers;
    }
    for h in 1..=max_h {
        let products: Vec<usize> = product_blocks
            .iter()
            .enumerate()
            .filter(|(_, p)| heights[graph.partition(p.partition).parent] == h)
            .map(|(i, _)| i)
            .collect();
        let sums: Vec<usize> = (0..graph.regions().len())
            .filter(|&r| heights[r] == h)
            .filter_map(|r| match region_output[r] {
                RegionOutput::Sum(s) => Some(s),
                RegionOutput::Leaf(_) => None,
            })
            .collect();
        layers.push(Layer::Products(products));
        layers.push(Layer::Sums(sums));
    }
    layers
}

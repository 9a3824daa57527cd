//! Random tensorized sum-product networks (RAT-SPNs).
//!
//! The pipeline is: draw a [`RegionGraph`] with [`random_region_graph`],
//! populate it with node blocks via [`Circuit::new`], initialise a
//! [`ParameterSet`], then evaluate with [`inference`] or fit with
//! [`training::train`]. Everything is computed in the log domain.
//!
//! ```
//! use ratspn_core::{random_region_graph, Circuit, CircuitShape, LeafKind, ParameterSet};
//! use ndarray::Array2;
//!
//! let graph = random_region_graph(6, 2, 3, 7).unwrap();
//! let shape = CircuitShape { classes: 2, sums: 3, leaves: 3, leaf: LeafKind::Gaussian };
//! let circuit = Circuit::new(graph, shape).unwrap();
//! let params = ParameterSet::init(&circuit, false, None, 7);
//! let x = Array2::<f64>::zeros((4, 6));
//! let roots = ratspn_core::inference::forward_log(&circuit, &params, x.view(), None, None).unwrap();
//! assert_eq!(roots.dim(), (4, 2));
//! ```

pub mod circuit;
pub mod data;
pub mod error;
pub mod inference;
pub mod leaves;
pub mod logspace;
pub mod metrics;
pub mod params;
pub mod region_graph;
pub mod serde_model;
pub mod training;

use std::fmt;

pub use circuit::{Circuit, CircuitShape, CircuitViolation, LeafKind, ParameterCount};
pub use data::{Dataset, QueryMask, Scaling};
pub use error::{Error, Result};
pub use inference::LogPrior;
pub use params::{GradientSet, ParameterSet};
pub use region_graph::{random_region_graph, GraphViolation, RegionGraph, VariableScope};
pub use serde_model::{load_model, save_model, Encoding, LoadedModel, ModelMeta};
pub use training::{TrainConfig, Trainer};

/// Outcome of a structural check: empty means every condition holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport<V> {
    violations: Vec<V>,
}

impl<V> ValidationReport<V> {
    pub fn from_violations(violations: Vec<V>) -> Self {
        ValidationReport { violations }
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[V] {
        &self.violations
    }
}

impl<V: fmt::Display> fmt::Display for ValidationReport<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

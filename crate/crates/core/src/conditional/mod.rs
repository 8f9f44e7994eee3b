//! Joint covariances built from conditional univariate pieces on a directed acyclic graph.

mod assembly;
mod point;

use std::collections::{BTreeMap, HashSet};

use nalgebra::DVector;

use crate::kernels::{InteractionSpec, MaternParams};
use crate::{Error, Result};

pub use assembly::{
    assemble_bivariate, assemble_dag, assemble_dag_with, build_interaction_matrix, InteractionMatrix,
    JointModel,
};
pub use point::{cross_cov_at, Point};
pub(crate) use assembly::{assemble_unchecked, kernel_matrix};

/// Edge from a parent node, with the interaction function it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub parent: usize,
    pub interaction: InteractionSpec,
}

/// Linear mean `x(s)ᵀβ` over named covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanSpec {
    pub covariates: Vec<String>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    /// Marginal covariance for a root node, conditional covariance otherwise.
    pub cov: MaternParams,
    pub parents: Vec<Edge>,
    pub mean: Option<MeanSpec>,
    /// Micro-scale variance added to the process.
    pub nugget: f64,
    /// Measurement-error variance of observations.
    pub noise: f64,
}

impl Node {
    pub fn new(name: impl Into<String>, cov: MaternParams) -> Self {
        Node {
            name: name.into(),
            cov,
            parents: Vec::new(),
            mean: None,
            nugget: 0.0,
            noise: 0.0,
        }
    }

    pub fn with_parent(mut self, parent: usize, interaction: InteractionSpec) -> Self {
        self.parents.push(Edge {
            parent,
            interaction,
        });
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn with_mean(mut self, covariates: Vec<String>, coefficients: Vec<f64>) -> Self {
        self.mean = Some(MeanSpec {
            covariates,
            coefficients,
        });
        self
    }
}

/// Nodes in topological order: every parent index is smaller than its child's.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessNetwork {
    nodes: Vec<Node>,
}

impl ProcessNetwork {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("network has no nodes".into()));
        }
        let mut names = HashSet::new();
        for (q, node) in nodes.iter().enumerate() {
            if node.name.is_empty()
                || node.name.contains(['.', ',', '=', ' '])
                || !names.insert(node.name.as_str())
            {
                return Err(Error::Validation(format!(
                    "node names must be nonempty, unique and free of '.', ',', '=' and spaces, got '{}'",
                    node.name
                )));
            }
            node.cov.validate()?;
            for (what, v) in [("nugget", node.nugget), ("noise", node.noise)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::ParameterDomain(format!(
                        "node '{}': {what} variance must be nonnegative, got {v}",
                        node.name
                    )));
                }
            }
            let mut seen = HashSet::new();
            for e in &node.parents {
                if e.parent >= q {
                    return Err(Error::Validation(format!(
                        "node '{}' has parent index {} which does not precede it",
                        node.name, e.parent
                    )));
                }
                if !seen.insert(e.parent) {
                    return Err(Error::Validation(format!(
                        "node '{}' lists parent '{}' twice",
                        node.name, nodes[e.parent].name
                    )));
                }
            }
            if let Some(m) = &node.mean {
                if m.covariates.len() != m.coefficients.len() {
                    return Err(Error::Config(format!(
                        "node '{}': {} covariates but {} coefficients",
                        node.name,
                        m.covariates.len(),
                        m.coefficients.len()
                    )));
                }
            }
        }
        Ok(ProcessNetwork { nodes })
    }

    /// Root `c11` and child with conditional covariance `c2_1` linked by `interaction`.
    pub fn bivariate(
        c11: MaternParams,
        c2_1: MaternParams,
        interaction: InteractionSpec,
    ) -> Result<Self> {
        ProcessNetwork::new(vec![
            Node::new("Y1", c11),
            Node::new("Y2", c2_1).with_parent(0, interaction),
        ])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, q: usize) -> &Node {
        &self.nodes[q]
    }

    pub fn into_nodes(self) -> Vec<Node> {
        self.nodes
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Checks every interaction against the location dimension.
    pub fn validate_dim(&self, dim: usize) -> Result<()> {
        for n in &self.nodes {
            for e in &n.parents {
                e.interaction.validate(dim)?;
            }
        }
        Ok(())
    }

    pub fn has_mean(&self) -> bool {
        self.nodes.iter().any(|n| n.mean.is_some())
    }

    /// `μ_q(loc)` using built-in covariates (`const`, `x`, `y`, `z`) or column `row` of `extra`.
    pub fn mean_at(
        &self,
        q: usize,
        loc: &[f64],
        extra: &BTreeMap<String, Vec<f64>>,
        row: usize,
    ) -> Result<f64> {
        let Some(m) = &self.nodes[q].mean else {
            return Ok(0.0);
        };
        let mut mu = 0.0;
        for (name, beta) in m.covariates.iter().zip(&m.coefficients) {
            let x = covariate(name, loc, extra, row).ok_or_else(|| {
                Error::Config(format!(
                    "node '{}': covariate column '{name}' is missing",
                    self.nodes[q].name
                ))
            })?;
            mu += x * beta;
        }
        Ok(mu)
    }
}

fn covariate(name: &str, loc: &[f64], extra: &BTreeMap<String, Vec<f64>>, row: usize) -> Option<f64> {
    if let Some(col) = extra.get(name) {
        return col.get(row).copied();
    }
    match name {
        "const" | "intercept" => Some(1.0),
        "x" => loc.first().copied(),
        "y" => loc.get(1).copied(),
        "z" => loc.get(2).copied(),
        _ => None,
    }
}

/// Mean vector over all grid vertices, stacked by node. `covariates` columns have
/// one entry per vertex.
pub fn apply_mean(model: &JointModel, covariates: &BTreeMap<String, Vec<f64>>) -> Result<DVector<f64>> {
    let grid = model.grid();
    let net = model.network();
    let n = grid.len();
    for (name, col) in covariates {
        if col.len() != n {
            return Err(Error::Config(format!(
                "covariate column '{name}' has {} entries for {n} vertices",
                col.len()
            )));
        }
    }
    let mut mu = DVector::zeros(n * net.len());
    for q in 0..net.len() {
        if net.node(q).mean.is_none() {
            continue;
        }
        for k in 0..n {
            mu[q * n + k] = net.mean_at(q, grid.vertex(k), covariates, k)?;
        }
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::regular_grid;

    fn m(v: f64) -> MaternParams {
        MaternParams::new(v, 10.0, 1.5).unwrap()
    }

    #[test]
    fn network_rejects_forward_and_duplicate_parents() {
        let bad = vec![Node::new("a", m(1.0)).with_parent(0, InteractionSpec::Zero)];
        assert!(ProcessNetwork::new(bad).is_err());
        let dup = vec![
            Node::new("a", m(1.0)),
            Node::new("b", m(1.0))
                .with_parent(0, InteractionSpec::Zero)
                .with_parent(0, InteractionSpec::Zero),
        ];
        assert!(ProcessNetwork::new(dup).is_err());
        let neg = vec![Node::new("a", m(1.0)).with_noise(-1.0)];
        assert!(matches!(ProcessNetwork::new(neg), Err(Error::ParameterDomain(_))));
    }

    #[test]
    fn means_from_builtin_and_user_covariates() {
        let grid = regular_grid(&[(-1.0, 1.0)], &[5]).unwrap();
        let none = ProcessNetwork::bivariate(m(1.0), m(0.5), InteractionSpec::Zero).unwrap();
        let model = assemble_dag(&grid, &none).unwrap();
        assert!(apply_mean(&model, &BTreeMap::new()).unwrap().iter().all(|&v| v == 0.0));

        let net = ProcessNetwork::new(vec![
            Node::new("a", m(1.0)).with_mean(vec!["const".into()], vec![2.5]),
            Node::new("b", m(1.0)).with_mean(vec!["const".into(), "x".into()], vec![1.0, 2.0]),
        ])
        .unwrap();
        let model = assemble_dag(&grid, &net).unwrap();
        let mu = apply_mean(&model, &BTreeMap::new()).unwrap();
        for k in 0..5 {
            assert_eq!(mu[k], 2.5);
            assert!((mu[5 + k] - (1.0 + 2.0 * grid.vertex(k)[0])).abs() < 1e-15);
        }

        let net = ProcessNetwork::new(vec![
            Node::new("a", m(1.0)).with_mean(vec!["elev".into()], vec![1.0])
        ])
        .unwrap();
        let model = assemble_dag(&grid, &net).unwrap();
        assert!(matches!(apply_mean(&model, &BTreeMap::new()), Err(Error::Config(_))));
        let cov = BTreeMap::from([("elev".to_string(), vec![3.0; 5])]);
        assert_eq!(apply_mean(&model, &cov).unwrap()[4], 3.0);
    }
}

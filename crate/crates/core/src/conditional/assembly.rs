use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::ProcessNetwork;
use crate::csvio::fmt_f64;
use crate::domain::Grid;
use crate::kernels::{InteractionSpec, MaternParams};
use crate::linalg::{cholesky_jittered, Factor, JitterPolicy};
use crate::{Error, Result};

/// Discretized interaction operator `B`, with `(BY)_k ≈ ∫ b(s_k, v) Y(v) dv`.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionMatrix {
    Zero,
    /// `A·I`, from a Dirac interaction.
    Scaled(f64),
    /// Entries `b(s_k, s_l)·η_l`.
    Dense(DMatrix<f64>),
}

impl InteractionMatrix {
    pub fn build(grid: &Grid, spec: &InteractionSpec) -> Self {
        match spec {
            InteractionSpec::Zero => InteractionMatrix::Zero,
            InteractionSpec::Dirac { amplitude } => InteractionMatrix::Scaled(*amplitude),
            _ => {
                let n = grid.len();
                let rows: Vec<Vec<f64>> = (0..n)
                    .into_par_iter()
                    .map(|k| {
                        let s = grid.vertex(k);
                        grid.vertices()
                            .zip(grid.weights())
                            .map(|(v, w)| spec.eval_unchecked(s, v) * w)
                            .collect()
                    })
                    .collect();
                InteractionMatrix::Dense(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        match self {
            InteractionMatrix::Zero => DMatrix::zeros(n, n),
            InteractionMatrix::Scaled(a) => DMatrix::identity(n, n) * *a,
            InteractionMatrix::Dense(b) => b.clone(),
        }
    }

    /// `B·M`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InteractionMatrix::Zero => DMatrix::zeros(m.nrows(), m.ncols()),
            InteractionMatrix::Scaled(a) => m * *a,
            InteractionMatrix::Dense(b) => b * m,
        }
    }

    /// `M·Bᵀ`.
    pub fn right_mul_t(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InteractionMatrix::Zero => DMatrix::zeros(m.nrows(), m.ncols()),
            InteractionMatrix::Scaled(a) => m * *a,
            InteractionMatrix::Dense(b) => m * b.transpose(),
        }
    }

    /// `B·x`.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            InteractionMatrix::Zero => DVector::zeros(x.len()),
            InteractionMatrix::Scaled(a) => x * *a,
            InteractionMatrix::Dense(b) => b * x,
        }
    }
}

/// Interaction matrix for `spec` on `grid`, as a dense `n×n` matrix.
pub fn build_interaction_matrix(grid: &Grid, spec: &InteractionSpec) -> Result<DMatrix<f64>> {
    spec.validate(grid.dim())?;
    Ok(InteractionMatrix::build(grid, spec).to_dense(grid.len()))
}

/// Matérn covariance between all pairs of grid vertices.
pub(crate) fn kernel_matrix(grid: &Grid, p: &MaternParams) -> DMatrix<f64> {
    let n = grid.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = grid.vertex(i);
            (i..n)
                .map(|j| p.covariance(grid.distance(s, grid.vertex(j))))
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    m
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn vertex_key(loc: &[f64]) -> Vec<u64> {
    loc.iter().map(|x| (x + 0.0).to_bits()).collect()
}

/// Assembled covariance of all nodes on the grid.
#[derive(Debug, Clone)]
pub struct JointModel {
    grid: Grid,
    network: ProcessNetwork,
    /// Process covariance without nuggets, blocks ordered by node.
    joint: DMatrix<f64>,
    interactions: Vec<Vec<InteractionMatrix>>,
    jitter: JitterPolicy,
    vertices: HashMap<Vec<u64>, usize>,
}

impl JointModel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn network(&self) -> &ProcessNetwork {
        &self.network
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn p(&self) -> usize {
        self.network.len()
    }

    pub fn jitter_policy(&self) -> JitterPolicy {
        self.jitter
    }

    pub fn set_jitter_policy(&mut self, policy: JitterPolicy) {
        self.jitter = policy;
    }

    /// Interaction matrix of the `e`-th parent edge of node `q`.
    pub fn interaction(&self, q: usize, e: usize) -> &InteractionMatrix {
        &self.interactions[q][e]
    }

    /// Nugget-free joint covariance.
    pub fn process_matrix(&self) -> &DMatrix<f64> {
        &self.joint
    }

    /// Joint covariance with nuggets on the diagonal blocks.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = self.joint.clone();
        let n = self.n();
        for (q, node) in self.network.nodes().iter().enumerate() {
            for k in 0..n {
                m[(q * n + k, q * n + k)] += node.nugget;
            }
        }
        m
    }

    /// Block `C_qr`, with the nugget on the diagonal when `q == r`.
    pub fn block(&self, q: usize, r: usize) -> DMatrix<f64> {
        let n = self.n();
        let mut b = self.joint.view((q * n, r * n), (n, n)).into_owned();
        if q == r {
            for k in 0..n {
                b[(k, k)] += self.network.node(q).nugget;
            }
        }
        b
    }

    pub(crate) fn vertex_of(&self, loc: &[f64]) -> Option<usize> {
        self.vertices.get(&vertex_key(loc)).copied()
    }

    /// Cholesky factor of the full matrix under the model's jitter policy.
    pub fn factor(&self) -> Result<Factor> {
        cholesky_jittered(&self.matrix(), self.jitter).map_err(|jitter| Error::InvalidModel {
            context: format!("joint matrix of {} nodes on {} vertices", self.p(), self.n()),
            jitter,
        })
    }

    /// Writes the joint matrix (with nuggets) as CSV with labelled columns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let m = self.matrix();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let header: Vec<String> = self
            .network
            .nodes()
            .iter()
            .flat_map(|node| (0..self.n()).map(move |k| format!("{}[{k}]", node.name)))
            .collect();
        w.write_record(&header)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        for i in 0..m.nrows() {
            let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
            w.write_record(&row)
                .map_err(|e| Error::parse(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn prepare(grid: &Grid, net: &ProcessNetwork) -> Result<Vec<Vec<InteractionMatrix>>> {
    net.validate_dim(grid.dim())?;
    Ok(net
        .nodes()
        .iter()
        .map(|node| {
            node.parents
                .iter()
                .map(|e| InteractionMatrix::build(grid, &e.interaction))
                .collect()
        })
        .collect())
}

fn finish(
    grid: &Grid,
    net: &ProcessNetwork,
    blocks: Vec<Vec<DMatrix<f64>>>,
    interactions: Vec<Vec<InteractionMatrix>>,
    policy: JitterPolicy,
) -> JointModel {
    let n = grid.len();
    let p = net.len();
    let mut joint = DMatrix::zeros(n * p, n * p);
    for (q, row) in blocks.iter().enumerate() {
        for (r, b) in row.iter().enumerate() {
            joint.view_mut((q * n, r * n), (n, n)).copy_from(b);
        }
    }
    let vertices = grid
        .vertices()
        .enumerate()
        .map(|(k, v)| (vertex_key(v), k))
        .collect();
    JointModel {
        grid: grid.clone(),
        network: net.clone(),
        joint,
        interactions,
        jitter: policy,
        vertices,
    }
}

/// Assembles without the final positive-definiteness check.
pub(crate) fn assemble_unchecked(
    grid: &Grid,
    net: &ProcessNetwork,
    policy: JitterPolicy,
) -> Result<JointModel> {
    let interactions = prepare(grid, net)?;
    let n = grid.len();
    let p = net.len();
    let mut blocks: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); p];
    for q in 0..p {
        let node = net.node(q);
        let sigma = kernel_matrix(grid, &node.cov);
        // cross blocks C_rq for every earlier node r
        let mut cross = Vec::with_capacity(q);
        for r in 0..q {
            let mut acc: Option<DMatrix<f64>> = None;
            for (e, b) in node.parents.iter().zip(&interactions[q]) {
                let term = b.right_mul_t(&blocks[r][e.parent]);
                acc = Some(match acc {
                    None => term,
                    Some(a) => a + term,
                });
            }
            cross.push(acc.unwrap_or_else(|| DMatrix::zeros(n, n)));
        }
        let mut explained: Option<DMatrix<f64>> = None;
        for (e, b) in node.parents.iter().zip(&interactions[q]) {
            let term = b.left_mul(&cross[e.parent]);
            explained = Some(match explained {
                None => term,
                Some(a) => a + term,
            });
        }
        let cqq = match explained {
            None => sigma,
            Some(x) => symmetrized(x + sigma),
        };
        for (r, c) in cross.into_iter().enumerate() {
            blocks[q].push(c.transpose());
            blocks[r].push(c);
        }
        blocks[q].push(cqq);
    }
    Ok(finish(grid, net, blocks, interactions, policy))
}

/// Joint covariance of a network of any size, built node by node in topological order.
pub fn assemble_dag(grid: &Grid, net: &ProcessNetwork) -> Result<JointModel> {
    assemble_dag_with(grid, net, JitterPolicy::default())
}

pub fn assemble_dag_with(
    grid: &Grid,
    net: &ProcessNetwork,
    policy: JitterPolicy,
) -> Result<JointModel> {
    let model = assemble_unchecked(grid, net, policy)?;
    model.factor()?;
    Ok(model)
}

/// Two-node joint covariance `[Σ11, Σ11Bᵀ; BΣ11, Σ2|1 + BΣ11Bᵀ]`.
pub fn assemble_bivariate(grid: &Grid, net: &ProcessNetwork) -> Result<JointModel> {
    if net.len() != 2 {
        return Err(Error::Validation(format!(
            "bivariate assembly needs 2 nodes, got {}",
            net.len()
        )));
    }
    let interactions = prepare(grid, net)?;
    let child = net.node(1);
    let s11 = kernel_matrix(grid, &net.node(0).cov);
    let s2_1 = kernel_matrix(grid, &child.cov);
    let (c12, c22) = match interactions[1].first() {
        None => (DMatrix::zeros(grid.len(), grid.len()), s2_1),
        Some(b) => {
            let c12 = b.right_mul_t(&s11);
            let c22 = symmetrized(b.left_mul(&c12) + s2_1);
            (c12, c22)
        }
    };
    let blocks = vec![vec![s11, c12.clone()], vec![c12.transpose(), c22]];
    let model = finish(grid, net, blocks, interactions, JitterPolicy::default());
    model.factor()?;
    Ok(model)
}

//! Named model parameters and their optimizer transforms.

use crate::conditional::{Node, ProcessNetwork};
use crate::kernels::InteractionSpec;
use crate::{Error, Result};

/// Smoothness bounds applied on the optimizer scale.
pub const SMOOTHNESS_RANGE: (f64, f64) = (0.05, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Variance,
    Scale,
    Smoothness,
    Nugget,
    Noise,
    Amplitude,
    Aperture,
    Shift(usize),
}

impl Slot {
    fn parse(s: &str) -> Option<Slot> {
        Some(match s {
            "variance" => Slot::Variance,
            "scale" => Slot::Scale,
            "smoothness" => Slot::Smoothness,
            "nugget" => Slot::Nugget,
            "noise" => Slot::Noise,
            "amplitude" => Slot::Amplitude,
            "aperture" => Slot::Aperture,
            _ => {
                let k: usize = s.strip_prefix("shift")?.parse().ok()?;
                if k == 0 {
                    return None;
                }
                Slot::Shift(k - 1)
            }
        })
    }

    fn logged(self) -> bool {
        !matches!(self, Slot::Amplitude | Slot::Shift(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ParamRef {
    node: usize,
    edge: Option<usize>,
    slot: Slot,
}

/// Every parameter present in `net`, in node order.
///
/// Node parameters are `{node}.variance|scale|smoothness|nugget|noise`; edge parameters
/// are `{child}.{parent}.amplitude|aperture|shift1..`.
pub fn parameter_names(net: &ProcessNetwork) -> Vec<String> {
    let mut out = Vec::new();
    for node in net.nodes() {
        for s in ["variance", "scale", "smoothness", "nugget", "noise"] {
            out.push(format!("{}.{s}", node.name));
        }
        for e in &node.parents {
            let pre = format!("{}.{}", node.name, net.node(e.parent).name);
            match &e.interaction {
                InteractionSpec::Dirac { .. } => out.push(format!("{pre}.amplitude")),
                InteractionSpec::Bisquare { .. } => {
                    out.push(format!("{pre}.amplitude"));
                    out.push(format!("{pre}.aperture"));
                }
                InteractionSpec::ShiftedBisquare { shift, .. } => {
                    out.push(format!("{pre}.amplitude"));
                    out.push(format!("{pre}.aperture"));
                    for k in 0..shift.len() {
                        out.push(format!("{pre}.shift{}", k + 1));
                    }
                }
                InteractionSpec::Zero | InteractionSpec::Tabulated(_) => {}
            }
        }
    }
    out
}

fn resolve(net: &ProcessNetwork, name: &str) -> Result<ParamRef> {
    let unknown = || {
        Error::Config(format!(
            "unknown parameter '{name}'; available: {}",
            parameter_names(net).join(", ")
        ))
    };
    let parts: Vec<&str> = name.split('.').collect();
    let slot = Slot::parse(parts.last().copied().unwrap_or("")).ok_or_else(unknown)?;
    let r = match parts.as_slice() {
        [node, _] => ParamRef {
            node: net.index_of(node).ok_or_else(unknown)?,
            edge: None,
            slot,
        },
        [child, parent, _] => {
            let q = net.index_of(child).ok_or_else(unknown)?;
            let p = net.index_of(parent).ok_or_else(unknown)?;
            let e = net
                .node(q)
                .parents
                .iter()
                .position(|e| e.parent == p)
                .ok_or_else(unknown)?;
            ParamRef {
                node: q,
                edge: Some(e),
                slot,
            }
        }
        _ => return Err(unknown()),
    };
    if read(net.nodes(), r).is_none() {
        return Err(unknown());
    }
    Ok(r)
}

fn read(nodes: &[Node], r: ParamRef) -> Option<f64> {
    let node = &nodes[r.node];
    match r.edge {
        None => Some(match r.slot {
            Slot::Variance => node.cov.variance,
            Slot::Scale => node.cov.scale,
            Slot::Smoothness => node.cov.smoothness,
            Slot::Nugget => node.nugget,
            Slot::Noise => node.noise,
            _ => return None,
        }),
        Some(e) => match (&node.parents[e].interaction, r.slot) {
            (InteractionSpec::Dirac { amplitude }, Slot::Amplitude)
            | (InteractionSpec::Bisquare { amplitude, .. }, Slot::Amplitude)
            | (InteractionSpec::ShiftedBisquare { amplitude, .. }, Slot::Amplitude) => {
                Some(*amplitude)
            }
            (InteractionSpec::Bisquare { aperture, .. }, Slot::Aperture)
            | (InteractionSpec::ShiftedBisquare { aperture, .. }, Slot::Aperture) => Some(*aperture),
            (InteractionSpec::ShiftedBisquare { shift, .. }, Slot::Shift(k)) => shift.get(k).copied(),
            _ => None,
        },
    }
}

fn write(nodes: &mut [Node], r: ParamRef, v: f64) {
    let node = &mut nodes[r.node];
    match r.edge {
        None => match r.slot {
            Slot::Variance => node.cov.variance = v,
            Slot::Scale => node.cov.scale = v,
            Slot::Smoothness => node.cov.smoothness = v,
            Slot::Nugget => node.nugget = v,
            Slot::Noise => node.noise = v,
            _ => {}
        },
        Some(e) => match (&mut node.parents[e].interaction, r.slot) {
            (InteractionSpec::Dirac { amplitude }, Slot::Amplitude)
            | (InteractionSpec::Bisquare { amplitude, .. }, Slot::Amplitude)
            | (InteractionSpec::ShiftedBisquare { amplitude, .. }, Slot::Amplitude) => {
                *amplitude = v
            }
            (InteractionSpec::Bisquare { aperture, .. }, Slot::Aperture)
            | (InteractionSpec::ShiftedBisquare { aperture, .. }, Slot::Aperture) => *aperture = v,
            (InteractionSpec::ShiftedBisquare { shift, .. }, Slot::Shift(k)) => shift[k] = v,
            _ => {}
        },
    }
}

pub fn get_parameter(net: &ProcessNetwork, name: &str) -> Result<f64> {
    let r = resolve(net, name)?;
    Ok(read(net.nodes(), r).expect("resolved parameter is readable"))
}

/// Copy of `net` with the named parameters replaced.
pub fn with_parameters(net: &ProcessNetwork, values: &[(String, f64)]) -> Result<ProcessNetwork> {
    let refs = values
        .iter()
        .map(|(n, _)| resolve(net, n))
        .collect::<Result<Vec<_>>>()?;
    let mut nodes = net.nodes().to_vec();
    for (r, (_, v)) in refs.into_iter().zip(values) {
        write(&mut nodes, r, *v);
    }
    ProcessNetwork::new(nodes)
}

/// Map between the free parameters of a network and unconstrained optimizer coordinates.
#[derive(Debug, Clone)]
pub struct ParameterMap {
    base: ProcessNetwork,
    names: Vec<String>,
    refs: Vec<ParamRef>,
}

impl ParameterMap {
    pub fn new(base: &ProcessNetwork, free: &[String]) -> Result<Self> {
        if free.is_empty() {
            return Err(Error::Config("at least one parameter must be free".into()));
        }
        let mut refs = Vec::with_capacity(free.len());
        for (i, name) in free.iter().enumerate() {
            if free[..i].contains(name) {
                return Err(Error::Config(format!("parameter '{name}' listed twice")));
            }
            refs.push(resolve(base, name)?);
        }
        Ok(ParameterMap {
            base: base.clone(),
            names: free.to_vec(),
            refs,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn base(&self) -> &ProcessNetwork {
        &self.base
    }

    /// Optimizer coordinates of the base values. Zero-valued log-scale parameters
    /// (typically a nugget) start at a thousandth of their node's variance.
    pub fn initial(&self) -> Result<Vec<f64>> {
        self.refs
            .iter()
            .zip(&self.names)
            .map(|(&r, name)| {
                let v = read(self.base.nodes(), r).expect("resolved");
                if !v.is_finite() {
                    return Err(Error::Config(format!("initial value of '{name}' is not finite")));
                }
                if !r.slot.logged() {
                    return Ok(v);
                }
                if v < 0.0 {
                    return Err(Error::ParameterDomain(format!(
                        "initial value of '{name}' must be positive, got {v}"
                    )));
                }
                let v = if v > 0.0 {
                    v
                } else {
                    1e-3 * self.base.node(r.node).cov.variance
                };
                Ok(self.clamp(r, v.ln()))
            })
            .collect()
    }

    fn clamp(&self, r: ParamRef, x: f64) -> f64 {
        if r.slot == Slot::Smoothness && r.edge.is_none() {
            x.clamp(SMOOTHNESS_RANGE.0.ln(), SMOOTHNESS_RANGE.1.ln())
        } else {
            x
        }
    }

    /// Natural-scale values of optimizer coordinates `x`.
    pub fn natural(&self, x: &[f64]) -> Vec<f64> {
        self.refs
            .iter()
            .zip(x)
            .map(|(&r, &x)| if r.slot.logged() { self.clamp(r, x).exp() } else { x })
            .collect()
    }

    /// Initial simplex edge lengths.
    pub fn steps(&self, x0: &[f64]) -> Vec<f64> {
        self.refs
            .iter()
            .zip(x0)
            .map(|(r, x)| if r.slot.logged() { 0.25 } else { 0.25 * x.abs().max(0.4) })
            .collect()
    }

    pub fn network(&self, x: &[f64]) -> Result<ProcessNetwork> {
        let mut nodes = self.base.nodes().to_vec();
        for (&r, v) in self.refs.iter().zip(self.natural(x)) {
            write(&mut nodes, r, v);
        }
        ProcessNetwork::new(nodes)
    }
}

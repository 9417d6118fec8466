//! Small feedforward tanh network used as the controlled plant.
//!
//! Every non-input node outputs `tanh` of the weighted sum of its enabled
//! incoming edges. There are no biases; each edge owns exactly one weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Hidden,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self { id: id.into(), kind }
    }
}

/// Directed edge between two nodes (by position in the node list), carrying
/// weight `weight` (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    inputs: Vec<usize>,
    output: usize,
    /// Non-input nodes in evaluation order.
    order: Vec<usize>,
    /// Incoming edge positions for every node.
    incoming: Vec<Vec<usize>>,
    weights: Vec<f64>,
    mask: Vec<bool>,
    w_max: f64,
}

impl FeedforwardNet {
    /// Builds a network with all weights zero and every edge enabled.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, w_max: f64) -> Result<Self> {
        if !(w_max.is_finite() && w_max > 0.0) {
            return Err(Error::invalid("w_max", format!("must be > 0, got {w_max}")));
        }
        let n = nodes.len();
        let inputs: Vec<usize> = (0..n).filter(|&i| nodes[i].kind == NodeKind::Input).collect();
        if inputs.is_empty() {
            return Err(Error::InvalidTopology("no input node".into()));
        }
        let outputs: Vec<usize> = (0..n).filter(|&i| nodes[i].kind == NodeKind::Output).collect();
        if outputs.len() != 1 {
            return Err(Error::InvalidTopology(format!(
                "expected exactly one output node, found {}",
                outputs.len()
            )));
        }
        for (i, a) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidTopology(format!("duplicate node id `{}`", a.id)));
            }
        }

        let q = edges.len();
        let mut seen = vec![false; q];
        let mut incoming = vec![Vec::new(); n];
        for (pos, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidTopology(format!("edge {pos} references an unknown node")));
            }
            if nodes[e.to].kind == NodeKind::Input {
                return Err(Error::InvalidTopology(format!(
                    "edge {pos} targets input node `{}`",
                    nodes[e.to].id
                )));
            }
            if nodes[e.from].kind == NodeKind::Output {
                return Err(Error::InvalidTopology(format!(
                    "edge {pos} leaves output node `{}`",
                    nodes[e.from].id
                )));
            }
            if e.weight >= q || seen[e.weight] {
                return Err(Error::InvalidTopology(format!(
                    "weight indices must be a permutation of 0..{q}, edge {pos} has {}",
                    e.weight
                )));
            }
            seen[e.weight] = true;
            incoming[e.to].push(pos);
        }

        // Kahn's algorithm, lowest node position first for a stable order.
        let mut indegree: Vec<usize> = incoming.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        let mut order = Vec::with_capacity(n);
        while let Some(node) = ready.pop_first() {
            visited += 1;
            if nodes[node].kind != NodeKind::Input {
                order.push(node);
            }
            for e in edges.iter().filter(|e| e.from == node) {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    ready.insert(e.to);
                }
            }
        }
        if visited != n {
            return Err(Error::InvalidTopology("graph contains a cycle".into()));
        }

        Ok(Self {
            nodes,
            edges,
            inputs,
            output: outputs[0],
            order,
            incoming,
            weights: vec![0.0; q],
            mask: vec![true; q],
            w_max,
        })
    }

    /// Two inputs, two hidden nodes and one output, seven weights:
    /// `W1..W4` input to hidden, `W5, W6` hidden to output and `W7` a skip
    /// connection from `x1` to the output.
    pub fn default_topology() -> Self {
        let nodes = vec![
            Node::new("x1", NodeKind::Input),
            Node::new("x2", NodeKind::Input),
            Node::new("h1", NodeKind::Hidden),
            Node::new("h2", NodeKind::Hidden),
            Node::new("y", NodeKind::Output),
        ];
        let wiring = [(0, 2), (1, 2), (0, 3), (1, 3), (2, 4), (3, 4), (0, 4)];
        let edges = wiring
            .iter()
            .enumerate()
            .map(|(weight, &(from, to))| Edge { from, to, weight })
            .collect();
        Self::new(nodes, edges, 1.0).expect("default topology is valid")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    /// Number of tanh nodes.
    pub fn neuron_count(&self) -> usize {
        self.order.len()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn set_w_max(&mut self, w_max: f64) -> Result<()> {
        if !(w_max.is_finite() && w_max > 0.0) {
            return Err(Error::invalid("w_max", format!("must be > 0, got {w_max}")));
        }
        self.w_max = w_max;
        for w in &mut self.weights {
            *w = w.clamp(-w_max, w_max);
        }
        Ok(())
    }

    pub fn is_enabled(&self, index: usize) -> Result<bool> {
        self.check_index(index)?;
        Ok(self.mask[index])
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.weights.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.weights.len(),
            })
        }
    }

    /// Stores `value` projected onto `[-w_max, w_max]`.
    pub fn set_weight(&mut self, index: usize, value: f64) -> Result<()> {
        self.check_index(index)?;
        if value.is_nan() {
            return Err(Error::invalid("weight", "NaN"));
        }
        self.weights[index] = value.clamp(-self.w_max, self.w_max);
        Ok(())
    }

    pub fn set_mask(&mut self, index: usize, enabled: bool) -> Result<()> {
        self.check_index(index)?;
        self.mask[index] = enabled;
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.len(),
                got: x.len(),
            });
        }
        let mut value = vec![0.0; self.nodes.len()];
        for (&node, &xi) in self.inputs.iter().zip(x) {
            value[node] = xi;
        }
        for &node in &self.order {
            let mut sum = 0.0;
            for &pos in &self.incoming[node] {
                let e = self.edges[pos];
                if self.mask[e.weight] {
                    sum += self.weights[e.weight] * value[e.from];
                }
            }
            value[node] = sum.tanh();
        }
        Ok(value[self.output])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl TrainingSample {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        let sample = Self { x, y };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.iter().chain(std::iter::once(&self.y)).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("sample", "training values must be finite"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_topology_shape() {
        let net = FeedforwardNet::default_topology();
        assert_eq!(net.weight_count(), 7);
        assert_eq!(net.input_count(), 2);
        assert_eq!(net.neuron_count(), 3);
        assert_eq!(net.w_max(), 1.0);
        assert!(net.weights().iter().all(|&w| w == 0.0));
        assert!(net.mask().iter().all(|&m| m));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = FeedforwardNet::default_topology();
        assert_eq!(net.forward(&[0.2, 0.6]).unwrap(), 0.0);
        assert_eq!(net.forward(&[-3.0, 9.0]).unwrap(), 0.0);
    }

    #[test]
    fn hidden_to_output_alone_is_zero() {
        let mut net = FeedforwardNet::default_topology();
        net.set_weight(4, 1.0).unwrap();
        assert_eq!(net.forward(&[0.5, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn single_path_hand_evaluation() {
        let mut net = FeedforwardNet::default_topology();
        net.set_weight(0, 1.0).unwrap();
        net.set_weight(4, 1.0).unwrap();
        let y = net.forward(&[0.5, -0.3]).unwrap();
        let inner = 0.5f64.tanh();
        approx::assert_abs_diff_eq!(inner, 0.462_117_157_260_009_8, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(y, inner.tanh(), epsilon = 1e-15);
        // mpmath oracle
        approx::assert_abs_diff_eq!(y, 0.431_808_180_595_096, epsilon = 1e-15);
    }

    #[test]
    fn set_weight_clamps() {
        let mut net = FeedforwardNet::default_topology();
        net.set_weight(0, 1.7).unwrap();
        assert_eq!(net.weights()[0], 1.0);
        net.set_weight(1, -4.0).unwrap();
        assert_eq!(net.weights()[1], -1.0);
        assert!(matches!(
            net.set_weight(7, 0.0),
            Err(Error::IndexOutOfRange { index: 7, len: 7 })
        ));
        assert!(net.set_mask(9, false).is_err());
        assert!(net.set_weight(0, f64::NAN).is_err());
    }

    #[test]
    fn mask_toggle_restores_output() {
        let mut net = FeedforwardNet::default_topology();
        for (i, w) in [0.3, -0.7, 0.9, 0.1, 0.5, -0.4, 0.8].into_iter().enumerate() {
            net.set_weight(i, w).unwrap();
        }
        let x = [0.2, 0.6];
        let before = net.forward(&x).unwrap();
        net.set_mask(6, false).unwrap();
        let masked = net.forward(&x).unwrap();
        let mut zeroed = net.clone();
        zeroed.set_mask(6, true).unwrap();
        zeroed.set_weight(6, 0.0).unwrap();
        assert_eq!(masked.to_bits(), zeroed.forward(&x).unwrap().to_bits());
        net.set_mask(6, true).unwrap();
        assert_eq!(net.forward(&x).unwrap().to_bits(), before.to_bits());
    }

    #[test]
    fn dimension_mismatch() {
        let net = FeedforwardNet::default_topology();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn rejects_cycles_and_bad_wiring() {
        let nodes = || {
            vec![
                Node::new("x", NodeKind::Input),
                Node::new("a", NodeKind::Hidden),
                Node::new("b", NodeKind::Hidden),
                Node::new("y", NodeKind::Output),
            ]
        };
        let cyclic = vec![
            Edge {
                from: 0,
                to: 1,
                weight: 0,
            },
            Edge {
                from: 1,
                to: 2,
                weight: 1,
            },
            Edge {
                from: 2,
                to: 1,
                weight: 2,
            },
            Edge {
                from: 2,
                to: 3,
                weight: 3,
            },
        ];
        assert!(matches!(
            FeedforwardNet::new(nodes(), cyclic, 1.0),
            Err(Error::InvalidTopology(_))
        ));
        let into_input = vec![Edge {
            from: 1,
            to: 0,
            weight: 0,
        }];
        assert!(FeedforwardNet::new(nodes(), into_input, 1.0).is_err());
        let dup_weight = vec![
            Edge {
                from: 0,
                to: 1,
                weight: 0,
            },
            Edge {
                from: 1,
                to: 3,
                weight: 0,
            },
        ];
        assert!(FeedforwardNet::new(nodes(), dup_weight, 1.0).is_err());
        let mut two_outputs = nodes();
        two_outputs[2].kind = NodeKind::Output;
        assert!(FeedforwardNet::new(two_outputs, vec![], 1.0).is_err());
        assert!(FeedforwardNet::new(nodes(), vec![], 0.0).is_err());
    }

    #[test]
    fn topological_order_is_independent_of_listing() {
        // output listed before the hidden node it depends on
        let nodes = vec![
            Node::new("y", NodeKind::Output),
            Node::new("x", NodeKind::Input),
            Node::new("h", NodeKind::Hidden),
        ];
        let edges = vec![
            Edge {
                from: 2,
                to: 0,
                weight: 1,
            },
            Edge {
                from: 1,
                to: 2,
                weight: 0,
            },
        ];
        let mut net = FeedforwardNet::new(nodes, edges, 1.0).unwrap();
        net.set_weight(0, 0.8).unwrap();
        net.set_weight(1, 0.6).unwrap();
        let y = net.forward(&[0.5]).unwrap();
        assert_eq!(y, (0.6 * (0.8f64 * 0.5).tanh()).tanh());
    }
}

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal, seeded};

/// Shape of a hierarchical composition model. Leaves read one input
/// coordinate; internal nodes combine their children with a smooth function
/// of arity `children.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", deny_unknown_fields)]
pub enum HcmSpec {
    Leaf { index: usize },
    Constant { value: f64 },
    /// Plain sum of the children.
    Sum { children: Vec<HcmSpec> },
    /// Seeded random polynomial-plus-sine combiner, tagged with smoothness `s`.
    Smooth { smoothness: f64, children: Vec<HcmSpec> },
}

impl HcmSpec {
    pub fn leaf(index: usize) -> Self {
        HcmSpec::Leaf { index }
    }

    /// Complete tree of `Smooth` nodes with the given level and arity; leaves
    /// cycle through the `inputs` coordinates.
    pub fn balanced(level: usize, arity: usize, inputs: usize, smoothness: f64) -> Self {
        fn build(level: usize, arity: usize, inputs: usize, s: f64, next: &mut usize) -> HcmSpec {
            if level == 0 {
                let index = *next % inputs.max(1);
                *next += 1;
                return HcmSpec::Leaf { index };
            }
            HcmSpec::Smooth {
                smoothness: s,
                children: (0..arity).map(|_| build(level - 1, arity, inputs, s, next)).collect(),
            }
        }
        build(level, arity, inputs, smoothness, &mut 0)
    }

    /// Leaves have level 0; a node is one above its deepest child.
    pub fn level(&self) -> usize {
        match self {
            HcmSpec::Leaf { .. } | HcmSpec::Constant { .. } => 0,
            HcmSpec::Sum { children } | HcmSpec::Smooth { children, .. } => {
                1 + children.iter().map(HcmSpec::level).max().unwrap_or(0)
            }
        }
    }

    /// Number of input coordinates read (largest leaf index + 1).
    pub fn inputs(&self) -> usize {
        match self {
            HcmSpec::Leaf { index } => index + 1,
            HcmSpec::Constant { .. } => 0,
            HcmSpec::Sum { children } | HcmSpec::Smooth { children, .. } => {
                children.iter().map(HcmSpec::inputs).max().unwrap_or(0)
            }
        }
    }

    /// `(s, p)` for every internal node, in post-order. Sums count as
    /// infinitely smooth.
    pub fn constraint_set(&self) -> Vec<(f64, usize)> {
        let mut out = Vec::new();
        self.collect_constraints(&mut out);
        out
    }

    fn collect_constraints(&self, out: &mut Vec<(f64, usize)>) {
        match self {
            HcmSpec::Leaf { .. } | HcmSpec::Constant { .. } => {}
            HcmSpec::Sum { children } => {
                children.iter().for_each(|c| c.collect_constraints(out));
                out.push((f64::INFINITY, children.len()));
            }
            HcmSpec::Smooth { smoothness, children } => {
                children.iter().for_each(|c| c.collect_constraints(out));
                out.push((*smoothness, children.len()));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HcmSpec::Leaf { .. } => Ok(()),
            HcmSpec::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidSpec(format!("constant {value} is not finite")))
            }
            HcmSpec::Constant { .. } => Ok(()),
            HcmSpec::Sum { children } | HcmSpec::Smooth { children, .. } => {
                if children.is_empty() {
                    return Err(Error::InvalidSpec("internal HCM node without children".into()));
                }
                if let HcmSpec::Smooth { smoothness, .. } = self {
                    if !(*smoothness > 0.0 && smoothness.is_finite()) {
                        return Err(Error::InvalidSpec(format!("smoothness {smoothness} must be > 0")));
                    }
                }
                children.iter().try_for_each(HcmSpec::validate)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amplitude: f64,
    pub frequencies: Vec<f64>,
    pub phase: f64,
}

/// `h(x) = c + Σ lᵢxᵢ + Σ_{i≤j} q_{ij}xᵢxⱼ + Σ a·sin(wᵀx + φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combiner {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Upper triangle, row-major: `(0,0), (0,1), …, (1,1), …`.
    pub quadratic: Vec<f64>,
    pub sines: Vec<SineTerm>,
}

impl Combiner {
    fn random(p: usize, rng: &mut crate::rng::Rng) -> Self {
        let pf = p as f64;
        let constant = 0.1 * normal(rng);
        let linear = (0..p).map(|_| normal(rng) / pf.sqrt()).collect();
        let quadratic = (0..p * (p + 1) / 2).map(|_| 0.5 * normal(rng) / pf).collect();
        let sines = (0..2)
            .map(|_| SineTerm {
                amplitude: 0.5 * normal(rng),
                frequencies: (0..p).map(|_| normal(rng)).collect(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            })
            .collect();
        Self {
            constant,
            linear,
            quadratic,
            sines,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        v += self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut q = self.quadratic.iter();
        for i in 0..x.len() {
            for j in i..x.len() {
                v += q.next().copied().unwrap_or(0.0) * x[i] * x[j];
            }
        }
        for s in &self.sines {
            let arg: f64 = s.frequencies.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + s.phase;
            v += s.amplitude * arg.sin();
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HcmNode {
    Leaf { index: usize },
    Constant { value: f64 },
    Sum { children: Vec<usize> },
    Smooth { smoothness: f64, children: Vec<usize>, combiner: Combiner },
}

/// A materialized HCM. Nodes are stored children-first; the root is last.
#[derive(Debug, Clone, PartialEq)]
pub struct HcmFunction {
    nodes: Vec<HcmNode>,
    inputs: usize,
    level: usize,
    constraints: Vec<(f64, usize)>,
}

impl HcmFunction {
    pub fn nodes(&self) -> &[HcmNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn constraint_set(&self) -> &[(f64, usize)] {
        &self.constraints
    }

    /// `(s, p)` pair with the smallest `s / p`, the one that limits the rate.
    pub fn worst_pair(&self) -> Option<(f64, usize)> {
        self.constraints
            .iter()
            .copied()
            .min_by(|a, b| (a.0 / a.1 as f64).total_cmp(&(b.0 / b.1 as f64)))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() < self.inputs {
            return Err(Error::Dimension {
                expected: self.inputs,
                found: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.nodes.len());
        let mut args = Vec::new();
        for node in &self.nodes {
            let v = match node {
                HcmNode::Leaf { index } => x[*index],
                HcmNode::Constant { value } => *value,
                HcmNode::Sum { children } => children.iter().map(|&c| values[c]).sum(),
                HcmNode::Smooth { children, combiner, .. } => {
                    args.clear();
                    args.extend(children.iter().map(|&c| values[c]));
                    combiner.eval(&args)
                }
            };
            values.push(v);
        }
        Ok(values[self.root()])
    }

    /// Row-wise [`HcmFunction::evaluate`].
    pub fn evaluate_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = x[(i, j)];
                }
                self.evaluate(&row)
            })
            .collect()
    }
}

/// Draws every `Smooth` combiner from `seed`, in post-order.
pub fn gen_hcm_function(spec: &HcmSpec, seed: u64) -> Result<HcmFunction> {
    spec.validate()?;
    fn push(spec: &HcmSpec, rng: &mut crate::rng::Rng, nodes: &mut Vec<HcmNode>) -> usize {
        let node = match spec {
            HcmSpec::Leaf { index } => HcmNode::Leaf { index: *index },
            HcmSpec::Constant { value } => HcmNode::Constant { value: *value },
            HcmSpec::Sum { children } => HcmNode::Sum {
                children: children.iter().map(|c| push(c, rng, nodes)).collect(),
            },
            HcmSpec::Smooth { smoothness, children } => {
                let children: Vec<usize> = children.iter().map(|c| push(c, rng, nodes)).collect();
                HcmNode::Smooth {
                    smoothness: *smoothness,
                    combiner: Combiner::random(children.len(), rng),
                    children,
                }
            }
        };
        nodes.push(node);
        nodes.len() - 1
    }
    let mut rng = seeded(seed);
    let mut nodes = Vec::new();
    push(spec, &mut rng, &mut nodes);
    Ok(HcmFunction {
        nodes,
        inputs: spec.inputs(),
        level: spec.level(),
        constraints: spec.constraint_set(),
    })
}

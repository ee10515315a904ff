//! Network compiler: assigns one parametric gate kernel per connective,
//! compiles terms into weight-shared DAGs, and runs forward and reverse
//! passes over them.
//!
//! Weight sharing is structural: every gate of a connective reads the single
//! parameter slot registered for that connective in the [`ParameterStore`],
//! and reverse-mode gradients for a slot accumulate over all of its uses.
//! Identical subterms are compiled once (common-subexpression sharing), which
//! leaves forward values unchanged and keeps gradients correct through
//! accumulation.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relax::{gate_eval, gate_grad, GateKernel, RelaxError, Temperature};
use crate::theory::{Connective, Term, Theory};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetError {
    #[error("term is not well-formed over the model's theory and context")]
    MalformedTerm,
    #[error("no parameter slot for connective `{0}`")]
    MissingSlot(String),
    #[error("conflicting definitions for connective `{0}`")]
    SlotConflict(String),
    #[error("expected {expected} input values, got {found}")]
    InputArity { expected: usize, found: usize },
    #[error("expected {expected} upstream values, got {found}")]
    UpstreamArity { expected: usize, found: usize },
    #[error("graph expects {expected} inputs but predecessor produces {found} outputs")]
    CompositionArity { expected: usize, found: usize },
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("tape does not match this graph")]
    TapeMismatch,
    #[error("parameter vector length {found} does not match store layout {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("malformed network file: {0}")]
    BadNetworkFile(String),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Flat parameter vector plus the per-connective slot layout: `arity` weights
/// followed by one bias per slot, slots in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    values: Vec<f64>,
    slots: Vec<SlotEntry>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct SlotEntry {
    name: String,
    arity: usize,
    offset: usize,
}

impl ParameterStore {
    fn from_slots(entries: Vec<(String, usize, Vec<f64>, f64)>) -> ParameterStore {
        let mut values = Vec::new();
        let mut slots = Vec::new();
        let mut index = HashMap::new();
        for (name, arity, weights, bias) in entries {
            debug_assert_eq!(weights.len(), arity);
            index.insert(name.clone(), slots.len());
            slots.push(SlotEntry {
                name,
                arity,
                offset: values.len(),
            });
            values.extend(weights);
            values.push(bias);
        }
        ParameterStore {
            values,
            slots,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<(), NetError> {
        if values.len() != self.values.len() {
            return Err(NetError::LayoutMismatch {
                expected: self.values.len(),
                found: values.len(),
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn slot_names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    /// Indices of the weight entries for a connective's slot.
    pub fn weight_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let s = &self.slots[*self.index.get(name)?];
        Some(s.offset..s.offset + s.arity)
    }

    /// Index of the bias entry for a connective's slot.
    pub fn bias_index(&self, name: &str) -> Option<usize> {
        let s = &self.slots[*self.index.get(name)?];
        Some(s.offset + s.arity)
    }

    pub fn slot_values(&self, name: &str) -> Option<(&[f64], f64)> {
        let s = &self.slots[*self.index.get(name)?];
        Some((
            &self.values[s.offset..s.offset + s.arity],
            self.values[s.offset + s.arity],
        ))
    }

    /// Union of two stores. Slots present in both must agree exactly.
    pub fn merged(a: &ParameterStore, b: &ParameterStore) -> Result<ParameterStore, NetError> {
        let mut entries: Vec<(String, usize, Vec<f64>, f64)> = a
            .slots
            .iter()
            .map(|s| {
                let (w, bias) = a.slot_values(&s.name).expect("own slot");
                (s.name.clone(), s.arity, w.to_vec(), bias)
            })
            .collect();
        for s in &b.slots {
            let (w, bias) = b.slot_values(&s.name).expect("own slot");
            match a.slot_values(&s.name) {
                None => entries.push((s.name.clone(), s.arity, w.to_vec(), bias)),
                Some((aw, ab)) => {
                    if aw != w || ab != bias {
                        return Err(NetError::SlotConflict(s.name.clone()));
                    }
                }
            }
        }
        Ok(ParameterStore::from_slots(entries))
    }
}

/// Parameter initialization for [`assign_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Maximum-margin constants for `and`/`or`/`not`, unit-weights and zero
    /// bias otherwise.
    Canonical,
    /// Seeded Gaussian draw with the given scale; reproducible.
    Random { seed: u64, scale: f64 },
}

/// A theory's gate assignment: one kernel and one shared parameter slot per
/// connective, plus the network temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricModel {
    pub theory: Theory,
    kernels: Arc<Vec<GateKernel>>,
    pub beta: Temperature,
}

impl ParametricModel {
    pub fn kernels(&self) -> &[GateKernel] {
        &self.kernels
    }

    pub fn kernel(&self, name: &str) -> Option<&GateKernel> {
        self.kernels.iter().find(|k| k.connective == name)
    }
}

/// Assigns a gate kernel and a parameter slot to every connective of the
/// theory, in declaration order.
pub fn assign_model(
    theory: &Theory,
    beta: Temperature,
    init: InitScheme,
) -> (ParametricModel, ParameterStore) {
    let kernels: Arc<Vec<GateKernel>> = Arc::new(
        theory
            .connectives
            .iter()
            .map(|c| GateKernel::for_connective(&c.name, c.arity))
            .collect(),
    );
    let mut rng = match init {
        InitScheme::Random { seed, .. } => Some(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        InitScheme::Canonical => None,
    };
    let entries = kernels
        .iter()
        .map(|k| {
            let (w, b) = match init {
                InitScheme::Canonical => (k.canonical_weights.clone(), k.canonical_bias),
                InitScheme::Random { scale, .. } => {
                    let rng = rng.as_mut().expect("rng for random init");
                    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
                    let w = (0..k.arity)
                        .map(|_| normal.sample(rng) * scale)
                        .collect::<Vec<f64>>();
                    (w, normal.sample(rng) * scale)
                }
            };
            (k.connective.clone(), k.arity, w, b)
        })
        .collect();
    let store = ParameterStore::from_slots(entries);
    (
        ParametricModel {
            theory: theory.clone(),
            kernels,
            beta,
        },
        store,
    )
}

pub type NodeId = usize;

/// One node of a compiled network: either the `i`-th input or a gate reading
/// earlier nodes. Gate connectives index into the graph's kernel table.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input(usize),
    Gate { kernel: usize, args: Vec<NodeId> },
}

/// A directed acyclic network of relaxed gates. Nodes are stored in
/// topological order with the `input_count` input nodes first (node id equals
/// input index); `depth` counts gate nodes along the longest path.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub theory_name: String,
    kernels: Arc<Vec<GateKernel>>,
    nodes: Vec<NodeKind>,
    outputs: Vec<NodeId>,
    input_count: usize,
    depth: usize,
}

impl NetworkGraph {
    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn kernels(&self) -> &[GateKernel] {
        &self.kernels
    }

    pub fn gate_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, NodeKind::Gate { .. }))
            .count()
    }

    pub fn kernel_name(&self, kernel: usize) -> &str {
        &self.kernels[kernel].connective
    }

    /// Expands each output back into a term over the input variables.
    pub fn to_terms(&self) -> Vec<Term> {
        let mut memo: Vec<Option<Term>> = vec![None; self.nodes.len()];
        self.outputs
            .iter()
            .map(|&o| self.node_term(o, &mut memo))
            .collect()
    }

    fn node_term(&self, id: NodeId, memo: &mut Vec<Option<Term>>) -> Term {
        if let Some(t) = &memo[id] {
            return t.clone();
        }
        let t = match &self.nodes[id] {
            NodeKind::Input(i) => Term::Var(*i),
            NodeKind::Gate { kernel, args } => Term::app(
                self.kernels[*kernel].connective.clone(),
                args.iter().map(|&a| self.node_term(a, memo)).collect(),
            ),
        };
        memo[id] = Some(t.clone());
        t
    }
}

fn node_depths(nodes: &[NodeKind]) -> Vec<usize> {
    let mut depths = vec![0usize; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if let NodeKind::Gate { args, .. } = n {
            depths[i] = 1 + args.iter().map(|&a| depths[a]).max().unwrap_or(0);
        }
    }
    depths
}

fn graph_depth(nodes: &[NodeKind], outputs: &[NodeId]) -> usize {
    let depths = node_depths(nodes);
    outputs.iter().map(|&o| depths[o]).max().unwrap_or(0)
}

struct GraphBuilder<'m> {
    model: &'m ParametricModel,
    input_count: usize,
    nodes: Vec<NodeKind>,
    // identical subterms share a node; keyed bottom-up by (kernel, arg ids)
    cse: HashMap<(usize, Vec<NodeId>), NodeId>,
}

impl<'m> GraphBuilder<'m> {
    fn new(model: &'m ParametricModel, input_count: usize) -> Self {
        GraphBuilder {
            model,
            input_count,
            nodes: (0..input_count).map(NodeKind::Input).collect(),
            cse: HashMap::new(),
        }
    }

    fn build(&mut self, term: &Term) -> Result<NodeId, NetError> {
        match term {
            Term::Var(i) => {
                if *i < self.input_count {
                    Ok(*i)
                } else {
                    Err(NetError::MalformedTerm)
                }
            }
            Term::App { connective, args } => {
                let kernel = self
                    .model
                    .kernels
                    .iter()
                    .position(|k| &k.connective == connective)
                    .ok_or(NetError::MalformedTerm)?;
                let arg_ids = args
                    .iter()
                    .map(|a| self.build(a))
                    .collect::<Result<Vec<_>, _>>()?;
                match self.cse.entry((kernel, arg_ids)) {
                    std::collections::hash_map::Entry::Occupied(e) => Ok(*e.get()),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let id = self.nodes.len();
                        self.nodes.push(NodeKind::Gate {
                            kernel,
                            args: e.key().1.clone(),
                        });
                        e.insert(id);
                        Ok(id)
                    }
                }
            }
        }
    }
}

/// Compiles a term over `context_size` variables into a network with one
/// output. The graph mirrors the term tree with identical subterms sharing a
/// node; its depth equals the term depth.
pub fn compile(
    model: &ParametricModel,
    expr: &Term,
    context_size: usize,
) -> Result<NetworkGraph, NetError> {
    compile_many(model, std::slice::from_ref(expr), context_size)
}

/// Compiles several terms over a shared context into one multi-output
/// network; subterm sharing spans all outputs.
pub fn compile_many(
    model: &ParametricModel,
    exprs: &[Term],
    context_size: usize,
) -> Result<NetworkGraph, NetError> {
    for e in exprs {
        if !e.well_formed(&model.theory, context_size) {
            return Err(NetError::MalformedTerm);
        }
    }
    let mut builder = GraphBuilder::new(model, context_size);
    let outputs = exprs
        .iter()
        .map(|e| builder.build(e))
        .collect::<Result<Vec<_>, _>>()?;
    let depth = graph_depth(&builder.nodes, &outputs);
    Ok(NetworkGraph {
        theory_name: model.theory.name.clone(),
        kernels: Arc::clone(&model.kernels),
        nodes: builder.nodes,
        outputs,
        input_count: context_size,
        depth,
    })
}

/// Compiles a tuple morphism `n -> m` into an `n`-input, `m`-output network.
pub fn compile_tuple(
    model: &ParametricModel,
    morphism: &crate::lawvere::TupleMorphism,
) -> Result<NetworkGraph, NetError> {
    compile_many(model, morphism.components(), morphism.source_arity())
}

/// Recorded forward values for one evaluation; consumed by exactly one
/// reverse pass.
#[derive(Debug)]
pub struct Tape {
    values: Vec<f64>,
    beta: Temperature,
}

impl Tape {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn beta(&self) -> Temperature {
        self.beta
    }
}

fn resolve_slots(
    graph: &NetworkGraph,
    store: &ParameterStore,
) -> Result<Vec<(std::ops::Range<usize>, usize)>, NetError> {
    graph
        .kernels
        .iter()
        .map(|k| {
            let range = store
                .weight_range(&k.connective)
                .ok_or_else(|| NetError::MissingSlot(k.connective.clone()))?;
            if range.len() != k.arity {
                return Err(NetError::SlotConflict(k.connective.clone()));
            }
            let bias = store.bias_index(&k.connective).expect("bias with weights");
            Ok((range, bias))
        })
        .collect()
}

fn eval_nodes_with_slots(
    graph: &NetworkGraph,
    store: &ParameterStore,
    slots: &[(std::ops::Range<usize>, usize)],
    input: &[f64],
    beta: Temperature,
    values: &mut Vec<f64>,
) -> Result<(), NetError> {
    if input.len() != graph.input_count {
        return Err(NetError::InputArity {
            expected: graph.input_count,
            found: input.len(),
        });
    }
    for &x in input {
        if !x.is_finite() {
            return Err(NetError::NonFiniteInput(x));
        }
    }
    values.clear();
    values.reserve(graph.nodes.len());
    let mut small = [0.0f64; 8];
    let mut large: Vec<f64> = Vec::new();
    for node in &graph.nodes {
        let v = match node {
            NodeKind::Input(i) => input[*i],
            NodeKind::Gate { kernel, args } => {
                let inputs: &[f64] = if args.len() <= small.len() {
                    for (slot, &a) in small.iter_mut().zip(args) {
                        *slot = values[a];
                    }
                    &small[..args.len()]
                } else {
                    large.clear();
                    large.extend(args.iter().map(|&a| values[a]));
                    &large
                };
                let (range, bias) = &slots[*kernel];
                gate_eval(
                    &graph.kernels[*kernel],
                    &store.values[range.clone()],
                    store.values[*bias],
                    inputs,
                    beta,
                )?
            }
        };
        values.push(v);
    }
    Ok(())
}

fn eval_nodes(
    graph: &NetworkGraph,
    store: &ParameterStore,
    input: &[f64],
    beta: Temperature,
    values: &mut Vec<f64>,
) -> Result<(), NetError> {
    let slots = resolve_slots(graph, store)?;
    eval_nodes_with_slots(graph, store, &slots, input, beta, values)
}

/// Evaluates the network over every (input, temperature) combination,
/// resolving parameter slots once. Outputs land flat in `out`, grouped by
/// input then temperature then output index.
pub fn forward_grid(
    graph: &NetworkGraph,
    store: &ParameterStore,
    inputs: &[Vec<f64>],
    betas: &[Temperature],
    scratch: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<(), NetError> {
    let slots = resolve_slots(graph, store)?;
    out.clear();
    out.reserve(inputs.len() * betas.len() * graph.outputs.len());
    for input in inputs {
        for &beta in betas {
            eval_nodes_with_slots(graph, store, &slots, input, beta, scratch)?;
            out.extend(graph.outputs.iter().map(|&o| scratch[o]));
        }
    }
    Ok(())
}

/// A sound, input-independent Lipschitz envelope for the compiled graph at
/// the given parameters: each gate contributes at most
/// `beta/4 * sum_i |w_i| * envelope(arg_i)` to the gradient norm, inputs
/// contribute 1. Unlike the closed-form layer bound this accounts for skip
/// paths and for weights whose one-norm exceeds sqrt(2), so random-pair
/// difference quotients never exceed it.
pub fn lipschitz_envelope(
    graph: &NetworkGraph,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<f64, NetError> {
    let slots = resolve_slots(graph, store)?;
    let mut bound = vec![0.0f64; graph.nodes.len()];
    for (i, node) in graph.nodes.iter().enumerate() {
        bound[i] = match node {
            NodeKind::Input(_) => 1.0,
            NodeKind::Gate { kernel, args } => {
                let (range, _) = &slots[*kernel];
                let weights = &store.values[range.clone()];
                beta.value() / 4.0
                    * args
                        .iter()
                        .zip(weights)
                        .map(|(&a, w)| w.abs() * bound[a])
                        .sum::<f64>()
            }
        };
    }
    Ok(graph
        .outputs
        .iter()
        .map(|&o| bound[o] * bound[o])
        .sum::<f64>()
        .sqrt())
}

/// Evaluates the network in topological order, returning the outputs and the
/// tape of node values for a later reverse pass.
pub fn forward(
    graph: &NetworkGraph,
    store: &ParameterStore,
    input: &[f64],
    beta: Temperature,
) -> Result<(Vec<f64>, Tape), NetError> {
    let mut values = Vec::new();
    eval_nodes(graph, store, input, beta, &mut values)?;
    let outputs = graph.outputs.iter().map(|&o| values[o]).collect();
    Ok((outputs, Tape { values, beta }))
}

/// Outputs only, reusing `scratch` for node values; for bulk sweeps.
pub fn forward_into(
    graph: &NetworkGraph,
    store: &ParameterStore,
    input: &[f64],
    beta: Temperature,
    scratch: &mut Vec<f64>,
    outputs: &mut Vec<f64>,
) -> Result<(), NetError> {
    eval_nodes(graph, store, input, beta, scratch)?;
    outputs.clear();
    outputs.extend(graph.outputs.iter().map(|&o| scratch[o]));
    Ok(())
}

/// Convenience wrapper returning just the outputs.
pub fn forward_outputs(
    graph: &NetworkGraph,
    store: &ParameterStore,
    input: &[f64],
    beta: Temperature,
) -> Result<Vec<f64>, NetError> {
    Ok(forward(graph, store, input, beta)?.0)
}

/// Reverse-mode pass over a recorded tape. Returns gradients with respect to
/// the full parameter vector and to the inputs; shared-slot gradients
/// accumulate over every gate that reads the slot.
pub fn backward(
    graph: &NetworkGraph,
    store: &ParameterStore,
    tape: Tape,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NetError> {
    if tape.values.len() != graph.nodes.len() {
        return Err(NetError::TapeMismatch);
    }
    if upstream.len() != graph.outputs.len() {
        return Err(NetError::UpstreamArity {
            expected: graph.outputs.len(),
            found: upstream.len(),
        });
    }
    let slots = resolve_slots(graph, store)?;
    let mut adjoint = vec![0.0; graph.nodes.len()];
    for (&o, &u) in graph.outputs.iter().zip(upstream) {
        adjoint[o] += u;
    }
    let mut d_params = vec![0.0; store.len()];
    let mut d_input = vec![0.0; graph.input_count];
    let mut scratch: Vec<f64> = Vec::new();
    for (id, node) in graph.nodes.iter().enumerate().rev() {
        let a = adjoint[id];
        match node {
            NodeKind::Input(i) => d_input[*i] += a,
            NodeKind::Gate { kernel, args } => {
                if a == 0.0 {
                    continue;
                }
                scratch.clear();
                scratch.extend(args.iter().map(|&arg| tape.values[arg]));
                let (range, bias) = &slots[*kernel];
                let (_, grad) = gate_grad(
                    &graph.kernels[*kernel],
                    &store.values[range.clone()],
                    store.values[*bias],
                    &scratch,
                    tape.beta,
                )?;
                for (slot, dw) in range.clone().zip(&grad.d_weights) {
                    d_params[slot] += a * dw;
                }
                d_params[*bias] += a * grad.d_bias;
                for (&arg, dx) in args.iter().zip(&grad.d_inputs) {
                    adjoint[arg] += a * dx;
                }
            }
        }
    }
    Ok((d_params, d_input))
}

fn merged_kernels(
    a: &[GateKernel],
    b: &[GateKernel],
) -> Result<(Vec<GateKernel>, Vec<usize>), NetError> {
    let mut kernels = a.to_vec();
    let mut b_map = Vec::with_capacity(b.len());
    for k in b {
        match kernels.iter().position(|e| e.connective == k.connective) {
            Some(i) => {
                if kernels[i].arity != k.arity {
                    return Err(NetError::SlotConflict(k.connective.clone()));
                }
                b_map.push(i);
            }
            None => {
                b_map.push(kernels.len());
                kernels.push(k.clone());
            }
        }
    }
    Ok((kernels, b_map))
}

/// Splices the outputs of `first` into the inputs of `second`; the result
/// computes `second ∘ first` pointwise.
pub fn compose_sequential(
    first: &NetworkGraph,
    second: &NetworkGraph,
) -> Result<NetworkGraph, NetError> {
    if first.outputs.len() != second.input_count {
        return Err(NetError::CompositionArity {
            expected: second.input_count,
            found: first.outputs.len(),
        });
    }
    let (kernels, kernel_map) = merged_kernels(&first.kernels, &second.kernels)?;
    let kernels = Arc::new(kernels);
    let mut nodes = first.nodes.clone();
    let mut remap = vec![0usize; second.nodes.len()];
    for (id, node) in second.nodes.iter().enumerate() {
        match node {
            NodeKind::Input(i) => remap[id] = first.outputs[*i],
            NodeKind::Gate { kernel, args } => {
                remap[id] = nodes.len();
                nodes.push(NodeKind::Gate {
                    kernel: kernel_map[*kernel],
                    args: args.iter().map(|&a| remap[a]).collect(),
                });
            }
        }
    }
    let outputs: Vec<NodeId> = second.outputs.iter().map(|&o| remap[o]).collect();
    let depth = graph_depth(&nodes, &outputs);
    Ok(NetworkGraph {
        theory_name: if first.theory_name == second.theory_name {
            first.theory_name.clone()
        } else {
            format!("{}+{}", first.theory_name, second.theory_name)
        },
        kernels,
        nodes,
        outputs,
        input_count: first.input_count,
        depth,
    })
}

/// Disjoint union: inputs concatenated, outputs concatenated, no edges
/// between the two halves.
pub fn compose_parallel(
    left: &NetworkGraph,
    right: &NetworkGraph,
) -> Result<NetworkGraph, NetError> {
    let (kernels, kernel_map) = merged_kernels(&left.kernels, &right.kernels)?;
    let kernels = Arc::new(kernels);
    let input_count = left.input_count + right.input_count;
    let mut nodes: Vec<NodeKind> = (0..input_count).map(NodeKind::Input).collect();

    let mut left_remap = vec![0usize; left.nodes.len()];
    for (id, node) in left.nodes.iter().enumerate() {
        match node {
            NodeKind::Input(i) => left_remap[id] = *i,
            NodeKind::Gate { kernel, args } => {
                left_remap[id] = nodes.len();
                nodes.push(NodeKind::Gate {
                    kernel: *kernel,
                    args: args.iter().map(|&a| left_remap[a]).collect(),
                });
            }
        }
    }
    let mut right_remap = vec![0usize; right.nodes.len()];
    for (id, node) in right.nodes.iter().enumerate() {
        match node {
            NodeKind::Input(i) => right_remap[id] = left.input_count + *i,
            NodeKind::Gate { kernel, args } => {
                right_remap[id] = nodes.len();
                nodes.push(NodeKind::Gate {
                    kernel: kernel_map[*kernel],
                    args: args.iter().map(|&a| right_remap[a]).collect(),
                });
            }
        }
    }
    let outputs: Vec<NodeId> = left
        .outputs
        .iter()
        .map(|&o| left_remap[o])
        .chain(right.outputs.iter().map(|&o| right_remap[o]))
        .collect();
    let depth = graph_depth(&nodes, &outputs);
    Ok(NetworkGraph {
        theory_name: if left.theory_name == right.theory_name {
            left.theory_name.clone()
        } else {
            format!("{}+{}", left.theory_name, right.theory_name)
        },
        kernels,
        nodes,
        outputs,
        input_count,
        depth,
    })
}

/// Recovers the per-connective kernels and slot values realized by a graph.
/// Recompiling the returned model against the original expression reproduces
/// the original forward function exactly.
pub fn extract_model(
    graph: &NetworkGraph,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<(ParametricModel, ParameterStore), NetError> {
    let entries = graph
        .kernels
        .iter()
        .map(|k| {
            let (w, b) = store
                .slot_values(&k.connective)
                .ok_or_else(|| NetError::MissingSlot(k.connective.clone()))?;
            if w.len() != k.arity {
                return Err(NetError::SlotConflict(k.connective.clone()));
            }
            Ok((k.connective.clone(), k.arity, w.to_vec(), b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let theory = Theory {
        name: graph.theory_name.clone(),
        connectives: graph
            .kernels
            .iter()
            .map(|k| Connective {
                name: k.connective.clone(),
                arity: k.arity,
            })
            .collect(),
        axioms: Vec::new(),
    };
    Ok((
        ParametricModel {
            theory,
            kernels: Arc::clone(&graph.kernels),
            beta,
        },
        ParameterStore::from_slots(entries),
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExportNode {
    id: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    connective: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    args: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExportSlot {
    w: Vec<f64>,
    b: f64,
}

/// The on-disk network bundle: graph topology, slot values and temperature.
/// Floats serialize as shortest round-trip decimals, so save/load is
/// lossless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkExport {
    theory: String,
    beta: f64,
    nodes: Vec<ExportNode>,
    outputs: Vec<usize>,
    slots: BTreeMap<String, ExportSlot>,
}

/// Bundles a graph with its parameters and temperature for serialization.
pub fn export_network(
    graph: &NetworkGraph,
    store: &ParameterStore,
    beta: Temperature,
) -> Result<NetworkExport, NetError> {
    let mut slots = BTreeMap::new();
    for k in graph.kernels.iter() {
        let (w, b) = store
            .slot_values(&k.connective)
            .ok_or_else(|| NetError::MissingSlot(k.connective.clone()))?;
        slots.insert(
            k.connective.clone(),
            ExportSlot {
                w: w.to_vec(),
                b,
            },
        );
    }
    let nodes = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(id, n)| match n {
            NodeKind::Input(_) => ExportNode {
                id,
                kind: "input".into(),
                connective: None,
                args: None,
            },
            NodeKind::Gate { kernel, args } => ExportNode {
                id,
                kind: "gate".into(),
                connective: Some(graph.kernels[*kernel].connective.clone()),
                args: Some(args.clone()),
            },
        })
        .collect();
    Ok(NetworkExport {
        theory: graph.theory_name.clone(),
        beta: beta.value(),
        nodes,
        outputs: graph.outputs.clone(),
        slots,
    })
}

/// Reconstructs the graph, parameter store and temperature from a bundle.
pub fn import_network(
    export: &NetworkExport,
) -> Result<(NetworkGraph, ParameterStore, Temperature), NetError> {
    let beta = Temperature::new(export.beta)
        .map_err(|e| NetError::BadNetworkFile(e.to_string()))?;
    let kernels: Arc<Vec<GateKernel>> = Arc::new(
        export
            .slots
            .iter()
            .map(|(name, slot)| GateKernel::for_connective(name, slot.w.len()))
            .collect(),
    );
    let kernel_index: HashMap<&str, usize> = kernels
        .iter()
        .enumerate()
        .map(|(i, k)| (k.connective.as_str(), i))
        .collect();

    let mut nodes = Vec::with_capacity(export.nodes.len());
    let mut input_count = 0usize;
    for (pos, n) in export.nodes.iter().enumerate() {
        if n.id != pos {
            return Err(NetError::BadNetworkFile(format!(
                "node ids must be dense and ordered, found {} at position {}",
                n.id, pos
            )));
        }
        match n.kind.as_str() {
            "input" => {
                if pos != input_count {
                    return Err(NetError::BadNetworkFile(
                        "input nodes must precede gate nodes".into(),
                    ));
                }
                nodes.push(NodeKind::Input(pos));
                input_count += 1;
            }
            "gate" => {
                let name = n.connective.as_deref().ok_or_else(|| {
                    NetError::BadNetworkFile(format!("gate node {pos} lacks a connective"))
                })?;
                let args = n.args.clone().ok_or_else(|| {
                    NetError::BadNetworkFile(format!("gate node {pos} lacks args"))
                })?;
                let kernel = *kernel_index.get(name).ok_or_else(|| {
                    NetError::BadNetworkFile(format!("gate node {pos} references unknown slot `{name}`"))
                })?;
                if kernels[kernel].arity != args.len() {
                    return Err(NetError::BadNetworkFile(format!(
                        "gate node {pos} has {} args, slot `{name}` has arity {}",
                        args.len(),
                        kernels[kernel].arity
                    )));
                }
                if args.iter().any(|&a| a >= pos) {
                    return Err(NetError::BadNetworkFile(format!(
                        "gate node {pos} reads a later node"
                    )));
                }
                nodes.push(NodeKind::Gate { kernel, args });
            }
            other => {
                return Err(NetError::BadNetworkFile(format!(
                    "unknown node kind `{other}`"
                )))
            }
        }
    }
    for &o in &export.outputs {
        if o >= nodes.len() {
            return Err(NetError::BadNetworkFile(format!(
                "output {o} is not a node"
            )));
        }
    }
    let entries = export
        .slots
        .iter()
        .map(|(name, slot)| (name.clone(), slot.w.len(), slot.w.clone(), slot.b))
        .collect();
    let depth = graph_depth(&nodes, &export.outputs);
    Ok((
        NetworkGraph {
            theory_name: export.theory.clone(),
            kernels,
            nodes,
            outputs: export.outputs.clone(),
            input_count,
            depth,
        },
        ParameterStore::from_slots(entries),
        beta,
    ))
}

//! Static compute graphs: build once, then run `forward`/`backward` with a
//! flat parameter vector and named inputs.
//!
//! Nodes are appended in topological order by construction, so execution is
//! a single sweep over the node table. `backward` seeds any scalar node and
//! accumulates vector-Jacobian products down to the parameter slots; its
//! output is one flat gradient aligned with the parameter layout.

use super::DenseArray;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    /// Run-time input, by index into the graph's input table.
    Input(usize),
    /// A whole named parameter slot, materialized from the flat vector.
    Param(usize),
    /// Build-time constant, by index into the constant table.
    Const(usize),
    /// `A (m,k) · B (k,n)`.
    MatMul(NodeId, NodeId),
    /// `A (m,k) · Bᵀ` with `B (n,k)`; the transposed-operand matmul used for
    /// pairwise similarity matrices.
    MatMulNT(NodeId, NodeId),
    /// Elementwise add; rhs may be a vector broadcast over the rows of a
    /// matrix lhs (bias add over a batch).
    Add(NodeId, NodeId),
    /// Multiply by a compile-time scalar.
    Scale(NodeId, f64),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    /// Elementwise multiply, same shape.
    Mul(NodeId, NodeId),
    /// Elementwise divide, same shape, or rhs scalar.
    Div(NodeId, NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Sum over the last dimension: (m,n) -> (m,).
    SumRows(NodeId),
    /// L2-normalize each row; rows with norm < 1e-12 map to the first basis
    /// vector and propagate zero gradient.
    L2NormRows(NodeId),
    /// Vector-vector dot product -> scalar.
    Dot(NodeId, NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::MatMulNT(..) => "matmul_nt",
            Op::Add(..) => "add",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::SumAll(_) => "sum_all",
            Op::MeanAll(_) => "mean_all",
            Op::SumRows(_) => "sum_rows",
            Op::L2NormRows(_) => "l2_normalize_rows",
            Op::Dot(..) => "dot",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    consts: Vec<DenseArray>,
    inputs: Vec<(String, Vec<usize>)>,
    slots: Vec<(String, Vec<usize>)>,
    slot_offsets: Vec<usize>,
    param_len: usize,
}

/// Forward-pass record: one materialized value per node, in node order.
#[derive(Debug, Clone)]
pub struct Evaluation {
    values: Vec<DenseArray>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.values[id]
    }
}

#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    consts: Vec<DenseArray>,
    inputs: Vec<(String, Vec<usize>)>,
    slots: Vec<(String, Vec<usize>)>,
    slot_nodes: Vec<NodeId>,
}

impl GraphBuilder {
    pub fn new() -> GraphBuilder {
        GraphBuilder::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        self.nodes.len() - 1
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    fn mismatch(&self, op: &str, ids: &[NodeId]) -> Error {
        let shapes: Vec<String> =
            ids.iter().map(|&i| format!("{:?}", self.nodes[i].shape)).collect();
        Error::Shape { context: format!("{op} on operands with shapes {}", shapes.join(", ")) }
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.inputs.push((name.to_string(), shape.to_vec()));
        let idx = self.inputs.len() - 1;
        self.push(Op::Input(idx), shape.to_vec())
    }

    /// Declare a named parameter slot and return its node. The flat parameter
    /// vector is the concatenation of all slots in declaration order.
    /// Re-declaring a name returns the original node, so a sub-network can be
    /// applied to several inputs while sharing one set of weights.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> NodeId {
        if let Some(i) = self.slots.iter().position(|(n, _)| n == name) {
            assert_eq!(
                self.slots[i].1, shape,
                "parameter `{name}` re-declared with a different shape"
            );
            return self.slot_nodes[i];
        }
        self.slots.push((name.to_string(), shape.to_vec()));
        let idx = self.slots.len() - 1;
        let id = self.push(Op::Param(idx), shape.to_vec());
        self.slot_nodes.push(id);
        id
    }

    pub fn constant(&mut self, value: DenseArray) -> NodeId {
        let shape = value.shape().to_vec();
        self.consts.push(value);
        let idx = self.consts.len() - 1;
        self.push(Op::Const(idx), shape)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", &[a, b]));
        }
        let shape = vec![sa[0], sb[1]];
        Ok(self.push(Op::MatMul(a, b), shape))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(self.mismatch("matmul_nt", &[a, b]));
        }
        let shape = vec![sa[0], sb[0]];
        Ok(self.push(Op::MatMulNT(a, b), shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        let broadcast = sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0];
        if !(sa == sb || broadcast) {
            return Err(self.mismatch("add", &[a, b]));
        }
        let shape = sa.to_vec();
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let shape = self.shape_of(a).to_vec();
        self.push(Op::Scale(a, c), shape)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape_of(a).to_vec();
        self.push(Op::Relu(a), shape)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape_of(a).to_vec();
        self.push(Op::Exp(a), shape)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape_of(a).to_vec();
        self.push(Op::Log(a), shape)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(self.mismatch("mul", &[a, b]));
        }
        let shape = self.shape_of(a).to_vec();
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let same = self.shape_of(a) == self.shape_of(b);
        let scalar_rhs = self.shape_of(b).is_empty();
        if !(same || scalar_rhs) {
            return Err(self.mismatch("div", &[a, b]));
        }
        let shape = self.shape_of(a).to_vec();
        Ok(self.push(Op::Div(a, b), shape))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumAll(a), vec![])
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        self.push(Op::MeanAll(a), vec![])
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.shape_of(a);
        if sa.len() != 2 {
            return Err(self.mismatch("sum_rows", &[a]));
        }
        let shape = vec![sa[0]];
        Ok(self.push(Op::SumRows(a), shape))
    }

    pub fn l2_normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.shape_of(a);
        if sa.len() != 2 {
            return Err(self.mismatch("l2_normalize_rows", &[a]));
        }
        let shape = sa.to_vec();
        Ok(self.push(Op::L2NormRows(a), shape))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 1 || sa != sb {
            return Err(self.mismatch("dot", &[a, b]));
        }
        Ok(self.push(Op::Dot(a, b), vec![]))
    }

    pub fn build(self) -> Graph {
        let mut slot_offsets = Vec::with_capacity(self.slots.len());
        let mut off = 0usize;
        for (_, shape) in &self.slots {
            slot_offsets.push(off);
            off += shape.iter().product::<usize>();
        }
        Graph {
            nodes: self.nodes,
            consts: self.consts,
            inputs: self.inputs,
            slots: self.slots,
            slot_offsets,
            param_len: off,
        }
    }
}

impl Graph {
    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// Range of the named slot inside the flat parameter/gradient vector.
    pub fn slot_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.slots.iter().position(|(n, _)| n == name).map(|i| {
            let start = self.slot_offsets[i];
            let len: usize = self.slots[i].1.iter().product();
            start..start + len
        })
    }

    fn input_index(&self, name: &str) -> Result<usize> {
        self.inputs
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("graph has no input named `{name}`")))
    }

    /// Evaluate every node. `inputs` must cover each declared input exactly
    /// once, with matching shape; `params` must match the total slot length.
    pub fn forward(&self, params: &[f64], inputs: &[(&str, &DenseArray)]) -> Result<Evaluation> {
        if params.len() != self.param_len {
            return Err(Error::Shape {
                context: format!(
                    "parameter vector has {} elements, graph slots need {}",
                    params.len(),
                    self.param_len
                ),
            });
        }
        let mut bound: Vec<Option<&DenseArray>> = vec![None; self.inputs.len()];
        for (name, arr) in inputs {
            let idx = self.input_index(name)?;
            if arr.shape() != self.inputs[idx].1.as_slice() {
                return Err(Error::Shape {
                    context: format!(
                        "input `{name}` has shape {:?}, graph declares {:?}",
                        arr.shape(),
                        self.inputs[idx].1
                    ),
                });
            }
            bound[idx] = Some(arr);
        }
        if let Some(missing) = bound.iter().position(|b| b.is_none()) {
            return Err(Error::InvalidArgument(format!(
                "input `{}` not provided",
                self.inputs[missing].0
            )));
        }

        let mut values: Vec<DenseArray> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let out = match &node.op {
                Op::Input(i) => (*bound[*i].unwrap()).clone(),
                Op::Param(slot) => {
                    let start = self.slot_offsets[*slot];
                    let len: usize = self.slots[*slot].1.iter().product();
                    DenseArray {
                        shape: self.slots[*slot].1.clone(),
                        data: params[start..start + len].to_vec(),
                    }
                }
                Op::Const(i) => self.consts[*i].clone(),
                Op::MatMul(a, b) => {
                    let (va, vb) = (&values[*a], &values[*b]);
                    let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
                    let mut out = DenseArray::zeros(&[m, n]);
                    matmul_acc(&va.data, m, k, &vb.data, n, &mut out.data);
                    out
                }
                Op::MatMulNT(a, b) => {
                    let (va, vb) = (&values[*a], &values[*b]);
                    let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[0]);
                    let mut out = DenseArray::zeros(&[m, n]);
                    for i in 0..m {
                        let ra = &va.data[i * k..(i + 1) * k];
                        let orow = &mut out.data[i * n..(i + 1) * n];
                        for (j, o) in orow.iter_mut().enumerate() {
                            let rb = &vb.data[j * k..(j + 1) * k];
                            *o = dot_slices(ra, rb);
                        }
                    }
                    out
                }
                Op::Add(a, b) => {
                    let (va, vb) = (&values[*a], &values[*b]);
                    let mut out = va.clone();
                    if va.shape == vb.shape {
                        for (o, x) in out.data.iter_mut().zip(&vb.data) {
                            *o += x;
                        }
                    } else {
                        // rhs vector broadcast over rows
                        let n = vb.data.len();
                        for row in out.data.chunks_mut(n) {
                            for (o, x) in row.iter_mut().zip(&vb.data) {
                                *o += x;
                            }
                        }
                    }
                    out
                }
                Op::Scale(a, c) => {
                    let mut out = values[*a].clone();
                    for o in &mut out.data {
                        *o *= c;
                    }
                    out
                }
                Op::Relu(a) => {
                    let mut out = values[*a].clone();
                    for o in &mut out.data {
                        if *o < 0.0 {
                            *o = 0.0;
                        }
                    }
                    out
                }
                Op::Exp(a) => {
                    let mut out = values[*a].clone();
                    for o in &mut out.data {
                        *o = o.exp();
                    }
                    out
                }
                Op::Log(a) => {
                    let mut out = values[*a].clone();
                    for o in &mut out.data {
                        *o = o.ln();
                    }
                    out
                }
                Op::Mul(a, b) => {
                    let mut out = values[*a].clone();
                    for (o, x) in out.data.iter_mut().zip(&values[*b].data) {
                        *o *= x;
                    }
                    out
                }
                Op::Div(a, b) => {
                    let vb = &values[*b];
                    let mut out = values[*a].clone();
                    if vb.is_scalar() {
                        let d = vb.data[0];
                        for o in &mut out.data {
                            *o /= d;
                        }
                    } else {
                        for (o, x) in out.data.iter_mut().zip(&vb.data) {
                            *o /= x;
                        }
                    }
                    out
                }
                Op::SumAll(a) => DenseArray::scalar(values[*a].data.iter().sum()),
                Op::MeanAll(a) => {
                    let v = &values[*a];
                    DenseArray::scalar(v.data.iter().sum::<f64>() / v.data.len() as f64)
                }
                Op::SumRows(a) => {
                    let v = &values[*a];
                    let (m, n) = (v.shape[0], v.shape[1]);
                    let mut out = DenseArray::zeros(&[m]);
                    for i in 0..m {
                        out.data[i] = v.data[i * n..(i + 1) * n].iter().sum();
                    }
                    out
                }
                Op::L2NormRows(a) => {
                    let v = &values[*a];
                    let n = v.shape[1];
                    let mut out = v.clone();
                    for row in out.data.chunks_mut(n) {
                        let norm = dot_slices(row, row).sqrt();
                        if norm < 1e-12 {
                            for x in row.iter_mut() {
                                *x = 0.0;
                            }
                            row[0] = 1.0;
                        } else {
                            for x in row.iter_mut() {
                                *x /= norm;
                            }
                        }
                    }
                    out
                }
                Op::Dot(a, b) => {
                    DenseArray::scalar(dot_slices(&values[*a].data, &values[*b].data))
                }
            };
            if !out.all_finite() {
                return Err(Error::NonFinite { node: id, op: node.op.name().to_string() });
            }
            values.push(out);
        }
        Ok(Evaluation { values })
    }

    /// Reverse sweep from a scalar `seed` node; returns the flat gradient
    /// over all parameter slots (zeros for slots the seed does not reach).
    pub fn backward(&self, eval: &Evaluation, seed: NodeId) -> Result<Vec<f64>> {
        if seed >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!("backward seed {seed} is not a node")));
        }
        if !self.nodes[seed].shape.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "backward seed must be a scalar node, node {seed} has shape {:?}",
                self.nodes[seed].shape
            )));
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; self.nodes.len()];
        grads[seed] = Some(DenseArray::scalar(1.0));
        let mut param_grad = vec![0.0; self.param_len];

        for id in (0..=seed).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input(_) | Op::Const(_) => {}
                Op::Param(slot) => {
                    let start = self.slot_offsets[*slot];
                    for (p, gv) in param_grad[start..start + g.data.len()].iter_mut().zip(&g.data)
                    {
                        *p += gv;
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&eval.values[*a], &eval.values[*b]);
                    let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[1]);
                    // dA = dC · Bᵀ
                    let mut da = DenseArray::zeros(&[m, k]);
                    for i in 0..m {
                        let gr = &g.data[i * n..(i + 1) * n];
                        let orow = &mut da.data[i * k..(i + 1) * k];
                        for (j, o) in orow.iter_mut().enumerate() {
                            *o = gr
                                .iter()
                                .enumerate()
                                .map(|(c, gv)| gv * vb.data[j * n + c])
                                .sum();
                        }
                    }
                    // dB = Aᵀ · dC
                    let mut db = DenseArray::zeros(&[k, n]);
                    for r in 0..m {
                        for j in 0..k {
                            let av = va.data[r * k + j];
                            if av != 0.0 {
                                let gr = &g.data[r * n..(r + 1) * n];
                                let brow = &mut db.data[j * n..(j + 1) * n];
                                for (o, gv) in brow.iter_mut().zip(gr) {
                                    *o += av * gv;
                                }
                            }
                        }
                    }
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
                Op::MatMulNT(a, b) => {
                    let (va, vb) = (&eval.values[*a], &eval.values[*b]);
                    let (m, k, n) = (va.shape[0], va.shape[1], vb.shape[0]);
                    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                    let mut da = DenseArray::zeros(&[m, k]);
                    matmul_acc(&g.data, m, n, &vb.data, k, &mut da.data);
                    let mut db = DenseArray::zeros(&[n, k]);
                    for r in 0..m {
                        let ra = &va.data[r * k..(r + 1) * k];
                        let gr = &g.data[r * n..(r + 1) * n];
                        for (j, gv) in gr.iter().enumerate() {
                            if *gv != 0.0 {
                                let brow = &mut db.data[j * k..(j + 1) * k];
                                for (o, av) in brow.iter_mut().zip(ra) {
                                    *o += gv * av;
                                }
                            }
                        }
                    }
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    let same = eval.values[*a].shape == eval.values[*b].shape;
                    if same {
                        accum(&mut grads, *b, g.clone());
                    } else {
                        let n = eval.values[*b].data.len();
                        let mut db = DenseArray::zeros(&[n]);
                        for row in g.data.chunks(n) {
                            for (o, gv) in db.data.iter_mut().zip(row) {
                                *o += gv;
                            }
                        }
                        accum(&mut grads, *b, db);
                    }
                    accum(&mut grads, *a, g);
                }
                Op::Scale(a, c) => {
                    let mut da = g;
                    for o in &mut da.data {
                        *o *= c;
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Relu(a) => {
                    let va = &eval.values[*a];
                    let mut da = g;
                    for (o, x) in da.data.iter_mut().zip(&va.data) {
                        if *x <= 0.0 {
                            *o = 0.0;
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Exp(a) => {
                    let y = &eval.values[id];
                    let mut da = g;
                    for (o, x) in da.data.iter_mut().zip(&y.data) {
                        *o *= x;
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Log(a) => {
                    let va = &eval.values[*a];
                    let mut da = g;
                    for (o, x) in da.data.iter_mut().zip(&va.data) {
                        *o /= x;
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&eval.values[*a], &eval.values[*b]);
                    let mut da = g.clone();
                    for (o, x) in da.data.iter_mut().zip(&vb.data) {
                        *o *= x;
                    }
                    let mut db = g;
                    for (o, x) in db.data.iter_mut().zip(&va.data) {
                        *o *= x;
                    }
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&eval.values[*a], &eval.values[*b]);
                    if vb.is_scalar() {
                        let d = vb.data[0];
                        let mut da = g.clone();
                        for o in &mut da.data {
                            *o /= d;
                        }
                        let s: f64 =
                            g.data.iter().zip(&va.data).map(|(gv, x)| gv * x).sum();
                        accum(&mut grads, *a, da);
                        accum(&mut grads, *b, DenseArray::scalar(-s / (d * d)));
                    } else {
                        let mut da = g.clone();
                        for (o, x) in da.data.iter_mut().zip(&vb.data) {
                            *o /= x;
                        }
                        let mut db = g;
                        for ((o, x), d) in db.data.iter_mut().zip(&va.data).zip(&vb.data) {
                            *o *= -x / (d * d);
                        }
                        accum(&mut grads, *a, da);
                        accum(&mut grads, *b, db);
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.data[0];
                    let mut da = DenseArray::zeros(&self.nodes[*a].shape);
                    for o in &mut da.data {
                        *o = gv;
                    }
                    accum(&mut grads, *a, da);
                }
                Op::MeanAll(a) => {
                    let len = eval.values[*a].data.len();
                    let gv = g.data[0] / len as f64;
                    let mut da = DenseArray::zeros(&self.nodes[*a].shape);
                    for o in &mut da.data {
                        *o = gv;
                    }
                    accum(&mut grads, *a, da);
                }
                Op::SumRows(a) => {
                    let va = &eval.values[*a];
                    let (m, n) = (va.shape[0], va.shape[1]);
                    let mut da = DenseArray::zeros(&[m, n]);
                    for i in 0..m {
                        let gv = g.data[i];
                        for o in &mut da.data[i * n..(i + 1) * n] {
                            *o = gv;
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::L2NormRows(a) => {
                    let va = &eval.values[*a];
                    let y = &eval.values[id];
                    let n = va.shape[1];
                    let mut da = DenseArray::zeros(va.shape());
                    for (i, vrow) in va.data.chunks(n).enumerate() {
                        let norm = dot_slices(vrow, vrow).sqrt();
                        if norm < 1e-12 {
                            continue; // degenerate rows carry no gradient
                        }
                        let yrow = &y.data[i * n..(i + 1) * n];
                        let grow = &g.data[i * n..(i + 1) * n];
                        let gy = dot_slices(grow, yrow);
                        let orow = &mut da.data[i * n..(i + 1) * n];
                        for ((o, gv), yv) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o = (gv - gy * yv) / norm;
                        }
                    }
                    accum(&mut grads, *a, da);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (&eval.values[*a], &eval.values[*b]);
                    let gv = g.data[0];
                    let mut da = vb.clone();
                    for o in &mut da.data {
                        *o *= gv;
                    }
                    let mut db = va.clone();
                    for o in &mut db.data {
                        *o *= gv;
                    }
                    accum(&mut grads, *a, da);
                    accum(&mut grads, *b, db);
                }
            }
        }
        Ok(param_grad)
    }
}

fn accum(grads: &mut [Option<DenseArray>], id: NodeId, delta: DenseArray) {
    match &mut grads[id] {
        Some(g) => {
            for (o, d) in g.data.iter_mut().zip(&delta.data) {
                *o += d;
            }
        }
        slot => *slot = Some(delta),
    }
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += A (m,k) · B (k,n)`, ikj order for row-major locality.
fn matmul_acc(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, av) in arow.iter().enumerate() {
            if *av != 0.0 {
                let brow = &b[kk * n..(kk + 1) * n];
                for (o, bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

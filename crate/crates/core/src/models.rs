//! Encoder and discriminator networks.
//!
//! Both are plain MLPs over the tensorcore graph. The encoder ends in a
//! row-wise L2 normalization so every representation lives on the unit
//! sphere; the discriminator ends in K logits, with the softmax applied by
//! [`discriminate`] / the log-softmax inside [`phi`].
//!
//! Parameter layout is flat and fixed: for each layer, the weight matrix
//! (fan_in x fan_out, row-major) followed by its bias, layers in input-to-
//! output order. Initialization draws uniform values in
//! [-1/sqrt(fan_in), +1/sqrt(fan_in)] from a caller-supplied RNG in exactly
//! that storage order — checkpoints and reproducibility depend on it.

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensorcore::{DenseArray, Graph, GraphBuilder, NodeId};

/// Encoder shape: `d_in -> hidden... -> d`, ReLU between layers, unit-norm
/// output rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub d: usize,
}

/// Discriminator shape: `d -> hidden... -> k` logits. An empty `hidden` is
/// the linear-head configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminatorSpec {
    pub d: usize,
    pub hidden: Vec<usize>,
    pub k: usize,
}

impl EncoderSpec {
    /// Default desk-scale encoder for a given input width.
    pub fn default_for(d_in: usize) -> EncoderSpec {
        EncoderSpec { d_in, hidden: vec![64, 32], d: 16 }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_in];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.d);
        dims
    }

    pub fn param_len(&self) -> usize {
        mlp_param_len(&self.dims())
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        mlp_init(&self.dims(), rng)
    }

    /// Append the encoder to a graph under parameter slots `{prefix}.w{l}` /
    /// `{prefix}.b{l}`; returns the unit-norm output node for `input`
    /// (a rows x d_in matrix node).
    pub fn build(&self, gb: &mut GraphBuilder, prefix: &str, input: NodeId) -> Result<NodeId> {
        let pre = build_mlp(gb, prefix, &self.dims(), input)?;
        gb.l2_normalize_rows(pre)
    }
}

impl DiscriminatorSpec {
    /// Default two-layer discriminator head over d-dimensional representations.
    pub fn default_for(d: usize, k: usize) -> DiscriminatorSpec {
        DiscriminatorSpec { d, hidden: vec![32], k }
    }

    pub fn linear_for(d: usize, k: usize) -> DiscriminatorSpec {
        DiscriminatorSpec { d, hidden: vec![], k }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.k);
        dims
    }

    pub fn param_len(&self) -> usize {
        mlp_param_len(&self.dims())
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        mlp_init(&self.dims(), rng)
    }

    /// Append the discriminator to a graph; returns the logits node
    /// (rows x k) for `input` (rows x d).
    pub fn build_logits(&self, gb: &mut GraphBuilder, prefix: &str, input: NodeId) -> Result<NodeId> {
        build_mlp(gb, prefix, &self.dims(), input)
    }
}

fn mlp_param_len(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn mlp_init(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut params = Vec::with_capacity(mlp_param_len(dims));
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for _ in 0..fan_in * fan_out + fan_out {
            params.push(dist.sample(rng));
        }
    }
    params
}

/// Linear layers with ReLU between them (none after the last).
fn build_mlp(gb: &mut GraphBuilder, prefix: &str, dims: &[usize], input: NodeId) -> Result<NodeId> {
    let mut h = input;
    let n_layers = dims.len() - 1;
    for l in 0..n_layers {
        let w = gb.param(&format!("{prefix}.w{l}"), &[dims[l], dims[l + 1]]);
        let b = gb.param(&format!("{prefix}.b{l}"), &[dims[l + 1]]);
        h = gb.matmul(h, w)?;
        h = gb.add(h, b)?;
        if l + 1 < n_layers {
            h = gb.relu(h);
        }
    }
    Ok(h)
}

fn check_param_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidArgument(format!(
            "{what} parameter vector has {got} elements, spec needs {want}"
        )));
    }
    Ok(())
}

/// Encode a batch of raw feature rows into unit-norm representations.
pub fn encode_batch(spec: &EncoderSpec, w: &[f64], x: &DenseArray) -> Result<DenseArray> {
    check_param_len("encoder", w.len(), spec.param_len())?;
    if x.shape().len() != 2 || x.shape()[1] != spec.d_in {
        return Err(Error::Shape {
            context: format!("encode input shape {:?}, encoder wants (rows, {})", x.shape(), spec.d_in),
        });
    }
    let mut gb = GraphBuilder::new();
    let input = gb.input("x", x.shape());
    let out = spec.build(&mut gb, "enc", input)?;
    let graph = gb.build();
    let eval = graph.forward(w, &[("x", x)])?;
    Ok(eval.value(out).clone())
}

/// Encode a single feature vector; the result has exactly unit norm (up to
/// the normalization op's own arithmetic).
pub fn encode(spec: &EncoderSpec, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let arr = DenseArray::from_vec(&[1, x.len()], x.to_vec())?;
    Ok(encode_batch(spec, w, &arr)?.data().to_vec())
}

/// Class probabilities of the discriminator at representation `v`; sums to 1.
pub fn discriminate(spec: &DiscriminatorSpec, wp: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_param_len("discriminator", wp.len(), spec.param_len())?;
    if v.len() != spec.d {
        return Err(Error::Shape {
            context: format!("discriminate input has {} dims, spec wants {}", v.len(), spec.d),
        });
    }
    let mut gb = GraphBuilder::new();
    let input = gb.input("v", &[1, spec.d]);
    let logits = spec.build_logits(&mut gb, "disc", input)?;
    let ex = gb.exp(logits);
    let z = gb.sum_all(ex);
    let probs = gb.div(ex, z)?;
    let graph = gb.build();
    let eval = graph.forward(wp, &[("v", &DenseArray::from_vec(&[1, spec.d], v.to_vec())?)])?;
    Ok(eval.value(probs).data().to_vec())
}

/// Graph computing per-row `phi = log softmax(logits)[attr]` over augmented
/// views, plus its mean. `rows` feature rows go in as input `views`
/// (rows x d_in), the one-hot attribute selectors as `onehot` (rows x k).
///
/// Slots: encoder under `enc.*`, then discriminator under `disc.*`, so the
/// flat parameter vector is `[w | w']`.
pub struct PhiGraph {
    pub graph: Graph,
    pub phi_rows: NodeId,
    pub mean: NodeId,
    pub w_len: usize,
    pub wp_len: usize,
}

pub fn build_phi_graph(
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    rows: usize,
) -> Result<PhiGraph> {
    if enc.d != disc.d {
        return Err(Error::Shape {
            context: format!("encoder output dim {} vs discriminator input dim {}", enc.d, disc.d),
        });
    }
    let mut gb = GraphBuilder::new();
    let views = gb.input("views", &[rows, enc.d_in]);
    let onehot = gb.input("onehot", &[rows, disc.k]);
    let (phi_rows, mean) = append_phi(&mut gb, enc, disc, views, onehot)?;
    let graph = gb.build();
    Ok(PhiGraph {
        graph,
        phi_rows,
        mean,
        w_len: enc.param_len(),
        wp_len: disc.param_len(),
    })
}

/// Append the attribute log-likelihood chain (encode, discriminate, log
/// softmax at the true class) to an existing graph; returns the per-row phi
/// vector and its mean. Parameters land in the shared `enc.*` / `disc.*`
/// slots.
pub(crate) fn append_phi(
    gb: &mut GraphBuilder,
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    views: NodeId,
    onehot: NodeId,
) -> Result<(NodeId, NodeId)> {
    let reps = enc.build(gb, "enc", views)?;
    let logits = disc.build_logits(gb, "disc", reps)?;
    // log softmax picked at the true attribute: logit_a - log sum_k exp(logit_k)
    let sel = gb.mul(logits, onehot)?;
    let sel = gb.sum_rows(sel)?;
    let ex = gb.exp(logits);
    let z = gb.sum_rows(ex)?;
    let logz = gb.log(z);
    let neg_logz = gb.scale(logz, -1.0);
    // vectors of equal length: plain elementwise add
    let phi_rows = gb.add(sel, neg_logz)?;
    let mean = gb.mean_all(phi_rows);
    Ok((phi_rows, mean))
}

/// One-hot encode attribute indices into a rows x k input array.
pub fn onehot_rows(attrs: &[u32], k: usize) -> Result<DenseArray> {
    let mut data = vec![0.0; attrs.len() * k];
    for (i, &a) in attrs.iter().enumerate() {
        if a as usize >= k {
            return Err(Error::InvalidArgument(format!(
                "attribute {a} out of range for {k} classes"
            )));
        }
        data[i * k + a as usize] = 1.0;
    }
    DenseArray::from_vec(&[attrs.len(), k], data)
}

/// Log-probability the discriminator assigns to attribute `a` at the encoded
/// view: `phi(w, w'; view, a) = log [D(E(view))]_a`. Always <= 0.
pub fn phi(
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    w: &[f64],
    wp: &[f64],
    view: &[f64],
    a: u32,
) -> Result<f64> {
    check_param_len("encoder", w.len(), enc.param_len())?;
    check_param_len("discriminator", wp.len(), disc.param_len())?;
    let pg = build_phi_graph(enc, disc, 1)?;
    let views = DenseArray::from_vec(&[1, enc.d_in], view.to_vec())?;
    let onehot = onehot_rows(&[a], disc.k)?;
    let mut params = w.to_vec();
    params.extend_from_slice(wp);
    let eval = pg.graph.forward(&params, &[("views", &views), ("onehot", &onehot)])?;
    Ok(eval.value(pg.mean).item())
}

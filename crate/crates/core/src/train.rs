//! The adversarial contrastive training loop: batched loss-graph assembly,
//! the per-sample partition estimates and their moving-average update, the
//! primal gradient with momentum or Adam, dual ascent on the discriminator,
//! and the theoretical step-size schedule.
//!
//! Update order within one iteration: sample batches, refresh the sampled
//! u entries from this batch's estimates, then form the primal gradient with
//! those refreshed values in the denominators. [`primal_grad`] as a
//! standalone operation is passive about u — it uses whatever the state
//! currently holds and hands back the fresh estimates for the caller.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{shuffle, AugPair, Dataset};
use crate::error::{Error, Result};
use crate::fairness::{dual_grad, fair_loss, FairBatch};
use crate::gcl::{deterministic_views, minibatch_cl, update_u, GCLConfig};
use crate::models::{append_phi, DiscriminatorSpec, EncoderSpec};
use crate::rng::{stream, Stream};
use crate::tensorcore::{DenseArray, Graph, GraphBuilder, NodeId};

/// Number of dual ascent steps taken before the first iteration so the
/// discriminator starts near its best response to the initial encoder.
pub const DUAL_WARM_START_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Momentum,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Optimizer> {
        match s {
            "momentum" => Ok(Optimizer::Momentum),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer `{other}` (momentum or adam)"
            ))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Optimizer::Momentum => write!(f, "momentum"),
            Optimizer::Adam => write!(f, "adam"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the adversarial term; 0 disables everything fairness-related.
    pub alpha: f64,
    /// Momentum blend rate for m-tilde, in (0, 1].
    pub beta: f64,
    /// Moving-average rate for the u estimates, in (0, 1).
    pub gamma: f64,
    /// Primal step size (>= 0; 0 freezes the encoder).
    pub eta: f64,
    /// Dual step size (>= 0; 0 freezes the discriminator).
    pub eta_prime: f64,
    pub batch_main: usize,
    pub batch_attr: usize,
    pub iters: usize,
    pub optimizer: Optimizer,
    /// Curvature heuristic for the schedule; never estimated.
    pub lambda_hint: f64,
    pub seed: u64,
    pub encoder: EncoderSpec,
    pub discriminator: DiscriminatorSpec,
    pub gcl: GCLConfig,
    pub aug: AugPair,
}

impl TrainConfig {
    /// Sensible desk-scale defaults; batch sizes and iteration count still
    /// need to fit the dataset at hand.
    pub fn desk_scale(encoder: EncoderSpec, discriminator: DiscriminatorSpec, seed: u64) -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 0.1,
            gamma: 0.9,
            eta: 1e-3,
            eta_prime: 0.05,
            batch_main: 64,
            batch_attr: 16,
            iters: 2000,
            optimizer: Optimizer::Adam,
            lambda_hint: 1.0,
            seed,
            encoder,
            discriminator,
            gcl: GCLConfig::default(),
            aug: AugPair::default(),
        }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        // 0 is allowed so diagnostics can freeze one side of the game
        if !(self.eta >= 0.0) || !(self.eta_prime >= 0.0) {
            return bad(format!(
                "step sizes must be >= 0, got eta {} / eta_prime {}",
                self.eta, self.eta_prime
            ));
        }
        if !(self.lambda_hint > 0.0) {
            return bad(format!("lambda_hint must be > 0, got {}", self.lambda_hint));
        }
        if self.batch_main < 2 || self.batch_main > ds.n {
            return bad(format!(
                "batch_main {} outside [2, {}] for this dataset",
                self.batch_main, ds.n
            ));
        }
        if self.encoder.d_in != ds.d_in {
            return bad(format!(
                "encoder expects d_in {}, dataset has {}",
                self.encoder.d_in, ds.d_in
            ));
        }
        self.gcl.validate()?;
        self.aug.a.validate()?;
        self.aug.b.validate()?;
        if self.alpha > 0.0 {
            let ann = ds.annotated_indices().len();
            if self.batch_attr < 2 || self.batch_attr > ann {
                return bad(format!(
                    "batch_attr {} outside [2, {ann}] (annotated samples)",
                    self.batch_attr
                ));
            }
            if ds.k < 2 {
                return bad("adversarial training needs at least 2 attribute classes".into());
            }
            if self.discriminator.k != ds.k {
                return bad(format!(
                    "discriminator predicts {} classes, dataset has {}",
                    self.discriminator.k, ds.k
                ));
            }
            if self.discriminator.d != self.encoder.d {
                return bad(format!(
                    "discriminator input dim {} vs encoder output dim {}",
                    self.discriminator.d, self.encoder.d
                ));
            }
        }
        Ok(())
    }
}

// ── batches ──

/// A main batch with both views materialized (stochastic parameters drawn at
/// construction: per sample, first view then second). Rows 0..B are first
/// views, rows B..2B second views.
#[derive(Debug, Clone, PartialEq)]
pub struct MainBatch {
    pub indices: Vec<usize>,
    pub views: DenseArray,
}

impl MainBatch {
    pub fn materialize(
        ds: &Dataset,
        indices: &[usize],
        pair: &AugPair,
        rng: &mut ChaCha8Rng,
    ) -> Result<MainBatch> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("main batch is empty".into()));
        }
        let b = indices.len();
        let mut rows = vec![0.0; 2 * b * ds.d_in];
        for (j, &i) in indices.iter().enumerate() {
            let x = ds.feature_row(i);
            let va = pair.a.apply(x, rng);
            let vb = pair.b.apply(x, rng);
            rows[j * ds.d_in..(j + 1) * ds.d_in].copy_from_slice(&va);
            rows[(b + j) * ds.d_in..(b + j + 1) * ds.d_in].copy_from_slice(&vb);
        }
        Ok(MainBatch {
            indices: indices.to_vec(),
            views: DenseArray::from_vec(&[2 * b, ds.d_in], rows)?,
        })
    }

    /// Deterministic-view variant for exactness tests and enumeration.
    pub fn deterministic(ds: &Dataset, indices: &[usize], pair: &AugPair) -> Result<MainBatch> {
        let (xa, xb) = deterministic_views(ds, indices, pair)?;
        let b = indices.len();
        let mut rows = Vec::with_capacity(2 * b * ds.d_in);
        rows.extend_from_slice(xa.data());
        rows.extend_from_slice(xb.data());
        Ok(MainBatch {
            indices: indices.to_vec(),
            views: DenseArray::from_vec(&[2 * b, ds.d_in], rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

// ── loss graph ──

/// One differentiable graph covering the whole per-iteration objective:
/// `f1_mean + dot(g_rows, wfull) + alpha * fair_mean`. `g_rows` holds the
/// per-anchor negative-similarity means (2B entries, first-view anchors then
/// second-view anchors); `wfull` is an input so the same forward pass serves
/// both reading the estimates (wfull = 0) and taking gradients with the
/// refreshed denominators.
pub struct LossGraph {
    pub graph: Graph,
    /// Unit-norm embeddings of the 2B main views.
    pub emb: NodeId,
    /// Per-anchor negative means; only present for B >= 2.
    pub g_rows: Option<NodeId>,
    pub f1_mean: Option<NodeId>,
    pub fair_mean: Option<NodeId>,
    pub objective: NodeId,
    pub w_len: usize,
    pub wp_len: usize,
    pub b: usize,
}

/// `fair` carries the discriminator and |B_a| when the adversarial term is
/// active. A single-sample main batch has no positive/negative structure, so
/// its whole contrastive term is dropped (the objective is then purely the
/// weighted fairness term).
pub fn build_loss_graph(
    enc: &EncoderSpec,
    fair: Option<(&DiscriminatorSpec, usize)>,
    b: usize,
    alpha: f64,
    tau: f64,
) -> Result<LossGraph> {
    if b == 0 {
        return Err(Error::InvalidArgument("main batch is empty".into()));
    }
    if fair.is_none() && b < 2 {
        return Err(Error::InvalidArgument(
            "a single-sample batch with no fairness term has an empty objective".into(),
        ));
    }
    let mut gb = GraphBuilder::new();
    let views = gb.input("views", &[2 * b, enc.d_in]);
    let emb = enc.build(&mut gb, "enc", views)?;

    let mut gcl_nodes = None;
    if b >= 2 {
        let wfull = gb.input("wfull", &[2 * b]);
        let sims = gb.matmul_nt(emb, emb)?;
        let scaled = gb.scale(sims, 1.0 / tau);
        let expd = gb.exp(scaled);
        // negatives of anchor row r (sample i = r mod B): everything except
        // the two views of i itself
        let mut mneg = vec![1.0; 4 * b * b];
        for r in 0..2 * b {
            let i = r % b;
            mneg[r * 2 * b + i] = 0.0;
            mneg[r * 2 * b + b + i] = 0.0;
        }
        let mneg = gb.constant(DenseArray::from_vec(&[2 * b, 2 * b], mneg)?);
        let masked = gb.mul(expd, mneg)?;
        let sums = gb.sum_rows(masked)?;
        let g_rows = gb.scale(sums, 1.0 / (2 * (b - 1)) as f64);
        let g_term = gb.dot(g_rows, wfull)?;
        // alignment: mean over first-view anchors of -sim(view_a_i, view_b_i)
        let mut mpos = vec![0.0; 4 * b * b];
        for i in 0..b {
            mpos[i * 2 * b + b + i] = 1.0;
        }
        let mpos = gb.constant(DenseArray::from_vec(&[2 * b, 2 * b], mpos)?);
        let pos = gb.mul(sims, mpos)?;
        let pos_sum = gb.sum_all(pos);
        let f1_mean = gb.scale(pos_sum, -1.0 / b as f64);
        let gcl = gb.add(f1_mean, g_term)?;
        gcl_nodes = Some((g_rows, f1_mean, gcl));
    }

    let mut fair_mean = None;
    let mut wp_len = 0;
    if let Some((disc, ba)) = fair {
        if ba == 0 {
            return Err(Error::InvalidArgument("attribute batch is empty".into()));
        }
        let aviews = gb.input("aviews", &[2 * ba, enc.d_in]);
        let onehot = gb.input("onehot", &[2 * ba, disc.k]);
        let (_, mean) = append_phi(&mut gb, enc, disc, aviews, onehot)?;
        fair_mean = Some(mean);
        wp_len = disc.param_len();
    }

    let objective = match (&gcl_nodes, fair_mean) {
        (Some((_, _, gcl)), Some(fm)) => {
            let weighted = gb.scale(fm, alpha);
            gb.add(*gcl, weighted)?
        }
        (Some((_, _, gcl)), None) => *gcl,
        (None, Some(fm)) => gb.scale(fm, alpha),
        (None, None) => unreachable!("rejected above"),
    };
    Ok(LossGraph {
        graph: gb.build(),
        emb,
        g_rows: gcl_nodes.as_ref().map(|(g, _, _)| *g),
        f1_mean: gcl_nodes.as_ref().map(|(_, f, _)| *f),
        fair_mean,
        objective,
        w_len: enc.param_len(),
        wp_len,
        b,
    })
}

// ── state ──

/// Everything the loop mutates. All fields are public and serializable so a
/// checkpointed run resumes bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Vec<f64>,
    pub w_prime: Vec<f64>,
    /// Per-sample partition estimates, length = dataset size.
    pub u: Vec<f64>,
    pub m_tilde: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    /// Completed iterations.
    pub t: usize,
    /// eps0 / (2(n-1)), frozen against the training dataset at init.
    pub eps0_prime: f64,
    pub seed: u64,
    pub epoch_perm: Vec<usize>,
    pub epoch_pos: usize,
    pub annotated: Vec<usize>,
    pub rng_batch_main: ChaCha8Rng,
    pub rng_batch_attr: ChaCha8Rng,
    pub rng_aug_main: ChaCha8Rng,
    pub rng_aug_attr: ChaCha8Rng,
}

impl TrainState {
    /// Initialization: parameters from their dedicated streams, u filled by
    /// one permuted pass over the dataset in batch-sized chunks (a short
    /// final chunk merges into its predecessor so every sample sees
    /// negatives), then the dual warm start when the adversarial term is
    /// active.
    pub fn init(cfg: &TrainConfig, ds: &Dataset) -> Result<TrainState> {
        cfg.validate(ds)?;
        let w = cfg.encoder.init_params(&mut stream(cfg.seed, Stream::InitEncoder));
        let w_prime = if cfg.alpha > 0.0 {
            cfg.discriminator.init_params(&mut stream(cfg.seed, Stream::InitDiscriminator))
        } else {
            Vec::new()
        };
        let w_len = w.len();
        let mut st = TrainState {
            w,
            w_prime,
            u: vec![0.0; ds.n],
            m_tilde: vec![0.0; w_len],
            adam_m: vec![0.0; w_len],
            adam_v: vec![0.0; w_len],
            t: 0,
            eps0_prime: cfg.gcl.eps0_prime(2 * (ds.n - 1)),
            seed: cfg.seed,
            epoch_perm: (0..ds.n).collect(),
            epoch_pos: 0,
            annotated: ds.annotated_indices(),
            rng_batch_main: stream(cfg.seed, Stream::BatchMain),
            rng_batch_attr: stream(cfg.seed, Stream::BatchAttr),
            rng_aug_main: stream(cfg.seed, Stream::AugmentMain),
            rng_aug_attr: stream(cfg.seed, Stream::AugmentAttr),
        };

        // u pass: chunked full cover of the dataset
        shuffle(&mut st.epoch_perm, &mut st.rng_batch_main);
        let mut starts: Vec<usize> = (0..ds.n).step_by(cfg.batch_main).collect();
        if ds.n - starts[starts.len() - 1] < 2 && starts.len() > 1 {
            starts.pop(); // fold a lone trailing sample into the last chunk
        }
        for (si, &s) in starts.iter().enumerate() {
            let end = if si + 1 < starts.len() { starts[si + 1] } else { ds.n };
            let chunk = st.epoch_perm[s..end].to_vec();
            let main = MainBatch::materialize(ds, &chunk, &cfg.aug, &mut st.rng_aug_main)?;
            let lg = build_loss_graph(&cfg.encoder, None, chunk.len(), 0.0, cfg.gcl.tau)?;
            let wfull = DenseArray::zeros(&[2 * chunk.len()]);
            let eval = lg
                .graph
                .forward(&st.w, &[("views", &main.views), ("wfull", &wfull)])?;
            let g_rows = eval.value(lg.g_rows.expect("b >= 2"));
            for (j, &i) in chunk.iter().enumerate() {
                st.u[i] = 0.5 * (g_rows.data()[j] + g_rows.data()[chunk.len() + j]);
            }
        }
        st.epoch_pos = ds.n; // training starts with a fresh permutation

        // dual warm start: ascent on freshly sampled attribute batches
        if cfg.alpha > 0.0 {
            for _ in 0..DUAL_WARM_START_STEPS {
                let batch = st.sample_attr(cfg, ds)?.expect("alpha > 0");
                let v = dual_grad(&cfg.encoder, &cfg.discriminator, &st.w, &st.w_prime, &batch)?;
                for (p, vi) in st.w_prime.iter_mut().zip(&v) {
                    *p += cfg.eta_prime * vi;
                }
            }
        }
        Ok(st)
    }

    /// Next main-batch indices: walk the epoch permutation, reshuffling and
    /// dropping the remainder whenever fewer than a full batch is left.
    pub fn sample_main_indices(&mut self, cfg: &TrainConfig) -> Vec<usize> {
        let n = self.epoch_perm.len();
        if self.epoch_pos + cfg.batch_main > n {
            shuffle(&mut self.epoch_perm, &mut self.rng_batch_main);
            self.epoch_pos = 0;
        }
        let out = self.epoch_perm[self.epoch_pos..self.epoch_pos + cfg.batch_main].to_vec();
        self.epoch_pos += cfg.batch_main;
        out
    }

    /// Attribute batch, sampled uniformly with replacement from the
    /// annotated pool. `None` when the adversarial term is off (the
    /// attribute streams are then never advanced).
    pub fn sample_attr(&mut self, cfg: &TrainConfig, ds: &Dataset) -> Result<Option<FairBatch>> {
        if cfg.alpha == 0.0 {
            return Ok(None);
        }
        let mut idx = Vec::with_capacity(cfg.batch_attr);
        for _ in 0..cfg.batch_attr {
            idx.push(self.annotated[self.rng_batch_attr.gen_range(0..self.annotated.len())]);
        }
        Ok(Some(FairBatch::materialize(ds, &idx, &cfg.aug, &mut self.rng_aug_attr)?))
    }
}

/// Per-anchor weights for the partition-gradient term: entries i and B+i are
/// `tau / (2B (eps0_prime + u_i))`.
fn wfull_from_u(cfg: &TrainConfig, eps0_prime: f64, u: &[f64], indices: &[usize]) -> DenseArray {
    let b = indices.len();
    let mut w = vec![0.0; 2 * b];
    for (j, &i) in indices.iter().enumerate() {
        let coef = cfg.gcl.tau / (2.0 * b as f64 * (eps0_prime + u[i]));
        w[j] = coef;
        w[b + j] = coef;
    }
    DenseArray::from_vec(&[2 * b], w).expect("shape by construction")
}

fn loss_inputs<'a>(
    lg: &LossGraph,
    main: &'a MainBatch,
    wfull: &'a DenseArray,
    attr: Option<&'a (DenseArray, DenseArray)>,
) -> Vec<(&'a str, &'a DenseArray)> {
    let mut inputs: Vec<(&str, &DenseArray)> = vec![("views", &main.views)];
    if lg.g_rows.is_some() {
        inputs.push(("wfull", wfull));
    }
    if let Some((aviews, onehot)) = attr {
        inputs.push(("aviews", aviews));
        inputs.push(("onehot", onehot));
    }
    inputs
}

/// The stochastic primal gradient and this batch's per-sample partition
/// estimates. Uses the u values currently in `state` for the denominators;
/// callers wanting the refreshed-denominator variant update u from the
/// returned estimates first and call again (the training step does this with
/// a shared forward pass instead).
pub fn primal_grad(
    cfg: &TrainConfig,
    state: &TrainState,
    main: &MainBatch,
    attr: Option<&FairBatch>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.alpha > 0.0 && attr.is_none() {
        return Err(Error::InvalidArgument(
            "alpha > 0 needs an attribute batch for the primal gradient".into(),
        ));
    }
    let b = main.len();
    if b >= 2 {
        for &i in &main.indices {
            if !(state.u[i] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "u[{i}] = {} must be positive before taking gradients",
                    state.u[i]
                )));
            }
        }
    }
    let fair_spec = attr.filter(|_| cfg.alpha > 0.0).map(|a| (&cfg.discriminator, a.len()));
    let lg = build_loss_graph(&cfg.encoder, fair_spec, b, cfg.alpha, cfg.gcl.tau)?;
    let wfull = if b >= 2 {
        wfull_from_u(cfg, state.eps0_prime, &state.u, &main.indices)
    } else {
        DenseArray::zeros(&[2 * b])
    };
    let stacked = match attr.filter(|_| cfg.alpha > 0.0) {
        Some(a) => Some(a.stacked()?),
        None => None,
    };
    let mut params = state.w.clone();
    if lg.wp_len > 0 {
        params.extend_from_slice(&state.w_prime);
    }
    let eval = lg.graph.forward(&params, &loss_inputs(&lg, main, &wfull, stacked.as_ref()))?;
    let grad = lg.graph.backward(&eval, lg.objective)?;
    let ghat = match lg.g_rows {
        Some(id) => {
            let rows = eval.value(id).data();
            (0..b).map(|j| 0.5 * (rows[j] + rows[b + j])).collect()
        }
        None => vec![0.0; b], // no negatives, no estimate
    };
    Ok((grad[..lg.w_len].to_vec(), ghat))
}

// ── per-iteration record ──

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Minibatch contrastive loss of this step's views (diagnostic).
    pub gcl: f64,
    /// Fairness term value at the pre-update parameters; NaN when alpha = 0.
    pub fair: f64,
    /// l2 norm of the momentum buffer after the update.
    pub grad_norm: f64,
    /// Discriminator log-likelihood on this step's attribute views after
    /// both updates; NaN when alpha = 0.
    pub dual_ll: f64,
    /// Wall-clock milliseconds for the iteration.
    pub ms: f64,
}

impl StepRecord {
    /// Value equality that treats NaN as equal to itself and ignores wall
    /// time, for determinism checks.
    pub fn same_values(&self, other: &StepRecord) -> bool {
        self.t == other.t
            && self.gcl.to_bits() == other.gcl.to_bits()
            && self.fair.to_bits() == other.fair.to_bits()
            && self.grad_norm.to_bits() == other.grad_norm.to_bits()
            && self.dual_ll.to_bits() == other.dual_ll.to_bits()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<StepRecord>,
}

impl History {
    pub fn same_values(&self, other: &History) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_values(b))
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("t,gcl,fair,grad_norm,dual_ll,ms\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.t, r.gcl, r.fair, r.grad_norm, r.dual_ll, r.ms
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

// ── the loop ──

/// One full iteration: sample, refresh u at the sampled indices, primal
/// gradient with the refreshed denominators, momentum/Adam primal update,
/// dual ascent.
pub fn step(state: &mut TrainState, cfg: &TrainConfig, ds: &Dataset) -> Result<StepRecord> {
    let t0 = Instant::now();
    let idx = state.sample_main_indices(cfg);
    let main = MainBatch::materialize(ds, &idx, &cfg.aug, &mut state.rng_aug_main)?;
    let attr = state.sample_attr(cfg, ds)?;
    let b = main.len();

    let fair_spec = attr.as_ref().map(|a| (&cfg.discriminator, a.len()));
    let lg = build_loss_graph(&cfg.encoder, fair_spec, b, cfg.alpha, cfg.gcl.tau)?;
    let stacked = match &attr {
        Some(a) => Some(a.stacked()?),
        None => None,
    };
    let mut params = state.w.clone();
    if lg.wp_len > 0 {
        params.extend_from_slice(&state.w_prime);
    }

    // pass 1 reads the batch estimates (wfull = 0 leaves them untouched)
    let zeros = DenseArray::zeros(&[2 * b]);
    let eval = lg.graph.forward(&params, &loss_inputs(&lg, &main, &zeros, stacked.as_ref()))?;
    let g_rows = eval.value(lg.g_rows.expect("batch_main >= 2")).data().to_vec();
    for (j, &i) in idx.iter().enumerate() {
        state.u[i] = update_u(state.u[i], g_rows[j], g_rows[b + j], cfg.gamma);
    }

    // pass 2 differentiates with the refreshed denominators
    let wfull = wfull_from_u(cfg, state.eps0_prime, &state.u, &idx);
    let eval = lg.graph.forward(&params, &loss_inputs(&lg, &main, &wfull, stacked.as_ref()))?;
    let grad = lg.graph.backward(&eval, lg.objective)?;
    let m = &grad[..lg.w_len];
    let v: Option<Vec<f64>> = match lg.fair_mean {
        Some(fm) => {
            let g = lg.graph.backward(&eval, fm)?;
            Some(g[lg.w_len..lg.w_len + lg.wp_len].to_vec())
        }
        None => None,
    };

    // momentum buffer; the first ever gradient seeds it outright
    if state.t == 0 {
        state.m_tilde.copy_from_slice(m);
    } else {
        for (mt, mi) in state.m_tilde.iter_mut().zip(m) {
            *mt = (1.0 - cfg.beta) * *mt + cfg.beta * mi;
        }
    }

    match cfg.optimizer {
        Optimizer::Momentum => {
            for (wi, mt) in state.w.iter_mut().zip(&state.m_tilde) {
                *wi -= cfg.eta * mt;
            }
        }
        Optimizer::Adam => {
            let count = (state.t + 1) as i32;
            let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
            let c1 = 1.0 - b1.powi(count);
            let c2 = 1.0 - b2.powi(count);
            for j in 0..state.w.len() {
                state.adam_m[j] = b1 * state.adam_m[j] + (1.0 - b1) * m[j];
                state.adam_v[j] = b2 * state.adam_v[j] + (1.0 - b2) * m[j] * m[j];
                let mhat = state.adam_m[j] / c1;
                let vhat = state.adam_v[j] / c2;
                state.w[j] -= cfg.eta * mhat / (vhat.sqrt() + eps);
            }
        }
    }
    if let Some(v) = &v {
        for (p, vi) in state.w_prime.iter_mut().zip(v) {
            *p += cfg.eta_prime * vi;
        }
    }
    state.t += 1;

    // diagnostics
    let emb = eval.value(lg.emb);
    let d = emb.cols();
    let ea = DenseArray::from_vec(&[b, d], emb.data()[..b * d].to_vec())?;
    let eb = DenseArray::from_vec(&[b, d], emb.data()[b * d..].to_vec())?;
    let gcl_diag = minibatch_cl(&ea, &eb, cfg.gcl.tau)?;
    let fair_val = lg.fair_mean.map_or(f64::NAN, |fm| eval.value(fm).item());
    let dual_ll = match &attr {
        Some(a) => fair_loss(&cfg.encoder, &cfg.discriminator, &state.w, &state.w_prime, a)?,
        None => f64::NAN,
    };
    let grad_norm = state.m_tilde.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(StepRecord {
        t: state.t,
        gcl: gcl_diag,
        fair: fair_val,
        grad_norm,
        dual_ll,
        ms: t0.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<(TrainState, History)> {
    let mut state = TrainState::init(cfg, ds)?;
    let mut history = History::default();
    for _ in 0..cfg.iters {
        history.records.push(step(&mut state, cfg, ds)?);
    }
    Ok((state, history))
}

// ── theoretical schedule ──

/// Rates before clamping, kept for scaling diagnostics (`iters` still a
/// real number here).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSchedule {
    pub beta: f64,
    pub gamma: f64,
    pub eta_prime: f64,
    pub eta: f64,
    pub iters: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta_prime: f64,
    pub iters: usize,
    pub raw: RawSchedule,
}

/// Step sizes and iteration budget for a target stationarity eps, with unit
/// leading constants (the true constants are not recoverable, so these are
/// heuristics, not guarantees): beta = min(B, Ba) eps^2, gamma = B eps^2,
/// eta' = lambda Ba eps^2, eta = min(beta, B gamma / n, eta'), T =
/// ceil(max(1/min(B,Ba), n/B^2, 1/(lambda^3 Ba)) / eps^4). Each rate is then
/// clamped to its admissible interval (beta <= 1, gamma <= 1/2, eta' <=
/// 4/lambda). eps >= 1 is legal; everything simply sits at the caps.
pub fn schedule(
    eps: f64,
    n: usize,
    batch_main: usize,
    batch_attr: usize,
    lambda_hint: f64,
) -> Result<Schedule> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(lambda_hint > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_hint must be positive, got {lambda_hint}"
        )));
    }
    if n == 0 || batch_main == 0 || batch_attr == 0 {
        return Err(Error::InvalidArgument("n and batch sizes must be positive".into()));
    }
    let (b, ba, nn) = (batch_main as f64, batch_attr as f64, n as f64);
    let e2 = eps * eps;
    let raw = RawSchedule {
        beta: b.min(ba) * e2,
        gamma: b * e2,
        eta_prime: lambda_hint * ba * e2,
        eta: (b.min(ba) * e2).min(b * (b * e2) / nn).min(lambda_hint * ba * e2),
        iters: (1.0 / b.min(ba)).max(nn / (b * b)).max(1.0 / (lambda_hint.powi(3) * ba))
            / (e2 * e2),
    };
    let beta = raw.beta.min(1.0);
    let gamma = raw.gamma.min(0.5);
    let eta_prime = raw.eta_prime.min(4.0 / lambda_hint);
    let eta = beta.min(b * gamma / nn).min(eta_prime);
    let iters = (raw.iters.ceil() as usize).max(1);
    Ok(Schedule { eta, beta, gamma, eta_prime, iters, raw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, split_annotate, AugmentOp, SyntheticConfig};
    use crate::gcl::g_all_exact;
    use crate::tensorcore::{finite_diff_grad, rel_err};

    fn tiny_ds(n: usize) -> Dataset {
        gen_synthetic(&SyntheticConfig {
            n,
            d_in: 6,
            k: 2,
            bias_strength: 0.7,
            group_props: vec![0.5, 0.5],
            noise_sigma: 0.3,
            seed: 31,
        })
        .unwrap()
    }

    fn tiny_cfg(ds: &Dataset) -> TrainConfig {
        let enc = EncoderSpec { d_in: ds.d_in, hidden: vec![5], d: 4 };
        let disc = DiscriminatorSpec::linear_for(4, ds.k);
        TrainConfig {
            alpha: 1.0,
            beta: 0.3,
            gamma: 0.5,
            eta: 0.05,
            eta_prime: 0.1,
            batch_main: 4,
            batch_attr: 3,
            iters: 5,
            optimizer: Optimizer::Momentum,
            lambda_hint: 1.0,
            seed: 77,
            encoder: enc,
            discriminator: disc,
            gcl: GCLConfig { tau: 0.6, eps0: 0.1 },
            aug: AugPair { a: AugmentOp::Identity, b: AugmentOp::RandomScale(0.85, 0.85) },
        }
    }

    // replays the sampling a step would do, without touching the original
    fn peek_batches(
        state: &TrainState,
        cfg: &TrainConfig,
        ds: &Dataset,
    ) -> (MainBatch, Option<FairBatch>) {
        let mut clone = state.clone();
        let idx = clone.sample_main_indices(cfg);
        let main = MainBatch::materialize(ds, &idx, &cfg.aug, &mut clone.rng_aug_main).unwrap();
        let attr = clone.sample_attr(cfg, ds).unwrap();
        (main, attr)
    }

    // ── update algebra ──

    #[test]
    fn one_iteration_algebra_holds_exactly() {
        let ds = tiny_ds(10);
        let cfg = tiny_cfg(&ds);
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        step(&mut state, &cfg, &ds).unwrap(); // past the first-step seeding

        let before = state.clone();
        let (main, attr) = peek_batches(&state, &cfg, &ds);
        step(&mut state, &cfg, &ds).unwrap();

        // the gradient the step used: pre-update w with post-update u
        let mut hybrid = before.clone();
        hybrid.u = state.u.clone();
        let (m, _) = primal_grad(&cfg, &hybrid, &main, attr.as_ref()).unwrap();

        for j in 0..m.len() {
            let want_mt = (1.0 - cfg.beta) * before.m_tilde[j] + cfg.beta * m[j];
            assert_eq!(state.m_tilde[j], want_mt, "m_tilde coord {j}");
            assert_eq!(state.w[j], before.w[j] - cfg.eta * state.m_tilde[j], "w coord {j}");
        }
    }

    #[test]
    fn first_step_seeds_momentum_with_the_gradient() {
        let ds = tiny_ds(10);
        let cfg = tiny_cfg(&ds);
        let state0 = TrainState::init(&cfg, &ds).unwrap();
        let (main, attr) = peek_batches(&state0, &cfg, &ds);
        let mut state = state0.clone();
        step(&mut state, &cfg, &ds).unwrap();

        let mut hybrid = state0.clone();
        hybrid.u = state.u.clone();
        let (m, _) = primal_grad(&cfg, &hybrid, &main, attr.as_ref()).unwrap();
        assert_eq!(state.m_tilde, m); // beta plays no role on the first step
    }

    #[test]
    fn beta_one_keeps_momentum_equal_to_gradient() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.beta = 1.0;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        for _ in 0..2 {
            let before = state.clone();
            let (main, attr) = peek_batches(&state, &cfg, &ds);
            step(&mut state, &cfg, &ds).unwrap();
            let mut hybrid = before;
            hybrid.u = state.u.clone();
            let (m, _) = primal_grad(&cfg, &hybrid, &main, attr.as_ref()).unwrap();
            assert_eq!(state.m_tilde, m);
        }
    }

    #[test]
    fn zero_step_sizes_freeze_parameters_but_not_estimates() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.eta = 0.0;
        cfg.eta_prime = 0.0;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        let (w0, wp0, u0) = (state.w.clone(), state.w_prime.clone(), state.u.clone());
        step(&mut state, &cfg, &ds).unwrap();
        assert_eq!(state.w, w0);
        assert_eq!(state.w_prime, wp0);
        assert_ne!(state.u, u0);
        assert!(state.m_tilde.iter().any(|x| *x != 0.0));
    }

    // ── gradient correctness ──

    #[test]
    fn full_batch_gradient_matches_finite_differences_of_exact_objective() {
        // deterministic views, u pinned to the exact partition values, full
        // batch: m must be the gradient of gcl_exact + alpha * fair_loss
        let ds = tiny_ds(6);
        let mut cfg = tiny_cfg(&ds);
        cfg.batch_main = 6;
        cfg.alpha = 0.0;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        state.u = g_all_exact(&cfg.encoder, &state.w, &ds, &cfg.aug, &cfg.gcl).unwrap();

        let all: Vec<usize> = (0..ds.n).collect();
        let main = MainBatch::deterministic(&ds, &all, &cfg.aug).unwrap();
        let (m, ghat) = primal_grad(&cfg, &state, &main, None).unwrap();

        // the batch estimates must agree with the enumeration (same set of
        // negatives, different accumulation route)
        for (a, b) in ghat.iter().zip(&state.u) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        let enc = cfg.encoder.clone();
        let (pair, gcl) = (cfg.aug.clone(), cfg.gcl);
        let fd = finite_diff_grad(
            |w| crate::gcl::gcl_exact(&enc, w, &ds, &pair, &gcl),
            &state.w,
            1e-5,
        )
        .unwrap();
        for (j, (a, b)) in m.iter().zip(&fd).enumerate() {
            assert!(rel_err(*a, *b) <= 1e-4, "coord {j}: analytic {a}, fd {b}");
        }
    }

    #[test]
    fn fairness_only_batch_gradient_is_alpha_times_fair_gradient() {
        // a single-sample main batch drops the contrastive term entirely
        let ds = tiny_ds(8);
        let mut cfg = tiny_cfg(&ds);
        cfg.alpha = 1.7;
        let state = TrainState::init(&cfg, &ds).unwrap();
        let main = MainBatch::deterministic(&ds, &[2], &cfg.aug).unwrap();
        let attr = FairBatch::materialize(
            &ds,
            &[0, 3, 5],
            &cfg.aug,
            &mut stream(5, Stream::AugmentAttr),
        )
        .unwrap();
        let (m, ghat) = primal_grad(&cfg, &state, &main, Some(&attr)).unwrap();
        assert_eq!(ghat, vec![0.0]);

        let (enc, disc, wp) = (cfg.encoder.clone(), cfg.discriminator.clone(), state.w_prime.clone());
        let fd = finite_diff_grad(
            |w| fair_loss(&enc, &disc, w, &wp, &attr),
            &state.w,
            1e-5,
        )
        .unwrap();
        for (j, (a, b)) in m.iter().zip(&fd).enumerate() {
            assert!(rel_err(*a, 1.7 * b) <= 1e-4, "coord {j}: {a} vs alpha*fd {}", 1.7 * b);
        }
    }

    #[test]
    fn huge_u_removes_the_partition_term() {
        let ds = tiny_ds(6);
        let cfg = tiny_cfg(&ds);
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        state.u = vec![1e300; ds.n];
        let (main, attr) = peek_batches(&state, &cfg, &ds);
        let (m, _) = primal_grad(&cfg, &state, &main, attr.as_ref()).unwrap();

        // reference: same graph, partition weights zeroed outright
        let lg = build_loss_graph(
            &cfg.encoder,
            attr.as_ref().map(|a| (&cfg.discriminator, a.len())),
            main.len(),
            cfg.alpha,
            cfg.gcl.tau,
        )
        .unwrap();
        let stacked = attr.as_ref().unwrap().stacked().unwrap();
        let zeros = DenseArray::zeros(&[2 * main.len()]);
        let mut params = state.w.clone();
        params.extend_from_slice(&state.w_prime);
        let eval = lg
            .graph
            .forward(&params, &loss_inputs(&lg, &main, &zeros, Some(&stacked)))
            .unwrap();
        let want = lg.graph.backward(&eval, lg.objective).unwrap();
        for (a, b) in m.iter().zip(&want[..lg.w_len]) {
            assert!((a - b).abs() <= 1e-250, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_estimator_is_unbiased_over_batches() {
        // fixed state: average of minibatch gradients over many draws must
        // approach the full-batch gradient within 3 standard errors
        let ds = {
            let mut d = tiny_ds(12);
            d.attrs = (0..12).map(|i| Some((i % 2) as u32)).collect(); // all annotated
            d
        };
        let mut cfg = tiny_cfg(&ds);
        cfg.alpha = 0.8;
        let state = TrainState::init(&cfg, &ds).unwrap();

        let all: Vec<usize> = (0..ds.n).collect();
        let full_main = MainBatch::deterministic(&ds, &all, &cfg.aug).unwrap();
        let full_attr = {
            let mut rng = stream(1, Stream::AugmentAttr);
            let pair = AugPair { a: cfg.aug.a.clone(), b: cfg.aug.b.clone() };
            FairBatch::materialize(&ds, &all, &pair, &mut rng).unwrap()
        };
        let mut full_cfg = cfg.clone();
        full_cfg.batch_main = 12;
        full_cfg.batch_attr = 12;
        let (m_ref, _) = primal_grad(&full_cfg, &state, &full_main, Some(&full_attr)).unwrap();

        let draws = 1000;
        let mut rng = stream(424, Stream::BatchMain);
        let mut sum = vec![0.0; m_ref.len()];
        let mut sumsq = vec![0.0; m_ref.len()];
        for _ in 0..draws {
            let mut order: Vec<usize> = (0..ds.n).collect();
            shuffle(&mut order, &mut rng);
            let idx = order[..cfg.batch_main].to_vec();
            let main = MainBatch::deterministic(&ds, &idx, &cfg.aug).unwrap();
            let aidx: Vec<usize> =
                (0..cfg.batch_attr).map(|_| rng.gen_range(0..ds.n)).collect();
            let attr = {
                let mut arng = stream(2, Stream::AugmentAttr);
                FairBatch::materialize(&ds, &aidx, &cfg.aug, &mut arng).unwrap()
            };
            let (m, _) = primal_grad(&cfg, &state, &main, Some(&attr)).unwrap();
            for j in 0..m.len() {
                sum[j] += m[j];
                sumsq[j] += m[j] * m[j];
            }
        }
        for j in 0..m_ref.len() {
            let mean = sum[j] / draws as f64;
            let var = (sumsq[j] / draws as f64 - mean * mean).max(0.0);
            let se = (var / draws as f64).sqrt();
            let diff = (mean - m_ref[j]).abs();
            assert!(
                diff <= 3.0 * se + 1e-12,
                "coord {j}: |{mean} - {}| = {diff} > 3se = {}",
                m_ref[j],
                3.0 * se
            );
        }
    }

    // ── u dynamics ──

    #[test]
    fn u_contracts_toward_the_exact_partition_values() {
        // frozen encoder, full batches, deterministic views: the gap to the
        // exact values shrinks by exactly (1 - gamma) each iteration
        let ds = tiny_ds(8);
        let mut cfg = tiny_cfg(&ds);
        cfg.alpha = 0.0;
        cfg.eta = 0.0;
        cfg.batch_main = 8;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        let g = g_all_exact(&cfg.encoder, &state.w, &ds, &cfg.aug, &cfg.gcl).unwrap();
        for ui in state.u.iter_mut() {
            *ui += 0.5; // push the estimates off their fixed point
        }
        for _ in 0..4 {
            let before: Vec<f64> = (0..ds.n).map(|i| state.u[i] - g[i]).collect();
            step(&mut state, &cfg, &ds).unwrap();
            for i in 0..ds.n {
                let after = state.u[i] - g[i];
                let want = (1.0 - cfg.gamma) * before[i];
                assert!(
                    (after - want).abs() <= 1e-12 * want.abs().max(1e-6),
                    "sample {i}: gap {after} vs expected {want}"
                );
            }
        }
    }

    // ── determinism and reductions ──

    #[test]
    fn identical_configs_give_identical_runs() {
        let ds = split_annotate(&tiny_ds(12), 0.5, 9).unwrap();
        let mut cfg = tiny_cfg(&ds);
        cfg.iters = 4;
        let (s1, h1) = train(&cfg, &ds).unwrap();
        let (s2, h2) = train(&cfg, &ds).unwrap();
        assert_eq!(s1, s2);
        assert!(h1.same_values(&h2));
        let mut other = cfg.clone();
        other.seed = 78;
        let (s3, _) = train(&other, &ds).unwrap();
        assert_ne!(s1.w, s3.w);
    }

    #[test]
    fn alpha_zero_never_advances_attribute_streams() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.alpha = 0.0;
        cfg.iters = 3;
        let (state, hist) = train(&cfg, &ds).unwrap();
        assert_eq!(
            state.rng_batch_attr.get_word_pos(),
            stream(cfg.seed, Stream::BatchAttr).get_word_pos()
        );
        assert_eq!(
            state.rng_aug_attr.get_word_pos(),
            stream(cfg.seed, Stream::AugmentAttr).get_word_pos()
        );
        assert!(state.w_prime.is_empty());
        assert!(hist.records.iter().all(|r| r.fair.is_nan() && r.dual_ll.is_nan()));
    }

    #[test]
    fn zero_iterations_return_initialized_state_and_empty_history() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.iters = 0;
        let (state, hist) = train(&cfg, &ds).unwrap();
        assert!(hist.records.is_empty());
        assert_eq!(state.t, 0);
        assert!(state.u.iter().all(|u| *u > 0.0)); // init pass still ran
    }

    #[test]
    fn config_validation_rejects_bad_batches() {
        let ds = tiny_ds(10); // all 10 annotated
        let mut cfg = tiny_cfg(&ds);
        cfg.batch_main = 11;
        assert!(cfg.validate(&ds).is_err());
        cfg.batch_main = 4;
        cfg.batch_attr = 11;
        assert!(cfg.validate(&ds).is_err());
        let few = split_annotate(&ds, 0.2, 1).unwrap(); // 2 annotated
        cfg.batch_attr = 3;
        assert!(cfg.validate(&few).is_err());
        cfg.batch_attr = 2;
        assert!(cfg.validate(&few).is_ok());
        cfg.gamma = 1.0;
        assert!(cfg.validate(&few).is_err());
    }

    #[test]
    fn epoch_sampling_covers_without_replacement_and_drops_remainder() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.batch_main = 4;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        // 10 samples, batches of 4: each epoch yields 2 batches of distinct
        // indices, remainder of 2 dropped
        let b1 = state.sample_main_indices(&cfg);
        let b2 = state.sample_main_indices(&cfg);
        let mut seen: Vec<usize> = b1.iter().chain(&b2).copied().collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8, "batches within an epoch must not overlap");
        let b3 = state.sample_main_indices(&cfg); // new epoch
        assert_eq!(b3.len(), 4);
    }

    // ── adam ──

    #[test]
    fn adam_updates_second_moments_and_moves_parameters() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.optimizer = Optimizer::Adam;
        cfg.eta = 1e-3;
        let mut state = TrainState::init(&cfg, &ds).unwrap();
        let w0 = state.w.clone();
        step(&mut state, &cfg, &ds).unwrap();
        assert_ne!(state.w, w0);
        assert!(state.adam_v.iter().any(|v| *v > 0.0));
        // first-step bias-corrected update equals eta * m / (|m| + eps)
        let mhat = state.adam_m[0] / (1.0 - 0.9);
        let vhat = state.adam_v[0] / (1.0 - 0.999);
        let want = w0[0] - cfg.eta * mhat / (vhat.sqrt() + 1e-8);
        assert!((state.w[0] - want).abs() <= 1e-15);
    }

    // ── schedule ──

    #[test]
    fn schedule_full_batch_hand_arithmetic() {
        // n = B = Ba = 64, lambda = 1, eps = 0.5: raw rates all 16, so beta
        // caps at 1, gamma at 1/2, eta' at 4; eta = min(1, 64*0.5/64, 4);
        // T = ceil(max(1/64, 64/4096, 1/64) / 0.0625)
        let s = schedule(0.5, 64, 64, 64, 1.0).unwrap();
        assert_eq!(s.raw.beta, 16.0);
        assert_eq!(s.raw.gamma, 16.0);
        assert_eq!(s.raw.eta_prime, 16.0);
        assert_eq!(s.beta, 1.0);
        assert_eq!(s.gamma, 0.5);
        assert_eq!(s.eta_prime, 4.0);
        assert_eq!(s.eta, 0.5);
        assert_eq!(s.iters, 1);
    }

    #[test]
    fn schedule_scaling_in_eps_before_clamps() {
        let a = schedule(0.2, 500, 16, 8, 0.7).unwrap();
        let b = schedule(0.1, 500, 16, 8, 0.7).unwrap();
        assert!((b.raw.beta / a.raw.beta - 0.25).abs() <= 1e-12);
        assert!((b.raw.gamma / a.raw.gamma - 0.25).abs() <= 1e-12);
        assert!((b.raw.eta_prime / a.raw.eta_prime - 0.25).abs() <= 1e-12);
        assert!((b.raw.eta / a.raw.eta - 0.25).abs() <= 1e-12);
        assert!((b.raw.iters / a.raw.iters - 16.0).abs() <= 1e-9);
    }

    #[test]
    fn schedule_clamps_everything_at_large_eps() {
        let s = schedule(2.0, 100, 32, 16, 0.5).unwrap();
        assert_eq!(s.beta, 1.0);
        assert_eq!(s.gamma, 0.5);
        assert_eq!(s.eta_prime, 4.0 / 0.5);
        assert!(s.eta <= s.beta && s.eta <= s.eta_prime);
        assert!(schedule(0.0, 100, 32, 16, 0.5).is_err());
        assert!(schedule(0.3, 100, 32, 16, 0.0).is_err());
    }

    // ── trend on a small benchmark ──

    #[test]
    fn momentum_norm_trends_down_over_training() {
        let ds = split_annotate(&tiny_ds(256), 0.25, 5).unwrap();
        let enc = EncoderSpec { d_in: 6, hidden: vec![16], d: 8 };
        let disc = DiscriminatorSpec::linear_for(8, 2);
        let mut cfg = TrainConfig::desk_scale(enc, disc, 3);
        cfg.batch_main = 32;
        cfg.batch_attr = 8;
        cfg.iters = 200;
        cfg.optimizer = Optimizer::Momentum;
        cfg.eta = 0.02;
        cfg.beta = 0.2;
        let (_, hist) = train(&cfg, &ds).unwrap();
        let med = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let first: Vec<f64> = hist.records[..20].iter().map(|r| r.grad_norm).collect();
        let last: Vec<f64> = hist.records[180..].iter().map(|r| r.grad_norm).collect();
        assert!(
            med(&last) < med(&first),
            "momentum norm should trend down: first {} last {}",
            med(&first),
            med(&last)
        );
    }

    #[test]
    fn history_csv_uses_nan_literals_and_header() {
        let ds = tiny_ds(10);
        let mut cfg = tiny_cfg(&ds);
        cfg.alpha = 0.0;
        cfg.iters = 2;
        let (_, hist) = train(&cfg, &ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        hist.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,gcl,fair,grad_norm,dual_ll,ms");
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,"));
        assert!(row.contains("NaN"));
    }
}

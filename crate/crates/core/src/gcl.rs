//! Global contrastive objective: the alignment term, the log-partition term
//! driven by a per-sample moving-average estimate of the negative-similarity
//! mean, and a full-enumeration evaluation used by gradient checks and
//! diagnostics.
//!
//! Conventions fixed here and relied on everywhere else:
//! - negatives for sample i are *both* views of every other sample, so
//!   |S_i| = 2(n-1) under full enumeration;
//! - the inner mean averages the two anchor views of i;
//! - the additive constant `tau * ln |S_i|` is dropped, which is why the
//!   partition offset is `eps0 / |S_i|` rather than `eps0`.

use crate::data::{AugPair, Dataset};
use crate::error::{Error, Result};
use crate::models::{encode_batch, EncoderSpec};
use crate::tensorcore::DenseArray;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GCLConfig {
    /// Softmax temperature.
    pub tau: f64,
    /// Partition offset before division by the negative count.
    pub eps0: f64,
}

impl Default for GCLConfig {
    fn default() -> Self {
        GCLConfig { tau: 0.5, eps0: 0.1 }
    }
}

impl GCLConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps0 >= 0.0) || !self.eps0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eps0 must be non-negative, got {}",
                self.eps0
            )));
        }
        Ok(())
    }

    /// Offset actually added to the averaged negative similarity.
    pub fn eps0_prime(&self, neg_count: usize) -> f64 {
        self.eps0 / neg_count as f64
    }
}

/// Similarity between two unit-norm embeddings (plain dot product).
pub fn pair_sim(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `tau * ln(eps0_prime + g)`, with the argument floored at 1e-12 so a
/// (theoretically impossible, numerically conceivable) non-positive argument
/// yields a large-but-finite value instead of NaN/-inf.
pub fn f2(g: f64, tau: f64, eps0_prime: f64) -> f64 {
    tau * (eps0_prime + g).max(1e-12).ln()
}

/// Moving-average update of the per-sample partition estimate:
/// `(1 - gamma) * u + gamma/2 * (g_a + g_b)`. `gamma` in (0, 1]; 1 replaces
/// the running estimate outright.
pub fn update_u(u: f64, g_a: f64, g_b: f64, gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0, "gamma {gamma} outside (0, 1]");
    (1.0 - gamma) * u + 0.5 * gamma * (g_a + g_b)
}

/// Deterministic two-view feature matrices for the given sample indices.
/// Errors when either op has stochastic parameters, because the enumerated
/// objective is only well-defined for a fixed view pair.
pub fn deterministic_views(
    ds: &Dataset,
    indices: &[usize],
    pair: &AugPair,
) -> Result<(DenseArray, DenseArray)> {
    if !pair.is_deterministic() {
        return Err(Error::InvalidArgument(format!(
            "view pair ({}, {}) is stochastic; full enumeration needs deterministic views",
            pair.a, pair.b
        )));
    }
    let mut xa = Vec::with_capacity(indices.len() * ds.d_in);
    let mut xb = Vec::with_capacity(indices.len() * ds.d_in);
    for &i in indices {
        let row = ds.feature_row(i);
        xa.extend(pair.a.deterministic_output(row).unwrap());
        xb.extend(pair.b.deterministic_output(row).unwrap());
    }
    Ok((
        DenseArray::from_vec(&[indices.len(), ds.d_in], xa)?,
        DenseArray::from_vec(&[indices.len(), ds.d_in], xb)?,
    ))
}

/// Exact per-sample negative-similarity means under full enumeration: entry
/// i averages `exp(sim / tau)` over both anchor views of i against both
/// views of every other sample.
pub fn g_all_exact(
    enc: &EncoderSpec,
    w: &[f64],
    ds: &Dataset,
    pair: &AugPair,
    cfg: &GCLConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = ds.n;
    if n < 2 {
        return Err(Error::InvalidArgument(
            "full enumeration needs at least 2 samples to form negatives".into(),
        ));
    }
    let pairs = n * 2 * (n - 1);
    if pairs > 1_000_000 {
        return Err(Error::InvalidArgument(format!(
            "full enumeration would score {pairs} pairs (> 1e6); \
             use the stochastic path for datasets this large"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let (xa, xb) = deterministic_views(ds, &all, pair)?;
    let ea = encode_batch(enc, w, &xa)?;
    let eb = encode_batch(enc, w, &xb)?;

    let neg = (2 * (n - 1)) as f64;
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let mut total = 0.0;
        for anchor in [ea.row(i), eb.row(i)] {
            let mut s = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                s += (pair_sim(anchor, ea.row(j)) / cfg.tau).exp();
                s += (pair_sim(anchor, eb.row(j)) / cfg.tau).exp();
            }
            total += s / neg;
        }
        g.push(0.5 * total);
    }
    Ok(g)
}

/// Full-enumeration objective value: mean over samples of the (negated)
/// two-view alignment plus the log-partition term. This is the quantity the
/// stochastic optimizer estimates gradients of; it is evaluated directly
/// only for small datasets (see the pair-count guard in [`g_all_exact`]).
pub fn gcl_exact(
    enc: &EncoderSpec,
    w: &[f64],
    ds: &Dataset,
    pair: &AugPair,
    cfg: &GCLConfig,
) -> Result<f64> {
    let g = g_all_exact(enc, w, ds, pair, cfg)?;
    let all: Vec<usize> = (0..ds.n).collect();
    let (xa, xb) = deterministic_views(ds, &all, pair)?;
    let ea = encode_batch(enc, w, &xa)?;
    let eb = encode_batch(enc, w, &xb)?;
    let eps0p = cfg.eps0_prime(2 * (ds.n - 1));
    let mut total = 0.0;
    for i in 0..ds.n {
        let f1 = -pair_sim(ea.row(i), eb.row(i));
        total += f1 + f2(g[i], cfg.tau, eps0p);
    }
    Ok(total / ds.n as f64)
}

/// Minibatch contrastive loss over already-encoded unit-norm views, used as
/// a training diagnostic. Anchors are the first-view rows; each anchor's
/// softmax runs over its positive plus both views of the other B-1 samples
/// (2(B-1) + 1 terms).
pub fn minibatch_cl(ea: &DenseArray, eb: &DenseArray, tau: f64) -> Result<f64> {
    if ea.shape() != eb.shape() || ea.shape().len() != 2 {
        return Err(Error::Shape {
            context: format!(
                "view embeddings must be equal-shape matrices, got {:?} vs {:?}",
                ea.shape(),
                eb.shape()
            ),
        });
    }
    let b = ea.rows();
    if b < 2 {
        return Err(Error::InvalidArgument(
            "minibatch contrastive loss needs at least 2 samples".into(),
        ));
    }
    let mut loss = 0.0;
    for i in 0..b {
        let anchor = ea.row(i);
        let pos = (pair_sim(anchor, eb.row(i)) / tau).exp();
        let mut denom = pos;
        for j in 0..b {
            if j == i {
                continue;
            }
            denom += (pair_sim(anchor, ea.row(j)) / tau).exp();
            denom += (pair_sim(anchor, eb.row(j)) / tau).exp();
        }
        loss -= (pos / denom).ln();
    }
    Ok(loss / b as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, AugmentOp, SyntheticConfig};
    use crate::models::encode;
    use crate::rng::{stream, Stream};

    fn small_ds(n: usize) -> Dataset {
        gen_synthetic(&SyntheticConfig {
            n,
            d_in: 4,
            k: 2,
            bias_strength: 0.5,
            group_props: vec![0.5, 0.5],
            noise_sigma: 0.3,
            seed: 11,
        })
        .unwrap()
    }

    fn det_pair() -> AugPair {
        AugPair { a: AugmentOp::Identity, b: AugmentOp::RandomScale(0.8, 0.8) }
    }

    // ── exact objective vs an independent enumeration ──

    // Recomputes the objective in sum form, tau * ln(eps0 + (S_a + S_b)/2)
    // minus the constant tau * ln|S_i|, encoding one sample at a time. Only
    // the model's forward pass is shared with the checked path.
    #[test]
    fn exact_objective_matches_sum_form_enumeration() {
        let ds = small_ds(5);
        let enc = EncoderSpec { d_in: 4, hidden: vec![6], d: 3 };
        let w = enc.init_params(&mut stream(3, Stream::InitEncoder));
        let pair = det_pair();
        let cfg = GCLConfig { tau: 0.7, eps0: 0.2 };

        let mut va = Vec::new();
        let mut vb = Vec::new();
        for i in 0..ds.n {
            let row = ds.feature_row(i);
            va.push(encode(&enc, &w, &pair.a.deterministic_output(row).unwrap()).unwrap());
            vb.push(encode(&enc, &w, &pair.b.deterministic_output(row).unwrap()).unwrap());
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let neg = 2.0 * (ds.n - 1) as f64;
        let mut want = 0.0;
        for i in 0..ds.n {
            let mut sum_a = 0.0;
            let mut sum_b = 0.0;
            for j in 0..ds.n {
                if j == i {
                    continue;
                }
                for v in [&va[j], &vb[j]] {
                    sum_a += (dot(&va[i], v) / cfg.tau).exp();
                    sum_b += (dot(&vb[i], v) / cfg.tau).exp();
                }
            }
            want += -dot(&va[i], &vb[i])
                + cfg.tau * (cfg.eps0 + 0.5 * (sum_a + sum_b)).ln()
                - cfg.tau * neg.ln();
        }
        want /= ds.n as f64;

        let got = gcl_exact(&enc, &w, &ds, &pair, &cfg).unwrap();
        assert!((got - want).abs() <= 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn exact_objective_closed_form_for_identical_embeddings() {
        // zero weights collapse every embedding to the degenerate-norm
        // fallback basis vector, so every similarity is exactly 1
        let ds = small_ds(4);
        let enc = EncoderSpec { d_in: 4, hidden: vec![5], d: 3 };
        let w = vec![0.0; enc.param_len()];
        for tau in [0.5, 1.0] {
            let cfg = GCLConfig { tau, eps0: 0.1 };
            let eps0p = cfg.eps0_prime(2 * (ds.n - 1));
            let want = -1.0 + tau * (eps0p + (1.0 / tau).exp()).ln();
            let got = gcl_exact(&enc, &w, &ds, &det_pair(), &cfg).unwrap();
            assert!((got - want).abs() <= 1e-12, "tau {tau}: got {got}, want {want}");
        }
    }

    #[test]
    fn g_all_is_constant_for_identical_embeddings() {
        let ds = small_ds(3);
        let enc = EncoderSpec { d_in: 4, hidden: vec![], d: 2 };
        let w = vec![0.0; enc.param_len()];
        let cfg = GCLConfig { tau: 0.5, eps0: 0.1 };
        let g = g_all_exact(&enc, &w, &ds, &det_pair(), &cfg).unwrap();
        let want = (1.0 / cfg.tau).exp();
        for gi in g {
            assert!((gi - want).abs() <= 1e-12);
        }
    }

    // ── scalar ops ──

    #[test]
    fn update_u_blends_and_replaces() {
        let got = update_u(0.4, 1.0, 2.0, 0.5);
        assert!((got - 0.95).abs() <= 1e-15); // 0.5*0.4 + 0.25*(1+2)
        assert_eq!(update_u(0.4, 1.0, 2.0, 1.0), 1.5); // gamma = 1 discards u
    }

    #[test]
    fn f2_floors_the_log_argument() {
        let v = f2(-5.0, 0.5, 0.01);
        assert!(v.is_finite());
        assert!((v - 0.5 * (1e-12f64).ln()).abs() <= 1e-12);
        // ordinary arguments untouched by the guard
        assert!((f2(1.0, 0.5, 0.0) - 0.0).abs() <= 1e-15);
    }

    #[test]
    fn eps0_prime_divides_by_negative_count() {
        let cfg = GCLConfig { tau: 0.5, eps0: 0.1 };
        assert!((cfg.eps0_prime(6) - 0.1 / 6.0).abs() <= 1e-18);
    }

    // ── minibatch loss ──

    #[test]
    fn minibatch_loss_on_identical_embeddings_is_log_of_term_count() {
        // all rows the same unit vector: every exp term equal, so the loss
        // is ln(2(B-1) + 1)
        for (b, want) in [(2, 3.0f64), (4, 7.0)] {
            let mut rows = vec![0.0; b * 3];
            for i in 0..b {
                rows[i * 3] = 1.0;
            }
            let e = DenseArray::from_vec(&[b, 3], rows).unwrap();
            let got = minibatch_cl(&e, &e, 0.5).unwrap();
            assert!(
                (got - want.ln()).abs() <= 1e-12,
                "B = {b}: got {got}, want ln {want}"
            );
        }
    }

    #[test]
    fn minibatch_loss_prefers_aligned_positives() {
        // positive pairs aligned, negatives orthogonal: loss must be well
        // below the indifferent ln(3) level
        let ea = DenseArray::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let aligned = minibatch_cl(&ea, &ea, 0.5).unwrap();
        assert!(aligned < 3.0f64.ln() - 0.5, "aligned loss {aligned}");
    }

    // ── guards ──

    #[test]
    fn enumeration_rejects_tiny_and_huge_inputs() {
        let enc = EncoderSpec { d_in: 4, hidden: vec![], d: 2 };
        let w = vec![0.0; enc.param_len()];
        let cfg = GCLConfig::default();
        let one = small_ds(1);
        assert!(matches!(
            gcl_exact(&enc, &w, &one, &det_pair(), &cfg),
            Err(Error::InvalidArgument(_))
        ));
        let big = small_ds(1000); // 1000 * 2 * 999 pairs > 1e6
        let err = gcl_exact(&enc, &w, &big, &det_pair(), &cfg).unwrap_err();
        assert!(err.to_string().contains("1e6"), "unexpected error: {err}");
    }

    #[test]
    fn enumeration_rejects_stochastic_views() {
        let ds = small_ds(3);
        let enc = EncoderSpec { d_in: 4, hidden: vec![], d: 2 };
        let w = vec![0.0; enc.param_len()];
        let pair = AugPair { a: AugmentOp::Identity, b: AugmentOp::GaussianNoise(0.1) };
        assert!(gcl_exact(&enc, &w, &ds, &pair, &GCLConfig::default()).is_err());
    }

    #[test]
    fn minibatch_loss_rejects_bad_shapes() {
        let a = DenseArray::zeros(&[2, 3]);
        let b = DenseArray::zeros(&[3, 3]);
        assert!(minibatch_cl(&a, &b, 0.5).is_err());
        let single = DenseArray::zeros(&[1, 3]);
        assert!(minibatch_cl(&single, &single, 0.5).is_err());
    }
}

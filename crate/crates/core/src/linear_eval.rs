//! Linear-probe evaluation: freeze the encoder, fit a logistic classifier on
//! the representations, and score it with the fairness metrics.
//!
//! Everything here is deterministic — zero-initialised full-batch gradient
//! descent, no augmentation at evaluation time — so a probe report is a pure
//! function of (encoder weights, dataset).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_report, MetricsReport, ScoredExample};
use crate::models::{encode_batch, EncoderSpec};
use crate::tensorcore::DenseArray;

/// Default probe-training hyperparameters. Full-batch GD for a fixed budget
/// keeps the evaluation protocol free of any randomness of its own.
pub const PROBE_ITERS: usize = 500;
pub const PROBE_LR: f64 = 0.1;
pub const PROBE_L2: f64 = 1e-4;

/// A binary logistic probe on top of frozen d-dimensional representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// False only for a freshly constructed (zero-iteration) probe.
    pub trained: bool,
}

impl Probe {
    /// P(y = 1 | v) for a representation row.
    ///
    /// Written as `0.5 + 0.5 tanh(z/2)` rather than `1/(1+e^{-z})`: the tanh
    /// form is odd around zero at the bit level, which makes probe training
    /// exactly sign-symmetric under a label flip.
    pub fn score(&self, v: &[f64]) -> f64 {
        let z = dot(&self.weights, v) + self.bias;
        0.5 + 0.5 * (0.5 * z).tanh()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean logistic loss plus an L2 penalty on the weights (bias excluded).
/// Used by the probe trainer's callers to check descent; softplus is computed
/// in the overflow-safe form.
pub fn probe_loss(weights: &[f64], bias: f64, emb: &DenseArray, labels: &[u8], l2: f64) -> f64 {
    let n = labels.len();
    let d = weights.len();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z = dot(weights, &emb.data()[i * d..(i + 1) * d]) + bias;
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        total += softplus - f64::from(y) * z;
    }
    total / n as f64 + 0.5 * l2 * dot(weights, weights)
}

/// Encode every sample with the identity augmentation. Row i of the result is
/// the unit-norm representation of sample i.
pub fn embed_all(spec: &EncoderSpec, w: &[f64], ds: &Dataset) -> Result<DenseArray> {
    if spec.d_in != ds.d_in {
        return Err(Error::Shape {
            context: format!("encoder takes {} dims, dataset has {}", spec.d_in, ds.d_in),
        });
    }
    encode_batch(spec, w, &ds.features_matrix())
}

/// Fit a logistic probe by full-batch gradient descent from zero init.
///
/// The step size is capped at `1/L` where `L` bounds the smoothness of the
/// regularised loss (`tr(X'X)/4n + l2`, with the bias column counted), so the
/// loss is non-increasing no matter what `lr` the caller picks.
pub fn fit_probe(emb: &DenseArray, labels: &[u8], l2: f64, iters: usize, lr: f64) -> Result<Probe> {
    if emb.shape().len() != 2 {
        return Err(Error::Shape { context: format!("embeddings shape {:?}", emb.shape()) });
    }
    let (n, d) = (emb.shape()[0], emb.shape()[1]);
    if n != labels.len() {
        return Err(Error::Shape {
            context: format!("{n} embedding rows vs {} labels", labels.len()),
        });
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("probe labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::InvalidArgument(
            "probe needs at least one example of each class".into(),
        ));
    }
    if !(l2 >= 0.0) || !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("bad probe hypers l2={l2} lr={lr}")));
    }

    let fro2: f64 = emb.data().iter().map(|x| x * x).sum();
    let smoothness = (fro2 + n as f64) / (4.0 * n as f64) + l2;
    let step = lr.min(1.0 / smoothness);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..iters {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &emb.data()[i * d..(i + 1) * d];
            let z = dot(&w, row) + b;
            // residual = sigmoid(z) - y, in the bit-level odd-symmetric form
            let r = 0.5 * (0.5 * z).tanh() + (0.5 - f64::from(y));
            for (g, &x) in gw.iter_mut().zip(row) {
                *g += r * x;
            }
            gb += r;
        }
        let inv_n = 1.0 / n as f64;
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= step * (g * inv_n + l2 * *wj);
        }
        b -= step * (gb * inv_n);
    }
    Ok(Probe { weights: w, bias: b, trained: iters > 0 })
}

/// Encode the test set, score it with the probe, and hand the scored examples
/// to the metric suite. Labels and attributes must be present on every test
/// sample.
pub fn evaluate_probe(
    probe: &Probe,
    spec: &EncoderSpec,
    w: &[f64],
    test: &Dataset,
    n_buckets: usize,
) -> Result<MetricsReport> {
    if probe.weights.len() != spec.d {
        return Err(Error::Shape {
            context: format!("probe has {} weights, encoder emits {}", probe.weights.len(), spec.d),
        });
    }
    let emb = embed_all(spec, w, test)?;
    let d = spec.d;
    let mut examples = Vec::with_capacity(test.n);
    for i in 0..test.n {
        let label = test.labels[i].ok_or_else(|| {
            Error::InvalidArgument(format!("test sample {i} has no label"))
        })?;
        let group = test.attrs[i].ok_or_else(|| {
            Error::InvalidArgument(format!("test sample {i} has no group attribute"))
        })?;
        let score = probe.score(&emb.data()[i * d..(i + 1) * d]);
        examples.push(ScoredExample { score, pred: u8::from(score > 0.5), label, group });
    }
    compute_report(&examples, n_buckets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticConfig};
    use crate::metrics::{accuracy, auc_fairness, dist_metrics, group_gap_metrics};
    use crate::models::encode;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn toy_dataset(n: usize, d_in: usize, seed: u64) -> Dataset {
        let mut ds = gen_synthetic(&SyntheticConfig {
            n,
            d_in,
            k: 2,
            bias_strength: 0.8,
            group_props: vec![0.5, 0.5],
            noise_sigma: 0.05,
            seed,
        })
        .unwrap();
        // small draws can leave a (group, label) stratum empty, which the
        // rate-gap metrics rightly reject; pin two labels per group
        for g in 0..2 {
            let members: Vec<usize> =
                (0..ds.n).filter(|&i| ds.attrs[i] == Some(g)).collect();
            assert!(members.len() >= 2, "seed {seed} starves group {g}");
            ds.labels[members[0]] = Some(1);
            ds.labels[members[1]] = Some(0);
        }
        ds
    }

    // ── embed_all ──

    #[test]
    fn embeddings_are_unit_rows() {
        let ds = toy_dataset(20, 6, 3);
        let spec = EncoderSpec::default_for(6);
        let w = spec.init_params(&mut stream(42, Stream::InitEncoder));
        let emb = embed_all(&spec, &w, &ds).unwrap();
        assert_eq!(emb.shape(), &[20, spec.d]);
        for i in 0..20 {
            let norm: f64 = emb.data()[i * spec.d..(i + 1) * spec.d]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() <= 1e-12, "row {i} norm {norm}");
        }
    }

    #[test]
    fn identity_weights_give_normalized_raw_features() {
        // single linear layer, weight = I, bias = 0
        let d = 4;
        let ds = toy_dataset(10, d, 5);
        let spec = EncoderSpec { d_in: d, hidden: vec![], d };
        let mut w = vec![0.0; spec.param_len()];
        for j in 0..d {
            w[j * d + j] = 1.0;
        }
        let emb = embed_all(&spec, &w, &ds).unwrap();
        for i in 0..10 {
            let raw = ds.feature_row(i);
            let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            for j in 0..d {
                assert!((emb.data()[i * d + j] - raw[j] / norm).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn batch_embedding_matches_per_sample_encoding() {
        let ds = toy_dataset(15, 5, 7);
        let spec = EncoderSpec::default_for(5);
        let w = spec.init_params(&mut stream(42, Stream::InitEncoder));
        let emb = embed_all(&spec, &w, &ds).unwrap();
        for i in 0..15 {
            let single = encode(&spec, &w, ds.feature_row(i)).unwrap();
            for j in 0..spec.d {
                assert!((emb.data()[i * spec.d + j] - single[j]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn embed_rejects_dimension_mismatch() {
        let ds = toy_dataset(8, 6, 1);
        let spec = EncoderSpec::default_for(5);
        let w = vec![0.0; spec.param_len()];
        assert!(matches!(embed_all(&spec, &w, &ds), Err(Error::Shape { .. })));
    }

    // ── fit_probe ──

    fn separated_embeddings(n_per: usize, d: usize) -> (DenseArray, Vec<u8>) {
        // class 1 at +e1, class 0 at -e1: perfectly separable unit rows
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per {
            let y = u8::from(i % 2 == 0);
            let mut row = vec![0.0; d];
            row[0] = if y == 1 { 1.0 } else { -1.0 };
            data.extend(row);
            labels.push(y);
        }
        (DenseArray::from_vec(&[2 * n_per, d], data).unwrap(), labels)
    }

    #[test]
    fn zero_iterations_leave_a_coin_flip_probe() {
        let (emb, labels) = separated_embeddings(3, 4);
        let probe = fit_probe(&emb, &labels, PROBE_L2, 0, PROBE_LR).unwrap();
        assert!(!probe.trained);
        assert!(probe.weights.iter().all(|&w| w == 0.0));
        assert_eq!(probe.score(&[0.3, -0.2, 0.9, 0.0]), 0.5);
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let (emb, labels) = separated_embeddings(5, 4);
        let probe = fit_probe(&emb, &labels, 0.0, PROBE_ITERS, PROBE_LR).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            let s = probe.score(&emb.data()[i * 4..(i + 1) * 4]);
            assert_eq!(u8::from(s > 0.5), y, "sample {i}");
        }
    }

    #[test]
    fn label_flip_negates_the_probe_bitwise() {
        let mut rng = stream(11, Stream::Eval);
        let (n, d) = (12, 3);
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = DenseArray::from_vec(&[n, d], data).unwrap();
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let flipped: Vec<u8> = labels.iter().map(|&y| 1 - y).collect();
        let p = fit_probe(&emb, &labels, PROBE_L2, 50, PROBE_LR).unwrap();
        let q = fit_probe(&emb, &flipped, PROBE_L2, 50, PROBE_LR).unwrap();
        for (a, b) in p.weights.iter().zip(&q.weights) {
            assert_eq!(a.to_bits(), (-b).to_bits());
        }
        assert_eq!(p.bias.to_bits(), (-q.bias).to_bits());
    }

    #[test]
    fn loss_is_monotone_over_the_trajectory() {
        // zero init makes fit_probe(k) a prefix of fit_probe(k+1)
        let ds = toy_dataset(30, 5, 9);
        let spec = EncoderSpec::default_for(5);
        let w = spec.init_params(&mut stream(2, Stream::InitEncoder));
        let emb = embed_all(&spec, &w, &ds).unwrap();
        let labels: Vec<u8> = ds.labels.iter().map(|y| y.unwrap()).collect();
        let mut prev = f64::INFINITY;
        for k in 0..=30 {
            // lr far above the smoothness cap: the internal guard must hold
            let p = fit_probe(&emb, &labels, PROBE_L2, k, 50.0).unwrap();
            let loss = probe_loss(&p.weights, p.bias, &emb, &labels, PROBE_L2);
            assert!(loss <= prev + 1e-12, "iter {k}: {loss} > {prev}");
            prev = loss;
        }
    }

    #[test]
    fn degenerate_probe_inputs_are_rejected() {
        let (emb, mut labels) = separated_embeddings(3, 4);
        labels.iter_mut().for_each(|y| *y = 1);
        assert!(fit_probe(&emb, &labels, PROBE_L2, 10, PROBE_LR).is_err());
        let (emb, labels) = separated_embeddings(3, 4);
        assert!(fit_probe(&emb, &labels[..4], PROBE_L2, 10, PROBE_LR).is_err());
        assert!(fit_probe(&emb, &labels, -1.0, 10, PROBE_LR).is_err());
    }

    // ── evaluate_probe ──

    #[test]
    fn constant_probe_has_zero_demographic_gap() {
        let ds = toy_dataset(16, 5, 13);
        let spec = EncoderSpec::default_for(5);
        let w = spec.init_params(&mut stream(1, Stream::InitEncoder));
        let probe = Probe { weights: vec![0.0; spec.d], bias: 0.0, trained: true };
        let report = evaluate_probe(&probe, &spec, &w, &ds, 20).unwrap();
        assert_eq!(report.delta_dp, 0.0);
        assert_eq!(report.wd, 0.0); // every score is exactly 0.5
    }

    #[test]
    fn group_separating_scores_max_out_gauc() {
        // identity encoder; group fully determines the first coordinate
        let d = 3;
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        let mut attrs = Vec::new();
        for i in 0..8 {
            let g = u32::from(i % 2 == 0);
            feats.extend([if g == 1 { 1.0 } else { -1.0 }, 0.0, 0.0]);
            labels.push(Some(u8::from(i < 4)));
            attrs.push(Some(g));
        }
        let ds = Dataset::new(feats, d, labels, attrs, 2).unwrap();
        let spec = EncoderSpec { d_in: d, hidden: vec![], d };
        let mut w = vec![0.0; spec.param_len()];
        for j in 0..d {
            w[j * d + j] = 1.0;
        }
        let probe = Probe { weights: vec![4.0, 0.0, 0.0], bias: 0.0, trained: true };
        let report = evaluate_probe(&probe, &spec, &w, &ds, 10).unwrap();
        assert_eq!(report.gauc, 1.0);
    }

    #[test]
    fn report_equals_hand_assembled_metric_calls() {
        let ds = toy_dataset(12, 5, 21);
        let spec = EncoderSpec::default_for(5);
        let w = spec.init_params(&mut stream(8, Stream::InitEncoder));
        let emb = embed_all(&spec, &w, &ds).unwrap();
        let labels: Vec<u8> = ds.labels.iter().map(|y| y.unwrap()).collect();
        let probe = fit_probe(&emb, &labels, PROBE_L2, 100, PROBE_LR).unwrap();
        let report = evaluate_probe(&probe, &spec, &w, &ds, 25).unwrap();

        // oracle: the same pipeline assembled by hand from the metric ops
        let mut exs = Vec::new();
        for i in 0..ds.n {
            let v = encode(&spec, &w, ds.feature_row(i)).unwrap();
            let score = probe.score(&v);
            exs.push(ScoredExample {
                score,
                pred: u8::from(score > 0.5),
                label: labels[i],
                group: ds.attrs[i].unwrap(),
            });
        }
        let (dp, eo, ed) = group_gap_metrics(&exs).unwrap();
        let (intra, inter, gauc) = auc_fairness(&exs).unwrap();
        let (wd, kl) = dist_metrics(&exs, 25).unwrap();
        assert_eq!(report.acc.to_bits(), accuracy(&exs).unwrap().to_bits());
        assert_eq!(report.delta_dp.to_bits(), dp.to_bits());
        assert_eq!(report.delta_eo.to_bits(), eo.to_bits());
        assert_eq!(report.delta_ed.to_bits(), ed.to_bits());
        assert_eq!(report.intra_auc.to_bits(), intra.to_bits());
        assert_eq!(report.inter_auc.to_bits(), inter.to_bits());
        assert_eq!(report.gauc.to_bits(), gauc.to_bits());
        assert_eq!(report.wd.to_bits(), wd.to_bits());
        assert_eq!(report.kl.to_bits(), kl.to_bits());
    }

    #[test]
    fn evaluation_requires_full_annotation() {
        let mut ds = toy_dataset(10, 5, 2);
        ds.labels[3] = None;
        let spec = EncoderSpec::default_for(5);
        let w = spec.init_params(&mut stream(0, Stream::InitEncoder));
        let probe = Probe { weights: vec![0.1; spec.d], bias: 0.0, trained: true };
        let err = evaluate_probe(&probe, &spec, &w, &ds, 10).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");

        let mut ds = toy_dataset(10, 5, 2);
        ds.attrs[7] = None;
        let err = evaluate_probe(&probe, &spec, &w, &ds, 10).unwrap_err();
        assert!(err.to_string().contains("attribute"), "{err}");

        let bad = Probe { weights: vec![0.0; spec.d + 1], bias: 0.0, trained: true };
        let ds = toy_dataset(10, 5, 2);
        assert!(matches!(
            evaluate_probe(&bad, &spec, &w, &ds, 10),
            Err(Error::Shape { .. })
        ));
    }
}

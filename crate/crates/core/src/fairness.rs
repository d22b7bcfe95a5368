//! Adversarial fairness term: the discriminator log-likelihood averaged over
//! both views of an attribute-annotated batch, and its exact gradient with
//! respect to the discriminator parameters (the dual ascent direction).

use rand_chacha::ChaCha8Rng;

use crate::data::{AugPair, Dataset};
use crate::error::{Error, Result};
use crate::models::{build_phi_graph, onehot_rows, DiscriminatorSpec, EncoderSpec};
use crate::tensorcore::DenseArray;

/// An attribute batch with both views already materialized, so every
/// evaluation over it is deterministic. View randomness is consumed at
/// construction time (first view then second view, per sample, in batch
/// order).
#[derive(Debug, Clone, PartialEq)]
pub struct FairBatch {
    pub attrs: Vec<u32>,
    pub views_a: DenseArray,
    pub views_b: DenseArray,
    pub k: usize,
}

impl FairBatch {
    pub fn materialize(
        ds: &Dataset,
        indices: &[usize],
        pair: &AugPair,
        rng: &mut ChaCha8Rng,
    ) -> Result<FairBatch> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("attribute batch is empty".into()));
        }
        let mut attrs = Vec::with_capacity(indices.len());
        let mut xa = Vec::with_capacity(indices.len() * ds.d_in);
        let mut xb = Vec::with_capacity(indices.len() * ds.d_in);
        for &i in indices {
            let a = ds.attrs[i].ok_or_else(|| {
                Error::InvalidArgument(format!("sample {i} has no sensitive attribute"))
            })?;
            attrs.push(a);
            let row = ds.feature_row(i);
            xa.extend(pair.a.apply(row, rng));
            xb.extend(pair.b.apply(row, rng));
        }
        Ok(FairBatch {
            attrs,
            views_a: DenseArray::from_vec(&[indices.len(), ds.d_in], xa)?,
            views_b: DenseArray::from_vec(&[indices.len(), ds.d_in], xb)?,
            k: ds.k,
        })
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    /// Both views stacked (first views then second views, 2|B_a| rows) and
    /// the matching one-hot attribute selectors.
    pub fn stacked(&self) -> Result<(DenseArray, DenseArray)> {
        let ba = self.len();
        let d_in = self.views_a.cols();
        let mut rows = Vec::with_capacity(2 * ba * d_in);
        rows.extend_from_slice(self.views_a.data());
        rows.extend_from_slice(self.views_b.data());
        let views = DenseArray::from_vec(&[2 * ba, d_in], rows)?;
        let mut attrs2 = self.attrs.clone();
        attrs2.extend_from_slice(&self.attrs);
        let onehot = onehot_rows(&attrs2, self.k)?;
        Ok((views, onehot))
    }
}

fn concat_params(w: &[f64], wp: &[f64]) -> Vec<f64> {
    let mut params = Vec::with_capacity(w.len() + wp.len());
    params.extend_from_slice(w);
    params.extend_from_slice(wp);
    params
}

/// Discriminator log-likelihood of the true attributes, averaged over every
/// sample and both of its views. Always <= 0; higher means the encoder leaks
/// more group information.
pub fn fair_loss(
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    w: &[f64],
    wp: &[f64],
    batch: &FairBatch,
) -> Result<f64> {
    let (views, onehot) = batch.stacked()?;
    let pg = build_phi_graph(enc, disc, 2 * batch.len())?;
    let params = concat_params(w, wp);
    let eval = pg.graph.forward(&params, &[("views", &views), ("onehot", &onehot)])?;
    Ok(eval.value(pg.mean).item())
}

/// Exact gradient of [`fair_loss`] with respect to the discriminator
/// parameters — the ascent direction for the dual update. Both views carry
/// weight 1/2, mirroring the loss.
pub fn dual_grad(
    enc: &EncoderSpec,
    disc: &DiscriminatorSpec,
    w: &[f64],
    wp: &[f64],
    batch: &FairBatch,
) -> Result<Vec<f64>> {
    let (views, onehot) = batch.stacked()?;
    let pg = build_phi_graph(enc, disc, 2 * batch.len())?;
    let params = concat_params(w, wp);
    let eval = pg.graph.forward(&params, &[("views", &views), ("onehot", &onehot)])?;
    let grad = pg.graph.backward(&eval, pg.mean)?;
    Ok(grad[pg.w_len..pg.w_len + pg.wp_len].to_vec())
}

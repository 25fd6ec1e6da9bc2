//! Reference masked-prediction loss with analytic gradients.
//!
//! Each head projects a frame representation `h` with `A`, compares it to
//! every class embedding by cosine similarity and applies a temperature
//! softmax:
//!
//! ```text
//! p(c | h) = exp(cos(A h, e_c) / tau) / sum_c' exp(cos(A h, e_c') / tau)
//! ```
//!
//! The loss for one head is `sum_{t in M} -log p(label_t | h_t)`, and the
//! two-head objective is `L_acoustic + lambda * L_spatial`.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Sum over masked frames.
    #[default]
    Sum,
    /// Sum divided by the number of masked frames.
    Mean,
}

/// Projection and class embedding table for one prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `d x D`
    pub projection: Array2<f64>,
    /// `C x d`
    pub embeddings: Array2<f64>,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.embeddings.nrows()
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        if self.projection.ncols() != input_dim {
            return Err(Error::Dimension(format!(
                "projection expects {} inputs, representations have {input_dim}",
                self.projection.ncols()
            )));
        }
        if self.embeddings.ncols() != self.projection.nrows() {
            return Err(Error::Dimension(format!(
                "embeddings have width {}, projection outputs {}",
                self.embeddings.ncols(),
                self.projection.nrows()
            )));
        }
        Ok(())
    }
}

/// Everything the two-head loss needs besides the representations.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBundle {
    pub acoustic: Head,
    pub spatial: Head,
    /// When set, the spatial head uses `acoustic.projection` and
    /// `spatial.projection` is ignored.
    pub share_projection: bool,
    pub tau: f64,
    pub lambda: f64,
    pub reduction: Reduction,
}

impl LossBundle {
    pub fn spatial_head(&self) -> Head {
        if self.share_projection {
            Head {
                projection: self.acoustic.projection.clone(),
                embeddings: self.spatial.embeddings.clone(),
            }
        } else {
            self.spatial.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskedTargets {
    pub labels: Vec<usize>,
    pub mask: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    /// Set when the mask is empty and the loss is 0 by definition.
    pub empty_mask: bool,
}

struct Cosines {
    projected: Array1<f64>,
    projected_norm: f64,
    embedding_norms: Array1<f64>,
    cos: Array1<f64>,
}

fn cosines(h: ArrayView1<f64>, head: &Head) -> Result<Cosines> {
    let projected = head.projection.dot(&h);
    let projected_norm = projected.dot(&projected).sqrt();
    if projected_norm == 0.0 {
        return Err(Error::DegenerateCosine("projected representation"));
    }
    let embedding_norms = head.embeddings.map_axis(Axis(1), |e| e.dot(&e).sqrt());
    if embedding_norms.iter().any(|n| *n == 0.0) {
        return Err(Error::DegenerateCosine("class embedding"));
    }
    let cos = head.embeddings.dot(&projected) / &embedding_norms / projected_norm;
    Ok(Cosines {
        projected,
        projected_norm,
        embedding_norms,
        cos,
    })
}

/// Softmax of `logits`, with the max subtracted first.
fn softmax(logits: &Array1<f64>) -> (Array1<f64>, f64) {
    let max = logits.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    (exp / sum, max + sum.ln())
}

pub fn class_distribution(h: ArrayView1<f64>, head: &Head, tau: f64) -> Result<Array1<f64>> {
    check_tau(tau)?;
    head.check(h.len())?;
    let c = cosines(h, head)?;
    Ok(softmax(&(c.cos / tau)).0)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature {tau} must be positive")));
    }
    Ok(())
}

fn check_targets(reps: &Array2<f64>, head: &Head, targets: &MaskedTargets) -> Result<()> {
    head.check(reps.ncols())?;
    if targets.labels.len() != reps.nrows() {
        return Err(Error::LengthMismatch {
            expected: reps.nrows(),
            actual: targets.labels.len(),
        });
    }
    if let Some(&t) = targets.mask.iter().next_back().filter(|&&t| t >= reps.nrows()) {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: reps.nrows(),
        });
    }
    for &t in &targets.mask {
        let id = targets.labels[t];
        if id >= head.classes() {
            return Err(Error::ClassOutOfRange {
                id,
                classes: head.classes(),
            });
        }
    }
    Ok(())
}

fn frame_weight(reduction: Reduction, masked: usize) -> f64 {
    match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / masked.max(1) as f64,
    }
}

pub fn masked_ce(
    reps: &Array2<f64>,
    head: &Head,
    tau: f64,
    targets: &MaskedTargets,
    reduction: Reduction,
) -> Result<MaskedLoss> {
    check_tau(tau)?;
    check_targets(reps, head, targets)?;
    if targets.mask.is_empty() {
        log::warn!("masked loss evaluated with an empty mask");
        return Ok(MaskedLoss {
            value: 0.0,
            empty_mask: true,
        });
    }
    let weight = frame_weight(reduction, targets.mask.len());
    let mut total = 0.0;
    for &t in &targets.mask {
        let c = cosines(reps.row(t), head)?;
        let logits = c.cos / tau;
        let (_, log_z) = softmax(&logits);
        total += weight * (log_z - logits[targets.labels[t]]);
    }
    Ok(MaskedLoss {
        value: total,
        empty_mask: false,
    })
}

pub fn total_loss(acoustic: f64, spatial: f64, lambda: f64) -> f64 {
    acoustic + lambda * spatial
}

/// Gradients of `L_total` for every trainable input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub acoustic_loss: f64,
    pub spatial_loss: f64,
    pub reps: Array2<f64>,
    /// With a shared projection this carries the gradient from both heads.
    pub acoustic_projection: Array2<f64>,
    /// `None` when the projection is shared.
    pub spatial_projection: Option<Array2<f64>>,
    pub acoustic_embeddings: Array2<f64>,
    pub spatial_embeddings: Array2<f64>,
}

/// Accumulates one head's loss and gradients with every frame weighted by `scale`.
#[allow(clippy::too_many_arguments)]
fn head_backward(
    reps: &Array2<f64>,
    head: &Head,
    tau: f64,
    targets: &MaskedTargets,
    scale: f64,
    d_reps: &mut Array2<f64>,
    d_projection: &mut Array2<f64>,
    d_embeddings: &mut Array2<f64>,
) -> Result<f64> {
    let mut loss = 0.0;
    for &t in &targets.mask {
        let h = reps.row(t);
        let c = cosines(h, head)?;
        let logits = &c.cos / tau;
        let (p, log_z) = softmax(&logits);
        let label = targets.labels[t];
        loss += scale * (log_z - logits[label]);

        // dL/dcos_c = scale * (p_c - [c == label]) / tau
        let mut g = p * (scale / tau);
        g[label] -= scale / tau;

        let u = &c.projected;
        let nu = c.projected_norm;
        let mut du = Array1::<f64>::zeros(u.len());
        for (k, e) in head.embeddings.outer_iter().enumerate() {
            if g[k] == 0.0 {
                continue;
            }
            let ne = c.embedding_norms[k];
            let s = c.cos[k];
            du.scaled_add(g[k] / (nu * ne), &e);
            du.scaled_add(-g[k] * s / (nu * nu), u);
            let mut de = d_embeddings.row_mut(k);
            de.scaled_add(g[k] / (nu * ne), u);
            de.scaled_add(-g[k] * s / (ne * ne), &e);
        }
        for (i, dui) in du.iter().enumerate() {
            d_projection.row_mut(i).scaled_add(*dui, &h);
        }
        d_reps.row_mut(t).scaled_add(1.0, &head.projection.t().dot(&du));
    }
    Ok(loss)
}

pub fn loss_gradients(
    reps: &Array2<f64>,
    bundle: &LossBundle,
    acoustic_targets: &MaskedTargets,
    spatial_targets: &MaskedTargets,
) -> Result<LossGradients> {
    check_tau(bundle.tau)?;
    let spatial_head = bundle.spatial_head();
    check_targets(reps, &bundle.acoustic, acoustic_targets)?;
    check_targets(reps, &spatial_head, spatial_targets)?;

    let mut d_reps = Array2::zeros(reps.raw_dim());
    let mut d_acoustic_proj = Array2::zeros(bundle.acoustic.projection.raw_dim());
    let mut d_spatial_proj = Array2::zeros(spatial_head.projection.raw_dim());
    let mut d_acoustic_emb = Array2::zeros(bundle.acoustic.embeddings.raw_dim());
    let mut d_spatial_emb = Array2::zeros(spatial_head.embeddings.raw_dim());

    let acoustic_loss = head_backward(
        reps,
        &bundle.acoustic,
        bundle.tau,
        acoustic_targets,
        frame_weight(bundle.reduction, acoustic_targets.mask.len()),
        &mut d_reps,
        &mut d_acoustic_proj,
        &mut d_acoustic_emb,
    )?;
    let spatial_weight = frame_weight(bundle.reduction, spatial_targets.mask.len());
    let weighted_spatial = head_backward(
        reps,
        &spatial_head,
        bundle.tau,
        spatial_targets,
        bundle.lambda * spatial_weight,
        &mut d_reps,
        &mut d_spatial_proj,
        &mut d_spatial_emb,
    )?;
    let spatial_loss = if bundle.lambda != 0.0 {
        weighted_spatial / bundle.lambda
    } else {
        masked_ce(reps, &spatial_head, bundle.tau, spatial_targets, bundle.reduction)?.value
    };

    let spatial_projection = if bundle.share_projection {
        d_acoustic_proj += &d_spatial_proj;
        None
    } else {
        Some(d_spatial_proj)
    };

    Ok(LossGradients {
        loss: total_loss(acoustic_loss, spatial_loss, bundle.lambda),
        acoustic_loss,
        spatial_loss,
        reps: d_reps,
        acoustic_projection: d_acoustic_proj,
        spatial_projection,
        acoustic_embeddings: d_acoustic_emb,
        spatial_embeddings: d_spatial_emb,
    })
}

/// Total two-head loss without gradients.
pub fn two_head_loss(
    reps: &Array2<f64>,
    bundle: &LossBundle,
    acoustic_targets: &MaskedTargets,
    spatial_targets: &MaskedTargets,
) -> Result<f64> {
    let a = masked_ce(reps, &bundle.acoustic, bundle.tau, acoustic_targets, bundle.reduction)?;
    let s = masked_ce(reps, &bundle.spatial_head(), bundle.tau, spatial_targets, bundle.reduction)?;
    Ok(total_loss(a.value, s.value, bundle.lambda))
}

/// Replace the rows in `mask` with `embedding`.
pub fn apply_mask(reps: &Array2<f64>, mask: &BTreeSet<usize>, embedding: ArrayView1<f64>) -> Result<Array2<f64>> {
    if embedding.len() != reps.ncols() {
        return Err(Error::Dimension(format!(
            "mask embedding has {} entries, representations have {}",
            embedding.len(),
            reps.ncols()
        )));
    }
    let mut out = reps.clone();
    for &t in mask {
        if t >= reps.nrows() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: reps.nrows(),
            });
        }
        out.row_mut(t).assign(&embedding);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_head(embeddings: Array2<f64>) -> Head {
        let d = embeddings.ncols();
        Head {
            projection: Array2::eye(d),
            embeddings,
        }
    }

    #[test]
    fn equal_cosines_split_evenly() {
        let head = identity_head(array![[1.0, 1.0], [1.0, -1.0]]);
        let p = class_distribution(array![1.0, 0.0].view(), &head, 0.1).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_two_class() {
        // cos = (1.0, 0.9) with tau = 0.1 gives p0 = 1 / (1 + e^-1).
        let a = 0.9f64.acos();
        let head = identity_head(array![[1.0, 0.0], [a.cos(), a.sin()]]);
        let p = class_distribution(array![3.0, 0.0].view(), &head, 0.1).unwrap();
        let want = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((p[0] - want).abs() < 1e-12);
        assert!((want - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn degenerate_cosine_errors() {
        let head = identity_head(array![[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            class_distribution(array![1.0, 0.0].view(), &head, 0.1),
            Err(Error::DegenerateCosine("class embedding"))
        ));
        let head = identity_head(array![[1.0, 0.0]]);
        assert!(matches!(
            class_distribution(array![0.0, 0.0].view(), &head, 0.1),
            Err(Error::DegenerateCosine(_))
        ));
    }

    #[test]
    fn masked_ce_examples() {
        let head = identity_head(array![[1.0, 1.0], [1.0, -1.0]]);
        let reps = array![[1.0, 0.0], [0.0, 1.0]];
        let empty = MaskedTargets {
            labels: vec![0, 1],
            mask: BTreeSet::new(),
        };
        let r = masked_ce(&reps, &head, 0.1, &empty, Reduction::Sum).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.empty_mask);

        let one = MaskedTargets {
            labels: vec![0, 1],
            mask: [0].into(),
        };
        let r = masked_ce(&reps, &head, 0.1, &one, Reduction::Sum).unwrap();
        assert!((r.value - 2f64.ln()).abs() < 1e-12);
        assert!(!r.empty_mask);
    }

    #[test]
    fn target_validation() {
        let head = identity_head(array![[1.0, 1.0]]);
        let reps = array![[1.0, 0.0]];
        let bad = MaskedTargets {
            labels: vec![3],
            mask: [0].into(),
        };
        assert!(matches!(
            masked_ce(&reps, &head, 0.1, &bad, Reduction::Sum),
            Err(Error::ClassOutOfRange { .. })
        ));
        let bad = MaskedTargets {
            labels: vec![0],
            mask: [1].into(),
        };
        assert!(masked_ce(&reps, &head, 0.1, &bad, Reduction::Sum).is_err());
        assert!(masked_ce(&array![[1.0, 0.0, 0.0]], &head, 0.1, &MaskedTargets::default(), Reduction::Sum).is_err());
    }

    #[test]
    fn total_loss_weighting() {
        assert_eq!(total_loss(2.0, 1.0, 0.0), 2.0);
        assert_eq!(total_loss(2.0, 1.0, DEFAULT_LAMBDA), 2.25);
        assert_eq!(DEFAULT_LAMBDA, 0.25);
        assert_eq!(DEFAULT_TAU, 0.1);
    }

    #[test]
    fn apply_mask_rows() {
        let reps = array![[1.0, 2.0], [3.0, 4.0]];
        let emb = array![9.0, 9.0];
        assert_eq!(apply_mask(&reps, &BTreeSet::new(), emb.view()).unwrap(), reps);
        let all = apply_mask(&reps, &[0, 1].into(), emb.view()).unwrap();
        assert!(all.outer_iter().all(|r| r == emb));
        let first = apply_mask(&reps, &[0].into(), emb.view()).unwrap();
        assert_eq!(first.row(0), emb);
        assert_eq!(first.row(1), reps.row(1));
        assert!(apply_mask(&reps, &[2].into(), emb.view()).is_err());
    }
}

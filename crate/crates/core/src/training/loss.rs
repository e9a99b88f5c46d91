use super::config::TrainConfig;
use super::oracle::SegmentTarget;
use crate::error::{Error, Result};
use crate::nn::graph::{binary_cross_entropy, cross_entropy};

/// Loss weight of a segment spanning `m..=n`: `1 + (n - m)^beta`, or 1
/// without the penalty.
pub fn segment_weight(n_minus_m: usize, beta: f64, penalty_enabled: bool) -> f64 {
    if penalty_enabled {
        1.0 + (n_minus_m as f64).powf(beta)
    } else {
        1.0
    }
}

/// Penalized segmentation loss of one document: the weighted per-segment
/// binary cross-entropy (summed over positions), averaged over segments.
/// `probs[k]` are the split probabilities for `targets[k]`.
pub fn segmentation_loss(targets: &[SegmentTarget], probs: &[Vec<f64>], beta: f64, penalty_enabled: bool) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Argument("segmentation loss over an empty segment set".into()));
    }
    if targets.len() != probs.len() {
        return Err(Error::Shape(format!("{} targets, {} score vectors", targets.len(), probs.len())));
    }
    let mut total = 0.0;
    for (t, p) in targets.iter().zip(probs) {
        let y: Vec<f64> = t.y.iter().map(|&v| f64::from(v)).collect();
        if y.len() != p.len() {
            return Err(Error::Shape(format!("segment {} has {} scores", t.segment, p.len())));
        }
        let w = segment_weight(t.segment.end - t.segment.start, beta, penalty_enabled);
        total += w * binary_cross_entropy(p, &y);
    }
    Ok(total / targets.len() as f64)
}

/// Mean cross-entropy of gold classes under their predicted distributions.
pub fn label_loss(gold: &[usize], dists: &[Vec<f64>]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Argument("label loss over no decisions".into()));
    }
    if gold.len() != dists.len() {
        return Err(Error::Shape(format!("{} gold classes, {} distributions", gold.len(), dists.len())));
    }
    let mut total = 0.0;
    for (&k, d) in gold.iter().zip(dists) {
        if k >= d.len() {
            return Err(Error::Data(format!("class {k} outside a {}-way distribution", d.len())));
        }
        total += cross_entropy(d, k);
    }
    Ok(total / gold.len() as f64)
}

pub fn total_loss(seg_loss: f64, lbl_loss: f64, cfg: &TrainConfig) -> f64 {
    cfg.lambda1 * seg_loss + cfg.lambda2 * lbl_loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Label, Nuclearity, Segment};
    use approx::assert_relative_eq;

    fn target(m: usize, n: usize, split: usize) -> SegmentTarget {
        SegmentTarget::new(Segment::new(m, n).unwrap(), split, Label::new(Nuclearity::NS, "elaboration"))
    }

    #[test]
    fn weights() {
        assert_eq!(segment_weight(1, 0.35, true), 2.0);
        assert_eq!(segment_weight(1, 0.9, true), 2.0);
        assert_relative_eq!(segment_weight(4, 0.35, true), 1.0 + 4f64.powf(0.35), epsilon = 1e-15);
        assert_eq!(segment_weight(9, 0.35, false), 1.0);
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let t = [target(1, 3, 2)];
        let loss = segmentation_loss(&t, &[vec![0.0, 1.0, 0.0]], 0.35, true).unwrap();
        assert!(loss < 1e-9);
        assert!(segmentation_loss(&[], &[], 0.35, true).is_err());
    }

    #[test]
    fn unpenalized_loss_is_the_plain_mean() {
        let t = [target(1, 3, 1), target(2, 3, 2)];
        let p = vec![vec![0.7, 0.2, 0.4], vec![0.6, 0.1]];
        let bce = |p: &[f64], y: &[f64]| -> f64 {
            p.iter().zip(y).map(|(p, y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())).sum()
        };
        let expect = (bce(&p[0], &[1.0, 0.0, 0.0]) + bce(&p[1], &[1.0, 0.0])) / 2.0;
        assert_relative_eq!(segmentation_loss(&t, &p, 0.35, false).unwrap(), expect, epsilon = 1e-12);
        let weighted = ((1.0 + 2f64.powf(0.35)) * bce(&p[0], &[1.0, 0.0, 0.0]) + 2.0 * bce(&p[1], &[1.0, 0.0])) / 2.0;
        assert_relative_eq!(segmentation_loss(&t, &p, 0.35, true).unwrap(), weighted, epsilon = 1e-12);
    }

    #[test]
    fn label_losses() {
        let uniform = vec![1.0 / 54.0; 54];
        assert_relative_eq!(label_loss(&[7], &[uniform.clone()]).unwrap(), 54f64.ln(), epsilon = 1e-12);
        let mut onehot = vec![0.0; 54];
        onehot[3] = 1.0;
        assert!(label_loss(&[3], &[onehot]).unwrap() < 1e-12);
        let two = label_loss(&[0, 1], &[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        assert_relative_eq!(two, (2f64.ln() + (4.0f64 / 3.0).ln()) / 2.0, epsilon = 1e-12);
        assert!(matches!(label_loss(&[2], &[vec![0.5, 0.5]]), Err(Error::Data(_))));
    }

    #[test]
    fn weighted_combination() {
        let cfg = TrainConfig::default();
        assert_eq!(total_loss(2.0, 3.0, &cfg), 5.0);
        assert_eq!(total_loss(2.0, 3.0, &TrainConfig { lambda2: 0.0, ..cfg.clone() }), 2.0);
        assert_eq!(total_loss(4.0, 1.0, &TrainConfig { lambda1: 0.5, ..cfg }), 3.0);
    }
}

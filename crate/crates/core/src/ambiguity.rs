//! Per-axis keypoint uncertainty: the Gaussian negative log-likelihood used to
//! calibrate a shared isotropic keypoint covariance, and the uncertainty-gated
//! selection that merges the three primitive axes into one correspondence set.

use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

use crate::object_model::{Axis, PrimitiveLayout, KEYPOINTS_PER_AXIS, WHITE_KEYPOINTS};

/// Default axis rejection threshold.
pub const DEFAULT_SIGMA_O: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmbiguityError {
    #[error("all keypoint errors are zero; the likelihood has no finite minimizer")]
    AllZeroErrors,
    #[error("at least one keypoint error is required")]
    NoErrors,
    #[error("cannot combine an empty list of uncertainties")]
    EmptyList,
    #[error("threshold must be non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("expected exactly one prediction per axis, {0:?} is missing or repeated")]
    AxisMismatch(Axis),
    #[error("uncertainty must be non-negative, got {0}")]
    NegativeSigma(f64),
}

/// Keypoints and uncertainty predicted for one primitive axis image.
///
/// `keypoints[0..9]` are the white-region points (`[0]` is the object center),
/// `keypoints[9..14]` the colored-region points of `axis`, in the same order
/// as [`PrimitiveLayout::axis_keypoints`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPrediction {
    pub axis: Axis,
    pub keypoints: [Vector2<f64>; KEYPOINTS_PER_AXIS],
    pub sigma: f64,
}

/// 2D-3D correspondences surviving axis selection.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedKeypoints {
    pub points: Vec<Vector2<f64>>,
    pub correspondences: Vec<Vector3<f64>>,
    pub valid_axes: Vec<Axis>,
    pub valid_sigmas: Vec<f64>,
    pub sigma_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NllScore {
    pub value: f64,
    /// d value / d xi
    pub gradient: f64,
    pub per_keypoint_errors: Vec<f64>,
}

/// Negative log-likelihood of 2D keypoint errors under `N(0, exp(xi) I2)`,
/// dropping the constant: `sum_i 2 xi + exp(-xi) |e_i|^2`.
pub fn nll_loss(errors: &[Vector2<f64>], xi: f64) -> NllScore {
    let inv_var = (-xi).exp();
    let mut value = 0.0;
    let mut gradient = 0.0;
    let mut per_keypoint_errors = Vec::with_capacity(errors.len());
    for e in errors {
        let sq = e.norm_squared();
        value += 2.0 * xi + inv_var * sq;
        gradient += 2.0 - inv_var * sq;
        per_keypoint_errors.push(sq.sqrt());
    }
    NllScore {
        value,
        gradient,
        per_keypoint_errors,
    }
}

/// Closed-form minimizer of [`nll_loss`]: `log(mean |e_i|^2 / 2)`.
pub fn optimal_xi(errors: &[Vector2<f64>]) -> Result<f64, AmbiguityError> {
    if errors.is_empty() {
        return Err(AmbiguityError::NoErrors);
    }
    let mean_sq = errors.iter().map(|e| e.norm_squared()).sum::<f64>() / errors.len() as f64;
    if mean_sq == 0.0 {
        return Err(AmbiguityError::AllZeroErrors);
    }
    Ok((0.5 * mean_sq).ln())
}

/// Maximum-likelihood per-axis standard deviation (pixels) of a set of
/// keypoint errors, i.e. `sqrt(exp(xi*))`.
pub fn calibrated_sigma(errors: &[Vector2<f64>]) -> Result<f64, AmbiguityError> {
    Ok((0.5 * optimal_xi(errors)?).exp())
}

/// Euclidean norm of the valid axis uncertainties.
pub fn combined_sigma(valid_sigmas: &[f64]) -> Result<f64, AmbiguityError> {
    if valid_sigmas.is_empty() {
        return Err(AmbiguityError::EmptyList);
    }
    Ok(valid_sigmas.iter().map(|s| s * s).sum::<f64>().sqrt())
}

/// Uncertainty-based keypoint selection.
///
/// Axes are visited in x, y, z order; an axis whose `sigma` exceeds `sigma_o`
/// is discarded. White keypoints are averaged incrementally over the valid
/// axes, colored keypoints of each valid axis are appended. Returns
/// `Ok(None)` when every axis is rejected, meaning the frame contributes no
/// pose factor for this object.
pub fn select_and_merge(
    preds: &[AxisPrediction],
    layout: &PrimitiveLayout,
    sigma_o: f64,
) -> Result<Option<MergedKeypoints>, AmbiguityError> {
    if !(sigma_o >= 0.0) {
        return Err(AmbiguityError::InvalidThreshold(sigma_o));
    }
    let mut ordered: [Option<&AxisPrediction>; 3] = [None; 3];
    for p in preds {
        let slot = &mut ordered[p.axis.index()];
        if slot.is_some() {
            return Err(AmbiguityError::AxisMismatch(p.axis));
        }
        if !(p.sigma >= 0.0) {
            return Err(AmbiguityError::NegativeSigma(p.sigma));
        }
        *slot = Some(p);
    }

    let mut n = 0usize;
    let mut white = [Vector2::zeros(); WHITE_KEYPOINTS];
    let mut colored_points = Vec::new();
    let mut colored_corr = Vec::new();
    let mut valid_axes = Vec::new();
    let mut valid_sigmas = Vec::new();
    for axis in Axis::ALL {
        let pred = ordered[axis.index()].ok_or(AmbiguityError::AxisMismatch(axis))?;
        if pred.sigma > sigma_o {
            continue;
        }
        n += 1;
        let keep = (n - 1) as f64 / n as f64;
        let add = 1.0 / n as f64;
        for (j, w) in white.iter_mut().enumerate() {
            *w = *w * keep + pred.keypoints[j] * add;
        }
        colored_points.extend_from_slice(&pred.keypoints[WHITE_KEYPOINTS..]);
        colored_corr.extend_from_slice(layout.colored_for(axis));
        valid_axes.push(axis);
        valid_sigmas.push(pred.sigma);
    }
    if n == 0 {
        return Ok(None);
    }

    let mut points = Vec::with_capacity(WHITE_KEYPOINTS + colored_points.len());
    points.extend_from_slice(&white);
    points.extend(colored_points);
    let mut correspondences = Vec::with_capacity(points.len());
    correspondences.extend_from_slice(&layout.white);
    correspondences.extend(colored_corr);
    let sigma_norm = combined_sigma(&valid_sigmas)?;
    Ok(Some(MergedKeypoints {
        points,
        correspondences,
        valid_axes,
        valid_sigmas,
        sigma_norm,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object_model::make_primitive_layout;

    fn preds(sigmas: [f64; 3]) -> Vec<AxisPrediction> {
        Axis::ALL
            .iter()
            .map(|&axis| {
                let mut keypoints = [Vector2::zeros(); KEYPOINTS_PER_AXIS];
                for (j, k) in keypoints.iter_mut().enumerate() {
                    *k = Vector2::new(10.0 * axis.index() as f64 + j as f64, 100.0 - j as f64 * axis.index() as f64);
                }
                AxisPrediction {
                    axis,
                    keypoints,
                    sigma: sigmas[axis.index()],
                }
            })
            .collect()
    }

    #[test]
    fn nll_trivial_values() {
        assert_eq!(nll_loss(&[Vector2::zeros()], 0.0).value, 0.0);
        assert_eq!(nll_loss(&[Vector2::new(1.0, 0.0)], 0.0).value, 1.0);
    }

    #[test]
    fn nll_gradient_matches_central_difference() {
        let e = [Vector2::new(2.0, 1.0)];
        let h = 1e-6;
        let fd = (nll_loss(&e, 0.5 + h).value - nll_loss(&e, 0.5 - h).value) / (2.0 * h);
        assert!((nll_loss(&e, 0.5).gradient - fd).abs() < 1e-6);
    }

    #[test]
    fn optimal_xi_closed_form() {
        assert!(optimal_xi(&[Vector2::new(2f64.sqrt(), 0.0)]).unwrap().abs() < 1e-15);
        let e = [Vector2::new(2.0, 0.0), Vector2::new(0.0, 2.0)];
        let xi = optimal_xi(&e).unwrap();
        assert!((xi - 2f64.ln()).abs() < 1e-15);
        let f = |x| nll_loss(&e, x).value;
        assert!(f(xi + 0.01) > f(xi) && f(xi - 0.01) > f(xi));
        assert_eq!(optimal_xi(&[Vector2::zeros(), Vector2::zeros()]), Err(AmbiguityError::AllZeroErrors));
        assert_eq!(optimal_xi(&[]), Err(AmbiguityError::NoErrors));
        assert!((calibrated_sigma(&e).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_axes_valid() {
        let layout = make_primitive_layout(0.05).unwrap();
        let p = preds([0.1, 0.2, 0.3]);
        let m = select_and_merge(&p, &layout, 0.4).unwrap().unwrap();
        assert_eq!(m.points.len(), 24);
        assert_eq!(m.correspondences.len(), 24);
        assert_eq!(m.valid_axes, [Axis::X, Axis::Y, Axis::Z]);
        for j in 0..WHITE_KEYPOINTS {
            let mean = (p[0].keypoints[j] + p[1].keypoints[j] + p[2].keypoints[j]) / 3.0;
            assert!((m.points[j] - mean).amax() < 1e-12);
        }
        assert!((m.sigma_norm - (0.01f64 + 0.04 + 0.09).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_axes_rejected() {
        let layout = make_primitive_layout(0.05).unwrap();
        assert_eq!(select_and_merge(&preds([0.5, 0.5, 0.5]), &layout, 0.4), Ok(None));
    }

    #[test]
    fn single_axis_survives() {
        let layout = make_primitive_layout(0.05).unwrap();
        let p = preds([0.1, 0.9, 0.9]);
        let m = select_and_merge(&p, &layout, 0.4).unwrap().unwrap();
        assert_eq!(m.points.len(), 14);
        assert_eq!(&m.points[..9], &p[0].keypoints[..9]);
        assert_eq!(&m.points[9..], &p[0].keypoints[9..]);
        assert_eq!(&m.correspondences[9..], layout.colored_for(Axis::X));
        assert_eq!(m.sigma_norm, 0.1);
    }

    #[test]
    fn threshold_is_inclusive() {
        let layout = make_primitive_layout(0.05).unwrap();
        let m = select_and_merge(&preds([0.4, 0.41, 0.4]), &layout, 0.4).unwrap().unwrap();
        assert_eq!(m.valid_axes, [Axis::X, Axis::Z]);
    }

    #[test]
    fn bad_inputs() {
        let layout = make_primitive_layout(0.05).unwrap();
        let mut p = preds([0.1, 0.1, 0.1]);
        assert_eq!(select_and_merge(&p, &layout, -0.1), Err(AmbiguityError::InvalidThreshold(-0.1)));
        assert_eq!(select_and_merge(&p, &layout, 0.0), Ok(None));
        p[1].axis = Axis::X;
        assert_eq!(select_and_merge(&p, &layout, 0.4), Err(AmbiguityError::AxisMismatch(Axis::X)));
        p.truncate(1);
        assert_eq!(select_and_merge(&p, &layout, 0.4), Err(AmbiguityError::AxisMismatch(Axis::Y)));
        assert_eq!(combined_sigma(&[]), Err(AmbiguityError::EmptyList));
        assert_eq!(combined_sigma(&[3.0, 4.0]), Ok(5.0));
        assert_eq!(combined_sigma(&[0.4]), Ok(0.4));
    }
}

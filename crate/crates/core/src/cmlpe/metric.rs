use numcore::{NumError, Tensor64};

use crate::error::Result;
use crate::posedata::PoseSequence;

/// Mean per-joint position error: the Euclidean distance between matching
/// joints of `[T, J, 3]` arrays, averaged over frames and joints.
pub fn mpjpe(pred: &Tensor64, target: &Tensor64) -> Result<f64> {
    if pred.shape() != target.shape() || pred.rank() != 3 || pred.shape()[2] != 3 || pred.is_empty() {
        return Err(NumError::Shape {
            op: "mpjpe",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        }
        .into());
    }
    let joints = pred.len() / 3;
    let total: f64 = pred
        .data()
        .chunks_exact(3)
        .zip(target.data().chunks_exact(3))
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
        .sum();
    Ok(total / joints as f64)
}

pub fn mpjpe_sequences(pred: &PoseSequence, target: &PoseSequence) -> Result<f64> {
    mpjpe(&pred.to_joint_tensor(), &target.to_joint_tensor())
}

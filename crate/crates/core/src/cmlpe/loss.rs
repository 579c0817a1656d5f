use numcore::{Graph64, Var};

use crate::error::Result;

/// Composite motion loss and whether its velocity term could be formed.
#[derive(Clone, Copy, Debug)]
pub struct MotionLoss {
    pub value: Var,
    /// `false` when the clips have a single frame and the loss is position-only.
    pub velocity_included: bool,
}

/// Mean over frames of `‖x̂_t − x_t‖₂` plus the mean over frame gaps of
/// `‖v̂_t − v_t‖₂` with `v_t = x_{t+1} − x_t`, averaged over the batch.
///
/// Inputs are `[B, T, L]` (or `[T, L]`).
pub fn motion_loss(g: &mut Graph64, pred: Var, target: Var) -> Result<MotionLoss> {
    let diff = g.sub(pred, target)?;
    if g.shape(pred) != g.shape(target) || g.shape(diff).len() < 2 {
        return Err(numcore::NumError::Shape {
            op: "motion_loss",
            detail: format!("{:?} vs {:?}", g.shape(pred), g.shape(target)),
        }
        .into());
    }
    let rank = g.shape(diff).len();
    let t_axis = rank - 2;
    let frames = g.shape(diff)[t_axis];
    let pos_norm = g.norm_last(diff)?;
    let position = g.mean(pos_norm);
    if frames < 2 {
        return Ok(MotionLoss { value: position, velocity_included: false });
    }
    // v̂ − v = (x̂_{t+1} − x_{t+1}) − (x̂_t − x_t)
    let later = g.narrow(diff, t_axis, 1, frames - 1)?;
    let earlier = g.narrow(diff, t_axis, 0, frames - 1)?;
    let vel = g.sub(later, earlier)?;
    let vel_norm = g.norm_last(vel)?;
    let velocity = g.mean(vel_norm);
    let value = g.add(position, velocity)?;
    Ok(MotionLoss { value, velocity_included: true })
}

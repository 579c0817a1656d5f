use numcore::{Graph64, Var};

use crate::error::Result;
use crate::params::{dropout, LayerNorm, Linear, ParamStore};
use crate::rng::Rng;

/// Norm → linear → GELU → dropout → linear, applied to the class token.
#[derive(Clone, Debug)]
pub(crate) struct ClassHead {
    norm: LayerNorm,
    hidden: Linear,
    out: Linear,
    dropout: f64,
}

impl ClassHead {
    pub fn new(store: &mut ParamStore, dim: usize, width: usize, classes: usize, dropout: f64, rng: &mut Rng) -> Self {
        Self {
            norm: LayerNorm::new(store, "head.norm", dim),
            hidden: Linear::new(store, "head.hidden", dim, width, true, rng),
            out: Linear::new(store, "head.out", width, classes, true, rng),
            dropout,
        }
    }

    /// `x[B, dim]` → `[B, C]`.
    pub fn forward(&self, g: &mut Graph64, p: &[Var], x: Var, rng: Option<&mut Rng>) -> Result<Var> {
        let h = self.norm.forward(g, p, x, 1)?;
        let h = self.hidden.forward(g, p, h)?;
        let h = g.gelu(h);
        let h = dropout(g, h, self.dropout, rng)?;
        self.out.forward(g, p, h)
    }
}

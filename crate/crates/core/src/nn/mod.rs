//! Network families used as branch and trunk: MLP, B-spline KAN and FNO.

pub mod bspline;
pub mod count;
pub mod fno;
pub mod kan;
pub mod mlp;
pub mod params;

pub use bspline::{bspline_basis, Basis, SplineSpec};
pub use count::{count_params, ParamCount};
pub use fno::{fno_layer_forward, Fno, FnoConfig};
pub use kan::{Kan, KanConfig, KanLayer};
pub use mlp::{Mlp, MlpConfig, MlpParams};
pub use params::{Bound, ParamId, ParamStore};

//! Differentiable tile-based splatting of color and depth.
//!
//! The forward pass composites depth-sorted splats front to back:
//! `Ĉ(x) = Σ cᵢ αᵢ Πⱼ<ᵢ (1 − αⱼ)` and the same weights blend camera depth.
//! The backward pass re-walks each pixel's contributors back to front using
//! the stored final transmittance, so no per-pixel contributor stack is kept.

mod backward;
mod config;
mod oracle;
mod project;
mod render;

pub use backward::{project_backward, render_backward, ProjectedGrad};
pub use config::{Accumulation, RasterConfig};
pub use oracle::{blend_trace, render_oracle, BlendStep};
pub use project::{project, ProjectedGaussian};
pub use render::{render, render_with_state, ForwardState, RenderOutput};

use crate::error::Result;
use crate::image::Image;
use crate::model::{Camera, CloudGrad, GaussianCloud};
use crate::real::Real;

/// Projects and renders a cloud, keeping what the backward pass needs.
pub fn forward<F: Real>(
    cloud: &GaussianCloud<F>,
    camera: &Camera<F>,
    config: &RasterConfig,
) -> (RenderOutput<F>, ForwardState<F>) {
    let projected = project(cloud, camera, config);
    render_with_state(projected, camera, config)
}

/// Full backward pass from image-space gradients to every cloud attribute.
pub fn backward<F: Real>(
    cloud: &GaussianCloud<F>,
    camera: &Camera<F>,
    state: &ForwardState<F>,
    grad_color: &Image<F>,
    grad_depth: &Image<F>,
) -> Result<CloudGrad<F>> {
    let grads = render_backward(state, grad_color, grad_depth)?;
    project_backward(cloud, camera, &state.config, &state.projected, &grads)
}

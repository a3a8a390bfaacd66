//! Mesh ingestion, viewpoint placement, rasterization into fragment maps and
//! the gather/scatter pair that makes texture rendering differentiable.

mod camera;
mod mesh;
mod raster;
mod sampling;

pub use camera::{fibonacci_sphere, fibonacci_viewpoints, Camera};
pub use mesh::{load_mesh, parse_obj, wrap_uv, Corner, Mesh};
pub use raster::{rasterize, uv_coverage, Fragment, FragmentMap};
pub use sampling::{sample_texture, scatter_gradient, touched_texels, Filter};

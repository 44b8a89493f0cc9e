//! Grid queries, rasters and isosurface meshes.

mod field;
mod mesh;
mod raster;
mod tables;

pub use field::{ChannelSelector, CornerField, ScalarField};
pub use mesh::{extract_mesh, Mesh, MeshStatus, DEGENERATE_AREA};
pub use raster::{render_raster, to_pixel, Raster};

/// Default height offset of horizontal slices above the table top (metres).
pub const SLICE_OFFSET: f64 = 0.02;

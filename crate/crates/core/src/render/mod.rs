//! Surface depth maps and Phong-shaded tactile images.

mod depth;
mod shading;

pub use depth::{crop_align, extract_surface_depth, read_depth_map, write_depth_map, Alignment, DepthMap};
pub use shading::{
    phong_render, shade, surface_normals, LightSource, RenderParams, TactileImage, IMAGE_HEIGHT,
    IMAGE_WIDTH,
};

//! Procedural frame pairs with exact flow, disparity and camera motion,
//! and the geometric derivation of moving-object labels from them.

mod camera;
mod dataset;
mod labels;
mod noise;
mod scene;

pub use camera::{mat_t_vec, mat_vec, rotation_from_axis_angle, CameraParams, Mat3, Point3, IDENTITY};
pub use scene::{generate_scene, SceneConfig, SceneSample, StuffConfig, TextureFamily};
pub use labels::{derive_motion_labels, geometric_motion, layered_disparity, LabelGenParams, LayerSample, Support};
pub use noise::{corrupt_flow, FlowNoiseConfig};
pub use dataset::{
    camera_text, list_samples, parse_camera_text, read_dataset, read_flow_input, read_sample, sample_dir, write_dataset,
    write_sample, FLOW_INPUT_FILE,
};

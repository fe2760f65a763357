//! Procedural ground truth: analytic scenes, camera rigs, exact renders and
//! hazed, quantized datasets.

mod dataset;
mod scene;

pub use dataset::{
    build_dataset, generate_cameras, load_training_set, BuildSpec, CameraRecord, DatasetManifest, GroundTruth,
    FixtureSpec, GroundTruthViews, HazyDataset, RigSpec, MANIFEST_FILE,
};
pub use scene::{gt_render, Primitive, PrimitiveKind, SceneSpec};

//! In-repo image scoring methods.

mod distance;
mod gist;
mod hog;
mod image;
mod local;

pub use distance::score_by_features;
pub use gist::{compute_gist, GIST_DIM, GIST_GRID, GIST_INPUT_PX, GIST_ORIENTATIONS, GIST_SCALES};
pub use hog::{compute_hog, hog_dim, HOG_BINS};
pub use image::GrayImage;
pub use local::{
    detect_keypoints, local_feature_distance, match_distance, BinaryDescriptor, Keypoint,
    MatchFilterParams, DESCRIPTOR_BITS,
};

//! Pose sequences, the on-disk dataset format and the preprocessing chain:
//! gap filling, smoothing, windowing, class balancing and augmentation.

mod augment;
mod balance;
mod dataset;
mod filters;
mod layout;
mod sequence;
pub mod toyworld;
mod window;

pub use augment::{augment, augment_with, AugmentParams, MAX_ROTATION_DEG, MAX_SCALE_DEVIATION};
pub use balance::{oversample_balance, oversample_indices};
pub use dataset::{Dataset, Sample, SampleEntry, Manifest, Split, Splits};
pub use filters::{center_on_body, interpolate_missing, savgol_coefficients, savgol_smooth, zero_hand_depth};
pub use layout::{LandmarkLayout, COORDS, FEATURES, NUM_LANDMARKS};
pub use sequence::PoseSequence;
pub use window::{window_frames, Window, WindowMode, WINDOW};

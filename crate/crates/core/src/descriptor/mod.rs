//! Dense descriptors: images, correspondences, contrastive loss, a
//! synthetic provider and quality metrics.

mod correspondence;
mod eval;
mod image;
mod loss;
mod synth;

pub use correspondence::{
    generate_correspondences, Correspondence, CorrespondenceConfig, CorrespondenceSet, Label, PosedDepth,
};
pub use eval::{
    dense_match_eval, distance_stats, distance_stats_from_distances, DescriptorPair, DistanceStats, MatchError,
    OVERLAP_BINS,
};
pub use image::DescriptorImage;
pub use loss::{contrastive_from_distance, contrastive_loss, euclidean, total_loss, LossConfig, DEFAULT_MARGIN};
pub use synth::{
    synth_descriptor_field, DescriptorField, DescriptorProvider, FourierField, FrameGeometry, SyntheticProvider,
};

//! Exact inference over head scores: projective trees, label chains,
//! semantic graphs, and tag-to-span recovery.

pub mod crf;
pub mod eisner;
pub mod sdp;
pub mod spans;

pub use crf::{log_partition, sequence_score, viterbi, CrfParams};
pub use eisner::{eisner, tree_score, ArcScoreMatrix};
pub use sdp::{assign_labels, sdp_decode, LabeledArcScores};
pub use spans::{bio_to_entities, bmes_to_spans, entities_to_bio, spans_to_bmes, Bmes};

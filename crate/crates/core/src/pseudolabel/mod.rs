//! Pseudo-label generation by iterated normalized cuts on patch affinities.

mod affinity;
mod cache;
pub mod eigen;
mod maskcut;
mod ncut;

pub use affinity::{build_affinity, AffinityGraph, DEFAULT_EPS, DEFAULT_TAU};
pub use cache::{generate_and_cache, param_hash, PseudoLabelCache, PseudoLabelOutcome, PseudoLabelParams};
pub use maskcut::{
    is_degenerate, maskcut, select_foreground, upsample_pseudo_label, DEFAULT_ITERATIONS, MAX_FOREGROUND_FRACTION,
    MIN_FOREGROUND_FRACTION,
};
pub use ncut::{argmax_abs, best_threshold_split, fiedler_vector, ncut_value, normalized_cut_bipartition, CutResult};

//! Metrics and mask inspection.

mod masks;
mod metrics;

pub use masks::{
    inspect_masks, instance_masks, mask_linf, BlockMaskStats, Histogram, MaskExample, MaskInspection,
    HISTOGRAM_BINS,
};
pub use metrics::{auc, mean_logloss, relaimp, EvalReport};

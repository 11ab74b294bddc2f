//! Bar-selective COSFIRE filters.

mod bank;
mod config;
mod prototype;
mod response;

pub use bank::{make_bank, OrientationBank, ORIENTATION_STEP};
pub use config::{
    analytic_asymmetric, analytic_symmetric, angular_distance, blur_sigma, normalize_angle,
    rotate_config, FilterConfig, FilterKind, FilterPoint, WeightScheme,
};
pub use prototype::{configure_from_prototype, ConfigureOptions};
pub use response::{
    apply_filter, apply_filter_uncached, blur_shift_response, combine_responses, combined_response,
    dog_response, filter_response, normalize_response, segment, threshold_response, ResponseCache,
    SegmentationParams, RESPONSE_SCALE,
};

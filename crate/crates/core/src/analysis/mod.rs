//! Parameter counting, identity-input sensitivity and shape-bank provenance.

mod params;
mod sensitivity;
mod shapes;

pub use params::{count_params, enumerate_params};
pub use sensitivity::{sensitivity_matrix, SensitivityMatrix};
pub use shapes::{
    export_shapes, extract_shapes, match_shapes, nearest_match, write_shapes_csv, z_distance, z_normalize,
    ShapeMatch, ShapeRecord, CONSTANT_WINDOW_STD,
};

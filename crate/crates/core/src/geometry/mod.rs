//! Ground-truth distance oracles, training-point sampling and the error
//! metrics used to score fitted fields.

mod isosurface;
mod mesh;
mod metrics;
mod primitive;
mod sampling;

pub use isosurface::{marching_tetrahedra, IsoSurface};
pub use mesh::{closest_point_on_triangle, MeshDistance, TriangleFeature, TriangleMesh};
pub use metrics::{
    accuracy_report, chamfer_distance, AccuracyReport, ErrorStats, PointIndex,
    DEFAULT_NEAR_THRESHOLD,
};
pub use primitive::{closest_on_segment, segment_segment_distance, Primitive};
pub use sampling::{
    sample_training_set, write_samples_csv, DistanceOracle, PosedShape, SamplingConfig, SdfSample,
    Shape,
};

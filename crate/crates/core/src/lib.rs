//! Surface reconstruction from interior and partial surface voxel evidence.
//!
//! Given a mask of objects lying inside the sought regions and a mask of
//! markers lying on their surfaces, [`reconstruct::reconstruct_surfaces`]
//! computes exact Euclidean distance fields to both, blends them with a
//! β-weighted gradient and floods the result from the interior components
//! with a deterministic watershed. The remaining modules provide mask
//! preparation, validation against a reference labeling, synthetic
//! phantoms and MetaImage/PGM/OBJ I/O.

pub mod connectivity;
pub mod edt;
pub mod error;
pub mod gradient;
pub mod io;
pub mod maskprep;
pub mod phantom;
pub mod reconstruct;
pub mod validate;
pub mod volume;
pub mod watershed;

pub use connectivity::Connectivity;
pub use error::{Error, Result};
pub use gradient::GradientParams;
pub use phantom::{PhantomOutput, PhantomSpec};
pub use reconstruct::{LabelSelector, ReconstructionResult, RegionStats};
pub use validate::{CellPairComparison, ValidationReport};
pub use volume::{
    AnyVolume, BinaryMask, DistanceField, ElementType, GradientField, LabelVolume, Volume,
    VolumeMeta,
};
pub use watershed::{SeedMode, WatershedOptions};

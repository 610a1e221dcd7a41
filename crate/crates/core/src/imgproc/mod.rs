//! Raster primitives shared by every other module.

pub mod components;
pub mod contour;
pub mod distance;
pub mod moments;
pub mod morphology;
pub mod pnm;
pub mod raster;
pub mod resize;
pub mod thinning;
pub mod threshold;
pub mod watershed;

pub use components::{connected_components, largest_component, remove_small, Connectivity};
pub use contour::{contour_perimeter, trace_boundary, Perimeter};
pub use distance::distance_transform;
pub use moments::{central_moments, Moments};
pub use morphology::{dilate_cross, erode_cross, median3, open_cross};
pub use pnm::{decode_pbm, decode_pgm, encode_pbm, encode_pgm, read_pbm, read_pgm, write_pbm, write_pgm};
pub use raster::{BitMask, Field, LabelMap, Raster};
pub use resize::resize_bilinear;
pub use thinning::{endpoints, prune_spurs, skeletonize};
pub use threshold::{threshold_adaptive, threshold_otsu, Otsu};
pub use watershed::{default_h, watershed_count, Watershed};

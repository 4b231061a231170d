//! Feature → moisture estimators: a random-forest regressor and a DTW
//! nearest-profile matcher, plus the dataset container and error report they
//! share.

mod dataset;
mod dtw;
mod forest;
mod report;

pub use dataset::{Dataset, Row, RowMeta};
pub use dtw::{dtw_distance, dtw_estimate, LabeledProfile};
pub use forest::{predict, train_forest, ForestModel, Hyperparams, Node, Tree};
pub use report::{evaluate, ErrorReport};

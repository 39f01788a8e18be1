//! Per-scan feature tensors, PCA embedding and correlation with per-scan
//! covariates.

mod correlation;
mod pca;
mod tensor;

pub use correlation::{correlation_matrix, pearson, quantile_transform};
pub use pca::{pca_fit, pca_project, PcaModel, PcaRoute};
pub use tensor::{load_feature_tensor, reduce_tensor, FeatureDescriptor, FeatureTensor, FeatureVector, FoldTensor, AXES};

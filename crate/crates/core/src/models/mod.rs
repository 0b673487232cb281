//! The main classifier, the label correction network, and the soft-target
//! loss connecting them.

mod classifier;
mod init;
mod io;
mod lcn;
mod loss;

pub use classifier::{
    classifier_forward, classifier_logits, predict, ClassifierConfig, ClassifierOutput,
};
pub use io::{read_params, write_params, ParamFile, PARAMS_MAGIC, PARAMS_VERSION};
pub use lcn::{lcn_forward, lcn_predict, FeatureSource, LcnConfig};
pub use loss::{cross_entropy_labels, one_hot, soft_cross_entropy, SoftLabel};

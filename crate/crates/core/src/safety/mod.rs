//! Moderation and emergency detection.
//!
//! The emergency score is
//! `σ(HGB(PCA(concat(tfidf(W), OHE(W), LLM(W)))))` compared strictly
//! against a threshold `t`, with the gradient-boosted trees replaced by
//! boosted depth-1 stumps.

mod boosting;
mod emergency;
mod moderation;
mod pca;

pub use boosting::{
    fit_boosted_stumps, fit_boosted_stumps_with, logistic_loss, sigmoid, BoostConfig, BoostError, BoostFit, Stump,
    StumpEnsemble, WeightedStump,
};
pub use emergency::{
    emergency_score, featurize, train_emergency, EmergencyExample, EmergencyModel, EmergencyTrainConfig,
    EmergencyVerdict, FeatureVector, ModelError, TrainError, DEFAULT_THRESHOLD,
};
pub use moderation::{moderate, BlacklistError, BlacklistTree, ModerationVerdict, BLACKLIST_SCHEMA_VERSION};
pub use pca::{max_components, pca_fit, Pca, PcaError};

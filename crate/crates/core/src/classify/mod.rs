//! Classification rules.

pub mod kclass;
pub mod nsc;
pub mod oracle;
pub mod pclda;
pub mod rotation;

pub use kclass::{fit_kclass, KClassModel};
pub use nsc::{fit_nsc, NscModel, NscStats};
pub use oracle::{bayes_risk, normal_cdf, oracle_fisher, OracleRule};
pub use pclda::{
    fit_pclda, hard_threshold, rank_by_magnitude, select_top_s, threshold_level, PcldaModel, Selection,
};
pub use rotation::{rotate_preprocess, rotation_basis, Rotation};

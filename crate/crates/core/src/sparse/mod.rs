//! Calderón–Zygmund decomposition, the stopping-time sparse construction,
//! and fractional sparse operators.

mod build;
mod cz;
mod family;
mod operator;

pub use build::{
    build_sparse_family, domination_certificate, DominationCertificate, NodeRecord,
    SparseConstruction, CERTIFICATE_SLACK, LEAF_CELLS, MAX_DEPTH, MAX_DOUBLINGS,
};
pub use cz::{cz_decompose, CzResult};
pub use family::{verify_sparse, Provenance, SparseCertificate, SparseFamily, SparseFamilyRecord};
pub use operator::{
    principal_cubes_family, sandwich, sparse_operator, sparse_operator_with, AverageConvention,
    SandwichReport,
};

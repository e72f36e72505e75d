//! Critical FK Ising loop ensembles, exploration trees, discrete
//! holomorphic observables and radial SLE numerics.

pub mod dca;
pub mod harness;
pub mod lattice;
pub mod loewner;
pub mod observable;
pub mod rcmodel;
pub mod sle;
pub mod tree;

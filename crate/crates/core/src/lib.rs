//! Core of the quantified-goal grounding toolkit.
//!
//! Everything here runs without `std`: the STRIPS model, goal semantics,
//! the breadth-first cost oracle, instance generators, the tensor engine and
//! the relational GNN with its training loop. File formats, timing and the
//! command line live in the companion `qground` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod generators;
pub mod goal;
pub mod math;
pub mod optim;
pub mod oracle;
pub mod policy;
pub mod rgnn;
pub mod search;
pub mod seed;
pub mod strips;
pub mod tensor;
pub mod train;

pub use goal::{Binding, QuantifiedGoal};
pub use math::Real;
pub use oracle::Cost;
pub use strips::{
    Atom, Domain, GroundAction, GroundAtom, LiftedAtom, ObjectId, PredId, Problem, State, Task,
    Term, VarId,
};

pub(crate) type FxMap<K, V> = hashbrown::HashMap<K, V, rustc_hash::FxBuildHasher>;

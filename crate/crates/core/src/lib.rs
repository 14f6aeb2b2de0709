//! Physics-vetted descriptor selection and gated multimodal property
//! prediction for small molecules.
//!
//! The crate is `no_std` + `alloc`. It contains the pure parts of the
//! pipeline: XYZ parsing, dataset filtering and folds, the physics rule
//! engine, the selector/validator dialogue over an abstract chat backend,
//! the weighted descriptor embedding, the invariant message-passing
//! encoder, the gated fusion head, training and metrics. File, network and
//! command-line handling live in the `xchem` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dataset;
pub mod descriptor;
pub mod dialogue;
pub mod embedding;
pub mod encoder;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod molecule;
pub mod nn;
pub mod prior;
pub mod rules;
pub mod target;
pub mod train;
pub mod xyz;

pub use dataset::{filter_complete, make_folds, Entry, FoldSplit};
pub use descriptor::{DescriptorKind, DescriptorRecord};
pub use dialogue::{run_dialogue, AcceptedSelection, ChatBackend, SelectionProposal, Verdict};
pub use molecule::Molecule;
pub use target::TargetProperty;
pub use xyz::{parse_xyz, write_xyz};

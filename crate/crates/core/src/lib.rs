//! Fuzzy spectral triples: Clifford modules, chord-diagram brackets,
//! random Dirac operators, symbolic trace functionals and sampling of the
//! spectral action `Tr f(D)`.

pub mod action;
pub mod chords;
pub mod clifford;
pub mod dirac;
pub mod error;
pub mod mcmc;
pub mod ncpoly;
pub mod oracle;

pub use action::{spectral_action, ActionSpec, EvalPath};
pub use chords::{bracket, ChordDiagram};
pub use clifford::{build_gamma, GammaRep, LetterType, MultiIndex, Signature};
pub use dirac::{assemble_dense, random_dirac_data, CMatrix, DiracData};
pub use error::{Error, Result};
pub use mcmc::{ChainConfig, ChainStats};
pub use ncpoly::{
    classify_cyclic, evaluate_functionals, generate_trace_functionals, CyclicClass,
    TraceFunctional, TraceWord,
};
pub use oracle::VerificationReport;

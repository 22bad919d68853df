//! Photon statistics of light measured with a balanced multiplexed
//! photon-number-resolving detector.
//!
//! The crate covers the forward problem (source laws, detector response, click
//! sampling) and the inverse problem (direct inversion, expectation maximization,
//! and entropy-regularized expectation maximization), together with the usual
//! nonclassicality diagnostics and a seeded experiment runner.
//!
//! ```
//! use pnrstat::{detector, fock, retrieval};
//!
//! let cfg = detector::DetectorConfig::new(10, 0.5).unwrap();
//! let matrix = detector::ResponseMatrix::new(cfg, 50).unwrap();
//! let truth = fock::coherent(4.0, 50).unwrap();
//! let clicks = detector::forward(&matrix, &truth).unwrap();
//! let report = retrieval::eme_retrieve(&clicks, &matrix, &Default::default()).unwrap();
//! assert!(pnrstat::diagnostics::fidelity(&report.estimate, &truth) > 0.999);
//! ```

pub mod detector;
pub mod diagnostics;
pub mod error;
pub mod fock;
pub mod harness;
pub mod io;
pub mod retrieval;
pub mod seeds;

pub use detector::{ClickDistribution, ClickMode, DetectorConfig, ResponseMatrix};
pub use diagnostics::DiagnosticsBundle;
pub use error::{Error, Result};
pub use fock::{PhotonDistribution, SourceSpec};
pub use retrieval::{Algorithm, RetrievalReport, RetrievalSettings, StopReason};

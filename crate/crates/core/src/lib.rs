//! Two-type Moran and Wright-Fisher models evolving in a pure-jump random
//! environment, together with their genealogical dual chains and the moment
//! identities connecting the two.
//!
//! The crate covers four layers:
//!
//! * forward-in-time simulation: finite Moran populations ([`moran`]) and
//!   the jump-diffusion frequency limit ([`diffusion`]);
//! * backward-in-time simulation: killed, pruned, and Siegmund line-counting
//!   chains ([`genealogy`]);
//! * exact solvers: stationary moment recursions ([`recursion`]) and the
//!   triangular spectral machinery for quenched moments and ancestral type
//!   distributions ([`spectral`]);
//! * statistical cross-checks wiring the layers together ([`duality`]).
//!
//! Entry points are demonstrated in the `examples/` directory; a thin
//! `wfenv` binary exposes the same operations from the command line.

mod dd;

pub mod diffusion;
pub mod duality;
pub mod error;
pub mod genealogy;
pub mod model;
pub mod moran;
pub mod path;
pub mod recursion;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{Environment, LevyMeasure, ModelParams, Orientation, SigmaTable};
pub use path::{MomentSummary, PathSample};

//! MAP estimation in pairwise Markov random fields through quadratic
//! programming.
//!
//! Three solvers ascend the bilinear MAP QP over per-node beliefs with
//! message passing: CCCP on the nonconvex QP ([`cccp::nonconvex`]), CCCP on a
//! convex relaxation ([`cccp::convex`]) and multiplicative GP/EM updates
//! ([`gp_em`]). Damped max-product ([`max_product`]) is the baseline.
//!
//! ```
//! use mrfqp::{solve, PairwiseMrf, SolverConfig, SolverKind};
//!
//! let mut mrf = PairwiseMrf::new(vec![2, 2]).unwrap();
//! mrf.add_edge(0, 1, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
//! let report = solve(SolverKind::Cccp, &mrf, &SolverConfig::default()).unwrap();
//! assert_eq!(report.assignment.labels(), &[0, 0]);
//! assert_eq!(report.integral_objective, 2.0);
//! ```

pub mod bench;
pub mod cccp;
pub mod error;
pub mod exec;
pub mod generators;
pub mod gp_em;
pub mod io;
pub mod max_product;
pub mod messages;
pub mod model;
pub mod rng;
pub mod solver;

pub use error::{MrfError, ParseError, ParseErrorKind, Result};
pub use exec::Parallelism;
pub use model::{Assignment, Beliefs, ObjectiveOffset, PairwiseMrf};
pub use solver::{solve, Init, SolveReport, SolverConfig, SolverKind, TraceRecord};

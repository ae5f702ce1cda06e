//! Linear and mixed-binary linear programming, generic over the scalar.
//!
//! The LP solver is a dense two-phase bounded-variable simplex with a
//! Bland fallback on long degenerate runs. Mixed-binary models are solved
//! by best-bound branch-and-bound whose children are warm-started from the
//! parent tableau with the dual simplex.
//!
//! ```
//! use valnet_milp::{MilpModel, Sense, solve_milp, Limits};
//!
//! let mut m: MilpModel<f64> = MilpModel::new("knap");
//! let a = m.add_binary("a");
//! let b = m.add_binary("b");
//! m.set_obj(a, -3.0);
//! m.set_obj(b, -2.0);
//! m.add_row("cap", vec![(a, 2.0), (b, 2.0)], Sense::Le, 3.0);
//! let sol = solve_milp(&m, &Limits::none()).unwrap();
//! assert_eq!(sol.objective, Some(-3.0));
//! ```

mod bnb;
mod lp_format;
mod model;
mod scalar;
mod simplex;

pub use bnb::{solve_lp, solve_milp};
pub use lp_format::to_lp_format;
pub use model::{Constraint, Limits, MilpError, MilpModel, MilpSolution, RowId, Sense, Status, VarId, Variable};
pub use scalar::{parse_decimal, Rational, Scalar};

/// Model over `f64`, the production scalar.
pub type Model = MilpModel<f64>;
/// Model over exact rationals.
pub type ExactModel = MilpModel<Rational>;

//! Explicit transport machinery realising a coupling as a sequence of
//! bistochastic maps on system ⊗ battery, plus the forward and reverse
//! measurement protocols that read fluctuation tables back out of it.

mod joint;
mod oracle;
mod transition;
mod window;

pub use joint::{build_joint_states, overlap_to_ideal, CollapsedState, Overlap};
pub use oracle::{full_label_oracle, OracleReport, ORACLE_MAX_DIM, ORACLE_MAX_N};
pub use transition::{
    build_transition, forward_protocol, reverse_protocol, verify_transport, BlockTransition,
    Completion, ReverseCoupling, ReverseResiduals, CONDITION_TOL,
};
pub use window::{make_window, WindowSpec};

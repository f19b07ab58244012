//! Workbench for decoy-state BB84: loss budgets, risk grading, link and
//! attack simulation, and the full post-processing chain.

pub mod attacks;
pub mod check;
pub mod linksim;
pub mod lossbudget;
pub mod risk;
pub mod postproc;
pub mod scenario;

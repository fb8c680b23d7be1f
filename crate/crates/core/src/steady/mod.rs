//! Steady states: the logistic vector profile and the endemic equilibrium.

mod endemic;
mod logistic;

pub use endemic::{
    check_admissible, monotone_iterate, perturbation_weight, solve_endemic, solve_endemic_with,
    upper_solution_h, Direction, Endemic, EndemicEquilibrium, EndemicOptions, MonotoneLimit, Pair,
    PerturbedEndemic, Sweeps,
};
pub(crate) use logistic::solve_logistic_given;
pub use logistic::{solve_logistic, LogisticSteady};

//! Diffusion coefficient estimators: the Eq.-(6) variational
//! least-squares route, the relevant-site test-function Dirichlet form,
//! and a Green-Kubo correlation estimator.

mod basis;
mod green_kubo;
mod testfn;
mod variational;

pub use basis::{gradient_sum, LocalFunctionBasis};
pub use green_kubo::{green_kubo_estimate, GreenKuboEstimate};
pub use testfn::{
    test_function_dirichlet, test_function_gradient, test_function_gradient_fast,
    test_function_value, DirichletEstimate, TestFunctionSpec,
};
pub use variational::{estimate_D_variational, VariationalEstimate, VariationalMoments};

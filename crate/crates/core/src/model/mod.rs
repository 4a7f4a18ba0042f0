//! Balanced realizations, backward models and all-pass extensions.

mod allpass;
mod balanced;
mod covariance;
mod system;

pub use allpass::{
    backward_transfer, eval_structural_function, forward_transfer, resolvent_product,
    AllPassExtension, CMatrix, StructuralValue,
};
pub use balanced::{
    backward_model, balance, balance_residual, BackwardModel, BalancedModel, BALANCE_TOLERANCE,
};
pub use covariance::{propagate_covariance, CovariancePath};
pub use system::{stationary_covariance, LtvSystem, TimeKind};

/// Extension of a balanced model (the same value `balance` attaches to it).
pub fn allpass_extension(bal: &BalancedModel) -> crate::Result<AllPassExtension> {
    Ok(backward_model(bal)?.extension().clone())
}

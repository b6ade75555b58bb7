//! Dense networks, their exact input/parameter derivatives, and the
//! quasi-Newton trainer.

pub mod lbfgs;
pub mod network;
pub mod tape;

pub use lbfgs::{lbfgs_minimize, minimize_params, LbfgsConfig, LbfgsResult, LbfgsStatus};
pub use network::{forward, forward_batch, forward_jet, init_params, Activation, JetValue, NetworkParams, NetworkSpec};
pub use tape::{loss_gradient, JetVar, Tape, Var};

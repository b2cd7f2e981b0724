//! Dense feed-forward substrate for the self-supervised models: explicit
//! forward/backward passes, per-attribute output heads, weight masks, and
//! inverted dropout. No autodiff; gradients are hand-derived and checked
//! against finite differences in the tests.

mod adam;
mod container;
mod network;

pub use adam::{adam_step, AdamState};
pub use container::{read_network, write_network};
pub use network::{
    backward, forward, loss_and_grad, Activation, DenseLayer, DropoutSpec, ForwardCache,
    Gradients, Head, Mat, Network,
};

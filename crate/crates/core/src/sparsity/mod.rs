//! Fixed fan-in connectivity learning.
//!
//! Each connection `k` carries a trainable magnitude `θ_k` and a sign `s_k`
//! frozen at initialisation. The effective weight is `θ_k·s_k` while
//! `θ_k > 0` and exactly zero otherwise. After every gradient update the
//! rewiring pass compares each neuron's active count with its target fan-in
//! and regrows, penalises or removes connections.

mod mask;
mod rewire;
mod schedule;
mod state;

pub use mask::{init_random_mask, FeatureMask, LayerMask};
pub use rewire::{
    apply_stochastic_update, deepr_star_step, extract_mask, rewire_deepr_star, rewire_sparselut,
    sparselut_step, RewireStats,
};
pub use schedule::RewiringSchedule;
pub use state::{init_connection_state, init_connection_state_scaled, ConnectionState};

//! Values pinned by the double-double runs in `oracles.rs`
//! (bilinear 2-D, z0 = (1, 1), γ = 2, T = 1e5, stride 100, window [1e3, 1e5]).

pub const PINNED_SLOPE_NEW: f64 = -0.99978;
/// anchored-ryu with p = 3/4
pub const PINNED_SLOPE_RYU: f64 = -0.46649;

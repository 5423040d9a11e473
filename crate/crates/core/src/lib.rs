//! Simulation and design tools for a two-atom SWAP gate whose exchange
//! coupling is driven by the motion of a mechanical oscillator in a hybrid
//! atom-cavity-optomechanical system.
//!
//! The crate follows the reduction chain from the composite
//! atom-cavity-oscillator Hamiltonian ([`model`]), through adiabatic
//! elimination of the atomic excited states and the cavity mode
//! ([`reduction`]), to time propagation ([`dynamics`]) and gate timing
//! ([`gate`]). [`cli`] wires everything to the `swapmech` binary.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod gate;
pub mod model;
pub mod reduction;
pub mod tensor;

pub use error::{ SResult, SwapError };

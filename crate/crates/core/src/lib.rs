//! Polynomial structure of black-brane solutions in sigma models built from
//! intersecting branes.
//!
//! The crate is organised bottom-up: [`lie_cartan`] holds exact quasi-Cartan
//! matrices and the polynomial degrees they imply, [`sigma_model`] turns a
//! brane configuration into those matrices, [`moduli_poly`] solves the
//! algebraic system for the moduli polynomials, [`toda_oracle`] provides the
//! independent Toda-chain and ODE cross-checks and [`blackhole_report`]
//! assembles everything into a metric with its horizon data.

pub mod blackhole_report;
pub mod lie_cartan;
pub mod moduli_poly;
pub mod ode;
pub mod poly;
pub mod sigma_model;
pub mod toda_oracle;

/// Seed override for stochastic parts (proptest cases, random sweeps).
pub const SEED_ENV: &str = "TODA_BRANE_SEED";

/// `TODA_BRANE_SEED` if set and parseable, otherwise `default`.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(default)
}

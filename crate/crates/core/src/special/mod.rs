//! Special functions: complex gamma family and confluent hypergeometric
//! functions.

pub mod gamma;
pub mod kummer;

pub use gamma::{digamma, gamma, gamma_real, ln_gamma, rgamma, EULER_GAMMA};
pub use kummer::{
    hyp1f1, hyp1f1_scaled, hyperu, kummer_m, kummer_m_diag, kummer_m_scaled, kummer_u,
    kummer_u_diag, wronskian, wronskian_scaled, Estimate, KummerOptions, KummerParams, TricomiU,
};

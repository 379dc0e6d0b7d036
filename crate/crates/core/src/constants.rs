//! Physical constants (CODATA 2018, exact where the SI defines them).

/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// Nuclear magneton, J/T.
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;

/// Quadrature variance of the vacuum in the `[q, ip] = 1/2` convention.
pub const VACUUM_VARIANCE: f64 = 0.25;

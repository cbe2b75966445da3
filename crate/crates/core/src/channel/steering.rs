use std::f64::consts::PI;

use crate::cnum::{ComplexMatrix, C64};

/// Response of an `m`-element linear array along the y-axis.
///
/// Entry `k` is `exp(j·2π·d·k·sinθ·sinφ)`.
pub fn steering_ula(m: usize, theta: f64, phi: f64, d_over_lambda: f64) -> ComplexMatrix {
    let step = 2.0 * PI * d_over_lambda * theta.sin() * phi.sin();
    ComplexMatrix::column((0..m).map(|k| C64::from_polar(1.0, step * k as f64)).collect())
}

/// Response of an `nz × nx` planar array in the xz plane, `a_z ⊗ a_x`.
///
/// Both factors are conjugated phase progressions, so entry `iz·nx + ix` is
/// `exp(−j·2π·d·(iz·cosθ + ix·sinθ·cosφ))`.
pub fn steering_upa(nz: usize, nx: usize, theta: f64, phi: f64, d_over_lambda: f64) -> ComplexMatrix {
    let kz = 2.0 * PI * d_over_lambda * theta.cos();
    let kx = 2.0 * PI * d_over_lambda * theta.sin() * phi.cos();
    let a_z = ComplexMatrix::column((0..nz).map(|i| C64::from_polar(1.0, -kz * i as f64)).collect());
    let a_x = ComplexMatrix::column((0..nx).map(|i| C64::from_polar(1.0, -kx * i as f64)).collect());
    a_z.kron(&a_x)
}

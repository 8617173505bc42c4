use nalgebra::{Matrix3, Vector3};

/// Nearest rotation matrix (polar factor).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        out = u * flip * v_t;
    }
    out
}

/// One RK4 step of `R' = R [omega]x` at constant body rate, re-orthonormalized.
pub fn step_attitude(r: &Matrix3<f64>, omega: &Vector3<f64>, dt: f64) -> Matrix3<f64> {
    let w = omega.cross_matrix();
    let k1 = r * w;
    let k2 = (r + 0.5 * dt * k1) * w;
    let k3 = (r + 0.5 * dt * k2) * w;
    let k4 = (r + dt * k3) * w;
    orthonormalize(&(r + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))
}

/// Z-Y-X Tait-Bryan pitch. With z up and the body x axis forward, positive
/// pitch is nose down.
pub fn pitch_angle(r: &Matrix3<f64>) -> f64 {
    (-r[(2, 0)]).atan2((r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt())
}

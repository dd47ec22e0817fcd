//! Henyey–Greenstein sampling and direction update.

/// Samples the cosine of the Henyey–Greenstein scattering angle for
/// anisotropy `g` from a uniform `u` in `[0, 1)`.
#[inline]
pub fn sample_hg(g: f64, u: f64) -> f64 {
    let cos_theta = if g == 0.0 {
        2.0 * u - 1.0
    } else {
        let g2 = g * g;
        let frac = (1.0 - g2) / (1.0 - g + 2.0 * g * u);
        (1.0 + g2 - frac * frac) / (2.0 * g)
    };
    cos_theta.clamp(-1.0, 1.0)
}

/// Rotates unit vector `dir` by polar angle `acos(cos_theta)` and azimuth `phi`
/// about itself.
#[inline]
pub fn spin(dir: [f64; 3], cos_theta: f64, phi: f64) -> [f64; 3] {
    let [ux, uy, uz] = dir;
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let (sin_phi, cos_phi) = phi.sin_cos();
    let temp = (ux * ux + uy * uy).sqrt();
    let out = if temp < 1e-150 {
        [
            sin_theta * cos_phi,
            sin_theta * sin_phi,
            cos_theta * uz.signum(),
        ]
    } else {
        [
            sin_theta * (ux * uz * cos_phi - uy * sin_phi) / temp + ux * cos_theta,
            sin_theta * (uy * uz * cos_phi + ux * sin_phi) / temp + uy * cos_theta,
            -sin_theta * cos_phi * temp + uz * cos_theta,
        ]
    };
    let inv = 1.0 / (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    [out[0] * inv, out[1] * inv, out[2] * inv]
}

//! Von Mises–Fisher distribution on the unit sphere `S²`.

use std::f64::consts::PI;

use rand::Rng;

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// VMF law with mean direction `mean` and concentration `concentration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMisesFisher {
    mean: [f64; 3],
    concentration: f64,
}

impl VonMisesFisher {
    /// `mean` is normalised; `concentration` must be non-negative.
    pub fn new(mean: [f64; 3], concentration: f64) -> Option<Self> {
        let n = dot(&mean, &mean).sqrt();
        if !(n.is_finite() && n > 0.0) || !(concentration.is_finite() && concentration >= 0.0) {
            return None;
        }
        Some(Self {
            mean: normalize(mean),
            concentration,
        })
    }

    pub fn mean(&self) -> [f64; 3] {
        self.mean
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    /// Density with respect to solid angle. Evaluated as
    /// `α / (2π (1 − e^{−2α})) · exp(α (μᵀd − 1))`, which stays finite for
    /// large `α`.
    pub fn density(&self, direction: &[f64; 3]) -> f64 {
        let a = self.concentration;
        if a < 1e-12 {
            return 1.0 / (4.0 * PI);
        }
        let c = a / (2.0 * PI * (-(-2.0 * a).exp_m1()));
        c * (a * (dot(&self.mean, direction) - 1.0)).exp()
    }

    /// Draw one unit vector (Wood's method, closed form on `S²`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let a = self.concentration;
        let u: f64 = rng.random();
        let w = if a < 1e-12 {
            2.0 * u - 1.0
        } else {
            // 1 + ln(u + (1-u) e^{-2a}) / a, clamped against rounding.
            (1.0 + (u + (1.0 - u) * (-2.0 * a).exp()).ln() / a).clamp(-1.0, 1.0)
        };
        let phi = 2.0 * PI * rng.random::<f64>();
        let s = (1.0 - w * w).max(0.0).sqrt();
        let (e1, e2) = orthonormal_frame(&self.mean);
        let (c, sn) = (s * phi.cos(), s * phi.sin());
        normalize([
            c * e1[0] + sn * e2[0] + w * self.mean[0],
            c * e1[1] + sn * e2[1] + w * self.mean[1],
            c * e1[2] + sn * e2[2] + w * self.mean[2],
        ])
    }
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
fn orthonormal_frame(n: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot(&helper, n);
    let e1 = normalize([helper[0] - d * n[0], helper[1] - d * n[1], helper[2] - d * n[2]]);
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    (e1, e2)
}

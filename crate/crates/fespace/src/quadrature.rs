//! Quadrature rules on the reference triangle and reference interval.

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A rule on the reference triangle, expressed in barycentric coordinates
/// with weights summing to one (multiply by `|K|`).
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor Gauss rule with `n × n` points, exact for
    /// total degree `2n − 2`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let (x, wx) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let xi = x[i];
                let eta = (1.0 - x[i]) * x[j];
                points.push([1.0 - xi - eta, xi, eta]);
                // reference area 1/2 normalised to 1
                weights.push(2.0 * wx[i] * wx[j] * (1.0 - x[i]));
            }
        }
        TriangleRule { points, weights }
    }

    /// Rule used for all volume integrals: 36 points, exact to degree 10.
    /// The highest integrand degree of the scheme (convection and the kinetic
    /// stabilisation with cubic velocities) is 9.
    pub fn standard() -> Self {
        Self::collapsed_gauss(6)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Exact degree of the rule.
    pub fn degree(&self) -> usize {
        let n = (self.len() as f64).sqrt().round() as usize;
        2 * n - 2
    }
}

//! Triangle quadrature in barycentric coordinates.

/// Points in barycentric coordinates with weights summing to one; scale by
/// the element area at use.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

// Six-point degree-4 rule (Dunavant), both orbits of type (a, a, 1 - 2a).
const D4_A: f64 = 0.445_948_490_915_964_886_318_329_253_883;
const D4_WA: f64 = 0.223_381_589_678_011_465_944_827_850_8;
const D4_B: f64 = 0.091_576_213_509_770_743_459_571_463_402_2;
const D4_WB: f64 = 0.109_951_743_655_321_867_388_505_482_5;

impl QuadratureRule {
    /// Centroid rule, exact for degree 1.
    pub fn centroid() -> Self {
        QuadratureRule {
            degree: 1,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Edge-midpoint rule, exact for degree 2.
    pub fn edge_midpoints() -> Self {
        QuadratureRule {
            degree: 2,
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Six-point rule with positive weights, exact for degree 4.
    pub fn degree4() -> Self {
        let orbit = |a: f64| {
            let b = 1.0 - 2.0 * a;
            [[a, a, b], [a, b, a], [b, a, a]]
        };
        let mut points = orbit(D4_A).to_vec();
        points.extend_from_slice(&orbit(D4_B));
        QuadratureRule {
            degree: 4,
            points,
            weights: vec![D4_WA, D4_WA, D4_WA, D4_WB, D4_WB, D4_WB],
        }
    }

    /// Collapsed (Duffy) tensor Gauss-Legendre rule with `n` points per
    /// direction, exact for degree `2n - 2`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let n = n.max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            for (xj, wj) in x.iter().zip(&w) {
                let v = 0.5 * (xj + 1.0);
                // (u, v) in the unit square -> (s, t) = (u, v (1 - u)) in the reference triangle
                let s = u;
                let t = v * (1.0 - u);
                points.push([1.0 - s - t, s, t]);
                // Reference area 1/2 normalised to one; Jacobian (1 - u); GL weights on [-1, 1]^2 / 4.
                weights.push(2.0 * 0.25 * wi * wj * (1.0 - u));
            }
        }
        QuadratureRule {
            degree: 2 * n - 2,
            points,
            weights,
        }
    }

    /// Cheapest rule in this module that is exact for `degree`.
    pub fn exact_for(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::centroid(),
            2 => Self::edge_midpoints(),
            3 | 4 => Self::degree4(),
            d => Self::collapsed_gauss(d.div_ceil(2) + 1),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(barycentric point, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

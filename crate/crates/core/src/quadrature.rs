//! Gauss rules on the interval and on the reference triangle.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules, exact for every polynomial of the requested total degree.

use std::sync::OnceLock;

/// A rule on the reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.
/// Weights sum to the reference area `1/2`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// A rule on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

impl LineRule {
    /// Exact for polynomials of degree `2n - 1` with `n` points.
    pub fn with_degree(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre(n);
        Self {
            points: x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
            weights: w.iter().map(|&t| 0.5 * t).collect(),
        }
    }
}

impl QuadratureRule {
    pub fn with_degree(degree: usize) -> Self {
        // One extra degree for the collapse Jacobian (1 - u).
        let n = (degree + 1) / 2 + 1;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            let u = 0.5 * (x[i] + 1.0);
            for j in 0..n {
                let v = 0.5 * (x[j] + 1.0);
                let px = u;
                let py = v * (1.0 - u);
                points.push([1.0 - px - py, px, py]);
                weights.push(0.25 * w[i] * w[j] * (1.0 - u));
            }
        }
        Self { degree, points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Subdivides the reference triangle `levels` times into four similar
    /// pieces and places a copy of `self` on each. Used for diagnostics of
    /// integrands with interior singularities.
    pub fn composite(&self, levels: u32) -> QuadratureRule {
        let mut tris: Vec<[[f64; 3]; 3]> = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
        let mid = |a: [f64; 3], b: [f64; 3]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])];
        for _ in 0..levels {
            let mut next = Vec::with_capacity(tris.len() * 4);
            for [a, b, c] in tris {
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [bc, ca, ab]]);
            }
            tris = next;
        }
        let scale = 0.25f64.powi(levels as i32);
        let mut points = Vec::with_capacity(tris.len() * self.len());
        let mut weights = Vec::with_capacity(tris.len() * self.len());
        for [a, b, c] in &tris {
            for (p, &w) in self.points.iter().zip(&self.weights) {
                points.push(std::array::from_fn(|k| p[0] * a[k] + p[1] * b[k] + p[2] * c[k]));
                weights.push(w * scale);
            }
        }
        QuadratureRule { degree: self.degree, points, weights }
    }
}

const CACHED: usize = 24;

/// Shared rule of at least the given degree.
pub fn triangle_rule(degree: usize) -> &'static QuadratureRule {
    static RULES: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..CACHED).map(QuadratureRule::with_degree).collect());
    &rules[degree.min(CACHED - 1)]
}

pub fn line_rule(degree: usize) -> &'static LineRule {
    static RULES: OnceLock<Vec<LineRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..CACHED).map(LineRule::with_degree).collect());
    &rules[degree.min(CACHED - 1)]
}

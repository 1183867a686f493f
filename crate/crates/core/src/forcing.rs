//! Body forces, including a manufactured Navier-Stokes solution on the unit
//! square.

use crate::mesh::Point;

/// Known velocity/pressure pair behind [`Forcing::Manufactured`].
///
/// With `a(x) = x^2 (1-x)^2` and `b(y) = y^2 (1-y)^2` the stream function
/// `a(x) b(y)` gives the divergence-free field `u = (a b', -a' b)`, which
/// vanishes on the boundary of the unit square. The pressure is `x - 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub nu: f64,
    pub convection: bool,
}

fn a(x: f64) -> [f64; 4] {
    // a, a', a'', a'''
    [
        x * x * (1.0 - x) * (1.0 - x),
        2.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
        2.0 - 12.0 * x + 12.0 * x * x,
        -12.0 + 24.0 * x,
    ]
}

impl Manufactured {
    pub fn velocity(&self, p: Point) -> [f64; 2] {
        let (ax, by) = (a(p[0]), a(p[1]));
        [ax[0] * by[1], -ax[1] * by[0]]
    }

    /// `grad[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, p: Point) -> [[f64; 2]; 2] {
        let (ax, by) = (a(p[0]), a(p[1]));
        [[ax[1] * by[1], ax[0] * by[2]], [-ax[2] * by[0], -ax[1] * by[1]]]
    }

    pub fn pressure(&self, p: Point) -> f64 {
        p[0] - 0.5
    }

    fn laplacian(&self, p: Point) -> [f64; 2] {
        let (ax, by) = (a(p[0]), a(p[1]));
        [ax[2] * by[1] + ax[0] * by[3], -(ax[3] * by[0] + ax[1] * by[2])]
    }

    /// `f = (u . grad) u + grad p - nu Lap u` (convection optional).
    pub fn force(&self, p: Point) -> [f64; 2] {
        let u = self.velocity(p);
        let g = self.velocity_gradient(p);
        let lap = self.laplacian(p);
        let mut f = [1.0 - self.nu * lap[0], -self.nu * lap[1]];
        if self.convection {
            f[0] += u[0] * g[0][0] + u[1] * g[0][1];
            f[1] += u[0] * g[1][0] + u[1] * g[1][1];
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    Zero,
    Constant([f64; 2]),
    /// `amplitude * (-(y - c_y), x - c_x)`: a swirl about `center`.
    Rotational { amplitude: f64, center: Point },
    Manufactured(Manufactured),
}

impl Forcing {
    pub fn evaluate(&self, p: Point) -> [f64; 2] {
        match *self {
            Forcing::Zero => [0.0, 0.0],
            Forcing::Constant(f) => f,
            Forcing::Rotational { amplitude, center } => {
                [-amplitude * (p[1] - center[1]), amplitude * (p[0] - center[0])]
            }
            Forcing::Manufactured(m) => m.force(p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Forcing::Zero => "zero",
            Forcing::Constant(_) => "constant",
            Forcing::Rotational { .. } => "rotational",
            Forcing::Manufactured(_) => "manufactured",
        }
    }
}

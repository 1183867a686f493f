//! Symmetric 2x2 tensors.

use std::ops::{Add, Mul, Neg, Sub};

/// Symmetric tensor `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym {
    pub const ZERO: Sym = Sym { xx: 0.0, xy: 0.0, yy: 0.0 };
    pub const IDENTITY: Sym = Sym { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    /// Full contraction `A : B`.
    pub fn ddot(self, o: Sym) -> f64 {
        self.xx * o.xx + 2.0 * self.xy * o.xy + self.yy * o.yy
    }

    /// Frobenius norm.
    pub fn norm(self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn trace(self) -> f64 {
        self.xx + self.yy
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn is_finite(self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

impl Add for Sym {
    type Output = Sym;
    fn add(self, o: Sym) -> Sym {
        Sym::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym {
    type Output = Sym;
    fn sub(self, o: Sym) -> Sym {
        Sym::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Neg for Sym {
    type Output = Sym;
    fn neg(self) -> Sym {
        Sym::new(-self.xx, -self.xy, -self.yy)
    }
}

impl Mul<Sym> for f64 {
    type Output = Sym;
    fn mul(self, s: Sym) -> Sym {
        Sym::new(self * s.xx, self * s.xy, self * s.yy)
    }
}

//! Maximal monotone r-graphs, their single-valued regularizations, and the
//! pointwise distance of a (shear rate, stress) pair to a graph.
//!
//! All graphs handled here are isotropic: `(D, S)` lies in the graph iff
//! `(|D|, |S|)` lies in a monotone scalar graph in the quarter plane, and
//! the selection has the form `S*(|D|) D / |D|`.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre, triangle_rule};
use crate::tensor::Sym;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("r = {r} is outside the admissible range r > 2d/(d+1) = {bound}")]
    ExponentOutOfRange { r: f64, bound: f64 },
    #[error("t = {t} must lie in ({lo}, {hi})")]
    BadT { t: f64, lo: f64, hi: f64 },
    #[error("smoothing parameter must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("invalid graph parameters: {0}")]
    InvalidGraph(String),
    #[error("regularization {reg:?} does not apply to a {graph} graph")]
    UnsupportedRegularization { reg: RegularizationKind, graph: &'static str },
}

/// Lebesgue exponents attached to a growth exponent `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub d: usize,
    pub r: f64,
    pub r_conj: f64,
    pub r_tilde: f64,
    pub t: f64,
    pub t_conj: f64,
    pub t_tilde: f64,
    pub t_tilde_conj: f64,
}

fn conj(s: f64) -> f64 {
    s / (s - 1.0)
}

/// Builds the exponent set. In the low regime `r <= 3d/(d+2)` the default
/// `t` is the midpoint of `(2d/(d+1), r)`; otherwise `t = r` is forced.
pub fn make_exponents(r: f64, d: usize, t: Option<f64>) -> Result<Exponents, ConstitutiveError> {
    let df = d as f64;
    let lower = 2.0 * df / (df + 1.0);
    if !(r > lower) || !r.is_finite() {
        return Err(ConstitutiveError::ExponentOutOfRange { r, bound: lower });
    }
    let r_conj = conj(r);
    let low_regime = r <= 3.0 * df / (df + 2.0);
    let (r_tilde, t, t_tilde) = if low_regime {
        let r_tilde = 0.5 * df * r / (df - r);
        let t = t.unwrap_or(0.5 * (lower + r));
        if !(t > lower && t < r) {
            return Err(ConstitutiveError::BadT { t, lo: lower, hi: r });
        }
        (r_tilde, t, 0.5 * df * t / (df - t))
    } else {
        if let Some(tv) = t {
            if tv != r {
                return Err(ConstitutiveError::BadT { t: tv, lo: r, hi: r });
            }
        }
        (r_conj, r, r_conj)
    };
    Ok(Exponents {
        d,
        r,
        r_conj,
        r_tilde,
        t,
        t_conj: conj(t),
        t_tilde,
        t_tilde_conj: conj(t_tilde),
    })
}

/// `c (kappa^2 + D^2)^{(q-2)/2} D` for `D >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCurve {
    pub c: f64,
    pub kappa: f64,
    pub q: f64,
}

impl FlowCurve {
    pub fn value(&self, d: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        self.c * (self.kappa * self.kappa + d * d).powf(0.5 * (self.q - 2.0)) * d
    }

    pub fn derivative(&self, d: f64) -> f64 {
        let s = self.kappa * self.kappa + d * d;
        if s == 0.0 {
            return if self.q < 2.0 {
                f64::INFINITY
            } else if self.q == 2.0 {
                self.c
            } else {
                0.0
            };
        }
        self.c * s.powf(0.5 * (self.q - 2.0)) + self.c * (self.q - 2.0) * s.powf(0.5 * (self.q - 4.0)) * d * d
    }

    /// `value(d) / d`, finite for `d > 0`.
    pub fn secant(&self, d: f64) -> f64 {
        let s = self.kappa * self.kappa + d * d;
        self.c * s.powf(0.5 * (self.q - 2.0))
    }

    /// The `D >= 0` with `value(D) = s`, by bisection.
    pub fn inverse(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.value(hi) < s {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn validate(&self, what: &str) -> Result<(), ConstitutiveError> {
        if !(self.c > 0.0) || !(self.kappa >= 0.0) || !(self.q > 1.0) {
            return Err(ConstitutiveError::InvalidGraph(format!(
                "{what}: need c > 0, kappa >= 0, q > 1 (got c={}, kappa={}, q={})",
                self.c, self.kappa, self.q
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKind {
    /// `S = 2 nu D`.
    Newtonian { nu: f64 },
    PowerLaw { flow: FlowCurve },
    /// Rigid below the yield stress, `S = sigma D/|D| + 2 nu D` above.
    Bingham { nu: f64, yield_stress: f64 },
    HerschelBulkley { yield_stress: f64, flow: FlowCurve },
    /// Continuous law with a stress plateau: `lower` until it reaches
    /// `level`, constant `level`, then `upper` once it exceeds `level`.
    Plateau { lower: FlowCurve, upper: FlowCurve, level: f64 },
    /// Plateau at `level` starting where `lower` reaches it, ended by a jump
    /// at shear rate `jump_at` up to `upper(jump_at) > level`.
    PlateauWithJump { lower: FlowCurve, upper: FlowCurve, level: f64, jump_at: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphModel {
    pub kind: GraphKind,
}

/// Pieces of the scalar graph in the `(|D|, |S|)` quarter plane.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Curve {
    Linear { slope: f64, offset: f64 },
    Flow { flow: FlowCurve, offset: f64 },
    Constant(f64),
}

impl Curve {
    fn eval(&self, d: f64) -> f64 {
        match *self {
            Curve::Linear { slope, offset } => offset + slope * d,
            Curve::Flow { flow, offset } => offset + flow.value(d),
            Curve::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Curve { from: f64, to: f64, curve: Curve },
    /// `{at} x [lo, hi]`; at `at = 0` this is the rigid (ball) part.
    Vertical { at: f64, lo: f64, hi: f64 },
}

impl GraphModel {
    pub fn new(kind: GraphKind) -> Result<Self, ConstitutiveError> {
        let g = Self { kind };
        g.validate()?;
        Ok(g)
    }

    pub fn newtonian(nu: f64) -> Self {
        Self { kind: GraphKind::Newtonian { nu } }
    }

    pub fn bingham(nu: f64, yield_stress: f64) -> Self {
        Self { kind: GraphKind::Bingham { nu, yield_stress } }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GraphKind::Newtonian { .. } => "newtonian",
            GraphKind::PowerLaw { .. } => "power_law",
            GraphKind::Bingham { .. } => "bingham",
            GraphKind::HerschelBulkley { .. } => "herschel_bulkley",
            GraphKind::Plateau { .. } => "plateau",
            GraphKind::PlateauWithJump { .. } => "plateau_jump",
        }
    }

    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        let bad = |m: String| Err(ConstitutiveError::InvalidGraph(m));
        match self.kind {
            GraphKind::Newtonian { nu } if !(nu > 0.0) => bad(format!("viscosity must be positive, got {nu}")),
            GraphKind::Bingham { nu, yield_stress } if !(nu > 0.0) || !(yield_stress >= 0.0) => {
                bad(format!("need nu > 0 and sigma >= 0 (got nu={nu}, sigma={yield_stress})"))
            }
            GraphKind::PowerLaw { flow } => flow.validate("power law"),
            GraphKind::HerschelBulkley { yield_stress, flow } => {
                if !(yield_stress >= 0.0) {
                    return bad(format!("yield stress must be >= 0, got {yield_stress}"));
                }
                flow.validate("Herschel-Bulkley")
            }
            GraphKind::Plateau { lower, upper, level } => {
                lower.validate("plateau lower branch")?;
                upper.validate("plateau upper branch")?;
                if !(level > 0.0) {
                    return bad(format!("plateau level must be positive, got {level}"));
                }
                let (d1, d2) = (lower.inverse(level), upper.inverse(level));
                if !(d2 > d1) {
                    return bad(format!("upper branch reaches the plateau at {d2} before the lower one leaves it at {d1}"));
                }
                Ok(())
            }
            GraphKind::PlateauWithJump { lower, upper, level, jump_at } => {
                lower.validate("plateau lower branch")?;
                upper.validate("plateau upper branch")?;
                if !(level > 0.0) {
                    return bad(format!("plateau level must be positive, got {level}"));
                }
                let d1 = lower.inverse(level);
                if !(jump_at > d1) {
                    return bad(format!("jump at {jump_at} must follow the start of the plateau at {d1}"));
                }
                if !(upper.value(jump_at) > level) {
                    return bad("upper branch must exceed the plateau level at the jump".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// The exponent `r` of the growth/coercivity bounds.
    pub fn growth_exponent(&self) -> f64 {
        match self.kind {
            GraphKind::Newtonian { .. } | GraphKind::Bingham { .. } => 2.0,
            GraphKind::PowerLaw { flow } | GraphKind::HerschelBulkley { flow, .. } => flow.q,
            GraphKind::Plateau { upper, .. } | GraphKind::PlateauWithJump { upper, .. } => upper.q,
        }
    }

    /// Leading coefficient `a` with `S*(D) ~ a D^{r-1}` as `D -> infinity`.
    fn asymptotic_coefficient(&self) -> f64 {
        match self.kind {
            GraphKind::Newtonian { nu } | GraphKind::Bingham { nu, .. } => 2.0 * nu,
            GraphKind::PowerLaw { flow } | GraphKind::HerschelBulkley { flow, .. } => flow.c,
            GraphKind::Plateau { upper, .. } | GraphKind::PlateauWithJump { upper, .. } => upper.c,
        }
    }

    fn plateau_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            GraphKind::Plateau { lower, upper, level } => Some((lower.inverse(level), upper.inverse(level))),
            GraphKind::PlateauWithJump { lower, level, jump_at, .. } => Some((lower.inverse(level), jump_at)),
            _ => None,
        }
    }

    /// Scalar selection `S*(D)` for `D >= 0`, with `S*(0) = 0`.
    pub fn selection_scalar(&self, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        match self.kind {
            GraphKind::Newtonian { nu } => 2.0 * nu * d,
            GraphKind::PowerLaw { flow } => flow.value(d),
            GraphKind::Bingham { nu, yield_stress } => yield_stress + 2.0 * nu * d,
            GraphKind::HerschelBulkley { yield_stress, flow } => yield_stress + flow.value(d),
            GraphKind::Plateau { lower, upper, level } => {
                let (d1, d2) = self.plateau_bounds().expect("plateau");
                if d < d1 {
                    lower.value(d)
                } else if d < d2 {
                    level
                } else {
                    upper.value(d)
                }
            }
            GraphKind::PlateauWithJump { lower, upper, level, jump_at } => {
                let d1 = lower.inverse(level);
                if d < d1 {
                    lower.value(d)
                } else if d < jump_at {
                    level
                } else {
                    upper.value(d)
                }
            }
        }
    }

    /// Odd extension of the scalar selection to the real line.
    pub fn selection_odd(&self, d: f64) -> f64 {
        if d < 0.0 {
            -self.selection_scalar(-d)
        } else {
            self.selection_scalar(d)
        }
    }

    /// Points where the odd scalar selection may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        if let Some((d1, d2)) = self.plateau_bounds() {
            b.extend([d1, d2, -d1, -d2]);
        }
        b
    }

    /// A selection `S*(|D|) D / |D|` of the graph.
    pub fn selection(&self, d: Sym) -> Sym {
        let n = d.norm();
        if n == 0.0 {
            return Sym::ZERO;
        }
        (self.selection_scalar(n) / n) * d
    }

    fn pieces(&self) -> Vec<Piece> {
        match self.kind {
            GraphKind::Newtonian { nu } => {
                vec![Piece::Curve { from: 0.0, to: f64::INFINITY, curve: Curve::Linear { slope: 2.0 * nu, offset: 0.0 } }]
            }
            GraphKind::PowerLaw { flow } => {
                vec![Piece::Curve { from: 0.0, to: f64::INFINITY, curve: Curve::Flow { flow, offset: 0.0 } }]
            }
            GraphKind::Bingham { nu, yield_stress } => vec![
                Piece::Vertical { at: 0.0, lo: 0.0, hi: yield_stress },
                Piece::Curve {
                    from: 0.0,
                    to: f64::INFINITY,
                    curve: Curve::Linear { slope: 2.0 * nu, offset: yield_stress },
                },
            ],
            GraphKind::HerschelBulkley { yield_stress, flow } => vec![
                Piece::Vertical { at: 0.0, lo: 0.0, hi: yield_stress },
                Piece::Curve { from: 0.0, to: f64::INFINITY, curve: Curve::Flow { flow, offset: yield_stress } },
            ],
            GraphKind::Plateau { lower, upper, level } => {
                let (d1, d2) = self.plateau_bounds().expect("plateau");
                vec![
                    Piece::Curve { from: 0.0, to: d1, curve: Curve::Flow { flow: lower, offset: 0.0 } },
                    Piece::Curve { from: d1, to: d2, curve: Curve::Constant(level) },
                    Piece::Curve { from: d2, to: f64::INFINITY, curve: Curve::Flow { flow: upper, offset: 0.0 } },
                ]
            }
            GraphKind::PlateauWithJump { lower, upper, level, jump_at } => {
                let d1 = lower.inverse(level);
                vec![
                    Piece::Curve { from: 0.0, to: d1, curve: Curve::Flow { flow: lower, offset: 0.0 } },
                    Piece::Curve { from: d1, to: jump_at, curve: Curve::Constant(level) },
                    Piece::Vertical { at: jump_at, lo: level, hi: upper.value(jump_at) },
                    Piece::Curve {
                        from: jump_at,
                        to: f64::INFINITY,
                        curve: Curve::Flow { flow: upper, offset: 0.0 },
                    },
                ]
            }
        }
    }

    /// Distance of the scalar pair `(x, y) = (|D|, |S|)` to the scalar
    /// graph: `min |x - d|^r + |y - s|^{r'}` over graph points `(d, s)`.
    pub fn scalar_distance(&self, exps: &Exponents, x: f64, y: f64) -> f64 {
        self.offset_distance(exps, x, y, 0.0, 0.0)
    }

    /// Generalized scalar distance where the cost of a graph point `(d, s)` is
    /// `((x-d)^2 + a^2)^{r/2} + ((y-s)^2 + b^2)^{r'/2}`. The offsets carry the
    /// components orthogonal to a fixed direction in tensor space.
    fn offset_distance(&self, exps: &Exponents, x: f64, y: f64, a: f64, b: f64) -> f64 {
        let (r, rc) = (exps.r, exps.r_conj);
        let cost = |d: f64, s: f64| ((x - d).powi(2) + a * a).powf(0.5 * r) + ((y - s).powi(2) + b * b).powf(0.5 * rc);
        let mut best = f64::INFINITY;
        for piece in self.pieces() {
            let v = match piece {
                Piece::Vertical { at, lo, hi } => cost(at, y.clamp(lo, hi)),
                Piece::Curve { from, to, curve: Curve::Constant(c) } => cost(x.clamp(from, to), c),
                Piece::Curve { from, to, curve } => minimize_on_curve(&cost, curve, from, to, x, y),
            };
            best = best.min(v);
        }
        best
    }

    /// Pointwise graph distance of a tensor pair `(D, S)`.
    ///
    /// For coaligned pairs this is the scalar distance of `(|D|, |S|)`. In
    /// general the direction of the graph point is searched in the plane
    /// spanned by `D` and `S`.
    pub fn distance(&self, exps: &Exponents, d: Sym, s: Sym) -> f64 {
        let (nd, ns) = (d.norm(), s.norm());
        if nd == 0.0 || ns == 0.0 {
            return self.scalar_distance(exps, nd, ns);
        }
        let cosang = d.ddot(s) / (nd * ns);
        if cosang >= 1.0 - 1e-14 {
            return self.scalar_distance(exps, nd, ns);
        }
        // Orthonormal basis of span{D, S} for the contraction inner product.
        let b1 = (1.0 / nd) * d;
        let perp = s - s.ddot(b1) * b1;
        let b2 = (1.0 / perp.norm()) * perp;
        let dcoord = [nd, 0.0];
        let scoord = [s.ddot(b1), s.ddot(b2)];
        // The optimal direction lies on the arc from D to S. The rigid part
        // is attained exactly at the S end of the scan.
        let at_angle = |theta: f64| {
            let e = [theta.cos(), theta.sin()];
            let a_par = dcoord[0] * e[0] + dcoord[1] * e[1];
            let s_par = scoord[0] * e[0] + scoord[1] * e[1];
            let a_perp = (nd * nd - a_par * a_par).max(0.0).sqrt();
            let s_perp = (ns * ns - s_par * s_par).max(0.0).sqrt();
            self.offset_distance(exps, a_par, s_par, a_perp, s_perp)
        };
        let theta_s = scoord[1].atan2(scoord[0]);
        let n = 72;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..n {
            let th = theta_s * (k as f64) / (n - 1) as f64;
            let v = at_angle(th);
            if v < best.0 {
                best = (v, th);
            }
        }
        let step = theta_s.abs() / (n - 1) as f64;
        let (lo, hi) = (best.1 - step, best.1 + step);
        let v = golden(&at_angle, lo.min(hi), lo.max(hi), 60);
        best.0.min(v.1)
    }
}

/// Golden-section search returning `(argmin, min)`.
fn golden<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimum of `cost(d, f(d))` over `d in [from, to]` for increasing `f`.
/// The minimizer lies between `x` and `f^{-1}(y)`; that bracket is scanned
/// and then refined by golden sections.
fn minimize_on_curve<C: Fn(f64, f64) -> f64>(cost: &C, curve: Curve, from: f64, to: f64, x: f64, y: f64) -> f64 {
    let f = |d: f64| curve.eval(d);
    let root = if f(from) >= y {
        from
    } else if to.is_finite() && f(to) <= y {
        to
    } else {
        let mut hi = if to.is_finite() { to } else { from.max(1.0) };
        while !to.is_finite() && f(hi) < y {
            hi = 2.0 * hi + 1.0;
        }
        let mut lo = from;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi.abs().max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let xc = x.clamp(from, to);
    let (lo, hi) = (xc.min(root), xc.max(root));
    let phi = |d: f64| cost(d, f(d));
    if hi - lo <= 0.0 {
        return phi(lo);
    }
    let n = 48;
    let mut best = (phi(lo), 0usize);
    for k in 1..=n {
        let d = lo + (hi - lo) * k as f64 / n as f64;
        let v = phi(d);
        if v < best.0 {
            best = (v, k);
        }
    }
    let h = (hi - lo) / n as f64;
    let a = (lo + h * best.1 as f64 - h).max(lo);
    let b = (lo + h * best.1 as f64 + h).min(hi);
    let (_, v) = golden(&phi, a, b, 200);
    best.0.min(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizationKind {
    /// `S(D) = (sigma / sqrt(D^2 + tau^2)) D + flow(D)`.
    SimpleTau,
    /// Convolution of the odd selection with a hat kernel of half-width tau.
    Mollified,
    /// Linear bridges across plateaus and jumps between `sigma -/+ tau`.
    PlateauInterp,
}

impl RegularizationKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simple_tau" => Some(Self::SimpleTau),
            "mollified" => Some(Self::Mollified),
            "plateau_interp" => Some(Self::PlateauInterp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SimpleTau => "simple_tau",
            Self::Mollified => "mollified",
            Self::PlateauInterp => "plateau_interp",
        }
    }
}

/// The explicit, strictly monotone law `S^n` with smoothing `tau = tau0 / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedLaw {
    pub graph: GraphModel,
    pub kind: RegularizationKind,
    pub n: u32,
    pub tau0: f64,
    pub tau: f64,
    bridge: Option<Bridge>,
}

/// Piecewise-linear bridge data for [`RegularizationKind::PlateauInterp`].
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bridge {
    /// Knots `(D, S)`: enter from the lower branch, (optional middle), exit
    /// onto the upper branch.
    knots: [(f64, f64); 3],
    len: usize,
}

/// Scalar law values at `D >= 0`: `g(D)`, `g'(D)`, and the secant `g(D)/D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLaw {
    pub value: f64,
    pub derivative: f64,
    pub secant: f64,
}

const MOLLIFIER_POINTS: usize = 24;

impl RegularizedLaw {
    pub fn new(graph: GraphModel, kind: RegularizationKind, n: u32, tau0: f64) -> Result<Self, ConstitutiveError> {
        graph.validate()?;
        if !(tau0 > 0.0) {
            return Err(ConstitutiveError::NonPositiveTau(tau0));
        }
        let n = n.max(1);
        let tau = tau0 / n as f64;
        let unsupported = Err(ConstitutiveError::UnsupportedRegularization { reg: kind, graph: graph.name() });
        let bridge = match (kind, graph.kind) {
            (RegularizationKind::SimpleTau, GraphKind::Plateau { .. } | GraphKind::PlateauWithJump { .. }) => {
                return unsupported
            }
            (RegularizationKind::PlateauInterp, GraphKind::Bingham { .. } | GraphKind::HerschelBulkley { .. }) => {
                return unsupported
            }
            (RegularizationKind::PlateauInterp, GraphKind::Plateau { lower, upper, level }) => {
                let (da, sa) = bridge_entry(&lower, level, tau);
                let sb = level + tau;
                Some(Bridge { knots: [(da, sa), (upper.inverse(sb), sb), (0.0, 0.0)], len: 2 })
            }
            (RegularizationKind::PlateauInterp, GraphKind::PlateauWithJump { lower, upper, level, jump_at }) => {
                let (da, sa) = bridge_entry(&lower, level, tau);
                let exit = jump_at + tau;
                let s_exit = upper.value(exit);
                let s_mid = (level + tau).min(0.5 * (level + s_exit));
                Some(Bridge { knots: [(da, sa), (jump_at, s_mid), (exit, s_exit)], len: 3 })
            }
            _ => None,
        };
        Ok(Self { graph, kind, n, tau0, tau, bridge })
    }

    /// The same law at graph index `n`.
    pub fn with_index(&self, n: u32) -> Self {
        Self::new(self.graph, self.kind, n, self.tau0).expect("parameters already validated")
    }

    /// The same law with an explicit smoothing parameter.
    pub fn with_tau(&self, tau: f64) -> Result<Self, ConstitutiveError> {
        let mut law = Self::new(self.graph, self.kind, 1, tau)?;
        law.n = self.n;
        law.tau0 = self.tau0;
        Ok(law)
    }

    /// Flow curve with a degenerate power-law coefficient replaced by tau.
    fn smoothed_flow(&self, flow: FlowCurve) -> FlowCurve {
        if flow.kappa == 0.0 && flow.q != 2.0 {
            FlowCurve { kappa: self.tau, ..flow }
        } else {
            flow
        }
    }

    pub fn scalar(&self, d: f64) -> ScalarLaw {
        let d = d.max(0.0);
        match self.kind {
            RegularizationKind::SimpleTau => self.simple_tau(d),
            RegularizationKind::Mollified => self.mollified(d),
            RegularizationKind::PlateauInterp => self.plateau_interp(d),
        }
    }

    fn simple_tau(&self, d: f64) -> ScalarLaw {
        let tau = self.tau;
        // sigma d / d_tau and its derivative sigma tau^2 / d_tau^3.
        let yield_part = |sigma: f64| {
            let dt = (d * d + tau * tau).sqrt();
            (sigma * d / dt, sigma * tau * tau / (dt * dt * dt), sigma / dt)
        };
        match self.graph.kind {
            GraphKind::Newtonian { nu } => ScalarLaw { value: 2.0 * nu * d, derivative: 2.0 * nu, secant: 2.0 * nu },
            GraphKind::Bingham { nu, yield_stress } => {
                let (v, dv, sec) = yield_part(yield_stress);
                ScalarLaw { value: v + 2.0 * nu * d, derivative: dv + 2.0 * nu, secant: sec + 2.0 * nu }
            }
            GraphKind::PowerLaw { flow } => {
                let f = self.smoothed_flow(flow);
                ScalarLaw { value: f.value(d), derivative: f.derivative(d), secant: f.secant(d) }
            }
            GraphKind::HerschelBulkley { yield_stress, flow } => {
                let f = self.smoothed_flow(flow);
                let (v, dv, sec) = yield_part(yield_stress);
                ScalarLaw { value: v + f.value(d), derivative: dv + f.derivative(d), secant: sec + f.secant(d) }
            }
            GraphKind::Plateau { .. } | GraphKind::PlateauWithJump { .. } => unreachable!("rejected in new"),
        }
    }

    /// `g(D) = int S*(s) eta(s - D) ds` with `eta(u) = (1 - |u|/tau)_+ / tau`
    /// and `g'(D) = tau^{-2} int S*(s) sign(s - D) ds` over `|s - D| < tau`.
    fn mollified(&self, d: f64) -> ScalarLaw {
        let tau = self.tau;
        let (lo, hi) = (d - tau, d + tau);
        let mut cuts: Vec<f64> = self.graph.breakpoints().into_iter().filter(|&b| b > lo && b < hi && b != d).collect();
        cuts.extend([lo, d, hi]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let (x, w) = gauss_rule_cached();
        let (mut value, mut deriv) = (0.0, 0.0);
        for win in cuts.windows(2) {
            let (a, b) = (win[0], win[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let sign = if mid > d { 1.0 } else { -1.0 };
            for (xi, wi) in x.iter().zip(w) {
                let s = mid + half * xi;
                let sv = self.graph.selection_odd(s);
                let kernel = (1.0 - (s - d).abs() / tau).max(0.0) / tau;
                value += half * wi * sv * kernel;
                deriv += half * wi * sv * sign;
            }
        }
        deriv /= tau * tau;
        if d == 0.0 {
            // Odd integrand against an even kernel.
            value = 0.0;
        }
        let secant = if d > 1e-9 * tau { value / d } else { deriv };
        ScalarLaw { value, derivative: deriv, secant }
    }

    fn plateau_interp(&self, d: f64) -> ScalarLaw {
        let Some(bridge) = self.bridge else {
            // Graphs without plateaus: the selection itself is continuous.
            let (v, dv, sec) = match self.graph.kind {
                GraphKind::Newtonian { nu } => (2.0 * nu * d, 2.0 * nu, 2.0 * nu),
                GraphKind::PowerLaw { flow } => {
                    let f = self.smoothed_flow(flow);
                    (f.value(d), f.derivative(d), f.secant(d))
                }
                _ => unreachable!("rejected in new"),
            };
            return ScalarLaw { value: v, derivative: dv, secant: sec };
        };
        let (lower, upper) = match self.graph.kind {
            GraphKind::Plateau { lower, upper, .. } | GraphKind::PlateauWithJump { lower, upper, .. } => (lower, upper),
            _ => unreachable!(),
        };
        let k = &bridge.knots[..bridge.len];
        let (value, derivative) = if d < k[0].0 {
            (lower.value(d), lower.derivative(d))
        } else if d > k[bridge.len - 1].0 {
            (upper.value(d), upper.derivative(d))
        } else {
            let i = (0..bridge.len - 1).find(|&i| d <= k[i + 1].0).unwrap_or(bridge.len - 2);
            let slope = (k[i + 1].1 - k[i].1) / (k[i + 1].0 - k[i].0);
            (k[i].1 + slope * (d - k[i].0), slope)
        };
        let secant = if d > 0.0 { value / d } else { derivative };
        ScalarLaw { value, derivative, secant }
    }

    /// `S^n(D) = g(|D|) D / |D|`.
    pub fn stress(&self, d: Sym) -> Sym {
        let n = d.norm();
        if n == 0.0 {
            return Sym::ZERO;
        }
        self.scalar(n).secant * d
    }

    /// Stress and its derivative as a linear map `H -> dS[H]`:
    /// `dS[H] = phi H + (g' - phi)(N : H) N` with `N = D/|D|`.
    pub fn stress_and_tangent(&self, d: Sym) -> (Sym, Tangent) {
        let n = d.norm();
        if n == 0.0 {
            let g = self.scalar(0.0);
            return (Sym::ZERO, Tangent { phi: g.derivative, beta: 0.0, dir: Sym::ZERO });
        }
        let g = self.scalar(n);
        let dir = (1.0 / n) * d;
        (g.secant * d, Tangent { phi: g.secant, beta: g.derivative - g.secant, dir })
    }

    /// Constants with `|S(D)| <= c1 |D|^{r-1} + k` and
    /// `S(D):D >= c2 |D|^r - m`, measured on a logarithmic grid.
    pub fn growth_bounds(&self) -> GrowthBounds {
        let r = self.graph.growth_exponent();
        let a = self.graph.asymptotic_coefficient();
        let (c1, c2) = (2.0 * a, 0.5 * a);
        let (mut k, mut m) = (0.0f64, 0.0f64);
        for i in 0..=2400 {
            let d = 10f64.powf(-8.0 + 16.0 * i as f64 / 2400.0);
            let g = self.scalar(d).value;
            k = k.max(g - c1 * d.powf(r - 1.0));
            m = m.max(c2 * d.powf(r) - g * d);
        }
        GrowthBounds { r, c1, k: 1.01 * k + 1e-12, c2, m: 1.01 * m + 1e-12 }
    }
}

fn bridge_entry(lower: &FlowCurve, level: f64, tau: f64) -> (f64, f64) {
    let s = level - tau;
    if s <= 0.0 {
        (0.0, 0.0)
    } else {
        (lower.inverse(s), s)
    }
}

fn gauss_rule_cached() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(MOLLIFIER_POINTS))
}

/// `dS[H] = phi H + beta (dir : H) dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub phi: f64,
    pub beta: f64,
    pub dir: Sym,
}

impl Tangent {
    pub fn apply(&self, h: Sym) -> Sym {
        self.phi * h + (self.beta * self.dir.ddot(h)) * self.dir
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBounds {
    pub r: f64,
    pub c1: f64,
    pub k: f64,
    pub c2: f64,
    pub m: f64,
}

/// Laws attached to macro elements. A single entry applies everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct LawField {
    laws: Vec<RegularizedLaw>,
}

impl LawField {
    pub fn uniform(law: RegularizedLaw) -> Self {
        Self { laws: vec![law] }
    }

    /// One law per macro element; all must share the growth exponent.
    pub fn per_macro(laws: Vec<RegularizedLaw>) -> Result<Self, ConstitutiveError> {
        let Some(first) = laws.first() else {
            return Err(ConstitutiveError::InvalidGraph("empty law field".into()));
        };
        let r = first.graph.growth_exponent();
        if laws.iter().any(|l| (l.graph.growth_exponent() - r).abs() > 1e-12) {
            return Err(ConstitutiveError::InvalidGraph("macro laws must share the growth exponent".into()));
        }
        Ok(Self { laws })
    }

    pub fn at(&self, macro_element: usize) -> &RegularizedLaw {
        if self.laws.len() == 1 {
            &self.laws[0]
        } else {
            &self.laws[macro_element]
        }
    }

    pub fn laws(&self) -> &[RegularizedLaw] {
        &self.laws
    }

    pub fn n(&self) -> u32 {
        self.laws[0].n
    }

    pub fn with_index(&self, n: u32) -> Self {
        Self { laws: self.laws.iter().map(|l| l.with_index(n)).collect() }
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self, ConstitutiveError> {
        Ok(Self { laws: self.laws.iter().map(|l| l.with_tau(tau)).collect::<Result<_, _>>()? })
    }

    pub fn tau(&self) -> f64 {
        self.laws[0].tau
    }

    pub fn growth_exponent(&self) -> f64 {
        self.laws[0].graph.growth_exponent()
    }
}

/// Quadrature approximation of `int_Omega dist((D, S), A) dx` with the
/// fields sampled at barycentric points of each element. Returns the
/// per-element contributions.
pub fn graph_indicator_elements<F>(
    graphs: &dyn Fn(usize) -> GraphModel,
    exps: &Exponents,
    mesh: &Mesh,
    quad_degree: usize,
    fields: F,
) -> Vec<f64>
where
    F: Fn(usize, [f64; 3]) -> (Sym, Sym) + Sync,
{
    use rayon::prelude::*;
    let q = triangle_rule(quad_degree);
    let graphs: Vec<GraphModel> = (0..mesh.num_triangles()).map(graphs).collect();
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let area = mesh.area(t);
            let g = &graphs[t];
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(p, w)| {
                    let (d, s) = fields(t, *p);
                    2.0 * area * w * g.distance(exps, d, s)
                })
                .sum()
        })
        .collect()
}

/// Total graph indicator for a single graph.
pub fn graph_indicator_ea<F>(graph: &GraphModel, exps: &Exponents, mesh: &Mesh, quad_degree: usize, fields: F) -> f64
where
    F: Fn(usize, [f64; 3]) -> (Sym, Sym) + Sync,
{
    let g = *graph;
    graph_indicator_elements(&move |_| g, exps, mesh, quad_degree, fields).iter().sum()
}

/// Envelope for the squared distance of `(D, S^tau(D))` to the Bingham
/// graph (`r = 2`): the maximum of the three case bounds `tau^2`,
/// `(sigma/(4 nu))^{1/3} tau^{2/3}` and `4 nu^{2/3} sigma^{1/3} tau^{2/3}`.
pub fn graph_distance_bound_simple_tau(nu: f64, sigma: f64, tau: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let t23 = tau.powf(2.0 / 3.0);
    (tau * tau).max((sigma / (4.0 * nu)).powf(1.0 / 3.0) * t23).max(4.0 * nu.powf(2.0 / 3.0) * sigma.powf(1.0 / 3.0) * t23)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn exponents_low_regime() {
        let e = make_exponents(1.5, 2, None).unwrap();
        assert!(close(e.r_conj, 3.0, 1e-15));
        assert!(close(e.r_tilde, 3.0, 1e-15));
        assert!(close(e.t, 17.0 / 12.0, 1e-15));
        assert!(close(e.t_tilde, 17.0 / 7.0, 1e-14));
        assert!(e.t < e.r && e.t_tilde < e.r_tilde);
        assert!((1.0 / e.r + 1.0 / e.r_conj - 1.0).abs() < 1e-14);
        assert!((1.0 / e.t + 1.0 / e.t_conj - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponents_high_regime() {
        let e = make_exponents(2.0, 2, None).unwrap();
        assert_eq!((e.t, e.t_tilde, e.r_tilde, e.r_conj, e.t_conj), (2.0, 2.0, 2.0, 2.0, 2.0));
        let e = make_exponents(3.0, 3, None).unwrap();
        assert!(close(e.r_tilde, 1.5, 1e-15) && e.t == 3.0 && close(e.t_tilde, 1.5, 1e-15));
    }

    #[test]
    fn exponents_reject_small_r() {
        assert!(matches!(make_exponents(1.2, 2, None), Err(ConstitutiveError::ExponentOutOfRange { .. })));
        assert!(make_exponents(4.0 / 3.0, 2, None).is_err());
        assert!(matches!(make_exponents(1.5, 2, Some(1.6)), Err(ConstitutiveError::BadT { .. })));
    }

    #[test]
    fn bingham_selection() {
        let g = GraphModel::bingham(1.0, 1.0);
        assert_eq!(g.selection(Sym::ZERO), Sym::ZERO);
        let d = Sym::new(1.0, 0.0, -1.0);
        let s = g.selection(d);
        let k = 1.0 / 2f64.sqrt() + 2.0;
        assert!(close(s.xx, k, 1e-15) && close(s.yy, -k, 1e-15) && s.xy == 0.0);
        let n = GraphModel::newtonian(1.0);
        let d = Sym::new(0.3, -0.7, 0.1);
        assert_eq!(n.selection(d), 2.0 * d);
        let b0 = GraphModel::bingham(1.0, 0.0);
        let s = b0.selection(d);
        assert!((s - 2.0 * d).norm() < 1e-15);
    }

    #[test]
    fn simple_tau_values() {
        let g = GraphModel::bingham(1.0, 1.0);
        let law = RegularizedLaw::new(g, RegularizationKind::SimpleTau, 1, 0.1).unwrap();
        assert_eq!(law.stress(Sym::ZERO), Sym::ZERO);
        let v = law.scalar(1.0).value;
        assert!(close(v, 2.0 + 1.0 / 1.01f64.sqrt(), 1e-15));
        assert!(close(v, 2.9950371902099891, 1e-14));
        assert!(matches!(
            RegularizedLaw::new(g, RegularizationKind::SimpleTau, 1, 0.0),
            Err(ConstitutiveError::NonPositiveTau(_))
        ));
    }

    #[test]
    fn mollified_linear_law_is_identity() {
        let law = RegularizedLaw::new(GraphModel::newtonian(0.7), RegularizationKind::Mollified, 3, 1.0).unwrap();
        for &d in &[0.0, 1e-3, 0.2, 0.33, 1.0, 5.0] {
            let s = law.scalar(d);
            assert!(close(s.value, 1.4 * d, 1e-13), "{d}: {}", s.value);
            assert!(close(s.derivative, 1.4, 1e-12));
        }
    }

    #[test]
    fn mollified_bingham_is_odd_and_continuous() {
        let law = RegularizedLaw::new(GraphModel::bingham(1.0, 1.0), RegularizationKind::Mollified, 4, 1.0).unwrap();
        assert_eq!(law.scalar(0.0).value, 0.0);
        // Odd extension: g(-D) computed by hand equals -g(D).
        let g = law.graph;
        let d = 0.1;
        let tau = law.tau;
        let n = 20000;
        let (mut plus, mut minus) = (0.0, 0.0);
        for i in 0..n {
            let s = -tau + 2.0 * tau * (i as f64 + 0.5) / n as f64;
            let k = (1.0 - s.abs() / tau) / tau * 2.0 * tau / n as f64;
            plus += g.selection_odd(d + s) * k;
            minus += g.selection_odd(-d + s) * k;
        }
        assert!(close(plus, -minus, 1e-12));
        assert!(close(law.scalar(d).value, plus, 1e-6));
        let tiny = law.scalar(1e-12);
        assert!(tiny.value.abs() < 1e-9);
    }

    #[test]
    fn plateau_interp_bridges() {
        let lower = FlowCurve { c: 2.0, kappa: 0.0, q: 2.0 };
        let upper = FlowCurve { c: 0.5, kappa: 0.0, q: 2.0 };
        let g = GraphModel::new(GraphKind::Plateau { lower, upper, level: 1.0 }).unwrap();
        let law = RegularizedLaw::new(g, RegularizationKind::PlateauInterp, 4, 1.0).unwrap();
        // lower reaches 0.75 at 0.375; upper reaches 1.25 at 2.5.
        assert!(close(law.scalar(0.2).value, 0.4, 1e-15));
        assert!(close(law.scalar(3.0).value, 1.5, 1e-15));
        let mid = law.scalar(0.5 * (0.375 + 2.5)).value;
        assert!(close(mid, 1.0, 1e-12));
        assert!(matches!(
            RegularizedLaw::new(GraphModel::bingham(1.0, 1.0), RegularizationKind::PlateauInterp, 1, 1.0),
            Err(ConstitutiveError::UnsupportedRegularization { .. })
        ));
        let jump = GraphModel::new(GraphKind::PlateauWithJump { lower, upper, level: 1.0, jump_at: 3.0 }).unwrap();
        let law = RegularizedLaw::new(jump, RegularizationKind::PlateauInterp, 8, 1.0).unwrap();
        let mut prev = -1.0;
        for i in 0..2000 {
            let v = law.scalar(i as f64 * 0.003).value;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn bingham_distance_examples() {
        let g = GraphModel::bingham(1.0, 1.0);
        let e = make_exponents(2.0, 2, None).unwrap();
        let half = Sym::new(0.5 / 2f64.sqrt(), 0.0, 0.5 / 2f64.sqrt());
        assert_eq!(g.distance(&e, Sym::ZERO, half), 0.0);
        assert!(g.scalar_distance(&e, 1.0, 3.0) < 1e-20);
        assert!(close(g.scalar_distance(&e, 0.0, 2.0), 0.2, 1e-12));
    }

    #[test]
    fn distance_of_misaligned_pair_is_bounded_by_scalar_reduction() {
        let g = GraphModel::bingham(1.0, 0.5);
        let e = make_exponents(2.0, 2, None).unwrap();
        let d = Sym::new(0.3, 0.1, -0.2);
        let s = Sym::new(-0.4, 0.9, 0.2);
        let full = g.distance(&e, d, s);
        let lower = g.scalar_distance(&e, d.norm(), s.norm());
        assert!(full >= lower - 1e-14);
        // The candidate with direction D/|D| is an upper bound.
        let dir = (1.0 / d.norm()) * d;
        let mut brute = f64::INFINITY;
        for i in 0..20000 {
            let rho = 3.0 * i as f64 / 20000.0;
            let sv = g.selection_scalar(rho);
            let c = (d - rho * dir).ddot(d - rho * dir) + (s - sv * dir).ddot(s - sv * dir);
            brute = brute.min(c);
        }
        assert!(full <= brute + 1e-12);
    }

    #[test]
    fn bound_envelope() {
        assert_eq!(graph_distance_bound_simple_tau(1.0, 0.0, 0.1), 0.0);
        let b = graph_distance_bound_simple_tau(1.0, 1.0, 1e-3);
        assert!(close(b, 0.04, 1e-12));
        let b2 = graph_distance_bound_simple_tau(1.0, 1.0, 0.5e-3);
        assert!(close(b / b2, 2f64.powf(2.0 / 3.0), 1e-12));
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let laws = [
            RegularizedLaw::new(GraphModel::bingham(1.0, 1.0), RegularizationKind::SimpleTau, 2, 1.0).unwrap(),
            RegularizedLaw::new(GraphModel::bingham(0.5, 2.0), RegularizationKind::Mollified, 3, 1.0).unwrap(),
        ];
        let d = Sym::new(0.4, -0.3, 0.25);
        let h = Sym::new(-0.2, 0.7, 0.1);
        for law in laws {
            let (_, tan) = law.stress_and_tangent(d);
            let eps = 1e-6;
            let fd = (1.0 / (2.0 * eps)) * (law.stress(d + eps * h) - law.stress(d - eps * h));
            assert!((tan.apply(h) - fd).norm() < 1e-7 * (1.0 + fd.norm()));
        }
    }
}

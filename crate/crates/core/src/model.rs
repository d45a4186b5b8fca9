//! Model parameters, ionic currents and the full / layer vector fields.
//!
//! Maximal conductances live inside the activation functions, so the slow
//! gates range over `[0, g_n]` and `[0, g_p]` and the critical manifold does
//! not depend on the slow conductances.

use crate::{Error, Result};

/// Voltage half-width of the strip around `v = -1` where the `(v, p)` chart
/// is considered singular.
pub const CHART_DELTA: f64 = 1e-9;

/// Sigmoidal activation `S(v) = g/2 (tanh((v - a)/b) + 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateParams {
    /// Maximal conductance.
    pub g: f64,
    /// Half-activation voltage.
    pub a: f64,
    /// Slope width.
    pub b: f64,
}

impl GateParams {
    pub const fn new(g: f64, a: f64, b: f64) -> Self {
        Self { g, a, b }
    }

    fn validate(&self) -> Result<()> {
        if !(self.g.is_finite() && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidParameter("gate parameters must be finite"));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter("gate conductance must be >= 0"));
        }
        if self.b == 0.0 {
            return Err(Error::InvalidParameter("gate slope width must be nonzero"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    /// Time-scale separation. Zero is allowed for singular-limit analyses only.
    pub eps: f64,
    /// Time constant of the slow inward gate `p`.
    pub tau: f64,
    pub g_l: f64,
    pub v_l: f64,
    /// Instantaneous inward current.
    pub gate_m: GateParams,
    /// Slow outward current.
    pub gate_n: GateParams,
    /// Slow inward current.
    pub gate_p: GateParams,
    /// Applied current.
    pub i: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            eps: 0.05,
            tau: 1.5,
            g_l: 2.0,
            v_l: -0.8,
            gate_m: GateParams::new(4.4, -0.19, 0.18),
            gate_n: GateParams::new(8.0, -0.16, 0.29),
            gate_p: GateParams::new(2.0, -0.5, 0.3),
            i: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() || self.eps < 0.0 {
            return Err(Error::InvalidParameter("eps must be finite and >= 0"));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::InvalidParameter("tau must be > 0"));
        }
        if !self.g_l.is_finite() || self.g_l < 0.0 {
            return Err(Error::InvalidParameter("g_l must be >= 0"));
        }
        if !(self.v_l > -1.0 && self.v_l < 1.0) {
            return Err(Error::InvalidParameter("v_l must lie in (-1, 1)"));
        }
        if !self.i.is_finite() {
            return Err(Error::InvalidParameter("applied current must be finite"));
        }
        self.gate_m.validate()?;
        self.gate_n.validate()?;
        self.gate_p.validate()
    }

    pub fn with_current(mut self, i: f64) -> Self {
        self.i = i;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    #[inline]
    pub fn s_n(&self, v: f64) -> f64 {
        activation(v, &self.gate_n)
    }

    #[inline]
    pub fn s_p(&self, v: f64) -> f64 {
        activation(v, &self.gate_p)
    }

    /// Total ionic current.
    #[inline]
    pub fn ionic_current(&self, s: &FullState) -> f64 {
        fast_current(s.v, self).value + s.n * (s.v + 1.0) + s.p * (s.v - 1.0)
    }

    /// `d i_ion / dv = c'(v) + n + p`, the layer-stability coefficient.
    #[inline]
    pub fn ionic_current_dv(&self, s: &FullState) -> f64 {
        fast_current(s.v, self).slope + s.n + s.p
    }
}

/// A point `(v, n, p)` of the three-dimensional phase space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FullState {
    pub v: f64,
    pub n: f64,
    pub p: f64,
}

impl FullState {
    pub const fn new(v: f64, n: f64, p: f64) -> Self {
        Self { v, n, p }
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.v, self.n, self.p]
    }

    pub const fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn distance(&self, other: &FullState) -> f64 {
        libm::sqrt(
            (self.v - other.v) * (self.v - other.v)
                + (self.n - other.n) * (self.n - other.n)
                + (self.p - other.p) * (self.p - other.p),
        )
    }
}

/// `sech^2(x)`, evaluated without cancellation for large `|x|`.
#[inline]
fn sech2(x: f64) -> f64 {
    let e = libm::exp(-2.0 * libm::fabs(x));
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

#[inline]
pub fn activation(v: f64, gate: &GateParams) -> f64 {
    0.5 * gate.g * (libm::tanh((v - gate.a) / gate.b) + 1.0)
}

#[inline]
pub fn activation_slope(v: f64, gate: &GateParams) -> f64 {
    gate.g / (2.0 * gate.b) * sech2((v - gate.a) / gate.b)
}

#[inline]
pub fn activation_curvature(v: f64, gate: &GateParams) -> f64 {
    let x = (v - gate.a) / gate.b;
    -gate.g / (gate.b * gate.b) * sech2(x) * libm::tanh(x)
}

/// The fast part `c(v)` of the ionic current and its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastCurrent {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// `c(v) = g_l (v - v_l) + S_m(v)(v - 1)`.
#[inline]
pub fn fast_current(v: f64, params: &ModelParams) -> FastCurrent {
    let m = &params.gate_m;
    let s = activation(v, m);
    let ds = activation_slope(v, m);
    let dds = activation_curvature(v, m);
    FastCurrent {
        value: params.g_l * (v - params.v_l) + s * (v - 1.0),
        slope: params.g_l + ds * (v - 1.0) + s,
        curvature: dds * (v - 1.0) + 2.0 * ds,
    }
}

pub fn ionic_current(s: &FullState, params: &ModelParams) -> f64 {
    params.ionic_current(s)
}

/// Right-hand side of the full slow-fast system.
pub fn full_vector_field(s: &FullState, params: &ModelParams) -> Result<[f64; 3]> {
    if params.eps <= 0.0 {
        return Err(Error::SingularLimit);
    }
    Ok(full_field_unchecked(s, params))
}

#[inline]
fn full_field_unchecked(s: &FullState, params: &ModelParams) -> [f64; 3] {
    [
        (params.i - params.ionic_current(s)) / params.eps,
        -s.n + params.s_n(s.v),
        (-s.p + params.s_p(s.v)) / params.tau,
    ]
}

/// Fast-time layer problem: only `v` moves.
pub fn layer_vector_field(s: &FullState, params: &ModelParams) -> [f64; 3] {
    [params.i - params.ionic_current(s), 0.0, 0.0]
}

pub fn full_jacobian(s: &FullState, params: &ModelParams) -> Result<[[f64; 3]; 3]> {
    if params.eps <= 0.0 {
        return Err(Error::SingularLimit);
    }
    let eps = params.eps;
    let tau = params.tau;
    Ok([
        [
            -params.ionic_current_dv(s) / eps,
            -(s.v + 1.0) / eps,
            -(s.v - 1.0) / eps,
        ],
        [activation_slope(s.v, &params.gate_n), -1.0, 0.0],
        [activation_slope(s.v, &params.gate_p) / tau, 0.0, -1.0 / tau],
    ])
}

/// The full system with `eps > 0` checked once, for use inside integrators.
#[derive(Clone, Copy, Debug)]
pub struct FullSystem {
    params: ModelParams,
}

impl FullSystem {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        if params.eps <= 0.0 {
            return Err(Error::SingularLimit);
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    #[inline]
    pub fn field(&self, x: &[f64; 3]) -> [f64; 3] {
        full_field_unchecked(&FullState::from_array(*x), &self.params)
    }

    /// Equilibrium on the steady-state curve at voltage `v`, with the applied
    /// current that makes it an equilibrium.
    pub fn equilibrium_at(params: &ModelParams, v: f64) -> (f64, FullState) {
        let s = FullState::new(v, params.s_n(v), params.s_p(v));
        let i = fast_current(v, params).value + s.n * (v + 1.0) + s.p * (v - 1.0);
        (i, s)
    }
}

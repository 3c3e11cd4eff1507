//! Registry of one-dimensional atoms that fall outside the piecewise
//! linear-quadratic class. Each entry knows its value, its derivative where
//! it exists, its one-sided directional derivatives, and its breakpoints.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Builtin {
    /// `y·sin(log(1/y))` for `y > 0`, else `0`.
    XSinLog,
    /// `y + y²·sin(1/y)` for `y > 0`, else `y`.
    XSqSin,
}

pub const REGISTRY: &[Builtin] = &[Builtin::XSinLog, Builtin::XSqSin];

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::XSinLog => "xsinlog",
            Builtin::XSqSin => "xsqsin",
        }
    }

    pub fn lookup(name: &str) -> Option<Builtin> {
        REGISTRY.iter().copied().find(|b| b.name() == name)
    }

    pub fn value(self, y: f64) -> f64 {
        match self {
            Builtin::XSinLog => {
                if y > 0.0 {
                    y * (1.0 / y).ln().sin()
                } else {
                    0.0
                }
            }
            Builtin::XSqSin => {
                if y > 0.0 {
                    y + y * y * (1.0 / y).sin()
                } else {
                    y
                }
            }
        }
    }

    pub fn breakpoints(self) -> &'static [f64] {
        &[0.0]
    }

    pub fn is_breakpoint(self, y: f64) -> bool {
        self.breakpoints().contains(&y)
    }

    /// Derivative at points off the breakpoint set.
    pub fn derivative(self, y: f64) -> Option<f64> {
        if self.is_breakpoint(y) {
            return None;
        }
        Some(self.smooth_derivative(y))
    }

    fn smooth_derivative(self, y: f64) -> f64 {
        match self {
            Builtin::XSinLog => {
                if y > 0.0 {
                    let l = (1.0 / y).ln();
                    l.sin() - l.cos()
                } else {
                    0.0
                }
            }
            Builtin::XSqSin => {
                if y > 0.0 {
                    1.0 + 2.0 * y * (1.0 / y).sin() - (1.0 / y).cos()
                } else {
                    1.0
                }
            }
        }
    }

    /// One-sided directional derivative `φ'(y; s)` for `s = ±1`; `None` when
    /// the difference quotients do not converge.
    pub fn dir_deriv(self, y: f64, s: f64) -> Option<f64> {
        if !self.is_breakpoint(y) {
            return Some(self.smooth_derivative(y) * s);
        }
        match (self, s > 0.0) {
            (Builtin::XSinLog, true) => None,
            (Builtin::XSinLog, false) => Some(0.0),
            (Builtin::XSqSin, true) => Some(1.0),
            (Builtin::XSqSin, false) => Some(-1.0),
        }
    }

    /// `lim φ'(z)` as `z → y` from the side `s = ±1`, when it exists.
    pub fn derivative_limit(self, y: f64, s: f64) -> Option<f64> {
        if !self.is_breakpoint(y) {
            return Some(self.smooth_derivative(y));
        }
        match (self, s > 0.0) {
            (_, true) => None,
            (Builtin::XSinLog, false) => Some(0.0),
            (Builtin::XSqSin, false) => Some(1.0),
        }
    }

    /// A-e. derivative used by sampling oracles; at a breakpoint, the
    /// one-sided limit that exists (left first), else zero.
    pub fn ae_derivative(self, y: f64) -> f64 {
        if let Some(d) = self.derivative(y) {
            return d;
        }
        self.derivative_limit(y, -1.0)
            .or_else(|| self.derivative_limit(y, 1.0))
            .unwrap_or(0.0)
    }
}

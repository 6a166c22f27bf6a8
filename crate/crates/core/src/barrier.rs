//! Voltage-band barrier transform.
//!
//! A barrier map is a smooth strictly increasing bijection `F: R -> (v_min,
//! v_max)`. Working in the transformed coordinate `F⁻¹(V_o)` turns the hard
//! band constraint into a boundedness requirement: as long as the transformed
//! state stays finite, the physical voltage cannot touch either band edge.
//!
//! The controller needs `F⁻¹` together with its first two derivatives with
//! respect to the physical voltage; both are supplied here in closed form
//! because finite differences are ill-conditioned near the band edges.

use thiserror::Error;

/// Evaluation is refused closer than this to either band edge (volts).
/// The logarithm and the derivative denominators blow up at the edges.
pub const DOMAIN_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error(
        "invalid voltage band: require 0 < v_min < v_max, got v_min = {v_min} V, v_max = {v_max} V"
    )]
    InvalidSpec { v_min: f64, v_max: f64 },
    #[error("voltage {v} V is outside the open band ({v_min}, {v_max}) V")]
    OutOfBand { v: f64, v_min: f64, v_max: f64 },
}

/// Hard voltage band `(v_min, v_max)`, both edges excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    v_min: f64,
    v_max: f64,
}

impl BarrierSpec {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self, BarrierError> {
        if !(v_min.is_finite() && v_max.is_finite()) || v_min <= 0.0 || v_min >= v_max {
            return Err(BarrierError::InvalidSpec { v_min, v_max });
        }
        Ok(Self { v_min, v_max })
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn span(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.v_min + self.v_max)
    }

    /// Strict interior test, with the evaluation margin applied.
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v > self.v_min + DOMAIN_MARGIN && v < self.v_max - DOMAIN_MARGIN
    }
}

/// A barrier map usable by the controller. Implementations must be strictly
/// increasing, smooth, and satisfy `F(x) -> v_max` as `x -> inf` and
/// `F(x) -> v_min` as `x -> -inf`.
pub trait Barrier: Send + Sync {
    fn spec(&self) -> BarrierSpec;

    /// Forward map `F`: transformed coordinate to physical voltage.
    fn forward(&self, x: f64) -> f64;

    /// Inverse map `F⁻¹`: physical voltage to transformed coordinate.
    fn inverse(&self, v: f64) -> Result<f64, BarrierError>;

    /// First and second derivative of `F⁻¹` with respect to the voltage.
    /// The first derivative is strictly positive on the whole band.
    fn inverse_derivatives(&self, v: f64) -> Result<(f64, f64), BarrierError>;

    fn check_domain(&self, v: f64) -> Result<(), BarrierError> {
        let spec = self.spec();
        if spec.contains(v) {
            Ok(())
        } else {
            Err(BarrierError::OutOfBand {
                v,
                v_min: spec.v_min(),
                v_max: spec.v_max(),
            })
        }
    }
}

/// The shipped barrier instance:
///
/// ```text
/// F(x)    = (v_min + v_max)/2 + (v_max - v_min)/2 * tanh(x)
/// F⁻¹(V)  = ln((V - v_min)/(v_max - V)) / 2
/// dF⁻¹/dV = (v_max - v_min) / (2 (v_max - V)(V - v_min))
/// ```
///
/// Any other map satisfying the [`Barrier`] contract can be substituted
/// without touching the controller.
#[derive(Debug, Clone, Copy)]
pub struct TanhBarrier {
    spec: BarrierSpec,
}

impl TanhBarrier {
    pub fn new(spec: BarrierSpec) -> Self {
        Self { spec }
    }
}

impl Barrier for TanhBarrier {
    fn spec(&self) -> BarrierSpec {
        self.spec
    }

    fn forward(&self, x: f64) -> f64 {
        self.spec.midpoint() + 0.5 * self.spec.span() * x.tanh()
    }

    fn inverse(&self, v: f64) -> Result<f64, BarrierError> {
        self.check_domain(v)?;
        Ok(0.5 * ((v - self.spec.v_min()) / (self.spec.v_max() - v)).ln())
    }

    fn inverse_derivatives(&self, v: f64) -> Result<(f64, f64), BarrierError> {
        self.check_domain(v)?;
        let lo = v - self.spec.v_min();
        let hi = self.spec.v_max() - v;
        let d1 = 0.5 * self.spec.span() / (hi * lo);
        let d2 = 0.5 * (1.0 / (hi * hi) - 1.0 / (lo * lo));
        Ok((d1, d2))
    }
}

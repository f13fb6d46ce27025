//! Physical flux, wave speed and variable transforms for the three systems
//! solved: linear advection, Burgers, and the 1D Euler equations.
//!
//! Two evaluation paths exist on purpose. The raw slice path serves the
//! finite-volume reference (never differentiated, hot loop); the tensor path
//! routes the same formulas through the tape so the DG scheme stays
//! differentiable end to end. A unit test pins the two paths together.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquationSpec {
    /// ∂_t u + a ∂_x u = 0
    Advection { speed: f64 },
    /// ∂_t u + ∂_x (u²/2) = 0
    Burgers,
    /// 1D Euler with perfect gas law, γ > 1.
    Euler { gamma: f64 },
}

impl EquationSpec {
    pub fn advection() -> Self {
        EquationSpec::Advection { speed: 1.0 }
    }

    pub fn euler() -> Self {
        EquationSpec::Euler { gamma: 1.4 }
    }

    pub fn n_vars(&self) -> usize {
        match self {
            EquationSpec::Euler { .. } => 3,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationSpec::Advection { .. } => "advection",
            EquationSpec::Burgers => "burgers",
            EquationSpec::Euler { .. } => "euler",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EquationSpec::Euler { gamma } if *gamma <= 1.0 => {
                Err(Error::Config(format!("gamma must exceed 1, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    fn unstable(reason: &str) -> Error {
        Error::Unstable { step: 0, time: 0.0, reason: reason.into() }
    }

    /// Pressure from conservative variables: p = (γ-1)(E - ρu²/2).
    pub fn pressure(&self, rho: f64, mom: f64, energy: f64) -> f64 {
        match self {
            EquationSpec::Euler { gamma } => (gamma - 1.0) * (energy - 0.5 * mom * mom / rho),
            _ => panic!("pressure only defined for Euler"),
        }
    }

    /// Physical flux at one node; `u` and `out` hold the s components.
    pub fn flux_node(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            EquationSpec::Advection { speed } => {
                out[0] = speed * u[0];
            }
            EquationSpec::Burgers => {
                out[0] = 0.5 * u[0] * u[0];
            }
            EquationSpec::Euler { gamma } => {
                let (rho, mom, energy) = (u[0], u[1], u[2]);
                if !(rho > 0.0) {
                    return Err(Self::unstable("non-positive density"));
                }
                let vel = mom / rho;
                let p = (gamma - 1.0) * (energy - 0.5 * mom * vel);
                out[0] = mom;
                out[1] = mom * vel + p;
                out[2] = (energy + p) * vel;
            }
        }
        Ok(())
    }

    /// Largest characteristic speed at one node.
    pub fn max_wave_speed_node(&self, u: &[f64]) -> Result<f64> {
        match self {
            EquationSpec::Advection { speed } => Ok(speed.abs()),
            EquationSpec::Burgers => Ok(u[0].abs()),
            EquationSpec::Euler { gamma } => {
                let (rho, mom, energy) = (u[0], u[1], u[2]);
                if !(rho > 0.0) {
                    return Err(Self::unstable("non-positive density"));
                }
                let vel = mom / rho;
                let p = (gamma - 1.0) * (energy - 0.5 * mom * vel);
                if !(p > 0.0) {
                    return Err(Self::unstable("non-positive pressure"));
                }
                Ok(vel.abs() + (gamma * p / rho).sqrt())
            }
        }
    }

    /// Tensor flux: `u` has shape [s, ...]; the result has the same shape.
    pub fn flux(&self, tape: &Tape, u: &Tensor) -> Result<Tensor> {
        self.check_vars(u)?;
        match self {
            EquationSpec::Advection { speed } => tape.scale(u, *speed),
            EquationSpec::Burgers => tape.scale(&tape.square(u)?, 0.5),
            EquationSpec::Euler { gamma } => {
                let (rho, mom, energy) = self.split3(tape, u)?;
                if rho.data().iter().any(|&r| !(r > 0.0)) {
                    return Err(Self::unstable("non-positive density"));
                }
                let vel = tape.div(&mom, &rho)?;
                // p = (γ-1)(E - mom·vel/2)
                let kinetic = tape.scale(&tape.mul(&mom, &vel)?, 0.5)?;
                let p = tape.scale(&tape.sub(&energy, &kinetic)?, gamma - 1.0)?;
                let f0 = mom.clone();
                let f1 = tape.add(&tape.mul(&mom, &vel)?, &p)?;
                let f2 = tape.mul(&tape.add(&energy, &p)?, &vel)?;
                tape.concat(0, &[&f0, &f1, &f2])
            }
        }
    }

    /// Tensor wave speed per point: `u` shape [s, ...] -> shape [1, ...].
    pub fn max_wave_speed(&self, tape: &Tape, u: &Tensor) -> Result<Tensor> {
        self.check_vars(u)?;
        match self {
            EquationSpec::Advection { speed } => {
                let mut shape = u.shape().to_vec();
                shape[0] = 1;
                Ok(Tensor::filled(shape, speed.abs()))
            }
            EquationSpec::Burgers => tape.abs(u),
            EquationSpec::Euler { gamma } => {
                let (rho, mom, energy) = self.split3(tape, u)?;
                if rho.data().iter().any(|&r| !(r > 0.0)) {
                    return Err(Self::unstable("non-positive density"));
                }
                let vel = tape.div(&mom, &rho)?;
                let kinetic = tape.scale(&tape.mul(&mom, &vel)?, 0.5)?;
                let p = tape.scale(&tape.sub(&energy, &kinetic)?, gamma - 1.0)?;
                if p.data().iter().any(|&v| !(v > 0.0)) {
                    return Err(Self::unstable("non-positive pressure"));
                }
                let sound = tape.sqrt(&tape.div(&tape.scale(&p, *gamma)?, &rho)?)?;
                tape.add(&tape.abs(&vel)?, &sound)
            }
        }
    }

    fn split3(&self, tape: &Tape, u: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        Ok((
            tape.slice(u, 0, 0, 1)?,
            tape.slice(u, 0, 1, 1)?,
            tape.slice(u, 0, 2, 1)?,
        ))
    }

    fn check_vars(&self, u: &Tensor) -> Result<()> {
        let s = self.n_vars();
        if u.shape().is_empty() || u.shape()[0] != s {
            return Err(Error::Shape(format!(
                "{} expects leading extent {s}, got {:?}",
                self.name(),
                u.shape()
            )));
        }
        Ok(())
    }

    /// (ρ, u, p) -> (ρ, ρu, E) with E = p/(γ-1) + ρu²/2.
    pub fn primitive_to_conservative(&self, prim: &[f64]) -> Result<Vec<f64>> {
        match self {
            EquationSpec::Euler { gamma } => {
                let (rho, vel, p) = (prim[0], prim[1], prim[2]);
                if !(rho > 0.0) || !(p > 0.0) {
                    return Err(Error::Config(format!(
                        "primitive state needs rho > 0 and p > 0, got ({rho}, {vel}, {p})"
                    )));
                }
                Ok(vec![rho, rho * vel, p / (gamma - 1.0) + 0.5 * rho * vel * vel])
            }
            _ => Ok(prim.to_vec()),
        }
    }

    /// (ρ, ρu, E) -> (ρ, u, p).
    pub fn conservative_to_primitive(&self, cons: &[f64]) -> Result<Vec<f64>> {
        match self {
            EquationSpec::Euler { .. } => {
                let (rho, mom, energy) = (cons[0], cons[1], cons[2]);
                if !(rho > 0.0) {
                    return Err(Self::unstable("non-positive density"));
                }
                let vel = mom / rho;
                let p = self.pressure(rho, mom, energy);
                if !(p > 0.0) {
                    return Err(Self::unstable("non-positive pressure"));
                }
                Ok(vec![rho, vel, p])
            }
            _ => Ok(cons.to_vec()),
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resource caps. Exceeding any of them is reported as an error, never as a
/// silently truncated result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    /// Widest window materialized as a dense algebra element.
    pub window: u32,
    /// Widest window for clopen sets (path sets, no dense matrices).
    pub clopen_window: u32,
    /// Largest path list produced by any enumeration.
    pub paths: u64,
    pub ell: u32,
    pub n: u32,
    pub lag: u32,
    pub entry: u32,
    /// Largest exponent tried by the eventual-positivity certificate.
    pub positivity_power: u32,
    /// Largest window shift tried when trimming or matching clopen classes.
    pub refine_steps: u32,
    /// Largest number of atoms of the operator model used for long stacks.
    pub model_dim: usize,
    /// Largest number of lattice points visited by the shift-equivalence search.
    pub search_points: u64,
    pub power_iterations: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            window: 16,
            clopen_window: 24,
            paths: 1_000_000,
            ell: 400,
            n: 50,
            lag: 4,
            entry: 3,
            positivity_power: 64,
            refine_steps: 12,
            model_dim: 6000,
            search_points: 5_000_000,
            power_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Slack added to every bound that passes through floating point linear algebra.
    pub slack: f64,
    /// Relative size below which a float trace is treated as inconclusive.
    pub undecided: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slack: 1e-9,
            undecided: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub caps: Caps,
    pub tol: Tolerances,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.caps;
        let positive = [
            c.window,
            c.clopen_window,
            c.ell,
            c.n,
            c.lag,
            c.positivity_power,
            c.refine_steps,
        ];
        if positive.contains(&0) || c.paths == 0 || c.model_dim == 0 || c.power_iterations == 0 {
            return Err(Error::InvalidInput("caps must be positive".into()));
        }
        for t in [self.tol.slack, self.tol.undecided] {
            if !(t > 0.0 && t <= 1e-3) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {t} outside (0, 1e-3]"
                )));
            }
        }
        Ok(())
    }
}

//! The assembled optimal-control problem.
//!
//! An [`EnsembleProblem`] ties together a parametrised system family, an
//! initial-state map, a cost specification, and a horizon, with all
//! cross-dimension checks done once at construction so evaluation code can
//! assume a consistent problem.

use crate::costs::{CoercivityWitness, CostSpec};
use crate::ensemble::{InitialStateMap, SystemFamily};
use crate::error::Result;
use crate::Error;

#[derive(Clone, Debug)]
pub struct EnsembleProblem {
    system: SystemFamily,
    x0_map: InitialStateMap,
    cost: CostSpec,
    horizon: usize,
    coercivity: Option<CoercivityWitness>,
}

impl EnsembleProblem {
    pub fn new(
        system: SystemFamily,
        x0_map: InitialStateMap,
        cost: CostSpec,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::input("horizon must be >= 1"));
        }
        let nx = system.state_space().dimension();
        let nu = system.input_space().dimension();
        let ntheta = system.theta_space().dimension();
        x0_map.check_dims(ntheta, nx)?;
        cost.check_dims(nx, nu, ntheta)?;
        Ok(EnsembleProblem {
            system,
            x0_map,
            cost,
            horizon,
            coercivity: None,
        })
    }

    /// Attaches a coercivity certificate for the input penalty; solvers use
    /// it to bound search regions, and the coercivity checker tests it.
    pub fn with_coercivity(mut self, witness: CoercivityWitness) -> Result<Self> {
        let nu = self.system.input_space().dimension();
        witness.check_dims(nu)?;
        self.coercivity = Some(witness);
        Ok(self)
    }

    pub fn system(&self) -> &SystemFamily {
        &self.system
    }

    pub fn x0_map(&self) -> &InitialStateMap {
        &self.x0_map
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn coercivity(&self) -> Option<&CoercivityWitness> {
        self.coercivity.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_space().dimension()
    }

    pub fn input_dim(&self) -> usize {
        self.system.input_space().dimension()
    }

    pub fn theta_dim(&self) -> usize {
        self.system.theta_space().dimension()
    }

    /// The reference input the penalty is anchored at (the origin when the
    /// cost does not name one).
    pub fn input_anchor(&self) -> Vec<f64> {
        self.cost.ell_u().anchor_or_origin(self.input_dim())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Device parameters. Power is expressed as energy per period (MWh/period),
/// the period duration being folded into it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStorageSpec", into = "RawStorageSpec")]
pub struct StorageSpec {
    power: f64,
    capacity: f64,
    efficiency: f64,
    discharge_cost: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawStorageSpec {
    power_mwh: f64,
    capacity_mwh: f64,
    efficiency: f64,
    discharge_cost: f64,
}

impl StorageSpec {
    pub fn new(power: f64, capacity: f64, efficiency: f64, discharge_cost: f64) -> Result<Self> {
        let finite = [power, capacity, efficiency, discharge_cost]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidStorage("parameters must be finite".into()));
        }
        if power < 0.0 {
            return Err(Error::InvalidStorage(format!("power {power} < 0")));
        }
        if capacity <= 0.0 {
            return Err(Error::InvalidStorage(format!("capacity {capacity} <= 0")));
        }
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::InvalidStorage(format!(
                "efficiency {efficiency} outside (0, 1]"
            )));
        }
        if discharge_cost < 0.0 {
            return Err(Error::InvalidStorage(format!(
                "discharge cost {discharge_cost} < 0"
            )));
        }
        Ok(Self {
            power,
            capacity,
            efficiency,
            discharge_cost,
        })
    }

    /// Energy per period at rated power (MWh).
    pub fn power(&self) -> f64 {
        self.power
    }

    /// Energy capacity (MWh).
    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// One-way efficiency.
    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Marginal discharge cost ($/MWh).
    pub fn discharge_cost(&self) -> f64 {
        self.discharge_cost
    }

    /// SoC gained by one period of charging at rated power.
    pub fn charge_step(&self) -> f64 {
        self.power * self.efficiency
    }

    /// SoC lost by one period of discharging at rated power.
    pub fn discharge_step(&self) -> f64 {
        self.power / self.efficiency
    }

    pub fn with_power(self, power: f64) -> Result<Self> {
        Self::new(power, self.capacity, self.efficiency, self.discharge_cost)
    }
}

impl TryFrom<RawStorageSpec> for StorageSpec {
    type Error = Error;

    fn try_from(raw: RawStorageSpec) -> Result<Self> {
        Self::new(raw.power_mwh, raw.capacity_mwh, raw.efficiency, raw.discharge_cost)
    }
}

impl From<StorageSpec> for RawStorageSpec {
    fn from(s: StorageSpec) -> Self {
        Self {
            power_mwh: s.power,
            capacity_mwh: s.capacity,
            efficiency: s.efficiency,
            discharge_cost: s.discharge_cost,
        }
    }
}

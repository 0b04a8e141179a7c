//! Cost functions of a mapping.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::feasibility::{check_sets, CommSets};
use crate::model::{Instance, Mapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    ProcNb,
    ProcPower,
    BwSum,
    BwMax,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::ProcNb => "proc-nb",
            Objective::ProcPower => "proc-power",
            Objective::BwSum => "bw-sum",
            Objective::BwMax => "bw-max",
        }
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "proc-nb" => Ok(Objective::ProcNb),
            "proc-power" => Ok(Objective::ProcPower),
            "bw-sum" => Ok(Objective::BwSum),
            "bw-max" => Ok(Objective::BwMax),
            _ => Err(format!("unknown objective '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostVector {
    /// Processors with at least one assigned node.
    pub proc_nb: usize,
    /// Sum over processors of compute utilization.
    pub proc_power: f64,
    /// MB/s over all inter-processor flows and downloads, each counted once.
    pub bw_sum: f64,
    /// Largest link load as a fraction of that link's bandwidth.
    pub bw_max: f64,
}

impl CostVector {
    pub fn get(&self, objective: Objective) -> f64 {
        match objective {
            Objective::ProcNb => self.proc_nb as f64,
            Objective::ProcPower => self.proc_power,
            Objective::BwSum => self.bw_sum,
            Objective::BwMax => self.bw_max,
        }
    }
}

pub fn evaluate(inst: &Instance, m: &Mapping, sets: &CommSets) -> CostVector {
    let report = check_sets(inst, sets);
    let proc_power = report.compute_util.iter().fold(0.0, |a, x| a + x);
    let bw_sum = report.link_load.iter().map(|l| l.load).fold(0.0, |a, x| a + x);
    let bw_max = report
        .link_load
        .iter()
        .map(|l| if l.load == 0.0 { 0.0 } else { l.load / l.capacity })
        .fold(0.0, f64::max);
    CostVector { proc_nb: m.used_processors().len(), proc_power, bw_sum, bw_max }
}

/// Largest absolute link load (MB/s); the form bounded by the BW-Max program.
pub fn max_link_load(inst: &Instance, sets: &CommSets) -> f64 {
    check_sets(inst, sets).link_load.iter().map(|l| l.load).fold(0.0, f64::max)
}

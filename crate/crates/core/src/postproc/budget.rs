use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityBudget {
    pub eps_decoy: f64,
    pub eps_ver: f64,
    pub eps_pa: f64,
    /// Single-round total.
    pub eps: f64,
    pub round: u32,
    /// Total for round `round` when each round authenticates with the previous key.
    pub eps_round: f64,
}

pub fn epsilon_budget(eps_decoy: f64, eps_ver: f64, eps_pa: f64, round: u32) -> SecurityBudget {
    let eps = eps_decoy + eps_ver + eps_pa;
    SecurityBudget { eps_decoy, eps_ver, eps_pa, eps, round, eps_round: f64::from(round) * eps }
}

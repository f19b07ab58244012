//! Finite-key decoy-state bounds and the secret key length.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use super::{DecoyStats, PostprocError};

/// Number of confidence bounds that share ε_decoy.
pub const CONFIDENCE_BOUNDS: f64 = 7.0;

/// z = Φ⁻¹(1 − ε_decoy / 7).
pub fn quantile(eps_decoy: f64) -> Result<f64, PostprocError> {
    if !(eps_decoy > 0.0 && eps_decoy < CONFIDENCE_BOUNDS) {
        return Err(PostprocError::QuantileDomain(eps_decoy));
    }
    // Φ⁻¹(1 − a) = √2 · erfc⁻¹(2a)
    Ok(std::f64::consts::SQRT_2 * erfc_inv(2.0 * eps_decoy / CONFIDENCE_BOUNDS))
}

pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub mu: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl Intensities {
    pub fn validate(&self) -> Result<(), PostprocError> {
        if !(self.nu2 >= 0.0 && self.nu2 < self.nu1 && self.nu1 + self.nu2 < self.mu) {
            return Err(PostprocError::IntensityOrderViolation);
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.mu, self.nu1, self.nu2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub q_hat: [f64; 3],
    pub q_upper: [f64; 3],
    pub q_lower: [f64; 3],
    pub y0_lower: f64,
    pub q1_lower: f64,
}

/// Wald intervals on each gain, then the vacuum-yield and single-photon-gain
/// lower bounds.
pub fn decoy_bounds(stats: &DecoyStats, it: &Intensities, z: f64) -> Result<DecoyBounds, PostprocError> {
    it.validate()?;
    let mut q_hat = [0.0; 3];
    let mut q_upper = [0.0; 3];
    let mut q_lower = [0.0; 3];
    for a in 0..3 {
        if stats.sent[a] == 0 {
            return Err(PostprocError::EmptyClass(a));
        }
        let q = stats.gain(a);
        let half = z * (q * (1.0 - q) / stats.sent[a] as f64).sqrt();
        q_hat[a] = q;
        q_upper[a] = (q + half).clamp(0.0, 1.0);
        q_lower[a] = (q - half).clamp(0.0, 1.0);
    }
    let [mu, nu1, nu2] = it.as_array();
    let y0_lower = ((nu1 * q_lower[2] * nu2.exp() - nu2 * q_upper[1] * nu1.exp()) / (nu1 - nu2)).max(0.0);
    let q1_lower = mu * mu * (-mu).exp() / ((nu1 - nu2) * (mu - nu1 - nu2))
        * (q_lower[1] * nu1.exp()
            - q_upper[2] * nu2.exp()
            - (nu1 * nu1 - nu2 * nu2) / (mu * mu) * (q_upper[0] * mu.exp() - y0_lower));
    Ok(DecoyBounds { q_hat, q_upper, q_lower, y0_lower, q1_lower })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateInputs {
    pub q1_lower: f64,
    pub q_mu_upper: f64,
    pub y0_lower: f64,
    pub l_ver: u64,
    pub e_mu: f64,
    pub n_mu: u64,
    pub mu: f64,
    pub leak: f64,
    pub z: f64,
    pub eps_pa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub z: f64,
    pub m1_lower: f64,
    pub m0bar_lower: f64,
    pub e1_upper: f64,
    pub leak: f64,
    /// Floored secret length; ≤ 0 means the block is aborted.
    pub ell_sec: i64,
    pub abort_reason: Option<String>,
}

/// Lower bound `n·p − z·√(n·p(1−p))` on a binomial count.
fn binomial_lower(n: f64, p: f64, z: f64) -> f64 {
    let p_c = p.clamp(0.0, 1.0);
    n * p - z * (n * p_c * (1.0 - p_c)).sqrt()
}

/// Evaluate every term of the key length; never fails on a short key, the
/// verdict is in `ell_sec` and `abort_reason`.
pub fn estimate(inp: &EstimateInputs) -> Result<EstimationResult, PostprocError> {
    if !(0.0..=1.0).contains(&inp.e_mu) {
        return Err(PostprocError::InvalidQBER(inp.e_mu));
    }
    if !(inp.eps_pa > 0.0 && inp.eps_pa < 1.0) {
        return Err(PostprocError::InvalidParameter(format!("ε_pa = {}", inp.eps_pa)));
    }
    let l_ver = inp.l_ver as f64;
    let ratio = if inp.q_mu_upper > 0.0 { inp.q1_lower / inp.q_mu_upper } else { 0.0 };
    let m1_lower = binomial_lower(l_ver, ratio, inp.z);
    let p0 = (-inp.mu).exp() * inp.y0_lower / 4.0;
    // A count cannot be negative, so zero is still a valid lower bound.
    let m0bar_lower = binomial_lower(inp.n_mu as f64, p0, inp.z).max(0.0);
    let pa_cost = 5.0 * (1.0 / inp.eps_pa).log2();

    let mut res = EstimationResult {
        z: inp.z,
        m1_lower,
        m0bar_lower,
        e1_upper: f64::NAN,
        leak: inp.leak,
        ell_sec: 0,
        abort_reason: None,
    };
    if !(m1_lower > 0.0) {
        res.abort_reason = Some("no single-photon detections can be guaranteed".into());
        return Ok(res);
    }
    let e1 = ((l_ver * inp.e_mu - m0bar_lower) / m1_lower).max(0.0);
    res.e1_upper = e1;
    if e1 > 0.5 {
        res.abort_reason = Some(format!("single-photon error bound {e1:.4} exceeds 0.5"));
        return Ok(res);
    }
    let raw = m1_lower * (1.0 - binary_entropy(e1)) - inp.leak - pa_cost;
    res.ell_sec = raw.floor() as i64;
    if res.ell_sec <= 0 {
        res.abort_reason = Some("secret length is not positive".into());
    }
    Ok(res)
}

/// [`estimate`], turning any abort into `AbortBlock`.
pub fn secret_length(inp: &EstimateInputs) -> Result<EstimationResult, PostprocError> {
    let res = estimate(inp)?;
    match &res.abort_reason {
        Some(reason) => Err(PostprocError::AbortBlock { reason: reason.clone(), ell_sec: res.ell_sec.min(0) }),
        None => Ok(res),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_median_and_domain() {
        assert!(quantile(3.5).unwrap().abs() < 1e-12);
        assert!(quantile(0.0).is_err());
        assert!(quantile(7.0).is_err());
    }

    #[test]
    fn entropy_points() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_width_interval() {
        let stats = DecoyStats { sent: [1000, 1000, 1000], detected: [100, 30, 5] };
        let it = Intensities { mu: 0.5, nu1: 0.1, nu2: 0.01 };
        let b = decoy_bounds(&stats, &it, 0.0).unwrap();
        assert_eq!(b.q_upper, b.q_hat);
        assert_eq!(b.q_lower, b.q_hat);
    }

    #[test]
    fn order_violation() {
        let stats = DecoyStats { sent: [1; 3], detected: [0; 3] };
        let it = Intensities { mu: 0.5, nu1: 0.3, nu2: 0.3 };
        assert_eq!(decoy_bounds(&stats, &it, 1.0), Err(PostprocError::IntensityOrderViolation));
    }
}

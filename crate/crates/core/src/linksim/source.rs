use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

/// Poisson photon number with the given mean.
pub fn sample_photon_number<R: Rng + ?Sized>(intensity: f64, rng: &mut R) -> u32 {
    if intensity <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(intensity).expect("positive mean").sample(rng);
    n as u32
}

/// Independent per-photon survival with probability `transmittance`.
pub fn thin<R: Rng + ?Sized>(n: u32, transmittance: f64, rng: &mut R) -> u32 {
    if n == 0 || transmittance <= 0.0 {
        return 0;
    }
    if transmittance >= 1.0 {
        return n;
    }
    if n <= 16 {
        return (0..n).filter(|_| rng.gen::<f64>() < transmittance).count() as u32;
    }
    Binomial::new(u64::from(n), transmittance).expect("valid binomial").sample(rng) as u32
}

/// Inverse-CDF table for fast repeated Poisson draws at one mean.
#[derive(Debug, Clone)]
pub struct PoissonTable {
    cdf: Vec<f64>,
    mean: f64,
}

impl PoissonTable {
    pub fn new(mean: f64) -> Self {
        let mut cdf = Vec::new();
        if mean > 0.0 && mean < 30.0 {
            let mut p = (-mean).exp();
            let mut acc = 0.0;
            for k in 0..200u32 {
                acc += p;
                cdf.push(acc);
                if 1.0 - acc < 1e-17 {
                    break;
                }
                p *= mean / f64::from(k + 1);
            }
        }
        Self { cdf, mean }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.mean <= 0.0 {
            return 0;
        }
        if self.cdf.is_empty() {
            return sample_photon_number(self.mean, rng);
        }
        let u: f64 = rng.gen();
        match self.cdf.iter().position(|&c| u < c) {
            Some(k) => k as u32,
            None => self.cdf.len() as u32,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_matches_poisson_mass() {
        let t = PoissonTable::new(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let zeros = (0..n).filter(|_| t.sample(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - (-0.5f64).exp()).abs() < 0.005);
    }

    #[test]
    fn thin_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(thin(7, 1.0, &mut rng), 7);
        assert_eq!(thin(7, 0.0, &mut rng), 0);
        assert!(thin(1000, 0.5, &mut rng) <= 1000);
    }
}

//! Machado-Mata simulation of counterfactual log-earnings samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::regress::quantreg::QuantileFit;
use crate::scalar::Scalar;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit key of a person identifier (FNV-1a).
pub fn person_key(id: &str) -> u64 {
    id.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Uniform draw for one person. Keyed by the covariate-source group, so every
/// simulation over the same rows reuses the same draws whatever the
/// coefficient source.
pub fn person_uniform(seed: u64, source_group: usize, person_key: u64) -> f64 {
    let k = mix(mix(mix(seed) ^ source_group as u64) ^ person_key);
    ChaCha8Rng::seed_from_u64(k).random::<f64>()
}

/// Quantile index for a uniform draw: ceil(99 u) clamped to 1..=99.
#[inline]
pub fn theta_of(u: f64) -> u32 {
    ((99.0 * u).ceil() as i64).clamp(1, 99) as u32
}

/// One simulated value per row of `x`: x_i' beta_theta_i, with theta_i drawn
/// from the person's keyed uniform.
pub fn simulate_mm<T: Scalar>(
    fit: &QuantileFit<T>,
    x: &Csr<T>,
    person_keys: &[u64],
    source_group: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if person_keys.len() != x.nrows() {
        return Err(Error::Other("person keys differ in length from design rows".into()));
    }
    let mut slot = [usize::MAX; 100];
    for (k, &t) in fit.thetas.iter().enumerate() {
        if (1..=99).contains(&t) {
            slot[t as usize] = k;
        }
    }
    if (1..=99).any(|t| slot[t] == usize::MAX) {
        return Err(Error::config("thetas", "simulation needs fits for every theta in 1..=99"));
    }
    Ok(person_keys
        .iter()
        .enumerate()
        .map(|(i, &key)| {
            let t = theta_of(person_uniform(seed, source_group, key));
            x.row_dot(i, &fit.beta[slot[t as usize]])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::quantreg::QrDiagnostic;

    fn const_fit(beta: Vec<f64>) -> QuantileFit<f64> {
        QuantileFit {
            thetas: (1..=99).collect(),
            beta: vec![beta; 99],
            diagnostics: (1..=99)
                .map(|t| QrDiagnostic {
                    theta: t,
                    iterations: 0,
                    converged: true,
                    polished: false,
                    objective: 0.0,
                })
                .collect(),
            dropped: vec![],
            n: 0,
        }
    }

    #[test]
    fn theta_bins() {
        assert_eq!(theta_of(0.0), 1);
        assert_eq!(theta_of(1.0 / 99.0), 1);
        assert_eq!(theta_of(0.5), 50);
        assert_eq!(theta_of(0.999999), 99);
    }

    #[test]
    fn degenerate_fit_reproduces_predictions() {
        let mut x = Csr::new(2);
        for i in 0..50 {
            x.push_row([(0, 1.0), (1, i as f64)]);
        }
        let keys: Vec<u64> = (0..50).collect();
        let s = simulate_mm(&const_fit(vec![1.0, 0.5]), &x, &keys, 0, 7).unwrap();
        for (i, v) in s.iter().enumerate() {
            assert_eq!(*v, 1.0 + 0.5 * i as f64);
        }
    }
}

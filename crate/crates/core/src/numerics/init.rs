use rand::Rng;

use super::Matrix;

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn within_bounds_and_seeded() {
        let a = glorot_uniform(16, 8, &mut ChaCha8Rng::seed_from_u64(7));
        let b = glorot_uniform(16, 8, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(a.as_slice().iter().all(|x| x.abs() <= limit));
    }
}

use rand::Rng;

use crate::{Error, Result};

/// A vector over {+1, -1}: local gradient signs or a detected majority vote.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v != 1 && **v != -1) {
            return Err(Error::invalid(format!("sign at index {i} is {v}, expected +1 or -1")));
        }
        Ok(Self(values))
    }

    pub fn filled(len: usize, value: i8) -> Result<Self> {
        Self::new(vec![value; len])
    }

    /// Signs of `values`, with exact zeros resolved to +1 or -1 uniformly at random.
    pub fn from_values<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> Self {
        Self(values.iter().map(|&v| sign_or_random(v, rng)).collect())
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<i8> {
        self.0.get(i).copied()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    /// Fraction of coordinates where `self` and `other` differ.
    pub fn disagreement(&self, other: &SignVector) -> f64 {
        assert_eq!(self.len(), other.len(), "sign vectors of different length");
        if self.is_empty() {
            return 0.0;
        }
        let diff = self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count();
        diff as f64 / self.len() as f64
    }
}

impl From<SignVector> for Vec<i8> {
    fn from(v: SignVector) -> Self {
        v.0
    }
}

/// `sign(x)` with `sign(0)` drawn uniformly from {+1, -1}.
pub fn sign_or_random<R: Rng + ?Sized>(x: f64, rng: &mut R) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rejects_values_outside_pm_one() {
        assert!(SignVector::new(vec![1, -1, 1]).is_ok());
        let err = SignVector::new(vec![1, 0, -1]).unwrap_err();
        assert!(err.to_string().contains("index 1"));
        assert!(SignVector::new(vec![2]).is_err());
    }

    #[test]
    fn zero_resolves_to_either_sign() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let plus = (0..n).filter(|_| sign_or_random(0.0, &mut rng) == 1).count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
        assert_eq!(sign_or_random(-0.3, &mut rng), -1);
        assert_eq!(sign_or_random(1e-300, &mut rng), 1);
    }

    #[test]
    fn disagreement_counts_mismatches() {
        let a = SignVector::new(vec![1, 1, -1, -1]).unwrap();
        let b = SignVector::new(vec![1, -1, -1, 1]).unwrap();
        assert_eq!(a.disagreement(&b), 0.5);
        assert_eq!(a.disagreement(&a.negated()), 1.0);
    }
}

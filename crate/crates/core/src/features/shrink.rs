use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{check_spd, SpdMatrix, SymmetricMatrix};

/// Ladder tried, in order, by [`Shrinkage::Auto`]. The final full shrinkage
/// always yields a scaled identity.
pub const AUTO_LADDER: [f64; 5] = [1e-8, 1e-6, 1e-4, 1e-2, 1e-1];

/// Regularisation toward the scaled identity `(trace/dim)·I`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ShrinkRepr", into = "ShrinkRepr")]
pub enum Shrinkage {
    Fixed(f64),
    /// Smallest coefficient of [`AUTO_LADDER`] that yields an SPD matrix.
    #[default]
    Auto,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShrinkRepr {
    Fixed(f64),
    Named(String),
}

impl TryFrom<ShrinkRepr> for Shrinkage {
    type Error = String;

    fn try_from(r: ShrinkRepr) -> std::result::Result<Self, String> {
        match r {
            ShrinkRepr::Fixed(g) if (0.0..=1.0).contains(&g) => Ok(Shrinkage::Fixed(g)),
            ShrinkRepr::Fixed(g) => Err(format!("shrinkage {g} outside [0, 1]")),
            ShrinkRepr::Named(s) if s == "auto" => Ok(Shrinkage::Auto),
            ShrinkRepr::Named(s) => Err(format!("unknown shrinkage `{s}`")),
        }
    }
}

impl From<Shrinkage> for ShrinkRepr {
    fn from(s: Shrinkage) -> Self {
        match s {
            Shrinkage::Fixed(g) => ShrinkRepr::Fixed(g),
            Shrinkage::Auto => ShrinkRepr::Named("auto".into()),
        }
    }
}

impl FromStr for Shrinkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Shrinkage::Auto);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| Error::parse("shrinkage", format!("expected `auto` or a number, got `{s}`")))?;
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::parse("shrinkage", format!("{g} outside [0, 1]")));
        }
        Ok(Shrinkage::Fixed(g))
    }
}

impl fmt::Display for Shrinkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shrinkage::Fixed(g) => write!(f, "{g}"),
            Shrinkage::Auto => f.write_str("auto"),
        }
    }
}

fn target_scale(c: &SymmetricMatrix) -> f64 {
    let mu = c.trace() / c.dim() as f64;
    // An all-zero (or non-positive trace) input shrinks toward the unit identity.
    if mu > 0.0 && mu.is_finite() {
        mu
    } else {
        1.0
    }
}

fn blend(c: &SymmetricMatrix, gamma: f64, mu: f64) -> SymmetricMatrix {
    if gamma == 0.0 {
        return c.clone();
    }
    let n = c.dim();
    let mut m: DMatrix<f64> = c.as_matrix() * (1.0 - gamma);
    for i in 0..n {
        m[(i, i)] += gamma * mu;
    }
    SymmetricMatrix::symmetrize(m)
}

/// `(1−γ)·C + γ·(trace(C)/dim)·I`. Zero entries off the diagonal stay exactly zero.
pub fn shrink(c: &SymmetricMatrix, shrinkage: Shrinkage) -> Result<SpdMatrix> {
    let mu = target_scale(c);
    // Blending shifts every eigenvalue affinely and keeps the eigenvectors,
    // so one decomposition serves every candidate coefficient.
    let eig = c.evd()?;
    let shifted = |g: f64| eig.map_values(|v| (1.0 - g) * v + g * mu);
    let gamma = match shrinkage {
        Shrinkage::Fixed(g) => {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::contract(format!("shrinkage {g} outside [0, 1]")));
            }
            g
        }
        Shrinkage::Auto => AUTO_LADDER
            .iter()
            .copied()
            .find(|&g| check_spd(&shifted(g)).is_ok())
            .unwrap_or(1.0),
    };
    SpdMatrix::with_evd(blend(c, gamma, mu), shifted(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::{is_spd, random_spd};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_shrinkage_is_identity_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_spd(&mut rng, 4, 10.0);
        let s = shrink(c.as_symmetric(), Shrinkage::Fixed(0.0)).unwrap();
        assert_eq!(s.as_matrix(), c.as_matrix());
    }

    #[test]
    fn full_shrinkage_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_spd(&mut rng, 4, 10.0);
        let s = shrink(c.as_symmetric(), Shrinkage::Fixed(1.0)).unwrap();
        let mu = c.as_matrix().trace() / 4.0;
        assert!((s.as_matrix() - DMatrix::identity(4, 4) * mu).norm() < 1e-14);
    }

    #[test]
    fn rank_one_becomes_spd() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let c = SymmetricMatrix::new(&x * x.transpose()).unwrap();
        assert!(!is_spd(&c));
        let s = shrink(&c, Shrinkage::Fixed(1e-4)).unwrap();
        assert!(s.evd().values().iter().all(|&v| v > 0.0));
        let a = shrink(&c, Shrinkage::Auto).unwrap();
        assert!(is_spd(a.as_symmetric()));
    }

    #[test]
    fn auto_uses_smallest_rung_for_well_conditioned_input() {
        let c = SymmetricMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let s = shrink(&c, Shrinkage::Auto).unwrap();
        let mu = 1.5;
        assert!((s.get(0, 0) - ((1.0 - 1e-8) * 2.0 + 1e-8 * mu)).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_floors_to_identity_scale() {
        let c = SymmetricMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let s = shrink(&c, Shrinkage::Auto).unwrap();
        assert!((s.get(0, 0) - 1e-8).abs() < 1e-20);
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn parse_and_serde() {
        assert_eq!("auto".parse::<Shrinkage>().unwrap(), Shrinkage::Auto);
        assert_eq!("0.25".parse::<Shrinkage>().unwrap(), Shrinkage::Fixed(0.25));
        assert!("1.5".parse::<Shrinkage>().is_err());
        assert_eq!(serde_json::to_string(&Shrinkage::Auto).unwrap(), "\"auto\"");
        let back: Shrinkage = serde_json::from_str("0.1").unwrap();
        assert_eq!(back, Shrinkage::Fixed(0.1));
        assert!(serde_json::from_str::<Shrinkage>("\"magic\"").is_err());
    }
}

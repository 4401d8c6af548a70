//! Mixed strategy profiles: one probability vector per player.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" and entry-range checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point in the product of simplices: `rows[i][gamma]` is the probability
/// that player `i` plays strategy `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixedProfile {
    rows: Vec<Vec<f64>>,
}

impl MixedProfile {
    /// Validates entries in `[0, 1]` (within [`SIMPLEX_TOL`]) and per-player
    /// sums equal to one.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("profile has no players".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() < 2 {
                return Err(Error::Dimension(format!(
                    "player {i} has {} strategies, need at least 2",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (g, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < -SIMPLEX_TOL || v > 1.0 + SIMPLEX_TOL {
                    return Err(Error::Domain(format!(
                        "probability p[{i}][{g}] = {v} outside [0, 1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Domain(format!(
                    "player {i} probabilities sum to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Builds the pure profile where player `i` plays `strategies[i]`.
    pub fn pure(shape: &[usize], strategies: &[usize]) -> Result<Self> {
        if shape.len() != strategies.len() {
            return Err(Error::Dimension(
                "strategy list length differs from player count".into(),
            ));
        }
        let rows = shape
            .iter()
            .zip(strategies)
            .enumerate()
            .map(|(i, (&k, &s))| {
                if s >= k {
                    return Err(Error::InvalidArgument(format!(
                        "player {i}: strategy {s} out of range (has {k})"
                    )));
                }
                let mut row = vec![0.0; k];
                row[s] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    /// Uniform profile: every player mixes equally over their strategies.
    pub fn uniform(shape: &[usize]) -> Result<Self> {
        let rows = shape
            .iter()
            .map(|&k| {
                if k < 2 {
                    return Err(Error::Dimension("player needs at least 2 strategies".into()));
                }
                Ok(vec![1.0 / k as f64; k])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    /// Convenience constructor for games where every player has two
    /// strategies: `firsts[i]` is the probability of strategy 0.
    pub fn from_first_coordinates(firsts: &[f64]) -> Result<Self> {
        Self::new(firsts.iter().map(|&x| vec![x, 1.0 - x]).collect())
    }

    pub fn player_count(&self) -> usize {
        self.rows.len()
    }

    pub fn strategy_count(&self, player: usize) -> usize {
        self.rows[player].len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn row(&self, player: usize) -> &[f64] {
        &self.rows[player]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, player: usize, strategy: usize) -> f64 {
        self.rows[player][strategy]
    }

    /// Replaces player `i`'s vector by the vertex at `strategy`.
    pub fn with_player_pure(&self, player: usize, strategy: usize) -> Self {
        let mut rows = self.rows.clone();
        for v in rows[player].iter_mut() {
            *v = 0.0;
        }
        rows[player][strategy] = 1.0;
        Self { rows }
    }

    /// Strategies with probability above `tol` for the given player.
    pub fn support(&self, player: usize, tol: f64) -> Vec<usize> {
        self.rows[player]
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > tol)
            .map(|(g, _)| g)
            .collect()
    }

    pub fn is_interior(&self, tol: f64) -> bool {
        self.rows.iter().flatten().all(|&v| v > tol && v < 1.0 - tol)
    }

    /// Snaps coordinates within `tol` of 0 or 1 and renormalizes each row.
    pub fn snapped(&self, tol: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut row: Vec<f64> = row
                    .iter()
                    .map(|&v| {
                        if v.abs() <= tol {
                            0.0
                        } else if (v - 1.0).abs() <= tol {
                            1.0
                        } else {
                            v
                        }
                    })
                    .collect();
                let sum: f64 = row.iter().sum();
                if sum > 0.0 {
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                row
            })
            .collect();
        Self { rows }
    }

    /// If every player is at a vertex, returns the per-player strategy ids.
    pub fn as_pure(&self) -> Option<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| {
                let mut idx = None;
                for (g, &v) in row.iter().enumerate() {
                    if v == 1.0 {
                        idx = Some(g);
                    } else if v != 0.0 {
                        return None;
                    }
                }
                idx
            })
            .collect()
    }

    /// Max-norm distance between two profiles of the same shape.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn flat_len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Concatenates all rows into one state vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for a given shape. Performs no
    /// simplex validation; intended for integrator internals.
    pub fn from_flat_unchecked(shape: &[usize], flat: &[f64]) -> Self {
        let mut rows = Vec::with_capacity(shape.len());
        let mut off = 0;
        for &k in shape {
            rows.push(flat[off..off + k].to_vec());
            off += k;
        }
        Self { rows }
    }
}

impl std::fmt::Display for MixedProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "(")?;
            for (g, v) in row.iter().enumerate() {
                if g > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v:.6}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Deterministic RNG for sample `index` of the stream owned by `master_seed`.
///
/// Each Monte Carlo sample gets its own ChaCha stream, so results do not
/// depend on scheduling order.
pub fn sample_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Draws one profile uniformly (Lebesgue) from the product of simplices with
/// the given per-player strategy counts. Deterministic for a fixed seed.
pub fn sample_uniform_profile(seed: u64, shape: &[usize]) -> Result<MixedProfile> {
    let mut rng = sample_rng(seed, 0);
    sample_uniform_profile_with(&mut rng, shape)
}

/// As [`sample_uniform_profile`] but drawing from a caller-supplied RNG.
pub fn sample_uniform_profile_with<R: Rng>(rng: &mut R, shape: &[usize]) -> Result<MixedProfile> {
    let rows = shape
        .iter()
        .map(|&k| {
            if k < 2 {
                return Err(Error::Dimension("player needs at least 2 strategies".into()));
            }
            // Flat Dirichlet via normalized unit exponentials.
            let mut row: Vec<f64> = (0..k)
                .map(|_| {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    -u.ln()
                })
                .collect();
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    MixedProfile::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sum() {
        assert!(MixedProfile::new(vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn rejects_negative_entry() {
        assert!(MixedProfile::new(vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn pure_and_as_pure_roundtrip() {
        let p = MixedProfile::pure(&[2, 3], &[1, 2]).unwrap();
        assert_eq!(p.as_pure(), Some(vec![1, 2]));
        assert_eq!(p.get(0, 1), 1.0);
    }

    #[test]
    fn snapping_renormalizes() {
        let p = MixedProfile::new(vec![vec![1e-12, 1.0 - 1e-12], vec![0.3, 0.7]]).unwrap();
        let s = p.snapped(1e-6);
        assert_eq!(s.row(0), &[0.0, 1.0]);
        assert_eq!(s.row(1), &[0.3, 0.7]);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_uniform_profile(42, &[2, 3]).unwrap();
        let b = sample_uniform_profile(42, &[2, 3]).unwrap();
        let c = sample_uniform_profile(43, &[2, 3]).unwrap();
        assert_eq!(a, b);
        assert!(a.max_distance(&c) > 0.0);
    }

    #[test]
    fn sampled_rows_sum_to_one_tightly() {
        for seed in 0..100 {
            let p = sample_uniform_profile(seed, &[3, 4, 2]).unwrap();
            for i in 0..p.player_count() {
                let sum: f64 = p.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "sum = {sum}");
            }
        }
    }
}

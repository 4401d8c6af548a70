//! Conserved and monotone quantities of the replicator flow, with drift
//! measurement along trajectories.

use crate::dynamics::{field_max_norm, Trajectory};
use crate::error::{Error, Result};
use crate::game::{Game, NetworkCoordinationGame, ObjectiveSense};
use crate::profile::MixedProfile;

/// Strict-inequality cutoff for membership in the Z-function index set.
/// At a fixed point the support strategies match the average only up to
/// rounding, so exact float comparison would misclassify them.
pub const Z_INDEX_TOL: f64 = 1e-9;

/// Field-norm threshold accepted as "is a fixed point" for reference
/// profiles.
pub const FIXED_POINT_TOL: f64 = 1e-8;

/// The game's Lyapunov potential (non-increasing for congestion games,
/// non-decreasing for coordination games).
pub fn potential(game: &dyn Game, p: &MixedProfile) -> Result<f64> {
    game.potential(p)
}

/// Relative entropy `I(p) = -sum_i sum_{g: q[i][g] > 0} q[i][g] ln(p[i][g] / q[i][g])`.
///
/// Nonnegative, zero iff `p` matches `q` on the support of `q`. Requires
/// `p > 0` wherever `q > 0`.
pub fn relative_entropy(q: &MixedProfile, p: &MixedProfile) -> Result<f64> {
    if q.shape() != p.shape() {
        return Err(Error::Dimension("profiles have different shapes".into()));
    }
    let mut total = 0.0;
    for i in 0..q.player_count() {
        for g in 0..q.strategy_count(i) {
            let qv = q.get(i, g);
            if qv > 0.0 {
                let pv = p.get(i, g);
                if pv <= 0.0 {
                    return Err(Error::Domain(format!(
                        "p[{i}][{g}] = {pv} but q[{i}][{g}] = {qv} > 0"
                    )));
                }
                total -= qv * (pv / qv).ln();
            }
        }
    }
    // Rounding can leave a tiny negative residue at p = q.
    Ok(total.max(0.0))
}

/// Local Lyapunov function certifying point-wise convergence near the fixed
/// point `q`:
/// `Z(p) = I(p) + 2 sum p[i][g]` over the strategies that are strictly worse
/// than player `i`'s average at `q`.
pub fn local_lyapunov_z(game: &dyn Game, q: &MixedProfile, p: &MixedProfile) -> Result<f64> {
    if field_max_norm(game, q)? >= 1e-9 {
        return Err(Error::Precondition(
            "q is not a fixed point (field norm >= 1e-9)".into(),
        ));
    }
    let entropy = relative_entropy(q, p)?;
    let table = game.expectations(q)?;
    let mut mass = 0.0;
    for i in 0..game.player_count() {
        let avg = table.averages[i];
        for g in 0..game.strategy_count(i) {
            let worse = match game.sense() {
                ObjectiveSense::Cost => table.values[i][g] - avg > Z_INDEX_TOL,
                ObjectiveSense::Utility => avg - table.values[i][g] > Z_INDEX_TOL,
            };
            if worse {
                mass += p.get(i, g);
            }
        }
    }
    Ok(entropy + 2.0 * mass)
}

/// Cross-entropy `H(q, p) = -sum_g q[g] ln p[g]` of one player's vectors.
/// Terms with `q[g] = 0` contribute zero; `q[g] > 0` with `p[g] = 0` is a
/// domain error.
fn cross_entropy(q: &[f64], p: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for (g, (&qv, &pv)) in q.iter().zip(p).enumerate() {
        if qv > 0.0 {
            if pv <= 0.0 {
                return Err(Error::Domain(format!(
                    "cross-entropy undefined: p[{g}] = {pv} with q[{g}] > 0"
                )));
            }
            h -= qv * pv.ln();
        }
    }
    Ok(h)
}

/// Signed bipartite cross-entropy
/// `sum_{i in left} H(q_i, p_i) - sum_{i in right} H(q_i, p_i)`,
/// conserved by the replicator flow on bipartite coordination games when
/// `q` is a fully mixed Nash equilibrium.
pub fn kl_bipartite_invariant(
    game: &NetworkCoordinationGame,
    q: &MixedProfile,
    partition: (&[usize], &[usize]),
    p: &MixedProfile,
) -> Result<f64> {
    let (left, right) = partition;
    game.check_bipartition(left, right)?;
    game.check_profile(q)?;
    game.check_profile(p)?;
    if !q.is_interior(0.0) {
        return Err(Error::Precondition("q must be fully mixed".into()));
    }
    if field_max_norm(game, q)? >= FIXED_POINT_TOL {
        return Err(Error::Precondition(
            "q is not a fixed point of the replicator flow".into(),
        ));
    }
    signed_cross_entropy(q, left, right, p)
}

fn signed_cross_entropy(
    q: &MixedProfile,
    left: &[usize],
    right: &[usize],
    p: &MixedProfile,
) -> Result<f64> {
    let mut value = 0.0;
    for &i in left {
        value += cross_entropy(q.row(i), p.row(i))?;
    }
    for &i in right {
        value -= cross_entropy(q.row(i), p.row(i))?;
    }
    Ok(value)
}

/// Difference of the log-odds of two leaves of a star:
/// `[ln p_i(0) - ln p_i(1)] - [ln p_j(0) - ln p_j(1)]`, conserved because
/// both leaves face the same center.
pub fn star_log_odds_invariant(p: &MixedProfile, leaf_i: usize, leaf_j: usize) -> Result<f64> {
    if leaf_i == leaf_j {
        return Err(Error::InvalidArgument("leaves must be distinct".into()));
    }
    for &leaf in &[leaf_i, leaf_j] {
        if leaf >= p.player_count() {
            return Err(Error::Dimension(format!("player {leaf} out of range")));
        }
        if p.strategy_count(leaf) != 2 {
            return Err(Error::Dimension(format!(
                "player {leaf} must have exactly 2 strategies"
            )));
        }
        let row = p.row(leaf);
        if !(row[0] > 0.0 && row[1] > 0.0) {
            return Err(Error::Domain(format!(
                "player {leaf} must have interior probabilities"
            )));
        }
    }
    let odds = |i: usize| p.get(i, 0).ln() - p.get(i, 1).ln();
    Ok(odds(leaf_i) - odds(leaf_j))
}

/// Conserved quantity of the `G(w)` flow in the projected `(p1, p2)`
/// coordinates (probabilities of the first strategy):
/// `w ln p1 + ln(1 - p1) - w ln p2 - ln(1 - p2)`.
///
/// This is the logarithm of `p1^w (1 - p1) / (p2^w (1 - p2))`; its zero
/// level set is exactly the union of the diagonal and the stable manifold
/// of the mixed equilibrium.
pub fn gw_invariant(p1: f64, p2: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    for (name, v) in [("p1", p1), ("p2", p2)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!(
                "{name} = {v} must lie strictly inside (0, 1)"
            )));
        }
    }
    Ok(w * p1.ln() + (1.0 - p1).ln() - w * p2.ln() - (1.0 - p2).ln())
}

/// [`gw_invariant`] evaluated on a two-player two-strategy profile, using
/// both stored coordinates of each player. Near a vertex the complementary
/// coordinate carries the vanishing probability at full relative precision,
/// where `1 - p` would lose it to cancellation.
pub fn gw_invariant_profile(p: &MixedProfile, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    if p.shape() != vec![2, 2] {
        return Err(Error::Dimension("expected a 2-player 2-strategy profile".into()));
    }
    if !p.is_interior(0.0) {
        return Err(Error::Domain("profile must be interior".into()));
    }
    Ok(w * p.get(0, 0).ln() + p.get(0, 1).ln() - w * p.get(1, 0).ln() - p.get(1, 1).ln())
}

/// The Stag Hunt conserved quantity
/// `(2/3) ln p1s + (1/3) ln p1h - (2/3) ln p2s - (1/3) ln p2h`
/// on a two-player two-strategy profile (strategy 0 = Stag).
pub fn stag_hunt_log_invariant(p: &MixedProfile) -> Result<f64> {
    if p.player_count() != 2 || p.shape() != vec![2, 2] {
        return Err(Error::Dimension("expected a 2-player 2-strategy profile".into()));
    }
    if !p.is_interior(0.0) {
        return Err(Error::Domain("profile must be interior".into()));
    }
    let term = |i: usize| (2.0 / 3.0) * p.get(i, 0).ln() + (1.0 / 3.0) * p.get(i, 1).ln();
    Ok(term(0) - term(1))
}

/// A quantity to evaluate along trajectories, with whatever reference data
/// its kind requires.
#[derive(Debug, Clone)]
pub enum InvariantSpec {
    /// The game potential (monotone, not conserved).
    Potential,
    /// Relative entropy to a reference profile (monotone near limits).
    RelativeEntropy { q: MixedProfile },
    /// Local Lyapunov function at a fixed point `q`.
    LocalZ { q: MixedProfile },
    /// Conserved: signed bipartite cross-entropy against a fully mixed Nash.
    KlBipartite {
        q: MixedProfile,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Conserved: log-odds difference of two star leaves.
    StarLogOdds { leaf_i: usize, leaf_j: usize },
    /// Conserved: `G(w)` log invariant of the two first-strategy
    /// probabilities.
    GwInvariant { w: f64 },
    /// Conserved: the Stag Hunt log combination.
    StagHuntLog,
}

impl InvariantSpec {
    /// Column/display name.
    pub fn name(&self) -> String {
        match self {
            InvariantSpec::Potential => "potential".into(),
            InvariantSpec::RelativeEntropy { .. } => "relative_entropy".into(),
            InvariantSpec::LocalZ { .. } => "local_Z".into(),
            InvariantSpec::KlBipartite { .. } => "kl_bipartite".into(),
            InvariantSpec::StarLogOdds { leaf_i, leaf_j } => {
                format!("star_log_odds_{leaf_i}_{leaf_j}")
            }
            InvariantSpec::GwInvariant { w } => format!("gw_invariant_w{w}"),
            InvariantSpec::StagHuntLog => "stag_hunt_log".into(),
        }
    }

    /// Whether the quantity is conserved (as opposed to merely monotone).
    pub fn is_conserved(&self) -> bool {
        matches!(
            self,
            InvariantSpec::KlBipartite { .. }
                | InvariantSpec::StarLogOdds { .. }
                | InvariantSpec::GwInvariant { .. }
                | InvariantSpec::StagHuntLog
        )
    }

    /// Validates reference data against the game (shapes, bipartition,
    /// fixed-point preconditions).
    pub fn validate(&self, game: &dyn Game) -> Result<()> {
        match self {
            InvariantSpec::Potential => Ok(()),
            InvariantSpec::RelativeEntropy { q } => game.check_profile(q),
            InvariantSpec::LocalZ { q } => {
                game.check_profile(q)?;
                if field_max_norm(game, q)? >= 1e-9 {
                    return Err(Error::Precondition(
                        "LocalZ reference q is not a fixed point".into(),
                    ));
                }
                Ok(())
            }
            InvariantSpec::KlBipartite { q, left, right } => {
                game.check_profile(q)?;
                if !q.is_interior(0.0) {
                    return Err(Error::Precondition("q must be fully mixed".into()));
                }
                if field_max_norm(game, q)? >= FIXED_POINT_TOL {
                    return Err(Error::Precondition("q is not a fixed point".into()));
                }
                let mut seen = vec![false; game.player_count()];
                for &v in left.iter().chain(right.iter()) {
                    if v >= seen.len() || seen[v] {
                        return Err(Error::Domain("invalid bipartition".into()));
                    }
                    seen[v] = true;
                }
                if !seen.iter().all(|&s| s) {
                    return Err(Error::Domain("bipartition must cover all players".into()));
                }
                Ok(())
            }
            InvariantSpec::StarLogOdds { leaf_i, leaf_j } => {
                if leaf_i == leaf_j || *leaf_i >= game.player_count()
                    || *leaf_j >= game.player_count()
                {
                    return Err(Error::InvalidArgument("invalid leaf pair".into()));
                }
                Ok(())
            }
            InvariantSpec::GwInvariant { w } => {
                if !(*w > 0.0) {
                    return Err(Error::Domain("w must be positive".into()));
                }
                if game.player_count() != 2 {
                    return Err(Error::Dimension("GwInvariant needs a 2-player game".into()));
                }
                Ok(())
            }
            InvariantSpec::StagHuntLog => {
                if game.player_count() != 2 {
                    return Err(Error::Dimension("StagHuntLog needs a 2-player game".into()));
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, game: &dyn Game, p: &MixedProfile) -> Result<f64> {
        match self {
            InvariantSpec::Potential => game.potential(p),
            InvariantSpec::RelativeEntropy { q } => relative_entropy(q, p),
            InvariantSpec::LocalZ { q } => local_lyapunov_z(game, q, p),
            InvariantSpec::KlBipartite { q, left, right } => {
                signed_cross_entropy(q, left, right, p)
            }
            InvariantSpec::StarLogOdds { leaf_i, leaf_j } => {
                star_log_odds_invariant(p, *leaf_i, *leaf_j)
            }
            InvariantSpec::GwInvariant { w } => gw_invariant_profile(p, *w),
            InvariantSpec::StagHuntLog => stag_hunt_log_invariant(p),
        }
    }

    /// Value series along a trajectory.
    pub fn series(&self, game: &dyn Game, trajectory: &Trajectory) -> Result<Vec<f64>> {
        trajectory.series(|p| self.evaluate(game, p))
    }

    /// Maximum deviation from the initial value over the whole trajectory.
    pub fn max_drift(&self, game: &dyn Game, trajectory: &Trajectory) -> Result<f64> {
        let values = self.series(game, trajectory)?;
        Ok(max_drift(&values))
    }
}

/// Max absolute deviation of a series from its first value.
pub fn max_drift(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return 0.0;
    };
    values
        .iter()
        .map(|v| (v - first).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, BoundaryMode, IntegratorOptions};
    use crate::game::{balls_bins, g_w_game, Game};
    use approx::assert_abs_diff_eq;

    #[test]
    fn potential_of_two_balls_two_bins_distinct() {
        let g = balls_bins(2, 2).unwrap();
        let p = MixedProfile::pure(&[2, 2], &[0, 1]).unwrap();
        assert_abs_diff_eq!(potential(&g, &p).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn potential_of_g2_both_stag() {
        let g = g_w_game(2.0).unwrap();
        let p = MixedProfile::pure(&[2, 2], &[0, 0]).unwrap();
        assert_abs_diff_eq!(potential(&g, &p).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn relative_entropy_examples() {
        let q = MixedProfile::new(vec![vec![2.0 / 3.0, 1.0 / 3.0]]).unwrap();
        assert_abs_diff_eq!(relative_entropy(&q, &q).unwrap(), 0.0, epsilon = 1e-12);

        let p = MixedProfile::new(vec![vec![0.5, 0.5]]).unwrap();
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(relative_entropy(&q, &p).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_entropy(&q, &p).unwrap(), 0.056633, epsilon = 1e-6);

        let zero = MixedProfile::new(vec![vec![0.0, 1.0]]).unwrap();
        assert!(matches!(relative_entropy(&q, &zero), Err(Error::Domain(_))));
    }

    #[test]
    fn z_is_zero_at_q_and_positive_near_pure() {
        let g = g_w_game(2.0).unwrap();
        let q = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_abs_diff_eq!(local_lyapunov_z(&g, &q, &q).unwrap(), 0.0, epsilon = 1e-9);

        let hare = MixedProfile::pure(&[2, 2], &[1, 1]).unwrap();
        let near = MixedProfile::from_first_coordinates(&[0.01, 0.015]).unwrap();
        let z = local_lyapunov_z(&g, &hare, &near).unwrap();
        assert!(z > 0.0, "Z = {z}");
    }

    #[test]
    fn z_requires_a_fixed_point() {
        let g = g_w_game(2.0).unwrap();
        let not_fixed = MixedProfile::from_first_coordinates(&[0.3, 0.9]).unwrap();
        assert!(matches!(
            local_lyapunov_z(&g, &not_fixed, &not_fixed),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn z_decreases_along_short_runs_near_mixed_equilibrium() {
        let g = g_w_game(2.0).unwrap();
        let q = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let psi_q = g.potential(&q).unwrap();
        // Points in a 1e-3 ball around q with lower potential (coordination
        // games increase the potential, so the local claim needs
        // Psi(p) < Psi(q)).
        let mut checked = 0;
        for (dx, dy) in [(8e-4, -9e-4), (-7e-4, 6e-4), (9e-4, -6e-4)] {
            let p0 =
                MixedProfile::from_first_coordinates(&[2.0 / 3.0 + dx, 2.0 / 3.0 + dy]).unwrap();
            if g.potential(&p0).unwrap() >= psi_q {
                continue;
            }
            let opts = IntegratorOptions {
                horizon: 0.5,
                ..IntegratorOptions::default()
            };
            let traj = integrate(&g, &p0, &opts).unwrap();
            let series = InvariantSpec::LocalZ { q: q.clone() }
                .series(&g, &traj)
                .unwrap();
            for w in series.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "Z increased: {} -> {}", w[0], w[1]);
            }
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn kl_bipartite_zero_at_symmetric_q() {
        let g = g_w_game(2.0).unwrap();
        let q = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let v = kl_bipartite_invariant(&g, &q, (&[0], &[1]), &q).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kl_bipartite_rejects_bad_partition_or_reference() {
        let g = g_w_game(2.0).unwrap();
        let q = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(kl_bipartite_invariant(&g, &q, (&[0, 1], &[]), &q).is_err());
        let not_fixed = MixedProfile::from_first_coordinates(&[0.5, 0.5]).unwrap();
        assert!(matches!(
            kl_bipartite_invariant(&g, &not_fixed, (&[0], &[1]), &q),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn kl_bipartite_drift_small_along_g2_run() {
        let g = g_w_game(2.0).unwrap();
        let q = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.31, 0.62]).unwrap();
        let opts = IntegratorOptions {
            horizon: 50.0,
            boundary: BoundaryMode::LogDomain,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..IntegratorOptions::default()
        };
        let traj = integrate(&g, &p0, &opts).unwrap();
        let spec = InvariantSpec::KlBipartite {
            q,
            left: vec![0],
            right: vec![1],
        };
        let drift = spec.max_drift(&g, &traj).unwrap();
        assert!(drift <= 1e-6, "drift = {drift}");
    }

    #[test]
    fn star_log_odds_examples() {
        let p = MixedProfile::new(vec![vec![0.4, 0.6], vec![0.4, 0.6], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(star_log_odds_invariant(&p, 0, 1).unwrap(), 0.0, epsilon = 1e-12);

        let p = MixedProfile::new(vec![vec![0.8, 0.2], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(
            star_log_odds_invariant(&p, 0, 1).unwrap(),
            4.0f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            star_log_odds_invariant(&p, 0, 1).unwrap(),
            1.386294,
            epsilon = 1e-6
        );

        assert!(star_log_odds_invariant(&p, 0, 0).is_err());
        let boundary =
            MixedProfile::new(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(star_log_odds_invariant(&boundary, 0, 1).is_err());
    }

    #[test]
    fn gw_invariant_zero_cases_and_domain() {
        assert_abs_diff_eq!(gw_invariant(0.37, 0.37, 2.5).unwrap(), 0.0, epsilon = 1e-12);
        assert!(gw_invariant(0.0, 0.5, 2.0).is_err());
        assert!(gw_invariant(0.5, 1.0, 2.0).is_err());
        assert!(gw_invariant(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn gw_drift_small_along_g3_run() {
        let g = g_w_game(3.0).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.55, 0.8]).unwrap();
        let opts = IntegratorOptions {
            horizon: 50.0,
            boundary: BoundaryMode::LogDomain,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            ..IntegratorOptions::default()
        };
        let traj = integrate(&g, &p0, &opts).unwrap();
        let drift = InvariantSpec::GwInvariant { w: 3.0 }
            .max_drift(&g, &traj)
            .unwrap();
        assert!(drift <= 1e-6, "drift = {drift}");
    }

    #[test]
    fn stag_hunt_log_matches_gw_form() {
        let p = MixedProfile::from_first_coordinates(&[0.3, 0.71]).unwrap();
        let sh = stag_hunt_log_invariant(&p).unwrap();
        let gw = gw_invariant(0.3, 0.71, 2.0).unwrap();
        assert_abs_diff_eq!(sh, gw / 3.0, epsilon = 1e-12);
    }
}

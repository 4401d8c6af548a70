//! Regions of attraction and average price of anarchy.
//!
//! Exact results for the Stag Hunt projection, polytope inner bounds for
//! the `G(w)` family, and a Monte Carlo estimator that integrates uniform
//! initial conditions to their limits.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{detect_limit, integrate, IntegratorOptions, LimitClass};
use crate::error::{Error, Result};
use crate::game::{social_objective, AnyGame, Game, ObjectiveSense};
use crate::profile::{sample_rng, sample_uniform_profile_with, MixedProfile};
use crate::star::detect_star;

/// Stable manifold of the Stag Hunt mixed equilibrium in the projected
/// `(p1s, p2s)` square: `y(p) = (1 - p + sqrt(1 + 2p - 3p^2)) / 2`.
/// Strictly decreasing from `y(0) = 1` to `y(1) = 0`.
pub fn stag_hunt_manifold(p1s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p1s) {
        return Err(Error::Domain(format!("p1s = {p1s} outside [0, 1]")));
    }
    let radicand = (1.0 + 2.0 * p1s - 3.0 * p1s * p1s).max(0.0);
    Ok(0.5 * (1.0 - p1s + radicand.sqrt()))
}

/// Derivative of [`stag_hunt_manifold`] on the open interval:
/// `y'(p) = (-1 + (1 - 3p) / sqrt(1 + 2p - 3p^2)) / 2`.
pub fn stag_hunt_manifold_slope(p1s: f64) -> Result<f64> {
    if !(p1s > 0.0 && p1s < 1.0) {
        return Err(Error::Domain(format!(
            "slope defined on (0, 1), got {p1s}"
        )));
    }
    let radicand = 1.0 + 2.0 * p1s - 3.0 * p1s * p1s;
    Ok(0.5 * (-1.0 + (1.0 - 3.0 * p1s) / radicand.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StagHuntRegion {
    Hare,
    Stag,
    Manifold,
}

/// Places an interior point relative to the manifold: below converges to
/// `(Hare, Hare)`, above to `(Stag, Stag)`, within `tol` of the curve is
/// reported as on the manifold.
pub fn stag_hunt_classify(p1s: f64, p2s: f64, tol: f64) -> Result<StagHuntRegion> {
    for v in [p1s, p2s] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("point ({p1s}, {p2s}) not interior")));
        }
    }
    let y = stag_hunt_manifold(p1s)?;
    Ok(if p2s < y - tol {
        StagHuntRegion::Hare
    } else if p2s > y + tol {
        StagHuntRegion::Stag
    } else {
        StagHuntRegion::Manifold
    })
}

/// Exact Lebesgue measures of the two Stag Hunt basins in `(0, 1)^2`:
/// `((9 + 2 sqrt(3) pi) / 27, (18 - 2 sqrt(3) pi) / 27)`.
pub fn stag_hunt_basin_measures() -> (f64, f64) {
    let root3pi = 2.0 * 3.0_f64.sqrt() * std::f64::consts::PI;
    ((9.0 + root3pi) / 27.0, (18.0 - root3pi) / 27.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GwRegion {
    Hare,
    Stag,
    Unknown,
}

/// Membership of `(p1s, p2s)` in the flow-invariant polytopes of `G(w)`:
/// `P_Hare = {p2 <= -w p1 + w} ∩ {p2 <= -p1/w + 1}` and
/// `P_Stag = {p2 >= -p1 + 2w/(w+1)}` inside the unit square. All but a
/// null set of each polytope converges to its equilibrium; the space
/// between is left `Unknown`.
pub fn gw_polytope_classify(p1s: f64, p2s: f64, w: f64) -> Result<GwRegion> {
    for v in [p1s, p2s] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("point ({p1s}, {p2s}) outside [0, 1]^2")));
        }
    }
    if !(w >= 1.0) {
        return Err(Error::Domain(format!("w must be >= 1, got {w}")));
    }
    if p2s <= -w * p1s + w && p2s <= -p1s / w + 1.0 {
        Ok(GwRegion::Hare)
    } else if p2s >= -p1s + 2.0 * w / (w + 1.0) {
        Ok(GwRegion::Stag)
    } else {
        Ok(GwRegion::Unknown)
    }
}

/// Average-price-of-anarchy bounds for `G(w)` from the polytope volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GwBounds {
    pub w: f64,
    pub lower: f64,
    pub upper: f64,
    /// Volume of the polytope that must reach `(Hare, Hare)`: `w / (w+1)`.
    pub mu_p_hare: f64,
    /// Volume of the polytope that must reach `(Stag, Stag)`: `2 / (w+1)^2`.
    pub mu_p_stag: f64,
}

/// `lower = w(w+1)^2 / (w(w+1)^2 - 2w + 2)`, `upper = (w^2+w) / (w^2+1)`.
pub fn gw_apoa_bounds(w: f64) -> Result<GwBounds> {
    if !(w >= 1.0) {
        return Err(Error::Domain(format!("w must be >= 1, got {w}")));
    }
    let square = (w + 1.0) * (w + 1.0);
    Ok(GwBounds {
        w,
        lower: w * square / (w * square - 2.0 * w + 2.0),
        upper: (w * w + w) / (w * w + 1.0),
        mu_p_hare: w / (w + 1.0),
        mu_p_stag: 2.0 / square,
    })
}

/// Options for Monte Carlo basin estimation.
#[derive(Debug, Clone)]
pub struct ApoaOptions {
    pub integrator: IntegratorOptions,
    pub snap_tol: f64,
    /// Optimum social objective; enumerated over pure profiles when absent.
    pub opt_value: Option<f64>,
    /// Largest pure-profile count the enumeration will attempt.
    pub max_enumeration: usize,
}

impl Default for ApoaOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            snap_tol: crate::dynamics::SNAP_TOL,
            opt_value: None,
            max_enumeration: 1_000_000,
        }
    }
}

/// Monte Carlo estimate of the average price of anarchy.
#[derive(Debug, Clone, Serialize)]
pub struct ApoaEstimate {
    /// Mean limit social cost over OPT (cost games) or OPT over mean limit
    /// social welfare (utility games); at least 1 up to sampling noise.
    pub estimate: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub samples: usize,
    /// Limit-label frequencies over all samples; together with
    /// `unresolved_fraction` these sum to 1.
    pub histogram: BTreeMap<String, f64>,
    pub unresolved_fraction: f64,
    pub opt_value: f64,
    /// Mean limit objective over the resolved samples.
    pub mean_objective: f64,
    pub seed: u64,
}

/// Optimal social objective over pure profiles: min social cost for
/// congestion games, max social welfare for coordination games.
pub fn optimal_objective(game: &dyn Game, max_enumeration: usize) -> Result<f64> {
    let shape = game.shape();
    let mut count: usize = 1;
    for &k in &shape {
        count = count.saturating_mul(k);
    }
    if count > max_enumeration {
        return Err(Error::Config(format!(
            "{count} pure profiles exceed the enumeration limit {max_enumeration}; supply the optimum explicitly"
        )));
    }
    let mut ids = vec![0usize; shape.len()];
    let mut best = match game.sense() {
        ObjectiveSense::Cost => f64::INFINITY,
        ObjectiveSense::Utility => f64::NEG_INFINITY,
    };
    loop {
        let p = MixedProfile::pure(&shape, &ids)?;
        let value = social_objective(game, &p)?;
        best = match game.sense() {
            ObjectiveSense::Cost => best.min(value),
            ObjectiveSense::Utility => best.max(value),
        };
        let mut done = true;
        for (slot, &k) in ids.iter_mut().zip(&shape) {
            *slot += 1;
            if *slot < k {
                done = false;
                break;
            }
            *slot = 0;
        }
        if done {
            break;
        }
    }
    Ok(best)
}

struct SampleOutcome {
    label: String,
    objective: f64,
    resolved: bool,
}

/// Integrates `n_samples` uniform initial conditions to their limits and
/// averages the limit social objective. Unresolved samples (horizon or
/// step budget exhausted, or a numerical failure) are excluded from the
/// mean and reported separately.
///
/// Sample `i` draws from an RNG stream keyed by `(master_seed, i)` and the
/// aggregation runs in index order (pairwise summation), so the result is
/// identical no matter how many worker threads run.
pub fn apoa_monte_carlo(
    game: &dyn Game,
    n_samples: usize,
    master_seed: u64,
    opts: &ApoaOptions,
) -> Result<ApoaEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    opts.integrator.validate()?;
    let opt_value = match opts.opt_value {
        Some(v) => v,
        None => optimal_objective(game, opts.max_enumeration)?,
    };
    if !(opt_value > 0.0) {
        return Err(Error::Config(format!(
            "optimal objective {opt_value} must be positive"
        )));
    }

    let shape = game.shape();
    let outcomes: Vec<SampleOutcome> = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<SampleOutcome> {
            let mut rng = sample_rng(master_seed, i as u64);
            let p0 = sample_uniform_profile_with(&mut rng, &shape)?;
            let traj = match integrate(game, &p0, &opts.integrator) {
                Ok(traj) => traj,
                Err(Error::Numerical { .. }) => {
                    return Ok(SampleOutcome {
                        label: "unresolved".into(),
                        objective: f64::NAN,
                        resolved: false,
                    })
                }
                Err(other) => return Err(other),
            };
            let report = detect_limit(&traj, opts.snap_tol);
            let resolved = !matches!(report.class, LimitClass::Unresolved);
            let objective = social_objective(game, &report.profile)?;
            Ok(SampleOutcome {
                label: report.label(game),
                objective,
                resolved,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let resolved_objectives: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.resolved)
        .map(|o| o.objective)
        .collect();
    let k = resolved_objectives.len();
    if k == 0 {
        return Err(Error::Config(
            "no sample resolved; increase the horizon or loosen the convergence threshold".into(),
        ));
    }
    let mean = pairwise_sum(&resolved_objectives) / k as f64;
    let variance = if k >= 2 {
        let sq: Vec<f64> = resolved_objectives
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .collect();
        pairwise_sum(&sq) / (k as f64 - 1.0)
    } else {
        0.0
    };
    let se_mean = (variance / k as f64).sqrt();

    const Z95: f64 = 1.959963984540054;
    let (estimate, std_error, ci95) = match game.sense() {
        ObjectiveSense::Cost => (
            mean / opt_value,
            se_mean / opt_value,
            (
                (mean - Z95 * se_mean) / opt_value,
                (mean + Z95 * se_mean) / opt_value,
            ),
        ),
        ObjectiveSense::Utility => {
            if !(mean > 0.0) {
                return Err(Error::Config(format!(
                    "mean limit welfare {mean} must be positive"
                )));
            }
            let lo_mean = mean - Z95 * se_mean;
            let upper = if lo_mean > 0.0 {
                opt_value / lo_mean
            } else {
                f64::INFINITY
            };
            (
                opt_value / mean,
                opt_value * se_mean / (mean * mean),
                (opt_value / (mean + Z95 * se_mean), upper),
            )
        }
    };

    let mut histogram = BTreeMap::new();
    let mut unresolved = 0usize;
    for o in &outcomes {
        if o.resolved {
            *histogram.entry(o.label.clone()).or_insert(0.0) += 1.0;
        } else {
            unresolved += 1;
        }
    }
    for v in histogram.values_mut() {
        *v /= n_samples as f64;
    }

    Ok(ApoaEstimate {
        estimate,
        std_error,
        ci95,
        samples: n_samples,
        histogram,
        unresolved_fraction: unresolved as f64 / n_samples as f64,
        opt_value,
        mean_objective: mean,
        seed: master_seed,
    })
}

/// Deterministic pairwise (tree) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// A labeled grid over a two-dimensional slice of the state space.
#[derive(Debug, Clone, Serialize)]
pub struct BasinRaster {
    /// Grid coordinates, shared by both axes (inclusive of 0 and 1).
    pub grid: Vec<f64>,
    /// `labels[row][col]` is the limit label at `(grid[col], grid[row])`.
    pub labels: Vec<Vec<String>>,
    pub x_axis: String,
    pub y_axis: String,
}

impl BasinRaster {
    pub fn resolution(&self) -> usize {
        self.grid.len()
    }

    /// Fraction of grid cells carrying `label`.
    pub fn fraction(&self, label: &str) -> f64 {
        let total = self.grid.len() * self.grid.len();
        let hits = self
            .labels
            .iter()
            .flatten()
            .filter(|l| l.as_str() == label)
            .count();
        hits as f64 / total as f64
    }

    /// CSV rows `x,y,label`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},label\n", self.x_axis, self.y_axis);
        for (r, row) in self.labels.iter().enumerate() {
            for (c, label) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", self.grid[c], self.grid[r], label));
            }
        }
        out
    }
}

enum RasterSlice {
    /// Axes are the two players' first-strategy probabilities.
    TwoPlayer,
    /// All leaves share the x coordinate; the center takes y.
    StarSlice { center: usize, players: usize },
}

/// Integrates every grid point of a 2D slice and labels its limit.
/// Supports two-player two-strategy games directly and star games through
/// the symmetric-leaf slice.
pub fn basin_raster(
    game: &AnyGame,
    resolution: usize,
    integrator: &IntegratorOptions,
    snap_tol: f64,
) -> Result<BasinRaster> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    integrator.validate()?;
    let shape = game.shape();
    let slice = if shape == vec![2, 2] {
        RasterSlice::TwoPlayer
    } else if let Some(star) = game.as_coordination().and_then(detect_star) {
        RasterSlice::StarSlice {
            center: star.center,
            players: shape.len(),
        }
    } else {
        return Err(Error::InvalidArgument(
            "raster slices require a 2-player 2-strategy game or a star".into(),
        ));
    };

    let grid: Vec<f64> = (0..resolution)
        .map(|i| i as f64 / (resolution - 1) as f64)
        .collect();
    let profile_at = |x: f64, y: f64| -> Result<MixedProfile> {
        match &slice {
            RasterSlice::TwoPlayer => MixedProfile::new(vec![vec![x, 1.0 - x], vec![y, 1.0 - y]]),
            RasterSlice::StarSlice { center, players } => {
                let rows = (0..*players)
                    .map(|i| {
                        if i == *center {
                            vec![y, 1.0 - y]
                        } else {
                            vec![x, 1.0 - x]
                        }
                    })
                    .collect();
                MixedProfile::new(rows)
            }
        }
    };

    let cells: Vec<(usize, usize)> = (0..resolution)
        .flat_map(|r| (0..resolution).map(move |c| (r, c)))
        .collect();
    let flat: Vec<String> = cells
        .par_iter()
        .map(|&(r, c)| -> Result<String> {
            let p0 = profile_at(grid[c], grid[r])?;
            match integrate(game, &p0, integrator) {
                Ok(traj) => Ok(detect_limit(&traj, snap_tol).label(game)),
                Err(Error::Numerical { .. }) => Ok("unresolved".into()),
                Err(other) => Err(other),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let labels: Vec<Vec<String>> = flat
        .chunks(resolution)
        .map(|chunk| chunk.to_vec())
        .collect();
    let (x_axis, y_axis) = match slice {
        RasterSlice::TwoPlayer => ("p_0_0".to_string(), "p_1_0".to_string()),
        RasterSlice::StarSlice { .. } => ("leaf_p0".to_string(), "center_p0".to_string()),
    };
    Ok(BasinRaster {
        grid,
        labels,
        x_axis,
        y_axis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::g_w_game;
    use approx::assert_abs_diff_eq;

    #[test]
    fn manifold_endpoints_and_fixed_point() {
        assert_abs_diff_eq!(stag_hunt_manifold(0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stag_hunt_manifold(1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            stag_hunt_manifold(2.0 / 3.0).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
        assert!(stag_hunt_manifold(1.5).is_err());
    }

    #[test]
    fn manifold_strictly_decreasing() {
        let mut prev = stag_hunt_manifold(0.0).unwrap();
        for i in 1..=1000 {
            let y = stag_hunt_manifold(i as f64 / 1000.0).unwrap();
            assert!(y < prev, "not decreasing at i = {i}");
            prev = y;
        }
    }

    #[test]
    fn manifold_solves_invariant_equation() {
        for p1 in [0.1, 0.25, 0.4, 0.55, 0.7, 0.9] {
            let p2 = stag_hunt_manifold(p1).unwrap();
            let residual = p1 * p1 * (1.0 - p1) - p2 * p2 * (1.0 - p2);
            assert_abs_diff_eq!(residual, 0.0, epsilon = 1e-12);
            // The conserved log form vanishes there too.
            let v = crate::invariants::gw_invariant(p1, p2, 2.0).unwrap();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn slope_matches_finite_differences() {
        for p1 in [0.15, 0.4, 0.66, 0.85] {
            let h = 1e-6;
            let fd = (stag_hunt_manifold(p1 + h).unwrap() - stag_hunt_manifold(p1 - h).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(stag_hunt_manifold_slope(p1).unwrap(), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            stag_hunt_classify(0.5, 0.5, 1e-9).unwrap(),
            StagHuntRegion::Hare
        );
        assert_abs_diff_eq!(stag_hunt_manifold(0.5).unwrap(), 0.809, epsilon = 1e-3);
        assert_eq!(
            stag_hunt_classify(0.9, 0.9, 1e-9).unwrap(),
            StagHuntRegion::Stag
        );
        assert_eq!(
            stag_hunt_classify(2.0 / 3.0, 2.0 / 3.0, 1e-9).unwrap(),
            StagHuntRegion::Manifold
        );
        assert!(stag_hunt_classify(0.0, 0.5, 1e-9).is_err());
    }

    #[test]
    fn exact_measures() {
        let (hare, stag) = stag_hunt_basin_measures();
        assert_abs_diff_eq!(hare, 0.7364, epsilon = 5e-5);
        assert_abs_diff_eq!(stag, 0.2636, epsilon = 5e-5);
        assert_abs_diff_eq!(hare + stag, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn polytope_examples() {
        assert_eq!(gw_polytope_classify(0.1, 0.1, 2.0).unwrap(), GwRegion::Hare);
        assert_eq!(gw_polytope_classify(0.95, 0.95, 2.0).unwrap(), GwRegion::Stag);
        assert_eq!(
            gw_polytope_classify(0.5, 0.8, 2.0).unwrap(),
            GwRegion::Unknown
        );
        assert!(gw_polytope_classify(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn bounds_examples() {
        let b = gw_apoa_bounds(1.0).unwrap();
        assert_abs_diff_eq!(b.lower, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.upper, 1.0, epsilon = 1e-15);

        let b = gw_apoa_bounds(2.0).unwrap();
        assert_abs_diff_eq!(b.lower, 1.125, epsilon = 1e-12);
        assert_abs_diff_eq!(b.upper, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(b.mu_p_hare, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.mu_p_stag, 2.0 / 9.0, epsilon = 1e-12);
        assert!(b.lower <= b.upper);
        assert!(gw_apoa_bounds(0.8).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let v: Vec<f64> = (0..1013).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert_abs_diff_eq!(pairwise_sum(&v), naive, epsilon = 1e-9);
    }

    #[test]
    fn small_apoa_run_on_g2() {
        let game = AnyGame::Coordination(g_w_game(2.0).unwrap());
        let est = apoa_monte_carlo(&game, 300, 7, &ApoaOptions::default()).unwrap();
        assert_abs_diff_eq!(est.opt_value, 4.0, epsilon = 1e-12);
        assert!(est.estimate >= 1.0 - 1e-9);
        assert!((est.estimate - 1.1518).abs() < 0.05, "estimate = {}", est.estimate);
        let mass: f64 = est.histogram.values().sum::<f64>() + est.unresolved_fraction;
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        assert!(est.histogram.contains_key("(Hare,Hare)"));
    }

    #[test]
    fn apoa_is_deterministic_per_seed() {
        let game = AnyGame::Coordination(g_w_game(2.0).unwrap());
        let a = apoa_monte_carlo(&game, 64, 11, &ApoaOptions::default()).unwrap();
        let b = apoa_monte_carlo(&game, 64, 11, &ApoaOptions::default()).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.histogram, b.histogram);
    }

    #[test]
    fn raster_corners_label_their_own_vertices() {
        let game = AnyGame::Coordination(g_w_game(2.0).unwrap());
        let raster = basin_raster(&game, 5, &IntegratorOptions::default(), 1e-6).unwrap();
        assert_eq!(raster.labels[0][0], "(Hare,Hare)"); // (0, 0)
        assert_eq!(raster.labels[4][4], "(Stag,Stag)"); // (1, 1)
        assert_eq!(raster.labels[0][4], "(Stag,Hare)"); // (1, 0)
        assert_eq!(raster.labels[4][0], "(Hare,Stag)"); // (0, 1)
        let csv = raster.to_csv();
        assert!(csv.starts_with("p_0_0,p_1_0,label\n"));
        assert_eq!(csv.lines().count(), 26);
    }

    #[test]
    fn optimal_objective_enumerates_small_games() {
        let game = AnyGame::Coordination(g_w_game(2.0).unwrap());
        assert_abs_diff_eq!(optimal_objective(&game, 100).unwrap(), 4.0, epsilon = 1e-12);
        let bb = crate::game::balls_bins(3, 3).unwrap();
        assert_abs_diff_eq!(optimal_objective(&bb, 100).unwrap(), 3.0, epsilon = 1e-12);
        assert!(matches!(
            optimal_objective(&bb, 10),
            Err(Error::Config(_))
        ));
    }
}

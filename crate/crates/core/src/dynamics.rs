//! Replicator vector field and trajectory integration on products of
//! simplices.

use crate::error::{Error, Result};
use crate::game::{Game, ObjectiveSense};
use crate::profile::MixedProfile;

/// Replicator field at `p`, same shape as the profile.
///
/// Costs: `f[i][g] = p[i][g] * (chat_i - c[i][g])`.
/// Utilities: `f[i][g] = p[i][g] * (u[i][g] - uhat_i)`.
pub fn replicator_field(game: &dyn Game, p: &MixedProfile) -> Result<Vec<Vec<f64>>> {
    let table = game.expectations(p)?;
    let sign = match game.sense() {
        ObjectiveSense::Cost => -1.0,
        ObjectiveSense::Utility => 1.0,
    };
    Ok((0..game.player_count())
        .map(|i| {
            let avg = table.averages[i];
            table.values[i]
                .iter()
                .zip(p.row(i))
                .map(|(&v, &q)| q * sign * (v - avg))
                .collect()
        })
        .collect())
}

/// Max-norm of the replicator field at `p`.
pub fn field_max_norm(game: &dyn Game, p: &MixedProfile) -> Result<f64> {
    Ok(replicator_field(game, p)?
        .iter()
        .flatten()
        .fold(0.0, |m, &v| m.max(v.abs())))
}

/// How the integrator keeps the state on the product of simplices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Integrate probabilities directly; clamp to `[0, 1]` and renormalize
    /// after every accepted step.
    Clamp,
    /// Integrate log-probabilities (interior starts only). Keeps the
    /// relative accuracy of vanishing coordinates, which conserved
    /// quantities of the flow depend on.
    LogDomain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Integration horizon; the run stops at this time if convergence was
    /// not declared earlier.
    pub horizon: f64,
    /// Field max-norm below which a step counts toward convergence;
    /// convergence is declared after three consecutive such steps.
    pub convergence_norm: f64,
    pub max_steps: usize,
    pub boundary: BoundaryMode,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            horizon: 1e4,
            convergence_norm: 1e-9,
            max_steps: 1_000_000,
            boundary: BoundaryMode::Clamp,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if self.convergence_norm <= 0.0 {
            return Err(Error::InvalidArgument(
                "convergence threshold must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Slack allowed on potential monotonicity checks, both inside the
    /// integrator and in downstream verification.
    pub fn monotonicity_slack(&self, potential: f64) -> f64 {
        10.0 * (self.abs_tol + self.rel_tol * potential.abs())
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub profile: MixedProfile,
    pub potential: f64,
    pub field_norm: f64,
}

/// Time-ordered samples of an integrated orbit plus diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Whether the convergence criterion (three consecutive steps with
    /// field norm below threshold) was met before the horizon.
    pub converged: bool,
    /// Largest distance any raw coordinate strayed outside `[0, 1]` before
    /// renormalization, over all accepted steps.
    pub max_boundary_excursion: f64,
    pub options: IntegratorOptions,
}

impl Trajectory {
    pub fn initial(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory is never empty")
    }

    /// Evaluates `f` on every sampled profile.
    pub fn series<F>(&self, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&MixedProfile) -> Result<f64>,
    {
        self.samples.iter().map(|s| f(&s.profile)).collect()
    }

    /// CSV export: `t,potential,field_norm,<named series>...,p_0_0,p_0_1,...`
    /// with one row per accepted sample. Extra columns must be sampled at
    /// the same points as the trajectory.
    pub fn to_csv(&self, extra: &[(String, Vec<f64>)]) -> Result<String> {
        for (name, series) in extra {
            if series.len() != self.samples.len() {
                return Err(Error::Dimension(format!(
                    "series {name} has {} values for {} samples",
                    series.len(),
                    self.samples.len()
                )));
            }
        }
        let shape = self.samples[0].profile.shape();
        let mut header = String::from("t,potential,field_norm");
        for (name, _) in extra {
            header.push(',');
            header.push_str(name);
        }
        for (i, &k) in shape.iter().enumerate() {
            for g in 0..k {
                header.push_str(&format!(",p_{i}_{g}"));
            }
        }
        let mut out = header;
        out.push('\n');
        for (row, sample) in self.samples.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}",
                fmt_f64(sample.t),
                fmt_f64(sample.potential),
                fmt_f64(sample.field_norm)
            ));
            for (_, series) in extra {
                out.push(',');
                out.push_str(&fmt_f64(series[row]));
            }
            for value in sample.profile.flatten() {
                out.push(',');
                out.push_str(&fmt_f64(value));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip formatting keeps files diffable and exact.
    format!("{v}")
}

struct FieldEval<'a> {
    game: &'a dyn Game,
    shape: Vec<usize>,
    sign: f64,
}

impl<'a> FieldEval<'a> {
    fn new(game: &'a dyn Game) -> Self {
        let sign = match game.sense() {
            ObjectiveSense::Cost => -1.0,
            ObjectiveSense::Utility => 1.0,
        };
        Self { game, shape: game.shape(), sign }
    }

    /// dp/dt in probability space.
    fn deriv_prob(&self, p_flat: &[f64], out: &mut [f64]) -> Result<()> {
        let p = MixedProfile::from_flat_unchecked(&self.shape, p_flat);
        let table = self.game.expectations(&p)?;
        let mut off = 0;
        for (i, &k) in self.shape.iter().enumerate() {
            let avg = table.averages[i];
            for g in 0..k {
                out[off + g] = p_flat[off + g] * self.sign * (table.values[i][g] - avg);
            }
            off += k;
        }
        Ok(())
    }

    /// d(ln p)/dt; the state is log-probabilities.
    fn deriv_log(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let mut p_flat = vec![0.0; y.len()];
        log_to_prob(&self.shape, y, &mut p_flat);
        let p = MixedProfile::from_flat_unchecked(&self.shape, &p_flat);
        let table = self.game.expectations(&p)?;
        let mut off = 0;
        for (i, &k) in self.shape.iter().enumerate() {
            let avg = table.averages[i];
            for g in 0..k {
                out[off + g] = self.sign * (table.values[i][g] - avg);
            }
            off += k;
        }
        Ok(())
    }
}

/// Converts per-player log-probabilities into normalized probabilities.
fn log_to_prob(shape: &[usize], y: &[f64], p: &mut [f64]) {
    let mut off = 0;
    for &k in shape {
        let row = &y[off..off + k];
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for g in 0..k {
            let v = (row[g] - m).exp();
            p[off + g] = v;
            sum += v;
        }
        for g in 0..k {
            p[off + g] /= sum;
        }
        off += k;
    }
}

// Dormand-Prince 5(4) coefficients.
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates the replicator flow from `p0`.
///
/// Every accepted step is recorded as a sample. A step is accepted when the
/// embedded error estimate passes the tolerance test *and* the game
/// potential did not move the wrong way beyond
/// [`IntegratorOptions::monotonicity_slack`]; violating steps are retried
/// with half the step size.
pub fn integrate(
    game: &dyn Game,
    p0: &MixedProfile,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    game.check_profile(p0)?;
    if opts.boundary == BoundaryMode::LogDomain && !p0.is_interior(0.0) {
        return Err(Error::Domain(
            "log-domain integration requires an interior starting profile".into(),
        ));
    }

    let eval = FieldEval::new(game);
    let shape = eval.shape.clone();
    let dim = p0.flat_len();

    // State vector: probabilities (clamp) or log-probabilities (log-domain).
    let mut y: Vec<f64> = match opts.boundary {
        BoundaryMode::Clamp => p0.flatten(),
        BoundaryMode::LogDomain => p0.flatten().iter().map(|&v| v.ln()).collect(),
    };
    let deriv = |y: &[f64], out: &mut [f64]| -> Result<()> {
        match opts.boundary {
            BoundaryMode::Clamp => eval.deriv_prob(y, out),
            BoundaryMode::LogDomain => eval.deriv_log(y, out),
        }
    };
    let current_profile = |y: &[f64]| -> MixedProfile {
        match opts.boundary {
            BoundaryMode::Clamp => MixedProfile::from_flat_unchecked(&shape, y),
            BoundaryMode::LogDomain => {
                let mut p = vec![0.0; y.len()];
                log_to_prob(&shape, y, &mut p);
                MixedProfile::from_flat_unchecked(&shape, &p)
            }
        }
    };

    let mut t = 0.0;
    let mut profile = current_profile(&y);
    let mut potential = game.potential(&profile)?;
    let mut field_norm = field_max_norm(game, &profile)?;
    let mut samples = vec![TrajectorySample {
        t,
        profile: profile.clone(),
        potential,
        field_norm,
    }];

    let mut converged = false;
    let mut quiet_steps = if field_norm < opts.convergence_norm { 1 } else { 0 };
    if quiet_steps >= 3 {
        converged = true;
    }

    let h_max: f64 = 10.0_f64.min(opts.horizon);
    let h_min = 1e-14 * opts.horizon.max(1.0);
    let mut h = 1e-3_f64.min(opts.horizon);
    let mut max_excursion = 0.0_f64;

    let mut k = vec![vec![0.0; dim]; 7];
    let mut y_stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let sense = game.sense();

    let mut steps = 0usize;
    while !converged && t < opts.horizon && steps < opts.max_steps {
        steps += 1;
        h = h.min(opts.horizon - t).max(h_min);

        // One embedded RK attempt at the current h. The field is
        // autonomous, so stage times are not needed.
        for stage in 0..7 {
            for d in 0..dim {
                let mut acc = 0.0;
                for s in 0..stage {
                    acc += A[stage][s] * k[s][d];
                }
                y_stage[d] = y[d] + h * acc;
            }
            deriv(&y_stage, &mut k[stage]).map_err(|e| numerical_failure(e, t, &samples))?;
        }
        let mut err_norm = 0.0_f64;
        for d in 0..dim {
            let mut v5 = 0.0;
            let mut v4 = 0.0;
            for s in 0..7 {
                v5 += B5[s] * k[s][d];
                v4 += B4[s] * k[s][d];
            }
            let new5 = y[d] + h * v5;
            let new4 = y[d] + h * v4;
            y5[d] = new5;
            let scale = opts.abs_tol + opts.rel_tol * y[d].abs().max(new5.abs());
            let e = ((new5 - new4) / scale).abs();
            err_norm = err_norm.max(e);
        }

        if !err_norm.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            // In log-domain a coordinate may race to -inf as the orbit
            // approaches a face; treat like an error-test failure.
            h *= 0.5;
            if h <= h_min {
                return Err(numerical_failure(
                    Error::Domain("non-finite state".into()),
                    t,
                    &samples,
                ));
            }
            continue;
        }

        if err_norm > 1.0 {
            let scale = (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0);
            h = (h * scale).max(h_min);
            continue;
        }

        // Error test passed; check potential monotonicity before accepting.
        let new_profile = current_profile(&y5);
        let new_potential = game
            .potential(&new_profile)
            .map_err(|e| numerical_failure(e, t, &samples))?;
        let slack = opts.monotonicity_slack(potential);
        let violates = match sense {
            ObjectiveSense::Cost => new_potential > potential + slack,
            ObjectiveSense::Utility => new_potential < potential - slack,
        };
        if violates && h > h_min {
            h = (h * 0.5).max(h_min);
            continue;
        }

        // Accept.
        t += h;
        match opts.boundary {
            BoundaryMode::Clamp => {
                for v in y5.iter() {
                    max_excursion = max_excursion.max(-v).max(v - 1.0);
                }
                let mut off = 0;
                for &kk in &shape {
                    let row = &mut y5[off..off + kk];
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = v.clamp(0.0, 1.0);
                        sum += *v;
                    }
                    if sum > 0.0 {
                        for v in row.iter_mut() {
                            *v /= sum;
                        }
                    }
                    off += kk;
                }
            }
            BoundaryMode::LogDomain => {
                let mut p = vec![0.0; dim];
                log_to_prob(&shape, &y5, &mut p);
                let mut off = 0;
                for &kk in &shape {
                    let lse: f64 = {
                        let row = &y5[off..off + kk];
                        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
                    };
                    for v in y5[off..off + kk].iter_mut() {
                        *v -= lse;
                    }
                    off += kk;
                }
            }
        }
        std::mem::swap(&mut y, &mut y5);
        profile = current_profile(&y);
        potential = game
            .potential(&profile)
            .map_err(|e| numerical_failure(e, t, &samples))?;
        field_norm =
            field_max_norm(game, &profile).map_err(|e| numerical_failure(e, t, &samples))?;
        if !potential.is_finite() || !field_norm.is_finite() {
            return Err(numerical_failure(
                Error::Domain("non-finite diagnostics".into()),
                t,
                &samples,
            ));
        }
        samples.push(TrajectorySample {
            t,
            profile: profile.clone(),
            potential,
            field_norm,
        });

        if field_norm < opts.convergence_norm {
            quiet_steps += 1;
            if quiet_steps >= 3 {
                converged = true;
            }
        } else {
            quiet_steps = 0;
        }

        let scale = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h = (h * scale).min(h_max);
    }

    Ok(Trajectory {
        samples,
        converged,
        max_boundary_excursion: max_excursion,
        options: *opts,
    })
}

fn numerical_failure(err: Error, t: f64, samples: &[TrajectorySample]) -> Error {
    match err {
        e @ Error::Numerical { .. } => e,
        other => {
            let last = samples.last().expect("at least the initial sample exists");
            Error::Numerical {
                t,
                message: other.to_string(),
                last_good: Box::new((last.t, last.profile.clone())),
            }
        }
    }
}

/// How a limit point was classified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LimitClass {
    /// All players snapped to vertices; carries the strategy ids.
    Pure(Vec<usize>),
    /// Residual field norm below the convergence threshold at a non-vertex.
    Mixed,
    Unresolved,
}

/// Classified endpoint of a trajectory. Nash, weak-stability, and spectral
/// certificates start out empty and are filled by the equilibria module.
#[derive(Debug, Clone)]
pub struct LimitReport {
    pub profile: MixedProfile,
    pub class: LimitClass,
    pub residual_field_norm: f64,
    pub nash: Option<bool>,
    pub weakly_stable: Option<bool>,
    pub stability: Option<crate::equilibria::StabilityReport>,
}

impl LimitReport {
    /// Human-readable label: `"(Stag,Hare)"`, `"mixed"`, or `"unresolved"`.
    pub fn label(&self, game: &dyn Game) -> String {
        match &self.class {
            LimitClass::Pure(ids) => {
                let names: Vec<String> = ids
                    .iter()
                    .enumerate()
                    .map(|(i, &g)| game.strategy_name(i, g))
                    .collect();
                format!("({})", names.join(","))
            }
            LimitClass::Mixed => "mixed".into(),
            LimitClass::Unresolved => "unresolved".into(),
        }
    }
}

/// Snaps the final profile of `trajectory` and classifies it.
pub fn detect_limit(trajectory: &Trajectory, snap_tol: f64) -> LimitReport {
    let last = trajectory.last();
    let snapped = last.profile.snapped(snap_tol);
    let class = match snapped.as_pure() {
        Some(ids) => LimitClass::Pure(ids),
        None if last.field_norm < trajectory.options.convergence_norm => LimitClass::Mixed,
        None => LimitClass::Unresolved,
    };
    LimitReport {
        profile: snapped,
        class,
        residual_field_norm: last.field_norm,
        nash: None,
        weakly_stable: None,
        stability: None,
    }
}

/// Default snap tolerance for limit classification.
pub const SNAP_TOL: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{balls_bins, g_w_game};
    use approx::assert_abs_diff_eq;

    #[test]
    fn field_vanishes_at_uniform_balls_bins() {
        let g = balls_bins(2, 2).unwrap();
        let p = MixedProfile::uniform(&[2, 2]).unwrap();
        let f = replicator_field(&g, &p).unwrap();
        for row in f {
            for v in row {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn field_vanishes_at_g2_mixed_equilibrium() {
        let g = g_w_game(2.0).unwrap();
        let p = MixedProfile::from_first_coordinates(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(field_max_norm(&g, &p).unwrap() < 1e-15);
    }

    #[test]
    fn zero_probability_coordinate_stays_zero() {
        let g = g_w_game(2.0).unwrap();
        let p = MixedProfile::new(vec![vec![0.0, 1.0], vec![0.3, 0.7]]).unwrap();
        let f = replicator_field(&g, &p).unwrap();
        assert_eq!(f[0][0], 0.0);
    }

    #[test]
    fn g2_from_low_corner_converges_to_hare() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.2, 0.2]).unwrap();
        let traj = integrate(&g, &p0, &IntegratorOptions::default()).unwrap();
        assert!(traj.converged);
        let report = detect_limit(&traj, SNAP_TOL);
        assert_eq!(report.class, LimitClass::Pure(vec![1, 1]));
        assert_eq!(report.label(&g), "(Hare,Hare)");
    }

    #[test]
    fn vertex_start_is_constant() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::pure(&[2, 2], &[0, 0]).unwrap();
        let traj = integrate(&g, &p0, &IntegratorOptions::default()).unwrap();
        assert!(traj.converged);
        for s in &traj.samples {
            assert_eq!(s.profile.max_distance(&p0), 0.0);
        }
    }

    #[test]
    fn times_strictly_increase_and_potential_monotone() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.41, 0.87]).unwrap();
        let traj = integrate(&g, &p0, &IntegratorOptions::default()).unwrap();
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
            // Coordination: potential non-decreasing.
            let slack = traj.options.monotonicity_slack(w[0].potential);
            assert!(w[1].potential >= w[0].potential - slack);
        }
        assert!(traj.max_boundary_excursion <= 1e-6);
    }

    #[test]
    fn unresolved_when_truncated_early() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.41, 0.55]).unwrap();
        let opts = IntegratorOptions {
            horizon: 1e-3,
            ..IntegratorOptions::default()
        };
        let traj = integrate(&g, &p0, &opts).unwrap();
        assert!(!traj.converged);
        let report = detect_limit(&traj, SNAP_TOL);
        assert_eq!(report.class, LimitClass::Unresolved);
    }

    #[test]
    fn snapping_to_pure_label() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::new(vec![
            vec![1e-12, 1.0 - 1e-12],
            vec![1e-12, 1.0 - 1e-12],
        ])
        .unwrap();
        let traj = integrate(&g, &p0, &IntegratorOptions::default()).unwrap();
        let report = detect_limit(&traj, SNAP_TOL);
        assert_eq!(report.label(&g), "(Hare,Hare)");
    }

    #[test]
    fn csv_export_has_expected_header() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::from_first_coordinates(&[0.3, 0.4]).unwrap();
        let opts = IntegratorOptions {
            horizon: 1.0,
            ..IntegratorOptions::default()
        };
        let traj = integrate(&g, &p0, &opts).unwrap();
        let csv = traj
            .to_csv(&[("inv".to_string(), vec![0.0; traj.samples.len()])])
            .unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "t,potential,field_norm,inv,p_0_0,p_0_1,p_1_0,p_1_1");
        assert_eq!(csv.lines().count(), traj.samples.len() + 1);
    }

    #[test]
    fn log_domain_requires_interior_start() {
        let g = g_w_game(2.0).unwrap();
        let p0 = MixedProfile::pure(&[2, 2], &[0, 0]).unwrap();
        let opts = IntegratorOptions {
            boundary: BoundaryMode::LogDomain,
            ..IntegratorOptions::default()
        };
        assert!(matches!(integrate(&g, &p0, &opts), Err(Error::Domain(_))));
    }
}

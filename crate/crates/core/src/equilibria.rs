//! Fixed-point classification: Nash certificates, weak stability, spectral
//! stability, and the balls-and-bins special results.

use nalgebra::{Complex, DMatrix, DVector};

use crate::dynamics::{field_max_norm, replicator_field, LimitReport};
use crate::error::{Error, Result};
use crate::game::{balls_bins, Game, NetworkCoordinationGame, ObjectiveSense};
use crate::profile::MixedProfile;

/// Real parts above this count as genuine instability; smaller magnitudes
/// are treated as central directions (equilibrium continua produce exact
/// zero eigenvalues that arrive as rounding noise).
pub const SPECTRAL_TOL: f64 = 1e-6;

/// Default tolerance for Nash and weak-stability value comparisons.
pub const NASH_TOL: f64 = 1e-7;

/// Per-player Nash flags plus the worst deviation found.
#[derive(Debug, Clone)]
pub struct NashCertificate {
    pub is_nash: bool,
    pub player_flags: Vec<bool>,
    /// `(player, strategy, gap)` of the largest support-strategy gap to the
    /// player's best value, when any exceeds the tolerance.
    pub worst_violation: Option<(usize, usize, f64)>,
}

/// A profile is Nash iff every support strategy is within `tol` of the
/// player's best achievable value (which also means no off-support strategy
/// improves on it).
pub fn is_nash(game: &dyn Game, p: &MixedProfile, tol: f64) -> Result<NashCertificate> {
    game.check_profile(p)?;
    let table = game.expectations(p)?;
    let mut player_flags = Vec::with_capacity(game.player_count());
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..game.player_count() {
        let best = table.best_value(game.sense(), i);
        let mut ok = true;
        for g in 0..game.strategy_count(i) {
            if p.get(i, g) <= 0.0 {
                continue;
            }
            let gap = match game.sense() {
                ObjectiveSense::Cost => table.values[i][g] - best,
                ObjectiveSense::Utility => best - table.values[i][g],
            };
            if gap > tol {
                ok = false;
                if worst.map_or(true, |(_, _, w)| gap > w) {
                    worst = Some((i, g, gap));
                }
            }
        }
        player_flags.push(ok);
    }
    Ok(NashCertificate {
        is_nash: player_flags.iter().all(|&f| f),
        player_flags,
        worst_violation: worst,
    })
}

/// The indifference that failed: fixing `fixed_player` to `fixed_strategy`
/// leaves `observer` with different values on two support strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakStabilityWitness {
    pub fixed_player: usize,
    pub fixed_strategy: usize,
    pub observer: usize,
    pub strategy_a: usize,
    pub strategy_b: usize,
    pub value_a: f64,
    pub value_b: f64,
}

#[derive(Debug, Clone)]
pub struct WeaklyStableReport {
    pub holds: bool,
    pub witness: Option<WeakStabilityWitness>,
}

/// Weak stability of a Nash equilibrium: for every pair of randomizing
/// players `(i, j)` and every strategy in `i`'s support, fixing `i` to that
/// strategy leaves `j` indifferent across `j`'s support (within `tol`).
pub fn is_weakly_stable(game: &dyn Game, p: &MixedProfile, tol: f64) -> Result<WeaklyStableReport> {
    let cert = is_nash(game, p, tol)?;
    if !cert.is_nash {
        return Err(Error::Precondition(
            "weak stability is defined for Nash equilibria".into(),
        ));
    }
    let supports: Vec<Vec<usize>> = (0..game.player_count())
        .map(|i| p.support(i, 0.0))
        .collect();
    let randomizing: Vec<usize> = (0..game.player_count())
        .filter(|&i| supports[i].len() >= 2)
        .collect();
    for &i in &randomizing {
        for &gamma in &supports[i] {
            let fixed = p.with_player_pure(i, gamma);
            let table = game.expectations(&fixed)?;
            for &j in &randomizing {
                if j == i {
                    continue;
                }
                let first = supports[j][0];
                for &delta in &supports[j][1..] {
                    let a = table.values[j][first];
                    let b = table.values[j][delta];
                    if (a - b).abs() > tol {
                        return Ok(WeaklyStableReport {
                            holds: false,
                            witness: Some(WeakStabilityWitness {
                                fixed_player: i,
                                fixed_strategy: gamma,
                                observer: j,
                                strategy_a: first,
                                strategy_b: delta,
                                value_a: a,
                                value_b: b,
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(WeaklyStableReport {
        holds: true,
        witness: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityLabel {
    Stable,
    Unstable,
}

/// Spectrum of the projected Jacobian at a fixed point.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub label: StabilityLabel,
    pub max_real_part: f64,
}

/// Classifies a fixed point by the eigenvalues of the reduced Jacobian.
///
/// Per player, one support coordinate is eliminated by the simplex
/// constraint; the remaining field is differentiated by central differences
/// (step `1e-6`). Unstable iff some eigenvalue has real part above `tol`.
pub fn classify_stability(game: &dyn Game, q: &MixedProfile, tol: f64) -> Result<StabilityReport> {
    game.check_profile(q)?;
    if field_max_norm(game, q)? >= 1e-9 {
        return Err(Error::Precondition(
            "q is not a fixed point (field norm >= 1e-9)".into(),
        ));
    }
    let shape = game.shape();
    // Anchor per player: the first strategy with positive probability.
    let anchors: Vec<usize> = (0..game.player_count())
        .map(|i| {
            q.row(i)
                .iter()
                .position(|&v| v > 0.0)
                .expect("rows sum to one")
        })
        .collect();
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for i in 0..game.player_count() {
        for g in 0..shape[i] {
            if g != anchors[i] {
                coords.push((i, g));
            }
        }
    }
    let m = coords.len();

    let reduced_field = |x: &[f64]| -> Result<Vec<f64>> {
        let mut flat = vec![0.0; shape.iter().sum()];
        let mut offsets = vec![0usize; shape.len()];
        let mut off = 0;
        for (i, &k) in shape.iter().enumerate() {
            offsets[i] = off;
            off += k;
        }
        for (idx, &(i, g)) in coords.iter().enumerate() {
            flat[offsets[i] + g] = x[idx];
        }
        for (i, &k) in shape.iter().enumerate() {
            let others: f64 = (0..k)
                .filter(|&g| g != anchors[i])
                .map(|g| flat[offsets[i] + g])
                .sum();
            flat[offsets[i] + anchors[i]] = 1.0 - others;
        }
        let p = MixedProfile::from_flat_unchecked(&shape, &flat);
        let field = replicator_field(game, &p)?;
        Ok(coords.iter().map(|&(i, g)| field[i][g]).collect())
    };

    let x0: Vec<f64> = coords.iter().map(|&(i, g)| q.get(i, g)).collect();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[col] += h;
        xm[col] -= h;
        let fp = reduced_field(&xp)?;
        let fm = reduced_field(&xm)?;
        for row in 0..m {
            jac[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }

    let eigenvalues: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let label = if max_real_part > tol {
        StabilityLabel::Unstable
    } else {
        StabilityLabel::Stable
    };
    Ok(StabilityReport {
        eigenvalues,
        label,
        max_real_part,
    })
}

/// Under the distinct-entries assumption, checks that the randomizing
/// players of `p` form an independent set of the game graph.
pub fn randomized_independent_set_check(
    game: &NetworkCoordinationGame,
    p: &MixedProfile,
) -> Result<bool> {
    game.check_profile(p)?;
    if !game.has_distinct_entries() {
        return Err(Error::Precondition(
            "edge matrices must have distinct entries in every row and column".into(),
        ));
    }
    let randomized: Vec<bool> = (0..game.player_count())
        .map(|i| p.support(i, 0.0).len() >= 2)
        .collect();
    Ok(game
        .edges()
        .iter()
        .all(|e| !(randomized[e.i] && randomized[e.j])))
}

/// Exhaustively enumerates the weakly stable Nash equilibria of
/// `balls_bins(n, n)` by support pattern. For each pattern the indifference
/// conditions form a square linear system (loads are linear in the
/// probabilities); solutions outside the simplex are discarded, and the
/// survivors are filtered by the Nash and weak-stability certificates.
pub fn enumerate_weakly_stable_supports(n: usize) -> Result<Vec<MixedProfile>> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 balls".into()));
    }
    if n > 4 {
        return Err(Error::Capacity(format!(
            "support enumeration is exhaustive; n = {n} exceeds the supported 4"
        )));
    }
    let game = balls_bins(n, n)?;
    let supports: Vec<Vec<usize>> = (1..(1u32 << n))
        .map(|mask| (0..n).filter(|&b| mask & (1 << b) != 0).collect())
        .collect();

    let mut found: Vec<MixedProfile> = Vec::new();
    let mut pattern = vec![0usize; n];
    loop {
        if let Some(p) = solve_support_pattern(n, &supports, &pattern) {
            let nash = is_nash(&game, &p, NASH_TOL)?;
            if nash.is_nash
                && is_weakly_stable(&game, &p, NASH_TOL)?.holds
                && found.iter().all(|q| q.max_distance(&p) > 1e-6)
            {
                found.push(p);
            }
        }
        // Odometer over support patterns.
        let mut done = true;
        for slot in pattern.iter_mut() {
            *slot += 1;
            if *slot < supports.len() {
                done = false;
                break;
            }
            *slot = 0;
        }
        if done {
            break;
        }
    }
    Ok(found)
}

/// Solves the indifference system on one support pattern; `None` when the
/// solution is outside the simplex or the system is inconsistent.
fn solve_support_pattern(
    n: usize,
    supports: &[Vec<usize>],
    pattern: &[usize],
) -> Option<MixedProfile> {
    let sets: Vec<&Vec<usize>> = pattern.iter().map(|&s| &supports[s]).collect();
    let mut var_index = vec![vec![usize::MAX; n]; n];
    let mut vars = Vec::new();
    for (i, set) in sets.iter().enumerate() {
        for &g in set.iter() {
            var_index[i][g] = vars.len();
            vars.push((i, g));
        }
    }
    let n_vars = vars.len();
    let n_eqs = n + sets.iter().map(|s| s.len() - 1).sum::<usize>();
    let mut a = DMatrix::<f64>::zeros(n_eqs, n_vars);
    let mut b = DVector::<f64>::zeros(n_eqs);
    let mut row = 0;
    for (i, set) in sets.iter().enumerate() {
        for &g in set.iter() {
            a[(row, var_index[i][g])] = 1.0;
        }
        b[row] = 1.0;
        row += 1;
    }
    // Equal expected loads seen by player i on its support: the load of bin
    // g excluding i is sum_{j != i} p[j][g].
    for (i, set) in sets.iter().enumerate() {
        let g0 = set[0];
        for &g in &set[1..] {
            for j in 0..n {
                if j == i {
                    continue;
                }
                if var_index[j][g] != usize::MAX {
                    a[(row, var_index[j][g])] += 1.0;
                }
                if var_index[j][g0] != usize::MAX {
                    a[(row, var_index[j][g0])] -= 1.0;
                }
            }
            row += 1;
        }
    }

    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-12).ok()?;
    if (&a * &sol - &b).amax() > 1e-8 {
        return None;
    }
    let mut rows = vec![vec![0.0; n]; n];
    for (idx, &(i, g)) in vars.iter().enumerate() {
        let v = sol[idx];
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return None;
        }
        rows[i][g] = v.clamp(0.0, 1.0);
    }
    for r in rows.iter_mut() {
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return None;
        }
        for v in r.iter_mut() {
            *v /= sum;
        }
        // Tiny numerical dust would otherwise register as support.
        for v in r.iter_mut() {
            if *v < 1e-10 {
                *v = 0.0;
            }
        }
        let sum: f64 = r.iter().sum();
        for v in r.iter_mut() {
            *v /= sum;
        }
    }
    MixedProfile::new(rows).ok()
}

/// One member of the uncountable Nash family of `balls_bins(n, n)` for
/// `n >= 4`: four players share the first four bins with mixing controlled
/// by `x` in `[1/4, 3/4]`, everyone else sits on their own bin.
pub fn uncountable_family(n: usize, x: f64) -> Result<MixedProfile> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "the family needs at least 4 players, got {n}"
        )));
    }
    if !(0.25..=0.75).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [1/4, 3/4]")));
    }
    let mut rows = vec![vec![0.0; n]; n];
    rows[0][0] = x;
    rows[0][1] = 1.0 - x;
    rows[1][0] = 0.5;
    rows[1][2] = 0.5;
    rows[2][1] = 0.5;
    rows[2][3] = 0.5;
    rows[3][2] = x;
    rows[3][3] = 1.0 - x;
    for i in 4..n {
        rows[i][i] = 1.0;
    }
    MixedProfile::new(rows)
}

/// Fills the Nash, weak-stability, and spectral fields of a limit report.
pub fn annotate_limit(game: &dyn Game, report: &mut LimitReport, tol: f64) -> Result<()> {
    let cert = is_nash(game, &report.profile, tol)?;
    report.nash = Some(cert.is_nash);
    report.weakly_stable = if cert.is_nash {
        Some(is_weakly_stable(game, &report.profile, tol)?.holds)
    } else {
        None
    };
    report.stability = if field_max_norm(game, &report.profile)? < 1e-9 {
        Some(classify_stability(game, &report.profile, SPECTRAL_TOL)?)
    } else {
        None
    };
    Ok(())
}

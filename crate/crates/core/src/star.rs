//! Star-graph coordination games: fixed-point structure and the limit
//! oracle.
//!
//! Throughout, strategy 0 is called `A` (Stag) and strategy 1 is `B`
//! (Hare); `x[i]` is leaf `i`'s probability of `A` and `y` the center's.
//! Mixed fixed points have center probability `w / (w + 1)` and leaf
//! probabilities summing to `w n / (w + 1)`.

use crate::error::{Error, Result};
use crate::game::{Game, NetworkCoordinationGame};

/// Default bisection tolerance for the fixed-point solve.
pub const DEFAULT_EPS: f64 = 1e-10;
const MAX_BISECTION_ITERS: usize = 200;

/// A recognized star topology with `G(w)`-type edges.
#[derive(Debug, Clone, PartialEq)]
pub struct StarShape {
    pub center: usize,
    pub leaves: Vec<usize>,
    /// Ratio of the two diagonal payoffs (`B` over `A`); the limit
    /// structure depends only on this.
    pub w: f64,
}

/// Recognizes a star of two-strategy diagonal coordination games. Returns
/// `None` when the graph is not a star or the edge games are not all the
/// same diagonal game.
pub fn detect_star(game: &NetworkCoordinationGame) -> Option<StarShape> {
    let n_vertices = game.vertex_count();
    if n_vertices < 2 || game.strategy_count(0) != 2 {
        return None;
    }
    if game.edges().len() != n_vertices - 1 {
        return None;
    }
    // Highest-degree vertex is the center; for the 2-player game either
    // endpoint works and we keep the builder's convention (last vertex).
    let center = (0..n_vertices).max_by_key(|&v| (game.degree(v), v))?;
    if game.degree(center) != n_vertices - 1 {
        return None;
    }
    let mut leaves = Vec::with_capacity(n_vertices - 1);
    for v in 0..n_vertices {
        if v == center {
            continue;
        }
        if game.degree(v) != 1 {
            return None;
        }
        leaves.push(v);
    }
    let first = &game.edges()[0].matrix;
    if game.edges().iter().any(|e| &e.matrix != first) {
        return None;
    }
    let (a, b) = (first[0][0], first[1][1]);
    if first[0][1] != 0.0 || first[1][0] != 0.0 || a <= 0.0 || b <= 0.0 {
        return None;
    }
    Some(StarShape {
        center,
        leaves,
        w: b / a,
    })
}

fn check_interior(label: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::Domain(format!(
            "{label} = {v} must lie strictly inside (0, 1)"
        )));
    }
    Ok(())
}

/// Solves for the unique mixed fixed point reachable from leaf
/// probabilities `x`: the point `x'` with the same pairwise log-odds
/// differences as `x` and `sum x'_i = w n / (w + 1)`.
///
/// Bisects `g(t) = sum_i c_i t / (1 + (c_i - 1) t) - w n / (w + 1)`, which
/// is strictly increasing on `[0, 1]` with a sign change, to interval width
/// `eps`; then maps the root through each leaf's odds ratio.
pub fn star_fixed_point_solve(x: &[f64], w: f64, eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("need at least one leaf".into()));
    }
    if !(w > 0.0) {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    for (i, &xi) in x.iter().enumerate() {
        check_interior(&format!("x[{i}]"), xi)?;
    }
    let n = x.len() as f64;
    let target = w * n / (w + 1.0);
    let odds0 = x[0] / (1.0 - x[0]);
    let c: Vec<f64> = x.iter().map(|&xi| (xi / (1.0 - xi)) / odds0).collect();

    let g = |t: f64| -> f64 {
        c.iter()
            .map(|&ci| ci * t / (1.0 + (ci - 1.0) * t))
            .sum::<f64>()
            - target
    };

    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    // g(0) = -target < 0 and g(1) = n - target > 0.
    let mut iters = 0;
    while hi - lo > eps && iters < MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    let root = 0.5 * (lo + hi);
    Ok(c
        .iter()
        .map(|&ci| ci * root / (1.0 + (ci - 1.0) * root))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StarLabel {
    /// Converges to everyone playing `A` (Stag).
    A,
    /// Converges to everyone playing `B` (Hare).
    B,
    /// On (or numerically indistinguishable from) a stable manifold of a
    /// mixed fixed point.
    Mixed,
}

impl std::fmt::Display for StarLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StarLabel::A => write!(f, "A"),
            StarLabel::B => write!(f, "B"),
            StarLabel::Mixed => write!(f, "mixed"),
        }
    }
}

/// Output of [`star_oracle`].
#[derive(Debug, Clone)]
pub struct StarOracleAnswer {
    pub label: StarLabel,
    /// The candidate mixed fixed point, when the quick quadrant tests were
    /// inconclusive and the solve ran.
    pub fixed_point: Option<Vec<f64>>,
    /// `|sum x'_i - w n / (w + 1)|` of the solved fixed point.
    pub constraint_residual: Option<f64>,
    /// The manifold test value `f(y)`; its sign decides the label.
    pub f_value: Option<f64>,
}

/// Predicts the limit of the trajectory started at leaves `x`, center `y`.
///
/// Quadrant tests first: above the fixed-point thresholds in both
/// coordinates means `A`, below both means `B`. Otherwise the candidate
/// mixed fixed point `x'` is solved and the sign of
/// `f(t) = (t(w+1)/w)^{w/(w+1)} ((1-t)(w+1))^{1/(w+1)}
///        - prod_i (x_i/x'_i)^{x'_i} ((1-x_i)/(1-x'_i))^{1-x'_i}`
/// at `t = y` places the start on one side of the stable manifold.
/// `|f(y)| < sqrt(eps)` is reported as `Mixed`: under exact arithmetic that
/// event has probability zero, but floating point needs a band.
pub fn star_oracle(x: &[f64], y: f64, w: f64, eps: f64) -> Result<StarOracleAnswer> {
    if !(w > 0.0) {
        return Err(Error::Domain(format!("w must be positive, got {w}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    for (i, &xi) in x.iter().enumerate() {
        check_interior(&format!("x[{i}]"), xi)?;
    }
    check_interior("y", y)?;

    let n = x.len() as f64;
    let threshold = w / (w + 1.0);
    let target = threshold * n;
    let sum_x: f64 = x.iter().sum();

    if sum_x > target && y > threshold {
        return Ok(StarOracleAnswer {
            label: StarLabel::A,
            fixed_point: None,
            constraint_residual: None,
            f_value: None,
        });
    }
    if sum_x < target && y < threshold {
        return Ok(StarOracleAnswer {
            label: StarLabel::B,
            fixed_point: None,
            constraint_residual: None,
            f_value: None,
        });
    }

    let fixed = star_fixed_point_solve(x, w, eps)?;
    let residual = (fixed.iter().sum::<f64>() - target).abs();

    // Both factors evaluated in log space; each equals 1 at the fixed point.
    let log_height = (w / (w + 1.0)) * (y * (w + 1.0) / w).ln()
        + (1.0 / (w + 1.0)) * ((1.0 - y) * (w + 1.0)).ln();
    let log_product: f64 = x
        .iter()
        .zip(&fixed)
        .map(|(&xi, &fi)| fi * (xi / fi).ln() + (1.0 - fi) * ((1.0 - xi) / (1.0 - fi)).ln())
        .sum();
    let f_y = log_height.exp() - log_product.exp();

    let label = if f_y.abs() < eps.sqrt() {
        StarLabel::Mixed
    } else if (sum_x > target && f_y < 0.0) || (sum_x < target && f_y > 0.0) {
        StarLabel::B
    } else if (sum_x > target && f_y > 0.0) || (sum_x < target && f_y < 0.0) {
        StarLabel::A
    } else {
        // sum_x sits exactly on the threshold hyperplane.
        StarLabel::Mixed
    };

    Ok(StarOracleAnswer {
        label,
        fixed_point: Some(fixed),
        constraint_residual: Some(residual),
        f_value: Some(f_y),
    })
}

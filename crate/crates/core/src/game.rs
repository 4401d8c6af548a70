//! Game families: linear congestion games and network coordination games.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::MixedProfile;

/// Whether players minimize (costs) or maximize (utilities).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveSense {
    Cost,
    Utility,
}

/// Per-player per-strategy expected values plus each player's average under
/// the profile that produced the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    /// `values[i][gamma]`: expected cost/utility to player `i` of playing
    /// `gamma` against the others' mixed strategies.
    pub values: Vec<Vec<f64>>,
    /// `averages[i] = sum_gamma p[i][gamma] * values[i][gamma]`.
    pub averages: Vec<f64>,
}

impl ValueTable {
    /// The best achievable entry for `player`: min for costs, max for
    /// utilities.
    pub fn best_value(&self, sense: ObjectiveSense, player: usize) -> f64 {
        let it = self.values[player].iter().copied();
        match sense {
            ObjectiveSense::Cost => it.fold(f64::INFINITY, f64::min),
            ObjectiveSense::Utility => it.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Common surface of the two game families.
///
/// Implementations are immutable after construction; all methods are pure,
/// so games can be shared freely across threads.
pub trait Game: Sync {
    fn player_count(&self) -> usize;
    fn strategy_count(&self, player: usize) -> usize;
    fn sense(&self) -> ObjectiveSense;

    /// Expected cost/utility table under `p`.
    fn expectations(&self, p: &MixedProfile) -> Result<ValueTable>;

    /// The Lyapunov potential of the replicator flow on this game:
    /// non-increasing for congestion games, non-decreasing for coordination
    /// games.
    fn potential(&self, p: &MixedProfile) -> Result<f64>;

    fn strategy_name(&self, _player: usize, strategy: usize) -> String {
        strategy.to_string()
    }

    fn shape(&self) -> Vec<usize> {
        (0..self.player_count())
            .map(|i| self.strategy_count(i))
            .collect()
    }

    fn check_profile(&self, p: &MixedProfile) -> Result<()> {
        if p.player_count() != self.player_count() {
            return Err(Error::Dimension(format!(
                "profile has {} players, game has {}",
                p.player_count(),
                self.player_count()
            )));
        }
        for i in 0..self.player_count() {
            if p.strategy_count(i) != self.strategy_count(i) {
                return Err(Error::Dimension(format!(
                    "player {i}: profile has {} strategies, game has {}",
                    p.strategy_count(i),
                    self.strategy_count(i)
                )));
            }
        }
        Ok(())
    }
}

/// Sum of the players' expected costs (social cost) or utilities (social
/// welfare) under `p`.
pub fn social_objective(game: &dyn Game, p: &MixedProfile) -> Result<f64> {
    Ok(game.expectations(p)?.averages.iter().sum())
}

/// A linear resource cost `c_e(x) = a * x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceCost {
    pub a: f64,
    pub b: f64,
}

/// Congestion game with linear costs: players pick resource subsets; each
/// resource charges `a_e * load + b_e` to every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionGame {
    resources: Vec<ResourceCost>,
    /// `strategies[i]` lists player `i`'s strategies; each strategy is a
    /// sorted list of distinct resource indices.
    strategies: Vec<Vec<Vec<usize>>>,
}

impl CongestionGame {
    pub fn new(resources: Vec<ResourceCost>, strategies: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if strategies.is_empty() {
            return Err(Error::Construction("game must have at least one player".into()));
        }
        for (e, r) in resources.iter().enumerate() {
            if !(r.a.is_finite() && r.b.is_finite()) || r.a < 0.0 || r.b < 0.0 {
                return Err(Error::Construction(format!(
                    "resource {e}: cost coefficients must be finite and nonnegative, got a = {}, b = {}",
                    r.a, r.b
                )));
            }
        }
        let mut strategies = strategies;
        for (i, strats) in strategies.iter_mut().enumerate() {
            if strats.len() < 2 {
                return Err(Error::Construction(format!(
                    "player {i} has {} strategies, need at least 2",
                    strats.len()
                )));
            }
            for s in strats.iter_mut() {
                s.sort_unstable();
                if s.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Construction(format!(
                        "player {i}: duplicate resource within one strategy"
                    )));
                }
                if let Some(&e) = s.iter().find(|&&e| e >= resources.len()) {
                    return Err(Error::Construction(format!(
                        "player {i}: strategy references resource {e}, game has {}",
                        resources.len()
                    )));
                }
            }
            for (s1, rest) in strats.iter().enumerate() {
                if strats[s1 + 1..].contains(rest) {
                    return Err(Error::Construction(format!(
                        "player {i}: duplicate strategy"
                    )));
                }
            }
        }
        Ok(Self { resources, strategies })
    }

    pub fn resources(&self) -> &[ResourceCost] {
        &self.resources
    }

    pub fn strategies(&self, player: usize) -> &[Vec<usize>] {
        &self.strategies[player]
    }

    /// Expected load each player puts on each resource under `p`.
    fn expected_loads(&self, p: &MixedProfile) -> Vec<Vec<f64>> {
        let n = self.strategies.len();
        let mut loads = vec![vec![0.0; self.resources.len()]; n];
        for i in 0..n {
            for (g, strat) in self.strategies[i].iter().enumerate() {
                let prob = p.get(i, g);
                for &e in strat {
                    loads[i][e] += prob;
                }
            }
        }
        loads
    }

    /// Maximum resource load of a pure assignment.
    pub fn makespan(&self, p: &MixedProfile) -> Result<f64> {
        self.check_profile(p)?;
        let ids = p.as_pure().ok_or_else(|| {
            Error::InvalidArgument("makespan requires a pure assignment".into())
        })?;
        let mut load = vec![0usize; self.resources.len()];
        for (i, &g) in ids.iter().enumerate() {
            for &e in &self.strategies[i][g] {
                load[e] += 1;
            }
        }
        Ok(load.into_iter().max().unwrap_or(0) as f64)
    }
}

impl Game for CongestionGame {
    fn player_count(&self) -> usize {
        self.strategies.len()
    }

    fn strategy_count(&self, player: usize) -> usize {
        self.strategies[player].len()
    }

    fn sense(&self) -> ObjectiveSense {
        ObjectiveSense::Cost
    }

    // c_{i,gamma} = sum_{e in gamma} (a_e + b_e)
    //             + sum_{j != i} sum_{gamma'} sum_{e in gamma ^ gamma'} a_e p[j][gamma']
    fn expectations(&self, p: &MixedProfile) -> Result<ValueTable> {
        self.check_profile(p)?;
        let n = self.player_count();
        let loads = self.expected_loads(p);
        let mut total = vec![0.0; self.resources.len()];
        for row in &loads {
            for (e, v) in row.iter().enumerate() {
                total[e] += v;
            }
        }
        let mut values = Vec::with_capacity(n);
        let mut averages = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<f64> = self.strategies[i]
                .iter()
                .map(|strat| {
                    strat
                        .iter()
                        .map(|&e| {
                            let others = total[e] - loads[i][e];
                            self.resources[e].a * (1.0 + others) + self.resources[e].b
                        })
                        .sum()
                })
                .collect();
            let avg = row.iter().zip(p.row(i)).map(|(c, q)| c * q).sum();
            values.push(row);
            averages.push(avg);
        }
        Ok(ValueTable { values, averages })
    }

    // Psi(p) = sum_i chat_i + sum_{i,gamma} sum_{e in gamma} (b_e + a_e) p[i][gamma]
    fn potential(&self, p: &MixedProfile) -> Result<f64> {
        let table = self.expectations(p)?;
        let mut psi: f64 = table.averages.iter().sum();
        for (i, strats) in self.strategies.iter().enumerate() {
            for (g, strat) in strats.iter().enumerate() {
                let unit: f64 = strat
                    .iter()
                    .map(|&e| self.resources[e].a + self.resources[e].b)
                    .sum();
                psi += unit * p.get(i, g);
            }
        }
        Ok(psi)
    }

    fn strategy_name(&self, player: usize, strategy: usize) -> String {
        let s = &self.strategies[player][strategy];
        if s.len() == 1 {
            format!("{}", s[0])
        } else {
            format!(
                "{{{}}}",
                s.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            )
        }
    }
}

/// One edge of a network coordination game: both endpoints receive
/// `matrix[gamma][delta]` when `i` plays `gamma` and `j` plays `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationEdge {
    pub i: usize,
    pub j: usize,
    pub matrix: Vec<Vec<f64>>,
}

/// Polymatrix coordination game on a simple undirected graph with a common
/// strategy set. Serialized through [`GameSpec`], which rebuilds the
/// adjacency lists on load.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCoordinationGame {
    vertex_count: usize,
    strategy_count: usize,
    edges: Vec<CoordinationEdge>,
    strategy_names: Option<Vec<String>>,
    adjacency: Vec<Vec<(usize, usize, bool)>>,
}

impl NetworkCoordinationGame {
    /// `edges[k].matrix` is the payoff matrix from `i`'s perspective; `j`
    /// sees its transpose (coordination payoffs are shared).
    pub fn new(
        vertex_count: usize,
        strategy_count: usize,
        edges: Vec<CoordinationEdge>,
    ) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::Construction("game must have at least one vertex".into()));
        }
        if strategy_count < 2 {
            return Err(Error::Construction(format!(
                "need at least 2 strategies, got {strategy_count}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            if e.i >= vertex_count || e.j >= vertex_count {
                return Err(Error::Construction(format!(
                    "edge ({}, {}) references a vertex outside 0..{}",
                    e.i, e.j, vertex_count
                )));
            }
            if e.i == e.j {
                return Err(Error::Construction(format!("self-loop at vertex {}", e.i)));
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            if !seen.insert(key) {
                return Err(Error::Construction(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
            if e.matrix.len() != strategy_count
                || e.matrix.iter().any(|row| row.len() != strategy_count)
            {
                return Err(Error::Construction(format!(
                    "edge ({}, {}): payoff matrix must be {strategy_count}x{strategy_count}",
                    e.i, e.j
                )));
            }
            if e.matrix
                .iter()
                .flatten()
                .any(|v| !v.is_finite())
            {
                return Err(Error::Construction(format!(
                    "edge ({}, {}): non-finite payoff",
                    e.i, e.j
                )));
            }
        }
        let mut game = Self {
            vertex_count,
            strategy_count,
            edges,
            strategy_names: None,
            adjacency: Vec::new(),
        };
        game.rebuild_adjacency();
        Ok(game)
    }

    pub fn with_strategy_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.strategy_count {
            return Err(Error::Construction(format!(
                "{} names for {} strategies",
                names.len(),
                self.strategy_count
            )));
        }
        self.strategy_names = Some(names);
        Ok(self)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adjacency = vec![Vec::new(); self.vertex_count];
        for (k, e) in self.edges.iter().enumerate() {
            adjacency[e.i].push((e.j, k, false));
            adjacency[e.j].push((e.i, k, true));
        }
        self.adjacency = adjacency;
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[CoordinationEdge] {
        &self.edges
    }

    pub fn neighbors(&self, vertex: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[vertex].iter().map(|&(j, _, _)| j)
    }

    pub fn degree(&self, vertex: usize) -> usize {
        self.adjacency[vertex].len()
    }

    /// Payoff to `vertex` on edge index `k` when `vertex` plays `gamma` and
    /// the other endpoint plays `delta`.
    fn edge_payoff(&self, k: usize, transposed: bool, gamma: usize, delta: usize) -> f64 {
        let m = &self.edges[k].matrix;
        if transposed {
            m[delta][gamma]
        } else {
            m[gamma][delta]
        }
    }

    /// Every row and column of every edge matrix has pairwise distinct
    /// entries (the genericity assumption behind the independent-set
    /// characterization of weakly stable equilibria).
    pub fn has_distinct_entries(&self) -> bool {
        let distinct = |xs: Vec<f64>| {
            for (a, x) in xs.iter().enumerate() {
                if xs[a + 1..].contains(x) {
                    return false;
                }
            }
            true
        };
        self.edges.iter().all(|e| {
            (0..self.strategy_count).all(|r| distinct(e.matrix[r].clone()))
                && (0..self.strategy_count)
                    .all(|c| distinct(e.matrix.iter().map(|row| row[c]).collect()))
        })
    }

    /// Checks that `left` and `right` cover every vertex exactly once and
    /// that every edge crosses the partition.
    pub fn check_bipartition(&self, left: &[usize], right: &[usize]) -> Result<()> {
        let mut side = vec![None::<bool>; self.vertex_count];
        for (&v, is_left) in left
            .iter()
            .map(|v| (v, true))
            .chain(right.iter().map(|v| (v, false)))
        {
            if v >= self.vertex_count {
                return Err(Error::Domain(format!("partition vertex {v} out of range")));
            }
            if side[v].is_some() {
                return Err(Error::Domain(format!("vertex {v} listed twice in partition")));
            }
            side[v] = Some(is_left);
        }
        if side.iter().any(Option::is_none) {
            return Err(Error::Domain("partition does not cover all vertices".into()));
        }
        for e in &self.edges {
            if side[e.i] == side[e.j] {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) does not cross the partition",
                    e.i, e.j
                )));
            }
        }
        Ok(())
    }
}

impl Game for NetworkCoordinationGame {
    fn player_count(&self) -> usize {
        self.vertex_count
    }

    fn strategy_count(&self, _player: usize) -> usize {
        self.strategy_count
    }

    fn sense(&self) -> ObjectiveSense {
        ObjectiveSense::Utility
    }

    // u_{i,gamma} = sum_{j in N(i)} sum_delta A_ij[gamma][delta] p[j][delta]
    fn expectations(&self, p: &MixedProfile) -> Result<ValueTable> {
        self.check_profile(p)?;
        let mut values = Vec::with_capacity(self.vertex_count);
        let mut averages = Vec::with_capacity(self.vertex_count);
        for i in 0..self.vertex_count {
            let mut row = vec![0.0; self.strategy_count];
            for &(j, k, transposed) in &self.adjacency[i] {
                for (gamma, out) in row.iter_mut().enumerate() {
                    let mut v = 0.0;
                    for delta in 0..self.strategy_count {
                        v += self.edge_payoff(k, transposed, gamma, delta) * p.get(j, delta);
                    }
                    *out += v;
                }
            }
            let avg = row.iter().zip(p.row(i)).map(|(u, q)| u * q).sum();
            values.push(row);
            averages.push(avg);
        }
        Ok(ValueTable { values, averages })
    }

    // Psi(p) = sum_i uhat_i, non-decreasing along the flow.
    fn potential(&self, p: &MixedProfile) -> Result<f64> {
        Ok(self.expectations(p)?.averages.iter().sum())
    }

    fn strategy_name(&self, _player: usize, strategy: usize) -> String {
        match &self.strategy_names {
            Some(names) => names[strategy].clone(),
            None => strategy.to_string(),
        }
    }
}

/// `n` identical balls over `m` identical bins: singleton strategies and
/// unit linear costs, so a bin's cost equals its load.
pub fn balls_bins(n: usize, m: usize) -> Result<CongestionGame> {
    if n == 0 {
        return Err(Error::Construction("need at least one ball".into()));
    }
    if m < 2 {
        return Err(Error::Construction(format!(
            "need at least 2 bins for valid strategy sets, got {m}"
        )));
    }
    let resources = vec![ResourceCost { a: 1.0, b: 0.0 }; m];
    let strategies = vec![(0..m).map(|e| vec![e]).collect::<Vec<_>>(); n];
    CongestionGame::new(resources, strategies)
}

/// Two-strategy coordination game over a star with `n` leaves; every edge
/// plays the diagonal game with payoffs 1 (both Stag) and `w` (both Hare).
///
/// Leaves occupy vertices `0..n`, the center is vertex `n`. For `w < 1` the
/// strategies are relabeled to the isomorphic `1/w` form, so the Hare payoff
/// is always the larger diagonal entry.
pub fn star_stag_hunt(n: usize, w: f64) -> Result<NetworkCoordinationGame> {
    if n == 0 {
        return Err(Error::Construction("star needs at least one leaf".into()));
    }
    if !w.is_finite() || w <= 0.0 {
        return Err(Error::Construction(format!("w must be positive, got {w}")));
    }
    // For w < 1, scale payoffs by 1/w: strategy 0 keeps its name but the
    // game becomes the relabeled reciprocal form (swap the strategies and
    // you get G(1/w) exactly).
    let matrix = if w >= 1.0 {
        vec![vec![1.0, 0.0], vec![0.0, w]]
    } else {
        vec![vec![1.0 / w, 0.0], vec![0.0, 1.0]]
    };
    let edges = (0..n)
        .map(|leaf| CoordinationEdge {
            i: leaf,
            j: n,
            matrix: matrix.clone(),
        })
        .collect();
    NetworkCoordinationGame::new(n + 1, 2, edges)?
        .with_strategy_names(vec!["Stag".into(), "Hare".into()])
}

/// The two-player coordination game `G(w)`: diagonal payoffs 1 and `w`.
pub fn g_w_game(w: f64) -> Result<NetworkCoordinationGame> {
    star_stag_hunt(1, w)
}

/// Either game family behind the shared [`Game`] surface; also the parsed
/// form of a game specification file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyGame {
    Congestion(CongestionGame),
    Coordination(NetworkCoordinationGame),
}

impl AnyGame {
    pub fn as_game(&self) -> &dyn Game {
        match self {
            AnyGame::Congestion(g) => g,
            AnyGame::Coordination(g) => g,
        }
    }

    pub fn as_congestion(&self) -> Option<&CongestionGame> {
        match self {
            AnyGame::Congestion(g) => Some(g),
            AnyGame::Coordination(_) => None,
        }
    }

    pub fn as_coordination(&self) -> Option<&NetworkCoordinationGame> {
        match self {
            AnyGame::Coordination(g) => Some(g),
            AnyGame::Congestion(_) => None,
        }
    }

    pub fn to_spec(&self) -> GameSpec {
        match self {
            AnyGame::Congestion(g) => GameSpec::Congestion {
                resources: g.resources.clone(),
                strategies: g.strategies.clone(),
            },
            AnyGame::Coordination(g) => GameSpec::Coordination {
                vertices: g.vertex_count,
                strategy_count: g.strategy_count,
                edges: g.edges.clone(),
                strategy_names: g.strategy_names.clone(),
            },
        }
    }
}

impl Game for AnyGame {
    fn player_count(&self) -> usize {
        self.as_game().player_count()
    }

    fn strategy_count(&self, player: usize) -> usize {
        self.as_game().strategy_count(player)
    }

    fn sense(&self) -> ObjectiveSense {
        self.as_game().sense()
    }

    fn expectations(&self, p: &MixedProfile) -> Result<ValueTable> {
        self.as_game().expectations(p)
    }

    fn potential(&self, p: &MixedProfile) -> Result<f64> {
        self.as_game().potential(p)
    }

    fn strategy_name(&self, player: usize, strategy: usize) -> String {
        self.as_game().strategy_name(player, strategy)
    }
}

/// On-disk game description (JSON, tagged by `kind`). Direct forms carry the
/// full game; builder forms name a constructor and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameSpec {
    Congestion {
        resources: Vec<ResourceCost>,
        strategies: Vec<Vec<Vec<usize>>>,
    },
    Coordination {
        vertices: usize,
        strategy_count: usize,
        edges: Vec<CoordinationEdge>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        strategy_names: Option<Vec<String>>,
    },
    BallsBins {
        n: usize,
        m: usize,
    },
    StarStagHunt {
        n: usize,
        w: f64,
    },
}

impl GameSpec {
    pub fn build(&self) -> Result<AnyGame> {
        match self {
            GameSpec::Congestion { resources, strategies } => Ok(AnyGame::Congestion(
                CongestionGame::new(resources.clone(), strategies.clone())?,
            )),
            GameSpec::Coordination {
                vertices,
                strategy_count,
                edges,
                strategy_names,
            } => {
                let mut g =
                    NetworkCoordinationGame::new(*vertices, *strategy_count, edges.clone())?;
                if let Some(names) = strategy_names {
                    g = g.with_strategy_names(names.clone())?;
                }
                Ok(AnyGame::Coordination(g))
            }
            GameSpec::BallsBins { n, m } => Ok(AnyGame::Congestion(balls_bins(*n, *m)?)),
            GameSpec::StarStagHunt { n, w } => {
                Ok(AnyGame::Coordination(star_stag_hunt(*n, *w)?))
            }
        }
    }
}

//! Monte Carlo tree search over alternating region and mutation choices.
//!
//! Odd tree levels pick an image region, even levels pick an (operator,
//! level) pair for that region. A path ends when a mutation breaks the
//! constraint, when a pair adds no new coverage, or at `max_depth`. A region
//! is never picked twice on one path, so every path maps onto a chromosome.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SearchError;

/// The environment a search runs against.
pub trait PairGame {
    type State: Clone;

    fn initial(&self) -> Self::State;
    fn regions(&self) -> usize;
    fn ops(&self) -> usize;
    /// Applies `op` to `region`. `None` when the result breaks the
    /// constraint; otherwise the new state and the coverage it added.
    fn play(&mut self, state: &Self::State, region: usize, op: usize)
        -> Option<(Self::State, f64)>;
    /// Checked before every rollout.
    fn exhausted(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MctsParams {
    /// Rollouts per search call.
    pub rollouts: usize,
    pub uct_c: f64,
    /// Tree depth in plies; two plies per (region, mutation) pair.
    pub max_depth: usize,
    /// Repair threshold at the first generation.
    pub c0: f64,
    /// Repair threshold at the last generation.
    pub c1: f64,
}

impl Default for MctsParams {
    fn default() -> Self {
        MctsParams {
            rollouts: 64,
            uct_c: std::f64::consts::SQRT_2,
            max_depth: 6,
            c0: 0.1,
            c1: 0.9,
        }
    }
}

impl MctsParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.rollouts == 0 {
            return Err(SearchError::InvalidParams(
                "mcts needs at least one rollout".into(),
            ));
        }
        if self.max_depth < 2 || self.max_depth % 2 != 0 {
            return Err(SearchError::InvalidParams(format!(
                "mcts max_depth must be even and at least 2, got {}",
                self.max_depth
            )));
        }
        if !(0.0..=1.0).contains(&self.c0) || !(0.0..=1.0).contains(&self.c1) || self.c0 > self.c1 {
            return Err(SearchError::InvalidParams(format!(
                "repair thresholds need 0 <= c0 <= c1 <= 1 (c0 {}, c1 {})",
                self.c0, self.c1
            )));
        }
        if !self.uct_c.is_finite() || self.uct_c < 0.0 {
            return Err(SearchError::InvalidParams(
                "uct_c must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Probability cut-off for repairing an infeasible individual; rises
/// linearly from `c0` to `c1` over the run.
pub fn repair_threshold(generation: usize, total_generations: usize, c0: f64, c1: f64) -> f64 {
    if total_generations == 0 {
        return c0;
    }
    c0 + (c1 - c0) * generation as f64 / total_generations as f64
}

/// One rollout, for the optional debug dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub rollout: usize,
    pub depth: usize,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct MctsOutcome<S> {
    /// Best feasible (region, op) path; empty if none gained anything.
    pub path: Vec<(usize, usize)>,
    pub reward: f64,
    /// State at the end of `path`; `None` when `path` is empty.
    pub state: Option<S>,
    pub rollouts: usize,
    pub root_visits: u64,
    pub trace: Vec<RolloutRecord>,
}

struct Node<S> {
    parent: Option<usize>,
    /// Region at odd depth, op at even depth.
    action: usize,
    depth: usize,
    children: Vec<usize>,
    untried: Vec<usize>,
    visits: u64,
    total_reward: f64,
    /// Set on even-depth nodes once the pair has been played.
    state: Option<S>,
    /// Reward accumulated from the root to this node.
    reward: f64,
    terminal: bool,
}

/// Runs UCT from `game.initial()`.
pub fn mcts_search<G: PairGame, R: Rng + ?Sized>(
    game: &mut G,
    params: &MctsParams,
    record_trace: bool,
    rng: &mut R,
) -> MctsOutcome<G::State> {
    let regions = game.regions();
    let ops = game.ops();
    let mut nodes: Vec<Node<G::State>> = vec![Node {
        parent: None,
        action: 0,
        depth: 0,
        children: Vec::new(),
        untried: (0..regions).collect(),
        visits: 0,
        total_reward: 0.0,
        state: Some(game.initial()),
        reward: 0.0,
        terminal: regions == 0 || ops == 0,
    }];
    let mut best: (f64, Vec<(usize, usize)>, Option<G::State>) = (0.0, Vec::new(), None);
    let mut trace = Vec::new();
    let mut done = 0;

    while done < params.rollouts && !game.exhausted() {
        // Selection.
        let mut id = 0;
        while !nodes[id].terminal && nodes[id].untried.is_empty() && !nodes[id].children.is_empty()
        {
            id = uct_child(&nodes, id, params.uct_c);
        }
        // Expansion: lowest untried action first.
        if !nodes[id].terminal && !nodes[id].untried.is_empty() {
            let action = nodes[id].untried.remove(0);
            let depth = nodes[id].depth + 1;
            let child = nodes.len();
            let mut node = Node {
                parent: Some(id),
                action,
                depth,
                children: Vec::new(),
                untried: Vec::new(),
                visits: 0,
                total_reward: 0.0,
                state: None,
                reward: nodes[id].reward,
                terminal: false,
            };
            if depth % 2 == 1 {
                node.untried = (0..ops).collect();
            } else {
                let parent_state = nodes[nodes[id].parent.expect("odd node has a parent")]
                    .state
                    .as_ref()
                    .expect("even node carries a state");
                match game.play(parent_state, nodes[id].action, action) {
                    None => node.terminal = true,
                    Some((s, gain)) => {
                        node.reward += gain;
                        node.terminal = gain <= 0.0 || depth >= params.max_depth;
                        node.state = Some(s);
                        if !node.terminal {
                            let used = path_regions(&nodes, id);
                            node.untried = (0..regions).filter(|r| !used.contains(r)).collect();
                            node.terminal = node.untried.is_empty();
                        }
                    }
                }
            }
            nodes.push(node);
            nodes[id].children.push(child);
            id = child;
            if nodes[id].state.is_some() && nodes[id].reward > best.0 {
                best = (
                    nodes[id].reward,
                    pair_path(&nodes, id),
                    nodes[id].state.clone(),
                );
            }
        }

        // Simulation: random completion from the expanded node.
        let mut path = pair_path(&nodes, id);
        let mut reward = nodes[id].reward;
        let mut depth = nodes[id].depth;
        if !nodes[id].terminal {
            let mut state = if depth % 2 == 0 {
                nodes[id].state.clone()
            } else {
                nodes[nodes[id].parent.expect("odd node has a parent")]
                    .state
                    .clone()
            };
            let mut pending_region = (depth % 2 == 1).then_some(nodes[id].action);
            while depth < params.max_depth {
                let region = match pending_region.take() {
                    Some(r) => r,
                    None => {
                        let free: Vec<usize> = (0..regions)
                            .filter(|r| !path.iter().any(|p| p.0 == *r))
                            .collect();
                        if free.is_empty() {
                            break;
                        }
                        depth += 1;
                        free[rng.gen_range(0..free.len())]
                    }
                };
                let op = rng.gen_range(0..ops);
                depth += 1;
                let Some((s, gain)) =
                    game.play(state.as_ref().expect("state before a pair"), region, op)
                else {
                    break;
                };
                path.push((region, op));
                reward += gain;
                state = Some(s);
                if reward > best.0 {
                    best = (reward, path.clone(), state.clone());
                }
                if gain <= 0.0 {
                    break;
                }
            }
        }

        // Backpropagation.
        let mut cur = Some(id);
        while let Some(n) = cur {
            nodes[n].visits += 1;
            nodes[n].total_reward += reward;
            cur = nodes[n].parent;
        }
        if record_trace {
            trace.push(RolloutRecord {
                rollout: done,
                depth,
                reward,
            });
        }
        done += 1;
    }

    MctsOutcome {
        path: best.1,
        reward: best.0,
        state: best.2,
        rollouts: done,
        root_visits: nodes[0].visits,
        trace,
    }
}

fn uct_child<S>(nodes: &[Node<S>], id: usize, c: f64) -> usize {
    let ln_n = (nodes[id].visits.max(1) as f64).ln();
    let mut best = (f64::NEG_INFINITY, nodes[id].children[0]);
    let mut children = nodes[id].children.clone();
    children.sort_by_key(|&ch| nodes[ch].action);
    for ch in children {
        let n = &nodes[ch];
        let score = if n.visits == 0 {
            f64::INFINITY
        } else {
            n.total_reward / n.visits as f64 + c * (ln_n / n.visits as f64).sqrt()
        };
        if score > best.0 {
            best = (score, ch);
        }
    }
    best.1
}

/// Completed (region, op) pairs from the root down to `id`.
fn pair_path<S>(nodes: &[Node<S>], mut id: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    if nodes[id].depth % 2 == 1 {
        id = nodes[id].parent.expect("odd node has a parent");
    }
    while nodes[id].depth > 0 {
        if nodes[id].state.is_none() {
            // A violating pair is not part of the playable path.
            id = nodes[nodes[id].parent.expect("parent")]
                .parent
                .expect("grandparent");
            continue;
        }
        let region_node = nodes[id].parent.expect("even node has a parent");
        pairs.push((nodes[region_node].action, nodes[id].action));
        id = nodes[region_node].parent.expect("odd node has a parent");
    }
    pairs.reverse();
    pairs
}

fn path_regions<S>(nodes: &[Node<S>], mut id: usize) -> Vec<usize> {
    let mut out = Vec::new();
    loop {
        if nodes[id].depth % 2 == 1 {
            out.push(nodes[id].action);
        }
        match nodes[id].parent {
            Some(p) => id = p,
            None => return out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Rewards depend only on (region, op); a `None` entry breaks the constraint.
    struct Table {
        regions: usize,
        ops: usize,
        reward: fn(usize, usize) -> Option<f64>,
        plays: usize,
    }

    impl PairGame for Table {
        type State = ();
        fn initial(&self) {}
        fn regions(&self) -> usize {
            self.regions
        }
        fn ops(&self) -> usize {
            self.ops
        }
        fn play(&mut self, _: &(), region: usize, op: usize) -> Option<((), f64)> {
            self.plays += 1;
            (self.reward)(region, op).map(|r| ((), r))
        }
    }

    #[test]
    fn threshold_schedule() {
        assert_eq!(repair_threshold(0, 40, 0.1, 0.9), 0.1);
        assert_eq!(repair_threshold(40, 40, 0.1, 0.9), 0.9);
        assert!((repair_threshold(5, 10, 0.2, 0.8) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(MctsParams::default().validate().is_ok());
        let odd = MctsParams {
            max_depth: 3,
            ..MctsParams::default()
        };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn prefers_the_rewarding_region() {
        let mut g = Table {
            regions: 2,
            ops: 3,
            reward: |r, op| Some(if r == 0 && op == 1 { 1.0 } else { 0.0 }),
            plays: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = mcts_search(
            &mut g,
            &MctsParams {
                rollouts: 200,
                ..Default::default()
            },
            true,
            &mut rng,
        );
        assert_eq!(out.path.first(), Some(&(0, 1)));
        assert_eq!(out.reward, 1.0);
        assert_eq!(out.root_visits, 200);
        assert_eq!(out.trace.len(), 200);
    }

    #[test]
    fn single_rollout_gives_one_pair() {
        let mut g = Table {
            regions: 3,
            ops: 2,
            reward: |_, _| Some(0.5),
            plays: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MctsParams {
            rollouts: 1,
            max_depth: 2,
            ..Default::default()
        };
        let out = mcts_search(&mut g, &p, false, &mut rng);
        assert_eq!(out.path.len(), 1);
    }

    #[test]
    fn infeasible_everywhere_returns_empty_path() {
        let mut g = Table {
            regions: 2,
            ops: 3,
            reward: |_, _| None,
            plays: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = mcts_search(&mut g, &MctsParams::default(), false, &mut rng);
        assert!(out.path.is_empty());
        assert_eq!(out.reward, 0.0);
        assert!(out.state.is_none());
    }

    #[test]
    fn regions_are_not_repeated() {
        let mut g = Table {
            regions: 3,
            ops: 2,
            reward: |_, _| Some(1.0),
            plays: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = mcts_search(&mut g, &MctsParams::default(), false, &mut rng);
        assert_eq!(out.path.len(), 3);
        let mut rs: Vec<usize> = out.path.iter().map(|p| p.0).collect();
        rs.sort_unstable();
        assert_eq!(rs, vec![0, 1, 2]);
    }
}

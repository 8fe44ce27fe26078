//! Primal network simplex for the dense transportation problem
//! `min Σ c_ij γ_ij` subject to row sums `a_i`, column sums `b_j`, `γ ≥ 0`.
//!
//! The spanning-tree basis is kept with parent pointers and child lists;
//! an artificial root joined to every node by a big-M arc gives the
//! starting basis. Pricing is block search, and the leaving-arc tie break
//! keeps the tree strongly feasible, which rules out cycling on degenerate
//! pivots.

use super::{MeasureError, Result};

const NONE: usize = usize::MAX;

pub(crate) struct Solution {
    /// Dense row-major plan, `rows × cols`.
    pub plan: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

struct Tree {
    parent: Vec<usize>,
    pred_arc: Vec<usize>,
    /// `true` when the tree arc to the parent is oriented node -> parent.
    up: Vec<bool>,
    flow: Vec<f64>,
    pot: Vec<f64>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
}

struct Problem<'a> {
    rows: usize,
    cols: usize,
    cost: &'a [f64],
    big_m: f64,
    root: usize,
}

impl Problem<'_> {
    #[inline]
    fn real_arcs(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    fn ends(&self, arc: usize) -> (usize, usize) {
        let nm = self.real_arcs();
        if arc < nm {
            (arc / self.cols, self.rows + arc % self.cols)
        } else {
            let v = arc - nm;
            if v < self.rows {
                (v, self.root)
            } else {
                (self.root, v)
            }
        }
    }

    #[inline]
    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.real_arcs() {
            self.cost[arc]
        } else {
            self.big_m
        }
    }
}

/// Solves the dense problem. Zero-weight rows and columns are dropped
/// before pivoting so the starting basis has no degenerate arcs.
pub(crate) fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    max_pivots: usize,
) -> Result<Solution> {
    let rows = supply.len();
    let cols = demand.len();
    assert_eq!(cost.len(), rows * cols, "cost matrix shape");
    let keep_r: Vec<usize> = (0..rows).filter(|&i| supply[i] > 0.0).collect();
    let keep_c: Vec<usize> = (0..cols).filter(|&j| demand[j] > 0.0).collect();
    if keep_r.len() == rows && keep_c.len() == cols {
        return solve_positive(supply, demand, cost, max_pivots);
    }
    let sub_supply: Vec<f64> = keep_r.iter().map(|&i| supply[i]).collect();
    let sub_demand: Vec<f64> = keep_c.iter().map(|&j| demand[j]).collect();
    let mut sub_cost = Vec::with_capacity(keep_r.len() * keep_c.len());
    for &i in &keep_r {
        for &j in &keep_c {
            sub_cost.push(cost[i * cols + j]);
        }
    }
    let sub = solve_positive(&sub_supply, &sub_demand, &sub_cost, max_pivots)?;
    let mut plan = vec![0.0; rows * cols];
    for (si, &i) in keep_r.iter().enumerate() {
        for (sj, &j) in keep_c.iter().enumerate() {
            plan[i * cols + j] = sub.plan[si * keep_c.len() + sj];
        }
    }
    Ok(Solution {
        plan,
        cost: sub.cost,
        pivots: sub.pivots,
    })
}

fn solve_positive(
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    max_pivots: usize,
) -> Result<Solution> {
    let rows = supply.len();
    let cols = demand.len();
    if rows == 0 || cols == 0 {
        return Ok(Solution {
            plan: vec![0.0; rows * cols],
            cost: 0.0,
            pivots: 0,
        });
    }
    let n_nodes = rows + cols + 1;
    let max_cost = cost.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let prob = Problem {
        rows,
        cols,
        cost,
        big_m: (max_cost + 1.0) * (rows + cols) as f64,
        root: rows + cols,
    };
    let tol = 1e-10 * (max_cost + 1.0);

    let mut tree = Tree {
        parent: vec![prob.root; n_nodes],
        pred_arc: (0..n_nodes).map(|v| prob.real_arcs() + v).collect(),
        up: (0..n_nodes).map(|v| v < rows).collect(),
        flow: supply.iter().chain(demand.iter()).copied().chain([0.0]).collect(),
        pot: (0..n_nodes)
            .map(|v| if v < rows { -prob.big_m } else { prob.big_m })
            .collect(),
        depth: vec![1; n_nodes],
        children: vec![Vec::new(); n_nodes],
    };
    tree.parent[prob.root] = NONE;
    tree.pred_arc[prob.root] = NONE;
    tree.depth[prob.root] = 0;
    tree.pot[prob.root] = 0.0;
    tree.children[prob.root] = (0..rows + cols).collect();

    let nm = prob.real_arcs();
    let block = ((nm as f64).sqrt().ceil() as usize).max(16).min(nm);
    let mut next_arc = 0usize;
    let mut pivots = 0usize;

    loop {
        // Block search pricing: most negative reduced cost inside the first
        // block that has any violation.
        let mut best = NONE;
        let mut best_rc = -tol;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        while scanned < nm {
            let arc = next_arc;
            next_arc += 1;
            if next_arc == nm {
                next_arc = 0;
            }
            let (u, w) = prob.ends(arc);
            let rc = cost[arc] + tree.pot[u] - tree.pot[w];
            if rc < best_rc {
                best_rc = rc;
                best = arc;
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        pivot(&prob, &mut tree, best)?;
        pivots += 1;
        if pivots > max_pivots {
            return Err(MeasureError::Solver(format!(
                "network simplex exceeded {max_pivots} pivots"
            )));
        }
    }

    let residual: f64 = (0..rows + cols)
        .filter(|&v| tree.pred_arc[v] >= nm)
        .map(|v| tree.flow[v].abs())
        .fold(0.0, f64::max);
    let scale = supply.iter().sum::<f64>().max(1.0);
    if residual > 1e-8 * scale {
        return Err(MeasureError::Solver(format!(
            "transportation problem infeasible (artificial flow {residual:e})"
        )));
    }

    let mut plan = vec![0.0; nm];
    for v in 0..rows + cols {
        let arc = tree.pred_arc[v];
        if arc < nm {
            plan[arc] = tree.flow[v].max(0.0);
        }
    }
    let total = plan.iter().zip(cost).map(|(g, c)| g * c).sum();
    Ok(Solution {
        plan,
        cost: total,
        pivots,
    })
}

fn pivot(prob: &Problem<'_>, tree: &mut Tree, entering: usize) -> Result<()> {
    let (u, w) = prob.ends(entering);

    let mut a = u;
    let mut b = w;
    while a != b {
        if tree.depth[a] > tree.depth[b] {
            a = tree.parent[a];
        } else if tree.depth[b] > tree.depth[a] {
            b = tree.parent[b];
        } else {
            a = tree.parent[a];
            b = tree.parent[b];
        }
    }
    let join = a;

    // Flow travels u -> w on the entering arc and returns w -> join -> u.
    // Ties prefer the w side and, on each side, the arc met last along the
    // flow direction.
    let mut delta = f64::INFINITY;
    let mut leave = NONE;
    let mut leave_on_u_side = false;
    let mut v = u;
    while v != join {
        if tree.up[v] && tree.flow[v] < delta {
            delta = tree.flow[v];
            leave = v;
            leave_on_u_side = true;
        }
        v = tree.parent[v];
    }
    v = w;
    while v != join {
        if !tree.up[v] && tree.flow[v] <= delta {
            delta = tree.flow[v];
            leave = v;
            leave_on_u_side = false;
        }
        v = tree.parent[v];
    }
    if leave == NONE {
        return Err(MeasureError::Solver("unbounded transportation problem".into()));
    }
    let delta = delta.max(0.0);

    if delta > 0.0 {
        v = u;
        while v != join {
            if tree.up[v] {
                tree.flow[v] -= delta;
            } else {
                tree.flow[v] += delta;
            }
            v = tree.parent[v];
        }
        v = w;
        while v != join {
            if tree.up[v] {
                tree.flow[v] += delta;
            } else {
                tree.flow[v] -= delta;
            }
            v = tree.parent[v];
        }
    }

    // Re-hang the subtree cut off by the leaving arc below the endpoint of
    // the entering arc that stays attached to the root.
    let (x, y) = if leave_on_u_side { (u, w) } else { (w, u) };
    let mut child = x;
    let mut new_parent = y;
    let mut new_arc = entering;
    let mut new_up = x == u;
    let mut new_flow = delta;
    loop {
        let old_parent = tree.parent[child];
        let old_arc = tree.pred_arc[child];
        let old_up = tree.up[child];
        let old_flow = tree.flow[child];

        let siblings = &mut tree.children[old_parent];
        if let Some(pos) = siblings.iter().position(|&c| c == child) {
            siblings.swap_remove(pos);
        }
        tree.parent[child] = new_parent;
        tree.pred_arc[child] = new_arc;
        tree.up[child] = new_up;
        tree.flow[child] = new_flow;
        tree.children[new_parent].push(child);

        if child == leave {
            break;
        }
        new_parent = child;
        new_arc = old_arc;
        new_up = !old_up;
        new_flow = old_flow;
        child = old_parent;
    }

    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        let p = tree.parent[v];
        let c = prob.arc_cost(tree.pred_arc[v]);
        tree.pot[v] = if tree.up[v] {
            tree.pot[p] - c
        } else {
            tree.pot[p] + c
        };
        tree.depth[v] = tree.depth[p] + 1;
        stack.extend_from_slice(&tree.children[v]);
    }
    Ok(())
}

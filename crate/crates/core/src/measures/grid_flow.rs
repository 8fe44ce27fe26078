//! Min-cost flow on a tensor grid graph with symmetric edge costs equal to
//! the node spacing, solved by ε-scaling push–relabel.
//!
//! Each phase starts from zero flow and the previous potentials made exactly
//! 1-Lipschitz by an inf-convolution with the grid distance, so every
//! residual arc has nonnegative reduced cost at the start. Excess is then
//! pushed along arcs with negative reduced cost and nodes without one are
//! relabelled. The last phase returns a flow whose cost exceeds the optimum
//! by at most `ε · ‖f − f*‖₁`; the 1-Lipschitz envelope of its potentials
//! gives a matching dual lower bound, so the gap is checked, not assumed.

use std::collections::VecDeque;

use super::{MeasureError, Result};

/// Ratio between successive ε.
const ALPHA: i64 = 8;
/// Cost resolution relative to the largest edge cost. Costs and potentials
/// are integers in this unit so reduced costs are exact.
const COST_UNIT: f64 = 1e-12;
/// Supplies are integers in units of `Σ|supply| / MASS_STEPS`, so pushes are
/// exact and every phase terminates.
const MASS_STEPS: f64 = (1u64 << 60) as f64;
/// Relative duality gap accepted at the end.
const GAP_TOL: f64 = 1e-9;

struct Grid<'a, T> {
    nx: usize,
    ny: usize,
    /// `cx[i]` joins `(i, j)` and `(i+1, j)`; `cy[j]` joins `(i, j)` and `(i, j+1)`.
    cx: &'a [T],
    cy: &'a [T],
}

/// Neighbour of a node: node index, edge index (x edges first, then y
/// edges), edge cost, and `true` when the node is the lower end of the edge.
type Link = (usize, usize, i64, bool);

impl<T: Copy + PartialOrd + std::ops::Add<Output = T>> Grid<'_, T> {
    fn x_edges(&self) -> usize {
        (self.nx - 1) * self.ny
    }

    fn edges(&self) -> usize {
        self.x_edges() + self.nx * (self.ny - 1)
    }

    /// Largest 1-Lipschitz (in grid distance) function below `pi`.
    fn lipschitz_envelope(&self, pi: &mut [T]) {
        let (nx, ny) = (self.nx, self.ny);
        let min = |a: T, b: T| if b < a { b } else { a };
        for i in 0..nx {
            let row = &mut pi[i * ny..(i + 1) * ny];
            for j in 1..ny {
                row[j] = min(row[j], row[j - 1] + self.cy[j - 1]);
            }
            for j in (0..ny - 1).rev() {
                row[j] = min(row[j], row[j + 1] + self.cy[j]);
            }
        }
        for i in 1..nx {
            for j in 0..ny {
                let b = pi[(i - 1) * ny + j] + self.cx[i - 1];
                pi[i * ny + j] = min(pi[i * ny + j], b);
            }
        }
        for i in (0..nx - 1).rev() {
            for j in 0..ny {
                let b = pi[(i + 1) * ny + j] + self.cx[i];
                pi[i * ny + j] = min(pi[i * ny + j], b);
            }
        }
    }
}

impl Grid<'_, i64> {
    #[inline]
    fn links(&self, v: usize, out: &mut [Link; 4]) -> usize {
        let (i, j) = (v / self.ny, v % self.ny);
        let mut k = 0;
        if i + 1 < self.nx {
            out[k] = (v + self.ny, v, self.cx[i], true);
            k += 1;
        }
        if i > 0 {
            out[k] = (v - self.ny, v - self.ny, self.cx[i - 1], false);
            k += 1;
        }
        let ey = |i: usize, j: usize| self.x_edges() + i * (self.ny - 1) + j;
        if j + 1 < self.ny {
            out[k] = (v + 1, ey(i, j), self.cy[j], true);
            k += 1;
        }
        if j > 0 {
            out[k] = (v - 1, ey(i, j - 1), self.cy[j - 1], false);
            k += 1;
        }
        k
    }
}

/// Flow on edge `e` leaving the node for which the edge has orientation `lower`.
#[inline]
fn outgoing(flow: &[i64], e: usize, lower: bool) -> i64 {
    if lower {
        flow[e]
    } else {
        -flow[e]
    }
}

/// Cost of the cheapest residual arc leaving along a link: cancelling flow
/// that arrives along it costs `-c`, anything else costs `c`.
#[inline]
fn arc_cost(flow: &[i64], e: usize, c: i64, lower: bool) -> i64 {
    if outgoing(flow, e, lower) < 0 {
        -c
    } else {
        c
    }
}

#[derive(Default)]
struct Work {
    dist: Vec<i64>,
    done: Vec<bool>,
    buckets: Vec<Vec<usize>>,
}

/// Lowers potentials by `ε ·` the residual distance to the nearest deficit,
/// with arc lengths `⌊c_p/ε⌋ + 1`, so every node with excess gets an
/// admissible path. The search stops once every node with excess is
/// labelled; the rest are treated as one level further, which keeps the
/// flow ε-optimal.
fn global_update(grid: &Grid<'_, i64>, pi: &mut [i64], flow: &[i64], excess: &[i64], eps: i64, work: &mut Work) {
    let n = pi.len();
    let Work { dist, done, buckets } = work;
    dist.clear();
    dist.resize(n, i64::MAX);
    done.clear();
    done.resize(n, false);
    buckets.iter_mut().for_each(Vec::clear);
    if buckets.is_empty() {
        buckets.push(Vec::new());
    }
    let mut pending = 0usize;
    for v in 0..n {
        if excess[v] < 0 {
            dist[v] = 0;
            buckets[0].push(v);
        } else if excess[v] > 0 {
            pending += 1;
        }
    }
    let cap = 4 * n as i64;
    let mut links = [(0, 0, 0, false); 4];
    let mut level = 0usize;
    while level < buckets.len() && pending > 0 {
        while let Some(w) = buckets[level].pop() {
            if dist[w] != level as i64 || done[w] {
                continue;
            }
            done[w] = true;
            if excess[w] > 0 {
                pending -= 1;
            }
            let k = grid.links(w, &mut links);
            for &(u, e, c, lower) in &links[..k] {
                // Arc u -> w runs along the same edge with the opposite orientation.
                let rc = arc_cost(flow, e, c, !lower) + pi[u] - pi[w];
                let d = level as i64 + (rc.div_euclid(eps) + 1).max(0);
                if d < dist[u] && d <= cap {
                    dist[u] = d;
                    let d = d as usize;
                    if d >= buckets.len() {
                        buckets.resize_with(d + 1, Vec::new);
                    }
                    buckets[d].push(u);
                }
            }
        }
        level += 1;
    }
    for v in 0..n {
        let d = if done[v] { dist[v] } else { level as i64 };
        pi[v] -= eps * d;
    }
}

/// Minimum of `Σ c_e |g_e|` over edge flows `g` with net outflow `supply`
/// at each node of the `xs × ys` grid (row-major in x). Supplies must sum
/// to zero. Returns the cost of the flow found, after checking it against
/// the dual bound of the final potentials.
pub(crate) fn solve(xs: &[f64], ys: &[f64], supply: &[f64]) -> Result<f64> {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(supply.len(), nx * ny, "one supply per grid node");
    let cx: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let cy: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let scale: f64 = supply.iter().map(|s| s.abs()).sum();
    if scale == 0.0 || nx * ny == 1 {
        return Ok(0.0);
    }
    let max_cost = cx.iter().chain(&cy).fold(0.0f64, |a, &c| a.max(c));
    let unit = COST_UNIT * max_cost;
    let to_int = |c: &f64| ((c / unit).round() as i64).max(1);
    let icx: Vec<i64> = cx.iter().map(to_int).collect();
    let icy: Vec<i64> = cy.iter().map(to_int).collect();
    let grid = Grid { nx, ny, cx: &icx, cy: &icy };
    let mass = scale / MASS_STEPS;
    let mut isupply: Vec<i64> = supply.iter().map(|s| (s / mass).round() as i64).collect();
    let drift: i64 = isupply.iter().sum();
    if let Some(big) = (0..isupply.len()).max_by_key(|&v| isupply[v].abs()) {
        isupply[big] -= drift;
    }

    let mut pi = vec![0i64; nx * ny];
    let mut flow = vec![0i64; grid.edges()];
    let mut excess = vec![0i64; nx * ny];
    let mut queue = VecDeque::new();
    let mut queued = vec![false; nx * ny];
    let mut work = Work::default();
    let mut links = [(0, 0, 0, false); 4];
    let mut eps = icx.iter().chain(&icy).copied().max().unwrap_or(1);
    loop {
        grid.lipschitz_envelope(&mut pi);
        // Only differences matter; recentring keeps the integers small.
        let top = pi.iter().copied().max().unwrap_or(0);
        pi.iter_mut().for_each(|p| *p -= top);
        flow.iter_mut().for_each(|g| *g = 0);
        excess.copy_from_slice(&isupply);
        queue.clear();
        for v in 0..nx * ny {
            queued[v] = excess[v] > 0;
            if queued[v] {
                queue.push_back(v);
            }
        }
        global_update(&grid, &mut pi, &flow, &excess, eps, &mut work);
        let mut relabels = 0usize;
        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let k = grid.links(v, &mut links);
            while excess[v] > 0 {
                let mut pushed = false;
                for &(w, e, c, lower) in &links[..k] {
                    let out = outgoing(&flow, e, lower);
                    let delta = if out < 0 && -c + pi[v] - pi[w] < 0 {
                        excess[v].min(-out)
                    } else if c + pi[v] - pi[w] < 0 {
                        excess[v]
                    } else {
                        continue;
                    };
                    flow[e] += if lower { delta } else { -delta };
                    excess[v] -= delta;
                    let was_active = excess[w] > 0;
                    excess[w] += delta;
                    if !was_active && excess[w] > 0 && !queued[w] {
                        queued[w] = true;
                        queue.push_back(w);
                    }
                    pushed = true;
                    if excess[v] == 0 {
                        break;
                    }
                }
                if !pushed {
                    let best = links[..k]
                        .iter()
                        .map(|&(w, e, c, lower)| pi[w] - arc_cost(&flow, e, c, lower))
                        .max()
                        .unwrap_or(pi[v]);
                    pi[v] = best - eps;
                    relabels += 1;
                    if relabels % (nx * ny) == 0 {
                        global_update(&grid, &mut pi, &flow, &excess, eps, &mut work);
                    }
                }
            }
        }
        if eps == 1 {
            break;
        }
        eps = (eps / ALPHA).max(1);
    }

    let ex = grid.x_edges();
    let upper: f64 = flow
        .iter()
        .enumerate()
        .map(|(e, g)| g.abs() as f64 * mass * if e < ex { cx[e / ny] } else { cy[(e - ex) % (ny - 1)] })
        .sum();
    let mut phi: Vec<f64> = pi.iter().map(|&p| p as f64 * unit).collect();
    Grid { nx, ny, cx: &cx, cy: &cy }.lipschitz_envelope(&mut phi);
    // The quantized supplies sum to zero exactly, so the bound does not
    // depend on the potentials' offset.
    let lower = -phi.iter().zip(&isupply).map(|(p, &s)| p * s as f64).sum::<f64>() * mass;
    if upper - lower > GAP_TOL * upper.max(max_cost * scale * 1e-6) {
        return Err(MeasureError::Solver(format!(
            "grid flow duality gap too large: primal {upper:e}, dual {lower:e}"
        )));
    }
    Ok(upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn line_transport() {
        let f = solve(&[0.0, 1.0, 3.0], &[0.0], &[0.5, 0.0, -0.5]).unwrap();
        assert_abs_diff_eq!(f, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn manhattan_corner() {
        // Unit mass from (0,0) to (1,2): cost 1 + 2.
        let f = solve(&[0.0, 1.0], &[0.0, 0.5, 2.0], &[1.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_abs_diff_eq!(f, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn round_off_supplies_that_do_not_balance() {
        // Differences of nearly equal measures: tiny entries, nonzero sum.
        let supply = [1.1e-17, -3.0e-17, 2.0e-17, 0.0];
        let f = solve(&[0.0, 1.0], &[0.0, 1.0], &supply).unwrap();
        assert!(f >= 0.0 && f < 1e-15, "{f:e}");
    }
}

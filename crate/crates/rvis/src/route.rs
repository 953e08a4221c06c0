//! Covering a sampling set with drones: a single-drone visiting order via
//! nearest-neighbor construction plus 2-opt improvement, or batches for a
//! swarm with minimum-cost bipartite matching between consecutive batches.

use std::io::{BufWriter, Write};

use crate::sampler::SamplingSet;
use crate::{Error, Result};

const MAX_TWO_OPT_PASSES: usize = 10_000;

/// Visiting order over a sampling set (indices into the set) and its total
/// length in meters (sum of consecutive leg distances).
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub order: Vec<usize>,
    pub length_m: f64,
}

/// One drone's task in one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchAssignment {
    pub drone: usize,
    /// Index into the sampling set.
    pub sample: usize,
}

/// Batched swarm plan: every sample assigned exactly once, at most
/// `n_drones` per batch, batches flown in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub n_drones: usize,
    pub batches: Vec<Vec<BatchAssignment>>,
    /// Total distance flown between consecutive assignments, summed over
    /// drones.
    pub travel_m: f64,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn route_length(positions: &[[f64; 3]], order: &[usize]) -> f64 {
    order
        .windows(2)
        .map(|w| dist(positions[w[0]], positions[w[1]]))
        .sum()
}

/// Nearest-neighbor order from `start`, then 2-opt to a local optimum.
/// The start position anchors construction but is not part of the route;
/// the returned length never exceeds the nearest-neighbor length.
pub fn order_route(set: &SamplingSet, start: (f64, f64)) -> Result<Route> {
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty sampling set".into()));
    }
    let positions: Vec<[f64; 3]> = set.samples().iter().map(|s| s.position).collect();
    let n = positions.len();

    // nearest-neighbor construction
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut current = [start.0, start.1, positions[0][2]];
    for _ in 0..n {
        let next = (0..n)
            .filter(|&i| !visited[i])
            .min_by(|&a, &b| {
                dist(current, positions[a])
                    .partial_cmp(&dist(current, positions[b]))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        visited[next] = true;
        current = positions[next];
        order.push(next);
    }

    two_opt(&positions, &mut order);
    let length_m = route_length(&positions, &order);
    Ok(Route { order, length_m })
}

/// First-improvement 2-opt on an open path, repeated to a fixpoint.
/// Reversing order[i..=j] replaces the edges entering i and leaving j.
fn two_opt(positions: &[[f64; 3]], order: &mut [usize]) {
    let n = order.len();
    if n < 3 {
        return;
    }
    for _ in 0..MAX_TWO_OPT_PASSES {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 1..n {
                if i == 0 && j == n - 1 {
                    continue; // full reversal changes nothing on an open path
                }
                let mut delta = 0.0;
                if i > 0 {
                    delta += dist(positions[order[i - 1]], positions[order[j]])
                        - dist(positions[order[i - 1]], positions[order[i]]);
                }
                if j < n - 1 {
                    delta += dist(positions[order[i]], positions[order[j + 1]])
                        - dist(positions[order[j]], positions[order[j + 1]]);
                }
                if delta < -1e-12 {
                    order[i..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Split the set into batches of `n_drones` in sampling order and assign
/// drones across consecutive batches by exact minimum-cost matching.
pub fn assign_batches(set: &SamplingSet, n_drones: usize) -> Result<BatchPlan> {
    if n_drones < 1 {
        return Err(Error::InvalidParameter("n_drones must be >= 1".into()));
    }
    if set.is_empty() {
        return Err(Error::InvalidParameter("empty sampling set".into()));
    }
    let positions: Vec<[f64; 3]> = set.samples().iter().map(|s| s.position).collect();

    let mut batches: Vec<Vec<BatchAssignment>> = Vec::new();
    // position of each drone after the previous batch, None before takeoff
    let mut drone_pos: Vec<Option<[f64; 3]>> = vec![None; n_drones];
    let mut travel = 0.0;

    for (bi, chunk) in (0..set.len()).collect::<Vec<_>>().chunks(n_drones).enumerate() {
        let assignment = if bi == 0 {
            // first batch: drone d takes the d-th sample
            chunk
                .iter()
                .enumerate()
                .map(|(d, &s)| BatchAssignment { drone: d, sample: s })
                .collect::<Vec<_>>()
        } else {
            // cost matrix: drones x batch samples
            let cost: Vec<Vec<f64>> = (0..n_drones)
                .map(|d| {
                    chunk
                        .iter()
                        .map(|&s| match drone_pos[d] {
                            Some(p) => dist(p, positions[s]),
                            None => 0.0,
                        })
                        .collect()
                })
                .collect();
            let matched = hungarian(&cost);
            let mut assignment = Vec::with_capacity(chunk.len());
            for (d, j) in matched.iter().enumerate() {
                if let Some(j) = j {
                    assignment.push(BatchAssignment {
                        drone: d,
                        sample: chunk[*j],
                    });
                }
            }
            assignment.sort_by_key(|a| a.drone);
            assignment
        };
        for a in &assignment {
            if let Some(p) = drone_pos[a.drone] {
                travel += dist(p, positions[a.sample]);
            }
            drone_pos[a.drone] = Some(positions[a.sample]);
        }
        batches.push(assignment);
    }

    Ok(BatchPlan {
        n_drones,
        batches,
        travel_m: travel,
    })
}

/// Exact minimum-cost assignment (Hungarian algorithm with potentials,
/// O(n^3)). `cost[w][j]` is the cost of worker w doing job j; returns for
/// each worker the assigned job, with `None` for workers left idle when
/// there are fewer jobs than workers.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let workers = cost.len();
    if workers == 0 {
        return Vec::new();
    }
    let jobs = cost[0].len();
    let n = workers.max(jobs);
    // pad to square with zero-cost dummy entries
    let c = |w: usize, j: usize| -> f64 {
        if w < workers && j < jobs {
            cost[w][j]
        } else {
            0.0
        }
    };

    // potentials u, v; p[j] = worker matched to job j (1-based internals)
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for w in 1..=n {
        p[0] = w;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let w0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(w0 - 1, j - 1) - u[w0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut result = vec![None; workers];
    for j in 1..=n {
        let w = p[j];
        if w >= 1 && w <= workers && j <= jobs {
            result[w - 1] = Some(j - 1);
        }
    }
    result
}

/// Route CSV: `leg,drone,order,x_m,y_m,z_m` with a trailing total-length
/// comment line. Single-drone routes use drone 0 and leg = visit position.
pub fn write_route_csv<W: Write>(writer: W, set: &SamplingSet, route: &Route) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "leg,drone,order,x_m,y_m,z_m")?;
    for (leg, &i) in route.order.iter().enumerate() {
        let s = set.get(i);
        writeln!(
            w,
            "{},0,{},{},{},{}",
            leg, i, s.position[0], s.position[1], s.position[2]
        )?;
    }
    writeln!(w, "# total_length_m={}", route.length_m)?;
    w.flush()?;
    Ok(())
}

/// Batch plan CSV: `leg,drone,order,x_m,y_m,z_m`, leg = batch index.
pub fn write_batches_csv<W: Write>(writer: W, set: &SamplingSet, plan: &BatchPlan) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "leg,drone,order,x_m,y_m,z_m")?;
    for (leg, batch) in plan.batches.iter().enumerate() {
        for a in batch {
            let s = set.get(a.sample);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                leg, a.drone, a.sample, s.position[0], s.position[1], s.position[2]
            )?;
        }
    }
    writeln!(w, "# total_travel_m={}", plan.travel_m)?;
    w.flush()?;
    Ok(())
}

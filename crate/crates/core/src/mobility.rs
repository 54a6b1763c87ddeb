//! Agent movement on the unit square and proximity-based contact sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BetisError, Result};
use crate::exec::Exec;
use crate::filter::NonUserContactModel;
use crate::rng::{Purpose, RngStreams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Location {
            x: rng.random::<f64>(),
            y: rng.random::<f64>(),
        }
    }

    #[inline]
    pub fn dist_sq(&self, other: &Location) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Uniform initial positions, one independent stream per agent.
pub fn init_locations(n: usize, streams: &RngStreams, exec: Exec) -> Result<Vec<Location>> {
    if n == 0 {
        return Err(BetisError::EmptyInput("population size"));
    }
    Ok(exec.map_range(n, |i| {
        Location::uniform(&mut streams.stream(Purpose::InitialLocation, 0, i as u32))
    }))
}

/// Each agent jumps to a fresh uniform point with probability `p_move`. The
/// draws for the move from `k` to `k + 1` use the stream `(Movement, k, i)`.
pub fn move_step(locs: &[Location], p_move: f64, k: u32, streams: &RngStreams, exec: Exec) -> Vec<Location> {
    exec.map_slice(locs, |i, &loc| {
        let mut rng = streams.stream(Purpose::Movement, k, i as u32);
        if rng.random::<f64>() < p_move {
            Location::uniform(&mut rng)
        } else {
            loc
        }
    })
}

/// Neighbourhoods of all `N` agents at one time step, stored row-compressed.
///
/// Rows are sorted ascending, so the user neighbours of agent `i` (indices
/// below `n_users`) form a prefix of its full row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactSnapshot {
    time: u32,
    n_users: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl ContactSnapshot {
    fn from_rows(time: u32, n_users: usize, rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        ContactSnapshot {
            time,
            n_users,
            offsets,
            neighbors,
        }
    }

    /// Builds a snapshot from undirected pairs. Self-loops and duplicates are
    /// dropped.
    pub fn from_pairs(n: usize, n_users: usize, time: u32, pairs: &[(u32, u32)]) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(a, b) in pairs {
            if a != b {
                rows[a as usize].push(b);
                rows[b as usize].push(a);
            }
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        Self::from_rows(time, n_users, rows)
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Number of agents.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full neighbourhood `N_i[k]`.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// User-restricted neighbourhood `N_u,i[k]`.
    pub fn user_neighbors(&self, i: usize) -> &[u32] {
        let row = self.neighbors(i);
        let cut = row.partition_point(|&j| (j as usize) < self.n_users);
        &row[..cut]
    }

    pub fn nonuser_contact_count(&self, i: usize) -> usize {
        self.neighbors(i).len() - self.user_neighbors(i).len()
    }

    /// Undirected pairs `(i, j)` with `i < j`, in row order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i as u32, j))
        })
    }
}

/// Contact sets `{ j != i : |z_i - z_j| <= d_inf }` via a uniform grid whose
/// cell width is at least `d_inf`; only the 3x3 block around an agent's cell
/// is scanned.
pub fn compute_contacts(locs: &[Location], d_inf: f64, n_users: usize, time: u32, exec: Exec) -> Result<ContactSnapshot> {
    if !(d_inf > 0.0 && d_inf.is_finite()) {
        return Err(BetisError::invalid("d_inf", format!("{d_inf} must be a positive length")));
    }
    if n_users > locs.len() {
        return Err(BetisError::invalid(
            "n_users",
            format!("{n_users} users exceed population size {}", locs.len()),
        ));
    }
    // The 1e-9 margin keeps the cell width >= d_inf under rounding.
    let cells = ((1.0 / d_inf) * (1.0 - 1e-9)).floor().clamp(1.0, 4096.0) as usize;
    let cell_of = |v: f64| ((v * cells as f64) as usize).min(cells - 1);
    let cell_index = |l: &Location| cell_of(l.y) * cells + cell_of(l.x);

    // Counting sort of agents by cell.
    let mut starts = vec![0usize; cells * cells + 1];
    for l in locs {
        starts[cell_index(l) + 1] += 1;
    }
    for c in 0..cells * cells {
        starts[c + 1] += starts[c];
    }
    let mut fill = starts.clone();
    let mut members = vec![0u32; locs.len()];
    for (i, l) in locs.iter().enumerate() {
        let c = cell_index(l);
        members[fill[c]] = i as u32;
        fill[c] += 1;
    }

    let r2 = d_inf * d_inf;
    let rows = exec.map_slice(locs, |i, li| {
        let (cx, cy) = (cell_of(li.x), cell_of(li.y));
        let mut row = Vec::new();
        for ny in cy.saturating_sub(1)..=(cy + 1).min(cells - 1) {
            for nx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                let c = ny * cells + nx;
                for &j in &members[starts[c]..starts[c + 1]] {
                    if j as usize != i && li.dist_sq(&locs[j as usize]) <= r2 {
                        row.push(j);
                    }
                }
            }
        }
        row.sort_unstable();
        row
    });
    Ok(ContactSnapshot::from_rows(time, n_users, rows))
}

/// Empirical distribution `f(m)` of the number of non-user contacts of a
/// user, pooled over all users and all snapshots.
pub fn nonuser_contact_distribution(snapshots: &[ContactSnapshot]) -> Result<NonUserContactModel> {
    if snapshots.is_empty() {
        return Err(BetisError::EmptyInput("contact snapshots"));
    }
    let mut hist: Vec<u64> = Vec::new();
    let mut total = 0u64;
    for snap in snapshots {
        if snap.n_users() == 0 {
            return Err(BetisError::EmptyInput("users in contact snapshot"));
        }
        for i in 0..snap.n_users() {
            let m = snap.nonuser_contact_count(i);
            if m >= hist.len() {
                hist.resize(m + 1, 0);
            }
            hist[m] += 1;
            total += 1;
        }
    }
    let pmf = hist.iter().map(|&h| h as f64 / total as f64).collect();
    NonUserContactModel::new(pmf)
}

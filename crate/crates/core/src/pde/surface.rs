use super::grid::Grid1D;
use crate::io::CsvTable;

/// Counters collected while marching backward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    /// Inner steps per outer time step (the largest count for the implicit
    /// solver).
    pub substeps: usize,
    pub inner_dt: f64,
    /// Time at which the start profile was imposed.
    pub start_time: f64,
    pub node_updates: u64,
    /// Share of node updates whose maximising `z` sat on the search box end.
    pub saturated_fraction: f64,
}

/// Solution of a one-dimensional backward equation on the outer time levels.
///
/// Values are NaN outside the domain slice of each level. `a_star` and
/// `z_star` are the maximisers of the last inner step into each level and
/// are NaN at nodes that were interpolated rather than computed.
#[derive(Debug, Clone)]
pub struct ValueSurface {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub a_star: Vec<f64>,
    pub z_star: Vec<f64>,
    /// Values on the exact domain edges, per level.
    pub edge_values: Vec<(f64, f64)>,
    pub stats: SolveStats,
}

impl ValueSurface {
    fn idx(&self, k: usize, i: usize) -> usize {
        k * self.grid.n_space() + i
    }

    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[self.idx(k, i)]
    }

    pub fn controls(&self, k: usize, i: usize) -> (f64, f64) {
        let j = self.idx(k, i);
        (self.a_star[j], self.z_star[j])
    }

    /// Level used for time `t`: the first stored level at or after `t`.
    pub fn layer_index(&self, t: f64) -> usize {
        let dt = self.grid.dt();
        let k = ((t / dt) - 1e-9).ceil().max(0.0) as usize;
        k.min(self.grid.n_time() - 1)
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        let n = self.grid.n_space();
        &self.values[k * n..(k + 1) * n]
    }

    /// Piecewise linear in space through the nodes and the two edge values;
    /// piecewise constant in time. `None` outside the domain.
    pub fn value_at(&self, t: f64, x: f64) -> Option<f64> {
        let k = self.layer_index(t);
        let tk = self.grid.time(k);
        let (lo, hi) = (self.grid.lower_at(tk), self.grid.upper_at(tk));
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(x >= lo - tol && x <= hi + tol) {
            return None;
        }
        let x = x.clamp(lo, hi);
        let (e_lo, e_hi) = self.edge_values[k];
        if hi - lo <= tol {
            return Some(0.5 * (e_lo + e_hi));
        }
        let n = self.grid.n_space();
        let h = self.grid.h_at(tk);
        let x0 = self.grid.node_at(tk, 0);
        let i = (((x - x0) / h).floor().max(0.0) as usize).min(n - 2);
        let point = |j: usize| {
            let xj = self.grid.node_at(tk, j);
            let v = self.value(k, j);
            (xj >= lo && xj <= hi && v.is_finite()).then_some((xj, v))
        };
        let left = point(i).filter(|p| p.0 <= x).unwrap_or((lo, e_lo));
        let right = point(i + 1).filter(|p| p.0 >= x).unwrap_or((hi, e_hi));
        if right.0 - left.0 <= 0.0 {
            return Some(left.1);
        }
        let w = (x - left.0) / (right.0 - left.0);
        Some(left.1 + w * (right.1 - left.1))
    }

    /// Maximisers at the node nearest to `x` on the level used for `t`;
    /// `None` when that node was not computed.
    pub fn controls_near(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        let k = self.layer_index(t);
        let tk = self.grid.time(k);
        let n = self.grid.n_space();
        let h = self.grid.h_at(tk);
        if h <= 0.0 {
            return None;
        }
        let i = ((x - self.grid.node_at(tk, 0)) / h).round();
        if !(0.0..n as f64).contains(&i) {
            return None;
        }
        let (a, z) = self.controls(k, i as usize);
        (a.is_finite() && z.is_finite()).then_some((a, z))
    }

    /// Rows `t, <x>, <value>, a_star, z_star` for every node inside its slice.
    pub fn to_csv(&self, x_name: &str, value_name: &str) -> CsvTable {
        let mut table = CsvTable::new(&["t", x_name, value_name, "a_star", "z_star"]);
        for k in 0..self.grid.n_time() {
            let t = self.grid.time(k);
            for i in 0..self.grid.n_space() {
                let v = self.value(k, i);
                if v.is_nan() {
                    continue;
                }
                let (a, z) = self.controls(k, i);
                table.push(vec![t.into(), self.grid.node_at(t, i).into(), v.into(), a.into(), z.into()]);
            }
        }
        table
    }
}

use super::PdeError;

/// Domain edge moving linearly in time: `position(t) = at_horizon + rate (T - t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineEdge {
    pub at_horizon: f64,
    pub rate: f64,
}

impl AffineEdge {
    pub fn fixed(x: f64) -> Self {
        Self {
            at_horizon: x,
            rate: 0.0,
        }
    }

    pub fn position(&self, t: f64, horizon: f64) -> f64 {
        self.at_horizon + self.rate * (horizon - t)
    }
}

/// Placement of the space nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeLayout {
    /// Nodes fixed in space, uniform over the union of all time slices;
    /// nodes outside the current slice are inactive.
    Fixed,
    /// Nodes uniform over the current slice, moving with its edges.
    Scaled,
}

/// Uniform space-time grid for a one-dimensional backward equation on a
/// domain `[lower(t), upper(t)]` that may move with time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    horizon: f64,
    n_time: usize,
    n_space: usize,
    lower: AffineEdge,
    upper: AffineEdge,
    layout: NodeLayout,
    x_min: f64,
    x_max: f64,
}

impl Grid1D {
    pub fn fixed(horizon: f64, n_time: usize, lo: f64, hi: f64, n_space: usize) -> Result<Self, PdeError> {
        Self::moving(horizon, n_time, n_space, AffineEdge::fixed(lo), AffineEdge::fixed(hi))
    }

    pub fn moving(
        horizon: f64,
        n_time: usize,
        n_space: usize,
        lower: AffineEdge,
        upper: AffineEdge,
    ) -> Result<Self, PdeError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PdeError::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if n_time < 2 {
            return Err(PdeError::InvalidGrid(format!("n_time = {n_time} < 2")));
        }
        if n_space < 3 {
            return Err(PdeError::InvalidGrid(format!("n_space = {n_space} < 3")));
        }
        let ends = [
            (lower.position(0.0, horizon), upper.position(0.0, horizon)),
            (lower.position(horizon, horizon), upper.position(horizon, horizon)),
        ];
        for (lo, hi) in ends {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(PdeError::InvalidGrid(format!("empty domain slice [{lo}, {hi}]")));
            }
        }
        let x_min = ends[0].0.min(ends[1].0);
        let x_max = ends[0].1.max(ends[1].1);
        if x_max <= x_min {
            return Err(PdeError::InvalidGrid("domain has zero width at every time".into()));
        }
        Ok(Self {
            horizon,
            n_time,
            n_space,
            lower,
            upper,
            layout: NodeLayout::Fixed,
            x_min,
            x_max,
        })
    }

    /// Grid whose nodes are spread uniformly over each slice. The slice may
    /// only degenerate at the horizon.
    pub fn scaled(
        horizon: f64,
        n_time: usize,
        n_space: usize,
        lower: AffineEdge,
        upper: AffineEdge,
    ) -> Result<Self, PdeError> {
        let mut grid = Self::moving(horizon, n_time, n_space, lower, upper)?;
        if !(upper.position(0.0, horizon) > lower.position(0.0, horizon)) {
            return Err(PdeError::InvalidGrid("scaled layout needs a nondegenerate slice at t = 0".into()));
        }
        grid.layout = NodeLayout::Scaled;
        Ok(grid)
    }

    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_time - 1) as f64
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_space - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.n_time {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    /// Position of node `i` in the fixed layout; for the scaled layout, its
    /// position at `t = 0`.
    pub fn node(&self, i: usize) -> f64 {
        match self.layout {
            NodeLayout::Fixed if i + 1 == self.n_space => self.x_max,
            NodeLayout::Fixed => self.x_min + i as f64 * self.h(),
            NodeLayout::Scaled => self.node_at(0.0, i),
        }
    }

    /// Position of node `i` at time `t`.
    pub fn node_at(&self, t: f64, i: usize) -> f64 {
        match self.layout {
            NodeLayout::Fixed => self.node(i),
            NodeLayout::Scaled => {
                let (lo, hi) = (self.lower_at(t), self.upper_at(t));
                if i + 1 == self.n_space {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (self.n_space - 1) as f64
                }
            }
        }
    }

    /// Node spacing at time `t`.
    pub fn h_at(&self, t: f64) -> f64 {
        match self.layout {
            NodeLayout::Fixed => self.h(),
            NodeLayout::Scaled => (self.upper_at(t) - self.lower_at(t)) / (self.n_space - 1) as f64,
        }
    }

    /// `d/dτ` of the position of node `i`, with `τ = T - t`.
    pub fn node_velocity(&self, i: usize) -> f64 {
        match self.layout {
            NodeLayout::Fixed => 0.0,
            NodeLayout::Scaled => {
                let w = i as f64 / (self.n_space - 1) as f64;
                self.lower.rate + w * (self.upper.rate - self.lower.rate)
            }
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_space).map(|i| self.node(i)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_time).map(|k| self.time(k)).collect()
    }

    pub fn lower_edge(&self) -> AffineEdge {
        self.lower
    }

    pub fn upper_edge(&self) -> AffineEdge {
        self.upper
    }

    pub fn lower_at(&self, t: f64) -> f64 {
        self.lower.position(t, self.horizon)
    }

    pub fn upper_at(&self, t: f64) -> f64 {
        self.upper.position(t, self.horizon)
    }

    /// Largest edge speed `|d position / dt|`.
    pub fn edge_speed(&self) -> f64 {
        self.lower.rate.abs().max(self.upper.rate.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_grid_geometry() {
        let g = Grid1D::fixed(1.0, 11, -1.0, 1.0, 5).unwrap();
        assert_eq!(g.dt(), 0.1);
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.time(10), 1.0);
    }

    #[test]
    fn cone_covers_widest_slice() {
        let lo = AffineEdge { at_horizon: 0.0, rate: -9.5 };
        let hi = AffineEdge { at_horizon: 0.0, rate: 10.5 };
        let g = Grid1D::moving(1.0, 3, 401, lo, hi).unwrap();
        assert_eq!(g.node(0), -9.5);
        assert_eq!(g.node(400), 10.5);
        assert!((g.h() - 0.05).abs() < 1e-15);
        assert_eq!(g.lower_at(0.5), -4.75);
    }

    #[test]
    fn scaled_nodes_follow_the_slice() {
        let lo = AffineEdge { at_horizon: 0.0, rate: -9.5 };
        let hi = AffineEdge { at_horizon: 0.0, rate: 10.5 };
        let g = Grid1D::scaled(1.0, 3, 401, lo, hi).unwrap();
        assert_eq!(g.node_at(0.5, 0), -4.75);
        assert_eq!(g.node_at(0.5, 400), 5.25);
        assert!((g.node_at(0.5, 190)).abs() < 1e-12);
        assert!((g.h_at(0.5) - 0.025).abs() < 1e-15);
        assert_eq!(g.node_velocity(0), -9.5);
        assert!((g.node_velocity(190)).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid1D::fixed(1.0, 1, 0.0, 1.0, 5).is_err());
        assert!(Grid1D::fixed(1.0, 5, 0.0, 1.0, 2).is_err());
        assert!(Grid1D::fixed(0.0, 5, 0.0, 1.0, 5).is_err());
        assert!(Grid1D::fixed(1.0, 5, 1.0, 0.0, 5).is_err());
    }
}

//! Uniform tensor grids of multilinear (Q1) elements with one-point
//! quadrature at element centers.

use nalgebra::DMatrix;

/// A uniform grid on `(0, cells·h)^N`.
///
/// Periodic grids identify opposite faces and have `cells^N` nodes;
/// bounded grids have `(cells + 1)^N` nodes.
#[derive(Debug, Clone)]
pub struct Grid {
    pub n_dim: usize,
    pub cells: usize,
    pub h: f64,
    pub periodic: bool,
    corners: Vec<usize>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(n_dim: usize, cells: usize, h: f64, periodic: bool) -> Self {
        assert!(n_dim >= 1 && cells >= 1 && h > 0.0);
        let mut grid = Self { n_dim, cells, h, periodic, corners: Vec::new(), weights: Vec::new() };
        let nc = grid.corner_count();
        let scale = 1.0 / ((nc / 2) as f64 * h);
        grid.weights =
            (0..nc).flat_map(|c| (0..n_dim).map(move |k| if c >> k & 1 == 1 { scale } else { -scale })).collect();
        let mut corners = Vec::with_capacity(grid.element_count() * nc);
        let mut multi = vec![0usize; n_dim];
        let mut node = vec![0usize; n_dim];
        for e in 0..grid.element_count() {
            grid.element_multi(e, &mut multi);
            for c in 0..nc {
                for k in 0..n_dim {
                    node[k] = multi[k] + (c >> k & 1);
                }
                corners.push(grid.node_index(&node));
            }
        }
        grid.corners = corners;
        grid
    }

    pub fn corner_count(&self) -> usize {
        1 << self.n_dim
    }

    pub fn nodes_per_side(&self) -> usize {
        if self.periodic {
            self.cells
        } else {
            self.cells + 1
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side().pow(self.n_dim as u32)
    }

    pub fn element_count(&self) -> usize {
        self.cells.pow(self.n_dim as u32)
    }

    /// Linear index of a node; coordinates wrap on periodic grids.
    pub fn node_index(&self, multi: &[usize]) -> usize {
        let side = self.nodes_per_side();
        multi.iter().rev().fold(0, |acc, &i| {
            let i = if self.periodic { i % side } else { i };
            acc * side + i
        })
    }

    pub fn node_multi(&self, mut idx: usize, out: &mut [usize]) {
        let side = self.nodes_per_side();
        for slot in out.iter_mut() {
            *slot = idx % side;
            idx /= side;
        }
    }

    pub fn element_multi(&self, mut e: usize, out: &mut [usize]) {
        for slot in out.iter_mut() {
            *slot = e % self.cells;
            e /= self.cells;
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.periodic {
            return false;
        }
        let side = self.nodes_per_side();
        let mut idx = idx;
        for _ in 0..self.n_dim {
            let i = idx % side;
            if i == 0 || i == self.cells {
                return true;
            }
            idx /= side;
        }
        false
    }

    /// Node coordinates `i·h`.
    pub fn node_coords(&self, idx: usize, out: &mut [f64]) {
        let side = self.nodes_per_side();
        let mut idx = idx;
        for slot in out.iter_mut() {
            *slot = (idx % side) as f64 * self.h;
            idx /= side;
        }
    }

    pub fn element_center(&self, e: usize, out: &mut [f64]) {
        let mut e = e;
        for slot in out.iter_mut() {
            *slot = ((e % self.cells) as f64 + 0.5) * self.h;
            e /= self.cells;
        }
    }

    pub fn element_corners(&self, e: usize) -> &[usize] {
        let nc = self.corner_count();
        &self.corners[e * nc..(e + 1) * nc]
    }

    /// `∂N_c/∂y_k` at the element center for corner `c`.
    pub fn weight(&self, corner: usize, k: usize) -> f64 {
        self.weights[corner * self.n_dim + k]
    }

    /// Center gradient of a nodal field with `comps` components per node,
    /// written as a `comps × N` matrix.
    pub fn element_gradient(&self, e: usize, values: &[f64], comps: usize, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (c, &node) in self.element_corners(e).iter().enumerate() {
            let v = &values[node * comps..(node + 1) * comps];
            for k in 0..self.n_dim {
                let w = self.weight(c, k);
                for (i, vi) in v.iter().enumerate() {
                    out[(i, k)] += w * vi;
                }
            }
        }
    }

    /// Adds `scale · dE/dφ` to `grad`, given `dE/dG` for one element.
    pub fn scatter_gradient(&self, e: usize, d_grad: &DMatrix<f64>, comps: usize, scale: f64, grad: &mut [f64]) {
        for (c, &node) in self.element_corners(e).iter().enumerate() {
            let g = &mut grad[node * comps..(node + 1) * comps];
            for k in 0..self.n_dim {
                let w = scale * self.weight(c, k);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += w * d_grad[(i, k)];
                }
            }
        }
    }

    /// Average of the corner values of one element (center value of the Q1 interpolant).
    pub fn element_mean(&self, e: usize, values: &[f64], comps: usize, out: &mut [f64]) {
        out.fill(0.0);
        let corners = self.element_corners(e);
        let w = 1.0 / corners.len() as f64;
        for &node in corners {
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * values[node * comps + i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_indices() {
        let g = Grid::new(2, 4, 0.25, false);
        assert_eq!(g.node_count(), 25);
        assert_eq!(g.element_count(), 16);
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(g.node_index(&[2, 2])));
        assert!(g.is_boundary(g.node_index(&[4, 2])));
        let p = Grid::new(2, 4, 0.25, true);
        assert_eq!(p.node_count(), 16);
        assert_eq!(p.node_index(&[4, 1]), p.node_index(&[0, 1]));
        let mut m = [0usize; 2];
        p.node_multi(p.node_index(&[3, 2]), &mut m);
        assert_eq!(m, [3, 2]);
    }

    #[test]
    fn center_gradient_is_exact_for_affine_fields() {
        for n_dim in 1..=3 {
            let g = Grid::new(n_dim, 3, 0.5, false);
            let slope = [1.5, -2.0, 0.25];
            let mut x = vec![0.0; n_dim];
            let values: Vec<f64> = (0..g.node_count())
                .map(|i| {
                    g.node_coords(i, &mut x);
                    1.0 + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let mut out = DMatrix::zeros(1, n_dim);
            for e in 0..g.element_count() {
                g.element_gradient(e, &values, 1, &mut out);
                for k in 0..n_dim {
                    assert!((out[(0, k)] - slope[k]).abs() < 1e-12);
                }
            }
        }
    }
}

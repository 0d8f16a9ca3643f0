use std::io::Write;

use crate::error::{Error, Result};

/// Regular grid of `g × g` square cells on `[0, 1]²`.
///
/// Node `(i, j)` sits at `(i/g, j/g)` and has id `i + (g+1) j`. Cell
/// `(ci, cj)` has id `ci + g cj` and corners listed counter-clockwise from
/// the lower-left node.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    cells_per_side: usize,
}

impl Mesh2D {
    pub fn new(cells_per_side: usize) -> Result<Self> {
        if cells_per_side < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 cells per side, got {cells_per_side}"
            )));
        }
        Ok(Self { cells_per_side })
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    pub fn n_nodes(&self) -> usize {
        (self.cells_per_side + 1).pow(2)
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_side.pow(2)
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        i + (self.cells_per_side + 1) * j
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let side = self.cells_per_side + 1;
        [(node % side) as f64 * self.h(), (node / side) as f64 * self.h()]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.n_nodes()).map(|k| self.node_coords(k)).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let side = self.cells_per_side + 1;
        let (i, j) = (node % side, node / side);
        i == 0 || j == 0 || i == self.cells_per_side || j == self.cells_per_side
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.n_nodes()).map(|k| self.is_boundary(k)).collect()
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let g = self.cells_per_side;
        let (ci, cj) = (cell % g, cell / g);
        [
            self.node_id(ci, cj),
            self.node_id(ci + 1, cj),
            self.node_id(ci + 1, cj + 1),
            self.node_id(ci, cj + 1),
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.h() * self.h()
    }

    pub fn cell_centers(&self) -> Vec<[f64; 2]> {
        let g = self.cells_per_side;
        let h = self.h();
        (0..self.n_cells())
            .map(|c| [((c % g) as f64 + 0.5) * h, ((c / g) as f64 + 0.5) * h])
            .collect()
    }

    /// Cell containing point `s` (points on the upper edges go to the last cell).
    pub fn locate(&self, s: [f64; 2]) -> usize {
        let g = self.cells_per_side;
        let ci = ((s[0] * g as f64).floor() as usize).min(g - 1);
        let cj = ((s[1] * g as f64).floor() as usize).min(g - 1);
        ci + g * cj
    }

    /// Permutation of cell values under the reflection `(s₁, s₂) ↦ (s₂, s₁)`.
    pub fn reflect_cells(&self, values: &[f64]) -> Vec<f64> {
        let g = self.cells_per_side;
        (0..self.n_cells())
            .map(|c| {
                let (ci, cj) = (c % g, c / g);
                values[cj + g * ci]
            })
            .collect()
    }
}

/// Writes `cell_center_x,cell_center_y,value` rows for the piecewise-constant
/// field `s ↦ Σ v_i 1_i(s)`.
pub fn mode_field_export<W: Write>(mesh: &Mesh2D, v: &[f64], mut w: W) -> Result<()> {
    if v.len() != mesh.n_cells() {
        return Err(Error::dims("mode_field_export", mesh.n_cells(), v.len()));
    }
    writeln!(w, "cell_center_x,cell_center_y,value")?;
    for (c, s) in mesh.cell_centers().iter().enumerate() {
        writeln!(w, "{},{},{}", s[0], s[1], v[c])?;
    }
    Ok(())
}

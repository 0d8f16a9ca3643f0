//! Diffusion problem `∇·(κ(x) ∇u) = 0` on `[0, 1]²` with `u = s₁ + s₂` on the
//! boundary and a log-normal, cell-wise constant coefficient `κ = exp(x_c)`.
//!
//! Discretised with bilinear (Q1) elements on a regular grid. Boundary values
//! are lifted into the right-hand side, so the interior system is SPD. The
//! Jacobian of any linear output `y = L u(x)` is computed with one adjoint
//! solve per output row.

mod mesh;
mod solver;

pub use mesh::{mode_field_export, Mesh2D};
pub use solver::{conjugate_gradient, BandCholesky, BandedSpd};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{squared_exponential_covariance, GaussianMeasure};
use crate::linalg::SpdMatrix;
use crate::model::VectorValuedModel;

/// Largest grid solved with the band Cholesky; finer grids use CG.
pub const DIRECT_SOLVER_MAX_CELLS_PER_SIDE: usize = 16;
pub const CG_TOLERANCE: f64 = 1e-12;
/// Log-coefficients are clamped to this range before exponentiation.
pub const LOG_KAPPA_CLAMP: f64 = 40.0;
pub const DEFAULT_LENGTHSCALE: f64 = 0.15;

pub const SUBDOMAIN: [f64; 2] = [0.35, 0.65];
pub const POINT_A: [f64; 2] = [0.2, 0.8];
pub const POINT_B: [f64; 2] = [0.8, 0.2];

// Q1 element matrices on a square cell, nodes counter-clockwise.
const STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];
const MASS_PATTERN: [[f64; 4]; 4] = [
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
];

/// Which post-processing of `u(x)` the model outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// All nodal values, with the discrete H¹ norm on `Ω`.
    FullField,
    /// Nodal values in `[0.35, 0.65]²`, with the H¹ norm on that subdomain.
    Subdomain,
    /// `(u(s_a), u(s_b))` with `‖v‖²_V = α v₁² + β v₂²`.
    PointPair { alpha: f64, beta: f64 },
}

type SparseRows = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone)]
pub struct DiffusionModel {
    mesh: Mesh2D,
    scenario: Scenario,
    /// node id → interior unknown index
    interior: Vec<Option<usize>>,
    n_interior: usize,
    /// output rows as sparse combinations of nodal values
    output: SparseRows,
    rv: SpdMatrix,
    rv_rows: SparseRows,
}

enum Factor {
    Direct(BandCholesky),
    Iterative(BandedSpd),
}

impl Factor {
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            Factor::Direct(f) => {
                let mut x = b.to_vec();
                f.solve_in_place(&mut x);
                Ok(x)
            }
            Factor::Iterative(a) => conjugate_gradient(a, b, CG_TOLERANCE, 20 * a.dim() + 100),
        }
    }
}

/// Interior system `A(x) u_I = b(x)`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: BandedSpd,
    pub rhs: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl DiffusionModel {
    pub fn new(cells_per_side: usize, scenario: Scenario) -> Result<Self> {
        let mesh = Mesh2D::new(cells_per_side)?;
        let g = cells_per_side;
        let mut interior = vec![None; mesh.n_nodes()];
        let mut n_interior = 0;
        for j in 1..g {
            for i in 1..g {
                interior[mesh.node_id(i, j)] = Some(n_interior);
                n_interior += 1;
            }
        }

        let (output, rv_dense) = match scenario {
            Scenario::FullField => {
                let nodes: Vec<usize> = (0..mesh.n_nodes()).collect();
                let cells: Vec<usize> = (0..mesh.n_cells()).collect();
                let rv = h1_gram(&mesh, &nodes, &cells);
                (selection_rows(&nodes), rv)
            }
            Scenario::Subdomain => {
                let inside = |s: [f64; 2]| {
                    s.iter()
                        .all(|c| (SUBDOMAIN[0] - 1e-12..=SUBDOMAIN[1] + 1e-12).contains(c))
                };
                let nodes: Vec<usize> = (0..mesh.n_nodes()).filter(|&k| inside(mesh.node_coords(k))).collect();
                let cells: Vec<usize> = (0..mesh.n_cells())
                    .filter(|&c| mesh.cell_nodes(c).iter().all(|&k| inside(mesh.node_coords(k))))
                    .collect();
                if cells.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "grid with {g} cells per side has no cell inside the subdomain"
                    )));
                }
                let rv = h1_gram(&mesh, &nodes, &cells);
                (selection_rows(&nodes), rv)
            }
            Scenario::PointPair { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(Error::InvalidArgument("point weights must be positive".into()));
                }
                let rows = vec![point_weights(&mesh, POINT_A), point_weights(&mesh, POINT_B)];
                (rows, DMatrix::from_diagonal(&DVector::from_vec(vec![alpha, beta])))
            }
        };
        let rv_rows = (0..rv_dense.nrows())
            .map(|i| {
                (0..rv_dense.ncols())
                    .filter(|&j| rv_dense[(i, j)] != 0.0)
                    .map(|j| (j, rv_dense[(i, j)]))
                    .collect()
            })
            .collect();
        let rv = SpdMatrix::new(rv_dense)?;
        rv.cholesky()?;
        Ok(Self {
            mesh,
            scenario,
            interior,
            n_interior,
            output,
            rv,
            rv_rows,
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    /// Measure `N(0, Σ)` with the squared-exponential field covariance.
    pub fn field_measure(&self, lengthscale: f64) -> Result<GaussianMeasure> {
        let cov = build_field_covariance(&self.mesh, lengthscale)?;
        GaussianMeasure::new(DVector::zeros(self.mesh.n_cells()), cov)
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.mesh.n_cells() {
            return Err(Error::dims("DiffusionModel input", self.mesh.n_cells(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("log-coefficient has non-finite entries".into()));
        }
        Ok(())
    }

    fn boundary_value(&self, node: usize) -> f64 {
        let s = self.mesh.node_coords(node);
        s[0] + s[1]
    }

    /// Stiffness matrix on interior nodes and the lifted boundary data.
    pub fn assemble_system(&self, x: &DVector<f64>) -> Result<AssembledSystem> {
        self.check_input(x)?;
        let mut clamped = 0usize;
        let kappa: Vec<f64> = x
            .iter()
            .map(|&v| {
                if v.abs() > LOG_KAPPA_CLAMP {
                    clamped += 1;
                }
                v.clamp(-LOG_KAPPA_CLAMP, LOG_KAPPA_CLAMP).exp()
            })
            .collect();
        if clamped > 0 {
            warn!("{clamped} log-coefficients clamped to ±{LOG_KAPPA_CLAMP}");
        }
        let g = self.mesh.cells_per_side();
        let mut matrix = BandedSpd::zeros(self.n_interior, g);
        let mut rhs = vec![0.0; self.n_interior];
        for (c, &k) in kappa.iter().enumerate() {
            let nodes = self.mesh.cell_nodes(c);
            for a in 0..4 {
                let Some(ia) = self.interior[nodes[a]] else { continue };
                for b in 0..4 {
                    let v = k * STIFFNESS[a][b];
                    match self.interior[nodes[b]] {
                        Some(ib) if ib <= ia => matrix.add(ia, ib, v),
                        Some(_) => {}
                        None => rhs[ia] -= v * self.boundary_value(nodes[b]),
                    }
                }
            }
        }
        Ok(AssembledSystem { matrix, rhs, kappa })
    }

    fn factor(&self, a: BandedSpd) -> Result<Factor> {
        if self.mesh.cells_per_side() <= DIRECT_SOLVER_MAX_CELLS_PER_SIDE {
            Ok(Factor::Direct(a.factor()?))
        } else {
            Ok(Factor::Iterative(a))
        }
    }

    fn full_field(&self, u_interior: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.mesh.n_nodes(), |k, _| match self.interior[k] {
            Some(i) => u_interior[i],
            None => self.boundary_value(k),
        })
    }

    fn solve_with_factor(&self, x: &DVector<f64>) -> Result<(DVector<f64>, Factor, Vec<f64>)> {
        let sys = self.assemble_system(x)?;
        let factor = self.factor(sys.matrix)?;
        let u = factor.solve(&sys.rhs)?;
        Ok((self.full_field(&u), factor, sys.kappa))
    }

    /// Nodal solution on the whole grid, boundary values included.
    pub fn solve(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.solve_with_factor(x)?.0)
    }

    fn apply_output(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.output.len(),
            self.output.iter().map(|row| row.iter().map(|&(k, w)| w * u[k]).sum()),
        )
    }

    /// `∂y/∂x` by the adjoint method: for each output row `L_j`, solve
    /// `A λ_j = L_jᵀ` on interior nodes; then `∂y_j/∂x_c = −λ_jᵀ (∂A/∂x_c) u`
    /// with the boundary lift included, and `∂A/∂x_c = κ_c K_c`.
    pub fn adjoint_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (u, factor, kappa) = self.solve_with_factor(x)?;
        let n_cells = self.mesh.n_cells();
        // w_c = κ_c K_loc u_cell, per cell corner
        let cell_nodes: Vec<[usize; 4]> = (0..n_cells).map(|c| self.mesh.cell_nodes(c)).collect();
        let w: Vec<[f64; 4]> = (0..n_cells)
            .map(|c| {
                let nodes = cell_nodes[c];
                let mut out = [0.0; 4];
                for a in 0..4 {
                    out[a] = kappa[c] * (0..4).map(|b| STIFFNESS[a][b] * u[nodes[b]]).sum::<f64>();
                }
                out
            })
            .collect();

        let mut jac = DMatrix::zeros(self.output.len(), n_cells);
        let mut rhs = vec![0.0; self.n_interior];
        for (j, row) in self.output.iter().enumerate() {
            rhs.iter_mut().for_each(|v| *v = 0.0);
            let mut any = false;
            for &(k, wt) in row {
                if let Some(i) = self.interior[k] {
                    rhs[i] += wt;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let lambda = factor.solve(&rhs)?;
            for c in 0..n_cells {
                let nodes = cell_nodes[c];
                let mut s = 0.0;
                for a in 0..4 {
                    if let Some(i) = self.interior[nodes[a]] {
                        s += lambda[i] * w[c][a];
                    }
                }
                jac[(j, c)] = -s;
            }
        }
        Ok(jac)
    }
}

impl VectorValuedModel for DiffusionModel {
    fn input_dim(&self) -> usize {
        self.mesh.n_cells()
    }

    fn output_dim(&self) -> usize {
        self.output.len()
    }

    fn output_metric(&self) -> &SpdMatrix {
        &self.rv
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.apply_output(&self.solve(x)?))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.adjoint_jacobian(x)
    }

    fn weighted_gram(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.jacobian(x)?;
        let mut rj = DMatrix::zeros(j.nrows(), j.ncols());
        for (i, row) in self.rv_rows.iter().enumerate() {
            for &(k, r) in row {
                for c in 0..j.ncols() {
                    rj[(i, c)] += r * j[(k, c)];
                }
            }
        }
        Ok(j.tr_mul(&rj))
    }

    fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.rv_rows
            .iter()
            .enumerate()
            .map(|(i, row)| v[i] * row.iter().map(|&(k, r)| r * v[k]).sum::<f64>())
            .sum()
    }
}

fn selection_rows(nodes: &[usize]) -> SparseRows {
    nodes.iter().map(|&k| vec![(k, 1.0)]).collect()
}

/// Bilinear interpolation weights of the point `s`.
fn point_weights(mesh: &Mesh2D, s: [f64; 2]) -> Vec<(usize, f64)> {
    let g = mesh.cells_per_side() as f64;
    let cell = mesh.locate(s);
    let nodes = mesh.cell_nodes(cell);
    let origin = mesh.node_coords(nodes[0]);
    let xi = (s[0] - origin[0]) * g;
    let eta = (s[1] - origin[1]) * g;
    let weights = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta];
    nodes
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w != 0.0)
        .map(|(&k, w)| (k, w))
        .collect()
}

/// Mass + stiffness Gram matrix (discrete H¹ inner product) over `cells`,
/// indexed by position in `nodes`.
fn h1_gram(mesh: &Mesh2D, nodes: &[usize], cells: &[usize]) -> DMatrix<f64> {
    let mut local = vec![None; mesh.n_nodes()];
    for (i, &k) in nodes.iter().enumerate() {
        local[k] = Some(i);
    }
    let area = mesh.cell_area();
    let mut m = DMatrix::zeros(nodes.len(), nodes.len());
    for &c in cells {
        let cn = mesh.cell_nodes(c);
        for a in 0..4 {
            for b in 0..4 {
                if let (Some(i), Some(j)) = (local[cn[a]], local[cn[b]]) {
                    m[(i, j)] += STIFFNESS[a][b] + area / 36.0 * MASS_PATTERN[a][b];
                }
            }
        }
    }
    m
}

/// `Σ_ij = exp(−‖s_i − s_j‖²/ℓ²)` over cell centres plus a nugget, starting at
/// `1e-10` and raised tenfold (up to `1e-6`) until the Cholesky succeeds.
pub fn build_field_covariance(mesh: &Mesh2D, lengthscale: f64) -> Result<SpdMatrix> {
    let centers = mesh.cell_centers();
    let mut nugget = 1e-10;
    loop {
        let cov = squared_exponential_covariance(&centers, lengthscale, nugget)?;
        match cov.cholesky() {
            Ok(_) => return Ok(cov),
            Err(e) if nugget >= 1e-6 => return Err(e),
            Err(_) => {
                warn!("field covariance not numerically SPD with nugget {nugget:e}; increasing");
                nugget *= 10.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficient_reproduces_linear_solution() {
        let model = DiffusionModel::new(6, Scenario::FullField).unwrap();
        let u = model.solve(&DVector::zeros(36)).unwrap();
        for (k, s) in model.mesh().nodes().iter().enumerate() {
            assert!((u[k] - (s[0] + s[1])).abs() < 1e-12);
        }
        let shifted = model.solve(&DVector::from_element(36, 1.7)).unwrap();
        assert!((shifted - u).amax() < 1e-12);
    }

    #[test]
    fn boundary_values_enforced() {
        let model = DiffusionModel::new(3, Scenario::Subdomain).unwrap_err();
        assert!(matches!(model, Error::InvalidArgument(_)));
        let model = DiffusionModel::new(8, Scenario::Subdomain).unwrap();
        let x = DVector::from_fn(64, |i, _| ((i * 37) % 11) as f64 * 0.2 - 1.0);
        let u = model.solve(&x).unwrap();
        for k in 0..model.mesh().n_nodes() {
            if model.mesh().is_boundary(k) {
                let s = model.mesh().node_coords(k);
                assert_eq!(u[k], s[0] + s[1]);
            }
        }
    }

    #[test]
    fn point_weights_sum_to_one() {
        let mesh = Mesh2D::new(12).unwrap();
        for s in [POINT_A, POINT_B, [0.5, 0.5]] {
            let w: f64 = point_weights(&mesh, s).iter().map(|(_, w)| w).sum();
            assert!((w - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn output_dims() {
        assert_eq!(DiffusionModel::new(8, Scenario::FullField).unwrap().output_dim(), 81);
        assert_eq!(DiffusionModel::new(8, Scenario::Subdomain).unwrap().output_dim(), 9);
        let pp = DiffusionModel::new(8, Scenario::PointPair { alpha: 10.0, beta: 1.0 }).unwrap();
        assert_eq!(pp.output_dim(), 2);
        assert_eq!(pp.output_metric().matrix()[(0, 0)], 10.0);
    }

    #[test]
    fn covariance_has_unit_diagonal() {
        let mesh = Mesh2D::new(8).unwrap();
        let cov = build_field_covariance(&mesh, DEFAULT_LENGTHSCALE).unwrap();
        let nug = cov.matrix()[(0, 0)] - 1.0;
        assert!((1e-10..=1e-6).contains(&nug));
        for i in 0..64 {
            assert_eq!(cov.matrix()[(i, i)], 1.0 + nug);
        }
    }

    #[test]
    fn cg_path_matches_direct_path() {
        let direct = DiffusionModel::new(16, Scenario::PointPair { alpha: 1.0, beta: 1.0 }).unwrap();
        let x = DVector::from_fn(256, |i, _| ((i * 13) % 7) as f64 * 0.3 - 0.9);
        let sys = direct.assemble_system(&x).unwrap();
        let mut u = sys.rhs.clone();
        sys.matrix.factor().unwrap().solve_in_place(&mut u);
        let v = conjugate_gradient(&sys.matrix, &sys.rhs, CG_TOLERANCE, 5000).unwrap();
        let diff = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
        // above the direct-solver threshold
        let iterative = DiffusionModel::new(18, Scenario::FullField).unwrap();
        let u = iterative.solve(&DVector::zeros(324)).unwrap();
        for (k, s) in iterative.mesh().nodes().iter().enumerate() {
            assert!((u[k] - (s[0] + s[1])).abs() < 1e-9);
        }
    }
}

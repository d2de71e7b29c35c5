//! Bilinear finite-element assembly for the distributed control problem on
//! the unit square.
//!
//! The domain is discretized with square Q1 elements on a uniform
//! `2^level x 2^level` grid. Unknowns live on the `(2^level - 1)^2` interior
//! nodes, ordered lexicographically with `x` running fastest, which keeps
//! the assembled matrices banded. Dirichlet data is eliminated
//! symmetrically: boundary couplings move into the right-hand sides, and the
//! retained mass and stiffness blocks stay symmetric positive definite.
//!
//! The tracked state (also used as Dirichlet data) is
//! `(2x-1)^2 (2y-1)^2` on `[0, 1/2]^2` and zero elsewhere; it is continuous
//! across the interface because both factors vanish at `1/2`.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Smallest and largest refinement levels the assembly supports.
pub const MIN_LEVEL: u32 = 2;
pub const MAX_LEVEL: u32 = 8;

/// Uniform grid on the unit square with spacing `2^-level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    level: u32,
}

impl Grid {
    pub fn new(level: u32) -> Result<Self> {
        if !(MIN_LEVEL..=MAX_LEVEL).contains(&level) {
            return Err(Error::LevelOutOfRange {
                level,
                min: MIN_LEVEL,
                max: MAX_LEVEL,
            });
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Mesh spacing `h = 2^-level`.
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    /// Elements (and node intervals) per side: `2^level`.
    pub fn cells_per_side(&self) -> usize {
        1usize << self.level
    }

    /// Nodes per side including the boundary: `2^level + 1`.
    pub fn nodes_per_side(&self) -> usize {
        self.cells_per_side() + 1
    }

    /// Interior nodes per side: `2^level - 1`.
    pub fn interior_per_side(&self) -> usize {
        self.cells_per_side() - 1
    }

    /// Number of interior nodes `m = (2^level - 1)^2`.
    pub fn interior_count(&self) -> usize {
        let s = self.interior_per_side();
        s * s
    }

    /// Full-grid index of node `(ix, iy)`, `x` fastest.
    pub fn full_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes_per_side() + ix
    }

    /// Inverse of [`full_index`](Self::full_index).
    pub fn node_of(&self, g: usize) -> (usize, usize) {
        (g % self.nodes_per_side(), g / self.nodes_per_side())
    }

    /// Interior index of node `(ix, iy)`; caller guarantees interiority.
    pub fn interior_index(&self, ix: usize, iy: usize) -> usize {
        (iy - 1) * self.interior_per_side() + (ix - 1)
    }

    pub fn is_boundary(&self, ix: usize, iy: usize) -> bool {
        ix == 0 || iy == 0 || ix == self.cells_per_side() || iy == self.cells_per_side()
    }

    pub fn coords(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.h(), iy as f64 * self.h())
    }
}

/// The tracked state / Dirichlet datum: `(2x-1)^2 (2y-1)^2` on the closed
/// quarter square `[0, 1/2]^2`, zero elsewhere.
pub fn target_state(x: f64, y: f64) -> f64 {
    if x <= 0.5 && y <= 0.5 {
        let a = 2.0 * x - 1.0;
        let b = 2.0 * y - 1.0;
        (a * a) * (b * b)
    } else {
        0.0
    }
}

/// Quadrature rule per direction for element integrals. The default 2-point
/// rule is exact for every integrand the assembly produces (at most cubic
/// per direction); the 3-point rule exists as an independent cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadratureRule {
    #[default]
    TwoPoint,
    ThreePoint,
}

impl QuadratureRule {
    /// Nodes and weights on `[0, 1]`.
    fn points(self) -> Vec<(f64, f64)> {
        match self {
            QuadratureRule::TwoPoint => {
                let off = 0.5 / 3.0f64.sqrt();
                vec![(0.5 - off, 0.5), (0.5 + off, 0.5)]
            }
            QuadratureRule::ThreePoint => {
                let off = 0.5 * 0.6f64.sqrt();
                vec![
                    (0.5 - off, 5.0 / 18.0),
                    (0.5, 8.0 / 18.0),
                    (0.5 + off, 5.0 / 18.0),
                ]
            }
        }
    }
}

/// Q1 shape functions on the reference square `[0, 1]^2`, corner order
/// `(0,0), (1,0), (1,1), (0,1)`.
fn shape(xi: f64, eta: f64) -> [f64; 4] {
    [
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ]
}

/// Reference-square gradients of the shape functions.
fn shape_grad(xi: f64, eta: f64) -> [(f64, f64); 4] {
    [
        (-(1.0 - eta), -(1.0 - xi)),
        (1.0 - eta, -xi),
        (eta, xi),
        (-eta, 1.0 - xi),
    ]
}

/// Element stiffness and mass matrices for a square element of side `h`,
/// computed with the default quadrature rule.
pub fn element_matrices(h: f64) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    element_matrices_with(h, QuadratureRule::TwoPoint)
}

/// Same as [`element_matrices`] with an explicit quadrature rule.
pub fn element_matrices_with(h: f64, rule: QuadratureRule) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let pts = rule.points();
    let mut ke = [[0.0; 4]; 4];
    let mut me = [[0.0; 4]; 4];
    for &(xi, wx) in &pts {
        for &(eta, wy) in &pts {
            let w = wx * wy;
            let phi = shape(xi, eta);
            let grad = shape_grad(xi, eta);
            for i in 0..4 {
                for j in 0..4 {
                    // Gradients scale by 1/h, the area element by h^2, so
                    // the stiffness is h-independent.
                    ke[i][j] += w * (grad[i].0 * grad[j].0 + grad[i].1 * grad[j].1);
                    me[i][j] += w * h * h * phi[i] * phi[j];
                }
            }
        }
    }
    (ke, me)
}

/// Full-grid assembly output, boundary nodes included: the inputs to the
/// Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct FullAssembly {
    pub grid: Grid,
    /// Mass matrix over all nodes.
    pub mass: SparseMatrix,
    /// Stiffness matrix over all nodes.
    pub stiffness: SparseMatrix,
    /// Load vector `integral(state * phi_i)` over all nodes.
    pub load: Vec<f64>,
    /// State values at the nodes; only boundary positions are consumed.
    pub node_state: Vec<f64>,
}

/// Assembles full-grid matrices and load for an arbitrary state function.
/// The production path uses [`target_state`]; tests substitute their own.
pub fn assemble_full_with<F>(grid: Grid, rule: QuadratureRule, state: F) -> FullAssembly
where
    F: Fn(f64, f64) -> f64,
{
    let n = grid.nodes_per_side() * grid.nodes_per_side();
    let cells = grid.cells_per_side();
    let h = grid.h();
    let (ke, me) = element_matrices_with(h, rule);
    let pts = rule.points();

    let mut k_trip = Vec::with_capacity(16 * cells * cells);
    let mut m_trip = Vec::with_capacity(16 * cells * cells);
    let mut load = vec![0.0; n];
    for ey in 0..cells {
        for ex in 0..cells {
            // Corner nodes in the reference order (0,0),(1,0),(1,1),(0,1).
            let nodes = [
                grid.full_index(ex, ey),
                grid.full_index(ex + 1, ey),
                grid.full_index(ex + 1, ey + 1),
                grid.full_index(ex, ey + 1),
            ];
            let (x0, y0) = grid.coords(ex, ey);
            for i in 0..4 {
                for j in 0..4 {
                    k_trip.push((nodes[i], nodes[j], ke[i][j]));
                    m_trip.push((nodes[i], nodes[j], me[i][j]));
                }
            }
            for &(xi, wx) in &pts {
                for &(eta, wy) in &pts {
                    let value = state(x0 + xi * h, y0 + eta * h);
                    if value == 0.0 {
                        continue;
                    }
                    let phi = shape(xi, eta);
                    for i in 0..4 {
                        load[nodes[i]] += wx * wy * h * h * value * phi[i];
                    }
                }
            }
        }
    }
    let mass = SparseMatrix::from_triplets(n, n, &m_trip).expect("mass triplets in bounds");
    let stiffness = SparseMatrix::from_triplets(n, n, &k_trip).expect("stiffness triplets in bounds");
    let node_state: Vec<f64> = (0..n)
        .map(|g| {
            let (ix, iy) = grid.node_of(g);
            let (x, y) = grid.coords(ix, iy);
            state(x, y)
        })
        .collect();
    FullAssembly {
        grid,
        mass,
        stiffness,
        load,
        node_state,
    }
}

/// Full-grid assembly with the production state function.
pub fn assemble_full(grid: Grid, rule: QuadratureRule) -> FullAssembly {
    assemble_full_with(grid, rule, target_state)
}

/// Assembles the interior mass and stiffness matrices at the given level.
pub fn assemble(level: u32) -> Result<(SparseMatrix, SparseMatrix)> {
    let grid = Grid::new(level)?;
    let full = assemble_full(grid, QuadratureRule::TwoPoint);
    Ok((
        extract_interior(&full.mass, grid),
        extract_interior(&full.stiffness, grid),
    ))
}

/// Restricts a full-grid matrix to interior rows and columns.
fn extract_interior(a: &SparseMatrix, grid: Grid) -> SparseMatrix {
    let nps = grid.nodes_per_side();
    let m = grid.interior_count();
    let mut triplets = Vec::with_capacity(a.nnz());
    for iy in 1..nps - 1 {
        for ix in 1..nps - 1 {
            let gi = grid.full_index(ix, iy);
            let ii = grid.interior_index(ix, iy);
            let (cols, vals) = a.row(gi);
            for (&gj, &v) in cols.iter().zip(vals) {
                let (jx, jy) = grid.node_of(gj);
                if !grid.is_boundary(jx, jy) {
                    triplets.push((ii, grid.interior_index(jx, jy), v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(m, m, &triplets).expect("interior triplets in bounds")
}

/// How the Dirichlet data enters the desired-state right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhsConvention {
    /// `b_i = integral(state * phi_i) - sum_boundary M_ij * state_j`:
    /// the boundary mass coupling is moved to the right-hand side, matching
    /// the symmetric elimination used for the constraint block.
    #[default]
    BoundaryMassCorrected,
    /// `b_i = integral(state * phi_i)` only.
    ProjectionOnly,
}

/// Eliminates the Dirichlet data into the two right-hand sides:
/// the desired-state vector `b` and the constraint vector
/// `d_i = -sum_boundary K_ij * state_j`.
pub fn assemble_rhs(full: &FullAssembly, convention: RhsConvention) -> (Vec<f64>, Vec<f64>) {
    let grid = full.grid;
    let nps = grid.nodes_per_side();
    let m = grid.interior_count();
    let mut b = vec![0.0; m];
    let mut d = vec![0.0; m];
    for iy in 1..nps - 1 {
        for ix in 1..nps - 1 {
            let gi = grid.full_index(ix, iy);
            let ii = grid.interior_index(ix, iy);
            b[ii] = full.load[gi];
            if convention == RhsConvention::BoundaryMassCorrected {
                let (cols, vals) = full.mass.row(gi);
                for (&gj, &v) in cols.iter().zip(vals) {
                    let (jx, jy) = grid.node_of(gj);
                    if grid.is_boundary(jx, jy) {
                        b[ii] -= v * full.node_state[gj];
                    }
                }
            }
            let (cols, vals) = full.stiffness.row(gi);
            for (&gj, &v) in cols.iter().zip(vals) {
                let (jx, jy) = grid.node_of(gj);
                if grid.is_boundary(jx, jy) {
                    d[ii] -= v * full.node_state[gj];
                }
            }
        }
    }
    (b, d)
}

/// A fully assembled discrete problem: regularization weight, interior
/// operators and right-hand sides.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    beta: f64,
    grid: Grid,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    b: Vec<f64>,
    d: Vec<f64>,
}

impl DiscreteProblem {
    /// Assembles the problem at `level` with regularization `beta`, using
    /// the default quadrature rule and right-hand-side convention.
    pub fn assemble(level: u32, beta: f64) -> Result<Self> {
        Self::assemble_with(
            level,
            beta,
            QuadratureRule::TwoPoint,
            RhsConvention::BoundaryMassCorrected,
        )
    }

    /// Assembly with explicit quadrature and right-hand-side choices.
    pub fn assemble_with(
        level: u32,
        beta: f64,
        rule: QuadratureRule,
        convention: RhsConvention,
    ) -> Result<Self> {
        let grid = Grid::new(level)?;
        let full = assemble_full(grid, rule);
        let mass = extract_interior(&full.mass, grid);
        let stiffness = extract_interior(&full.stiffness, grid);
        let (b, d) = assemble_rhs(&full, convention);
        Self::from_parts(beta, grid, mass, stiffness, b, d)
    }

    /// Builds a problem from already-assembled pieces. Used by tests that
    /// perturb an operator while keeping everything else intact.
    pub fn from_parts(
        beta: f64,
        grid: Grid,
        mass: SparseMatrix,
        stiffness: SparseMatrix,
        b: Vec<f64>,
        d: Vec<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Config(format!(
                "regularization weight must be positive, got {beta}"
            )));
        }
        let m = grid.interior_count();
        let square = |a: &SparseMatrix| a.nrows() == m && a.ncols() == m;
        if !square(&mass) || !square(&stiffness) || b.len() != m || d.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "problem pieces do not match {m} interior nodes"
            )));
        }
        Ok(Self {
            beta,
            grid,
            mass,
            stiffness,
            b,
            d,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Same problem with a different regularization weight; the assembled
    /// operators and right-hand sides do not depend on it.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut p = self.clone();
        if !(beta > 0.0) {
            return Err(Error::Config(format!(
                "regularization weight must be positive, got {beta}"
            )));
        }
        p.beta = beta;
        Ok(p)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// Desired-state right-hand side.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Constraint right-hand side.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Interior dimension `m`.
    pub fn state_dim(&self) -> usize {
        self.grid.interior_count()
    }

    /// Total saddle-point dimension `3m`.
    pub fn total_dim(&self) -> usize {
        3 * self.state_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::jacobi_eigen;
    use std::f64::consts::PI;

    #[test]
    fn target_state_point_values() {
        assert_eq!(target_state(0.0, 0.0), 1.0);
        assert_eq!(target_state(0.25, 0.25), 0.0625);
        assert_eq!(target_state(0.75, 0.3), 0.0);
        assert_eq!(target_state(0.5, 0.25), 0.0);
        assert_eq!(target_state(0.5, 0.5), 0.0);
    }

    #[test]
    fn element_stiffness_rows_sum_to_zero() {
        let (ke, _) = element_matrices(0.25);
        for row in &ke {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn element_mass_entries_sum_to_element_area() {
        for h in [0.5, 0.25, 0.125] {
            let (_, me) = element_matrices(h);
            let total: f64 = me.iter().flatten().sum();
            assert!((total - h * h).abs() < 1e-15 * h * h);
        }
    }

    /// Independent quadrature oracle: literal monomial shape functions
    /// integrated with a 3x3 Gauss rule written out in place.
    #[test]
    fn element_matrices_match_independent_quadrature() {
        let h = 0.125;
        // 3-point Gauss on [0,1].
        let q = {
            let c = 0.5 * (3.0f64 / 5.0).sqrt();
            [(0.5 - c, 5.0 / 18.0), (0.5, 4.0 / 9.0), (0.5 + c, 5.0 / 18.0)]
        };
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        // phi_i(x, y) for corner (cx, cy) written as a product of 1D hats.
        let hat = |c: f64, t: f64| if c == 0.0 { 1.0 - t } else { t };
        let dhat = |c: f64| if c == 0.0 { -1.0 } else { 1.0 };
        let mut ke_ref = [[0.0; 4]; 4];
        let mut me_ref = [[0.0; 4]; 4];
        for &(x, wx) in &q {
            for &(y, wy) in &q {
                for i in 0..4 {
                    for j in 0..4 {
                        let (cxi, cyi) = corners[i];
                        let (cxj, cyj) = corners[j];
                        let phi_i = hat(cxi, x) * hat(cyi, y);
                        let phi_j = hat(cxj, x) * hat(cyj, y);
                        let gi = (dhat(cxi) * hat(cyi, y), hat(cxi, x) * dhat(cyi));
                        let gj = (dhat(cxj) * hat(cyj, y), hat(cxj, x) * dhat(cyj));
                        ke_ref[i][j] += wx * wy * (gi.0 * gj.0 + gi.1 * gj.1);
                        me_ref[i][j] += wx * wy * h * h * phi_i * phi_j;
                    }
                }
            }
        }
        let (ke, me) = element_matrices(h);
        for i in 0..4 {
            for j in 0..4 {
                assert!((ke[i][j] - ke_ref[i][j]).abs() < 1e-14);
                assert!((me[i][j] - me_ref[i][j]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn assembled_sizes_and_sparsity() {
        let (m, k) = assemble(2).unwrap();
        assert_eq!(m.nrows(), 9);
        assert_eq!(k.nrows(), 9);
        // The center node of the 3x3 interior block sees all nine stencil
        // positions; corner interior nodes only four.
        assert_eq!(m.row(4).0.len(), 9);
        assert_eq!(m.row(0).0.len(), 4);
        assert_eq!(m.bandwidth(), 4);
    }

    #[test]
    fn assembled_matrices_are_bitwise_symmetric() {
        for level in [2, 3, 4] {
            let (m, k) = assemble(level).unwrap();
            assert_eq!(m, m.transpose());
            assert_eq!(k, k.transpose());
        }
    }

    #[test]
    fn stiffness_rows_with_full_interior_stencil_sum_to_zero() {
        let grid = Grid::new(3).unwrap();
        let (_, k) = assemble(3).unwrap();
        let ones = vec![1.0; grid.interior_count()];
        let y = k.mul_vec(&ones);
        let s = grid.interior_per_side();
        for iy in 2..s {
            for ix in 2..s {
                let idx = grid.interior_index(ix, iy);
                assert!(
                    y[idx].abs() < 1e-14,
                    "row sum at fully-interior node ({ix}, {iy}) is {}",
                    y[idx]
                );
            }
        }
    }

    #[test]
    fn mass_rows_with_full_interior_stencil_sum_to_cell_area() {
        let grid = Grid::new(3).unwrap();
        let (m, _) = assemble(3).unwrap();
        let h2 = grid.h() * grid.h();
        let ones = vec![1.0; grid.interior_count()];
        let y = m.mul_vec(&ones);
        let s = grid.interior_per_side();
        for iy in 2..s {
            for ix in 2..s {
                let idx = grid.interior_index(ix, iy);
                assert!((y[idx] - h2).abs() < 1e-15);
            }
        }
    }

    /// Closed-form eigenvalues from the tensor structure of the uniform
    /// grid: the 1D operators share sine eigenvectors, so 2D eigenvalues
    /// combine the 1D ones directly. This pins the assembly and the dense
    /// eigensolver against each other.
    fn closed_form_eigenvalues(level: u32) -> (Vec<f64>, Vec<f64>) {
        let s = (1usize << level) - 1;
        let h = 0.5f64.powi(level as i32);
        let kappa: Vec<f64> = (1..=s)
            .map(|k| (2.0 - 2.0 * (k as f64 * PI * h).cos()) / h)
            .collect();
        let mu: Vec<f64> = (1..=s)
            .map(|k| h * (4.0 + 2.0 * (k as f64 * PI * h).cos()) / 6.0)
            .collect();
        let mut mass = Vec::new();
        let mut stiff = Vec::new();
        for i in 0..s {
            for j in 0..s {
                mass.push(mu[i] * mu[j]);
                stiff.push(kappa[i] * mu[j] + mu[i] * kappa[j]);
            }
        }
        mass.sort_by(|a, b| a.partial_cmp(b).unwrap());
        stiff.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (mass, stiff)
    }

    #[test]
    fn assembled_spectra_match_closed_form() {
        for level in [2u32, 3] {
            let (m, k) = assemble(level).unwrap();
            let (mass_ref, stiff_ref) = closed_form_eigenvalues(level);
            let (mass_eig, _) = jacobi_eigen(&m.to_dense()).unwrap();
            let (stiff_eig, _) = jacobi_eigen(&k.to_dense()).unwrap();
            for (got, want) in mass_eig.iter().zip(&mass_ref) {
                assert!((got - want).abs() < 1e-12 * want.max(1e-3));
            }
            for (got, want) in stiff_eig.iter().zip(&stiff_ref) {
                assert!((got - want).abs() < 1e-11 * want.max(1e-3));
            }
        }
    }

    /// The mass spectrum sits strictly inside `[h^2/9, h^2]`. The stiffness
    /// spectrum respects the upper bound 4; its lower edge is
    /// `2*pi^2*h^2 * (1 + O(h^2))` and at finite `h` falls slightly *below*
    /// `2*pi^2*h^2`, so the asymptotic constant is checked as such.
    #[test]
    fn eigenvalue_interval_claims() {
        for level in [3u32, 4] {
            let h = 0.5f64.powi(level as i32);
            let (mass_ref, stiff_ref) = closed_form_eigenvalues(level);
            assert!(mass_ref[0] > h * h / 9.0);
            assert!(*mass_ref.last().unwrap() < h * h);
            assert!(*stiff_ref.last().unwrap() < 4.0);
            let asymptotic = 2.0 * PI * PI * h * h;
            let exact_min = stiff_ref[0];
            // Exact smallest eigenvalue from the 1D factors.
            let c = (PI * h).cos();
            let expect = (2.0 - 2.0 * c) * (4.0 + 2.0 * c) / 3.0;
            assert!((exact_min - expect).abs() < 1e-14);
            assert!(exact_min < asymptotic);
            assert!((asymptotic - exact_min) / asymptotic < (PI * h).powi(2) / 2.0);
        }
    }

    #[test]
    fn quadrature_rules_agree_on_every_assembled_object() {
        let grid = Grid::new(3).unwrap();
        let two = assemble_full(grid, QuadratureRule::TwoPoint);
        let three = assemble_full(grid, QuadratureRule::ThreePoint);
        let scale_m = 1e-14 * grid.h() * grid.h();
        for i in 0..two.mass.nrows() {
            let (cols, vals) = two.mass.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!((v - three.mass.get(i, j)).abs() < scale_m);
            }
            let (cols, vals) = two.stiffness.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!((v - three.stiffness.get(i, j)).abs() < 1e-14);
            }
            assert!((two.load[i] - three.load[i]).abs() < scale_m);
        }
        let (b2, d2) = assemble_rhs(&two, RhsConvention::BoundaryMassCorrected);
        let (b3, d3) = assemble_rhs(&three, RhsConvention::BoundaryMassCorrected);
        for i in 0..b2.len() {
            assert!((b2[i] - b3[i]).abs() < scale_m);
            assert!((d2[i] - d3[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_gives_zero_right_hand_sides() {
        let grid = Grid::new(3).unwrap();
        let full = assemble_full_with(grid, QuadratureRule::TwoPoint, |_, _| 0.0);
        let (b, d) = assemble_rhs(&full, RhsConvention::BoundaryMassCorrected);
        assert!(b.iter().all(|&v| v == 0.0));
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn total_load_equals_analytic_integral() {
        // integral of the state over the square is (1/6)^2.
        for level in [2u32, 3, 4] {
            let grid = Grid::new(level).unwrap();
            let full = assemble_full(grid, QuadratureRule::TwoPoint);
            let total: f64 = full.load.iter().sum();
            assert!(
                (total - 1.0 / 36.0).abs() < 1e-12,
                "level {level}: total load {total}"
            );
        }
    }

    /// At level 2 the constraint right-hand side is nonzero exactly at the
    /// interior nodes whose stencil touches a boundary node with nonzero
    /// state (the corner region of the quarter square).
    #[test]
    fn constraint_rhs_sparsity_matches_boundary_adjacency() {
        let grid = Grid::new(2).unwrap();
        let full = assemble_full(grid, QuadratureRule::TwoPoint);
        let (_, d) = assemble_rhs(&full, RhsConvention::BoundaryMassCorrected);
        let s = grid.interior_per_side();
        for iy in 1..=s {
            for ix in 1..=s {
                // Does any 9-point neighbor sit on the boundary with
                // nonzero state?
                let mut touches = false;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let jx = (ix as i64 + dx) as usize;
                        let jy = (iy as i64 + dy) as usize;
                        if grid.is_boundary(jx, jy) {
                            let (x, y) = grid.coords(jx, jy);
                            if target_state(x, y) != 0.0 {
                                touches = true;
                            }
                        }
                    }
                }
                let v = d[grid.interior_index(ix, iy)];
                assert_eq!(
                    touches,
                    v != 0.0,
                    "node ({ix}, {iy}): adjacency {touches} but d = {v}"
                );
            }
        }
    }

    #[test]
    fn rhs_conventions_differ_by_the_boundary_mass_coupling() {
        let grid = Grid::new(2).unwrap();
        let full = assemble_full(grid, QuadratureRule::TwoPoint);
        let (b_corr, _) = assemble_rhs(&full, RhsConvention::BoundaryMassCorrected);
        let (b_proj, _) = assemble_rhs(&full, RhsConvention::ProjectionOnly);
        let mut any_difference = false;
        for iy in 1..=grid.interior_per_side() {
            for ix in 1..=grid.interior_per_side() {
                let ii = grid.interior_index(ix, iy);
                let gi = grid.full_index(ix, iy);
                let mut coupling = 0.0;
                let (cols, vals) = full.mass.row(gi);
                for (&gj, &v) in cols.iter().zip(vals) {
                    let (jx, jy) = grid.node_of(gj);
                    if grid.is_boundary(jx, jy) {
                        coupling += v * full.node_state[gj];
                    }
                }
                assert!((b_proj[ii] - b_corr[ii] - coupling).abs() < 1e-16);
                if coupling != 0.0 {
                    any_difference = true;
                }
            }
        }
        assert!(any_difference, "the two conventions must not coincide");
    }

    #[test]
    fn stencil_scaling_across_levels() {
        let (m3, k3) = assemble(3).unwrap();
        let (m4, k4) = assemble(4).unwrap();
        let center3 = Grid::new(3).unwrap().interior_index(4, 4);
        let center4 = Grid::new(4).unwrap().interior_index(8, 8);
        // Mass scales with the cell area, stiffness is level-independent.
        let ratio = m3.get(center3, center3) / m4.get(center4, center4);
        assert!((ratio - 4.0).abs() < 1e-12);
        assert!((k3.get(center3, center3) - k4.get(center4, center4)).abs() < 1e-14);
        assert!((k3.get(center3, center3) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn level_bounds_are_enforced() {
        assert!(Grid::new(1).is_err());
        assert!(Grid::new(9).is_err());
        assert!(assemble(1).is_err());
        assert!(DiscreteProblem::assemble(4, 0.0).is_err());
        assert!(DiscreteProblem::assemble(4, -1e-6).is_err());
    }

    #[test]
    fn problem_carries_consistent_dimensions() {
        let p = DiscreteProblem::assemble(3, 1e-2).unwrap();
        assert_eq!(p.state_dim(), 49);
        assert_eq!(p.total_dim(), 147);
        assert_eq!(p.mass().nrows(), 49);
        assert_eq!(p.b().len(), 49);
        let q = p.with_beta(1e-4).unwrap();
        assert_eq!(q.beta(), 1e-4);
        assert_eq!(q.b(), p.b());
    }
}
